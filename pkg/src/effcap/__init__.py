"""Effective capacity of contention-based links under statistical QoS.

Library layout:

- ``effcap.mac``       contention fixed point and backoff-delay transforms
- ``effcap.solver``    effective-capacity solvers (closed form and spectral)
- ``effcap.sim``       slotted discrete-event simulator and estimators
- ``effcap.optimize``  power/bandwidth allocation, energy efficiency, admission
- ``effcap.scenario``  JSON scenario loading and validation
- ``effcap.cli``       command-line front end
"""

from .errors import (
    ConcavityError,
    ConvergenceError,
    EffcapError,
    InfeasibleModelError,
    InsufficientDataError,
    MonotonicityError,
    MultipleRootsError,
    ScenarioError,
    TransformDivergenceError,
)
from .mac import (
    ContentionConfig,
    MacOperatingPoint,
    Policy,
    backoff_transforms,
    mean_delay_delivered,
    mean_delay_dropped,
    mean_slot_duration,
    pgf_delivered,
    pgf_dropped,
    slot_mgf,
    solve_operating_point,
)
from .optimize import (
    AdmissionDecision,
    AllocationResult,
    DinkelbachResult,
    ReceiverLink,
    admission_control,
    channel_inversion_baseline,
    dinkelbach_eee,
    dinkelbach_ratio,
    effcap_rate_derivative,
    equal_baseline,
    optimal_rate_baseline,
    optimize_bandwidth,
    optimize_power,
    receiver_effcap,
    receiver_rate,
    waterfilling_baseline,
)
from .scenario import (
    Scenario,
    load_default_scenario,
    load_scenario,
    parse_scenario,
)
from .sim import (
    DelayViolationEstimate,
    EffCapEstimate,
    PacketRecord,
    SimConfig,
    SimStats,
    estimate_delay_violation,
    estimate_effcap,
    run_sim,
    wilson_interval,
)
from .solver import (
    EffCapResult,
    LinkParams,
    QosSpec,
    RegionPoint,
    SemiMarkovModel,
    delay_violation,
    effcap_closed_form,
    effcap_spectral,
    four_state_model,
    mean_throughput,
    qos_region,
    spectral_radius,
)

__version__ = "0.1.0"
