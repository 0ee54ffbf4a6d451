"""Scenario files: one JSON document describing an experiment.

Top-level keys are fixed ({name, notes, mac, link, qos, sim, optimize,
sweep}); anything else is rejected with the offending path, as is any
unknown key inside a section.  ``mac`` and ``link`` are mandatory, the
rest are optional and commands that need a missing section fail with a
validation error naming it.

The parser reports every problem as a ScenarioError whose message
starts with the JSON path ("sweep.densities[2]: ..."), so a wrapper
can surface schema failures verbatim.
"""

import json
import math
from dataclasses import dataclass
from importlib import resources
from pathlib import Path

from .errors import ScenarioError
from .mac import ContentionConfig, Policy
from .optimize import ReceiverLink
from .solver import LinkParams

_TOP_KEYS = {"name", "notes", "mac", "link", "qos", "sim", "optimize", "sweep"}
_MAC_KEYS = {
    "n_laa", "m_wifi", "policy", "w0", "max_stage", "retry_limit",
    "sigma", "t_f", "t_s", "t_c", "wifi_w0", "wifi_max_stage",
    "wifi_retry_limit",
}
_LINK_KEYS = {"rate_r", "per_eps"}
_QOS_KEYS = {"theta_grid", "d_max", "p_th", "eta"}
_SIM_KEYS = {
    "horizon_slots", "seed", "packet_size", "arrival_rate",
    "block_slots", "warmup_slots",
}
_OPT_KEYS = {"receivers", "p_total", "b_total", "eee"}
_RECEIVER_KEYS = {
    "gain_h", "noise_n0", "theta_k", "bandwidth_b", "power_p", "per_eps",
}
_EEE_KEYS = {"p_lo", "p_hi", "static_offset"}
_SWEEP_KEYS = {"densities", "area_km2"}


@dataclass(frozen=True)
class QosGrid:
    theta_grid: tuple[float, ...]
    d_max: float
    p_th: float
    eta: float | None


@dataclass(frozen=True)
class SimSettings:
    horizon_slots: int
    seed: int
    packet_size: float
    arrival_rate: float  # bits/s; math.inf encodes "saturated"
    block_slots: int
    warmup_slots: int


@dataclass(frozen=True)
class EeeSettings:
    p_lo: float
    p_hi: float
    static_offset: float


@dataclass(frozen=True)
class OptimizeSettings:
    receivers: tuple[ReceiverLink, ...]
    p_total: float
    b_total: float
    eee: EeeSettings | None


@dataclass(frozen=True)
class SweepSettings:
    densities: tuple[float, ...]  # transmitters per km^2
    area_km2: float

    def n_laa_at(self, density: float) -> int:
        return int(round(density * self.area_km2))


@dataclass(frozen=True)
class Scenario:
    name: str
    cfg: ContentionConfig
    link: LinkParams
    qos: QosGrid | None
    sim: SimSettings | None
    optimize: OptimizeSettings | None
    sweep: SweepSettings | None

    def require(self, section: str):
        value = getattr(self, section)
        if value is None:
            raise ScenarioError(
                f"{section}: scenario has no '{section}' section but the "
                "command needs one"
            )
        return value


def _fail(path: str, msg: str):
    raise ScenarioError(f"{path}: {msg}")


def _reject_unknown(doc: dict, path: str, allowed: set):
    for key in doc:
        if key not in allowed:
            _fail(f"{path}.{key}" if path else key, "unknown key")


def _section(doc: dict, key: str, required: bool):
    if key not in doc:
        if required:
            _fail(key, "required section is missing")
        return None
    value = doc[key]
    if not isinstance(value, dict):
        _fail(key, "must be an object")
    return value


def _num(sec: dict, path: str, key: str, *, required=True, default=None):
    if key not in sec:
        if required:
            _fail(f"{path}.{key}", "required field is missing")
        return default
    v = sec[key]
    if isinstance(v, bool) or not isinstance(v, (int, float)):
        _fail(f"{path}.{key}", "must be a number")
    if not math.isfinite(v):
        _fail(f"{path}.{key}", "must be finite")
    return float(v)


def _int(sec: dict, path: str, key: str, *, required=True, default=None):
    if key not in sec:
        if required:
            _fail(f"{path}.{key}", "required field is missing")
        return default
    v = sec[key]
    if isinstance(v, bool) or not isinstance(v, int):
        _fail(f"{path}.{key}", "must be an integer")
    return v


def _grid(sec: dict, path: str, key: str) -> tuple[float, ...]:
    if key not in sec:
        _fail(f"{path}.{key}", "required field is missing")
    v = sec[key]
    if not isinstance(v, list) or not v:
        _fail(f"{path}.{key}", "must be a non-empty array")
    out = []
    for i, x in enumerate(v):
        if isinstance(x, bool) or not isinstance(x, (int, float)):
            _fail(f"{path}.{key}[{i}]", "must be a number")
        if not (math.isfinite(x) and x > 0.0):
            _fail(f"{path}.{key}[{i}]", "must be a positive finite number")
        out.append(float(x))
    for i, (a, b) in enumerate(zip(out, out[1:])):
        if b <= a:
            _fail(f"{path}.{key}[{i + 1}]", "grid must be strictly ascending")
    return tuple(out)


def _parse_mac(sec: dict) -> ContentionConfig:
    _reject_unknown(sec, "mac", _MAC_KEYS)
    policy_raw = sec.get("policy")
    if policy_raw not in ("fcw", "vcw"):
        _fail("mac.policy", "must be \"fcw\" or \"vcw\"")
    kwargs = dict(
        n_laa=_int(sec, "mac", "n_laa"),
        m_wifi=_int(sec, "mac", "m_wifi"),
        policy=Policy.FCW if policy_raw == "fcw" else Policy.VCW,
        w0=_int(sec, "mac", "w0"),
        max_stage=_int(sec, "mac", "max_stage"),
        retry_limit=_int(sec, "mac", "retry_limit"),
        sigma=_num(sec, "mac", "sigma"),
        t_f=_num(sec, "mac", "t_f"),
    )
    for key in ("t_s", "t_c"):
        if key in sec:
            kwargs[key] = _num(sec, "mac", key)
    for key in ("wifi_w0", "wifi_max_stage", "wifi_retry_limit"):
        if key in sec:
            kwargs[key] = _int(sec, "mac", key)
    try:
        return ContentionConfig(**kwargs)
    except ValueError as e:
        _fail("mac", str(e))


def _parse_link(sec: dict) -> LinkParams:
    _reject_unknown(sec, "link", _LINK_KEYS)
    try:
        return LinkParams(
            rate_r=_num(sec, "link", "rate_r"),
            per_eps=_num(sec, "link", "per_eps", required=False, default=0.0),
        )
    except ValueError as e:
        _fail("link", str(e))


def _parse_qos(sec: dict | None) -> QosGrid | None:
    if sec is None:
        return None
    _reject_unknown(sec, "qos", _QOS_KEYS)
    eta = None
    if "eta" in sec and sec["eta"] is not None:
        eta = _num(sec, "qos", "eta")
        if not 0.0 < eta <= 1.0:
            _fail("qos.eta", "must lie in (0, 1]")
    d_max = _num(sec, "qos", "d_max")
    if not d_max > 0.0:
        _fail("qos.d_max", "must be > 0")
    p_th = _num(sec, "qos", "p_th")
    if not 0.0 < p_th < 1.0:
        _fail("qos.p_th", "must lie in (0, 1)")
    return QosGrid(
        theta_grid=_grid(sec, "qos", "theta_grid"),
        d_max=d_max, p_th=p_th, eta=eta,
    )


def _parse_sim(sec: dict | None) -> SimSettings | None:
    if sec is None:
        return None
    _reject_unknown(sec, "sim", _SIM_KEYS)
    rate_raw = sec.get("arrival_rate", "saturated")
    if rate_raw == "saturated":
        rate = math.inf
    elif isinstance(rate_raw, bool) or not isinstance(rate_raw, (int, float)):
        _fail("sim.arrival_rate", "must be a number or \"saturated\"")
    else:
        rate = float(rate_raw)
        if not (math.isfinite(rate) and rate >= 0.0):
            _fail("sim.arrival_rate", "must be finite and >= 0")
    horizon = _int(sec, "sim", "horizon_slots")
    if horizon < 1:
        _fail("sim.horizon_slots", "must be >= 1")
    packet = _num(sec, "sim", "packet_size")
    if not packet > 0.0:
        _fail("sim.packet_size", "must be > 0")
    block = _int(sec, "sim", "block_slots", required=False, default=4000)
    if block < 1:
        _fail("sim.block_slots", "must be >= 1")
    warmup = _int(sec, "sim", "warmup_slots", required=False, default=2000)
    if not 0 <= warmup < horizon:
        _fail("sim.warmup_slots", "must lie in [0, horizon_slots)")
    return SimSettings(
        horizon_slots=horizon,
        seed=_int(sec, "sim", "seed"),
        packet_size=packet,
        arrival_rate=rate,
        block_slots=block,
        warmup_slots=warmup,
    )


def _parse_optimize(sec: dict | None, cfg: ContentionConfig) -> OptimizeSettings | None:
    if sec is None:
        return None
    _reject_unknown(sec, "optimize", _OPT_KEYS)
    raw = sec.get("receivers")
    if not isinstance(raw, list) or not raw:
        _fail("optimize.receivers", "must be a non-empty array")
    receivers = []
    for i, rsec in enumerate(raw):
        path = f"optimize.receivers[{i}]"
        if not isinstance(rsec, dict):
            _fail(path, "must be an object")
        _reject_unknown(rsec, path, _RECEIVER_KEYS)
        try:
            receivers.append(ReceiverLink(
                gain_h=_num(rsec, path, "gain_h"),
                noise_n0=_num(rsec, path, "noise_n0"),
                theta_k=_num(rsec, path, "theta_k"),
                bandwidth_b=_num(rsec, path, "bandwidth_b"),
                power_p=_num(rsec, path, "power_p"),
                per_eps=_num(rsec, path, "per_eps", required=False, default=0.0),
                cfg=cfg,
            ))
        except ValueError as e:
            _fail(path, str(e))
    p_total = _num(sec, "optimize", "p_total")
    if not p_total > 0.0:
        _fail("optimize.p_total", "must be > 0")
    b_total = _num(sec, "optimize", "b_total")
    if not b_total > 0.0:
        _fail("optimize.b_total", "must be > 0")
    eee = None
    if "eee" in sec:
        esec = sec["eee"]
        if not isinstance(esec, dict):
            _fail("optimize.eee", "must be an object")
        _reject_unknown(esec, "optimize.eee", _EEE_KEYS)
        p_lo = _num(esec, "optimize.eee", "p_lo")
        p_hi = _num(esec, "optimize.eee", "p_hi")
        offset = _num(esec, "optimize.eee", "static_offset",
                      required=False, default=0.0)
        if not 0.0 < p_lo < p_hi:
            _fail("optimize.eee.p_lo", "need 0 < p_lo < p_hi")
        if offset < 0.0:
            _fail("optimize.eee.static_offset", "must be >= 0")
        eee = EeeSettings(p_lo=p_lo, p_hi=p_hi, static_offset=offset)
    return OptimizeSettings(
        receivers=tuple(receivers), p_total=p_total, b_total=b_total, eee=eee,
    )


def _parse_sweep(sec: dict | None) -> SweepSettings | None:
    if sec is None:
        return None
    _reject_unknown(sec, "sweep", _SWEEP_KEYS)
    area = _num(sec, "sweep", "area_km2")
    if not area > 0.0:
        _fail("sweep.area_km2", "must be > 0")
    densities = _grid(sec, "sweep", "densities")
    for i, d in enumerate(densities):
        if int(round(d * area)) < 1:
            _fail(f"sweep.densities[{i}]",
                  "density * area_km2 rounds to zero transmitters")
    return SweepSettings(densities=densities, area_km2=area)


def parse_scenario(doc) -> Scenario:
    """Validate a decoded JSON document into a Scenario."""
    if not isinstance(doc, dict):
        raise ScenarioError("top level: must be a JSON object")
    _reject_unknown(doc, "", _TOP_KEYS)
    name = doc.get("name")
    if not isinstance(name, str) or not name:
        _fail("name", "must be a non-empty string")
    notes = doc.get("notes", {})
    if not isinstance(notes, dict) or any(
        not isinstance(v, str) for v in notes.values()
    ):
        _fail("notes", "must be an object with string values")
    cfg = _parse_mac(_section(doc, "mac", required=True))
    return Scenario(
        name=name,
        cfg=cfg,
        link=_parse_link(_section(doc, "link", required=True)),
        qos=_parse_qos(_section(doc, "qos", required=False)),
        sim=_parse_sim(_section(doc, "sim", required=False)),
        optimize=_parse_optimize(_section(doc, "optimize", required=False), cfg),
        sweep=_parse_sweep(_section(doc, "sweep", required=False)),
    )


def load_scenario(path: str | Path) -> Scenario:
    """Read and validate a scenario file."""
    try:
        text = Path(path).read_text(encoding="utf-8")
    except OSError as e:
        raise ScenarioError(f"cannot read scenario file: {e}") from e
    try:
        doc = json.loads(text)
    except json.JSONDecodeError as e:
        raise ScenarioError(f"not valid JSON: {e}") from e
    return parse_scenario(doc)


def default_scenario_path() -> Path:
    """Path of the shipped example scenario."""
    return Path(resources.files("effcap").joinpath("data/default_scenario.json"))


def load_default_scenario() -> Scenario:
    return load_scenario(default_scenario_path())
