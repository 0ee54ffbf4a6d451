"""Command-line front end: scenario in, CSV/JSON out.

Every command reads one scenario file (the shipped example when
--scenario is omitted), writes its artifacts under --out, and prints a
short summary (the same record as JSON with --json).  CSV cells hold
repr() of the value, so reruns with the same scenario and seeds are
bit-identical and floats round-trip exactly.  Commands that can fail
per row (sweeps, region) leave the failing cell empty and append one
line to a *_warnings.txt sidecar next to the CSV.

Exit codes: 0 success, 1 solver or runtime failure, 2 invalid input.
"""

import argparse
import csv
import json
import math
import sys
from dataclasses import replace
from pathlib import Path

from .errors import EffcapError, InsufficientDataError, ScenarioError
from .mac import Policy, solve_operating_point
from .optimize import (
    admission_control,
    channel_inversion_baseline,
    dinkelbach_eee,
    equal_baseline,
    optimal_rate_baseline,
    optimize_bandwidth,
    optimize_power,
    waterfilling_baseline,
)
from .scenario import Scenario, default_scenario_path, load_scenario
from .sim import SimConfig, estimate_effcap, run_sim
from .solver import (
    QosSpec,
    delay_violation,
    effcap_closed_form,
    effcap_spectral,
    four_state_model,
    mean_throughput,
    qos_region,
)


def _fmt(v) -> str:
    if v is None:
        return ""
    if isinstance(v, float):
        return repr(v)
    return str(v)


def _write_csv(path: Path, header: list[str], rows: list[list]) -> None:
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh)
        w.writerow(header)
        for row in rows:
            w.writerow([_fmt(v) for v in row])


def _write_warnings(path: Path, lines: list[str]) -> None:
    path.write_text("".join(f"{line}\n" for line in lines), encoding="utf-8")


def _emit(args, record: dict, lines: list[str]) -> None:
    if args.json:
        print(json.dumps(record, sort_keys=True))
    else:
        for line in lines:
            print(line)


def _policies(scenario: Scenario, choice: str):
    pairs = [
        ("fcw", replace(scenario.cfg, policy=Policy.FCW)),
        ("vcw", replace(scenario.cfg, policy=Policy.VCW)),
    ]
    if choice == "both":
        return pairs
    return [p for p in pairs if p[0] == choice]


def _policy_seed(base: int, policy: str) -> int:
    # keep the two policies on distinct, reproducible streams
    return base if policy == "fcw" else base + 1


def _csv_manifest(args, command: str, csv_path: Path, rows: int,
                  warn_path: Path, warnings: list[str]) -> None:
    record = {
        "command": command,
        "csv": str(csv_path),
        "rows": rows,
        "warnings_file": str(warn_path),
        "warnings": len(warnings),
    }
    _emit(args, record, [
        f"wrote {csv_path} ({rows} rows)",
        f"wrote {warn_path} ({len(warnings)} warnings)",
    ])


# ---------------------------------------------------------------------------
# commands


def cmd_analyze(args, scenario: Scenario, out: Path) -> int:
    qos = scenario.require("qos") if args.theta is None else scenario.qos
    theta = args.theta if args.theta is not None else qos.theta_grid[0]
    if not theta > 0.0:
        raise ScenarioError("--theta: must be > 0")
    cfg, link = scenario.cfg, scenario.link
    op = solve_operating_point(cfg)
    closed = effcap_closed_form(link, cfg, op, theta)
    spectral = effcap_spectral(four_state_model(link, cfg, op), theta)
    avg = mean_throughput(link, cfg, op)

    record = {
        "scenario": scenario.name,
        "theta": theta,
        "c_closed": closed.c_theta,
        "c_spectral": spectral.c_theta,
        "residual_closed": closed.residual,
        "residual_spectral": spectral.residual,
        "mean_throughput": avg,
        "p_collision": op.p_laa,
    }
    if qos is not None:
        eta = qos.eta if qos.eta is not None else min(1.0, closed.c_theta / avg)
        p_map = {}
        for d in (0.1 * qos.d_max, qos.d_max, 10.0 * qos.d_max):
            spec = QosSpec(theta=theta, d_max=d, p_th=qos.p_th, eta=eta)
            p_map[repr(d)] = delay_violation(closed, spec)
        record["eta"] = eta
        record["p_th_map"] = p_map

    (out / "analyze.json").write_text(
        json.dumps(record, sort_keys=True, indent=2) + "\n", encoding="utf-8")
    lines = [
        f"scenario {scenario.name}, theta={theta!r}",
        f"C closed-form: {record['c_closed']!r} bits/s",
        f"C spectral:    {record['c_spectral']!r} bits/s",
        f"mean throughput: {avg!r} bits/s",
    ]
    if "p_th_map" in record:
        lines += [f"P(delay > {d}) <= {p!r}" for d, p in record["p_th_map"].items()]
    _emit(args, record, lines)
    return 0


def cmd_sweep_theta(args, scenario: Scenario, out: Path) -> int:
    qos = scenario.require("qos")
    sim = scenario.require("sim")
    link = scenario.link
    seed = args.seed if args.seed is not None else sim.seed

    runs = {}
    for name, cfg in _policies(scenario, args.policy):
        stats = run_sim(SimConfig(
            cfg=cfg,
            horizon_slots=sim.horizon_slots,
            seed=_policy_seed(seed, name),
            packet_size=sim.packet_size,
            tagged_arrival_rate=sim.arrival_rate,
            per_eps=link.per_eps,
            block_slots=sim.block_slots,
            warmup_slots=sim.warmup_slots,
        ))
        runs[name] = (cfg, solve_operating_point(cfg), stats)

    rows, warnings = [], []
    for theta in qos.theta_grid:
        for name, (cfg, op, stats) in runs.items():
            c_ana = c_sim = stderr = None
            try:
                c_ana = effcap_closed_form(link, cfg, op, theta).c_theta
            except EffcapError as e:
                warnings.append(f"theta={theta!r} policy={name}: {e}")
            try:
                est = estimate_effcap(stats, theta)
                c_sim, stderr = est.c_hat, est.stderr
            except (EffcapError, InsufficientDataError) as e:
                warnings.append(f"theta={theta!r} policy={name} sim: {e}")
            rows.append([theta, name, c_ana, c_sim, stderr])

    csv_path = out / "sweep_theta.csv"
    warn_path = out / "sweep_theta_warnings.txt"
    _write_csv(csv_path, ["theta", "policy", "C_analytical", "C_sim", "sim_stderr"], rows)
    _write_warnings(warn_path, warnings)
    _csv_manifest(args, "sweep-theta", csv_path, len(rows), warn_path, warnings)
    return 0


def cmd_sweep_density(args, scenario: Scenario, out: Path) -> int:
    qos = scenario.require("qos")
    sweep = scenario.require("sweep")
    link = scenario.link
    theta = qos.theta_grid[0]  # the stringent end of the grid

    rows, warnings = [], []
    for density in sweep.densities:
        n = sweep.n_laa_at(density)
        for name, cfg in _policies(scenario, args.policy):
            cfg_n = replace(cfg, n_laa=n)
            total = None
            try:
                op = solve_operating_point(cfg_n)
                total = n * effcap_closed_form(link, cfg_n, op, theta).c_theta
            except EffcapError as e:
                warnings.append(f"density={density!r} policy={name}: {e}")
            rows.append([density, name, total])

    csv_path = out / "sweep_density.csv"
    warn_path = out / "sweep_density_warnings.txt"
    _write_csv(csv_path, ["density", "policy", "total_effcap"], rows)
    _write_warnings(warn_path, warnings)
    _csv_manifest(args, "sweep-density", csv_path, len(rows), warn_path, warnings)
    return 0


def cmd_region(args, scenario: Scenario, out: Path) -> int:
    qos = scenario.require("qos")
    link = scenario.link

    rows, warnings = [], []
    for name, cfg in _policies(scenario, args.policy):
        points, warns = qos_region(link, cfg, qos.p_th, qos.eta, qos.theta_grid)
        warnings.extend(f"policy={name}: {w}" for w in warns)
        rows.extend([pt.rate, pt.d_max, name] for pt in points)

    csv_path = out / "region.csv"
    warn_path = out / "region_warnings.txt"
    _write_csv(csv_path, ["rate", "d_max", "policy"], rows)
    _write_warnings(warn_path, warnings)
    _csv_manifest(args, "region", csv_path, len(rows), warn_path, warnings)
    return 0


def _allocation_sweep(args, scenario: Scenario, out: Path, *, kind: str) -> int:
    qos = scenario.require("qos")
    opt = scenario.require("optimize")

    rows, warnings = [], []
    for theta in qos.theta_grid:
        links = [replace(r, theta_k=theta) for r in opt.receivers]
        if kind == "power":
            strategies = (
                ("optimal", lambda: optimize_power(links, opt.p_total)),
                ("waterfilling", lambda: waterfilling_baseline(links, opt.p_total)),
                ("inversion", lambda: channel_inversion_baseline(links, opt.p_total)),
            )
        else:
            strategies = (
                ("optimal", lambda: optimize_bandwidth(links, opt.b_total)),
                ("optimal_rate", lambda: optimal_rate_baseline(links, opt.b_total)),
                ("equal", lambda: equal_baseline(links, opt.b_total)),
            )
        for name, solve in strategies:
            objective = None
            try:
                objective = solve().objective
            except EffcapError as e:
                warnings.append(f"theta={theta!r} strategy={name}: {e}")
            rows.append([theta, name, objective])

    stem = "power_opt" if kind == "power" else "bandwidth_opt"
    csv_path = out / f"{stem}.csv"
    warn_path = out / f"{stem}_warnings.txt"
    _write_csv(csv_path, ["theta", "strategy", "objective"], rows)
    _write_warnings(warn_path, warnings)
    _csv_manifest(args, stem.replace("_", "-"), csv_path, len(rows), warn_path, warnings)
    return 0


def cmd_power_opt(args, scenario: Scenario, out: Path) -> int:
    return _allocation_sweep(args, scenario, out, kind="power")


def cmd_bandwidth_opt(args, scenario: Scenario, out: Path) -> int:
    return _allocation_sweep(args, scenario, out, kind="bandwidth")


def cmd_eee(args, scenario: Scenario, out: Path) -> int:
    opt = scenario.require("optimize")
    if opt.eee is None:
        raise ScenarioError("optimize.eee: scenario has no EEE range")
    rl = opt.receivers[0]  # the EEE example runs on the first receiver
    p_star, eee_star = dinkelbach_eee(
        rl, (opt.eee.p_lo, opt.eee.p_hi), static_offset=opt.eee.static_offset)
    record = {
        "scenario": scenario.name,
        "p_lo": opt.eee.p_lo,
        "p_hi": opt.eee.p_hi,
        "static_offset": opt.eee.static_offset,
        "p_star": p_star,
        "eee_star": eee_star,
    }
    (out / "eee.json").write_text(
        json.dumps(record, sort_keys=True, indent=2) + "\n", encoding="utf-8")
    _emit(args, record, [
        f"most efficient power: {p_star!r} W",
        f"effective energy efficiency: {eee_star!r} bits/J",
    ])
    return 0


def cmd_admit(args, scenario: Scenario, out: Path) -> int:
    current = []
    if args.current:
        for part in args.current.split(","):
            try:
                current.append(float(part))
            except ValueError:
                raise ScenarioError(
                    f"--current: {part!r} is not a number") from None
    decision = admission_control(
        current, args.rate, args.d_max, args.p_th,
        scenario.cfg, scenario.link, eta=args.eta,
    )
    record = {
        "scenario": scenario.name,
        "rate": args.rate,
        "d_max": args.d_max,
        "p_th": args.p_th,
        "current_flows": len(current),
        "accepted": decision.accepted,
        "margin": decision.margin,
        "boundary_rate": decision.boundary_rate,
        "theta_star": decision.theta_star,
        "eta": decision.eta,
        "reason": decision.reason,
    }
    (out / "admit.json").write_text(
        json.dumps(record, sort_keys=True, indent=2) + "\n", encoding="utf-8")
    verdict = "accept" if decision.accepted else "reject"
    lines = [f"{verdict}: margin {decision.margin!r} bits/s"]
    if decision.reason:
        lines.append(decision.reason)
    _emit(args, record, lines)
    return 0


def cmd_simulate(args, scenario: Scenario, out: Path) -> int:
    sim = scenario.require("sim")
    seed = args.seed if args.seed is not None else sim.seed
    stats = run_sim(SimConfig(
        cfg=scenario.cfg,
        horizon_slots=sim.horizon_slots,
        seed=seed,
        packet_size=sim.packet_size,
        tagged_arrival_rate=sim.arrival_rate,
        per_eps=scenario.link.per_eps,
        block_slots=sim.block_slots,
        warmup_slots=sim.warmup_slots,
        record_trace=True,
    ))
    csv_path = out / "simulate.csv"
    _write_csv(
        csv_path,
        ["packet_id", "arrival_s", "departure_s", "attempts", "outcome"],
        [[r.packet_id, r.arrival_s, r.departure_s, r.attempts, r.outcome]
         for r in stats.packet_trace],
    )
    record = dict(sorted(stats.as_record().items()))
    record["scenario"] = scenario.name
    # basename only: the summary sits next to the trace and must not
    # bake the output directory into its bytes
    record["trace_csv"] = csv_path.name
    (out / "simulate.json").write_text(
        json.dumps(record, sort_keys=True, indent=2) + "\n", encoding="utf-8")
    _emit(args, record, [
        f"wrote {csv_path} ({len(stats.packet_trace)} packets)",
        f"throughput: {stats.throughput_bps!r} bits/s",
        f"collision probability: {stats.p_hat!r}",
    ])
    return 0


# ---------------------------------------------------------------------------
# entry point


def _build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--scenario", type=Path, default=None,
                        help="scenario JSON (default: shipped example)")
    common.add_argument("--out", type=Path, default=Path("."),
                        help="output directory (default: current)")
    common.add_argument("--seed", type=int, default=None,
                        help="override the scenario's simulation seed")
    common.add_argument("--json", action="store_true",
                        help="print a machine-readable record to stdout")
    common.add_argument("--policy", choices=("fcw", "vcw", "both"),
                        default="both",
                        help="which contention policy to sweep")

    parser = argparse.ArgumentParser(
        prog="effcap",
        description="effective capacity of contention-based links",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("analyze", parents=[common],
                       help="both solvers plus the delay-violation map")
    p.add_argument("--theta", type=float, default=None)
    p.set_defaults(fn=cmd_analyze)

    sub.add_parser("sweep-theta", parents=[common],
                   help="C vs theta, analytical and simulated"
                   ).set_defaults(fn=cmd_sweep_theta)
    sub.add_parser("sweep-density", parents=[common],
                   help="total effective capacity vs transmitter density"
                   ).set_defaults(fn=cmd_sweep_density)
    sub.add_parser("region", parents=[common],
                   help="supportable (rate, delay-bound) boundary"
                   ).set_defaults(fn=cmd_region)
    sub.add_parser("power-opt", parents=[common],
                   help="power allocation strategies vs theta"
                   ).set_defaults(fn=cmd_power_opt)
    sub.add_parser("bandwidth-opt", parents=[common],
                   help="bandwidth allocation strategies vs theta"
                   ).set_defaults(fn=cmd_bandwidth_opt)
    sub.add_parser("eee", parents=[common],
                   help="most energy-efficient transmit power"
                   ).set_defaults(fn=cmd_eee)

    p = sub.add_parser("admit", parents=[common],
                       help="admission decision for one candidate flow")
    p.add_argument("--rate", type=float, required=True,
                   help="candidate rate demand, bits/s")
    p.add_argument("--d-max", type=float, required=True,
                   help="candidate delay bound, seconds")
    p.add_argument("--p-th", type=float, required=True,
                   help="delay-violation target in (0, 1)")
    p.add_argument("--eta", type=float, default=None)
    p.add_argument("--current", type=str, default=None,
                   help="comma-separated rates of already-admitted flows")
    p.set_defaults(fn=cmd_admit)

    sub.add_parser("simulate", parents=[common],
                   help="one simulator run with a per-packet trace"
                   ).set_defaults(fn=cmd_simulate)
    return parser


def main(argv=None) -> int:
    args = _build_parser().parse_args(argv)
    try:
        path = args.scenario if args.scenario is not None else default_scenario_path()
        scenario = load_scenario(path)
        out = args.out
        out.mkdir(parents=True, exist_ok=True)
        return args.fn(args, scenario, out)
    except ScenarioError as e:
        print(f"error: {e}", file=sys.stderr)
        return 2
    except ValueError as e:
        print(f"error: {e}", file=sys.stderr)
        return 2
    except EffcapError as e:
        print(f"error: {e}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
