"""Render the capacity CLI's CSV artifacts to PNG or SVG.

Five figure kinds, one per CSV schema the CLI emits.  Input columns
are checked before anything is drawn: a missing or unexpected column
is reported by name, a header-only file is reported as having no data
rows.  Rendering is deterministic for a given CSV and spec: the Agg
backend, a fixed SVG hash salt, and no embedded timestamps.

Multiple input files of the same kind overlay into one figure; series
labels gain the file stem as a prefix so the legend stays readable.
"""

import csv
import math
from dataclasses import dataclass
from pathlib import Path

import matplotlib

matplotlib.use("Agg")
matplotlib.rcParams["svg.hashsalt"] = "effcap-plots"

import matplotlib.pyplot as plt  # noqa: E402  (backend must be set first)


class PlotError(Exception):
    """Base class for everything this package raises on purpose."""


class SchemaError(PlotError):
    """CSV header or cell does not match the expected schema."""


class NoDataError(PlotError):
    """CSV has a valid header but no data rows."""


# column order as the CLI writes it; the first column is x everywhere
SCHEMAS = {
    "sweep-theta": ("theta", "policy", "C_analytical", "C_sim", "sim_stderr"),
    "sweep-density": ("density", "policy", "total_effcap"),
    "region": ("rate", "d_max", "policy"),
    "power-opt": ("theta", "strategy", "objective"),
    "bandwidth-opt": ("theta", "strategy", "objective"),
}

FORMATS = (".png", ".svg")


@dataclass(frozen=True)
class FigureSpec:
    """One figure: what to read, which kind it is, where to write."""

    kind: str
    inputs: tuple[Path, ...]
    output: Path

    def __post_init__(self):
        if self.kind not in SCHEMAS:
            raise ValueError(
                f"kind must be one of {sorted(SCHEMAS)}, not {self.kind!r}")
        if not self.inputs:
            raise ValueError("at least one input CSV is required")
        if self.output.suffix.lower() not in FORMATS:
            raise ValueError(
                f"output must end in one of {FORMATS}, not "
                f"{self.output.suffix!r}")

    @property
    def image_format(self) -> str:
        return self.output.suffix.lower().lstrip(".")


def read_table(path: Path, kind: str) -> list[dict]:
    """Parse one CSV against the kind's schema.

    Numeric cells may be empty (the CLI leaves a failed sweep cell
    blank); those come back as None and the plots skip them.
    """
    columns = SCHEMAS[kind]
    try:
        with open(path, newline="", encoding="utf-8") as fh:
            rows = list(csv.reader(fh))
    except OSError as e:
        raise PlotError(f"cannot read {path}: {e}") from None
    if not rows:
        raise SchemaError(f"{path}: empty file, expected header "
                          f"{','.join(columns)}")
    header, data = rows[0], rows[1:]
    missing = [c for c in columns if c not in header]
    if missing:
        raise SchemaError(
            f"{path}: missing column{'s' if len(missing) > 1 else ''} "
            f"{', '.join(repr(c) for c in missing)}")
    unexpected = [c for c in header if c not in columns]
    if unexpected:
        raise SchemaError(
            f"{path}: unexpected column{'s' if len(unexpected) > 1 else ''} "
            f"{', '.join(repr(c) for c in unexpected)}")
    if not data:
        raise NoDataError(f"{path}: no data rows")

    idx = {c: header.index(c) for c in columns}
    label_cols = {"policy", "strategy"}
    out = []
    for lineno, raw in enumerate(data, start=2):
        if len(raw) != len(header):
            raise SchemaError(
                f"{path}:{lineno}: expected {len(header)} cells, "
                f"got {len(raw)}")
        row = {}
        for col in columns:
            cell = raw[idx[col]]
            if col in label_cols:
                row[col] = cell
                continue
            if cell == "":
                row[col] = None
                continue
            try:
                row[col] = float(cell)
            except ValueError:
                raise SchemaError(
                    f"{path}:{lineno}: column {col!r} is not a number: "
                    f"{cell!r}") from None
        out.append(row)
    return out


def _series(rows: list[dict], key: str) -> dict[str, list[dict]]:
    """Group rows by the label column, preserving file order."""
    groups: dict[str, list[dict]] = {}
    for row in rows:
        groups.setdefault(row[key], []).append(row)
    return groups


def _label(prefix: str, name: str) -> str:
    return f"{prefix}{name}" if prefix else name


def _draw_sweep_theta(ax, rows, prefix):
    for policy, pts in _series(rows, "policy").items():
        ana = [(r["theta"], r["C_analytical"]) for r in pts
               if r["C_analytical"] is not None]
        if ana:
            ax.plot(*zip(*ana), marker="", linestyle="-",
                    label=_label(prefix, f"{policy} analytical"))
        sim = [(r["theta"], r["C_sim"], r["sim_stderr"] or 0.0) for r in pts
               if r["C_sim"] is not None]
        if sim:
            x, y, err = zip(*sim)
            ax.errorbar(x, y, yerr=err, marker="o", linestyle="none",
                        capsize=3, label=_label(prefix, f"{policy} simulated"))
    ax.set_xscale("log")
    ax.set_xlabel("QoS exponent theta")
    ax.set_ylabel("effective capacity (bits/s)")


def _draw_sweep_density(ax, rows, prefix):
    for policy, pts in _series(rows, "policy").items():
        xy = [(r["density"], r["total_effcap"]) for r in pts
              if r["total_effcap"] is not None]
        if xy:
            ax.plot(*zip(*xy), marker="o",
                    label=_label(prefix, policy))
    ax.set_xlabel("transmitter density (per km^2)")
    ax.set_ylabel("total effective capacity (bits/s)")


def _draw_region(ax, rows, prefix):
    for policy, pts in _series(rows, "policy").items():
        xy = [(r["d_max"], r["rate"]) for r in pts
              if r["rate"] is not None and r["d_max"] is not None]
        if xy:
            xy.sort(key=lambda p: p[0])
            ax.plot(*zip(*xy), marker="o",
                    label=_label(prefix, policy))
    # delay bounds span decades whenever the exponent grid does
    ax.set_xscale("log")
    ax.set_xlabel("delay bound d_max (s)")
    ax.set_ylabel("supportable rate (bits/s)")


def _draw_allocation(ax, rows, prefix, ylabel):
    for strategy, pts in _series(rows, "strategy").items():
        xy = [(r["theta"], r["objective"]) for r in pts
              if r["objective"] is not None]
        if xy:
            ax.plot(*zip(*xy), marker="o",
                    label=_label(prefix, strategy))
    ax.set_xscale("log")
    ax.set_xlabel("QoS exponent theta")
    ax.set_ylabel(ylabel)


def build_figure(spec: FigureSpec):
    """Read every input and draw the figure; the caller owns saving."""
    tables = [(p, read_table(p, spec.kind)) for p in spec.inputs]
    fig, ax = plt.subplots(figsize=(6.4, 4.4))
    many = len(tables) > 1
    for path, rows in tables:
        prefix = f"{path.stem}: " if many else ""
        if spec.kind == "sweep-theta":
            _draw_sweep_theta(ax, rows, prefix)
        elif spec.kind == "sweep-density":
            _draw_sweep_density(ax, rows, prefix)
        elif spec.kind == "region":
            _draw_region(ax, rows, prefix)
        elif spec.kind == "power-opt":
            _draw_allocation(ax, rows, prefix, "power-allocation objective (bits/s)")
        else:
            _draw_allocation(ax, rows, prefix, "bandwidth-allocation objective (bits/s)")
    ax.grid(True, which="both", alpha=0.3)
    ax.legend()
    fig.tight_layout()
    return fig


def render(spec: FigureSpec) -> Path:
    """Write the figure to spec.output and return the path."""
    fig = build_figure(spec)
    try:
        # a None date strips the SVG timestamp; PNG embeds none anyway
        fig.savefig(spec.output, dpi=150, metadata={"Date": None}
                    if spec.image_format == "svg" else None)
    finally:
        plt.close(fig)
    return spec.output
