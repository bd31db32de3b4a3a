"""Evaluation metrics and report emission.

Utility-ratio traces are recorded at event completion and held constant
across a multi-unit event's constituent units; aggregation forward-fills
onto the unit grid before averaging. The stop-efficiency metric rewards
sessions that end soon after first observing a near-optimal point.
"""

from __future__ import annotations

import csv
import json
import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .errors import InvalidArgumentError


@dataclass
class MetricTrace:
    mechanism: str
    seed: int
    points: list[tuple[int, float]]  # (interaction unit, utility ratio) at event completion

    def __post_init__(self):
        units = [u for u, _ in self.points]
        if any(b <= a for a, b in zip(units, units[1:])):
            raise InvalidArgumentError("trace units must be strictly increasing")


UNDEFINED_ISE = None


def ise(M: int, good_flags: list[bool], delta: float = 0.05):
    """Iteration stop efficiency: 1 - (M - M_G) / M.

    M_G is the first iteration whose accumulated point set contains a good
    point, i.e. one within delta of the reference optimum. Sessions that
    never observe a good point have no defined value and return None; delta
    is carried by the caller when computing the flags and validated here.
    """
    if M < 1:
        raise InvalidArgumentError(f"M must be >= 1, got {M}")
    if len(good_flags) != M:
        raise InvalidArgumentError(f"need {M} flags, got {len(good_flags)}")
    if not 0.0 <= delta < 1.0:
        raise InvalidArgumentError(f"delta must be in [0, 1), got {delta}")
    try:
        m_g = next(i for i, g in enumerate(good_flags, start=1) if g)
    except StopIteration:
        return UNDEFINED_ISE
    return 1.0 - (M - m_g) / M


def forward_fill(trace: MetricTrace, total_units: int) -> np.ndarray:
    """Per-unit values on the grid 1..total_units, constant between events."""
    values = np.zeros(total_units)
    current = 0.0
    points = dict(trace.points)
    for unit in range(1, total_units + 1):
        if unit in points:
            current = points[unit]
        values[unit - 1] = current
    return values


def aggregate(traces: list[MetricTrace], total_units: int) -> dict:
    """Per-mechanism per-unit mean and standard error over seeds."""
    by_mechanism: dict[str, list[np.ndarray]] = {}
    for t in traces:
        by_mechanism.setdefault(t.mechanism, []).append(forward_fill(t, total_units))
    out = {}
    for mech, rows in sorted(by_mechanism.items()):
        if len(rows) < 2:
            raise InvalidArgumentError(f"need >= 2 seeds per mechanism, got {len(rows)} for {mech}")
        arr = np.array(rows)
        mean = arr.mean(axis=0)
        se = arr.std(axis=0, ddof=1) / math.sqrt(arr.shape[0])
        out[mech] = {"mean": mean, "se": se, "n": arr.shape[0]}
    return out


def auc(trace_values: np.ndarray) -> float:
    """Trapezoidal area under a per-unit value curve on the grid 1..len."""
    values = np.asarray(trace_values, dtype=float)
    if values.size < 2:
        raise InvalidArgumentError("need at least 2 points for the area")
    return float(np.trapezoid(values, dx=1.0))


@dataclass
class RunReport:
    """File-emitting summary of a finished experiment directory."""

    traces: list[MetricTrace]
    total_units: int
    ise_values: dict[tuple[str, int], float | None] = field(default_factory=dict)
    config_hash: str = "nohash"

    def emit(self, out_dir: str | Path) -> dict[str, Path]:
        out = Path(out_dir)
        out.mkdir(parents=True, exist_ok=True)
        stats = aggregate(self.traces, self.total_units)
        written = {}
        written["trace_csv"] = self._write_trace_csv(out)
        written["summary_csv"] = self._write_summary_csv(out, stats)
        written["summary_json"] = self._write_summary_json(out, stats)
        written["chart_svg"] = self._write_chart(out, stats)
        return written

    def _path(self, out: Path, stem: str, ext: str) -> Path:
        return out / f"{stem}_{self.config_hash}.{ext}"

    def _write_trace_csv(self, out: Path) -> Path:
        path = self._path(out, "traces", "csv")
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["mechanism", "seed", "unit", "utility_ratio"])
            for t in sorted(self.traces, key=lambda t: (t.mechanism, t.seed)):
                filled = forward_fill(t, self.total_units)
                for unit in range(1, self.total_units + 1):
                    w.writerow([t.mechanism, t.seed, unit, repr(float(filled[unit - 1]))])
        return path

    def _write_summary_csv(self, out: Path, stats: dict) -> Path:
        path = self._path(out, "summary", "csv")
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["mechanism", "unit", "mean", "se", "n"])
            for mech, s in stats.items():
                for unit in range(1, self.total_units + 1):
                    w.writerow(
                        [mech, unit, repr(float(s["mean"][unit - 1])), repr(float(s["se"][unit - 1])), s["n"]]
                    )
        return path

    def _write_summary_json(self, out: Path, stats: dict) -> Path:
        path = self._path(out, "summary", "json")
        per_mechanism = {}
        for mech, s in stats.items():
            mech_traces = [t for t in self.traces if t.mechanism == mech]
            aucs = [auc(forward_fill(t, self.total_units)) for t in mech_traces]
            ises = [
                v for (m, _), v in sorted(self.ise_values.items()) if m == mech and v is not None
            ]
            undefined = sum(
                1 for (m, _), v in self.ise_values.items() if m == mech and v is None
            )
            per_mechanism[mech] = {
                "final_mean": float(s["mean"][-1]),
                "final_se": float(s["se"][-1]),
                "auc_mean": float(np.mean(aucs)),
                "auc_values": [float(a) for a in aucs],
                "ise_mean": float(np.mean(ises)) if ises else None,
                "ise_undefined_count": undefined,
                "seeds": s["n"],
            }
        payload = {
            "schema_version": 1,
            "config_hash": self.config_hash,
            "total_units": self.total_units,
            "mechanisms": per_mechanism,
        }
        path = self._path(out, "summary", "json")
        with open(path, "w") as fh:
            json.dump(payload, fh, indent=2, sort_keys=True)
            fh.write("\n")
        return path

    def _write_chart(self, out: Path, stats: dict) -> Path:
        import matplotlib

        matplotlib.use("Agg")
        import matplotlib.pyplot as plt

        matplotlib.rcParams["svg.hashsalt"] = self.config_hash
        fig, ax = plt.subplots(figsize=(7, 4.5))
        units = np.arange(1, self.total_units + 1)
        for mech, s in stats.items():
            ax.plot(units, s["mean"], label=mech)
            ax.fill_between(units, s["mean"] - s["se"], s["mean"] + s["se"], alpha=0.2)
        ax.set_xlim(1, self.total_units)
        ax.set_ylim(0.0, 1.0)
        ax.set_xlabel("interaction units")
        ax.set_ylabel("utility ratio")
        ax.legend(loc="lower right", fontsize=8)
        path = self._path(out, "chart", "svg")
        fig.savefig(path, format="svg", metadata={"Date": None})
        plt.close(fig)
        return path
