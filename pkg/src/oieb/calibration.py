"""Check which qualitative orbit labels a choice of ``tau`` reproduces.

Each target names a preset and the long-run behaviour expected of the OIEB
map there. :func:`calibrate` re-runs the classification with ``tau``
replaced and records a pass/fail per target.
"""
from __future__ import annotations

from dataclasses import dataclass
from typing import Callable, Optional, Sequence

from .maps import MapState, ModelParams
from .orbits import AttractorReport, classify_attractor
from .parallel import ordered_map
from .presets import load_presets

# default start for orbit classification; the period-104 orbit is one of
# several coexisting attractors and is reached from this state
DEFAULT_X0 = MapState(2.5, 0.3)


@dataclass(frozen=True)
class Target:
    preset: str
    label: str
    check: Callable[[AttractorReport], bool]


def _is_divergent(r: AttractorReport) -> bool:
    return r.kind == "divergent" and r.final_state is not None and r.final_state.i <= 1.0


TARGETS = (
    Target("fig8b", "period 5, 2 order switches",
           lambda r: r.kind == "periodic" and r.period == 5 and r.order_switches_per_period == 2),
    Target("fig8c", "period 4, 4 spikes / 3 tones",
           lambda r: r.kind == "periodic" and r.period == 4
           and r.bg_spikes_per_period == 4 and r.tones_per_period == 3),
    Target("fig8d", "chaotic", lambda r: r.kind == "chaotic"),
    Target("fig8e", "divergent, drive <= 1", _is_divergent),
    Target("fig8f", "period 104", lambda r: r.kind == "periodic" and r.period == 104),
)


def describe(r: AttractorReport) -> str:
    """Short human-readable summary of a report."""
    if r.kind == "periodic":
        return (f"period {r.period}, {r.order_switches_per_period} order switches, "
                f"{r.bg_spikes_per_period} spikes / {r.tones_per_period} tones")
    if r.kind == "chaotic":
        return f"chaotic, lyapunov {r.lyapunov:.4g}"
    if r.kind == "divergent":
        i = r.final_state.i if r.final_state is not None else float("nan")
        return f"divergent, drive {i:.6g}"
    if r.kind == "fixed_point":
        return "fixed point"
    return f"undecided ({r.detail})"


@dataclass(frozen=True)
class CalibrationRow:
    tau: float
    preset: str
    expected: str
    achieved: str
    kind: str
    period: int
    reproduced: bool


def _run_cell(args: tuple) -> CalibrationRow:
    tau, target_index, params, x0, budget = args
    target = TARGETS[target_index]
    p = ModelParams(**params).with_(tau=tau)
    transient, observe = budget
    report = classify_attractor("oieb", x0, p, transient=transient, observe=observe)
    return CalibrationRow(tau, target.preset, target.label, describe(report), report.kind,
                          report.period, bool(target.check(report)))


def calibrate(
    taus: Sequence[float],
    x0: MapState = DEFAULT_X0,
    presets_path: Optional[str] = None,
    transient: int = 10_000,
    observe: int = 100_000,
    workers: Optional[int] = None,
) -> list[CalibrationRow]:
    """One row per (tau, target), ordered by tau then target."""
    table = load_presets(presets_path)
    cells = [
        (float(tau), k, table[t.preset], x0, (transient, observe))
        for tau in taus
        for k, t in enumerate(TARGETS)
    ]
    return ordered_map(_run_cell, cells, workers)
