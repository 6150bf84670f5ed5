"""Linear stability of the synchronous fixed points and its parameter-plane maps.

Both fixed points of the order-preserving map sit at ``(i*, 0)`` and
``(i*, 1)`` with ``i* = drive_of_period(t_stim)``. Writing ``g = dT/dI`` at
``i*`` and

    s = (delta_t + delta_phi * (1 - phi*) / t_stim) * g
    c = delta_phi * g / t_stim

the Jacobian has trace ``2 + s`` and determinant ``1 + s - c``, so

    lambda = 1 + s/2 +- sqrt(s**2 + 4*c) / 2.

Every boundary traced here is a zero of one of the scalar functions built
from ``s`` and ``c`` (see :data:`BOUNDARY_KINDS`).
"""
from __future__ import annotations

import cmath
import math
from dataclasses import dataclass
from typing import Callable, Optional, Sequence

import numpy as np
from scipy.optimize import brentq

from .errors import DomainError
from .maps import (
    MapState,
    ModelParams,
    derivative_period_map,
    local_min_drive,
    step_order_preserving,
    step_period_map,
    synchronous_drive,
)

STABLE_NODE = "stable node"
STABLE_SPIRAL = "stable spiral"
UNSTABLE_NODE = "unstable node"
UNSTABLE_SPIRAL = "unstable spiral"
NON_HYPERBOLIC = "non-hyperbolic"

NON_HYPERBOLIC_BAND = 1e-10

# (class at phi* = 0, class at phi* = 1) -> region
REGION_TABLE = {
    (STABLE_NODE, STABLE_NODE): "I",
    (STABLE_NODE, STABLE_SPIRAL): "II",
    (STABLE_SPIRAL, STABLE_SPIRAL): "III",
    (STABLE_SPIRAL, UNSTABLE_SPIRAL): "IV",
    (STABLE_NODE, UNSTABLE_SPIRAL): "V",
    (UNSTABLE_NODE, UNSTABLE_SPIRAL): "VI",
    (UNSTABLE_NODE, STABLE_SPIRAL): "VII",
    (UNSTABLE_NODE, STABLE_NODE): "VIII",
    (UNSTABLE_NODE, UNSTABLE_NODE): "IX",
}
REGIONS = tuple(REGION_TABLE.values())


class NoCrossingError(ValueError):
    """The boundary condition has no root on any scan line of the window."""


@dataclass(frozen=True)
class StabilityReport:
    fixed_point: MapState
    eigenvalues: tuple[complex, complex]
    stability_class: str

    @property
    def spectral_radius(self) -> float:
        return max(abs(z) for z in self.eigenvalues)


@dataclass(frozen=True)
class RegionLabel:
    region: Optional[str]
    class_phi0: str
    class_phi1: str

    @property
    def flagged(self) -> bool:
        """Signature missing from the region table (usually a cell sitting on a boundary)."""
        return self.region is None


@dataclass(frozen=True)
class BoundaryCurve:
    kind: str
    points: list[tuple[float, float]]  # (delta_t, delta_phi), sorted by delta_t
    t_stim: float
    tau: float


@dataclass
class RegionGrid:
    delta_t: np.ndarray
    delta_phi: np.ndarray
    labels: list[list[RegionLabel]]  # labels[row for delta_phi][col for delta_t]

    def signatures(self, include_flagged: bool = False) -> set[tuple[str, str]]:
        return {
            (lab.class_phi0, lab.class_phi1)
            for row in self.labels
            for lab in row
            if include_flagged or not lab.flagged
        }

    def regions(self) -> set[str]:
        return {lab.region for row in self.labels for lab in row if lab.region}

    def flagged_count(self) -> int:
        return sum(lab.flagged for row in self.labels for lab in row)


def g_of_i(i: float, p: ModelParams) -> float:
    """Slope ``dT/dI = -tau / (i (i - 1))`` of the period-drive relation."""
    if not i > 1.0:
        raise DomainError(f"drive must exceed 1, got {i!r}")
    return -p.tau / (i * (i - 1.0))


def _s_and_c(phi_star: int, p: ModelParams) -> tuple[float, float]:
    if phi_star not in (0, 1):
        raise ValueError(f"fixed point phase must be 0 or 1, got {phi_star!r}")
    g = g_of_i(synchronous_drive(p), p)
    s = (p.delta_t + p.delta_phi * (1 - phi_star) / p.t_stim) * g
    c = p.delta_phi * g / p.t_stim
    return s, c


def jacobian_at_fixed_point(phi_star: int, p: ModelParams) -> np.ndarray:
    """Analytic Jacobian of the order-preserving map at ``(i*, phi_star)``."""
    g = g_of_i(synchronous_drive(p), p)
    a = p.delta_t * g
    w = 1 - phi_star
    return np.array(
        [
            [1.0 + a, -p.delta_phi * (1.0 + a * w)],
            [-g / p.t_stim, 1.0 + p.delta_phi * g * w / p.t_stim],
        ]
    )


def eigenvalues_at_fixed_point(phi_star: int, p: ModelParams) -> tuple[complex, complex]:
    """Closed-form ``(lambda_plus, lambda_minus)`` at ``(i*, phi_star)``."""
    s, c = _s_and_c(phi_star, p)
    root = cmath.sqrt(s * s + 4.0 * c)
    base = 1.0 + 0.5 * s
    return complex(base + 0.5 * root), complex(base - 0.5 * root)


def finite_difference_jacobian(
    step: Callable[[MapState, ModelParams], MapState],
    x: MapState,
    p: ModelParams,
    rel_step: float = 1e-5,
    sides: tuple[int, int] = (0, 0),
    scales: Optional[tuple[float, float]] = None,
) -> np.ndarray:
    """Numerical Jacobian of a 2D map step at ``x``.

    ``sides`` picks the stencil per coordinate: 0 centred, +1 forward, -1
    backward (one-sided stencils are second order). One-sided stencils keep
    the evaluation points inside the map's domain at phi = 0 or 1. The step
    along coordinate k is ``rel_step * scales[k]``.
    """
    base = np.array([x.i, x.phi])
    if scales is None:
        # the maps blow up as i -> 1, so the drive step shrinks with i - 1
        scales = (min(abs(x.i), abs(x.i - 1.0)), 1.0)
    jac = np.empty((2, 2))

    def f(v: np.ndarray) -> np.ndarray:
        out = step(MapState(float(v[0]), float(v[1])), p)
        return np.array([out.i, out.phi])

    for k in range(2):
        h = rel_step * scales[k]
        e = np.zeros(2)
        e[k] = h
        if sides[k] == 0:
            col = (f(base + e) - f(base - e)) / (2 * h)
        else:
            d = sides[k]
            col = d * (-3 * f(base) + 4 * f(base + d * e) - f(base + 2 * d * e)) / (2 * h)
        jac[:, k] = col
    return jac


def fixed_point_fd_jacobian(phi_star: int, p: ModelParams, rel_step: float = 1e-5) -> np.ndarray:
    """Finite-difference Jacobian of the order-preserving map at a fixed point.

    At phi* = 1 the map is only defined for i <= i* (a larger drive fires
    before the tone), so both stencils point backwards there.
    """
    x = MapState(synchronous_drive(p), float(phi_star))
    sides = (0, 1) if phi_star == 0 else (-1, -1)
    # phi enters through exp(-t_stim * phi / tau); scale that step to match
    scales = (min(x.i, x.i - 1.0), min(1.0, p.tau / p.t_stim))
    coarse = finite_difference_jacobian(step_order_preserving, x, p, rel_step, sides, scales)
    fine = finite_difference_jacobian(step_order_preserving, x, p, rel_step / 2, sides, scales)
    # Richardson extrapolation cancels the leading h^2 error term
    return (4.0 * fine - coarse) / 3.0


def _classify_eigenvalues(eigs: Sequence[complex], radicand: float) -> str:
    radius = max(abs(z) for z in eigs)
    if abs(radius - 1.0) < NON_HYPERBOLIC_BAND:
        return NON_HYPERBOLIC
    stable = radius < 1.0
    if radicand < 0:
        return STABLE_SPIRAL if stable else UNSTABLE_SPIRAL
    return STABLE_NODE if stable else UNSTABLE_NODE


def classify_jacobian(jac: np.ndarray) -> str:
    """Stability class of a 2x2 Jacobian, e.g. a finite-difference one."""
    tr = float(jac[0, 0] + jac[1, 1])
    det = float(jac[0, 0] * jac[1, 1] - jac[0, 1] * jac[1, 0])
    return _classify_eigenvalues(tuple(np.linalg.eigvals(jac)), tr * tr - 4.0 * det)


def classify_fixed_point(phi_star: int, p: ModelParams) -> StabilityReport:
    s, c = _s_and_c(phi_star, p)
    eigs = eigenvalues_at_fixed_point(phi_star, p)
    cls = _classify_eigenvalues(eigs, s * s + 4.0 * c)
    return StabilityReport(MapState(synchronous_drive(p), float(phi_star)), eigs, cls)


def region_label(p: ModelParams) -> RegionLabel:
    c0 = classify_fixed_point(0, p).stability_class
    c1 = classify_fixed_point(1, p).stability_class
    return RegionLabel(REGION_TABLE.get((c0, c1)), c0, c1)


def period_map_stable(p: ModelParams) -> bool:
    """Sign test on the 1D period-map slope at its fixed point."""
    return abs(derivative_period_map(synchronous_drive(p), p)) < 1.0


def cell_centres(lo: float, hi: float, n: int) -> np.ndarray:
    width = (hi - lo) / n
    return lo + width * (np.arange(n) + 0.5)


def region_map(
    window: tuple[tuple[float, float], tuple[float, float]],
    resolution: tuple[int, int],
    p: ModelParams,
) -> RegionGrid:
    """Label a grid over ``((dt_lo, dt_hi), (dphi_lo, dphi_hi))`` by stability region.

    Cells are sampled at their centres; ``resolution`` is ``(n_dt, n_dphi)``.
    """
    (dt_lo, dt_hi), (dp_lo, dp_hi) = window
    if dt_lo < 0 or dp_lo < 0 or dt_hi <= dt_lo or dp_hi <= dp_lo:
        raise ValueError(f"window must be a non-empty box in the positive quadrant: {window}")
    dts = cell_centres(dt_lo, dt_hi, resolution[0])
    dps = cell_centres(dp_lo, dp_hi, resolution[1])
    labels = [
        [region_label(p.with_(delta_t=float(dt), delta_phi=float(dp))) for dt in dts]
        for dp in dps
    ]
    return RegionGrid(dts, dps, labels)


# -- boundary tracing ------------------------------------------------------

def _lambda_minus_one(phi_star: int) -> Callable[[ModelParams], float]:
    def residual(p: ModelParams) -> float:
        s, c = _s_and_c(phi_star, p)
        return 4.0 + 2.0 * s - c  # characteristic polynomial at -1

    return residual


def _unit_modulus(phi_star: int) -> Callable[[ModelParams], float]:
    def residual(p: ModelParams) -> float:
        s, c = _s_and_c(phi_star, p)
        return s - c  # determinant - 1

    return residual


def _discriminant(phi_star: int) -> Callable[[ModelParams], float]:
    def residual(p: ModelParams) -> float:
        s, c = _s_and_c(phi_star, p)
        return s * s + 4.0 * c

    return residual


BOUNDARY_KINDS: dict[str, tuple[Callable[[ModelParams], float], int]] = {
    "lambda_minus_one_phi0": (_lambda_minus_one(0), 0),
    "lambda_minus_one_phi1": (_lambda_minus_one(1), 1),
    "unit_modulus_phi1": (_unit_modulus(1), 1),
    "discriminant_zero_phi0": (_discriminant(0), 0),
    "discriminant_zero_phi1": (_discriminant(1), 1),
}


def boundary_residual(kind: str, p: ModelParams) -> float:
    return BOUNDARY_KINDS[kind][0](p)


def bisect(f: Callable[[float], float], lo: float, hi: float, xtol: float = 0.0) -> float:
    """Bisection on a sign change, run until the bracket stops shrinking."""
    flo = f(lo)
    if flo == 0.0:
        return lo
    fhi = f(hi)
    if fhi == 0.0:
        return hi
    if (flo > 0) == (fhi > 0):
        raise ValueError("bisect needs a sign change")
    while True:
        mid = 0.5 * (lo + hi)
        if mid <= lo or mid >= hi or hi - lo <= xtol:
            return lo if abs(flo) <= abs(fhi) else hi
        fm = f(mid)
        if fm == 0.0:
            return mid
        if (fm > 0) == (flo > 0):
            lo, flo = mid, fm
        else:
            hi, fhi = mid, fm


def _roots_on_line(f: Callable[[float], float], grid: np.ndarray) -> list[float]:
    vals = [f(float(x)) for x in grid]
    roots = []
    for k in range(len(grid) - 1):
        a, b = vals[k], vals[k + 1]
        if a == 0.0:
            roots.append(float(grid[k]))
        elif (a > 0) != (b > 0) and b != 0.0:
            roots.append(bisect(f, float(grid[k]), float(grid[k + 1])))
    if vals and vals[-1] == 0.0:
        roots.append(float(grid[-1]))
    return roots


def trace_boundary(
    kind: str,
    window: tuple[tuple[float, float], tuple[float, float]],
    p: ModelParams,
    resolution: int = 200,
) -> BoundaryCurve:
    """Points of the ``kind`` boundary inside the (delta_t, delta_phi) window.

    Roots are bracketed on axis-parallel scan lines (both families, including
    the window edges) and refined by bisection to full precision. The
    ``unit_modulus`` kind keeps only points where the eigenvalues are complex.
    """
    if kind not in BOUNDARY_KINDS:
        raise ValueError(f"unknown boundary kind {kind!r}; choose from {sorted(BOUNDARY_KINDS)}")
    residual, phi_star = BOUNDARY_KINDS[kind]
    (dt_lo, dt_hi), (dp_lo, dp_hi) = window
    dts = np.linspace(dt_lo, dt_hi, resolution + 1)
    dps = np.linspace(dp_lo, dp_hi, resolution + 1)

    points = set()
    for dp in dps:
        q = p.with_(delta_phi=float(dp))
        for dt in _roots_on_line(lambda x: residual(q.with_(delta_t=x)), dts):
            points.add((dt, float(dp)))
    for dt in dts:
        q = p.with_(delta_t=float(dt))
        for dp in _roots_on_line(lambda y: residual(q.with_(delta_phi=y)), dps):
            points.add((float(dt), dp))

    if kind.startswith("unit_modulus"):
        disc = _discriminant(phi_star)
        points = {
            pt for pt in points
            if disc(p.with_(delta_t=pt[0], delta_phi=pt[1])) < 0
        }
    if not points:
        raise NoCrossingError(f"{kind}: no crossing in window {window}")
    return BoundaryCurve(kind, sorted(points), p.t_stim, p.tau)


# -- 1D period map ---------------------------------------------------------

def stability_loss_delta_t(p: ModelParams) -> float:
    """delta_t at which the 1D map's slope at its fixed point reaches -1."""
    i = synchronous_drive(p)
    return 2.0 * i * (i - 1.0) / p.tau


def optimal_delta_t(p: ModelParams) -> float:
    """delta_t giving zero slope at the fixed point (fastest convergence)."""
    i = synchronous_drive(p)
    return i * (i - 1.0) / p.tau


def _min_excess(dt: float, p: ModelParams) -> float:
    q = p.with_(delta_t=dt)
    return step_period_map(local_min_drive(q), q) - 1.0


def divergence_delta_t(p: ModelParams) -> float:
    """delta_t at which the minimum of the 1D map touches 1."""
    lo = stability_loss_delta_t(p)
    if _min_excess(lo, p) <= 0:
        raise ArithmeticError("map minimum already below 1 at the stability bound")
    hi = 2.0 * lo
    for _ in range(200):
        if _min_excess(hi, p) < 0:
            break
        lo, hi = hi, 2.0 * hi
    else:
        raise ArithmeticError("no divergence bound found")
    return brentq(_min_excess, lo, hi, args=(p,), xtol=1e-16, rtol=1e-15, maxiter=500)


@dataclass
class CriticalCurves:
    t_stim: np.ndarray
    stability_loss: np.ndarray
    optimal: np.ndarray
    divergence: np.ndarray
    failures: dict[float, str]


def critical_delta_curves_1d(t_stims: Sequence[float], p: ModelParams) -> CriticalCurves:
    """Stability-loss, optimal and divergence delta_t as functions of t_stim."""
    ts = np.asarray(t_stims, dtype=float)
    if np.any(ts <= 0):
        raise ValueError("stimulus periods must be positive")
    loss, opt, div = [], [], []
    failures = {}
    for t in ts:
        q = p.with_(t_stim=float(t))
        loss.append(stability_loss_delta_t(q))
        opt.append(optimal_delta_t(q))
        try:
            div.append(divergence_delta_t(q))
        except (ArithmeticError, ValueError, RuntimeError) as exc:
            failures[float(t)] = str(exc)
            div.append(math.nan)
    return CriticalCurves(ts, np.array(loss), np.array(opt), np.array(div), failures)
