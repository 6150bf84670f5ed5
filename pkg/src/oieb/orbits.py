"""Long-run behaviour of the period and OIEB maps.

Trajectory engine, attractor classification (fixed point, period-k orbit,
chaos, divergence), Lyapunov estimation, 1D bifurcation scans, the
period-doubling cascade and basin scans.
"""
from __future__ import annotations

import math
from collections import deque
from dataclasses import dataclass, field
from typing import Callable, Optional, Sequence

import numpy as np

from .errors import AlreadyFiredError, DivergentError, DomainError, DynamicsTermination
from .linear import divergence_delta_t, stability_loss_delta_t
from .maps import (
    CycleRecord,
    MapState,
    ModelParams,
    h_s,
    period_of_drive,
    step_oieb,
    step_order_preserving,
    step_period_map,
    synchronous_drive,
)

MAP_KINDS = ("period1d", "order_preserving", "oieb")

DIVERGE_LOW = 1.0 + 1e-12
DIVERGE_HIGH = 1e6
FIXED_POINT_TOL = 1e-9
RECURRENCE_TOL = 1e-8
TRANSIENT = 10_000
OBSERVE = 100_000
MAX_PERIOD = 512
LYAPUNOV_THRESHOLD = 0.01


class InsufficientSamplesError(RuntimeError):
    """Too many Lyapunov steps straddled a discontinuity to trust the average."""


class CascadeTruncated(RuntimeError):
    """A period-doubling onset could not be found before the scan limit."""


def phase_distance(a: float, b: float) -> float:
    """Distance on the unit circle; phases 0 and 1 coincide."""
    d = abs(a - b) % 1.0
    return min(d, 1.0 - d)


def state_distance(x: MapState, y: MapState, relative: bool = True) -> float:
    di = abs(x.i - y.i)
    if relative:
        di /= max(abs(x.i), abs(y.i))
    return max(di, phase_distance(x.phi, y.phi))


def _check_map_kind(map_kind: str) -> None:
    if map_kind not in MAP_KINDS:
        raise ValueError(f"unknown map {map_kind!r}; choose from {MAP_KINDS}")


def make_stepper(map_kind: str, p: ModelParams) -> Callable[[MapState], tuple[MapState, Optional[CycleRecord]]]:
    """Uniform ``state -> (state, record)`` step; raises on termination.

    The 1D map reports every cycle as having one tone; it has no notion of
    order.
    """
    _check_map_kind(map_kind)
    if map_kind == "oieb":
        return lambda s: step_oieb(s, p)

    if map_kind == "period1d":
        def step1(s: MapState) -> tuple[MapState, CycleRecord]:
            t = period_of_drive(s.i, p)
            nxt = s.i + p.delta_t * (t - p.t_stim)
            if nxt <= 1.0:
                err = DivergentError(f"drive fell to {nxt:.6g} <= 1")
                err.state = MapState(nxt, 0.0)
                raise err
            return MapState(nxt, 0.0), CycleRecord(1, s.i, t)
        return step1

    def step2(s: MapState) -> tuple[MapState, None]:
        try:
            nxt = step_order_preserving(s, p)
        except AlreadyFiredError as exc:
            # the spike comes before the tone: alternation is already broken
            err = OrderViolation(str(exc))
            err.state = s
            raise err from None
        if not nxt.in_order():
            err = OrderViolation(f"phase left [0, 1]: {nxt.phi:.6g}")
            err.state = nxt
            raise err
        return nxt, None
    return step2


class OrderViolation(DynamicsTermination):
    """The order-preserving map left its valid phase range."""

    reason = "order violated"


def _diverged(s: MapState) -> bool:
    return not (DIVERGE_LOW < s.i < DIVERGE_HIGH)


@dataclass
class Trajectory:
    states: list[MapState]
    records: list[CycleRecord] = field(default_factory=list)
    termination: Optional[str] = None
    message: str = ""


def iterate(map_kind: str, x0: MapState, p: ModelParams, n: int) -> Trajectory:
    """Up to ``n`` steps from ``x0``; ``states[0]`` is ``x0``.

    Stops early on stall, divergence (drive at or below ``1 + 1e-12`` or
    above ``1e6``) or, for the order-preserving map, when the phase leaves
    [0, 1]. The offending state is not appended.
    """
    step = make_stepper(map_kind, p)
    traj = Trajectory([x0])
    if _diverged(x0):
        raise DomainError(f"initial drive {x0.i!r} outside the map's domain")
    s = x0
    for _ in range(n):
        try:
            s, rec = step(s)
        except DynamicsTermination as exc:
            traj.termination = exc.reason
            traj.message = str(exc)
            if isinstance(exc, DivergentError) and getattr(exc, "record", None):
                traj.records.append(exc.record)
            return traj
        if _diverged(s):
            traj.termination = "divergent"
            traj.message = f"drive {s.i:.6g} outside ({DIVERGE_LOW}, {DIVERGE_HIGH:g})"
            return traj
        traj.states.append(s)
        if rec is not None:
            traj.records.append(rec)
    return traj


# -- attractor classification ---------------------------------------------

@dataclass
class AttractorReport:
    kind: str  # fixed_point | periodic | chaotic | divergent | undecided
    period: int = 0
    order_switches_per_period: int = 0
    bg_spikes_per_period: int = 0
    tones_per_period: int = 0
    lyapunov: float = math.nan
    final_state: Optional[MapState] = None
    orbit: list[MapState] = field(default_factory=list)
    tones_per_cycle: list[int] = field(default_factory=list)
    detail: str = ""


def _synchronous_distance(s: MapState, p: ModelParams, map_kind: str) -> float:
    istar = synchronous_drive(p)
    di = abs(s.i - istar)
    if map_kind == "period1d":
        return di
    return max(di, phase_distance(s.phi, 0.0))


def minimal_period(
    states: Sequence[MapState], max_period: int, tol: float = RECURRENCE_TOL, reps: int = 2
) -> int:
    """Smallest k <= max_period with ``states[n+k] ~ states[n]`` over the tail.

    The recurrence must hold for every ``n`` in the last ``reps * k`` states.
    Returns 0 if none is found.
    """
    n = len(states)
    for k in range(1, max_period + 1):
        span = reps * k
        if span + k > n:
            break
        if all(
            state_distance(states[j], states[j - k]) < tol
            for j in range(n - span, n)
        ):
            return k
    return 0


def classify_attractor(
    map_kind: str,
    x0: MapState,
    p: ModelParams,
    transient: int = TRANSIENT,
    observe: int = OBSERVE,
    max_period: int = MAX_PERIOD,
    lyapunov_threshold: float = LYAPUNOV_THRESHOLD,
) -> AttractorReport:
    """Classify the long-run behaviour from ``x0``.

    Checked in order: divergence, convergence to the synchronous fixed point,
    minimal-period recurrence, positive Lyapunov exponent; otherwise
    ``undecided``.
    """
    step = make_stepper(map_kind, p)
    window = 3 * max_period + 1
    s = x0
    tail: deque[MapState] = deque(maxlen=window)
    recs: deque[Optional[CycleRecord]] = deque(maxlen=window)
    total = transient + observe

    def divergent(msg: str, state: MapState) -> AttractorReport:
        return AttractorReport("divergent", final_state=state, detail=msg)

    checkpoints = {transient, transient + observe // 10, total}
    for n in range(1, total + 1):
        try:
            s, rec = step(s)
        except DynamicsTermination as exc:
            return divergent(f"{exc.reason}: {exc}", getattr(exc, "state", s))
        if _diverged(s):
            return divergent(f"drive {s.i:.6g} left the oscillatory range", s)
        tail.append(s)
        recs.append(rec)
        if n in checkpoints:
            if _synchronous_distance(s, p, map_kind) < FIXED_POINT_TOL:
                return AttractorReport(
                    "fixed_point", period=1, bg_spikes_per_period=1, tones_per_period=1,
                    final_state=s, orbit=[s], tones_per_cycle=[1],
                )
            k = minimal_period(list(tail), max_period)
            if k:
                return _periodic_report(k, list(tail), list(recs), map_kind)

    lyap = lyapunov_exponent(map_kind, s, p, min(observe, 20_000))
    if lyap > lyapunov_threshold:
        return AttractorReport("chaotic", lyapunov=lyap, final_state=s,
                               detail=f"no period <= {max_period}")
    return AttractorReport("undecided", lyapunov=lyap, final_state=s,
                           detail=f"no period <= {max_period}, lyapunov {lyap:.3g}")


def _periodic_report(k: int, tail: list[MapState], recs: list, map_kind: str) -> AttractorReport:
    orbit = tail[-k:]
    if map_kind == "oieb":
        tones = [r.tones_in_cycle for r in recs[-k:]]
    else:
        tones = [1] * k
    return AttractorReport(
        "periodic",
        period=k,
        order_switches_per_period=sum(t != 1 for t in tones),
        bg_spikes_per_period=k,
        tones_per_period=sum(tones),
        final_state=tail[-1],
        orbit=list(orbit),
        tones_per_cycle=tones,
    )


# -- Lyapunov exponent ----------------------------------------------------

def _branch_signature(s: MapState, p: ModelParams, map_kind: str) -> tuple:
    """Which smooth piece of the map ``s`` lies on."""
    if map_kind == "period1d":
        return ()
    side = (s.phi > 0.5) - (s.phi < 0.5)
    if map_kind == "order_preserving":
        return (side,)
    return (side, h_s(s, p))


def lyapunov_exponent(
    map_kind: str,
    x0: MapState,
    p: ModelParams,
    n: int,
    d0: float = 1e-9,
    transient: int = 0,
) -> float:
    """Largest Lyapunov exponent per iterate by the two-trajectory method.

    A companion orbit is kept at distance ``d0`` and renormalised each step.
    Steps where the pair lies on different smooth pieces (either side of
    phi = 0.5, different tone-in-cycle flag, different tone count) are
    skipped and the companion is re-seeded.
    """
    step = make_stepper(map_kind, p)
    x = x0
    for _ in range(transient):
        x, _ = step(x)
    two_d = map_kind != "period1d"
    # unit direction in (i, phi)
    di, dphi = (1.0 / math.sqrt(2.0), 1.0 / math.sqrt(2.0)) if two_d else (1.0, 0.0)

    def companion(base: MapState, ui: float, up: float) -> MapState:
        return MapState(base.i + d0 * ui, (base.phi + d0 * up) % 1.0 if two_d else base.phi)

    y = companion(x, di, dphi)
    total, used = 0.0, 0
    for _ in range(n):
        same_piece = _branch_signature(x, p, map_kind) == _branch_signature(y, p, map_kind)
        x_next, rx = step(x)
        try:
            y_next, ry = step(y)
        except DynamicsTermination:
            y_next, ry, same_piece = None, None, False
        if same_piece and rx is not None and ry is not None:
            same_piece = rx.tones_in_cycle == ry.tones_in_cycle
        if same_piece:
            ei = y_next.i - x_next.i
            ep = 0.0
            if two_d:
                ep = (y_next.phi - x_next.phi + 0.5) % 1.0 - 0.5
            d = math.hypot(ei, ep)
            if d > 0.0:
                total += math.log(d / d0)
                used += 1
                di, dphi = ei / d, ep / d
        x = x_next
        y = companion(x, di, dphi)
    if used < n / 2:
        raise InsufficientSamplesError(f"only {used} of {n} steps were smooth")
    return total / used


# -- 1D cascade machinery -------------------------------------------------

@dataclass(frozen=True)
class MapFamily1D:
    """One-parameter family of smooth 1D maps ``x -> f(x, r)``."""

    name: str
    f: Callable[[float, float], float]
    df: Callable[[float, float], float]
    start: Callable[[float], float]
    valid: Callable[[float, float], bool]


def period_map_family(p: ModelParams) -> MapFamily1D:
    """The period-correction map with ``delta_t`` as the parameter."""
    tau, ts = p.tau, p.t_stim
    istar = synchronous_drive(p)

    def f(x: float, r: float) -> float:
        return x + r * (-tau * math.log1p(-1.0 / x) - ts)

    def df(x: float, r: float) -> float:
        return 1.0 - r * tau / (x * (x - 1.0))

    return MapFamily1D(
        "period1d",
        f,
        df,
        start=lambda r: istar + 0.5 * (istar - 1.0),
        valid=lambda x, r: DIVERGE_LOW < x < DIVERGE_HIGH,
    )


def logistic_family() -> MapFamily1D:
    """``x -> r x (1 - x)``; known cascade used to validate the detector."""
    return MapFamily1D(
        "logistic",
        lambda x, r: r * x * (1.0 - x),
        lambda x, r: r * (1.0 - 2.0 * x),
        start=lambda r: 0.3,
        valid=lambda x, r: 0.0 <= x <= 1.0,
    )


def _polish_cycle(fam: MapFamily1D, r: float, x: float, m: int) -> Optional[tuple[float, float]]:
    """Newton on ``f^m(x) - x``; returns (point, multiplier) or None."""
    for _ in range(100):
        y, mult = x, 1.0
        for _ in range(m):
            mult *= fam.df(y, r)
            y = fam.f(y, r)
            if not fam.valid(y, r):
                return None
        denom = mult - 1.0
        if denom == 0.0:
            return None
        dx = (y - x) / denom
        x -= dx
        if not fam.valid(x, r):
            return None
        if abs(dx) <= 1e-14 * max(1.0, abs(x)):
            break
    y, mult = x, 1.0
    for _ in range(m):
        mult *= fam.df(y, r)
        y = fam.f(y, r)
    if abs(y - x) > 1e-10 * max(1.0, abs(x)):
        return None
    return x, mult


def detect_period_1d(
    fam: MapFamily1D,
    r: float,
    max_period: int = 512,
    transient: int = 2000,
    x0: Optional[float] = None,
) -> int:
    """Period of the attracting cycle at parameter ``r``.

    After a transient, candidate cycles of length 1, 2, 4, ... are polished
    by Newton's method from the current iterate and accepted when their
    multiplier lies inside the unit interval and the period is minimal.
    This does not suffer from critical slowing near a doubling onset.
    Returns -1 if the orbit leaves the domain, 0 if no attracting cycle of
    power-of-two length up to ``max_period`` is found.
    """
    x = fam.start(r) if x0 is None else x0
    for _ in range(transient):
        x = fam.f(x, r)
        if not fam.valid(x, r):
            return -1
    m = 1
    while m <= max_period:
        got = _polish_cycle(fam, r, x, m)
        if got is not None:
            y, mult = got
            if abs(mult) < 1.0 and not _has_shorter_period(fam, r, y, m):
                return m
        m *= 2
    return 0


def _has_shorter_period(fam: MapFamily1D, r: float, y: float, m: int) -> bool:
    z = y
    for d in range(1, m):
        z = fam.f(z, r)
        if m % d == 0 and abs(z - y) <= 1e-9 * max(1.0, abs(y)):
            return True
    return False


@dataclass
class CascadeReport:
    doubling_params: list[float]
    ratios: list[float]  # ratios[j] is F_{j+3}
    family: str = ""

    def ratio(self, k: int) -> float:
        """F_k = (d_{k-1} - d_{k-2}) / (d_k - d_{k-1}), k >= 3."""
        return self.ratios[k - 3]


def feigenbaum_ratios_from_onsets(onsets: Sequence[float]) -> list[float]:
    d = list(onsets)
    return [(d[k - 1] - d[k - 2]) / (d[k] - d[k - 1]) for k in range(2, len(d))]


def _attracting_cycle(fam: MapFamily1D, r: float, m: int, x0: float,
                      transient: int = 4000) -> Optional[tuple[float, float]]:
    """Point and multiplier of an attracting minimal ``m``-cycle reached from ``x0``."""
    x = x0
    for _ in range(transient):
        x = fam.f(x, r)
        if not fam.valid(x, r):
            return None
    got = _polish_cycle(fam, r, x, m)
    if got is None or not abs(got[1]) < 1.0 or _has_shorter_period(fam, r, got[0], m):
        return None
    return got


def find_doubling_onsets(
    fam: MapFamily1D,
    r_start: float,
    r_stop: float,
    k_max: int,
    first_step: float,
    xtol: float = 1e-12,
) -> list[float]:
    """Parameters at which the attracting period goes 2^(k-1) -> 2^k, k = 1..k_max.

    Each onset is bracketed by stepping forward along the period-2^(k-1)
    branch, then refined by bisection on whether that cycle is still
    attracting (multiplier above -1). The cycle is followed by Newton
    continuation from the previous parameter, so the test stays sharp right
    at the onset where iteration converges too slowly to be trusted.
    """
    onsets: list[float] = []
    a = r_start
    half = 1
    got = _attracting_cycle(fam, a, half, fam.start(a))
    if got is None:
        raise CascadeTruncated(f"no attracting fixed point at r={a!r}")
    xa = got[0]
    step = first_step

    def follow(r: float, x: float) -> tuple[str, float]:
        # continue the half-period cycle from x to r: "ok", "lost" (past the
        # onset) or "fail" (Newton did not converge to a minimal cycle)
        res = _polish_cycle(fam, r, x, half)
        if res is None or (half > 1 and _has_shorter_period(fam, r, res[0], half)):
            return "fail", x
        if not res[1] < 1.0:
            return "fail", x
        return ("ok" if res[1] > -1.0 else "lost"), res[0]

    for k in range(1, k_max + 1):
        target = 2 * half
        shrink = 0
        while True:
            b = min(a + step, r_stop)
            status, xb = follow(b, xa)
            if status == "fail" and shrink < 30:
                step *= 0.5
                shrink += 1
                continue
            if status != "ok":
                break
            if b >= r_stop:
                raise CascadeTruncated(f"period-{target} onset not found before r={r_stop}")
            a, xa = b, xb
        while b - a > xtol:
            mid = 0.5 * (a + b)
            if mid <= a or mid >= b:
                break
            status, xm = follow(mid, xa)
            if status == "fail":
                raise CascadeTruncated(f"lost the period-{half} cycle at r={mid!r}")
            if status == "ok":
                a, xa = mid, xm
            else:
                b = mid
        onset = 0.5 * (a + b)
        onsets.append(onset)
        if k == k_max:
            break
        gap = onsets[-1] - onsets[-2] if len(onsets) >= 2 else first_step * 4.0
        step = gap / 8.0

        # settle onto the new branch past the onset, where the new cycle is
        # well separated from the old one (multiplier clear of +1)
        foothold = None
        for j in range(1, 129):
            r = onset + j * gap / 128.0
            if r >= r_stop:
                break
            got = _attracting_cycle(fam, r, target, xa * (1.0 + 1e-6))
            if got is not None and got[1] < 0.5:
                foothold = (r, got[0])
                break
        if foothold is None:
            raise CascadeTruncated(f"no period-{target} parameter found just past r={onset!r}")
        a, xa = foothold
        half = target
    return onsets


def feigenbaum_ratios(p: Optional[ModelParams] = None, k_max: int = 6, family: str = "period1d",
                      xtol: float = 1e-12) -> CascadeReport:
    """Doubling onsets and successive gap ratios for a built-in family.

    ``family="period1d"`` scans ``delta_t`` of the period map at the
    ``tau``/``t_stim`` of ``p``; ``family="logistic"`` scans ``r`` of the
    logistic map.
    """
    if family == "logistic":
        fam = logistic_family()
        onsets = find_doubling_onsets(fam, 2.9, 3.5699456, k_max, first_step=0.05, xtol=xtol)
    elif family == "period1d":
        if p is None:
            raise ValueError("period1d cascade needs model parameters")
        fam = period_map_family(p)
        d1 = stability_loss_delta_t(p)
        stop = divergence_delta_t(p)
        onsets = find_doubling_onsets(fam, 0.9 * d1, stop, k_max, first_step=0.02 * d1, xtol=xtol)
    else:
        raise ValueError(f"unknown family {family!r}")
    return CascadeReport(onsets, feigenbaum_ratios_from_onsets(onsets), fam.name)


# -- 1D bifurcation diagram -----------------------------------------------

@dataclass
class BifurcationDiagram:
    delta_t: np.ndarray
    periods: list[int]  # 0 if no cycle found, -1 if divergent
    samples: list[list[float]]


def bifurcation_scan_1d(
    p: ModelParams,
    delta_t_range: tuple[float, float],
    samples: int,
    transient: int = 2000,
    keep: int = 64,
    max_period: int = 64,
) -> BifurcationDiagram:
    """Attractor of the period map over an evenly spaced delta_t grid."""
    fam = period_map_family(p)
    dts = np.linspace(delta_t_range[0], delta_t_range[1], samples)
    periods, points = [], []
    for dt in dts:
        r = float(dt)
        per = detect_period_1d(fam, r, max_period=max_period, transient=transient)
        periods.append(per)
        if per == -1:
            points.append([])
            continue
        x = fam.start(r)
        for _ in range(transient):
            x = fam.f(x, r)
        pts = []
        for _ in range(keep):
            x = fam.f(x, r)
            if not fam.valid(x, r):
                break
            pts.append(x)
        points.append(pts)
    return BifurcationDiagram(dts, periods, points)


def period_two_orbit(p: ModelParams) -> tuple[float, float]:
    """The period-2 cycle of the period map, as a root of ``f(f(i)) = i``."""
    fam = period_map_family(p)
    got = None
    x = fam.start(p.delta_t)
    for _ in range(2000):
        x = fam.f(x, p.delta_t)
    got = _polish_cycle(fam, p.delta_t, x, 2)
    if got is None:
        raise ArithmeticError("no period-2 cycle found")
    a = got[0]
    return a, step_period_map(a, p)


def tempo_switch_iterations(p: ModelParams, old_t_stim: float, new_t_stim: float,
                            tol: float = 1e-6, budget: int = 100_000) -> int:
    """Period-map steps to get within ``tol`` of the new synchronous drive.

    The map starts synchronized to ``old_t_stim`` and the stimulus period
    then switches to ``new_t_stim``. Returns -1 if the budget runs out or the
    iterate leaves the domain.
    """
    q = p.with_(t_stim=new_t_stim)
    target = synchronous_drive(q)
    i = synchronous_drive(p.with_(t_stim=old_t_stim))
    for n in range(budget + 1):
        if abs(i - target) < tol:
            return n
        i = step_period_map(i, q)
        if not DIVERGE_LOW < i < DIVERGE_HIGH:
            return -1
    return -1


# -- basins ---------------------------------------------------------------

@dataclass
class BasinCell:
    i0: float
    phi0: float
    kind: str
    phase_label: Optional[int]  # 0 or 1 for convergence to the synchronous state
    order_switches: int
    steps: int


def converge(map_kind: str, x0: MapState, p: ModelParams, budget: int = 20_000) -> BasinCell:
    """Iterate until within ``1e-9`` of the synchronous state or the budget runs out.

    The phase label is read from the side of the circle the orbit approaches
    from: phases above 0.5 count as converging to phi = 1.
    """
    step = make_stepper(map_kind, p)
    istar = synchronous_drive(p)
    s = x0
    switches = 0
    for n in range(budget + 1):
        if abs(s.i - istar) < FIXED_POINT_TOL and phase_distance(s.phi, 0.0) < FIXED_POINT_TOL:
            if map_kind == "period1d":
                label = 0
            else:
                label = 1 if s.phi > 0.5 else 0
            return BasinCell(x0.i, x0.phi, "fixed_point", label, switches, n)
        if n == budget:
            break
        try:
            s, rec = step(s)
        except DynamicsTermination as exc:
            return BasinCell(x0.i, x0.phi, exc.reason, None, switches, n + 1)
        if _diverged(s):
            return BasinCell(x0.i, x0.phi, "divergent", None, switches, n + 1)
        if rec is not None and rec.order_switch:
            switches += 1
    return BasinCell(x0.i, x0.phi, "undecided", None, switches, budget)


def basin_scan(
    map_kind: str,
    i_values: Sequence[float],
    phi_values: Sequence[float],
    p: ModelParams,
    budget: int = 20_000,
) -> list[list[BasinCell]]:
    """``cells[row for phi][col for i]`` of :func:`converge` results."""
    return [[converge(map_kind, MapState(float(i), float(phi)), p, budget) for i in i_values]
            for phi in phi_values]
