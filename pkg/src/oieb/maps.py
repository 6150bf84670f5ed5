"""Closed-form LIF quantities and the three error-correction map steps.

The beat generator obeys ``v' = (I - v) / tau`` with threshold 1 and reset
to 0. Everything here is evaluated analytically; there is no ODE solver.

Conventions
-----------
* ``sgn(0) = 0``, so the phase rule applies no correction at phase 0.5.
* ``Theta(0) = 1`` in the tone-in-cycle indicator.
* A tone that coincides exactly with a cycle-starting spike (phase 0)
  belongs to that cycle and contributes zero phase correction.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, replace

from .errors import AlreadyFiredError, DivergentError, DomainError, StalledError

__all__ = [
    "ModelParams",
    "MapState",
    "CycleRecord",
    "period_of_drive",
    "drive_of_period",
    "synchronous_drive",
    "local_min_drive",
    "step_period_map",
    "derivative_period_map",
    "phase_increment",
    "voltage_at_tone",
    "cycle_period",
    "step_order_preserving",
    "h_s",
    "step_oieb",
]

# slack on the threshold check; v = I*(1 - exp(-T/tau)) may land one ulp above 1
_THRESHOLD_SLACK = 1e-12


@dataclass(frozen=True)
class ModelParams:
    """Time constant, stimulus period and the two learning-rule strengths.

    Times are in ms, ``delta_t`` in drive units per ms, ``delta_phi`` in
    drive units.
    """

    tau: float
    t_stim: float
    delta_t: float
    delta_phi: float

    def __post_init__(self) -> None:
        for name in ("tau", "t_stim", "delta_t", "delta_phi"):
            value = getattr(self, name)
            if not isinstance(value, (int, float)) or not math.isfinite(value):
                raise DomainError(f"{name} must be a finite number, got {value!r}")
        if self.tau <= 0:
            raise DomainError(f"tau must be > 0, got {self.tau}")
        if self.t_stim <= 0:
            raise DomainError(f"t_stim must be > 0, got {self.t_stim}")
        if self.delta_t < 0:
            raise DomainError(f"delta_t must be >= 0, got {self.delta_t}")
        if self.delta_phi < 0:
            raise DomainError(f"delta_phi must be >= 0, got {self.delta_phi}")

    def with_(self, **changes: float) -> "ModelParams":
        return replace(self, **changes)

    def as_dict(self) -> dict[str, float]:
        return {
            "tau": self.tau,
            "t_stim": self.t_stim,
            "delta_t": self.delta_t,
            "delta_phi": self.delta_phi,
        }


@dataclass(frozen=True)
class MapState:
    """Drive ``i`` and phase ``phi`` at the start of a cycle.

    The 1D period map ignores ``phi``.
    """

    i: float
    phi: float = 0.0

    def in_order(self) -> bool:
        """True while the order-preserving contract 0 <= phi <= 1 holds."""
        return 0.0 <= self.phi <= 1.0


@dataclass(frozen=True)
class CycleRecord:
    tones_in_cycle: int
    i_temp: float
    t_n: float

    @property
    def order_switch(self) -> bool:
        return self.tones_in_cycle != 1


def _check_drive(i: float) -> None:
    if not i > 1.0:
        raise DomainError(f"drive must exceed 1 for oscillation, got {i!r}")


def period_of_drive(i: float, p: ModelParams) -> float:
    """Interspike interval ``tau * ln(i / (i - 1))`` of the free-running LIF."""
    _check_drive(i)
    return -p.tau * math.log1p(-1.0 / i)


def drive_of_period(t: float, p: ModelParams) -> float:
    """Inverse of :func:`period_of_drive`: ``1 / (1 - exp(-t / tau))``."""
    if not t > 0:
        raise DomainError(f"period must be positive, got {t!r}")
    return -1.0 / math.expm1(-t / p.tau)


def synchronous_drive(p: ModelParams) -> float:
    """Drive whose free period equals the stimulus period."""
    return drive_of_period(p.t_stim, p)


def local_min_drive(p: ModelParams) -> float:
    """Location of the minimum of the 1D period map."""
    return 0.5 * (1.0 + math.sqrt(1.0 + 4.0 * p.tau * p.delta_t))


def step_period_map(i: float, p: ModelParams) -> float:
    """One step of the 1D period-correction map.

    The result may be <= 1 (the iterate escaped the domain); callers that
    iterate must check it.
    """
    return i + p.delta_t * (period_of_drive(i, p) - p.t_stim)


def derivative_period_map(i: float, p: ModelParams) -> float:
    _check_drive(i)
    return 1.0 - p.delta_t * p.tau / (i * (i - 1.0))


def phase_increment(phi: float) -> float:
    """Phase-rule increment ``sgn(phi - 0.5) * phi * (1 - phi)``.

    Negative before mid-cycle (slow down), positive after (speed up), zero at
    0, 0.5 and 1.
    """
    if not 0.0 <= phi <= 1.0:
        raise DomainError(f"phase must lie in [0, 1], got {phi!r}")
    if phi < 0.5:
        return -phi * (1.0 - phi)
    if phi > 0.5:
        return phi * (1.0 - phi)
    return 0.0


def voltage_at_tone(s: MapState, p: ModelParams) -> float:
    """Membrane value when the tone arrives ``phi * t_stim`` after reset."""
    _check_drive(s.i)
    if not 0.0 <= s.phi <= 1.0:
        raise DomainError(f"phase must lie in [0, 1], got {s.phi!r}")
    v = -s.i * math.expm1(-p.t_stim * s.phi / p.tau)
    if v > 1.0 + _THRESHOLD_SLACK:
        raise AlreadyFiredError(
            f"beat generator fires before the tone (v would be {v:.6g} > 1)"
        )
    return v


def _phase_corrected_period(s: MapState, p: ModelParams) -> tuple[float, float]:
    """Return ``(i_temp, t_n)`` for a cycle whose first tone is at ``phi``."""
    v = voltage_at_tone(s, p)
    i_temp = s.i + p.delta_phi * phase_increment(s.phi)
    if i_temp <= 1.0 or i_temp <= v:
        err = StalledError(
            f"drive {i_temp:.6g} after phase correction cannot reach threshold"
        )
        err.state = MapState(i_temp, s.phi)
        raise err
    t_n = s.phi * p.t_stim + p.tau * math.log((i_temp - v) / (i_temp - 1.0))
    return i_temp, t_n


def cycle_period(s: MapState, p: ModelParams) -> float:
    """Realized spike-to-spike interval of a cycle containing a tone."""
    return _phase_corrected_period(s, p)[1]


def step_order_preserving(s: MapState, p: ModelParams) -> MapState:
    """One step of the order-preserving 2D map.

    No modulo is applied to the phase. A returned phase outside [0, 1]
    (see :meth:`MapState.in_order`) means the spike/tone alternation broke
    and the OIEB step must be used instead.
    """
    i_temp, t_n = _phase_corrected_period(s, p)
    i_next = i_temp + p.delta_t * (t_n - p.t_stim)
    phi_next = s.phi + (p.t_stim - t_n) / p.t_stim
    return MapState(i_next, phi_next)


def h_s(s: MapState, p: ModelParams) -> int:
    """1 if a tone arrives before the free-running spike, else 0."""
    return 1 if period_of_drive(s.i, p) >= p.t_stim * s.phi else 0


def step_oieb(s: MapState, p: ModelParams) -> tuple[MapState, CycleRecord]:
    """One cycle of the order-indeterminant event-based map.

    Raises
    ------
    StalledError
        Phase correction pushed the drive below threshold mid-cycle.
    DivergentError
        The post-cycle drive is <= 1; ``exc.state`` holds the offending state.
    """
    _check_drive(s.i)
    if not 0.0 <= s.phi < 1.0:
        raise DomainError(f"OIEB phase must lie in [0, 1), got {s.phi!r}")

    tone_in_cycle = h_s(s, p)
    if tone_in_cycle:
        i_temp, t_n = _phase_corrected_period(s, p)
    else:
        # no tone this cycle: the drive runs free and no phase rule fires
        i_temp, t_n = s.i, period_of_drive(s.i, p)

    i_next = i_temp + p.delta_t * (t_n - p.t_stim)
    pre_mod = s.phi + (p.t_stim - t_n) / p.t_stim
    tones = 1 + max(0, -math.floor(pre_mod)) if tone_in_cycle else 0
    phi_next = pre_mod % 1.0
    if phi_next >= 1.0:
        # -tiny % 1.0 rounds up to 1.0
        phi_next = 0.0

    record = CycleRecord(tones, i_temp, t_n)
    nxt = MapState(i_next, phi_next)
    if i_next <= 1.0:
        err = DivergentError(f"drive fell to {i_next:.6g} <= 1")
        err.state = nxt
        err.record = record
        raise err
    return nxt, record
