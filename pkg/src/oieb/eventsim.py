"""Continuous-time, event-driven simulation of the beat generator.

Between events the LIF equation is solved in closed form, so event times
are exact up to rounding. Tones are placed on an isochronous grid computed
by multiplication from the origin (no accumulated drift). Phase correction
fires at the first tone of each cycle, period correction at every spike.

This module deliberately does not call the map step functions; it works on
absolute clock times and serves as an independent check of them.
"""
from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Optional

from .errors import DivergentError, DomainError, DynamicsTermination, StalledError
from .maps import CycleRecord, MapState, ModelParams, phase_increment

__all__ = [
    "Event",
    "EventTrace",
    "ToneSchedule",
    "next_spike_time",
    "simulate",
    "trace_to_map_states",
]

# Spike and tone closer than this are treated as simultaneous; the spike is
# processed first, so the tone opens the new cycle at phase 0.
COINCIDENCE_MS = 1e-9


@dataclass(frozen=True)
class Event:
    time: float
    kind: str  # "bg_spike" or "tone"
    i_before: float
    i_after: float
    v: float


@dataclass(frozen=True)
class ToneSchedule:
    """Isochronous tones at ``t0 + k * t_stim``, optionally switching period.

    With a switch, tones stay on the old grid up to and including the first
    old-grid tone at or after ``switch_time``; from that tone on the spacing
    is ``new_t_stim``.
    """

    t0: float
    t_stim: float
    switch_time: Optional[float] = None
    new_t_stim: Optional[float] = None

    def __post_init__(self) -> None:
        if self.t_stim <= 0:
            raise DomainError("t_stim must be positive")
        if (self.switch_time is None) != (self.new_t_stim is None):
            raise DomainError("switch_time and new_t_stim go together")
        if self.new_t_stim is not None and self.new_t_stim <= 0:
            raise DomainError("new_t_stim must be positive")

    @property
    def _last_old_index(self) -> Optional[int]:
        if self.switch_time is None:
            return None
        return max(0, math.ceil((self.switch_time - self.t0) / self.t_stim))

    def time(self, k: int) -> float:
        last = self._last_old_index
        if last is None or k <= last:
            return self.t0 + k * self.t_stim
        return (self.t0 + last * self.t_stim) + (k - last) * self.new_t_stim

    def period_at(self, t: float) -> float:
        """Interonset interval in force at clock time ``t``."""
        if self.switch_time is None or t < self.switch_time:
            return self.t_stim
        return self.new_t_stim

    def first_index_at_or_after(self, t: float) -> int:
        """Index of the first tone not earlier than ``t - COINCIDENCE_MS``."""
        k = max(0, math.floor((t - self.t0) / self.t_stim) - 1)
        last = self._last_old_index
        if last is not None and k > last:
            k = last
        while self.time(k) < t - COINCIDENCE_MS:
            k += 1
        while k > 0 and self.time(k - 1) >= t - COINCIDENCE_MS:
            k -= 1
        return k


@dataclass
class EventTrace:
    events: list[Event]
    cycles: list[CycleRecord]
    params: ModelParams
    schedule: ToneSchedule
    termination: Optional[str] = None

    @property
    def spikes(self) -> list[Event]:
        return [e for e in self.events if e.kind == "bg_spike"]

    @property
    def tones(self) -> list[Event]:
        return [e for e in self.events if e.kind == "tone"]


def next_spike_time(v0: float, i: float, p: ModelParams) -> float:
    """Time for the membrane to climb from ``v0`` to threshold at drive ``i``."""
    if v0 >= 1.0:
        return 0.0
    if i <= 1.0:
        raise StalledError(f"drive {i:.6g} <= 1: never fires")
    return p.tau * math.log((i - v0) / (i - 1.0))


def simulate(
    x0: MapState,
    p: ModelParams,
    n_cycles: int,
    t0: Optional[float] = None,
    tempo_change: Optional[tuple[float, float]] = None,
) -> EventTrace:
    """Run the beat generator against the tone sequence for ``n_cycles`` cycles.

    The initial spike is at time 0 and the first tone at ``t0``, which
    defaults to ``x0.phi * t_stim`` so the trace starts in state ``x0``.
    ``tempo_change=(t_switch, new_t_stim)`` switches the stimulus period;
    both learning rules use the period in force at the time.

    Raises
    ------
    StalledError, DivergentError
        With ``exc.trace`` holding the trace up to termination.
    """
    if not x0.i > 1.0:
        raise DomainError(f"initial drive must exceed 1, got {x0.i!r}")
    if t0 is None:
        if not 0.0 <= x0.phi < 1.0:
            raise DomainError(f"initial phase must lie in [0, 1), got {x0.phi!r}")
        t0 = x0.phi * p.t_stim
    if tempo_change is None:
        schedule = ToneSchedule(t0, p.t_stim)
    else:
        schedule = ToneSchedule(t0, p.t_stim, *tempo_change)

    tau = p.tau
    i = x0.i
    events = [Event(0.0, "bg_spike", i, i, 1.0)]
    cycles: list[CycleRecord] = []
    trace = EventTrace(events, cycles, p, schedule)

    t_spike = 0.0
    t_ref, v_ref = 0.0, 0.0  # voltage anchor for the closed-form solution
    k = schedule.first_index_at_or_after(0.0)
    tones_in_cycle = 0
    i_temp = i

    def fail(exc: DynamicsTermination) -> DynamicsTermination:
        trace.termination = exc.reason
        exc.trace = trace
        return exc

    while len(cycles) < n_cycles:
        t_tone = schedule.time(k)
        try:
            t_fire = t_ref + next_spike_time(v_ref, i, p)
        except StalledError as exc:
            raise fail(exc) from None

        if t_tone < t_fire - COINCIDENCE_MS:
            v = i + (v_ref - i) * math.exp(-(t_tone - t_ref) / tau)
            i_before = i
            if tones_in_cycle == 0:
                phi = (t_tone - t_spike) / schedule.period_at(t_tone)
                phi = min(max(phi, 0.0), 1.0)
                i = i + p.delta_phi * phase_increment(phi)
                i_temp = i
                t_ref, v_ref = t_tone, v
                if i <= 1.0 or i <= v:
                    events.append(Event(t_tone, "tone", i_before, i, v))
                    raise fail(StalledError(
                        f"drive {i:.6g} after phase correction cannot reach threshold"
                    ))
            events.append(Event(t_tone, "tone", i_before, i, v))
            tones_in_cycle += 1
            k += 1
            continue

        # spike: measure the interval, apply the period rule, reset
        isi = t_fire - t_spike
        if tones_in_cycle == 0:
            i_temp = i
        i_before = i
        i = i + p.delta_t * (isi - schedule.period_at(t_fire))
        events.append(Event(t_fire, "bg_spike", i_before, i, 1.0))
        cycles.append(CycleRecord(tones_in_cycle, i_temp, isi))
        if i <= 1.0:
            raise fail(DivergentError(f"drive fell to {i:.6g} <= 1"))
        t_spike = t_fire
        t_ref, v_ref = t_fire, 0.0
        tones_in_cycle = 0

    return trace


def trace_to_map_states(trace: EventTrace) -> list[MapState]:
    """Cycle-start states ``(i, phi)`` read off each spike of the trace.

    ``phi`` is the time to the next tone divided by the stimulus period,
    reduced to [0, 1).
    """
    sched = trace.schedule
    states = []
    for ev in trace.spikes:
        k = sched.first_index_at_or_after(ev.time)
        phi = (sched.time(k) - ev.time) / sched.period_at(ev.time)
        phi = min(max(phi, 0.0), 1.0) % 1.0
        states.append(MapState(ev.i_after, phi))
    return states
