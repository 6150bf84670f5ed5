import math

import pytest

from oieb.errors import DynamicsTermination
from oieb.eventsim import simulate, trace_to_map_states
from oieb.maps import MapState, ModelParams, step_oieb

ACCEPTANCE_LINES: list[str] = []


def record_acceptance(number: int, passed: bool, text: str) -> None:
    line = f"ACCEPTANCE {number:>2} {'PASS' if passed else 'FAIL'}: {text}"
    ACCEPTANCE_LINES.append(line)
    print(line)


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in sorted(ACCEPTANCE_LINES):
            terminalreporter.write_line(line)


def component_error(a: MapState, b: MapState) -> float:
    """Relative drive error and circular phase error, whichever is larger."""
    di = abs(a.i - b.i) / max(abs(a.i), abs(b.i))
    dp = abs(a.phi - b.phi) % 1.0
    return max(di, min(dp, 1.0 - dp))


def oracle_mismatch(x0: MapState, p: ModelParams, n_cycles: int) -> float:
    """Worst per-cycle disagreement between iterated step_oieb and the simulator.

    Returns inf when the two disagree on how many cycles complete or on the
    termination reason.
    """
    states, s, map_reason = [x0], x0, None
    for _ in range(n_cycles):
        try:
            s, _ = step_oieb(s, p)
        except DynamicsTermination as exc:
            map_reason = exc.reason
            break
        states.append(s)
    sim_reason = None
    try:
        trace = simulate(x0, p, n_cycles)
    except DynamicsTermination as exc:
        trace, sim_reason = exc.trace, exc.reason
    sim_states = trace_to_map_states(trace)
    if len(sim_states) != len(states) or map_reason != sim_reason:
        return math.inf
    return max(component_error(a, b) for a, b in zip(states, sim_states))


@pytest.fixture
def p_default():
    return ModelParams(tau=1000.0, t_stim=500.0, delta_t=0.005, delta_phi=0.5)
