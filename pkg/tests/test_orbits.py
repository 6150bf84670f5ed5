import math

import pytest

from oieb.errors import DomainError
from oieb.linear import stability_loss_delta_t
from oieb.maps import (
    MapState,
    derivative_period_map,
    step_period_map,
    synchronous_drive,
)
from oieb.orbits import (
    MAP_KINDS,
    CascadeTruncated,
    InsufficientSamplesError,
    basin_scan,
    bifurcation_scan_1d,
    classify_attractor,
    converge,
    detect_period_1d,
    feigenbaum_ratios,
    feigenbaum_ratios_from_onsets,
    find_doubling_onsets,
    iterate,
    logistic_family,
    lyapunov_exponent,
    minimal_period,
    period_map_family,
    period_two_orbit,
    phase_distance,
    state_distance,
    tempo_switch_iterations,
)
from oieb.presets import get_preset


def test_phase_distance_is_circular():
    assert phase_distance(0.01, 0.99) == pytest.approx(0.02)
    assert phase_distance(0.0, 1.0) == 0.0
    assert state_distance(MapState(2.0, 0.999), MapState(2.0, 0.0)) == pytest.approx(0.001)


# -- iterate ---------------------------------------------------------------

@pytest.mark.parametrize("kind", MAP_KINDS)
def test_fixed_point_trajectory_is_constant(kind, p_default):
    istar = synchronous_drive(p_default)
    traj = iterate(kind, MapState(istar, 0.0), p_default, 50)
    assert traj.termination is None and len(traj.states) == 51
    for s in traj.states:
        assert s.i == pytest.approx(istar, rel=1e-13)
        assert phase_distance(s.phi, 0.0) < 1e-12


def test_period_map_converges_quickly(p_default):
    istar = synchronous_drive(p_default)
    traj = iterate("period1d", MapState(2.0, 0.0), p_default, 100)
    hit = next(n for n, s in enumerate(traj.states) if abs(s.i - istar) < 1e-9)
    assert hit < 100
    assert derivative_period_map(istar, p_default) == pytest.approx(-0.2762597, abs=1e-6)


def test_fig8e_diverges():
    traj = iterate("oieb", MapState(2.5, 0.3), get_preset("fig8e"), 5000)
    assert traj.termination in ("divergent", "stalled")
    assert traj.termination == "divergent" or traj.states[-1].i > 1.0


def test_iterate_rejects_bad_kind_and_state(p_default):
    with pytest.raises(ValueError):
        iterate("nope", MapState(2.0, 0.0), p_default, 3)
    with pytest.raises(DomainError):
        iterate("oieb", MapState(1.0, 0.0), p_default, 3)


def test_order_preserving_reports_violation():
    traj = iterate("order_preserving", MapState(2.5, 0.3), get_preset("fig8d"), 2000)
    assert traj.termination == "order violated"


# -- classification --------------------------------------------------------

@pytest.fixture(scope="module")
def fig8_reports():
    x0 = MapState(2.5, 0.3)
    return {name: classify_attractor("oieb", x0, get_preset(name))
            for name in ("fig8b", "fig8c", "fig8d", "fig8f")}


def test_fig8b_period5(fig8_reports):
    rep = fig8_reports["fig8b"]
    assert (rep.kind, rep.period, rep.order_switches_per_period) == ("periodic", 5, 2)


def test_fig8c_period4(fig8_reports):
    rep = fig8_reports["fig8c"]
    assert (rep.kind, rep.period, rep.bg_spikes_per_period, rep.tones_per_period) == ("periodic", 4, 4, 3)


def test_fig8d_chaotic(fig8_reports):
    rep = fig8_reports["fig8d"]
    assert rep.kind == "chaotic" and rep.lyapunov > 0.01


def test_fig8f_period104(fig8_reports):
    rep = fig8_reports["fig8f"]
    assert (rep.kind, rep.period) == ("periodic", 104)


def test_fig6c_period3():
    rep = classify_attractor("oieb", MapState(2.5, 0.3), get_preset("fig6c"))
    assert rep.kind == "periodic" and rep.period == 3
    t = rep.tones_per_cycle
    assert t in ([2, 1, 0], [1, 0, 2], [0, 2, 1])


def test_fig8e_classified_divergent():
    rep = classify_attractor("oieb", MapState(2.5, 0.3), get_preset("fig8e"))
    assert rep.kind == "divergent"
    assert rep.final_state.i <= 1.0 + 1e-9 or "stalled" in rep.detail


def test_fig4_fixed_point(p_default):
    rep = classify_attractor("oieb", MapState(2.47, 0.25), p_default)
    assert rep.kind == "fixed_point" and rep.period == 1


def test_periodic_report_invariants(fig8_reports):
    for rep in fig8_reports.values():
        if rep.kind != "periodic":
            continue
        assert rep.tones_per_period == sum(rep.tones_per_cycle)
        assert rep.bg_spikes_per_period == rep.period == len(rep.orbit)
        assert abs(rep.bg_spikes_per_period - rep.tones_per_period) <= 1
        assert rep.order_switches_per_period == sum(t != 1 for t in rep.tones_per_cycle)
        # minimality: no proper divisor recurs
        for d in range(1, rep.period):
            if rep.period % d == 0:
                assert any(state_distance(rep.orbit[j], rep.orbit[(j + d) % rep.period]) >= 1e-8
                           for j in range(rep.period))


def test_minimal_period_helper():
    orbit = [MapState(2.0 + (k % 3), 0.1) for k in range(30)]
    assert minimal_period(orbit, 10) == 3
    assert minimal_period([MapState(2.0 + k, 0.1) for k in range(30)], 10) == 0


def test_classification_is_deterministic():
    p = get_preset("fig8b")
    a = classify_attractor("oieb", MapState(2.5, 0.3), p, transient=2000, observe=5000)
    b = classify_attractor("oieb", MapState(2.5, 0.3), p, transient=2000, observe=5000)
    assert a == b


# -- Lyapunov --------------------------------------------------------------

def test_lyapunov_at_stable_fixed_point(p_default):
    istar = synchronous_drive(p_default)
    got = lyapunov_exponent("period1d", MapState(istar, 0.0), p_default, 2000)
    want = math.log(abs(derivative_period_map(istar, p_default)))
    assert got == pytest.approx(want, abs=1e-3)
    assert got < 0


def test_lyapunov_period_two(p_default):
    q = p_default.with_(delta_t=1.1 * stability_loss_delta_t(p_default))
    a, b = period_two_orbit(q)
    got = lyapunov_exponent("period1d", MapState(a, 0.0), q, 4000)
    want = 0.5 * math.log(abs(derivative_period_map(a, q) * derivative_period_map(b, q)))
    assert got == pytest.approx(want, abs=1e-3)


def test_lyapunov_chaotic_preset():
    p = get_preset("fig8d")
    assert lyapunov_exponent("oieb", MapState(2.5, 0.3), p, 20000, transient=2000) > 0.01


def test_lyapunov_insufficient_samples(p_default):
    # a period-2 orbit straddling phi = 0.5 lands on different pieces every step
    with pytest.raises(InsufficientSamplesError):
        lyapunov_exponent("oieb", MapState(2.5, 0.5), p_default.with_(delta_t=0.0, delta_phi=0.0), 100, d0=0.6)


# -- 1D bifurcation --------------------------------------------------------

def test_bifurcation_scan(p_default):
    d1 = stability_loss_delta_t(p_default)
    below = bifurcation_scan_1d(p_default, (0.2 * d1, 0.95 * d1), 10)
    assert set(below.periods) == {1}
    wide = bifurcation_scan_1d(p_default, (0.5 * d1, 1.32 * d1), 60)
    assert 2 in wide.periods and 4 in wide.periods
    first4 = wide.periods.index(4)
    assert 2 in wide.periods[:first4]


def test_period_two_is_genuine(p_default):
    q = p_default.with_(delta_t=1.05 * stability_loss_delta_t(p_default))
    a, b = period_two_orbit(q)
    assert step_period_map(b, q) == pytest.approx(a, rel=1e-12)
    assert abs(a - b) > 1e-4


def test_detect_period_logistic():
    fam = logistic_family()
    assert detect_period_1d(fam, 2.8) == 1
    assert detect_period_1d(fam, 3.2) == 2
    assert detect_period_1d(fam, 3.5) == 4
    assert detect_period_1d(fam, 4.5) == -1


def test_cascade_brackets(p_default):
    fam = period_map_family(p_default)
    d1 = stability_loss_delta_t(p_default)
    onsets = find_doubling_onsets(fam, 0.9 * d1, 2 * d1, 4, first_step=0.02 * d1)
    assert onsets[0] == pytest.approx(d1, rel=1e-9)
    assert all(b > a for a, b in zip(onsets, onsets[1:]))
    for k, d in enumerate(onsets):
        eps = 1e-7 * d
        lo = detect_period_1d(fam, d - eps, transient=20000)
        hi = detect_period_1d(fam, d + eps, transient=20000)
        assert (lo, hi) == (2 ** k, 2 ** (k + 1))


def test_logistic_cascade():
    rep = feigenbaum_ratios(family="logistic", k_max=6)
    assert rep.doubling_params[0] == pytest.approx(3.0, abs=1e-9)
    assert rep.doubling_params[1] == pytest.approx(1 + math.sqrt(6), abs=1e-9)
    assert abs(rep.ratio(5) / 4.669 - 1) < 0.02


def test_feigenbaum_from_onsets():
    assert feigenbaum_ratios_from_onsets([0.0, 1.0, 1.25]) == [4.0]


def test_cascade_truncated(p_default):
    fam = period_map_family(p_default)
    d1 = stability_loss_delta_t(p_default)
    with pytest.raises(CascadeTruncated):
        find_doubling_onsets(fam, 0.5 * d1, 0.8 * d1, 2, first_step=0.02 * d1)


def test_feigenbaum_needs_params():
    with pytest.raises(ValueError):
        feigenbaum_ratios(None)
    with pytest.raises(ValueError):
        feigenbaum_ratios(get_preset("fig1a"), family="tent")


# -- tempo switch ----------------------------------------------------------

def test_tempo_switch_asymmetry(p_default):
    slow = tempo_switch_iterations(p_default, 250.0, 500.0)
    fast = tempo_switch_iterations(p_default, 500.0, 250.0)
    assert 0 < slow < fast


def test_tempo_switch_no_change(p_default):
    assert tempo_switch_iterations(p_default, 500.0, 500.0) == 0


# -- basins ----------------------------------------------------------------

def test_fig4_basins(p_default):
    a = converge("oieb", MapState(2.47, 0.25), p_default)
    b = converge("oieb", MapState(2.62, 0.75), p_default)
    assert (a.kind, a.phase_label, a.order_switches) == ("fixed_point", 0, 0)
    assert (b.kind, b.phase_label, b.order_switches) == ("fixed_point", 1, 0)


def test_basin_straddles_half(p_default):
    istar = synchronous_drive(p_default)
    lo = converge("oieb", MapState(istar, 0.5 - 1e-6), p_default)
    hi = converge("oieb", MapState(istar, 0.5 + 1e-6), p_default)
    assert {lo.phase_label, hi.phase_label} == {0, 1}


def test_basin_quadrants(p_default):
    istar = synchronous_drive(p_default)
    cells = basin_scan("order_preserving", [istar - 0.05, istar - 0.02], [0.1, 0.3], p_default)
    assert all(c.phase_label == 0 for row in cells for c in row)
    cells = basin_scan("order_preserving", [istar + 0.02, istar + 0.05], [0.7, 0.9], p_default)
    assert all(c.phase_label == 1 for row in cells for c in row)


def test_basin_records_terminations():
    cells = basin_scan("oieb", [2.5], [0.3], get_preset("fig8e"), budget=5000)
    assert cells[0][0].kind in ("divergent", "stalled")
    assert cells[0][0].phase_label is None
