import math
import random

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from oieb.errors import DomainError
from oieb.linear import (
    BOUNDARY_KINDS,
    NON_HYPERBOLIC,
    REGIONS,
    STABLE_NODE,
    STABLE_SPIRAL,
    REGION_TABLE,
    UNSTABLE_NODE,
    UNSTABLE_SPIRAL,
    NoCrossingError,
    boundary_residual,
    cell_centres,
    classify_fixed_point,
    classify_jacobian,
    critical_delta_curves_1d,
    eigenvalues_at_fixed_point,
    finite_difference_jacobian,
    fixed_point_fd_jacobian,
    g_of_i,
    jacobian_at_fixed_point,
    optimal_delta_t,
    period_map_stable,
    region_label,
    region_map,
    stability_loss_delta_t,
    trace_boundary,
)
from oieb.maps import (
    MapState,
    ModelParams,
    derivative_period_map,
    period_of_drive,
    step_order_preserving,
    synchronous_drive,
)

P = ModelParams(1000.0, 500.0, 0.005, 0.5)
WINDOW = ((0.0, 0.01), (0.0, 7.0))


@pytest.fixture(scope="module")
def coarse_grid():
    return region_map(WINDOW, (40, 40), P)


def sample_point(grid, region):
    for r, row in enumerate(grid.labels):
        for c, lab in enumerate(row):
            if lab.region == region:
                return P.with_(delta_t=float(grid.delta_t[c]), delta_phi=float(grid.delta_phi[r]))
    raise AssertionError(f"region {region} not in grid")


# -- g(I) ------------------------------------------------------------------

def test_g_of_i_value():
    assert g_of_i(2.0, P) == -500.0


def test_g_of_i_domain():
    with pytest.raises(DomainError):
        g_of_i(1.0, P)
    with pytest.raises(DomainError):
        g_of_i(0.5, P)


def test_g_of_i_matches_finite_difference():
    rng = random.Random(1)
    for _ in range(100):
        i = rng.uniform(1.05, 20.0)
        h = 1e-6 * (i - 1.0)
        fd = (period_of_drive(i + h, P) - period_of_drive(i - h, P)) / (2 * h)
        assert fd == pytest.approx(g_of_i(i, P), rel=1e-6)


@given(st.floats(1.0 + 1e-6, 1e3), st.floats(1e-6, 1.0))
def test_g_negative_and_increasing(i, eps):
    assert g_of_i(i, P) < 0
    assert g_of_i(i + eps, P) > g_of_i(i, P)


# -- eigenvalues -----------------------------------------------------------

def test_eigenvalues_zero_strengths():
    q = P.with_(delta_t=0.0, delta_phi=0.0)
    for phi_star in (0, 1):
        assert eigenvalues_at_fixed_point(phi_star, q) == (1.0, 1.0)


def test_eigenvalues_period_rule_only():
    q = P.with_(delta_phi=0.0)
    slope = 1.0 + q.delta_t * g_of_i(synchronous_drive(q), q)
    assert slope == pytest.approx(derivative_period_map(synchronous_drive(q), q), rel=1e-12)
    for phi_star in (0, 1):
        got = sorted(eigenvalues_at_fixed_point(phi_star, q), key=lambda z: z.real)
        assert got[0] == pytest.approx(slope, abs=1e-14)
        assert got[1] == pytest.approx(1.0, abs=1e-14)


def test_fig4_point_stable_at_both_fixed_points():
    for phi_star in (0, 1):
        assert max(abs(z) for z in eigenvalues_at_fixed_point(phi_star, P)) < 1.0


def test_eigenvalues_match_analytic_jacobian():
    for phi_star in (0, 1):
        want = sorted(np.linalg.eigvals(jacobian_at_fixed_point(phi_star, P)), key=lambda z: (z.real, z.imag))
        got = sorted(eigenvalues_at_fixed_point(phi_star, P), key=lambda z: (z.real, z.imag))
        assert np.allclose(got, want, atol=1e-12)


def test_analytic_jacobian_matches_finite_difference():
    for phi_star in (0, 1):
        fd = fixed_point_fd_jacobian(phi_star, P)
        assert np.allclose(fd, jacobian_at_fixed_point(phi_star, P), rtol=1e-6, atol=1e-7)


def test_eigenvalues_match_fd_random_draws():
    rng = random.Random(4)
    for _ in range(60):
        q = ModelParams(rng.uniform(200, 3000), rng.uniform(200, 1000),
                        rng.uniform(0, 0.01), rng.uniform(0, 7))
        for phi_star in (0, 1):
            fd = sorted(np.linalg.eigvals(fixed_point_fd_jacobian(phi_star, q)), key=lambda z: (z.real, z.imag))
            cf = sorted(eigenvalues_at_fixed_point(phi_star, q), key=lambda z: (z.real, z.imag))
            assert max(abs(a - b) for a, b in zip(fd, cf)) < 1e-6, q


def test_fd_jacobian_at_interior_point():
    x = MapState(2.6, 0.4)
    jac = finite_difference_jacobian(step_order_preserving, x, P)
    one_sided = finite_difference_jacobian(step_order_preserving, x, P, sides=(1, -1))
    assert np.allclose(jac, one_sided, rtol=1e-6, atol=1e-8)


# -- classification ---------------------------------------------------------

@pytest.mark.parametrize("region,pair", [
    ("I", (STABLE_NODE, STABLE_NODE)),
    ("VI", (UNSTABLE_NODE, UNSTABLE_SPIRAL)),
    ("III", (STABLE_SPIRAL, STABLE_SPIRAL)),
])
def test_classify_region_samples(coarse_grid, region, pair):
    q = sample_point(coarse_grid, region)
    got = (classify_fixed_point(0, q).stability_class, classify_fixed_point(1, q).stability_class)
    assert got == pair
    assert region_label(q).region == region


def test_report_invariants():
    rng = random.Random(7)
    for _ in range(200):
        q = P.with_(delta_t=rng.uniform(0, 0.01), delta_phi=rng.uniform(0, 7))
        for phi_star in (0, 1):
            rep = classify_fixed_point(phi_star, q)
            if rep.stability_class == NON_HYPERBOLIC:
                continue
            spiral = "spiral" in rep.stability_class
            assert spiral == any(abs(z.imag) > 0 for z in rep.eigenvalues)
            assert rep.stability_class.startswith("stable") == (rep.spectral_radius < 1.0)


def test_non_hyperbolic_at_zero_strengths():
    assert classify_fixed_point(0, P.with_(delta_t=0.0, delta_phi=0.0)).stability_class == NON_HYPERBOLIC


def test_fd_classification_step_invariance():
    rng = random.Random(11)
    checked = 0
    while checked < 100:
        q = P.with_(delta_t=rng.uniform(0, 0.01), delta_phi=rng.uniform(0, 7))
        # keep away from boundaries by 1e-4 in parameter space
        near = False
        for ddt, ddp in ((1e-4, 0), (-1e-4, 0), (0, 1e-4), (0, -1e-4)):
            if min(q.delta_t + ddt, q.delta_phi + ddp) < 0:
                near = True
            elif region_label(q.with_(delta_t=q.delta_t + ddt, delta_phi=q.delta_phi + ddp)) != region_label(q):
                near = True
        if near:
            continue
        checked += 1
        for phi_star in (0, 1):
            a = classify_jacobian(fixed_point_fd_jacobian(phi_star, q, 1e-5))
            b = classify_jacobian(fixed_point_fd_jacobian(phi_star, q, 1e-7))
            assert a == b == classify_fixed_point(phi_star, q).stability_class


def test_one_dimensional_consistency():
    rng = random.Random(3)
    for _ in range(100):
        q = P.with_(delta_t=rng.uniform(0, 0.016), delta_phi=0.0)
        # the other eigenvalue is exactly 1 when the phase rule is off
        slope = min(eigenvalues_at_fixed_point(0, q), key=lambda z: z.real)
        assert (abs(slope) < 1.0) == period_map_stable(q)


# -- region map ------------------------------------------------------------

def test_region_map_fig4_point():
    assert region_label(P).region == "I"


def test_region_map_fig6_points():
    # both carry a spiralling fixed point, the signature of order switching
    for dt, dp in ((0.002, 2.5), (0.005, 3.5)):
        lab = region_label(P.with_(delta_t=dt, delta_phi=dp))
        assert lab.region is not None
        assert UNSTABLE_SPIRAL in (lab.class_phi0, lab.class_phi1)


def test_region_map_shape_and_centres(coarse_grid):
    assert len(coarse_grid.labels) == 40 and len(coarse_grid.labels[0]) == 40
    assert coarse_grid.delta_t[0] == pytest.approx(0.01 / 80)
    assert np.allclose(cell_centres(0.0, 1.0, 4), [0.125, 0.375, 0.625, 0.875])


def test_all_nine_regions(coarse_grid):
    assert coarse_grid.regions() == set(REGIONS)
    assert coarse_grid.signatures() <= set(REGION_TABLE)


def test_region_map_rejects_bad_window():
    with pytest.raises(ValueError):
        region_map(((-0.1, 0.01), (0, 7)), (4, 4), P)
    with pytest.raises(ValueError):
        region_map(((0.01, 0.01), (0, 7)), (4, 4), P)


# -- boundaries ------------------------------------------------------------

def test_one_dimensional_boundary_matches_closed_form():
    curve = trace_boundary("lambda_minus_one_phi0", ((0.0, 0.02), (0.0, 1.0)), P.with_(delta_phi=0.0), 200)
    on_axis = [dt for dt, dp in curve.points if dp == 0.0]
    assert len(on_axis) == 1
    assert on_axis[0] == pytest.approx(stability_loss_delta_t(P), abs=1e-10)


@pytest.mark.parametrize("kind", sorted(BOUNDARY_KINDS))
def test_boundary_residuals(kind):
    curve = trace_boundary(kind, WINDOW, P, 60)
    assert curve.points
    for dt, dp in curve.points:
        assert abs(boundary_residual(kind, P.with_(delta_t=dt, delta_phi=dp))) < 1e-8


def test_lambda_minus_one_shifts_right_for_shorter_period():
    for kind in ("lambda_minus_one_phi0", "lambda_minus_one_phi1"):
        wide = ((0.0, 0.02), (0.0, 7.0))
        a = dict((dp, dt) for dt, dp in trace_boundary(kind, wide, P, 70).points)
        b = dict((dp, dt) for dt, dp in trace_boundary(kind, wide, P.with_(t_stim=400.0), 70).points)
        common = set(a) & set(b)
        assert common
        assert all(b[dp] > a[dp] for dp in common)


def test_unit_modulus_through_origin():
    curve = trace_boundary("unit_modulus_phi1", WINDOW, P, 100)
    pts = sorted(curve.points)
    # a straight line through the origin: delta_phi / delta_t is constant
    slopes = [dp / dt for dt, dp in pts if dt > 0]
    assert max(slopes) - min(slopes) < 1e-6 * max(slopes)
    dt0, dp0 = pts[0]
    assert dp0 < 0.1 and dt0 < 0.1 / slopes[0] + 1e-12


def test_no_crossing():
    with pytest.raises(NoCrossingError):
        trace_boundary("lambda_minus_one_phi1", ((0.0, 0.001), (0.0, 0.1)), P, 20)


def test_unknown_kind():
    with pytest.raises(ValueError):
        trace_boundary("nope", WINDOW, P)


def test_labels_across_lambda_minus_one():
    kind, phi_star = "lambda_minus_one_phi1", 1
    curve = trace_boundary(kind, WINDOW, P, 40)
    # at delta_phi = 0 the other fixed point is non-hyperbolic by construction
    for dt, dp in [pt for pt in curve.points if pt[1] > 0.05][::4]:
        left = region_label(P.with_(delta_t=dt - 1e-5, delta_phi=dp))
        right = region_label(P.with_(delta_t=dt + 1e-5, delta_phi=dp))
        other = "class_phi0" if phi_star == 1 else "class_phi1"
        mine = "class_phi1" if phi_star == 1 else "class_phi0"
        assert getattr(left, other) == getattr(right, other)
        a, b = getattr(left, mine), getattr(right, mine)
        assert a.split()[1] == b.split()[1]
        assert {a.split()[0], b.split()[0]} == {"stable", "unstable"}


# -- critical curves -------------------------------------------------------

def test_critical_curves():
    ts = np.linspace(200, 1000, 17)
    cc = critical_delta_curves_1d(ts, P)
    assert np.allclose(cc.optimal, cc.stability_loss / 2, rtol=0, atol=0)
    assert np.all(np.diff(cc.stability_loss) < 0)
    assert np.all(np.diff(cc.optimal) < 0)
    assert not cc.failures
    assert np.all(cc.divergence > cc.stability_loss)


def test_critical_value_at_500():
    assert stability_loss_delta_t(P) == pytest.approx(0.0078354, abs=5e-8)
    assert optimal_delta_t(P) == pytest.approx(0.0078354 / 2, abs=5e-8)
    i = synchronous_drive(P)
    assert stability_loss_delta_t(P) == pytest.approx(2 * i * (i - 1) / 1000, rel=1e-15)


def test_critical_curves_reject_nonpositive():
    with pytest.raises(ValueError):
        critical_delta_curves_1d([0.0, 100.0], P)


def test_optimal_gives_zero_slope():
    q = P.with_(delta_t=optimal_delta_t(P))
    assert abs(derivative_period_map(synchronous_drive(q), q)) < 1e-12
    assert math.isfinite(stability_loss_delta_t(q))
