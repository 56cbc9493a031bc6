import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

import oracles
from conftest import FIG1_PROFILE
from symprox.errors import DegenerateGrid, ValidationError
from symprox.isotonic import isotonic_decreasing, isotonic_increasing
from symprox.measures import EmpiricalMeasure1D, GridMeasure, gaussian_convolve
from symprox.penalties import PenaltySpec, prox
from symprox.pr1 import PR1Map, apply, from_samples, validate_pr1
from symprox.quadrature import gauss_hermite, pl_moments, tensor_grid
from symprox.scalar_rep import effective_scalar_rep, project_pr1

SPARSE = EmpiricalMeasure1D([-1.0, 0.0, 1.0], [0.05, 0.9, 0.05])


# -- PR1 maps ------------------------------------------------------------

def test_apply_examples():
    ident = PR1Map.identity()
    assert apply(ident, 3.7) == 3.7 and apply(ident, -12.0) == -12.0
    const = PR1Map.constant(2.5)
    assert apply(const, -100.0) == 2.5 and apply(const, 100.0) == 2.5
    soft = PR1Map.soft_threshold(0.5)
    assert apply(soft, 0.5) == 0.0 and apply(soft, 2.0) == 1.5 and apply(soft, -2.0) == -1.5


def test_validate_examples():
    assert validate_pr1(PR1Map.soft_threshold(1.0)) == []
    bad = validate_pr1(PR1Map([0.0, 1.0, 2.0], [0.0, 0.5, 0.2], 0.5, 0.5))
    assert [v.kind for v in bad] == ["monotonicity"] and bad[0].segment == 1
    steep = validate_pr1(PR1Map([0.0, 1.0], [0.0, 1.2], 0.5, 0.5))
    assert [v.kind for v in steep] == ["lipschitz"]
    assert steep[0].excess == pytest.approx(0.2)
    tails = validate_pr1(PR1Map([0.0, 1.0], [0.0, 0.5], -0.1, 1.5))
    assert {v.segment for v in tails} == {-1, 1}


def test_map_rejects_unsorted_breakpoints():
    with pytest.raises(ValidationError):
        PR1Map([0.0, 0.0], [0.0, 0.0], 0, 0)


def test_csv_round_trip_keeps_tails():
    m = PR1Map([-1.0, 0.5, 2.0], [-0.2, 0.1, 0.3], 0.25, 0.75, metadata={"tag": "x"})
    back = PR1Map.from_csv(m.to_csv(), m.to_sidecar_json())
    assert np.array_equal(back.breakpoints, m.breakpoints)
    assert back.slope_left == 0.25 and back.slope_right == 0.75
    assert m.sidecar()["extension"] == "boundary_slope"
    y = np.linspace(-5, 5, 21)
    assert np.array_equal(back(y), m(y))


def test_rescale_gives_prox_of_scaled_penalty():
    base = PR1Map.soft_threshold(1.0)
    y = np.linspace(-5, 5, 101)
    for kappa in (0.3, 1.0, 2.0):
        assert base.rescale(kappa)(y) == pytest.approx(np.sign(y) * np.maximum(np.abs(y) - kappa, 0))


maps = st.lists(st.tuples(st.floats(0.01, 2.0), st.floats(0.0, 1.0)), min_size=1, max_size=8)


@settings(max_examples=100, deadline=None)
@given(maps, st.floats(0, 1), st.floats(0, 1), st.lists(st.floats(-20, 20), min_size=2, max_size=30))
def test_valid_maps_are_monotone_and_lipschitz(segs, sl, sr, ys):
    y = np.concatenate([[0.0], np.cumsum([d for d, _ in segs])])
    x = np.concatenate([[0.0], np.cumsum([d * s for d, s in segs])])
    m = PR1Map(y, x, sl, sr)
    assert validate_pr1(m) == []
    ys = np.sort(ys)
    vals = m(ys)
    assert np.all(np.diff(vals) >= -1e-12)
    assert np.all(np.diff(vals) <= np.diff(ys) + 1e-9)


# -- isotonic regression ----------------------------------------------------

def test_isotonic_examples():
    assert isotonic_increasing([3.0, 1.0, 2.0]) == pytest.approx([2.0, 2.0, 2.0])
    assert isotonic_decreasing([1.0, 3.0, 0.0]) == pytest.approx([2.0, 2.0, 0.0])
    assert isotonic_increasing([1.0, 3.0], [3.0, 1.0]) == pytest.approx([1.0, 3.0])
    assert isotonic_increasing([3.0, 1.0], [3.0, 1.0]) == pytest.approx([2.5, 2.5])


def test_isotonic_matches_conic_solver():
    import cvxpy as cp
    rng = np.random.default_rng(6)
    for _ in range(5):
        y, w = rng.normal(size=15), rng.uniform(0.2, 2, 15)
        v = cp.Variable(15)
        cp.Problem(cp.Minimize(cp.sum(cp.multiply(w, cp.square(v - y)))),
                   [cp.diff(v) >= 0]).solve(solver=cp.CLARABEL)
        assert isotonic_increasing(y, w) == pytest.approx(v.value, abs=1e-6)


# -- effective scalar representation --------------------------------------

def test_separable_representation_is_soft_thresholding():
    grid = gaussian_convolve(SPARSE, 1.0, 512)
    amap = effective_scalar_rep(PenaltySpec.lasso(0.5), grid)
    y = np.linspace(-6, 6, 241)
    assert amap(y) == pytest.approx(np.sign(y) * np.maximum(np.abs(y) - 0.5, 0), abs=1e-12)
    assert amap.slope_left == pytest.approx(1.0) and amap.slope_right == pytest.approx(1.0)


def test_separable_representation_ignores_the_measure():
    f = PenaltySpec.ridge(0.4)
    a = effective_scalar_rep(f, gaussian_convolve(SPARSE, 0.5, 256))
    b = effective_scalar_rep(f, gaussian_convolve(EmpiricalMeasure1D([3.0]), 2.0, 256))
    y = np.linspace(-1, 1, 51)
    assert a(y) == pytest.approx(b(y), abs=2e-8)


def test_l2_power_two_is_linear():
    grid = gaussian_convolve(EmpiricalMeasure1D(np.random.default_rng(0).normal(size=300)), 0.0, 300)
    amap = effective_scalar_rep(PenaltySpec.l2_power(2), grid)
    y = grid.quantile_grid
    assert amap(y) == pytest.approx(y / 3, abs=1e-12)


def test_representation_reproduces_prox_on_the_grid():
    grid = gaussian_convolve(SPARSE, 1.0, 1024)
    f = PenaltySpec.sowl(profile=FIG1_PROFILE)
    amap = effective_scalar_rep(f, grid)
    y = grid.quantile_grid
    assert amap(y) == pytest.approx(prox(f, y), abs=1e-12)
    assert validate_pr1(amap, tol=1e-12) == []


def test_fig1_theory_curves():
    """At tau = 0.5 and 1 every nonzero output sits in the top weight group.

    Both maps are then soft thresholding at sqrt(2); at tau = 2.5 pooling
    across weight groups changes the curve.
    """
    f = PenaltySpec.sowl(profile=FIG1_PROFILE)
    maps = {t: effective_scalar_rep(f, gaussian_convolve(SPARSE, t, 4096)) for t in (0.5, 1.0, 2.5)}
    y = np.linspace(-3, 3, 61)
    soft = np.sign(y) * np.maximum(np.abs(y) - np.sqrt(2), 0)
    for t, amap in maps.items():
        assert validate_pr1(amap) == []
    assert maps[0.5](y) == pytest.approx(soft, abs=1e-9)
    assert maps[1.0](y) == pytest.approx(soft, abs=1e-9)
    assert np.max(np.abs(maps[2.5](y) - soft)) > 0.1


def test_degenerate_and_small_grids_are_rejected():
    with pytest.raises(DegenerateGrid):
        effective_scalar_rep(PenaltySpec.l2_power(2), GridMeasure(np.zeros(32)))
    with pytest.raises(ValidationError):
        effective_scalar_rep(PenaltySpec.l2_power(2), GridMeasure(np.arange(8.0)))


# -- projection onto PR1 ---------------------------------------------------

def test_projection_keeps_feasible_targets():
    y = np.array([0.0, 1.0, 2.5, 3.0])
    t = np.array([0.0, 0.5, 1.0, 1.0])
    assert project_pr1(y, t).values == pytest.approx(t, abs=1e-9)


def test_projection_of_decreasing_targets_is_the_mean():
    y = np.arange(6.0)
    t = -np.arange(6.0)
    w = np.array([1, 2, 1, 2, 1, 2.0])
    out = project_pr1(y, t, w)
    assert out.values == pytest.approx(np.full(6, np.dot(w, t) / w.sum()), abs=1e-8)


def test_projection_matches_brute_force_on_five_nodes():
    rng = np.random.default_rng(7)
    for _ in range(3):
        y = np.sort(rng.uniform(-2, 2, 5))
        t = 2 * rng.normal(size=5)
        w = rng.uniform(0.5, 1.5, 5)
        got = project_pr1(y, t, w)
        assert validate_pr1(got, tol=1e-9) == []
        obj = float(np.dot(w, (got.values - t) ** 2))
        _, brute = oracles.pr1_projection_brute(y, t, w)
        assert obj <= brute + 1e-4
        assert abs(obj - oracles.pr1_projection_cvxpy(y, t, w)[1]) <= 1e-6


@settings(max_examples=40, deadline=None)
@given(st.lists(st.floats(-5, 5), min_size=2, max_size=25))
def test_projection_always_lands_in_pr1(t):
    y = np.linspace(-1, 1, len(t))
    assert validate_pr1(project_pr1(y, np.array(t)), tol=1e-9) == []


def test_from_samples_averages_duplicates():
    m = from_samples([0.0, 1.0, 1.0, 2.0], [0.0, 0.4, 0.6, 1.0])
    assert list(m.breakpoints) == [0.0, 1.0, 2.0]
    assert m.values[1] == pytest.approx(0.5)


# -- quadrature ---------------------------------------------------------------

def test_gauss_hermite_integrates_polynomials():
    g, w = gauss_hermite(21)
    assert w.sum() == pytest.approx(1.0)
    assert np.dot(w, g**2) == pytest.approx(1.0)
    assert np.dot(w, g**4) == pytest.approx(3.0)
    with pytest.raises(ValueError):
        gauss_hermite(500)
    theta, gg, ww = tensor_grid(SPARSE, 21)
    assert ww.sum() == pytest.approx(1.0)


@pytest.mark.parametrize("t", [0.0, 0.3, 1.0, 2.2])
@pytest.mark.parametrize("tau", [0.25, 1.0, 3.0])
def test_pl_moments_match_closed_form_soft_thresholding(t, tau):
    mse, cross = pl_moments(PR1Map.soft_threshold(t), SPARSE, tau)
    ref = oracles.soft_threshold_moments(SPARSE.atoms, SPARSE.weights, tau, t)
    assert mse == pytest.approx(ref[0], abs=1e-12)
    assert cross == pytest.approx(ref[1], abs=1e-12)


def test_pl_moments_trivial_maps():
    mse, cross = pl_moments(PR1Map.identity(), SPARSE, 0.7)
    assert mse == pytest.approx(0.49) and cross == pytest.approx(0.7)
    mse, cross = pl_moments(PR1Map.constant(0.0), SPARSE, 0.7)
    assert mse == pytest.approx(SPARSE.second_moment()) and cross == pytest.approx(0.0, abs=1e-15)
