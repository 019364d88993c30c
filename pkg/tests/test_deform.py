import numpy as np
import pytest
from hypothesis import given, strategies as st

from curvforge import deform as dfm
from curvforge.geometry import Distribution, flat_metric
from curvforge.lattice import make_torus
from curvforge.presets import perturbed_metric, preset_distribution, random_trig_field

TWOPI = 2.0 * np.pi
nq = st.integers(2, 8).flatmap(lambda n: st.tuples(st.just(n), st.integers(0, n)))
xs = st.floats(0.05, 20.0)


@pytest.fixture(scope="module")
def setup3():
    grid = make_torus(3, [12])
    g = perturbed_metric(grid, 0.2, seed=5)
    V = preset_distribution("contact3", grid, g=g)
    rng = np.random.default_rng(9)
    return grid, g, V, random_trig_field(grid, rng, 0.5, 2.5), random_trig_field(grid, rng, 0.5, 2.5)


def test_switch_index_and_involution(setup3):
    grid, g, V, f, k = setup3
    h = dfm.switch(g, V)
    assert h.index == V.rank
    assert np.max(np.abs(dfm.switch(h, V).data - g.data)) < 1e-12


def test_stretch_composition_and_unit(setup3):
    grid, g, V, f, k = setup3
    a = dfm.stretch(dfm.stretch(g, f, V), k, V)
    b = dfm.stretch(g, f * k, V)
    assert np.max(np.abs(a.data - b.data)) < 1e-12
    assert np.max(np.abs(dfm.stretch(g, 1.0, V).data - g.data)) < 1e-12


def test_conform_is_two_stretches(setup3):
    grid, g, V, f, k = setup3
    H = dfm.orthogonal_complement(g, V)
    a = dfm.stretch(dfm.stretch(g, f, V), f, H)
    assert np.max(np.abs(a.data - dfm.conform(g, f).data)) < 1e-12


def test_change_with_unit_factors_is_switch(setup3):
    grid, g, V, f, k = setup3
    one = np.ones(grid.shape)
    assert np.max(np.abs(dfm.change(g, one, one, V).data - dfm.switch(g, V).data)) < 1e-12


def test_positivity_guard(setup3):
    grid, g, V, f, k = setup3
    with pytest.raises(ValueError):
        dfm.stretch(g, f - 3.0, V)
    with pytest.raises(ValueError):
        dfm.conform(g, np.zeros(grid.shape))


def test_conform_scal_closed_form():
    # kappa^-2 flat with kappa = e^{-w} is e^{2w} flat, scal = -2 e^{-2w} Lap w
    grid = make_torus(2, [32])
    x, y = grid.coords()
    w = 0.2 * np.sin(TWOPI * x) * np.cos(TWOPI * y)
    expect = -2 * np.exp(-2 * w) * (-2 * TWOPI**2 * w)
    pred = dfm.predict_conform_scal(flat_metric(grid), np.exp(-w), "spectral")
    assert np.max(np.abs(pred - expect)) < 1e-8


def _switch_gap(N):
    grid = make_torus(3, [N])
    g = perturbed_metric(grid, 0.2, seed=2)
    V = preset_distribution("contact3", grid, g=g)
    u = random_trig_field(grid, np.random.default_rng(4))
    P = dfm.predict_switch(g, V, u, "spectral")
    M = dfm.measure_lines(dfm.switch(g, V), V, u, "spectral")
    return max(np.max(np.abs(P[k] - M[k])) / max(1.0, np.max(np.abs(M[k]))) for k in P)


def test_switch_prediction_matches_measurement():
    # spectral gap shrinks geometrically (about 3e-2 at N=16, 9e-6 at N=32)
    coarse, fine = _switch_gap(16), _switch_gap(32)
    assert fine < 1e-4
    assert coarse / fine > 1e3


def _chi_gap(N):
    grid = make_torus(3, [N])
    g = perturbed_metric(grid, 0.2, seed=7)
    V = Distribution.coordinate(grid, [0, 1])
    f = random_trig_field(grid, np.random.default_rng(3), 0.5, 2.5)
    return max(np.max(np.abs(dfm.predict_chi(g, f, V, m, "spectral")
                             - dfm.measure_chi(g, f, V, m, "spectral"))) for m in dfm.CHI_MODES)


def test_chi_modes_match_on_coordinate_plane():
    coarse, fine = _chi_gap(24), _chi_gap(40)
    assert fine < 1e-2
    assert coarse / fine > 1e2
    grid = make_torus(3, [8])
    with pytest.raises(ValueError):
        dfm.predict_chi(flat_metric(grid), np.ones(grid.shape), Distribution.coordinate(grid, [0]),
                        "sideways")


@given(nq, xs)
def test_E_is_log_derivative_of_K(nq_, x):
    t = dfm.coefficient_table(*nq_)
    h = 1e-6 * x
    fd = (np.log(t.K(x + h)) - np.log(t.K(x - h))) / (2 * h)
    assert t.E(x) == pytest.approx(fd, rel=1e-6, abs=1e-8)


@given(nq, xs)
def test_F_is_second_log_quotient(nq_, x):
    t = dfm.coefficient_table(*nq_)
    h = 1e-6 * x
    dE = (t.E(x + h) - t.E(x - h)) / (2 * h)
    # K''/K = E' + E^2
    assert t.F(x) == pytest.approx(dE + t.E(x) ** 2, rel=1e-6, abs=1e-8)


@given(nq, xs)
def test_derivative_helpers(nq_, x):
    t = dfm.coefficient_table(*nq_)
    h = 1e-6 * x
    for f, df in ((t.a, t.da), (t.b, t.db), (t.weight, t.dweight)):
        fd = (f(x + h) - f(x - h)) / (2 * h)
        assert df(x) == pytest.approx(fd, rel=1e-5, abs=1e-6 * max(1.0, abs(f(x)) / x))


@given(nq, st.floats(0.01, 100.0))
def test_coefficient_identities(nq_, x):
    t = dfm.coefficient_table(*nq_)
    xl = np.longdouble(x)
    assert abs(t.identity_b(xl)) < 1e-12
    assert abs(t.identity_c(xl)) < 1e-12
    assert abs(t.identity_d(xl)) < 1e-11 * max(1.0, x**-4)
    assert abs(t.identity_e(xl)) < 1e-11 * max(1.0, x**-4)


def test_exponent_bounds():
    assert all(dfm.exponent_bounds_check(n, q) for n in range(2, 13) for q in range(n + 1))


def test_table_validation():
    with pytest.raises(ValueError):
        dfm.coefficient_table(1, 0)
    with pytest.raises(ValueError):
        dfm.coefficient_table(3, 4)
