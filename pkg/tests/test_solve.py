import numpy as np
import pytest
from hypothesis import given, strategies as st

from curvforge.geometry import Distribution, flat_metric, scal_oracle
from curvforge.lattice import make_annulus, make_torus, second_partial
from curvforge.presets import preset_distribution
from curvforge.solve import (FourierModel, InadmissibleError, SolveError, _gmres, apriori_scaling,
                             fd_matrices, find_bracket, gauss_bonnet_residual, lorentz_from_u,
                             monotone_solve, newton_solve, solve_sine_boundary, solve_sine_closed,
                             synthesize, tail_ratios)
from curvforge.upsilon import UpsilonContext, s_map, upsilon

TWOPI = 2.0 * np.pi


def lap(u, grid, scheme):
    return sum(second_partial(u, a, a, grid, scheme) for a in range(grid.dim))


@pytest.mark.parametrize("scheme", ["fd4", "spectral"])
def test_fourier_model_inverts_discrete_operator(scheme):
    grid = make_torus(3, [12], [1.0, 2.0, 1.5])
    r = np.random.default_rng(0).standard_normal(grid.shape)
    u = FourierModel(grid, scheme, [1.0, 2.0, 0.5], -3.0).solve(r)
    back = (second_partial(u, 0, 0, grid, scheme) + 2 * second_partial(u, 1, 1, grid, scheme)
            + 0.5 * second_partial(u, 2, 2, grid, scheme) - 3 * u)
    assert np.max(np.abs(back - r)) < 1e-10


def test_fourier_model_singular():
    with pytest.raises(SolveError):
        FourierModel(make_torus(2, [8]), "spectral", 1.0, 0.0)


def test_gmres_with_preconditioner():
    grid = make_torus(2, [16])
    x, y = grid.coords()
    d = 2 + np.sin(TWOPI * x)
    rhs = np.cos(TWOPI * y)
    model = FourierModel(grid, "spectral", 1.0, -2.0)
    u, info = _gmres(lambda v: lap(v, grid, "spectral") - d * v, rhs, model.solve, grid.shape, 1e-12)
    assert info == 0
    assert np.max(np.abs(lap(u, grid, "spectral") - d * u - rhs)) < 1e-9


def test_fd_matrices_match_lattice():
    grid = make_annulus([17, 16])
    x, y = grid.coords()
    u = np.sin(3 * x) * np.cos(TWOPI * y)
    L, D = fd_matrices(grid)
    assert np.max(np.abs((L @ u.ravel()).reshape(u.shape) - lap(u, grid, "fd4"))) < 1e-9


def test_tail_ratios():
    assert tail_ratios([1.0, 1e-2, 1e-5, 1e-11]) == pytest.approx([1e-2, 1e-3, 1e-6])
    assert tail_ratios([1.0]) == []


@pytest.fixture(scope="module")
def contact12():
    grid = make_torus(3, [16])
    g = flat_metric(grid)
    V = preset_distribution("contact3", grid)
    s = -3 + np.sin(TWOPI * grid.coords()[2])
    return grid, g, V, s


def test_bracket_and_monotone_enclosure(contact12):
    grid, g, V, s = contact12
    ctx = UpsilonContext(g, V)
    lo, hi, r = find_bracket(ctx, s)
    assert lo < hi
    assert np.min(upsilon(ctx, r * s, lo)) > 0
    assert np.max(upsilon(ctx, r * s, hi)) < 0
    rep = monotone_solve(ctx, r * s, lo, hi, max_iter=15)
    assert rep.extra["enclosed"]
    assert lo - 1e-2 <= rep.f_range[0] and rep.f_range[1] <= hi + 1e-2


def test_synthesis_small_grid(contact12):
    grid, g, V, s = contact12
    rep = synthesize(g, V, s)
    assert rep.converged and rep.residual <= 1e-8
    assert rep.h.index == 2
    assert rep.scal_mismatch < 0.2
    assert np.max(np.abs(scal_oracle(rep.h) - s)) == pytest.approx(rep.scal_mismatch)


def test_planted_newton_recovers_solution(contact12):
    grid, g, V, _ = contact12
    ctx = UpsilonContext(g, V)
    f_true = 1.3 + 0.2 * np.cos(TWOPI * grid.coords()[2])
    s = s_map(ctx, f_true)
    rep = newton_solve(ctx, s, np.full(grid.shape, 1.3), tol=1e-10)
    assert rep.converged
    assert np.max(np.abs(rep.field - f_true)) < 1e-8


def test_untwisted_negative_bracket_failure():
    grid = make_torus(3, [8])
    g = flat_metric(grid)
    with pytest.raises(SolveError, match="bracket"):
        synthesize(g, Distribution.coordinate(grid, [0]), np.full(grid.shape, -1.0),
                   rescale=1.0)


def test_lorentz_from_u_and_range():
    grid = make_torus(2, [16])
    x, y = grid.coords()
    u = np.pi / 2 + 0.5 * np.sin(TWOPI * x)
    h = lorentz_from_u(u, grid)
    assert h.index == 1
    with pytest.raises(SolveError):
        lorentz_from_u(np.full(grid.shape, np.pi), grid)


@given(st.floats(-0.8, 0.8), st.integers(1, 2), st.integers(0, 2))
def test_gauss_bonnet_vanishes(amp, k, l):
    grid = make_torus(2, [32])
    x, y = grid.coords()
    u = np.pi / 2 + amp * np.sin(TWOPI * (k * x + l * y) + 0.4)
    assert gauss_bonnet_residual(lorentz_from_u(u, grid)) < 1e-9


def test_closed_zero_and_one_signed():
    grid = make_torus(2, [16])
    rep = solve_sine_closed(np.zeros(grid.shape), grid)
    assert np.allclose(rep.field, np.pi / 2)
    with pytest.raises(InadmissibleError, match="Gauss-Bonnet"):
        solve_sine_closed(np.ones(grid.shape), grid)
    with pytest.raises(InadmissibleError):
        solve_sine_closed(-2 - np.sin(TWOPI * grid.coords()[0]), grid)


def test_closed_planted_recovery():
    grid = make_torus(2, [48])
    x, _ = grid.coords()
    u0 = np.pi / 2 + np.sin(TWOPI * x)
    s0 = 2 * lap(u0, grid, "spectral") / np.sin(u0)
    rep = solve_sine_closed(s0, grid)
    assert rep.converged and rep.residual <= 1e-10
    assert rep.extra["amplitude"] == pytest.approx(1.0, abs=1e-9)
    assert np.max(np.abs(scal_oracle(rep.h, "spectral") - s0)) < 1e-6 * np.max(np.abs(s0))


def test_boundary_solve_small():
    grid = make_annulus([17, 16])
    rep = solve_sine_boundary(np.ones(grid.shape), grid)
    assert rep.converged
    assert rep.extra["energy_monotone"]
    assert np.all(rep.field[0] == np.pi / 2) and np.all(rep.field[-1] == np.pi / 2)
    assert 0 < rep.f_range[0] and rep.f_range[1] < np.pi


def test_boundary_shrink_triggers():
    grid = make_annulus([17, 16])
    rep = solve_sine_boundary(np.full(grid.shape, 2000.0), grid)
    assert rep.extra["shrinks"] > 0
    assert rep.extra["amplitude"] < 1.0


def test_apriori_linear_scaling():
    grid = make_annulus([17, 16])
    out = apriori_scaling(np.ones(grid.shape), grid, 1.0)
    assert out["spread"] < 1.25
