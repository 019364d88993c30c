import numpy as np
import pytest
from hypothesis import given, strategies as st

from curvforge.geometry import (Distribution, FrameGeometry, GeometryError, MetricField,
                                distribution_scalars, flat_metric, foliation_scal,
                                orthogonal_complement, orthonormalize, projector, scal_oracle)
from curvforge.lattice import make_torus
from curvforge.presets import perturbed_metric, preset_distribution

TWOPI = 2.0 * np.pi


def warped(N, amp=0.3):
    """dx^2 + e^{2w(x)}(dy^2 + dz^2), scal = -4 w'' - 6 w'^2."""
    grid = make_torus(3, [N])
    x = grid.coords()[0]
    w = amp * np.sin(TWOPI * x)
    w1 = amp * TWOPI * np.cos(TWOPI * x)
    w2 = -amp * TWOPI**2 * np.sin(TWOPI * x)
    data = np.zeros(grid.shape + (3, 3))
    data[..., 0, 0] = 1.0
    data[..., 1, 1] = data[..., 2, 2] = np.exp(2 * w)
    return MetricField(grid, data), -4 * w2 - 6 * w1**2


def conformal2(N):
    """e^{2w} (dx^2 + dy^2), scal = -2 e^{-2w} Lap w."""
    grid = make_torus(2, [N])
    x, y = grid.coords()
    w = 0.2 * np.sin(TWOPI * x) * np.cos(TWOPI * y)
    lap = -2 * TWOPI**2 * w
    data = np.exp(2 * w)[..., None, None] * np.eye(2)
    return MetricField(grid, data), -2 * np.exp(-2 * w) * lap


def test_flat_metrics():
    grid = make_torus(2, [16])
    assert np.max(np.abs(scal_oracle(flat_metric(grid)))) == 0.0
    assert flat_metric(grid, [-1, 1]).index == 1


@pytest.mark.parametrize("build", [warped, conformal2])
def test_scal_oracle_closed_forms(build):
    g, expect = build(32)
    assert np.max(np.abs(scal_oracle(g, "spectral") - expect)) < 1e-8
    errs = [np.max(np.abs(scal_oracle(build(N)[0]) - build(N)[1])) for N in (32, 64)]
    assert np.log2(errs[0] / errs[1]) > 3.5


def test_frame_scal_matches_oracle():
    # spectral agreement improves geometrically: about 3e-6 at N=32, 3e-10 at N=48
    grid = make_torus(3, [32])
    g = perturbed_metric(grid, 0.2, seed=3)
    V = preset_distribution("contact3", grid, g=g)
    ds = distribution_scalars(g, V, "spectral")
    assert np.max(np.abs(ds.scal - scal_oracle(g, "spectral"))) < 1e-5
    assert np.max(np.abs(ds.scal_frame - ds.scal)) < 1e-6


def test_metric_validation():
    grid = make_torus(2, [8])
    bad = np.zeros(grid.shape + (2, 2))
    bad[..., 0, 1] = 1.0
    with pytest.raises(GeometryError):
        MetricField(grid, bad)
    sing = np.zeros(grid.shape + (2, 2))
    sing[..., 0, 0] = 1.0
    with pytest.raises(GeometryError):
        MetricField(grid, sing)


def test_distribution_rank_loss_rejected():
    grid = make_torus(2, [8])
    x, _ = grid.coords()
    spans = np.stack([np.sin(TWOPI * x), np.zeros_like(x)], -1)[..., None]
    with pytest.raises(GeometryError):
        Distribution(grid, spans)


@given(st.integers(0, 50), st.floats(0.0, 0.3))
def test_projector_and_frame(seed, amp):
    grid = make_torus(3, [8])
    g = perturbed_metric(grid, amp, seed=seed)
    V = preset_distribution("contact3", grid, g=g)
    P = projector(g, V)
    assert np.max(np.abs(P @ P - P)) < 1e-10
    # g-self-adjoint: g P = P^T g
    gP = g.data @ P
    assert np.max(np.abs(gP - np.swapaxes(gP, -1, -2))) < 1e-10
    H = orthogonal_complement(g, V)
    assert H.rank == 1
    frame = orthonormalize(g, V, H)
    assert frame.check(g) < 1e-10


def test_twist_of_presets():
    grid = make_torus(3, [16])
    g = flat_metric(grid)
    contact = distribution_scalars(g, preset_distribution("contact3", grid), "spectral")
    coord = distribution_scalars(g, Distribution.coordinate(grid, [0, 1]), "spectral")
    assert np.min(contact.twist2_V) > 1.0
    assert np.max(np.abs(coord.twist2_V)) < 1e-12
    # twist equals twice (sigma - tau)
    assert np.max(np.abs(contact.twist2_V - contact.twist2_V_sigma)) < 1e-9


@given(st.integers(0, 30))
def test_sigma_dominates_tau_riemannian(seed):
    grid = make_torus(3, [8])
    g = perturbed_metric(grid, 0.2, seed=seed)
    ds = distribution_scalars(g, preset_distribution("contact3", grid, g=g), "spectral")
    assert np.all(ds.sigma_V - np.abs(ds.tau_V) >= -1e-10)
    assert np.all(ds.sigma_H - np.abs(ds.tau_H) >= -1e-10)


@given(st.floats(0.2, 5.0))
def test_scal_scales_inversely(c):
    g, _ = conformal2(16)
    a = scal_oracle(g.scaled(c), "spectral")
    b = scal_oracle(g, "spectral") / c
    assert np.max(np.abs(a - b)) < 1e-9 * max(1.0, np.max(np.abs(b)))


def test_foliation_of_flat_leaves():
    g, _ = warped(32)
    H = Distribution.coordinate(g.grid, [1, 2])
    assert np.max(np.abs(foliation_scal(g, H, "spectral"))) < 1e-9
    with pytest.raises(GeometryError):
        foliation_scal(flat_metric(g.grid), preset_distribution("contact3", g.grid))


def test_laplacian_of_coordinate_function_flat():
    grid = make_torus(2, [16])
    g = flat_metric(grid)
    x, y = grid.coords()
    f = np.sin(TWOPI * x) + np.cos(TWOPI * y)
    fg = FrameGeometry(g, Distribution.coordinate(grid, [0]), "spectral")
    assert np.max(np.abs(fg.laplacian(f) + TWOPI**2 * f)) < 1e-10
    assert np.max(np.abs(fg.laplacian(f, "V", "V") + TWOPI**2 * np.sin(TWOPI * x))) < 1e-10
