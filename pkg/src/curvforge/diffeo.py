"""Explicit torus diffeomorphisms and pullbacks of scalars and metrics."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .geometry import MetricField
from .lattice import Grid, GridError, ein

TWOPI = 2.0 * np.pi
WARP_LIMIT = 0.95


@dataclass(frozen=True)
class Translation:
    shift: tuple[float, ...]

    def apply(self, x: list[np.ndarray], L) -> tuple[list[np.ndarray], np.ndarray]:
        n = len(x)
        y = [xa + c for xa, c in zip(x, self.shift)]
        J = np.broadcast_to(np.eye(n), x[0].shape + (n, n))
        return y, J


@dataclass(frozen=True)
class Shear:
    """x_a -> x_a + sum_k c_k sin(2 pi k x_b / L_b + phase_k)."""

    axis: int
    source: int
    terms: tuple[tuple[int, float, float], ...]  # (k, c, phase)

    def __post_init__(self):
        if self.axis == self.source:
            raise ValueError("shear source axis must differ from the sheared axis")
        if any(int(k) < 1 for k, _, _ in self.terms):
            raise ValueError("shear wavenumbers must be positive integers")

    def apply(self, x, L):
        n = len(x)
        xb = x[self.source]
        psi = np.zeros_like(xb)
        dpsi = np.zeros_like(xb)
        for k, c, ph in self.terms:
            w = TWOPI * k / L[self.source]
            psi += c * np.sin(w * xb + ph)
            dpsi += c * w * np.cos(w * xb + ph)
        y = list(x)
        y[self.axis] = x[self.axis] + psi
        J = np.zeros(xb.shape + (n, n))
        for a in range(n):
            J[..., a, a] = 1.0
        J[..., self.axis, self.source] = dpsi
        return y, J


@dataclass(frozen=True)
class Warp:
    """x_a -> x_a + rho sin(2 pi x_a / L_a + phase), |2 pi rho / L_a| < 0.95."""

    axis: int
    rho: float
    phase: float = 0.0

    def check(self, L):
        if abs(TWOPI * self.rho / L[self.axis]) >= WARP_LIMIT:
            raise ValueError("warp amplitude too large for a diffeomorphism")

    def apply(self, x, L):
        self.check(L)
        n = len(x)
        w = TWOPI / L[self.axis]
        xa = x[self.axis]
        y = list(x)
        y[self.axis] = xa + self.rho * np.sin(w * xa + self.phase)
        J = np.zeros(xa.shape + (n, n))
        for a in range(n):
            J[..., a, a] = 1.0
        J[..., self.axis, self.axis] = 1.0 + self.rho * w * np.cos(w * xa + self.phase)
        return y, J


@dataclass(frozen=True)
class TorusDiffeo:
    """Composition of primitives; ``maps[0]`` acts first."""

    maps: tuple = field(default_factory=tuple)

    def __post_init__(self):
        for m in self.maps:
            if not isinstance(m, (Translation, Shear, Warp)):
                raise TypeError("unknown primitive map")

    def evaluate(self, grid: Grid) -> tuple[list[np.ndarray], np.ndarray]:
        """Image points and Jacobian d phi^a / d x^i at every node."""
        if not grid.fully_periodic:
            raise GridError("torus diffeomorphisms need a fully periodic grid")
        L = grid.lengths
        x = grid.coords()
        n = grid.dim
        J = np.broadcast_to(np.eye(n), grid.shape + (n, n)).copy()
        for m in self.maps:
            x, Jm = m.apply(x, L)
            J = Jm @ J
        return x, J

    def describe(self) -> list[dict]:
        out = []
        for m in self.maps:
            d = {"type": type(m).__name__.lower()}
            d.update({k: (list(v) if isinstance(v, tuple) else v) for k, v in m.__dict__.items()})
            out.append(d)
        return out


def identity() -> TorusDiffeo:
    return TorusDiffeo(())


def trig_interpolate(values: np.ndarray, grid: Grid, points: list[np.ndarray]) -> np.ndarray:
    """Evaluate the trigonometric interpolant of periodic nodal values at points.

    Extra trailing component axes are interpolated independently.
    """
    n = grid.dim
    comps = values.shape[n:]
    V = values.reshape(grid.shape + (-1,))
    F = np.fft.fftn(V, axes=tuple(range(n))) / grid.num_nodes
    pts = [np.asarray(p).ravel() for p in points]
    out = np.empty((pts[0].size, V.shape[-1]))
    chunk = 4096
    for start in range(0, pts[0].size, chunk):
        sl = slice(start, start + chunk)
        acc = F
        # contract the leading axis each time; phases are per point
        for a in range(n):
            k = np.fft.fftfreq(grid.sizes[a], d=1.0 / grid.sizes[a])
            ph = np.exp(1j * TWOPI * np.outer(pts[a][sl], k) / grid.lengths[a])  # (P, N_a)
            if a == 0:
                acc = ein("pk,k...->p...", ph, acc)
            else:
                acc = ein("pk,pk...->p...", ph, acc)
        out[sl] = acc.real
    return out.reshape(points[0].shape + comps)


def pullback_scalar(s: np.ndarray, phi: TorusDiffeo, grid: Grid) -> np.ndarray:
    """phi^* s = s o phi."""
    y, _ = phi.evaluate(grid)
    return trig_interpolate(s, grid, y)


def pullback_metric(g: MetricField, phi: TorusDiffeo) -> MetricField:
    """(phi^* g)_ij = d_i phi^a d_j phi^b g_ab o phi."""
    y, J = phi.evaluate(g.grid)
    gphi = trig_interpolate(g.data, g.grid, y)
    gphi = 0.5 * (gphi + np.swapaxes(gphi, -1, -2))
    data = ein("...ai,...ab,...bj->...ij", J, gphi, J)
    return MetricField(g.grid, 0.5 * (data + np.swapaxes(data, -1, -2)))


def pullback(obj, phi: TorusDiffeo, grid: Grid | None = None):
    if isinstance(obj, MetricField):
        return pullback_metric(obj, phi)
    if grid is None:
        raise ValueError("scalar pullback needs the grid")
    return pullback_scalar(np.asarray(obj, dtype=float), phi, grid)
