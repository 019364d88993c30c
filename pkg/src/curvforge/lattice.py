"""Uniform lattices, derivatives, Lie brackets and quadrature.

Fields are plain ndarrays whose leading axes are the grid axes. A scalar
field has shape ``grid.shape``, a vector or covector field ``grid.shape +
(n,)`` and a matrix field ``grid.shape + (n, n)``.
"""

from __future__ import annotations

from dataclasses import dataclass
from functools import lru_cache
from typing import Sequence

import numpy as np

SCHEMES = ("fd4", "spectral")
MIN_NODES = 8


def ein(subscripts: str, *operands):
    """np.einsum with contraction-order optimisation (deterministic path)."""
    return np.einsum(subscripts, *operands, optimize=len(operands) > 2)


class GridError(ValueError):
    """Invalid grid construction or incompatible field."""


@dataclass(frozen=True)
class Grid:
    """Uniform lattice with per-axis periodicity."""

    sizes: tuple[int, ...]
    lengths: tuple[float, ...]
    periodic: tuple[bool, ...]

    def __post_init__(self):
        if not (len(self.sizes) == len(self.lengths) == len(self.periodic)):
            raise GridError("sizes, lengths and periodic must have equal length")
        if len(self.sizes) < 1:
            raise GridError("grid needs at least one axis")
        if any(int(N) < MIN_NODES for N in self.sizes):
            raise GridError("resolution too low for stencils (need >= 8 nodes per axis)")
        if any(not (L > 0) for L in self.lengths):
            raise GridError("axis lengths must be positive")
        if sum(not p for p in self.periodic) > 1:
            raise GridError("at most one bounded axis is supported")

    @property
    def dim(self) -> int:
        return len(self.sizes)

    @property
    def shape(self) -> tuple[int, ...]:
        return tuple(int(N) for N in self.sizes)

    @property
    def spacing(self) -> tuple[float, ...]:
        return tuple(
            L / N if p else L / (N - 1)
            for N, L, p in zip(self.sizes, self.lengths, self.periodic)
        )

    @property
    def fully_periodic(self) -> bool:
        return all(self.periodic)

    @property
    def num_nodes(self) -> int:
        return int(np.prod(self.shape))

    def axis_coords(self, axis: int) -> np.ndarray:
        N = self.sizes[axis]
        return np.arange(N) * self.spacing[axis]

    def coords(self) -> list[np.ndarray]:
        """Coordinate fields x_0, ..., x_{n-1}, each of shape ``grid.shape``."""
        axes = [self.axis_coords(a) for a in range(self.dim)]
        return list(np.meshgrid(*axes, indexing="ij"))

    def boundary_mask(self, width: int = 1) -> np.ndarray:
        """True at nodes within ``width`` of a bounded-axis end."""
        mask = np.zeros(self.shape, dtype=bool)
        for a, p in enumerate(self.periodic):
            if p:
                continue
            idx = [slice(None)] * self.dim
            idx[a] = slice(0, width)
            mask[tuple(idx)] = True
            idx[a] = slice(self.sizes[a] - width, None)
            mask[tuple(idx)] = True
        return mask

    def describe(self) -> dict:
        return {
            "sizes": list(self.shape),
            "lengths": [float(L) for L in self.lengths],
            "periodic": list(self.periodic),
        }


def make_torus(n: int, sizes: Sequence[int], lengths: Sequence[float] | None = None) -> Grid:
    """Fully periodic grid on R^n / (L_1 Z x ... x L_n Z)."""
    if n < 1:
        raise GridError("dimension must be >= 1")
    sizes = list(sizes)
    if len(sizes) == 1 and n > 1:
        sizes = sizes * n
    lengths = [1.0] * n if lengths is None else [float(L) for L in lengths]
    if len(sizes) != n or len(lengths) != n:
        raise GridError("sizes/lengths must have n entries")
    return Grid(tuple(int(N) for N in sizes), tuple(lengths), (True,) * n)


def make_annulus(sizes: Sequence[int], lengths: Sequence[float] = (1.0, 1.0)) -> Grid:
    """[0, L_0] x S^1: axis 0 bounded, axis 1 periodic."""
    if len(sizes) != 2 or len(lengths) != 2:
        raise GridError("annulus needs two sizes and two lengths")
    return Grid((int(sizes[0]), int(sizes[1])), (float(lengths[0]), float(lengths[1])), (False, True))


def check_finite(name: str, arr: np.ndarray) -> np.ndarray:
    if not np.all(np.isfinite(arr)):
        raise FloatingPointError(f"{name} has non-finite values")
    return arr


# ---------------------------------------------------------------------------
# stencil weights


@lru_cache(maxsize=None)
def fd_weights(offsets: tuple[int, ...], order: int) -> np.ndarray:
    """Weights w with sum_j w_j f(x + o_j h) ~ h^order f^(order)(x).

    Solves the Taylor moment system; exact for polynomials of degree
    < len(offsets).
    """
    o = np.asarray(offsets, dtype=float)
    m = len(o)
    A = np.vander(o, m, increasing=True).T
    rhs = np.zeros(m)
    rhs[order] = float(np.prod(np.arange(1, order + 1)))
    return np.linalg.solve(A, rhs)


def _edge_stencils(order: int) -> tuple[list[tuple[int, np.ndarray]], int]:
    # one-sided stencils at nodes 0 and 1; mirrored at the far end
    npts = 5 if order == 1 else 6
    near = []
    for i in (0, 1):
        offs = tuple(range(-i, npts - i))
        near.append((i, fd_weights(offs, order)))
    return near, npts


def _fd_axis(f: np.ndarray, axis: int, h: float, periodic: bool, order: int) -> np.ndarray:
    if order == 1:
        if periodic:
            fp1 = np.roll(f, -1, axis)
            fm1 = np.roll(f, 1, axis)
            fp2 = np.roll(f, -2, axis)
            fm2 = np.roll(f, 2, axis)
            return (8.0 * (fp1 - fm1) - (fp2 - fm2)) / (12.0 * h)
    else:
        if periodic:
            fp1 = np.roll(f, -1, axis)
            fm1 = np.roll(f, 1, axis)
            fp2 = np.roll(f, -2, axis)
            fm2 = np.roll(f, 2, axis)
            return (16.0 * (fp1 + fm1) - (fp2 + fm2) - 30.0 * f) / (12.0 * h * h)

    g = np.moveaxis(f, axis, 0)
    N = g.shape[0]
    out = np.empty_like(g)
    if order == 1:
        out[2:-2] = (8.0 * (g[3:-1] - g[1:-3]) - (g[4:] - g[:-4])) / 12.0
    else:
        out[2:-2] = (16.0 * (g[3:-1] + g[1:-3]) - (g[4:] + g[:-4]) - 30.0 * g[2:-2]) / 12.0
    near, npts = _edge_stencils(order)
    sign = 1.0 if order % 2 == 0 else -1.0
    for i, w in near:
        out[i] = np.tensordot(w, g[:npts], axes=(0, 0))
        # mirror: offsets negate, odd derivatives flip sign
        out[N - 1 - i] = sign * np.tensordot(w, g[::-1][:npts], axes=(0, 0))
    out /= h**order
    return np.moveaxis(out, 0, axis)


def _wavenumbers(N: int, L: float) -> np.ndarray:
    return 2.0 * np.pi * np.fft.rfftfreq(N, d=L / N)


def _spectral_axis(f: np.ndarray, axis: int, N: int, L: float, order: int) -> np.ndarray:
    k = _wavenumbers(N, L)
    shape = [1] * f.ndim
    shape[axis] = k.size
    F = np.fft.rfft(f, axis=axis)
    if order == 1:
        mult = 1j * k
        if N % 2 == 0:
            mult[-1] = 0.0
    else:
        mult = -(k**2)
    F *= mult.reshape(shape)
    return np.fft.irfft(F, n=N, axis=axis)


def _check_scheme(grid: Grid, axis: int, scheme: str):
    if scheme not in SCHEMES:
        raise ValueError(f"unknown scheme {scheme!r}")
    if not 0 <= axis < grid.dim:
        raise GridError(f"axis {axis} out of range for {grid.dim}-d grid")
    if scheme == "spectral" and not grid.periodic[axis]:
        raise GridError("spectral derivative requested on a bounded axis")


def partial(field: np.ndarray, axis: int, grid: Grid, scheme: str = "fd4") -> np.ndarray:
    """First derivative along a grid axis.

    Works on any field with the grid axes leading; trailing component
    axes are carried along.
    """
    _check_scheme(grid, axis, scheme)
    f = np.asarray(field, dtype=float)
    if scheme == "spectral":
        return _spectral_axis(f, axis, grid.sizes[axis], grid.lengths[axis], 1)
    return _fd_axis(f, axis, grid.spacing[axis], grid.periodic[axis], 1)


def second_partial(field: np.ndarray, a: int, b: int, grid: Grid, scheme: str = "fd4") -> np.ndarray:
    """Second derivative along axes a, b.

    Pure second derivatives use the compact 5-point (or -k^2) form so the
    discrete Laplacian has no checkerboard null modes.
    """
    if a == b:
        _check_scheme(grid, a, scheme)
        f = np.asarray(field, dtype=float)
        if scheme == "spectral":
            return _spectral_axis(f, a, grid.sizes[a], grid.lengths[a], 2)
        return _fd_axis(f, a, grid.spacing[a], grid.periodic[a], 2)
    return partial(partial(field, a, grid, scheme), b, grid, scheme)


def gradient(field: np.ndarray, grid: Grid, scheme: str = "fd4") -> np.ndarray:
    """All first partials; the new derivative axis is appended last."""
    return np.stack([partial(field, a, grid, scheme) for a in range(grid.dim)], axis=-1)


def hessian(field: np.ndarray, grid: Grid, scheme: str = "fd4") -> np.ndarray:
    """Symmetric matrix of second partials of a scalar field."""
    n = grid.dim
    H = np.empty(np.shape(field) + (n, n))
    first = [partial(field, a, grid, scheme) for a in range(n)]
    for a in range(n):
        H[..., a, a] = second_partial(field, a, a, grid, scheme)
        for b in range(a + 1, n):
            H[..., a, b] = partial(first[a], b, grid, scheme)
            H[..., b, a] = H[..., a, b]
    return H


def _check_field(grid: Grid, arr: np.ndarray, trailing: int, name: str):
    if np.shape(arr)[: grid.dim] != grid.shape or np.ndim(arr) != grid.dim + trailing:
        raise GridError(f"{name} does not live on this grid")


def lie_bracket(v: np.ndarray, w: np.ndarray, grid: Grid, scheme: str = "fd4") -> np.ndarray:
    """[v, w]^i = v^a d_a w^i - w^a d_a v^i."""
    _check_field(grid, v, 1, "v")
    _check_field(grid, w, 1, "w")
    dv = gradient(v, grid, scheme)  # [..., i, a] = d_a v^i
    dw = gradient(w, grid, scheme)
    A = np.einsum("...a,...ia->...i", v, dw)
    B = np.einsum("...a,...ia->...i", w, dv)
    return A - B


def quadrature_weights(grid: Grid) -> list[np.ndarray]:
    ws = []
    for N, h, p in zip(grid.sizes, grid.spacing, grid.periodic):
        w = np.full(N, h)
        if not p:
            w[0] = w[-1] = 0.5 * h
        ws.append(w)
    return ws


def integrate(f: np.ndarray, grid: Grid, density: np.ndarray | None = None) -> float:
    """Quadrature of f against a positive density.

    Rectangle rule on periodic axes, trapezoid on bounded axes. Reduction
    runs axis by axis in a fixed order.
    """
    vals = np.asarray(f, dtype=float)
    _check_field(grid, vals, 0, "integrand")
    if density is not None:
        d = np.asarray(density, dtype=float)
        if np.any(d <= 0):
            raise ValueError("density must be positive at every node")
        vals = vals * d
    for w in reversed(quadrature_weights(grid)):
        vals = vals @ w
    return float(vals)


def dump_csv(path, field: np.ndarray, grid: Grid) -> None:
    """Row-major CSV dump with node coordinates and 17 significant digits."""
    arr = np.asarray(field, dtype=float)
    comps = arr.shape[grid.dim:]
    flat = arr.reshape(grid.num_nodes, -1)
    coords = np.stack([c.ravel() for c in grid.coords()], axis=1)
    header = [f"axis{a}" for a in range(grid.dim)]
    if len(comps) == 0:
        header.append("value")
    else:
        header += [f"c{j}" for j in range(flat.shape[1])]
    np.savetxt(path, np.hstack([coords, flat]), delimiter=",", fmt="%.17g",
               header=",".join(header), comments="")


def convergence_order(hs: Sequence[float], errs: Sequence[float]) -> float:
    """Least-squares slope of log(err) against log(h)."""
    hs = np.asarray(hs, dtype=float)
    errs = np.asarray(errs, dtype=float)
    if hs.size < 2:
        return float("nan")
    if np.any(errs <= 0):
        return float("inf")
    p = np.polyfit(np.log(hs), np.log(errs), 1)
    return float(p[0])
