"""Preset metrics, distributions and seeded trigonometric test fields."""

from __future__ import annotations

from typing import Sequence

import numpy as np

from .geometry import Distribution, GeometryError, MetricField, flat_metric, orthogonal_complement
from .lattice import Grid, gradient

TWOPI = 2.0 * np.pi
PRESETS = ("coordinate", "contact3", "spiral2", "rot_hyperplane", "rot_normal")


def _wavevectors(n: int, rng: np.random.Generator, count: int, kmax: int) -> np.ndarray:
    ks = rng.integers(-kmax, kmax + 1, size=(count, n))
    ks[np.all(ks == 0, axis=1), 0] = 1
    return ks


def trig_terms(n: int, rng: np.random.Generator, count: int = 3, kmax: int = 1) -> list[dict]:
    """Random terms c*cos(2 pi k.x + phase) with sum |c| = 1."""
    ks = _wavevectors(n, rng, count, kmax)
    c = rng.uniform(0.2, 1.0, size=count) * rng.choice([-1.0, 1.0], size=count)
    c /= np.sum(np.abs(c))
    ph = rng.uniform(0.0, TWOPI, size=count)
    return [{"k": [int(v) for v in k], "c": float(ci), "phase": float(p)}
            for k, ci, p in zip(ks, c, ph)]


def eval_terms(grid: Grid, terms: Sequence[dict]) -> np.ndarray:
    x = grid.coords()
    out = np.zeros(grid.shape)
    for t in terms:
        arg = sum(TWOPI * k * xa / L for k, xa, L in zip(t["k"], x, grid.lengths))
        out += t["c"] * np.cos(arg + t.get("phase", 0.0))
    return out


def random_trig_field(grid: Grid, rng: np.random.Generator, lo: float = -1.0, hi: float = 1.0,
                      count: int = 3, kmax: int = 1) -> np.ndarray:
    """Smooth periodic field with values strictly inside (lo, hi)."""
    r = eval_terms(grid, trig_terms(grid.dim, rng, count, kmax))
    mid, half = 0.5 * (lo + hi), 0.5 * (hi - lo)
    return mid + 0.9 * half * r


def perturbation_terms(n: int, rng: np.random.Generator, count: int = 2, kmax: int = 1) -> dict:
    """Trig terms for every upper-triangular metric entry."""
    return {f"{a},{b}": trig_terms(n, rng, count, kmax) for a in range(n) for b in range(a, n)}


def perturbed_metric(grid: Grid, amplitude: float, terms: dict | None = None,
                     seed: int = 0) -> MetricField:
    """g = I + amplitude * P / n with symmetric trig P, |P_ab| <= 1.

    The 1/n factor bounds the spectral norm of the perturbation by the
    amplitude, so g stays positive definite for amplitude < 1.
    """
    n = grid.dim
    if not 0 <= amplitude < 1:
        raise ValueError("perturbation amplitude must lie in [0, 1)")
    if terms is None:
        terms = perturbation_terms(n, np.random.default_rng(seed))
    data = np.zeros(grid.shape + (n, n))
    for a in range(n):
        data[..., a, a] = 1.0
    for a in range(n):
        for b in range(a, n):
            p = amplitude * eval_terms(grid, terms[f"{a},{b}"]) / n
            data[..., a, b] += p
            if a != b:
                data[..., b, a] += p
    return MetricField(grid, data)


def _plane_twist2(spans: np.ndarray, grid: Grid) -> np.ndarray:
    """Euclidean |pr_perp [b_i, b_j]|^2 summed over ordered pairs."""
    q = spans.shape[-1]
    d = gradient(spans, grid, "fd4")  # [..., a, j, c]
    Q, _ = np.linalg.qr(spans)
    out = np.zeros(grid.shape)
    for i in range(q):
        for j in range(q):
            if i == j:
                continue
            br = (np.einsum("...c,...ac->...a", spans[..., i], d[..., j, :])
                  - np.einsum("...c,...ac->...a", spans[..., j], d[..., i, :]))
            par = np.einsum("...ak,...k->...a", Q, np.einsum("...ak,...a->...k", Q, br))
            out += np.sum((br - par) ** 2, axis=-1)
    return out


def preset_distribution(name: str, grid: Grid, q: int | None = None,
                        g: MetricField | None = None) -> Distribution:
    """Named global distribution on a torus.

    coordinate: span of the first q coordinate fields.
    contact3: kernel of cos(2 pi x3) dx1 - sin(2 pi x3) dx2 on T^3.
    spiral2: span{d1, cos(2 pi x1) d2 + sin(2 pi x1) d3}.
    rot_hyperplane: kernel of cos(2 pi x_n) dx1 - sin(2 pi x_n) dx2.
    rot_normal: g-orthogonal line to rot_hyperplane.
    """
    n = grid.dim
    if not grid.fully_periodic:
        raise GeometryError("preset distributions need a fully periodic grid")
    if name == "coordinate":
        if q is None:
            raise ValueError("coordinate preset needs q")
        return Distribution.coordinate(grid, list(range(q)))
    x = grid.coords()
    I = np.eye(n)
    ones = np.ones(grid.shape)
    zeros = np.zeros(grid.shape)

    def vec(*comps):
        return np.stack(list(comps) + [zeros] * (n - len(comps)), axis=-1)

    if name in ("contact3", "rot_hyperplane", "rot_normal"):
        if name == "contact3" and n != 3:
            raise GeometryError("contact3 lives on T^3")
        if n < 3:
            raise GeometryError(f"{name} needs n >= 3")
        th = TWOPI * x[n - 1] / grid.lengths[n - 1]
        first = vec(np.sin(th), np.cos(th))
        rest = [np.broadcast_to(I[:, a], grid.shape + (n,)) for a in range(2, n)]
        spans = np.stack([first] + rest, axis=-1)
        normal = vec(np.cos(th), -np.sin(th))[..., None]
        plane = Distribution(grid, spans, hint=normal, name=name if name != "rot_normal" else "rot_hyperplane")
    elif name == "spiral2":
        if n < 3:
            raise GeometryError("spiral2 needs n >= 3")
        th = TWOPI * x[0] / grid.lengths[0]
        second = vec(zeros, np.cos(th), np.sin(th))
        spans = np.stack([vec(ones), second], axis=-1)
        hint = [vec(zeros, -np.sin(th), np.cos(th))]
        hint += [np.broadcast_to(I[:, a], grid.shape + (n,)) for a in range(3, n)]
        plane = Distribution(grid, spans, hint=np.stack(hint, axis=-1), name=name)
    else:
        raise ValueError(f"unknown preset {name!r}")

    t2 = _plane_twist2(plane.spans, grid)
    if not np.min(t2) > 0:
        raise GeometryError(f"preset {name} failed twistedness verification")
    if name == "rot_normal":
        metric = flat_metric(grid) if g is None else g
        line = orthogonal_complement(metric, plane)
        return Distribution(grid, line.spans, hint=plane.spans, name="rot_normal")
    return plane
