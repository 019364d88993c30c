"""Metrics, adapted orthonormal frames and distribution curvature scalars.

Frame convention: ``E[..., a, i] = e_i^a``; legs ``0..q-1`` span V and the
remaining legs span its orthogonal complement H. ON Christoffel symbols are
stored as ``G[..., i, j, k] = g(nabla_{e_i} e_j, e_k)``. Coordinate symbols are
stored as ``C[..., k, i, j] = Gamma^k_{ij}``.
"""

from __future__ import annotations

from dataclasses import dataclass, field, fields
from itertools import combinations
from typing import Sequence

import numpy as np

from .lattice import Grid, GridError, ein, gradient, hessian, integrate, partial

SYMMETRY_TOL = 1e-13
INDEX_TOL = 1e-9
RANK_TOL = 1e-8
LIGHTLIKE_TOL = 1e-8
FRAME_TOL = 1e-9
COMPLEMENT_TOL = 1e-10
INTEGRABLE_TOL = 1e-8


class GeometryError(ValueError):
    """Degenerate metric, bad distribution or failed frame construction."""


# ---------------------------------------------------------------------------
# metrics and distributions


class MetricField:
    """Symmetric nondegenerate matrix field of constant index."""

    def __init__(self, grid: Grid, data: np.ndarray, check: bool = True):
        data = np.asarray(data, dtype=float)
        n = grid.dim
        if data.shape != grid.shape + (n, n):
            raise GridError("metric data has wrong shape")
        if not np.all(np.isfinite(data)):
            raise GeometryError("metric has non-finite entries")
        self.grid = grid
        self.data = data
        self._inv = None
        self._index = None
        if check:
            asym = np.max(np.abs(data - np.swapaxes(data, -1, -2)))
            scale = max(1.0, float(np.max(np.abs(data))))
            if asym > SYMMETRY_TOL * scale:
                raise GeometryError(f"metric not symmetric (max asymmetry {asym:.3e})")
            self._index = metric_index(self)

    @property
    def n(self) -> int:
        return self.grid.dim

    @property
    def index(self) -> int:
        if self._index is None:
            self._index = metric_index(self)
        return self._index

    @property
    def inv(self) -> np.ndarray:
        if self._inv is None:
            self._inv = np.linalg.inv(self.data)
        return self._inv

    def det(self) -> np.ndarray:
        return np.linalg.det(self.data)

    def density(self) -> np.ndarray:
        return np.sqrt(np.abs(self.det()))

    def inner(self, v: np.ndarray, w: np.ndarray) -> np.ndarray:
        return ein("...a,...ab,...b->...", v, self.data, w)

    def scaled(self, c: float) -> "MetricField":
        return MetricField(self.grid, c * self.data)

    def __neg__(self) -> "MetricField":
        return MetricField(self.grid, -self.data)


def flat_metric(grid: Grid, signs: Sequence[float] | None = None) -> MetricField:
    n = grid.dim
    diag = np.ones(n) if signs is None else np.asarray(signs, dtype=float)
    return MetricField(grid, np.broadcast_to(np.diag(diag), grid.shape + (n, n)).copy())


def metric_index(g: MetricField, tol: float = INDEX_TOL) -> int:
    """Number of negative eigenvalues; must be the same at every node."""
    lam = np.linalg.eigvalsh(g.data)
    if np.min(np.abs(lam)) <= tol:
        raise GeometryError("metric eigenvalue within index_tol of zero")
    neg = np.sum(lam < 0, axis=-1)
    q = int(neg.flat[0])
    if np.any(neg != q):
        raise GeometryError("metric index varies across nodes")
    return q


class Distribution:
    """Rank-q distribution given by q globally smooth spanning fields.

    ``spans[..., a, j]`` is component a of the j-th spanning field.
    ``hint`` optionally carries n-q fields transverse to the distribution;
    they seed the orthogonal complement.
    """

    def __init__(self, grid: Grid, spans: np.ndarray, hint: np.ndarray | None = None,
                 name: str = "custom", check: bool = True):
        spans = np.asarray(spans, dtype=float)
        n = grid.dim
        if spans.ndim != grid.dim + 2 or spans.shape[:-1] != grid.shape + (n,):
            raise GridError("span array has wrong shape")
        self.grid = grid
        self.spans = spans
        self.hint = None if hint is None else np.asarray(hint, dtype=float)
        self.name = name
        if check and self.rank > 0:
            sv = np.linalg.svd(spans, compute_uv=False)
            if np.min(sv[..., -1]) <= RANK_TOL:
                raise GeometryError("distribution spans lose rank somewhere")

    @property
    def rank(self) -> int:
        return self.spans.shape[-1]

    @classmethod
    def coordinate(cls, grid: Grid, axes: Sequence[int]) -> "Distribution":
        n = grid.dim
        I = np.eye(n)
        spans = np.broadcast_to(I[:, list(axes)], grid.shape + (n, len(axes))).copy()
        rest = [a for a in range(n) if a not in axes]
        hint = np.broadcast_to(I[:, rest], grid.shape + (n, len(rest))).copy()
        return cls(grid, spans, hint, name=f"coordinate{tuple(axes)}")

    @classmethod
    def full(cls, grid: Grid) -> "Distribution":
        return cls.coordinate(grid, list(range(grid.dim)))


def projector(g: MetricField, V: Distribution) -> np.ndarray:
    """g-orthogonal projector onto V: B (B^T g B)^{-1} B^T g."""
    B = V.spans
    if V.rank == 0:
        return np.zeros(g.data.shape)
    gB = g.data @ B
    M = np.swapaxes(B, -1, -2) @ gB
    s = np.linalg.svd(M, compute_uv=False)
    if np.min(np.abs(s[..., -1])) <= RANK_TOL:
        raise GeometryError("V not g-good: restriction of g to V is degenerate")
    return B @ np.linalg.solve(M, np.swapaxes(gB, -1, -2))


def orthogonal_complement(g: MetricField, V: Distribution) -> Distribution:
    """Spanning fields for the g-orthogonal complement of V.

    The transverse hint (or, failing that, the best fixed subset of
    coordinate fields) is projected off V.
    """
    n, q = g.n, V.rank
    P = projector(g, V)
    Q = np.eye(n) - P
    if q == n:
        return Distribution(g.grid, np.zeros(g.grid.shape + (n, 0)), name="zero")
    if V.hint is not None:
        cands = [V.hint]
    else:
        I = np.eye(n)
        cands = [np.broadcast_to(I[:, list(c)], g.grid.shape + (n, n - q))
                 for c in combinations(range(n), n - q)]
    best, best_sv = None, -1.0
    for W0 in cands:
        W = Q @ W0
        sv = np.linalg.svd(W, compute_uv=False)
        scale = np.linalg.norm(W0, axis=-2).max(axis=-1)
        m = float(np.min(sv[..., -1] / scale))
        if m > best_sv:
            best, best_sv = W, m
    if best_sv <= RANK_TOL:
        raise GeometryError("could not find a global transverse frame for the complement")
    H = Distribution(g.grid, best, hint=V.spans, name=f"perp({V.name})")
    cross = ein("...ai,...ab,...bj->...ij", V.spans, g.data, H.spans)
    if np.max(np.abs(cross)) > COMPLEMENT_TOL * max(1.0, float(np.max(np.abs(g.data)))):
        raise GeometryError("complement fails orthogonality check")
    return H


# ---------------------------------------------------------------------------
# frames


@dataclass
class AdaptedONFrame:
    """g-orthonormal frame whose first ``v_count`` legs span V."""

    grid: Grid
    E: np.ndarray
    eps: np.ndarray
    v_count: int
    scheme: str = "fd4"
    _dE: np.ndarray | None = field(default=None, repr=False)

    @property
    def n(self) -> int:
        return self.grid.dim

    def legs(self, subset: str) -> list[int]:
        q, n = self.v_count, self.n
        if subset == "V":
            return list(range(q))
        if subset == "H":
            return list(range(q, n))
        if subset == "full":
            return list(range(n))
        raise ValueError(f"unknown subset {subset!r}")

    @property
    def dE(self) -> np.ndarray:
        """``dE[..., a, i, c] = d_c e_i^a``."""
        if self._dE is None:
            self._dE = gradient(self.E, self.grid, self.scheme)
        return self._dE

    def along(self, df: np.ndarray) -> np.ndarray:
        """Frame derivatives e_i(f) from a coordinate gradient ``df[..., a]``."""
        return ein("...ai,...a->...i", self.E, df)

    def check(self, g: MetricField, tol: float = FRAME_TOL) -> float:
        G = ein("...ai,...ab,...bj->...ij", self.E, g.data, self.E)
        err = float(np.max(np.abs(G - np.diag(self.eps))))
        if err > tol:
            raise GeometryError(f"frame not orthonormal (error {err:.3e})")
        if int(np.sum(self.eps < 0)) != g.index:
            raise GeometryError("frame signs disagree with metric index")
        return err


def orthonormalize(g: MetricField, V: Distribution, W: Distribution | None = None,
                   scheme: str = "fd4") -> AdaptedONFrame:
    """Node-wise Gram-Schmidt, V block first, then the complement block."""
    if W is None:
        W = orthogonal_complement(g, V)
    if V.rank + W.rank != g.n:
        raise GeometryError("V and W ranks must add up to n")
    vecs = np.concatenate([V.spans, W.spans], axis=-1)
    n = g.n
    E = np.empty(g.grid.shape + (n, n))
    eps = np.empty(n)
    for i in range(n):
        v = vecs[..., i].copy()
        for k in range(i):
            ek = E[..., k]
            v -= (eps[k] * g.inner(v, ek))[..., None] * ek
        nrm = g.inner(v, v)
        if np.min(np.abs(nrm)) < LIGHTLIKE_TOL:
            raise GeometryError("near-lightlike direction during Gram-Schmidt")
        sgn = np.sign(nrm)
        if np.any(sgn != sgn.flat[0]):
            raise GeometryError("causal character of a frame leg varies across nodes")
        eps[i] = sgn.flat[0]
        E[..., i] = v / np.sqrt(np.abs(nrm))[..., None]
    frame = AdaptedONFrame(g.grid, E, eps, V.rank, scheme)
    frame.check(g)
    return frame


# ---------------------------------------------------------------------------
# coordinate curvature (independent oracle)


def coord_christoffel(g: MetricField, scheme: str = "fd4") -> np.ndarray:
    """``C[..., k, i, j] = Gamma^k_ij`` from derivatives of the metric entries."""
    dg = gradient(g.data, g.grid, scheme)  # [..., i, j, c] = d_c g_ij
    # lowered: Gamma_{m i j} = 1/2 (d_i g_jm + d_j g_im - d_m g_ij)
    low = 0.5 * (ein("...jmi->...mij", dg) + ein("...imj->...mij", dg)
                 - ein("...ijm->...mij", dg))
    n = g.n
    return (g.inv @ low.reshape(low.shape[:-2] + (n * n,)).reshape(low.shape[:-3] + (n, n * n))
            ).reshape(low.shape)


def scal_oracle(g: MetricField, scheme: str = "fd4") -> np.ndarray:
    """Scalar curvature via coordinate Christoffel symbols and the Ricci tensor."""
    grid, n = g.grid, g.n
    C = coord_christoffel(g, scheme)
    # d_k Gamma^k_ij
    div_C = np.zeros(grid.shape + (n, n))
    for k in range(n):
        div_C += partial(C[..., k, :, :], k, grid, scheme)
    trace = ein("...kik->...i", C)  # Gamma^k_ik
    dtrace = gradient(trace, grid, scheme)  # [..., i, j] = d_j Gamma^k_ik
    quad = (ein("...kkl,...lij->...ij", C, C)
            - ein("...kjl,...lik->...ij", C, C))
    ric = div_C - dtrace + quad
    return ein("...ij,...ij->...", g.inv, ric)


def riemann_tensor(g: MetricField, scheme: str = "fd4") -> np.ndarray:
    """``R[..., l, i, j, k] = R^l_ijk`` with R(d_j, d_k) d_i = R^l_ijk d_l."""
    grid = g.grid
    C = coord_christoffel(g, scheme)
    dC = gradient(C, grid, scheme)  # [..., l, k, i, j] = d_j Gamma^l_ki
    term = ein("...lkij->...lijk", dC)
    R = term - np.swapaxes(term, -1, -2)
    quad = ein("...ljm,...mki->...lijk", C, C)
    R += quad - np.swapaxes(quad, -1, -2)
    return R


def sectional_scal(g: MetricField, frame: AdaptedONFrame, upper: str, lower: str,
                   scheme: str = "fd4") -> np.ndarray:
    """sum_{i in U, k in W} eps_i eps_k R(e_i, e_k, e_k, e_i) from the coordinate Riemann tensor."""
    R = riemann_tensor(g, scheme)
    Rlow = ein("...ml,...lijk->...mijk", g.data, R)
    E, eps = frame.E, frame.eps
    out = np.zeros(g.grid.shape)
    for i in frame.legs(upper):
        for k in frame.legs(lower):
            ei, ek = E[..., i], E[..., k]
            # R(e_i, e_k, e_k, e_i) = g(R(e_i, e_k) e_k, e_i)
            val = ein("...mijk,...m,...i,...j,...k->...", Rlow, ei, ek, ei, ek)
            out += eps[i] * eps[k] * val
    return out


# ---------------------------------------------------------------------------
# ON Christoffel symbols


def _along_frame(E: np.ndarray, D: np.ndarray) -> np.ndarray:
    """``out[..., b, i, j] = sum_a E[..., a, i] D[..., b, j, a]``."""
    return np.swapaxes(D @ E[..., None, :, :], -1, -2)


def _pair_last(N: np.ndarray, gE: np.ndarray) -> np.ndarray:
    """``out[..., i, j, k] = sum_b N[..., b, i, j] gE[..., b, k]``."""
    n = N.shape[-1]
    flat = np.swapaxes(N.reshape(N.shape[:-2] + (n * n,)), -1, -2)
    return (flat @ gE).reshape(N.shape[:-3] + (n, n, gE.shape[-1]))


def on_christoffel(g: MetricField, frame: AdaptedONFrame, method: str = "covariant",
                   scheme: str | None = None) -> np.ndarray:
    """``G[..., i, j, k] = g(nabla_{e_i} e_j, e_k)``."""
    scheme = frame.scheme if scheme is None else scheme
    E = frame.E
    gE = g.data @ E
    if method == "covariant":
        C = coord_christoffel(g, scheme)
        dE = frame.dE if scheme == frame.scheme else gradient(E, g.grid, scheme)
        # (nabla_a e_j)^b = d_a e_j^b + Gamma^b_ac e_j^c
        D = dE + np.swapaxes(C @ E[..., None, :, :], -1, -2)
        return _pair_last(_along_frame(E, D), gE)
    if method == "koszul":
        c = frame_bracket_coeffs(g, frame, scheme)
        return 0.5 * (c + ein("...kij->...ijk", c) + ein("...kji->...ijk", c))
    raise ValueError(f"unknown method {method!r}")


def frame_brackets(frame: AdaptedONFrame, scheme: str | None = None) -> np.ndarray:
    """``B[..., b, i, j] = [e_i, e_j]^b``."""
    scheme = frame.scheme if scheme is None else scheme
    dE = frame.dE if scheme == frame.scheme else gradient(frame.E, frame.grid, scheme)
    A = _along_frame(frame.E, dE)
    return A - np.swapaxes(A, -1, -2)


def frame_bracket_coeffs(g: MetricField, frame: AdaptedONFrame, scheme: str | None = None) -> np.ndarray:
    """``c[..., i, j, k] = g([e_i, e_j], e_k)``."""
    B = frame_brackets(frame, scheme)
    return _pair_last(B, g.data @ frame.E)


def sub_divergence(frame: AdaptedONFrame, G: np.ndarray, subset: str, X: np.ndarray,
                   g: MetricField) -> np.ndarray:
    """div^U(X) = sum_{i in U} eps_i g(nabla_{e_i} X, e_i)."""
    eps = frame.eps
    # frame components x^j = eps_j g(X, e_j)
    x = eps * ein("...a,...ab,...bj->...j", X, g.data, frame.E)
    dx = gradient(x, frame.grid, frame.scheme)  # [..., j, a]
    out = np.zeros(frame.grid.shape)
    for i in frame.legs(subset):
        out += ein("...a,...a->...", frame.E[..., i], dx[..., i, :])
        out += eps[i] * ein("...j,...j->...", x, G[..., i, :, i])
    return out


def frame_divergences(frame: AdaptedONFrame, G: np.ndarray, subset: str) -> np.ndarray:
    """div^U(e_j) for every leg j, stacked last."""
    legs = frame.legs(subset)
    if not legs:
        return np.zeros(frame.grid.shape + (frame.n,))
    eps = frame.eps[legs]
    return ein("k,...kjk->...j", eps, G[..., legs, :, :][..., :, :, legs])


# ---------------------------------------------------------------------------
# adapted-frame calculus bundle


class FrameGeometry:
    """Frame, ON Christoffels and sub-divergences of (g, V) on one grid."""

    def __init__(self, g: MetricField, V: Distribution, scheme: str = "fd4",
                 H: Distribution | None = None):
        self.g = g
        self.V = V
        self.scheme = scheme
        self.grid = g.grid
        self.H = orthogonal_complement(g, V) if H is None else H
        self.frame = orthonormalize(g, V, self.H, scheme)
        self.G = on_christoffel(g, self.frame, "covariant")
        self.div = {U: frame_divergences(self.frame, self.G, U) for U in ("V", "H", "full")}

    @property
    def n(self) -> int:
        return self.g.n

    @property
    def q(self) -> int:
        return self.V.rank

    @property
    def eps(self) -> np.ndarray:
        return self.frame.eps

    def legs(self, U: str) -> list[int]:
        return self.frame.legs(U)

    @staticmethod
    def perp(U: str) -> str:
        return {"V": "H", "H": "V", "full": "none"}[U]

    def e_deriv(self, f: np.ndarray) -> np.ndarray:
        """e_i(f) for all legs."""
        return self.frame.along(gradient(f, self.grid, self.scheme))

    def laplacian(self, f: np.ndarray, upper: str = "full", lower: str = "full") -> np.ndarray:
        """Delta^U_{g,W}(f) = sum_{W and U} eps_i e_i e_i f + sum_W eps_i div^U(e_i) e_i f."""
        E, eps, dE = self.frame.E, self.eps, self.frame.dE
        df = gradient(f, self.grid, self.scheme)
        ef = self.frame.along(df)
        W = self.legs(lower)
        both = [i for i in W if i in self.legs(upper)]
        out = np.zeros(self.grid.shape)
        if both:
            Hf = hessian(f, self.grid, self.scheme)
            Eb = E[..., both]
            A = ein("i,...ai,...bi->...ab", eps[both], Eb, Eb)
            out += ein("...ab,...ab->...", A, Hf)
            # e_i(e_i^b) d_b f
            Bv = ein("i,...ai,...bia->...b", eps[both], Eb, dE[..., both, :])
            out += ein("...b,...b->...", Bv, df)
        divU = self.div[upper]
        for i in W:
            out += eps[i] * divU[..., i] * ef[..., i]
        return out

    def pair(self, a: np.ndarray, b: np.ndarray, over: str) -> np.ndarray:
        """sum_{i in U} eps_i a_i b_i for frame-component arrays."""
        legs = self.legs(over)
        if not legs:
            return np.zeros(self.grid.shape)
        return ein("i,...i,...i->...", self.eps[legs], a[..., legs], b[..., legs])

    def df_pair(self, f: np.ndarray, h: np.ndarray, over: str) -> np.ndarray:
        return self.pair(self.e_deriv(f), self.e_deriv(h), over)

    def div_pair(self, which: str, f: np.ndarray, over: str) -> np.ndarray:
        """<div^which, df>_over."""
        return self.pair(self.div[which], self.e_deriv(f), over)

    def scalars(self) -> "DistributionScalars":
        return _distribution_scalars(self)


@dataclass
class DistributionScalars:
    sigma_V: np.ndarray
    tau_V: np.ndarray
    sigma_H: np.ndarray
    tau_H: np.ndarray
    divV_divV_H: np.ndarray
    divH_divH_V: np.ndarray
    qual_V: np.ndarray
    qual_H: np.ndarray
    scal_VV: np.ndarray
    scal_HH: np.ndarray
    scal_VH: np.ndarray
    xi: np.ndarray
    chi: np.ndarray
    twist2_V: np.ndarray
    twist2_H: np.ndarray
    scal: np.ndarray
    scal_frame: np.ndarray
    twist2_V_sigma: np.ndarray
    twist2_H_sigma: np.ndarray

    def as_dict(self) -> dict[str, np.ndarray]:
        return {f.name: getattr(self, f.name) for f in fields(self)}

    @property
    def twistnorm_V(self) -> np.ndarray:
        """|Twist_V|^2_g as it enters the curvature formulas (sigma - tau)."""
        return 0.5 * self.twist2_V

    @property
    def twistnorm_H(self) -> np.ndarray:
        return 0.5 * self.twist2_H


def _sigma_tau(G: np.ndarray, eps: np.ndarray, U: list[int], P: list[int]):
    shape = G.shape[:-3]
    if not U or not P:
        return np.zeros(shape), np.zeros(shape)
    sub = G[..., U, :, :][..., :, P, :][..., :, :, U]  # i in U, j in P, k in U
    w = ein("i,j,k->ijk", eps[U], eps[P], eps[U])
    sigma = ein("ijk,...ijk,...ijk->...", w, sub, sub)
    # Gamma_kj^i with k in U, j in P, i in U
    subT = ein("...kji->...ijk", sub)
    tau = ein("ijk,...ijk,...ijk->...", w, sub, subT)
    return sigma, tau


def _twist2(c: np.ndarray, eps: np.ndarray, U: list[int], P: list[int]) -> np.ndarray:
    """sum_{i,j in U, k in P} eps eps eps g([e_i, e_j], e_k)^2."""
    shape = c.shape[:-3]
    if len(U) < 2 or not P:
        return np.zeros(shape)
    sub = c[..., U, :, :][..., :, U, :][..., :, :, P]
    w = ein("i,j,k->ijk", eps[U], eps[U], eps[P])
    return ein("ijk,...ijk,...ijk->...", w, sub, sub)


def _distribution_scalars(fg: FrameGeometry) -> DistributionScalars:
    G, eps, grid, scheme = fg.G, fg.eps, fg.grid, fg.scheme
    E = fg.frame.E
    legs = {U: fg.legs(U) for U in ("V", "H", "full")}
    div = fg.div
    # e_j(div^U(e_j)) for all j
    ddiv = {}
    for U in ("V", "H", "full"):
        grad = gradient(div[U], grid, scheme)  # [..., j, a]
        ddiv[U] = ein("...aj,...ja->...j", E, grad)

    def esum(arr, U):
        L = legs[U]
        if not L:
            return np.zeros(grid.shape)
        return ein("j,...j->...", eps[L], arr[..., L])

    sig, tau = {}, {}
    sig["V"], tau["V"] = _sigma_tau(G, eps, legs["V"], legs["H"])
    sig["H"], tau["H"] = _sigma_tau(G, eps, legs["H"], legs["V"])

    def gg(U):
        # sum_{i,j,k in U} eps eps eps Gamma_ij^k Gamma_ji^k
        L = legs[U]
        if not L:
            return np.zeros(grid.shape)
        sub = G[..., L, :, :][..., :, L, :][..., :, :, L]
        w = ein("i,j,k->ijk", eps[L], eps[L], eps[L])
        return ein("ijk,...ijk,...jik->...", w, sub, sub)

    def cross_gg(U, P):
        # sum_{i,k in U, j in P} eps eps eps Gamma_ij^k Gamma_ji^k
        if not legs[U] or not legs[P]:
            return np.zeros(grid.shape)
        a = G[..., legs[U], :, :][..., :, legs[P], :][..., :, :, legs[U]]
        b = G[..., legs[P], :, :][..., :, legs[U], :][..., :, :, legs[U]]
        w = ein("i,j,k->ijk", eps[legs[U]], eps[legs[P]], eps[legs[U]])
        return ein("ijk,...ijk,...jik->...", w, a, b)

    def scal_UU(U):
        P = fg.perp(U)
        return (-2.0 * esum(ddiv[U], U) - esum(div[U] ** 2, "full") - gg(U)
                + tau[U] - 2.0 * cross_gg(U, P))

    def qual(U):
        P = fg.perp(U)
        return esum(ddiv[P], U) + esum(div[U] * div[P], U) + tau[U]

    scal_VV = scal_UU("V")
    scal_HH = scal_UU("H")
    scal_VH = (-esum(ddiv["H"], "V") - esum(ddiv["V"], "H")
               - esum(div["V"] * div["H"], "full") - tau["V"] - tau["H"])
    qual_V = qual("V")
    qual_H = qual("H")
    divV_divV_H = esum(div["V"] ** 2, "H")
    divH_divH_V = esum(div["H"] ** 2, "V")

    scal = scal_VV + scal_HH + 2.0 * scal_VH
    scal_frame = -(2.0 * esum(ddiv["full"], "full") + esum(div["full"] ** 2, "full") + gg("full"))

    c = frame_bracket_coeffs(fg.g, fg.frame, scheme)
    twist2_V = _twist2(c, eps, legs["V"], legs["H"])
    twist2_H = _twist2(c, eps, legs["H"], legs["V"])

    xi = (divH_divH_V - divV_divV_H + 0.5 * (sig["H"] + tau["H"]) - 0.5 * (sig["V"] + tau["V"])
          - scal_VV + 2.0 * qual_V)
    chi = scal + xi + 0.5 * (sig["H"] - tau["H"])
    return DistributionScalars(
        sigma_V=sig["V"], tau_V=tau["V"], sigma_H=sig["H"], tau_H=tau["H"],
        divV_divV_H=divV_divV_H, divH_divH_V=divH_divH_V,
        qual_V=qual_V, qual_H=qual_H,
        scal_VV=scal_VV, scal_HH=scal_HH, scal_VH=scal_VH,
        xi=xi, chi=chi, twist2_V=twist2_V, twist2_H=twist2_H,
        scal=scal, scal_frame=scal_frame,
        twist2_V_sigma=2.0 * (sig["V"] - tau["V"]),
        twist2_H_sigma=2.0 * (sig["H"] - tau["H"]),
    )


# ---------------------------------------------------------------------------
# functional interface


def sub_laplacian(g: MetricField, V: Distribution, f: np.ndarray, upper: str = "full",
                  lower: str = "full", scheme: str = "fd4") -> np.ndarray:
    return FrameGeometry(g, V, scheme).laplacian(f, upper, lower)


def distribution_scalars(g: MetricField, V: Distribution, scheme: str = "fd4") -> DistributionScalars:
    return FrameGeometry(g, V, scheme).scalars()


@dataclass
class LineScalars:
    eps_V: float
    d_div: np.ndarray  # e(div e) for a unit leg e of V
    div_sq: np.ndarray
    acc: np.ndarray  # nabla_e e in coordinates
    acc_norm: np.ndarray  # g(nabla_e e, nabla_e e)


def line_distribution_scalars(g: MetricField, V: Distribution, scheme: str = "fd4") -> LineScalars:
    if V.rank != 1:
        raise GeometryError("line quantities need a rank-1 distribution")
    fg = FrameGeometry(g, V, scheme)
    eps, E, G = fg.eps, fg.frame.E, fg.G
    divf = fg.div["full"][..., 0]
    d_div = fg.e_deriv(divf)[..., 0]
    acc_frame = eps * G[..., 0, 0, :]  # components along e_k
    acc = ein("...ak,...k->...a", E, acc_frame)
    return LineScalars(float(eps[0]), d_div, divf**2, acc, g.inner(acc, acc))


def foliation_scal(g: MetricField, H: Distribution, scheme: str = "fd4",
                   tol: float = INTEGRABLE_TOL) -> np.ndarray:
    """Leafwise scalar curvature of an integrable distribution."""
    ds = FrameGeometry(g, H, scheme).scalars()
    # H occupies the first block here, so the V-slot fields describe H
    if np.max(np.abs(ds.twist2_V)) > tol:
        raise GeometryError("H not integrable (twist above tolerance)")
    return ds.scal_VV + ds.divV_divV_H - ds.sigma_V


def integration_identity_residuals(g: MetricField, V: Distribution, f: np.ndarray,
                                   h: np.ndarray, u: np.ndarray,
                                   scheme: str = "fd4") -> tuple[float, float]:
    grid = g.grid
    if not grid.fully_periodic:
        bnd = grid.boundary_mask()
        if np.any(h[bnd] != 0) or np.any(u[bnd] != 0):
            raise GeometryError("h and u must vanish on the boundary")
    fg = FrameGeometry(g, V, scheme)
    ds = fg.scalars()
    rho = g.density()
    lhs1 = integrate(fg.df_pair(f, h, "H"), grid, rho)
    rhs1 = -integrate((fg.laplacian(f, "H", "H") + fg.div_pair("V", f, "H")) * h, grid, rho)
    lhs2 = integrate(fg.div_pair("V", u, "H"), grid, rho)
    rhs2 = -integrate((ds.qual_H + ds.divV_divV_H - ds.tau_H) * u, grid, rho)
    return abs(lhs1 - rhs1), abs(lhs2 - rhs2)
