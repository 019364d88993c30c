"""The semilinear operator Upsilon_{g,V,s}, its inverse S-map and its
linearisation.

Upsilon(f) = 2 Lap f + a(f)|df|^2 + b(f)|df|^2_V
             + 2(1+f^2)/f^2 <div^V, df>_H + 2(1+f^2) <div^H, df>_V
             + (1+f^2)^2/(2 f^3) |Tw_H|^2 - f(1+f^2)^2/2 |Tw_V|^2
             + (1+f^2)^2/f xi + (1+f^2)/f scal - f^mu (1+f^2)^nu s
"""

from __future__ import annotations

import numpy as np

from .deform import CoefficientTable, change, exponent_bounds_check  # noqa: F401
from .geometry import Distribution, FrameGeometry, GeometryError, MetricField
from .lattice import ein, gradient, hessian, second_partial

F_FLOOR = 1e-10


class UpsilonContext:
    """Precomputed coefficient fields of Upsilon for a fixed (g, V).

    The operator is stored in coordinate form:
    Lap f = A^ab d_a d_b f + B^b d_b f, |df|^2_V = P^ab d_a f d_b f,
    <div^V, df>_H = cV^a d_a f, <div^H, df>_V = cH^a d_a f.
    """

    def __init__(self, g: MetricField, V: Distribution, scheme: str = "fd4"):
        if g.index != 0:
            raise GeometryError("Upsilon needs a Riemannian metric")
        self.g = g
        self.V = V
        self.grid = g.grid
        self.scheme = scheme
        self.n = g.n
        self.q = V.rank
        self.table = CoefficientTable(self.n, self.q)
        self.mu = self.table.mu
        self.nu = self.table.nu
        fg = FrameGeometry(g, V, scheme)
        self.fg = fg
        self.scalars = fg.scalars()
        E, eps, dE = fg.frame.E, fg.eps, fg.frame.dE
        legsV, legsH = fg.legs("V"), fg.legs("H")
        self.A = g.inv.copy()
        # frame form of the first-order Laplacian coefficient
        self.B = (ein("i,...ai,...bia->...b", eps, E, dE)
                  + ein("i,...i,...bi->...b", eps, fg.div["full"], E))
        self.P = (ein("i,...ai,...bi->...ab", eps[legsV], E[..., legsV], E[..., legsV])
                  if legsV else np.zeros(g.data.shape))
        self.cV = (ein("i,...i,...ai->...a", eps[legsH], fg.div["V"][..., legsH], E[..., legsH])
                   if legsH else np.zeros(self.grid.shape + (self.n,)))
        self.cH = (ein("i,...i,...ai->...a", eps[legsV], fg.div["H"][..., legsV], E[..., legsV])
                   if legsV else np.zeros(self.grid.shape + (self.n,)))
        d = self.scalars
        self.tw_H = d.twistnorm_H
        self.tw_V = d.twistnorm_V
        self.xi = d.xi
        self.scal = d.scal
        self.diag_A = all(np.allclose(self.A[..., a, b], 0.0) for a in range(self.n)
                          for b in range(self.n) if a != b)

    # -- differential pieces -------------------------------------------------
    def grad(self, f: np.ndarray) -> np.ndarray:
        return gradient(f, self.grid, self.scheme)

    def laplacian(self, f: np.ndarray, df: np.ndarray | None = None) -> np.ndarray:
        df = self.grad(f) if df is None else df
        if self.diag_A:
            out = sum(self.A[..., a, a] * second_partial(f, a, a, self.grid, self.scheme)
                      for a in range(self.n))
        else:
            out = ein("...ab,...ab->...", self.A, hessian(f, self.grid, self.scheme))
        return out + ein("...b,...b->...", self.B, df)

    def pieces(self, f: np.ndarray) -> dict[str, np.ndarray]:
        df = self.grad(f)
        return {
            "lap": self.laplacian(f, df),
            "dfdf": ein("...a,...ab,...b->...", df, self.A, df),
            "dfdf_V": ein("...a,...ab,...b->...", df, self.P, df),
            "divV_df_H": ein("...a,...a->...", self.cV, df),
            "divH_df_V": ein("...a,...a->...", self.cH, df),
            "df": df,
        }

    def mixed(self, df: np.ndarray, dv: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
        """<df, dv>_g and <df, dv>_{g,V}."""
        return (ein("...a,...ab,...b->...", df, self.A, dv),
                ein("...a,...ab,...b->...", df, self.P, dv))

    # -- algebraic parts -----------------------------------------------------
    def geometric(self, f: np.ndarray) -> np.ndarray:
        """Zeroth-order terms of Upsilon without the s term."""
        op = 1 + f * f
        return (op**2 / (2 * f**3) * self.tw_H - f * op**2 / 2 * self.tw_V
                + op**2 / f * self.xi + op / f * self.scal)

    def d_geometric(self, f: np.ndarray) -> np.ndarray:
        f2 = f * f
        op = 1 + f2
        return (op * (f2 - 3) / (2 * f2**2) * self.tw_H - op * (1 + 5 * f2) / 2 * self.tw_V
                + op * (3 * f2 - 1) / f2 * self.xi + (f2 - 1) / f2 * self.scal)

    def weight(self, f):
        return self.table.weight(np.maximum(f, F_FLOOR))


def _check_f(f: np.ndarray):
    if np.min(f) <= 0:
        raise ValueError("f must be positive at every node")


def _as_field(ctx: UpsilonContext, x) -> np.ndarray:
    return np.broadcast_to(np.asarray(x, dtype=float), ctx.grid.shape).astype(float)


def upsilon_without_s(ctx: UpsilonContext, f: np.ndarray) -> np.ndarray:
    f = _as_field(ctx, f)
    _check_f(f)
    t = ctx.table
    p = ctx.pieces(f)
    op = 1 + f * f
    return (2 * p["lap"] + t.a(f) * p["dfdf"] + t.b(f) * p["dfdf_V"]
            + 2 * op / f**2 * p["divV_df_H"] + 2 * op * p["divH_df_V"] + ctx.geometric(f))


def upsilon(ctx: UpsilonContext, s, f) -> np.ndarray:
    f = _as_field(ctx, f)
    return upsilon_without_s(ctx, f) - ctx.weight(f) * _as_field(ctx, s)


def s_map(ctx: UpsilonContext, f) -> np.ndarray:
    """The unique s with Upsilon_{g,V,s}(f) = 0."""
    f = _as_field(ctx, f)
    return upsilon_without_s(ctx, f) / ctx.weight(f)


def zeroth_order_coefficient(ctx: UpsilonContext, s, f) -> np.ndarray:
    """Coefficient of v in the linearisation, excluding gradient terms of v."""
    f = _as_field(ctx, f)
    s = _as_field(ctx, s)
    t = ctx.table
    p = ctx.pieces(f)
    return (t.da(f) * p["dfdf"] + t.db(f) * p["dfdf_V"] - 4 / f**3 * p["divV_df_H"]
            + 4 * f * p["divH_df_V"] + ctx.d_geometric(f) - t.dweight(f) * s)


def linearize_apply(ctx: UpsilonContext, s, f, v) -> np.ndarray:
    """Directional derivative of Upsilon at f in direction v (analytic)."""
    f = _as_field(ctx, f)
    v = _as_field(ctx, v)
    _check_f(f)
    t = ctx.table
    df = ctx.grad(f)
    dv = ctx.grad(v)
    fv, fv_V = ctx.mixed(df, dv)
    op = 1 + f * f
    first = (2 * ctx.laplacian(v, dv) + 2 * t.a(f) * fv + 2 * t.b(f) * fv_V
             + 2 * op / f**2 * ein("...a,...a->...", ctx.cV, dv)
             + 2 * op * ein("...a,...a->...", ctx.cH, dv))
    return first + zeroth_order_coefficient(ctx, s, f) * v


def linear_coefficients(ctx: UpsilonContext, s, f) -> dict[str, np.ndarray]:
    """Coefficients of the linearised operator in the form
    2 A^ab d_a d_b v + W^b d_b v + c v."""
    f = _as_field(ctx, f)
    t = ctx.table
    df = ctx.grad(f)
    op = 1 + f * f
    W = (2 * ctx.B + 2 * t.a(f)[..., None] * ein("...ab,...b->...a", ctx.A, df)
         + 2 * t.b(f)[..., None] * ein("...ab,...b->...a", ctx.P, df)
         + (2 * op / f**2)[..., None] * ctx.cV + (2 * op)[..., None] * ctx.cH)
    return {"A": 2 * ctx.A, "W": W, "c": zeroth_order_coefficient(ctx, s, f)}


def constant_point_coefficient(ctx: UpsilonContext, c: float) -> np.ndarray:
    """Closed form of D_c Upsilon_{S(c)}(1) at a constant c."""
    mu, nu = ctx.mu, ctx.nu
    c2 = c * c
    op = 1 + c2
    m = mu + (mu + 2 * nu) * c2
    return (op / (2 * c2**2) * (c2 - 3 - m) * ctx.tw_H
            - op / 2 * (1 + 5 * c2 - m) * ctx.tw_V
            + op / c2 * (3 * c2 - 1 - m) * ctx.xi
            + (1 / c2) * (-1 + c2 - m) * ctx.scal)


def changed_metric(ctx: UpsilonContext, f) -> MetricField:
    """change(g, f, K o f, V)."""
    f = _as_field(ctx, f)
    return change(ctx.g, f, ctx.table.K(f), ctx.V)
