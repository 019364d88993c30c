"""Metric surgeries (switch, stretch, conform, change) and their predicted
effect on distribution curvature quantities.

Every ``predict_*`` evaluates closed-form right-hand sides from quantities of
the base metric. The matching ``measure_*`` computes the same named lines
directly on the deformed metric so the two can be compared.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .geometry import (Distribution, FrameGeometry, GeometryError, MetricField,
                       coord_christoffel, orthogonal_complement, projector, scal_oracle)
from .lattice import ein, gradient, hessian

POSITIVITY_TOL = 1e-10

LINE_NAMES = (
    "divV_divV_H", "divH_divH_V", "sigma_H", "sigma_V", "tau_H", "tau_V",
    "qual_V", "qual_H", "scal_VH", "scal_VV", "scal_HH", "scal",
    "lap_VV(u)", "lap_HH(u)", "lap(u)", "divV_du_H", "divH_du_V",
)


def _positive(name: str, f) -> np.ndarray:
    f = np.asarray(f, dtype=float)
    if np.min(f) <= POSITIVITY_TOL:
        raise ValueError(f"{name} must be positive (min {np.min(f):.3e})")
    return f


def split(g: MetricField, V: Distribution) -> tuple[np.ndarray, np.ndarray]:
    """Matrices of g_V(w, z) = g(pr^V w, pr^V z) and g_H likewise."""
    P = projector(g, V)
    Q = np.eye(g.n) - P
    PT = np.swapaxes(P, -1, -2)
    QT = np.swapaxes(Q, -1, -2)
    return PT @ g.data @ P, QT @ g.data @ Q


def _sym(a: np.ndarray) -> np.ndarray:
    return 0.5 * (a + np.swapaxes(a, -1, -2))


def switch(g: MetricField, V: Distribution) -> MetricField:
    """-g_V + g_H."""
    if V.rank == 0:
        return MetricField(g.grid, g.data.copy())
    gV, gH = split(g, V)
    return MetricField(g.grid, _sym(gH - gV))


def stretch(g: MetricField, f, V: Distribution) -> MetricField:
    """f^-2 g_V + g_H."""
    f = _positive("f", np.broadcast_to(f, g.grid.shape))
    if V.rank == 0:
        return MetricField(g.grid, g.data.copy())
    gV, gH = split(g, V)
    return MetricField(g.grid, _sym(gV / (f**2)[..., None, None] + gH))


def conform(g: MetricField, kappa) -> MetricField:
    """kappa^-2 g."""
    k = _positive("kappa", np.broadcast_to(kappa, g.grid.shape))
    return MetricField(g.grid, g.data / (k**2)[..., None, None])


def change(g: MetricField, f, kappa, V: Distribution) -> MetricField:
    """conform(stretch(switch(g, V), f, V), kappa)."""
    if g.index != 0:
        raise GeometryError("change expects a Riemannian base metric")
    return conform(stretch(switch(g, V), f, V), kappa)


# ---------------------------------------------------------------------------
# coefficient functions


@dataclass(frozen=True)
class CoefficientTable:
    n: int
    q: int

    def __post_init__(self):
        if self.n < 2 or not 0 <= self.q <= self.n:
            raise ValueError("need n >= 2 and 0 <= q <= n")

    @property
    def mu(self) -> float:
        return 2.0 * self.q / (self.n - 1) - 1.0

    @property
    def nu(self) -> float:
        return (self.n - 2.0) / (self.n - 1.0)

    def K(self, x):
        n, q = self.n, self.q
        return ((1 + x**2) / x ** (2 * q)) ** (1.0 / (2 * (n - 1)))

    def E(self, x):
        """K'/K."""
        n, q = self.n, self.q
        return -((q - 1) * x**2 + q) / ((n - 1) * x * (1 + x**2))

    def dK(self, x):
        return self.E(x) * self.K(x)

    def F(self, x):
        """K''/K."""
        n, q = self.n, self.q
        num = ((q - 1) * (n + q - 2) * x**4 + ((n - 1) * (2 * q + 1) + 2 * q * (q - 1)) * x**2
               + q * (n - 1 + q))
        return num / ((n - 1) ** 2 * x**2 * (1 + x**2) ** 2)

    def _a_coeffs(self):
        n, q = self.n, self.q
        return ((q - 1) ** 2 - (n - 1) * (q + 3), -2 * (q - 1) * (n - 1 - q), -q * (n - 1 - q))

    def _b_coeffs(self):
        n, q = self.n, self.q
        return ((q - 1) * (n - q), 2 * (q - 1) * (n - 1 - q), q * (n - 1 - q))

    def a(self, x):
        A, B, C = self._a_coeffs()
        return (A * x**4 + B * x**2 + C) / ((self.n - 1) * x**3 * (1 + x**2))

    def da(self, x):
        A, B, C = self._a_coeffs()
        num = A * x**4 + B * x**2 + C
        dnum = 4 * A * x**3 + 2 * B * x
        den = x**5 + x**3
        dden = 5 * x**4 + 3 * x**2
        return (dnum * den - num * dden) / ((self.n - 1) * den**2)

    def b(self, x):
        A, B, C = self._b_coeffs()
        return (A * x + B / x + C / x**3) / (self.n - 1)

    def db(self, x):
        A, B, C = self._b_coeffs()
        return (A - B / x**2 - 3 * C / x**4) / (self.n - 1)

    def weight(self, x):
        """x^mu (1 + x^2)^nu, the factor multiplying s."""
        return x**self.mu * (1 + x**2) ** self.nu

    def dweight(self, x):
        mu, nu = self.mu, self.nu
        return self.weight(x) * (mu + (mu + 2 * nu) * x**2) / (x * (1 + x**2))

    # residuals of the algebraic identities
    def identity_b(self, x):
        n, q = self.n, self.q
        return (n - 1) * (1 + x**2) * self.E(x) + ((q - 1) * x**2 + q) / x

    def identity_c(self, x):
        n, q = self.n, self.q
        return (n - 1) * self.E(x) + q / x - x / (1 + x**2)

    def identity_d(self, x):
        n, q = self.n, self.q
        E, F = self.E(x), self.F(x)
        lhs = 2 * (n - 1) * F - n * (n - 1) * E**2 - q * (q + 3) / x**2 - 2 * (n - 1) * q * E / x
        A, B, C = self._a_coeffs()
        rhs = (A * x**4 + B * x**2 + C) / ((n - 1) * x**2 * (1 + x**2) ** 2)
        return lhs - rhs

    def identity_e(self, x):
        n, q = self.n, self.q
        E, F = self.E(x), self.F(x)
        lhs = ((n - 1) * (1 + x**2) * (-2 * F + n * E**2)
               + (q / x**2) * ((q - 1) * x**2 + (q + 3))
               + (2 * (n - 1) * E / x) * ((q - 2) * x**2 + q))
        A, B, C = self._b_coeffs()
        rhs = (A * x**4 + B * x**2 + C) / ((n - 1) * x**2 * (1 + x**2))
        return lhs - rhs


def coefficient_table(n: int, q: int) -> CoefficientTable:
    return CoefficientTable(n, q)


def exponent_bounds_check(n: int, q: int) -> bool:
    """Both exponents of the constant-point coefficient are negative."""
    ct = CoefficientTable(n, q)
    return (-3.0 - ct.mu < 0) and (-5.0 + ct.mu + 2 * ct.nu < 0)


# ---------------------------------------------------------------------------
# measured lines on an arbitrary metric


def coord_laplacian(g: MetricField, u: np.ndarray, scheme: str = "fd4") -> np.ndarray:
    """Laplace-Beltrami g^ab (d_a d_b u - Gamma^k_ab d_k u) in coordinates."""
    C = coord_christoffel(g, scheme)
    du = gradient(u, g.grid, scheme)
    Hu = hessian(u, g.grid, scheme)
    return ein("...ab,...ab->...", g.inv, Hu - ein("...kab,...k->...ab", C, du))


def coord_norm(g: MetricField, a: np.ndarray, b: np.ndarray, scheme: str = "fd4") -> np.ndarray:
    """g(grad a, grad b) in coordinates."""
    da = gradient(a, g.grid, scheme)
    db = gradient(b, g.grid, scheme)
    return ein("...a,...ab,...b->...", da, g.inv, db)


def _lines_from(fg: FrameGeometry, u: np.ndarray) -> dict[str, np.ndarray]:
    ds = fg.scalars()
    return {
        "divV_divV_H": ds.divV_divV_H, "divH_divH_V": ds.divH_divH_V,
        "sigma_H": ds.sigma_H, "sigma_V": ds.sigma_V, "tau_H": ds.tau_H, "tau_V": ds.tau_V,
        "qual_V": ds.qual_V, "qual_H": ds.qual_H,
        "scal_VH": ds.scal_VH, "scal_VV": ds.scal_VV, "scal_HH": ds.scal_HH, "scal": ds.scal,
        "lap_VV(u)": fg.laplacian(u, "V", "V"), "lap_HH(u)": fg.laplacian(u, "H", "H"),
        "lap(u)": fg.laplacian(u, "full", "full"),
        "divV_du_H": fg.div_pair("V", u, "H"), "divH_du_V": fg.div_pair("H", u, "V"),
    }


def measure_lines(h: MetricField, V: Distribution, u: np.ndarray, scheme: str = "fd4") -> dict[str, np.ndarray]:
    """Direct values of every predicted line on the metric h.

    Scalar curvature comes from the coordinate oracle and the full Laplacian
    from the coordinate Laplace-Beltrami operator, so neither reuses the
    frame machinery.
    """
    fg = FrameGeometry(h, V, scheme)
    out = _lines_from(fg, u)
    out["scal"] = scal_oracle(h, scheme)
    out["lap(u)"] = coord_laplacian(h, u, scheme)
    return out


# ---------------------------------------------------------------------------
# predictions


def _require_riemannian(g: MetricField):
    if g.index != 0:
        raise GeometryError("prediction requires a Riemannian base metric")


def predict_switch(g: MetricField, V: Distribution, u: np.ndarray, scheme: str = "fd4") -> dict[str, np.ndarray]:
    """Quantities of switch(g, V) from those of g."""
    _require_riemannian(g)
    fg = FrameGeometry(g, V, scheme)
    d = fg.scalars()
    lapVV = fg.laplacian(u, "V", "V")
    divH_du_V = fg.div_pair("H", u, "V")
    return {
        "divV_divV_H": d.divV_divV_H,
        "divH_divH_V": -d.divH_divH_V,
        "sigma_H": -d.sigma_H,
        "sigma_V": d.sigma_V,
        "tau_H": -d.tau_H,
        "tau_V": d.tau_V,
        "qual_V": -d.qual_V + 2 * d.tau_V,
        "qual_H": d.qual_H - 2 * d.tau_H,
        "scal_VH": d.scal_VH + 2 * d.qual_V - 2 * d.tau_V + 2 * d.tau_H,
        "scal_VV": -d.scal_VV - 2 * d.divV_divV_H + 4 * d.tau_V - 2 * d.sigma_V,
        "scal_HH": d.scal_HH + 2 * d.divH_divH_V + 2 * d.sigma_H - 4 * d.tau_H,
        "scal": (scal_oracle(g, scheme) - 2 * d.scal_VV + 4 * d.qual_V - 2 * d.divV_divV_H
                 + 2 * d.divH_divH_V - 2 * d.sigma_V + 2 * d.sigma_H),
        "lap_VV(u)": -lapVV,
        "lap_HH(u)": fg.laplacian(u, "H", "H"),
        "lap(u)": coord_laplacian(g, u, scheme) - 2 * lapVV - 2 * divH_du_V,
        "divV_du_H": fg.div_pair("V", u, "H"),
        "divH_du_V": -divH_du_V,
    }


def predict_stretch(g: MetricField, f: np.ndarray, V: Distribution, u: np.ndarray,
                    scheme: str = "fd4") -> dict[str, np.ndarray]:
    """Quantities of stretch(g, f, V) from those of g (any index)."""
    f = _positive("f", f)
    q = V.rank
    fg = FrameGeometry(g, V, scheme)
    d = fg.scalars()
    f2 = f * f
    df_H = fg.df_pair(f, f, "H")
    df_V = fg.df_pair(f, f, "V")
    divV_df_H = fg.div_pair("V", f, "H")
    divH_df_V = fg.div_pair("H", f, "V")
    lapVV_f = fg.laplacian(f, "V", "V")
    lapHH_f = fg.laplacian(f, "H", "H")
    lapVV_u = fg.laplacian(u, "V", "V")
    lapHH_u = fg.laplacian(u, "H", "H")
    dfdu_V = fg.df_pair(f, u, "V")
    dfdu_H = fg.df_pair(f, u, "H")
    divH_du_V = fg.div_pair("H", u, "V")
    divV_du_H = fg.div_pair("V", u, "H")
    om = 1 - f2
    op = 1 + f2
    extra_V = q / f2 * df_H - 2 / f * divV_df_H
    qual_V = (f2 * d.qual_V - (q - 2) * f * divH_df_V + om**2 / 2 * d.tau_V + op * om / 2 * d.sigma_V
              + extra_V)
    qual_H = (d.qual_H - q / f * lapHH_f + q / f2 * df_H + om**2 / (2 * f2) * d.tau_H
              - op * om / (2 * f2) * d.sigma_H)
    scal = (2 * (q - 1) * f * lapVV_f + 2 * q / f * lapHH_f
            - q * (q - 1) * df_V - q * (q + 3) / f2 * df_H + 2 * (q - 2) * f * divH_df_V
            + 2 * (q + 1) / f * divV_df_H
            + f2 * (d.scal_VV - 2 * d.qual_V) + (d.scal_HH - 2 * d.qual_H)
            + om * (d.divH_divH_V - d.divV_divV_H)
            - om**2 / (2 * f2) * d.sigma_H + om * op / (2 * f2) * d.tau_H
            - om**2 / 2 * d.sigma_V - om * op / 2 * d.tau_V)
    return {
        "divV_divV_H": d.divV_divV_H + q**2 / f2 * df_H - 2 * q / f * divV_df_H,
        "divH_divH_V": f2 * d.divH_divH_V,
        "sigma_H": 0.5 * (f2 + 1 / f2) * d.sigma_H + 0.5 * (f2 - 1 / f2) * d.tau_H,
        "sigma_V": 0.5 * (1 + f2**2) * d.sigma_V + 0.5 * (1 - f2**2) * d.tau_V + extra_V,
        "tau_H": 0.5 * (f2 + 1 / f2) * d.tau_H + 0.5 * (f2 - 1 / f2) * d.sigma_H,
        "tau_V": 0.5 * (1 + f2**2) * d.tau_V + 0.5 * (1 - f2**2) * d.sigma_V + extra_V,
        "qual_V": qual_V,
        "qual_H": qual_H,
        "scal_VH": -(qual_V + qual_H),
        "scal_VV": (f2 * d.scal_VV + 2 * (q - 1) * f * lapVV_f - q * (q - 1) * df_V
                    - q * (q - 1) / f2 * df_H + 2 * (q - 1) / f * divV_df_H
                    - om * d.divV_divV_H + 0.5 * om * (1 + 3 * f2) * d.sigma_V
                    + 0.5 * om * (1 - 3 * f2) * d.tau_V),
        "scal_HH": (d.scal_HH + om * d.divH_divH_V - om * (3 + f2) / (2 * f2) * d.sigma_H
                    + om * (3 - f2) / (2 * f2) * d.tau_H),
        "scal": scal,
        "lap_VV(u)": f2 * lapVV_u - (q - 2) * f * dfdu_V,
        "lap_HH(u)": lapHH_u,
        "lap(u)": (f2 * lapVV_u - (q - 2) * f * dfdu_V + lapHH_u + f2 * divH_du_V + divV_du_H
                   - q / f * dfdu_H),
        "divV_du_H": divV_du_H - q / f * dfdu_H,
        "divH_du_V": f2 * divH_du_V,
    }


def predict_conform_scal(g: MetricField, kappa: np.ndarray, scheme: str = "fd4") -> np.ndarray:
    """2(n-1) k Lap k - n(n-1) |dk|^2 + k^2 scal_g."""
    k = _positive("kappa", kappa)
    n = g.n
    return (2 * (n - 1) * k * coord_laplacian(g, k, scheme) - n * (n - 1) * coord_norm(g, k, k, scheme)
            + k**2 * scal_oracle(g, scheme))


def predict_change_scal(g: MetricField, f: np.ndarray, kappa: np.ndarray, V: Distribution,
                        scheme: str = "fd4") -> np.ndarray:
    """Scalar curvature of change(g, f, kappa, V) from quantities of g."""
    _require_riemannian(g)
    f = _positive("f", f)
    k = _positive("kappa", kappa)
    n, q = g.n, V.rank
    fg = FrameGeometry(g, V, scheme)
    d = fg.scalars()
    f2 = f * f
    op = 1 + f2
    out = (2 * (n - 1) * k * fg.laplacian(k, "H", "H") + 2 * q * k**2 / f * fg.laplacian(f, "H", "H")
           - 2 * (n - 1) * k * f2 * fg.laplacian(k, "V", "V") - 2 * (q - 1) * k**2 * f * fg.laplacian(f, "V", "V")
           - n * (n - 1) * fg.df_pair(k, k, "H") - q * (q + 3) * k**2 / f2 * fg.df_pair(f, f, "H")
           - 2 * (n - 1) * q * k / f * fg.df_pair(f, k, "H")
           + n * (n - 1) * f2 * fg.df_pair(k, k, "V") + q * (q - 1) * k**2 * fg.df_pair(f, f, "V")
           + 2 * (n - 1) * (q - 2) * k * f * fg.df_pair(f, k, "V")
           + 2 * (n - 1) * k * fg.div_pair("V", k, "H") + 2 * (q + 1) * k**2 / f * fg.div_pair("V", f, "H")
           - 2 * (n - 1) * k * f2 * fg.div_pair("H", k, "V") - 2 * (q - 2) * k**2 * f * fg.div_pair("H", f, "V"))
    out += k**2 * (op * d.xi + op / (2 * f2) * d.twistnorm_H - f2 * op / 2 * d.twistnorm_V
                   + scal_oracle(g, scheme))
    return out


CHI_MODES = ("stretchV", "stretchH", "conform")


def predict_chi(g: MetricField, f: np.ndarray, V: Distribution, mode: str,
                scheme: str = "fd4") -> np.ndarray:
    """chi of (deformed metric, V) from quantities of g."""
    f = _positive("f", f)
    n, q = g.n, V.rank
    fg = FrameGeometry(g, V, scheme)
    chi = fg.scalars().chi
    lap = fg.laplacian(f, "H", "H")
    dd = fg.df_pair(f, f, "H")
    dv = fg.div_pair("V", f, "H")
    if mode == "stretchV":
        return chi + 2 * q / f * lap - q * (q + 3) / f**2 * dd + 2 * (q + 1) / f * dv
    if mode == "stretchH":
        p = n - q
        return f**2 * chi + 2 * (p - 1) * f * lap - p * (p - 1) * dd + 2 * (p - 2) * f * dv
    if mode == "conform":
        return f**2 * chi + 2 * (n - 1) * f * lap - n * (n - 1) * dd + 2 * (n - 1) * f * dv
    raise ValueError(f"unknown mode {mode!r}")


def deformed_metric(g: MetricField, f: np.ndarray, V: Distribution, mode: str) -> MetricField:
    if mode == "stretchV":
        return stretch(g, f, V)
    if mode == "stretchH":
        return stretch(g, f, orthogonal_complement(g, V))
    if mode == "conform":
        return conform(g, f)
    raise ValueError(f"unknown mode {mode!r}")


def measure_chi(g: MetricField, f: np.ndarray, V: Distribution, mode: str,
                scheme: str = "fd4") -> np.ndarray:
    h = deformed_metric(g, f, V, mode)
    return FrameGeometry(h, V, scheme).scalars().chi
