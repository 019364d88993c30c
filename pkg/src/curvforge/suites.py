"""Verification suites: each compares two independent computations of one
quantity and turns the discrepancy into a pass/fail record.

Curvature-level checks are judged by the measured convergence order across a
resolution ladder. A line whose error already sits at roundoff on the
finest grid passes through the floor rule instead, since its fitted order is
meaningless.
"""

from __future__ import annotations

from dataclasses import asdict, dataclass, field
from typing import Callable

import numpy as np

from . import deform as dfm
from .diffeo import Shear, TorusDiffeo, Translation, Warp, pullback
from .geometry import (
    Distribution,
    FrameGeometry,
    MetricField,
    flat_metric,
    integration_identity_residuals,
    line_distribution_scalars,
    foliation_scal,
    scal_oracle,
    sectional_scal,
)
from .lattice import Grid, convergence_order, make_torus, partial
from .presets import perturbed_metric, preset_distribution, random_trig_field
from .upsilon import (
    UpsilonContext,
    constant_point_coefficient,
    linearize_apply,
    s_map,
    upsilon,
)

ORDER_MIN = 3.5
ROUNDOFF_FLOOR = 1e-10
DEFAULT_RESOLUTIONS = (32, 48, 64)


@dataclass
class Check:
    name: str
    anchor: str
    kind: str  # "order", "abs" or "bool"
    tolerance: float
    passed: bool
    resolutions: list = field(default_factory=list)
    errors: list = field(default_factory=list)
    order: float | None = None

    def as_dict(self) -> dict:
        d = asdict(self)
        if d["order"] is not None and not np.isfinite(d["order"]):
            d["order"] = "inf" if d["order"] > 0 else "-inf"
        return d

    def line(self) -> str:
        tag = "PASS" if self.passed else "FAIL"
        if self.kind == "order":
            return (f"{tag} {self.name}: order {self.order:.2f} (min {self.tolerance}), "
                    f"finest error {self.errors[-1]:.2e}")
        if self.kind == "abs":
            return f"{tag} {self.name}: error {max(self.errors):.2e} (tol {self.tolerance:.0e})"
        return f"{tag} {self.name}"


def order_check(name: str, anchor: str, Ns, errs, min_order: float = ORDER_MIN,
                floor: float = ROUNDOFF_FLOOR) -> Check:
    errs = [float(e) for e in errs]
    order = convergence_order([1.0 / N for N in Ns], errs)
    ok = (order >= min_order and errs[-1] < errs[0]) or errs[-1] <= floor
    return Check(name, anchor, "order", min_order, bool(ok), list(Ns), errs, float(order))


def abs_check(name: str, anchor: str, errs, tol: float, Ns=()) -> Check:
    errs = [float(e) for e in np.atleast_1d(errs)]
    return Check(name, anchor, "abs", tol, bool(max(errs) <= tol), list(Ns), errs)


def bool_check(name: str, anchor: str, ok: bool, detail: float = 0.0) -> Check:
    return Check(name, anchor, "bool", 0.0, bool(ok), [], [float(detail)])


def _err(a, b) -> float:
    return float(np.max(np.abs(np.asarray(a) - np.asarray(b))))


def _ladder(resolutions, fn: Callable[[int], dict]) -> tuple[list[int], dict[str, list[float]]]:
    """Run fn(N) -> {name: error} over resolutions and collect columns."""
    cols: dict[str, list[float]] = {}
    for N in resolutions:
        for k, v in fn(N).items():
            cols.setdefault(k, []).append(v)
    return list(resolutions), cols


def _distribution(name: str, grid: Grid, g: MetricField | None = None) -> Distribution:
    if name == "coordinate":
        return preset_distribution("coordinate", grid, q=grid.dim - 1)
    return preset_distribution(name, grid, g=g)


# -- surgery formula suites --------------------------------------------------

def switch_suite(resolutions=DEFAULT_RESOLUTIONS, scheme: str = "fd4", seed: int = 0,
                 amplitude: float = 0.2, distributions=("coordinate", "contact3"),
                 spectral_tol: float = 1e-8) -> list[Check]:
    checks = []
    for dname in distributions:
        def run(N, dname=dname):
            grid = make_torus(3, [N])
            g = perturbed_metric(grid, amplitude, seed=seed)
            V = _distribution(dname, grid, g)
            u = random_trig_field(grid, np.random.default_rng(seed + 1))
            P = dfm.predict_switch(g, V, u, scheme)
            M = dfm.measure_lines(dfm.switch(g, V), V, u, scheme)
            return {k: _err(P[k], M[k]) for k in P}
        Ns, cols = _ladder(resolutions, run)
        for line, errs in cols.items():
            name = f"switch/{dname}/{line}"
            if scheme == "spectral":
                checks.append(abs_check(name, f"switch:{line}", errs, spectral_tol, Ns))
            else:
                checks.append(order_check(name, f"switch:{line}", Ns, errs))
    return checks


def stretch_suite(resolutions=DEFAULT_RESOLUTIONS, scheme: str = "fd4", seed: int = 0,
                  amplitude: float = 0.2, distributions=("coordinate", "contact3"),
                  spectral_tol: float = 1e-8) -> list[Check]:
    checks = []
    for dname in distributions:
        def run(N, dname=dname):
            grid = make_torus(3, [N])
            g = perturbed_metric(grid, amplitude, seed=seed)
            V = _distribution(dname, grid, g)
            rng = np.random.default_rng(seed + 2)
            u = random_trig_field(grid, rng)
            f = random_trig_field(grid, rng, 0.5, 2.5)
            kappa = random_trig_field(grid, rng, 0.5, 2.5)
            P = dfm.predict_stretch(g, f, V, u, scheme)
            M = dfm.measure_lines(dfm.stretch(g, f, V), V, u, scheme)
            out = {f"stretch/{k}": _err(P[k], M[k]) for k in P}
            out["conform/scal"] = _err(dfm.predict_conform_scal(g, kappa, scheme),
                                       scal_oracle(dfm.conform(g, kappa), scheme))
            out["change/scal"] = _err(dfm.predict_change_scal(g, f, kappa, V, scheme),
                                      scal_oracle(dfm.change(g, f, kappa, V), scheme))
            for mode in dfm.CHI_MODES:
                out[f"chi/{mode}"] = _err(dfm.predict_chi(g, f, V, mode, scheme),
                                          dfm.measure_chi(g, f, V, mode, scheme))
            return out
        Ns, cols = _ladder(resolutions, run)
        for line, errs in cols.items():
            name = f"{line.split('/')[0]}/{dname}/{line.split('/', 1)[1]}"
            anchor = line.replace("/", ":")
            if scheme == "spectral":
                checks.append(abs_check(name, anchor, errs, spectral_tol, Ns))
            else:
                checks.append(order_check(name, anchor, Ns, errs))
    return checks


# -- algebraic identities ----------------------------------------------------

def coefficient_checks(n_max: int = 8, samples: int = 100, bounds_n_max: int = 12) -> list[Check]:
    """Coefficient identities, evaluated in extended precision."""
    x = np.geomspace(np.longdouble("1e-2"), np.longdouble("1e2"), samples)
    worst = {k: 0.0 for k in "bcde"}
    for n in range(2, n_max + 1):
        for q in range(0, n + 1):
            t = dfm.CoefficientTable(n, q)
            for k in worst:
                worst[k] = max(worst[k], float(np.max(np.abs(getattr(t, f"identity_{k}")(x)))))
    tols = {"b": 1e-12, "c": 1e-12, "d": 1e-11, "e": 1e-11}
    checks = [abs_check(f"coefficients/identity_{k}", f"coefficient-identity:{k}", worst[k], tols[k])
              for k in "bcde"]
    bad = [(n, q) for n in range(2, bounds_n_max + 1) for q in range(0, n + 1)
           if not dfm.exponent_bounds_check(n, q)]
    checks.append(bool_check("coefficients/exponent_bounds", "constant-point-exponents",
                             not bad, len(bad)))
    return checks


def algebra_suite(N: int = 16, seed: int = 0, amplitude: float = 0.2) -> list[Check]:
    grid = make_torus(3, [N])
    g = perturbed_metric(grid, amplitude, seed=seed)
    rng = np.random.default_rng(seed + 3)
    V = preset_distribution("contact3", grid)
    H = Distribution(grid, _complement_spans(g, V))
    f0 = random_trig_field(grid, rng, 0.5, 2.5)
    f1 = random_trig_field(grid, rng, 0.5, 2.5)
    kappa = random_trig_field(grid, rng, 0.5, 2.5)
    h = dfm.switch(g, V)
    full = Distribution.full(grid)
    minus_h = dfm.switch(h, full)
    checks = [
        abs_check("algebra/switch_full_is_negation", "sign-flip", _err(minus_h.data, -h.data), 1e-12),
        abs_check("algebra/scal_sign_flip", "sign-flip",
                  _err(scal_oracle(minus_h), -scal_oracle(h)), 1e-10),
        abs_check("algebra/switch_involution", "switch-involution",
                  _err(dfm.switch(h, V).data, g.data), 1e-12),
        abs_check("algebra/switch_rank0", "switch-involution",
                  _err(dfm.switch(g, Distribution(grid, np.zeros(grid.shape + (3, 0)), check=False)).data,
                       g.data), 1e-12),
        abs_check("algebra/stretch_composition", "stretch-composition",
                  _err(dfm.stretch(dfm.stretch(g, f0, V), f1, V).data,
                       dfm.stretch(g, f0 * f1, V).data), 1e-12),
        abs_check("algebra/stretch_unit", "stretch-composition",
                  _err(dfm.stretch(g, np.ones(grid.shape), V).data, g.data), 1e-12),
        abs_check("algebra/conform_split", "conform-split",
                  _err(dfm.conform(g, kappa).data,
                       dfm.stretch(dfm.stretch(g, kappa, H), kappa, V).data), 1e-12),
        abs_check("algebra/conform_stretch_commute", "conform-stretch-commute",
                  _err(dfm.conform(dfm.stretch(g, f0, V), kappa).data,
                       dfm.stretch(dfm.conform(g, kappa), f0, V).data), 1e-12),
    ]
    return checks + coefficient_checks()


def _complement_spans(g: MetricField, V: Distribution) -> np.ndarray:
    from .geometry import orthogonal_complement

    return orthogonal_complement(g, V).spans


# -- consistency web ---------------------------------------------------------

def _coord_divergence(g: MetricField, X: np.ndarray, scheme: str) -> np.ndarray:
    rho = g.density()
    return sum(partial(rho * X[..., a], a, g.grid, scheme) for a in range(g.n)) / rho


def consistency_suite(resolutions=DEFAULT_RESOLUTIONS, scheme: str = "fd4", seed: int = 0,
                      amplitude: float = 0.2, integration_N: int = 48) -> list[Check]:
    def run(N):
        grid = make_torus(3, [N])
        g = perturbed_metric(grid, amplitude, seed=seed)
        V = preset_distribution("rot_normal", grid, g=g)  # line V, contact H
        fg = FrameGeometry(g, V, scheme)
        ds = fg.scalars()
        rng = np.random.default_rng(seed + 4)
        f0 = random_trig_field(grid, rng, 0.5, 2.5)
        f1 = random_trig_field(grid, rng, 0.5, 2.5)
        out = {
            "scal_decomposition": _err(ds.scal, scal_oracle(g, scheme)),
            "scal_frame_formula": _err(ds.scal_frame, scal_oracle(g, scheme)),
            "qual_pairing": _err(sectional_scal(g, fg.frame, "V", "H", scheme),
                                 -(ds.qual_V + ds.qual_H)),
            "twist_V": _err(ds.twist2_V, ds.twist2_V_sigma),
            "twist_H": _err(ds.twist2_H, ds.twist2_H_sigma),
        }
        ls = line_distribution_scalars(g, V, scheme)
        eV = ls.eps_V
        out.update({
            "line/sigma_tau": _err(ds.sigma_V, ds.tau_V),
            "line/sigma_divV": _err(ds.sigma_V, ds.divV_divV_H),
            "line/sigma_acc": _err(ds.sigma_V, ls.acc_norm),
            "line/divH_divH": _err(ds.divH_divH_V, eV * ls.div_sq),
            "line/scal_VV": _err(ds.scal_VV, 0.0),
            "line/qual_V": _err(ds.qual_V, eV * ls.d_div + ds.sigma_V),
            "line/qual_H": _err(ds.qual_H, -eV * _coord_divergence(g, ls.acc, scheme)
                                - ds.sigma_V + ds.tau_H),
            "line/xi": _err(ds.xi, 2 * eV * ls.d_div + eV * ls.div_sq
                            + 0.5 * (ds.sigma_H + ds.tau_H)),
        })
        lap = dfm.coord_laplacian(g, f0, scheme)
        out["laplacian/split"] = _err(fg.laplacian(f0, "V", "full") + fg.laplacian(f0, "H", "full"), lap)
        out["laplacian/full_frame"] = _err(fg.laplacian(f0), lap)
        for U in ("V", "H"):
            W = fg.perp(U)
            out[f"laplacian/first_order_{U}"] = _err(fg.laplacian(f0, U, W), fg.div_pair(U, f0, W))
            for Wc in (U, W):
                both = U if Wc == U else None
                sq = fg.df_pair(f0, f0, both) if both else 0.0
                out[f"laplacian/chain_{U}{Wc}"] = _err(
                    fg.laplacian(f0**3, U, Wc), 3 * f0**2 * fg.laplacian(f0, U, Wc) + 6 * f0 * sq)
                cross = 2 * fg.df_pair(f0, f1, both) if both else 0.0
                out[f"laplacian/product_{U}{Wc}"] = _err(
                    fg.laplacian(f0 * f1, U, Wc),
                    f0 * fg.laplacian(f1, U, Wc) + f1 * fg.laplacian(f0, U, Wc) + cross)
        return out

    Ns, cols = _ladder(resolutions, run)
    checks = [order_check(f"consistency/{k}", f"consistency:{k}", Ns, v) for k, v in cols.items()]

    # Riemannian positivity at the finest resolution
    grid = make_torus(3, [resolutions[-1]])
    g = perturbed_metric(grid, amplitude, seed=seed)
    ds = FrameGeometry(g, preset_distribution("rot_normal", grid, g=g), scheme).scalars()
    gap = float(np.min(ds.sigma_H - np.abs(ds.tau_H)))
    checks.append(bool_check("consistency/riemannian_sigma_bound", "sigma-tau-bound", gap >= -1e-8, gap))
    checks.append(bool_check("consistency/contact_twisted", "twistedness",
                             float(np.min(ds.twist2_H)) > 0, float(np.min(ds.twist2_H))))

    # integration identities with spectral derivatives
    grid = make_torus(3, [integration_N])
    g = perturbed_metric(grid, amplitude, seed=seed)
    V = preset_distribution("contact3", grid)
    rng = np.random.default_rng(seed + 5)
    f, h, u = (random_trig_field(grid, rng) for _ in range(3))
    r1, r2 = integration_identity_residuals(g, V, f, h, u, "spectral")
    checks.append(abs_check("consistency/integration_gradient", "integration:gradient", r1, 1e-6,
                            [integration_N]))
    checks.append(abs_check("consistency/integration_divergence", "integration:divergence", r2, 1e-6,
                            [integration_N]))

    # leafwise curvature of an integrable plane field against a conformal oracle
    def fol(N):
        grid = make_torus(3, [N])
        x, y, z = grid.coords()
        tp = 2 * np.pi
        w = 0.2 * np.sin(tp * y + 0.3) * np.cos(tp * z) + 0.15 * np.cos(tp * x) * np.sin(tp * (y + z))
        lap_w = (-0.2 * 2 * tp**2 * np.sin(tp * y + 0.3) * np.cos(tp * z)
                 - 0.15 * 2 * tp**2 * np.cos(tp * x) * np.sin(tp * (y + z)))
        data = np.zeros(grid.shape + (3, 3))
        data[..., 0, 0] = 1.0
        data[..., 1, 1] = data[..., 2, 2] = np.exp(2 * w)
        gm = MetricField(grid, data)
        H = Distribution.coordinate(grid, [1, 2])
        return {"foliation": _err(foliation_scal(gm, H, scheme), -2 * np.exp(-2 * w) * lap_w)}

    Ns, cols = _ladder(resolutions, fol)
    checks.append(order_check("consistency/foliation_scal", "foliation-curvature", Ns, cols["foliation"]))
    return checks


# -- Upsilon -----------------------------------------------------------------

SCENARIOS = {
    "lorentz4": {"n": 4, "preset": "rot_normal"},
    "index2": {"n": 3, "preset": "contact3"},
}


def scenario(name: str, N: int):
    sc = SCENARIOS[name]
    grid = make_torus(sc["n"], [N])
    g = flat_metric(grid)
    return grid, g, preset_distribution(sc["preset"], grid, g=g)


def linearization_suite(seed: int = 0, triples: int = 5, eps: float = 1e-5,
                        sizes: dict | None = None, scheme: str = "fd4") -> list[Check]:
    sizes = {"lorentz4": 12, "index2": 16} if sizes is None else sizes
    checks = []
    for name in SCENARIOS:
        grid, g, V = scenario(name, sizes[name])
        ctx = UpsilonContext(g, V, scheme)
        rng = np.random.default_rng(seed + 6)
        rel = []
        for _ in range(triples):
            f = random_trig_field(grid, rng, 0.5, 2.5)
            v = random_trig_field(grid, rng)
            s = random_trig_field(grid, rng, -3, 3)
            L = linearize_apply(ctx, s, f, v)
            fd = (upsilon(ctx, s, f + eps * v) - upsilon(ctx, s, f - eps * v)) / (2 * eps)
            rel.append(_err(L, fd) / float(np.max(np.abs(L))))
        checks.append(abs_check(f"linearization/{name}/central_difference", "linearization", rel, 1e-6,
                                [sizes[name]]))
        errs = []
        for c in (0.4, 1.0, 1.7, 3.0):
            one = np.ones(grid.shape)
            Sc = s_map(ctx, c * one)
            errs.append(_err(linearize_apply(ctx, Sc, c * one, one), constant_point_coefficient(ctx, c)))
        checks.append(abs_check(f"linearization/{name}/constant_point", "constant-point-coefficient",
                                errs, 1e-9, [sizes[name]]))
    return checks


# -- naturality ----------------------------------------------------------------

def default_diffeo() -> TorusDiffeo:
    return TorusDiffeo((Translation((0.13, -0.27)), Shear(0, 1, ((1, 0.08, 0.3),)),
                        Warp(1, 0.05, 0.7)))


def naturality_suite(resolutions=DEFAULT_RESOLUTIONS, seed: int = 0, amplitude: float = 0.2,
                     phi: TorusDiffeo | None = None, scheme: str = "fd4") -> list[Check]:
    phi = default_diffeo() if phi is None else phi

    def run(N):
        grid = make_torus(2, [N])
        g = perturbed_metric(grid, amplitude, seed=seed)
        a = scal_oracle(pullback(g, phi), scheme)
        b = pullback(scal_oracle(g, scheme), phi, grid)
        return {"scal": _err(a, b)}

    Ns, cols = _ladder(resolutions, run)
    return [order_check("naturality/scal_pullback", "naturality", Ns, cols["scal"])]


SUITES = {
    "switch": switch_suite,
    "stretch": stretch_suite,
    "algebra": algebra_suite,
    "coefficients": coefficient_checks,
    "consistency": consistency_suite,
    "linearization": linearization_suite,
    "naturality": naturality_suite,
}

# neutral anchors used in report records; the index is printed by `info`
ANCHORS = {
    "switch:*": "lines of the switch transformation formulae",
    "stretch:*": "lines of the stretch transformation formulae",
    "conform:scal": "scalar curvature under a conformal change",
    "change:scal": "scalar curvature under the combined change",
    "chi:*": "the chi function under stretch and conformal changes",
    "sign-flip": "scalar curvature of the negated metric",
    "switch-involution": "switch applied twice",
    "stretch-composition": "stretch composition law",
    "conform-split": "conformal change as two stretches",
    "conform-stretch-commute": "conformal change commutes with stretch",
    "coefficient-identity:*": "algebraic identities of K, E, F, a, b",
    "constant-point-exponents": "exponent bounds of the constant-point coefficient",
    "consistency:*": "frame-level identities between curvature pieces",
    "sigma-tau-bound": "Riemannian bound sigma >= |tau|",
    "twistedness": "contact plane field is twisted everywhere",
    "integration:*": "integration-by-parts identities",
    "foliation-curvature": "leafwise scalar curvature of an integrable plane field",
    "linearization": "analytic linearization vs central differences",
    "constant-point-coefficient": "closed form of the linearization at constants",
    "naturality": "scalar curvature commutes with diffeomorphism pullback",
    "synthesis": "prescribed scalar curvature via the change construction",
    "surface-closed": "Lorentz surfaces without boundary",
    "surface-boundary": "Lorentz surfaces with boundary",
}
