"""Command line entry point: ``curvforge <verify|synthesize|surface2d|info>``."""

from __future__ import annotations

import argparse
import json
import logging
import sys
import time
from pathlib import Path

import jsonschema
import numpy as np

from . import __version__
from . import suites as S
from .expressions import ExpressionError, evaluate
from .geometry import GeometryError, MetricField, flat_metric, scal_oracle
from .lattice import Grid, GridError, dump_csv, make_annulus, make_torus
from .presets import PRESETS, perturbed_metric, preset_distribution
from .solve import (
    InadmissibleError,
    Shear,
    SolveError,
    TorusDiffeo,
    Translation,
    Warp,
    solve_sine_boundary,
    solve_sine_closed,
    synthesize,
)

log = logging.getLogger("curvforge")

EXIT_OK, EXIT_CHECK, EXIT_CONFIG, EXIT_SOLVER = 0, 2, 3, 4
MAX_AMPLITUDE = 0.3

_term = {
    "type": "object",
    "properties": {
        "k": {"type": "array", "items": {"type": "integer"}},
        "c": {"type": "number"},
        "phase": {"type": "number"},
    },
    "required": ["k", "c"],
    "additionalProperties": False,
}

CONFIG_SCHEMA = {
    "$schema": "https://json-schema.org/draft/2020-12/schema",
    "type": "object",
    "properties": {
        "command": {"enum": ["verify", "synthesize", "surface2d", "info"]},
        "suite": {"enum": sorted(S.SUITES)},
        "grid": {
            "type": "object",
            "properties": {
                "dims": {"type": "integer", "minimum": 2, "maximum": 8},
                "sizes": {"oneOf": [{"type": "integer", "minimum": 8},
                                    {"type": "array", "items": {"type": "integer", "minimum": 8}}]},
                "lengths": {"type": "array", "items": {"type": "number", "exclusiveMinimum": 0}},
                "periodic": {"type": "array", "items": {"type": "boolean"}},
            },
            "required": ["dims"],
            "additionalProperties": False,
        },
        "resolutions": {"type": "array", "items": {"type": "integer", "minimum": 8}, "minItems": 1},
        "metric": {
            "type": "object",
            "properties": {
                "kind": {"enum": ["flat", "perturbed", "csv"]},
                "amplitude": {"type": "number", "minimum": 0, "maximum": MAX_AMPLITUDE},
                "terms": {"type": "object",
                          "additionalProperties": {"type": "array", "items": _term}},
                "path": {"type": "string"},
            },
            "required": ["kind"],
            "additionalProperties": False,
        },
        "distribution": {
            "type": "object",
            "properties": {
                "preset": {"enum": list(PRESETS)},
                "q": {"type": "integer", "minimum": 0},
            },
            "required": ["preset"],
            "additionalProperties": False,
        },
        "s": {
            "type": "object",
            "properties": {"expr": {"type": "string"}, "csv": {"type": "string"}},
            "oneOf": [{"required": ["expr"]}, {"required": ["csv"]}],
            "additionalProperties": False,
        },
        "solver": {
            "type": "object",
            "properties": {
                "strategy": {"enum": ["monotone", "newton", "monotone+newton"]},
                "tol": {"type": "number", "exclusiveMinimum": 0},
                "max_iter": {"type": "integer", "minimum": 1},
                "continuation_steps": {"type": "integer", "minimum": 1},
                "rescale": {"oneOf": [{"const": "auto"}, {"type": "number", "exclusiveMinimum": 0}]},
            },
            "additionalProperties": False,
        },
        "diffeo": {
            "type": "array",
            "items": {
                "type": "object",
                "properties": {
                    "type": {"enum": ["translation", "shear", "warp"]},
                    "shift": {"type": "array", "items": {"type": "number"}},
                    "axis": {"type": "integer", "minimum": 0},
                    "source": {"type": "integer", "minimum": 0},
                    "terms": {"type": "array",
                              "items": {"type": "array", "items": {"type": "number"},
                                        "minItems": 3, "maxItems": 3}},
                    "rho": {"type": "number"},
                    "phase": {"type": "number"},
                },
                "required": ["type"],
            },
        },
        "scheme": {"enum": ["fd4", "spectral"]},
        "seed": {"type": "integer", "minimum": 0},
        "out": {"type": "string"},
    },
    "additionalProperties": False,
}


class ConfigError(ValueError):
    pass


def load_config(path: str | None) -> dict:
    if path is None:
        return {}
    try:
        with open(path, encoding="utf-8") as fh:
            cfg = json.load(fh)
    except (OSError, json.JSONDecodeError) as exc:
        raise ConfigError(f"cannot read config {path}: {exc}") from exc
    validate(cfg)
    return cfg


def validate(cfg: dict) -> None:
    errors = sorted(jsonschema.Draft202012Validator(CONFIG_SCHEMA).iter_errors(cfg),
                    key=lambda e: list(e.absolute_path))
    if errors:
        lines = [f"{'/'.join(str(p) for p in e.absolute_path) or '<root>'}: {e.message}"
                 for e in errors]
        raise ConfigError("config failed schema validation:\n  " + "\n  ".join(lines))


def parse_grid_token(token: str) -> dict:
    """``t3:48`` is a 3-torus with 48 nodes per axis; ``a2:64`` an annulus."""
    try:
        kind, size = token.split(":")
        dims = int(kind[1:])
        N = int(size)
    except ValueError:
        raise ConfigError(f"bad grid token {token!r}, expected e.g. t3:48") from None
    if kind[0] == "t":
        return {"dims": dims, "sizes": N}
    if kind[0] == "a" and dims == 2:
        return {"dims": 2, "sizes": [N + 1, N], "periodic": [False, True]}
    raise ConfigError(f"bad grid token {token!r}")


def build_grid(part: dict, resolution: int | None = None) -> Grid:
    dims = part["dims"]
    sizes = part.get("sizes", 32)
    sizes = [sizes] * dims if isinstance(sizes, int) else list(sizes)
    periodic = part.get("periodic", [True] * dims)
    if len(sizes) != dims or len(periodic) != dims:
        raise ConfigError("grid sizes/periodic must have one entry per dimension")
    if resolution is not None:
        sizes = [resolution + (0 if p else 1) for p in periodic]
    lengths = part.get("lengths")
    try:
        if all(periodic):
            return make_torus(dims, sizes, lengths)
        if dims == 2 and not periodic[0] and periodic[1]:
            return make_annulus(sizes, lengths or (1.0, 1.0))
    except GridError as exc:
        raise ConfigError(str(exc)) from exc
    raise ConfigError("only tori and annuli (bounded first axis) are supported")


def build_metric(part: dict | None, grid: Grid, seed: int) -> MetricField:
    part = part or {"kind": "flat"}
    kind = part["kind"]
    if kind == "flat":
        return flat_metric(grid)
    if kind == "perturbed":
        terms = None
        if "terms" in part:
            terms = {k: [{"k": t["k"], "c": t["c"], "phase": t.get("phase", 0.0)} for t in v]
                     for k, v in part["terms"].items()}
        return perturbed_metric(grid, part.get("amplitude", 0.2), terms=terms, seed=seed)
    data = load_csv_field(part["path"], grid, (grid.dim, grid.dim))
    return MetricField(grid, 0.5 * (data + np.swapaxes(data, -1, -2)))


def load_csv_field(path: str, grid: Grid, comps: tuple = ()) -> np.ndarray:
    try:
        arr = np.loadtxt(path, delimiter=",", skiprows=1, ndmin=2)
    except OSError as exc:
        raise ConfigError(f"cannot read {path}: {exc}") from exc
    ncomp = int(np.prod(comps)) if comps else 1
    if arr.shape != (grid.num_nodes, grid.dim + ncomp):
        raise ConfigError(f"{path}: expected {grid.num_nodes} rows of {grid.dim + ncomp} columns")
    return arr[:, grid.dim:].reshape(grid.shape + tuple(comps))


def build_s(part: dict | None, grid: Grid) -> np.ndarray:
    if not part:
        raise ConfigError("a prescribed function 's' is required")
    if "expr" in part:
        try:
            return evaluate(part["expr"], grid)
        except ExpressionError as exc:
            raise ConfigError(str(exc)) from exc
    return load_csv_field(part["csv"], grid)


def build_diffeo(items) -> TorusDiffeo:
    maps = []
    for it in items or []:
        try:
            if it["type"] == "translation":
                maps.append(Translation(tuple(it["shift"])))
            elif it["type"] == "shear":
                maps.append(Shear(it["axis"], it["source"],
                                  tuple((int(k), float(c), float(p)) for k, c, p in it["terms"])))
            else:
                maps.append(Warp(it["axis"], it["rho"], it.get("phase", 0.0)))
        except (KeyError, ValueError) as exc:
            raise ConfigError(f"bad diffeomorphism entry {it}: {exc}") from exc
    return TorusDiffeo(tuple(maps))


def _ladder(finest: int) -> list[int]:
    return sorted({max(8, 2 * round(finest * f / 2)) for f in (0.5, 0.75, 1.0)})


# -- commands ----------------------------------------------------------------

def cmd_verify(cfg: dict, out: Path) -> tuple[dict, int]:
    suite = cfg.get("suite", "algebra")
    seed = cfg.get("seed", 0)
    scheme = cfg.get("scheme", "fd4")
    fn = S.SUITES[suite]
    kwargs = {}
    params = fn.__code__.co_varnames[:fn.__code__.co_argcount]
    if "resolutions" in params:
        kwargs["resolutions"] = tuple(cfg.get("resolutions", S.DEFAULT_RESOLUTIONS))
    if "scheme" in params:
        kwargs["scheme"] = scheme
    if "seed" in params:
        kwargs["seed"] = seed
    if "amplitude" in params and "metric" in cfg:
        kwargs["amplitude"] = cfg["metric"].get("amplitude", 0.2)
    checks = fn(**kwargs)
    for c in checks:
        print(c.line())
    body = {"suite": suite, "checks": [c.as_dict() for c in checks],
            "passed": all(c.passed for c in checks)}
    return body, EXIT_OK if body["passed"] else EXIT_CHECK


def cmd_synthesize(cfg: dict, out: Path) -> tuple[dict, int]:
    grid = build_grid(cfg.get("grid", {"dims": 3, "sizes": 32}), cfg.get("_resolution"))
    if not grid.fully_periodic:
        raise ConfigError("synthesis runs on tori")
    seed = cfg.get("seed", 0)
    scheme = cfg.get("scheme", "fd4")
    g = build_metric(cfg.get("metric"), grid, seed)
    dspec = cfg.get("distribution", {"preset": "coordinate", "q": 1})
    try:
        V = preset_distribution(dspec["preset"], grid, q=dspec.get("q"), g=g)
    except (ValueError, GeometryError) as exc:
        raise ConfigError(str(exc)) from exc
    s = build_s(cfg.get("s"), grid)
    sol = cfg.get("solver", {})
    body = {"grid": grid.describe(), "distribution": dspec, "anchor": "synthesis"}
    try:
        rep = synthesize(g, V, s, strategy=sol.get("strategy", "monotone+newton"), scheme=scheme,
                         tol=sol.get("tol", 1e-8), rescale=sol.get("rescale", "auto"),
                         monotone_iters=sol.get("max_iter", 30))
    except SolveError as exc:
        body.update({"status": "failed", "message": str(exc)})
        code = EXIT_CHECK if "bracket" in str(exc) or "mismatch" in str(exc) else EXIT_SOLVER
        return body, code
    body.update({"status": "converged" if rep.converged else "not converged", "solver": rep.summary()})
    files = {"f": rep.field, "s": s, "scal": scal_oracle(rep.h, scheme), "h": rep.h.data}
    body["artifacts"] = _dump(out, files, grid)
    return body, EXIT_OK if rep.converged else EXIT_SOLVER


def cmd_surface2d(cfg: dict, out: Path) -> tuple[dict, int]:
    grid = build_grid(cfg.get("grid", {"dims": 2, "sizes": 64}), cfg.get("_resolution"))
    if grid.dim != 2:
        raise ConfigError("surface2d needs a two-dimensional grid")
    s = build_s(cfg.get("s"), grid)
    sol = cfg.get("solver", {})
    tol = sol.get("tol", 1e-10)
    body = {"grid": grid.describe()}
    try:
        if grid.fully_periodic:
            body["anchor"] = "surface-closed"
            dt0 = 1.0 / sol["continuation_steps"] if "continuation_steps" in sol else 0.1
            rep = solve_sine_closed(s, grid, scheme=cfg.get("scheme", "spectral"), tol=tol,
                                    phi=build_diffeo(cfg.get("diffeo")), dt0=dt0)
        else:
            body["anchor"] = "surface-boundary"
            rep = solve_sine_boundary(s, grid, tol=tol)
    except InadmissibleError as exc:
        body.update({"status": "rejected", "message": str(exc)})
        return body, EXIT_CHECK
    except SolveError as exc:
        body.update({"status": "failed", "message": str(exc)})
        return body, EXIT_SOLVER
    summary = rep.summary()
    summary.pop("energy", None)
    body.update({"status": "converged" if rep.converged else "not converged", "solver": summary})
    scheme = cfg.get("scheme", "spectral") if grid.fully_periodic else "fd4"
    files = {"u": rep.field, "h": rep.h.data, "scal": scal_oracle(rep.h, scheme)}
    body["artifacts"] = _dump(out, files, grid)
    return body, EXIT_OK if rep.converged else EXIT_SOLVER


def cmd_info() -> dict:
    return {"version": __version__, "suites": sorted(S.SUITES), "anchors": S.ANCHORS,
            "presets": list(PRESETS)}


def _dump(out: Path, files: dict, grid: Grid) -> list[str]:
    out.mkdir(parents=True, exist_ok=True)
    names = []
    for name, arr in files.items():
        path = out / f"{name}.csv"
        dump_csv(path, np.asarray(arr), grid)
        names.append(path.name)
    return names


def _jsonable(obj):
    if isinstance(obj, dict):
        return {str(k): _jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_jsonable(v) for v in obj]
    if isinstance(obj, (np.floating, float)):
        v = float(obj)
        return v if np.isfinite(v) else str(v)
    if isinstance(obj, (np.integer,)):
        return int(obj)
    if isinstance(obj, np.bool_):
        return bool(obj)
    return obj


def report_body_json(body: dict) -> str:
    """Canonical serialisation of a report body (no timing fields)."""
    return json.dumps(_jsonable(body), sort_keys=True, indent=2)


def write_report(out: Path, config: dict, body: dict, seconds: float) -> Path:
    out.mkdir(parents=True, exist_ok=True)
    report = {"config": _jsonable(config), "body": _jsonable(body),
              "timing": {"wall_seconds": round(seconds, 3)}}
    path = out / "report.json"
    path.write_text(json.dumps(report, sort_keys=True, indent=2) + "\n", encoding="utf-8")
    return path


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="curvforge", description=__doc__)
    p.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    p.add_argument("-v", "--verbose", action="store_true")
    sub = p.add_subparsers(dest="command", required=True)
    for name in ("verify", "synthesize", "surface2d", "info"):
        sp = sub.add_parser(name)
        sp.add_argument("--config", help="JSON run configuration")
        sp.add_argument("--out", help="output directory (default: ./out)")
        sp.add_argument("--resolution", type=int, help="nodes per axis (finest level for verify)")
        sp.add_argument("--scheme", choices=["fd4", "spectral"])
        sp.add_argument("--seed", type=int)
        if name == "verify":
            sp.add_argument("--suite", choices=sorted(S.SUITES))
            sp.add_argument("--grid", help="grid token such as t3:48 (sets the finest level)")
    return p


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.DEBUG if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    if args.command == "info":
        print(json.dumps(cmd_info(), indent=2))
        return EXIT_OK
    t0 = time.perf_counter()
    try:
        cfg = load_config(args.config)
        cfg.setdefault("command", args.command)
        if cfg["command"] != args.command:
            raise ConfigError(f"config is for {cfg['command']!r}, not {args.command!r}")
        for key in ("scheme", "seed"):
            if getattr(args, key) is not None:
                cfg[key] = getattr(args, key)
        if args.command == "verify":
            if args.suite:
                cfg["suite"] = args.suite
            finest = args.resolution
            if args.grid:
                finest = parse_grid_token(args.grid)["sizes"]
            if finest is not None:
                cfg["resolutions"] = _ladder(finest)
        validate(cfg)
        out = Path(args.out or cfg.get("out", "out"))
        run_cfg = dict(cfg)
        if args.resolution is not None and args.command != "verify":
            run_cfg["_resolution"] = args.resolution
        handler = {"verify": cmd_verify, "synthesize": cmd_synthesize,
                   "surface2d": cmd_surface2d}[args.command]
        body, code = handler(run_cfg, out)
    except ConfigError as exc:
        print(f"configuration error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    path = write_report(out, cfg, body, time.perf_counter() - t0)
    status = body.get("status", "passed" if body.get("passed") else "failed")
    print(f"{args.command}: {status} (report: {path})")
    return code


if __name__ == "__main__":  # pragma: no cover
    sys.exit(main())
