import json

import numpy as np
import pytest

from curvforge import cli


def write(tmp_path, cfg, name="cfg.json"):
    p = tmp_path / name
    p.write_text(json.dumps(cfg))
    return str(p)


def run(tmp_path, command, cfg, *extra, out="out"):
    path = write(tmp_path, cfg)
    code = cli.main([command, "--config", path, "--out", str(tmp_path / out), *extra])
    rep = tmp_path / out / "report.json"
    return code, (json.loads(rep.read_text()) if rep.exists() else None)


def test_info(capsys):
    assert cli.main(["info"]) == 0
    info = json.loads(capsys.readouterr().out)
    assert "switch" in info["suites"] and info["anchors"]


@pytest.mark.parametrize("cfg", [
    {"command": "synthesize", "metric": {"kind": "perturbed", "amplitude": 0.5},
     "grid": {"dims": 3}},
    {"command": "synthesize", "grid": {"dims": 3}, "unknown": 1},
    {"command": "surface2d", "grid": {"dims": 2, "sizes": 4}},
    {"command": "synthesize", "scheme": "fd2"},
])
def test_schema_errors_exit_3(tmp_path, capsys, cfg):
    code, rep = run(tmp_path, cfg["command"], cfg)
    assert code == cli.EXIT_CONFIG and rep is None
    assert "schema" in capsys.readouterr().err


def test_bad_json_and_expression(tmp_path, capsys):
    p = tmp_path / "broken.json"
    p.write_text("{not json")
    assert cli.main(["synthesize", "--config", str(p)]) == cli.EXIT_CONFIG
    cfg = {"command": "synthesize", "grid": {"dims": 3, "sizes": 12}, "s": {"expr": "exp(x)"}}
    assert run(tmp_path, "synthesize", cfg)[0] == cli.EXIT_CONFIG
    cfg = {"command": "surface2d", "grid": {"dims": 2, "sizes": 16}, "s": {"expr": "1"}}
    assert run(tmp_path, "synthesize", cfg)[0] == cli.EXIT_CONFIG


def test_grid_tokens():
    assert cli.parse_grid_token("t3:48") == {"dims": 3, "sizes": 48}
    assert cli.parse_grid_token("a2:64")["sizes"] == [65, 64]
    with pytest.raises(cli.ConfigError):
        cli.parse_grid_token("q3:10")


def test_verify_coefficients(tmp_path, capsys):
    code, rep = run(tmp_path, "verify", {"command": "verify"}, "--suite", "coefficients")
    assert code == cli.EXIT_OK
    assert rep["body"]["passed"]
    assert all({"name", "anchor", "tolerance", "passed"} <= set(c) for c in rep["body"]["checks"])
    assert "timing" in rep and "wall_seconds" not in rep["body"]
    assert "PASS coefficients/identity_b" in capsys.readouterr().out


def test_synthesize_writes_fields(tmp_path):
    cfg = {"command": "synthesize", "grid": {"dims": 3, "sizes": 16},
           "distribution": {"preset": "contact3"}, "s": {"expr": "-3 + sin(2*pi*z)"}}
    code, rep = run(tmp_path, "synthesize", cfg)
    assert code == cli.EXIT_OK
    body = rep["body"]
    assert body["status"] == "converged" and body["solver"]["index"] == 2
    for name in ("f", "h", "s", "scal"):
        assert (tmp_path / "out" / f"{name}.csv").exists()
    h = np.loadtxt(tmp_path / "out" / "h.csv", delimiter=",", skiprows=1)
    assert h.shape == (16**3, 3 + 9)


def test_synthesize_csv_inputs(tmp_path):
    from curvforge.lattice import dump_csv, make_torus
    from curvforge.presets import perturbed_metric
    grid = make_torus(3, [16])
    dump_csv(tmp_path / "g.csv", perturbed_metric(grid, 0.1, seed=2).data, grid)
    dump_csv(tmp_path / "s.csv", np.full(grid.shape, -3.0), grid)
    cfg = {"command": "synthesize", "grid": {"dims": 3, "sizes": 16},
           "metric": {"kind": "csv", "path": str(tmp_path / "g.csv")},
           "distribution": {"preset": "contact3"}, "s": {"csv": str(tmp_path / "s.csv")}}
    code, rep = run(tmp_path, "synthesize", cfg)
    assert code == cli.EXIT_OK, rep
    cfg["grid"]["sizes"] = 12
    assert run(tmp_path, "synthesize", cfg, out="o2")[0] == cli.EXIT_CONFIG


def test_bracket_failure_exit_2(tmp_path):
    cfg = {"command": "synthesize", "grid": {"dims": 3, "sizes": 12},
           "distribution": {"preset": "coordinate", "q": 1}, "s": {"expr": "-1 - 0.5*sin(2*pi*x)"}}
    code, rep = run(tmp_path, "synthesize", cfg)
    assert code == cli.EXIT_CHECK
    assert rep["body"]["status"] == "failed" and "bracket" in rep["body"]["message"]


def test_surface_closed_and_rejection(tmp_path):
    cfg = {"command": "surface2d", "grid": {"dims": 2, "sizes": 32}, "s": {"expr": "sin(2*pi*y)"}}
    code, rep = run(tmp_path, "surface2d", cfg)
    assert code == cli.EXIT_OK
    assert rep["body"]["solver"]["gauss_bonnet"] <= 1e-8
    cfg["s"] = {"expr": "1"}
    code, rep = run(tmp_path, "surface2d", cfg, out="o2")
    assert code == cli.EXIT_CHECK
    assert rep["body"]["status"] == "rejected" and "Gauss-Bonnet" in rep["body"]["message"]


def test_surface_annulus_reports_shrink(tmp_path):
    cfg = {"command": "surface2d", "grid": {"dims": 2, "sizes": [17, 16], "periodic": [False, True]},
           "s": {"expr": "1"}}
    code, rep = run(tmp_path, "surface2d", cfg)
    assert code == cli.EXIT_OK
    assert rep["body"]["solver"]["amplitude"] == 1.0
    assert rep["body"]["anchor"] == "surface-boundary"


def test_surface_with_diffeo(tmp_path):
    cfg = {"command": "surface2d", "grid": {"dims": 2, "sizes": 32}, "s": {"expr": "sin(2*pi*y)"},
           "diffeo": [{"type": "translation", "shift": [0.1, 0.2]},
                      {"type": "warp", "axis": 1, "rho": 0.05}]}
    code, rep = run(tmp_path, "surface2d", cfg)
    assert code == cli.EXIT_OK
    assert [d["type"] for d in rep["body"]["solver"]["diffeo"]] == ["translation", "warp"]


def test_report_body_deterministic(tmp_path):
    cfg = {"command": "synthesize", "grid": {"dims": 3, "sizes": 12}, "seed": 3,
           "metric": {"kind": "perturbed", "amplitude": 0.1},
           "distribution": {"preset": "contact3"}, "s": {"expr": "-3"}}
    a = run(tmp_path, "synthesize", cfg, out="a")[1]["body"]
    b = run(tmp_path, "synthesize", cfg, out="b")[1]["body"]
    assert cli.report_body_json(a) == cli.report_body_json(b)


def test_command_mismatch(tmp_path):
    assert run(tmp_path, "surface2d", {"command": "verify"})[0] == cli.EXIT_CONFIG
