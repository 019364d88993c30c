import json

import numpy as np

from curvforge import suites as S


def test_order_check_rules():
    Ns = [32, 48, 64]
    fourth = [(32 / N) ** 4 * 1e-3 for N in Ns]
    assert S.order_check("a", "x", Ns, fourth).passed
    third = [(32 / N) ** 3 * 1e-3 for N in Ns]
    assert not S.order_check("b", "x", Ns, third).passed
    # roundoff floor passes regardless of slope
    assert S.order_check("c", "x", Ns, [1e-12, 3e-12, 2e-12]).passed
    flat = [1e-3, 1e-3, 1e-3]
    assert not S.order_check("d", "x", Ns, flat).passed


def test_check_serialises():
    c = S.order_check("a", "x", [8, 16], [0.0, 0.0])
    d = c.as_dict()
    assert d["order"] == "inf"
    json.dumps(d)
    assert c.line().startswith("PASS a")
    assert S.abs_check("b", "y", [1e-3], 1e-4).line().startswith("FAIL")


def test_every_check_has_known_anchor():
    prefixes = {k.split(":")[0] for k in S.ANCHORS}
    checks = S.algebra_suite(N=8) + S.linearization_suite(sizes={"lorentz4": 8, "index2": 8})
    for c in checks:
        assert c.anchor.split(":")[0] in prefixes, c.anchor


def test_switch_suite_small_spectral_runs():
    checks = S.switch_suite(resolutions=(12, 16), scheme="spectral", spectral_tol=np.inf,
                            distributions=("coordinate",))
    assert checks and all(c.kind == "abs" for c in checks)
