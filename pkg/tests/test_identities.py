import numpy as np

from g2flow import identities


def test_check_line_format():
    ok = identities.Check("x", 1e-15, 1e-12)
    bad = identities.Check("y", 1e-3, 1e-12)
    nan = identities.Check("z", float("nan"), 1.0)
    assert ok.ok and ok.line().startswith("PASS")
    assert not bad.ok and bad.line().startswith("FAIL")
    assert not nan.ok


def test_rel_is_relative():
    a = np.array([[1e6, 0.0]])
    assert identities.rel(a * (1 + 1e-14), a) < 1e-13


def test_small_algebra_suite_passes():
    checks = identities.algebra_suite(count=50, seed=3)
    assert all(c.ok for c in checks), [c.line() for c in checks if not c.ok]


def test_small_conformal_suite_passes():
    checks = identities.conformal_suite(factors=2, n=64)
    assert all(c.ok for c in checks), [c.line() for c in checks if not c.ok]
