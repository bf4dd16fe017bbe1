import pytest

from proxescape import verify


def test_unknown_suite():
    with pytest.raises(KeyError):
        verify.run_checks(["nope"])


@pytest.mark.parametrize("suite", ["cone", "eigen", "mor-smooth"])
def test_single_suite_passes(suite):
    results = verify.run_checks([suite], verify.VerifyOptions(seed=3))
    assert results and all(r.passed and r.suite == suite for r in results)


def test_result_line():
    r = verify.CheckResult("moreau", "sandwich", True, 1e-9, 1e-6, 0.1)
    assert r.line().startswith("[PASS] moreau/sandwich:")
    assert verify.CheckResult("x", "y", False, 1.0, 0.0, 0.0).line().startswith("[FAIL]")


def test_coarse_step_fails_fd_fixture():
    results = verify.run_checks(["jacobian"], verify.VerifyOptions(fd_step=0.1))
    assert {r.name for r in results if not r.passed} == {"fd-accuracy:smooth-map"}
