import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from proxescape import problems
from proxescape.errors import ParameterError, PreconditionError
from proxescape.problems import ManifoldClass, ManifoldSpec

coord = st.floats(-2, 2, allow_nan=False)
point2 = st.tuples(coord, coord).map(np.array)


def subproblem_min(value, x, mu):
    """Oracle: brute-force minimizer of value(y) + |y - x|^2 / (2 mu) at a single center."""
    return problems.brute_force_prox(value, np.atleast_2d(x), mu)[0]


# -- pathological closed form -------------------------------------------------


def test_pathological_prox_origin_is_fixed():
    assert np.array_equal(problems.pathological_prox([0.0, 0.0], 2.0, 6.0), [0.0, 0.0])


def test_pathological_prox_on_y_axis():
    np.testing.assert_allclose(problems.pathological_prox([0.0, 1.0], 2.0, 6.0), [0.0, 6 / 7], atol=1e-15)
    f = problems.pathological(2.0)
    np.testing.assert_allclose(subproblem_min(f.value, [0.0, 1.0], 1 / 6), [0.0, 6 / 7], atol=1e-6)


def test_pathological_prox_same_sign_middle_case():
    got = problems.pathological_prox([0.5, 1.0], 2.0, 6.0)
    np.testing.assert_allclose(got, [7.5 / 17, 13.5 / 17], atol=1e-14)
    f = problems.pathological(2.0)
    np.testing.assert_allclose(subproblem_min(f.value, [0.5, 1.0], 1 / 6), got, atol=1e-6)


@pytest.mark.parametrize("rho,lam", [(2.0, 2.0), (2.0, 1.0), (0.0, 6.0), (-1.0, 6.0)])
def test_pathological_prox_rejects_bad_parameters(rho, lam):
    with pytest.raises(ParameterError):
        problems.pathological_prox([0.1, 0.2], rho, lam)


@pytest.mark.parametrize("rho,lam", [(2.0, 6.0), (1.0, 3.0), (0.5, 10.0)])
def test_pathological_prox_against_bruteforce(rho, lam):
    rng = np.random.default_rng(11)
    pts = rng.uniform(-2, 2, size=(60, 2))
    f = problems.pathological(rho)
    exact = np.array([problems.pathological_prox(p, rho, lam) for p in pts])
    brute = problems.brute_force_prox(f.value, pts, 1.0 / lam)
    assert np.max(np.linalg.norm(exact - brute, axis=1)) < 1e-6


# -- absym --------------------------------------------------------------------


def test_absym_prox_examples():
    np.testing.assert_allclose(problems.absym_prox([1.0, 0.2], 0.25), [0.75, 0.4], atol=1e-15)
    assert np.array_equal(problems.absym_prox([0.1, 0.0], 0.25), [0.0, 0.0])
    for mu in (0.01, 0.2, 0.49):
        assert np.array_equal(problems.absym_prox([0.0, 0.0], mu), [0.0, 0.0])


def test_absym_prox_against_bruteforce():
    f = problems.absym()
    pts = np.random.default_rng(3).uniform(-2, 2, size=(60, 2))
    exact = np.array([f.prox_exact(p, 0.25) for p in pts])
    assert np.max(np.linalg.norm(exact - problems.brute_force_prox(f.value, pts, 0.25), axis=1)) < 1e-6


def test_absym_prox_requires_small_mu():
    with pytest.raises(ParameterError):
        problems.absym_prox([0.0, 1.0], 0.5)


def test_absym_split_and_composite_values_agree():
    pts = np.random.default_rng(5).uniform(-2, 2, size=(20, 2))
    base, split, comp = problems.absym(), problems.absym_split(), problems.absym_composite()
    for p in pts:
        assert split.value(p) == pytest.approx(base.value(p), abs=1e-14)
        assert comp.value(p) == pytest.approx(base.value(p), abs=1e-14)
    assert split.beta == 2.0 and split.rho == 0.0


def test_composite_quadratic_approximation_constant():
    # |h(F(y)) - h(F(x) + F'(x)(y - x))| <= beta/2 |y - x|^2
    comp = problems.absym_composite()
    rng = np.random.default_rng(6)
    for _ in range(200):
        x, y = rng.uniform(-2, 2, size=(2, 2))
        gap = abs(comp.value(y) - comp.linearized_value(x, y))
        assert gap <= 0.5 * comp.beta * np.sum((y - x) ** 2) + 1e-12


def test_composite_linearized_prox_against_bruteforce():
    comp = problems.absym_composite()
    rng = np.random.default_rng(7)
    for _ in range(10):
        a, c = rng.uniform(-1.5, 1.5, size=(2, 2))
        got = comp.linearized_prox(a, c, 0.25)
        want = subproblem_min(lambda y: comp.linearized_value(a, y), c, 0.25)
        assert np.linalg.norm(got - want) < 1e-6


def test_smooth_piece_gradient_is_beta_lipschitz():
    g = problems.absym_split().g
    rng = np.random.default_rng(8)
    for _ in range(200):
        x, y = rng.uniform(-3, 3, size=(2, 2))
        assert np.linalg.norm(g.gradient(x) - g.gradient(y)) <= g.beta * np.linalg.norm(x - y) + 1e-12


# -- tilt ---------------------------------------------------------------------


def test_tilt_examples():
    base = problems.absym()
    t = problems.tilt(base, [0.1, 0.0])
    assert np.array_equal(t.prox_exact(np.zeros(2), 0.25), base.prox_exact(np.array([0.025, 0.0]), 0.25))
    assert np.array_equal(t.prox_exact(np.zeros(2), 0.25), [0.0, 0.0])
    assert problems.tilt(base, [1.0, 0.0]).value(np.array([1.0, 1.0])) == -1.0


@settings(max_examples=200, deadline=None)
@given(x=point2, v=point2, mu=st.floats(0.01, 0.45))
def test_tilt_prox_identity(x, v, mu):
    base = problems.absym()
    t = problems.tilt(base, v)
    assert np.array_equal(t.prox_exact(x, mu), base.prox_exact(x + mu * v, mu))


@settings(max_examples=100, deadline=None)
@given(x=point2)
def test_zero_tilt_is_identity(x):
    base = problems.absym()
    assert problems.tilt(base, [0.0, 0.0]).value(x) == base.value(x)


def test_tilt_dimension_mismatch():
    with pytest.raises(PreconditionError):
        problems.tilt(problems.absym(), [1.0, 2.0, 3.0])


# -- weak convexity -----------------------------------------------------------


BUILTINS = [problems.pathological(2.0), problems.pathological(0.7), problems.absym(), problems.absquad(),
            problems.quadratic([1.0, -1.0]), problems.tilt(problems.absym(), [0.3, -0.2])]


@pytest.mark.parametrize("f", BUILTINS, ids=lambda f: f.name)
@settings(max_examples=150, deadline=None)
@given(x=point2, y=point2)
def test_subgradient_inequality(f, x, y):
    v = f.subgrad(x)
    lower = f.value(x) + v @ (y - x) - 0.5 * f.rho * np.sum((y - x) ** 2)
    assert f.value(y) >= lower - 1e-9 * max(1.0, abs(f.value(y)))


# -- manifolds ----------------------------------------------------------------


def test_absym_manifold_is_strict_saddle():
    spec = problems.absym_manifold()
    assert spec.classification is ManifoldClass.STRICT_SADDLE
    np.testing.assert_allclose(spec.reduced_quadratic_matrix(), [[-2.0]])


def test_manifold_classification_is_validated():
    with pytest.raises(PreconditionError):
        ManifoldSpec(np.zeros(2), np.array([[0.0, 1.0]]), lambda d: -d[1] ** 2, ManifoldClass.LOCAL_MIN)
    with pytest.raises(PreconditionError):
        ManifoldSpec(np.zeros(2), np.array([[0.0, 2.0]]), lambda d: d[1] ** 2, ManifoldClass.LOCAL_MIN)


def test_quadratic_manifold_classification():
    assert problems.quadratic_manifold([1.0, 2.0]).classification is ManifoldClass.LOCAL_MIN
    assert problems.quadratic_manifold([1.0, -1.0]).classification is ManifoldClass.STRICT_SADDLE


# -- ids ----------------------------------------------------------------------


def test_parse_problem_id():
    assert problems.parse_problem_id("pathological:rho=2") == ("pathological", {"rho": 2.0})
    assert problems.parse_problem_id("absym") == ("absym", {})


@pytest.mark.parametrize("algo,cls", [("prox-point", problems.ProblemOracle),
                                      ("prox-gradient", problems.SplitProblem),
                                      ("prox-linear", problems.CompositeProblem)])
def test_builtin_absym_resolves_per_algorithm(algo, cls):
    assert isinstance(problems.builtin_problem("absym", algo), cls)


def test_builtin_unknown_id():
    with pytest.raises(ParameterError):
        problems.builtin_problem("nope")


def test_builtin_pathological_parameter():
    assert problems.builtin_problem("pathological:rho=0.5").rho == 0.5
