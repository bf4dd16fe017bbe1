import json

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from hypothesis.extra import numpy as hnp

from proxescape import problems, spectra
from proxescape.errors import CapabilityError, PreconditionError
from proxescape.problems import ManifoldClass
from proxescape.proxengine import IterationMap, ProxParams
from proxescape.spectra import Stability

P25 = ProxParams(0.25)


def saddle_maps():
    return [IterationMap("prox-point", problems.absym(), P25, 0.9),
            IterationMap("prox-gradient", problems.absym_split(), P25, 0.4),
            IterationMap("prox-linear", problems.absym_composite(), P25, 0.3)]


def match(got, want):
    """Largest distance from a wanted eigenvalue to the nearest computed one (and vice versa)."""
    got, want = np.asarray(got), np.asarray(want)
    return max(max(np.min(np.abs(got - w)) for w in want), max(np.min(np.abs(want - g)) for g in got))


# -- finite differences -------------------------------------------------------------


def test_fd_jacobian_identity():
    J = spectra.fd_jacobian(lambda x: x, np.array([0.3, -1.0, 2.0]))
    assert np.max(np.abs(J - np.eye(3))) < 1e-12


@pytest.mark.parametrize("m,want", list(zip(saddle_maps()[:2], [np.diag([0.0, 2.0]), np.diag([0.0, 1.5])])))
def test_fd_jacobian_at_saddle(m, want):
    assert np.max(np.abs(spectra.fd_jacobian(m.S, np.zeros(2)) - want)) < 1e-6


def test_kink_suspect():
    S = IterationMap("prox-point", problems.absym(), P25).S
    assert not spectra.kink_suspect(S, np.zeros(2), 1e-5)
    # the soft threshold of |x| bends at x = mu
    assert spectra.kink_suspect(S, np.array([0.25, 0.0]), 1e-5)


# -- eigenvalues ----------------------------------------------------------------------


@pytest.mark.parametrize("M,want", [
    (np.diag([0.0, 2.0]), [0.0, 2.0]),
    (np.array([[0.0, 1.0], [-1.0, 0.0]]), [1j, -1j]),
    (np.array([[2.0, 1.0], [1.0, 2.0]]), [1.0, 3.0]),
    (np.array([[1.0, 1.0], [0.0, 1.0]]), [1.0, 1.0]),
    (np.zeros((3, 3)), [0.0, 0.0, 0.0]),
    (np.array([[5.0]]), [5.0]),
])
def test_eigenvalue_fixtures(M, want):
    assert match(spectra.eigenvalues(M), want) < 1e-12


def test_hessenberg_form_and_similarity():
    M = np.random.default_rng(0).standard_normal((6, 6))
    H = spectra.hessenberg(M)
    assert np.all(np.abs(np.tril(H, -2)) < 1e-12)
    assert np.all(H.imag == 0)  # real input keeps real reflectors
    assert match(spectra.eigenvalues(H.real), np.linalg.eigvals(M)) < 1e-10


@settings(max_examples=60, deadline=None)
@given(M=st.integers(1, 12).flatmap(
    lambda n: hnp.arrays(float, (n, n), elements=st.floats(-1e3, 1e3))))
def test_eigenvalues_against_numpy(M):
    vals, vecs = spectra.eigenpairs(M)
    scale = max(1.0, np.linalg.norm(M))
    assert np.all(spectra.eigen_residuals(M, vals, vecs) <= 1e-8 * scale)
    # multiple eigenvalues are ill-conditioned, so compare through sums and residuals
    assert abs(np.sum(vals) - np.trace(M)) <= 1e-9 * scale * M.shape[0]


@pytest.mark.parametrize("n", [3, 10, 32, 64])
def test_eigenvalues_random_dense(n):
    M = np.random.default_rng(n).standard_normal((n, n))
    vals, vecs = spectra.eigenpairs(M)
    assert match(vals, np.linalg.eigvals(M)) < 1e-8
    assert np.max(spectra.eigen_residuals(M, vals, vecs)) <= 1e-8 * np.linalg.norm(M)


# -- classification -------------------------------------------------------------------------


@pytest.mark.parametrize("m,top", list(zip(saddle_maps(), [2.0, 1.5, 1.5])), ids=["pp", "pg", "pl"])
def test_saddle_spectra(m, top):
    rep = spectra.classify_fixed_point(m, np.zeros(2))
    assert match(rep.eigenvalues, [0.0, top]) < 1e-4
    assert rep.classification is Stability.UNSTABLE
    assert rep.max_real_eigenvalue == pytest.approx(top, abs=1e-4)
    assert not rep.kink_suspect


def test_local_minimizer_not_unstable():
    f = problems.tilt(problems.absquad(), [0.5, 1.0])
    m = IterationMap("prox-point", f, P25, 0.5)
    rep = spectra.classify_fixed_point(m, [0.0, 0.5])
    assert rep.classification is Stability.NOT_UNSTABLE
    assert match(rep.eigenvalues, [0.0, 1.0 / (1.0 + 2 * 0.25)]) < 1e-6


def test_classify_requires_fixed_point():
    with pytest.raises(PreconditionError):
        spectra.classify_fixed_point(saddle_maps()[0], [0.0, 1.0])


def test_strict_saddle_implies_unstable():
    cases = [(saddle_maps(), problems.absym_manifold())]
    q = problems.quadratic([1.0, -1.0])
    cases.append(([IterationMap("prox-point", q, ProxParams(0.5), 0.5)], problems.quadratic_manifold([1.0, -1.0])))
    for maps, spec in cases:
        assert spec.classification is ManifoldClass.STRICT_SADDLE
        for m in maps:
            assert spectra.classify_fixed_point(m, spec.critical_point).classification is Stability.UNSTABLE


@pytest.mark.parametrize("m", saddle_maps(), ids=["pp", "pg", "pl"])
@settings(max_examples=25, deadline=None)
@given(alpha=st.floats(0.01, 1.0))
def test_spectral_shift_under_damping(m, alpha):
    m = m.with_alpha(alpha)
    lam = spectra.eigenvalues(spectra.fd_jacobian(m.S, np.zeros(2)))
    lam_T = spectra.eigenvalues(spectra.fd_jacobian(m.T, np.zeros(2)))
    assert match(lam_T, 1.0 - alpha + alpha * lam) < 1e-8
    rep = spectra.classify_fixed_point(m, np.zeros(2))
    assert match(rep.damped_eigenvalues, 1.0 - alpha + alpha * lam) < 1e-12


def test_spectrum_report_json():
    d = json.loads(spectra.classify_fixed_point(saddle_maps()[0], np.zeros(2)).to_json())
    assert d["schema_version"] == "1" and d["classification"] == "unstable"
    assert {"eigenvalues", "jacobian", "fd_step", "class_tol", "kink_suspect"} <= set(d)


# -- envelope curvature -----------------------------------------------------------------------


def test_moreau_hessian_absym():
    H, asym = spectra.moreau_hessian_fd(problems.absym(), np.zeros(2), P25, return_asymmetry=True)
    assert np.max(np.abs(H - np.diag([4.0, -4.0]))) < 1e-3
    assert np.array_equal(H, H.T) and asym <= 1e-3


@pytest.mark.parametrize("mu", [0.1, 0.5, 1.0])
def test_moreau_hessian_convex_quadratic(mu):
    f = problems.quadratic([1.0, 1.0])
    x = np.array([0.3, -0.7])
    H = spectra.moreau_hessian_fd(f, x, ProxParams(mu))
    assert np.max(np.abs(H - np.eye(2) / (1.0 + mu))) < 1e-6


def test_moreau_hessian_affine_is_zero():
    f = problems.tilt(problems.quadratic([0.0, 0.0]), [0.4, -1.0])
    assert np.max(np.abs(spectra.moreau_hessian_fd(f, np.array([1.0, 2.0]), P25))) < 1e-9


@pytest.mark.parametrize("mu", [0.01, 0.1, 0.25])
def test_mor_smooth_absym(mu):
    rep = spectra.check_mor_smooth_inequality(problems.absym(), problems.absym_manifold(), ProxParams(mu))
    assert rep.lhs == pytest.approx(-2.0 / (1.0 - 2.0 * mu), abs=1e-3)
    assert rep.rhs == -2.0 and rep.holds


def test_mor_smooth_quadratic():
    spec = problems.quadratic_manifold([1.0, -1.0])
    rep = spectra.check_mor_smooth_inequality(problems.quadratic([1.0, -1.0]), spec, P25)
    assert rep.lhs == pytest.approx(-1.0 / (1.0 - 0.25), abs=1e-6)
    assert rep.rhs == pytest.approx(-1.0) and rep.holds


def test_mor_smooth_needs_active_manifold():
    with pytest.raises(PreconditionError):
        spectra.check_mor_smooth_inequality(problems.pathological(2.0), problems.pathological_manifold(),
                                            ProxParams(1 / 6))


# -- reduced Jacobian -----------------------------------------------------------------------


@pytest.mark.parametrize("m,want", list(zip(saddle_maps(), [2.0, 1.5, 1.5])), ids=["pp", "pg", "pl"])
def test_reduced_jacobian_prediction(m, want):
    spec = problems.absym_manifold()
    pred = spectra.reduced_jacobian_prediction(m.kind, spec, m.params)
    assert pred[0, 0] == pytest.approx(want, abs=1e-14)
    _, fd, err = spectra.check_reduced_jacobian(m, spec)
    assert err < 1e-5


@pytest.mark.parametrize("mu", [0.05, 0.2, 0.45])
def test_reduced_jacobian_prediction_other_mu(mu):
    spec = problems.absym_manifold()
    m = IterationMap("prox-point", problems.absym(), ProxParams(mu))
    assert spectra.reduced_jacobian_prediction(m.kind, spec, m.params)[0, 0] == pytest.approx(1 / (1 - 2 * mu))
    assert spectra.check_reduced_jacobian(m, spec)[2] < 1e-5


def test_reduced_jacobian_quadratic_full_space():
    diag = [1.0, -1.0]
    m = IterationMap("prox-point", problems.quadratic(diag), ProxParams(0.5))
    pred, fd, err = spectra.check_reduced_jacobian(m, problems.quadratic_manifold(diag))
    np.testing.assert_allclose(pred, np.diag([1 / 1.5, 1 / 0.5]), atol=1e-12)


def test_reduced_jacobian_missing_data():
    m = IterationMap("prox-gradient", problems.absym_split(), P25)
    with pytest.raises(CapabilityError):
        spectra.reduced_jacobian_prediction(m.kind, problems.absquad_manifold(), P25)
