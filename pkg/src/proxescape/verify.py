"""Property checks against the built-in problems, grouped into named suites.

Each check returns a :class:`CheckResult` carrying the measured quantity and
the threshold it was held to.  ``run_checks`` drives them for the ``verify``
subcommand.
"""

from __future__ import annotations

import time
from dataclasses import dataclass

import numpy as np

from . import dynamics, mba, problems, spectra
from .errors import CertificateError, ProxEscapeError
from .proxengine import IterationMap, MapKind, ProxParams, moreau_grad, moreau_value, prox


@dataclass(frozen=True)
class VerifyOptions:
    seed: int = 0
    fd_step: float | None = None  # overrides every finite-difference step when set
    n_prox: int = 1000
    n_grad: int = 100
    n_pairs: int = 1000
    n_escape: int = 1000
    n_cone: int = 500


@dataclass(frozen=True)
class CheckResult:
    suite: str
    name: str
    passed: bool
    measured: float
    threshold: float
    seconds: float = 0.0
    detail: str = ""

    def line(self):
        flag = "PASS" if self.passed else "FAIL"
        return (f"[{flag}] {self.suite}/{self.name}: measured={self.measured:.3e} "
                f"threshold={self.threshold:.3e} ({self.seconds:.2f}s){' ' + self.detail if self.detail else ''}")


def _rng(opts, salt):
    return np.random.default_rng([opts.seed, salt])


def _moreau_builtins():
    return [
        (problems.absym(), 0.25),
        (problems.pathological(2.0), 1.0 / 6.0),
        (problems.tilt(problems.absym(), [0.3, 0.1]), 0.25),
        (problems.absquad(), 0.5),
    ]


# -- prox ---------------------------------------------------------------------


def check_prox_bruteforce(opts):
    out = []
    pts = _rng(opts, 1).uniform(-2, 2, size=(opts.n_prox, 2))
    for f, mu in [(problems.pathological(2.0), 1.0 / 6.0), (problems.absym(), 0.25)]:
        exact = np.array([f.prox_exact(p, mu) for p in pts])
        brute = problems.brute_force_prox(f.value, pts, mu)
        err = float(np.max(np.linalg.norm(exact - brute, axis=1)))
        out.append(("bruteforce:" + f.name, err, 1e-6, err <= 1e-6))
    return out


def check_weak_convexity(opts):
    out = []
    rng = _rng(opts, 2)
    for f, _ in _moreau_builtins() + [(problems.quadratic([1.0, -1.0]), 0.5)]:
        X = rng.uniform(-2, 2, size=(opts.n_pairs, f.dim))
        Y = rng.uniform(-2, 2, size=(opts.n_pairs, f.dim))
        worst = np.inf
        for x, y in zip(X, Y):
            v = f.subgrad(x)
            gap = f.value(y) - f.value(x) - v @ (y - x) + 0.5 * f.rho * np.sum((y - x) ** 2)
            worst = min(worst, gap)
        out.append(("subgrad-inequality:" + f.name, float(worst), -1e-9, worst >= -1e-9))
    return out


# -- cone ---------------------------------------------------------------------


def check_cone(opts):
    rng = _rng(opts, 3)
    sampler = dynamics.ConeSampler(6.0)
    worst = 0.0
    ok = True
    for _ in range(100):
        x0 = sampler(rng)
        try:
            got = dynamics.cone_dynamics_check(2.0, 6.0, 0.5, x0, 50)
        except CertificateError:
            ok = False
            continue
        worst = max(worst, float(np.max(np.abs(got - dynamics.cone_closed_form(x0, 6.0, 0.5, 50)))))
    invariant = True
    S = problems.pathological(2.0)
    m = IterationMap(MapKind.PROX_POINT, S, ProxParams(1.0 / 6.0), 0.5)
    for _ in range(10_000):
        p = sampler(rng)
        if not dynamics.in_cone(m.T(p), 6.0):
            invariant = False
            break
    return [("closed-form-iterates", worst, 1e-10, ok and worst <= 1e-10),
            ("cone-invariance", 0.0 if invariant else 1.0, 0.0, invariant)]


# -- moreau -------------------------------------------------------------------


def check_moreau(opts):
    out = []
    rng = _rng(opts, 4)
    for f, mu in _moreau_builtins():
        params = ProxParams(mu)
        worst = 0.0
        for x in rng.uniform(-2, 2, size=(opts.n_grad, f.dim)):
            h = (opts.fd_step or 1e-4) * max(1.0, float(np.linalg.norm(x)))
            fd = np.array([(moreau_value(f, x + h * e, params) - moreau_value(f, x - h * e, params)) / (2 * h)
                           for e in np.eye(f.dim)])
            worst = max(worst, float(np.max(np.abs(fd - moreau_grad(f, x, params)))))
        out.append(("gradient-identity:" + f.name, worst, 1e-5, worst <= 1e-5))

        lip = 1.0 / (1.0 - mu * f.rho)
        wk = f.rho / (1.0 - mu * f.rho)
        X = rng.uniform(-2, 2, size=(opts.n_pairs, f.dim))
        Y = rng.uniform(-2, 2, size=(opts.n_pairs, f.dim))
        lip_gap = sandwich_gap = np.inf
        for x, y in zip(X, Y):
            px, py = prox(f, x, params), prox(f, y, params)
            d = float(np.linalg.norm(x - y))
            lip_gap = min(lip_gap, (lip + 1e-6) * d - float(np.linalg.norm(px - py)))
            gx = (x - px) / mu
            r = moreau_value(f, y, params) - moreau_value(f, x, params) - gx @ (y - x)
            sandwich_gap = min(sandwich_gap, r + 0.5 * wk * d ** 2 + 1e-6, 0.5 / mu * d ** 2 - r + 1e-6)
        out.append(("prox-lipschitz:" + f.name, float(lip_gap), 0.0, lip_gap >= 0))
        out.append(("envelope-sandwich:" + f.name, float(sandwich_gap), 0.0, sandwich_gap >= 0))
    return out


# -- jacobian / eigen ---------------------------------------------------------


def _saddle_maps(alpha=None):
    P = ProxParams(0.25)
    return [
        (IterationMap(MapKind.PROX_POINT, problems.absym(), P, alpha or 0.9), 2.0),
        (IterationMap(MapKind.PROX_GRADIENT, problems.absym_split(), P, alpha or 0.4), 1.5),
        (IterationMap(MapKind.PROX_LINEAR, problems.absym_composite(), P, alpha or 0.3), 1.5),
    ]


def check_jacobian(opts):
    out = []
    spec = problems.absym_manifold()
    for m, top in _saddle_maps():
        rep = spectra.classify_fixed_point(m, np.zeros(2), fd_step=opts.fd_step)
        vals = np.sort(rep.eigenvalues.real)
        err = float(np.max(np.abs(vals - [0.0, top]))) + float(np.max(np.abs(rep.eigenvalues.imag)))
        ok = err <= 1e-4 and rep.classification is spectra.Stability.UNSTABLE
        out.append((f"eigen-fixture:{m.kind.value}", err, 1e-4, ok))
        pred = spectra.reduced_jacobian_prediction(m.kind, spec, m.params)
        fd = spectra.fd_tangent_restriction(m, spec, opts.fd_step)
        rerr = float(np.max(np.abs(pred - fd)))
        out.append((f"reduced-jacobian:{m.kind.value}", rerr, 1e-5, rerr <= 1e-5))
        JT = spectra.fd_jacobian(m.T, np.zeros(2), opts.fd_step)
        shifted = np.sort((1 - m.alpha + m.alpha * rep.eigenvalues).real)
        serr = float(np.max(np.abs(np.sort(spectra.eigenvalues(JT).real) - shifted)))
        out.append((f"damping-shift:{m.kind.value}", serr, 1e-4, serr <= 1e-4))

    # curved test map with a known Jacobian: sensitive to FD truncation error
    def S(x):
        return np.array([np.sin(x[0]) * x[1], np.exp(x[0] * x[1])])

    x = np.array([0.3, 0.7])
    exact = np.array([[np.cos(0.3) * 0.7, np.sin(0.3)],
                      [0.7 * np.exp(0.21), 0.3 * np.exp(0.21)]])
    ferr = float(np.max(np.abs(spectra.fd_jacobian(S, x, opts.fd_step) - exact)))
    out.append(("fd-accuracy:smooth-map", ferr, 1e-6, ferr <= 1e-6))
    m = IterationMap(MapKind.PROX_POINT, problems.tilt(problems.absquad(), [0.5, 1.0]), ProxParams(0.25), 0.5)
    rep = spectra.classify_fixed_point(m, [0.0, 0.5], fd_step=opts.fd_step)
    out.append(("local-min-not-unstable", rep.max_real_eigenvalue, 1.0 + rep.class_tol,
                rep.classification is spectra.Stability.NOT_UNSTABLE))
    return out


def check_eigen(opts):
    out = []
    fixtures = [
        (np.diag([0.0, 2.0]), [0, 2]),
        (np.array([[0.0, 1.0], [-1.0, 0.0]]), [1j, -1j]),
        (np.array([[2.0, 1.0], [1.0, 2.0]]), [1, 3]),
    ]
    for M, expected in fixtures:
        got = spectra.eigenvalues(M)
        err = max(min(abs(g - e) for g in got) for e in expected)
        out.append((f"fixture:{M.tolist()}", float(err), 1e-12, err <= 1e-12))
    rng = _rng(opts, 5)
    worst = 0.0
    for n in (3, 8, 20, 64):
        M = rng.standard_normal((n, n))
        vals, vecs = spectra.eigenpairs(M)
        worst = max(worst, float(np.max(spectra.eigen_residuals(M, vals, vecs)) / np.linalg.norm(M)))
    out.append(("residuals:random", worst, 1e-8, worst <= 1e-8))
    return out


def check_mor_smooth(opts):
    out = []
    step = opts.fd_step or spectra.HESSIAN_STEP
    for mu in (0.01, 0.1, 0.25):
        rep = spectra.check_mor_smooth_inequality(problems.absym(), problems.absym_manifold(),
                                                  ProxParams(mu), step=step)
        err = abs(rep.lhs + 2.0 / (1.0 - 2.0 * mu))
        out.append((f"absym:mu={mu:g}", err, 1e-3, rep.holds and err <= 1e-3 and rep.rhs == -2.0))
    H, asym = spectra.moreau_hessian_fd(problems.absym(), np.zeros(2), ProxParams(0.25), step,
                                        return_asymmetry=True)
    err = float(np.max(np.abs(H - np.diag([4.0, -4.0]))))
    out.append(("hessian-fixture:absym", err, 1e-3, err <= 1e-3 and asym <= 1e-3))
    return out


# -- dynamics -----------------------------------------------------------------


def check_escape(opts):
    m = IterationMap(MapKind.PROX_GRADIENT, problems.absym_split(), ProxParams(0.25), 0.4, strict=True)
    rep = dynamics.escape_experiment(m, dynamics.BoxSampler([-1, -1], [1, 1]), opts.n_escape,
                                     [0.0, 0.0], seed=opts.seed)
    ok = rep.n_to_target == 0 and rep.max_fixed_point_residual <= 1e-8
    return [("absym-split:prox-gradient", float(rep.n_to_target), 0.0, ok)]


def check_pathological(opts):
    m = IterationMap(MapKind.PROX_POINT, problems.pathological(2.0), ProxParams(1.0 / 6.0), 0.5, strict=True)
    rep = dynamics.escape_experiment(m, dynamics.ConeSampler(6.0), opts.n_cone, [0.0, 0.0], seed=opts.seed)
    return [("cone-attraction", rep.fraction_to_target, 1.0, rep.fraction_to_target == 1.0)]


# -- mba ----------------------------------------------------------------------


def check_mba(opts):
    out = []
    rng = _rng(opts, 6)
    base = problems.absym()
    for f in (base, problems.tilt(base, [0.3, 0.1]), problems.tilt(base, [-0.5, 0.4])):
        model = mba.exact_model(f)
        params = mba.validate_params(f, model, 5.0, 1.0)
        worst = np.inf
        ok = abs(params.rate_constant - 3 / 31.5) <= 1e-15
        for x0 in [np.array([0.4, 0.0])] + list(rng.uniform(-1, 1, size=(5, 2))):
            try:
                _, log = mba.mba_run(f, model, params, x0, 40)
                worst = min(worst, mba.rate_bound_check(log, params).worst_slack)
            except CertificateError as exc:
                ok = False
                worst = min(worst, exc.slack if exc.slack is not None else -np.inf)
        out.append(("certificates:" + f.name, float(worst), 0.0, ok and worst >= 0))
    params = mba.validate_params(base, mba.exact_model(base), 5.0, 1.0)
    try:
        mba.mba_run(base, mba.exact_model(base), params, [0.4, 0.0], 40,
                    corrupt=lambda t, y: y + np.array([1e-2, 0.0]))
        caught = False
    except CertificateError:
        caught = True
    out.append(("negative-control", 1.0 if caught else 0.0, 1.0, caught))
    return out


SUITES = {
    "prox": [check_prox_bruteforce, check_weak_convexity],
    "cone": [check_cone],
    "moreau": [check_moreau],
    "jacobian": [check_jacobian],
    "eigen": [check_eigen],
    "mor-smooth": [check_mor_smooth],
    "escape": [check_escape],
    "pathological": [check_pathological],
    "mba": [check_mba],
}


def run_checks(only=None, opts=None):
    """Run the selected suites (all by default) and return their results in order."""
    opts = opts or VerifyOptions()
    names = list(SUITES) if not only else list(only)
    unknown = [n for n in names if n not in SUITES]
    if unknown:
        raise KeyError(f"unknown suites {unknown}; known: {', '.join(SUITES)}")
    results = []
    for suite in names:
        for fn in SUITES[suite]:
            t0 = time.perf_counter()
            try:
                rows = fn(opts)
            except ProxEscapeError as exc:
                rows = [(fn.__name__, float("nan"), float("nan"), False)]
                detail = f"{type(exc).__name__}: {exc}"
            else:
                detail = ""
            dt = time.perf_counter() - t0
            for name, measured, threshold, passed in rows:
                results.append(CheckResult(suite, name, bool(passed), float(measured), float(threshold),
                                           dt / len(rows), detail))
    return results
