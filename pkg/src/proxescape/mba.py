"""Relaxed model-based algorithm with runtime convergence certificates.

Each step minimizes ``f_{x_t}(y) + tau/2 |y - x_t|^2`` over a model of ``f``
built at ``x_t`` and averages the minimizer into the iterate.  Progress is
measured on the Moreau envelope ``f_{1/rho_hat}`` with
``rho_hat = tau/2 + (rho + eta)/4``.
"""

from __future__ import annotations

import io
import math
from dataclasses import dataclass, field
from typing import Callable, Optional

import numpy as np

from .dynamics import RunRecord, Termination, fmt
from .errors import CertificateError, ParameterError, PreconditionError
from .problems import CompositeProblem, ProblemOracle
from .proxengine import DEFAULT_INNER_MAX_ITERS, DEFAULT_INNER_TOL, ProxParams, prox


@dataclass(frozen=True)
class ModelOracle:
    """``build(x)`` returns the ``eta``-weakly convex model ``f_x``, with ``|f - f_x| <= beta/2 |. - x|^2``."""

    build: Callable[[np.ndarray], ProblemOracle]
    eta: float
    beta: float
    name: str = ""


def exact_model(problem: ProblemOracle):
    """``f_x = f`` for every anchor; the algorithm becomes the damped proximal point method."""
    return ModelOracle(lambda x: problem, problem.rho, 0.0, name=f"exact:{problem.name}")


def prox_linear_model(cp: CompositeProblem):
    """Linearize the inner map: ``f_x(y) = h(F(x) + F'(x)(y - x)) + r(y)``."""

    def build(anchor):
        anchor = np.asarray(anchor, dtype=float)
        Fa = np.asarray(cp.F(anchor), dtype=float)
        J = np.asarray(cp.jacobian(anchor), dtype=float)

        def value(y):
            y = np.asarray(y, dtype=float)
            return cp.h.value(Fa + (y - anchor) @ J.T) + cp.r.value(y)

        subgrad = None
        if cp.h.subgrad is not None and cp.r.subgrad is not None:
            def subgrad(y):
                y = np.asarray(y, dtype=float)
                return J.T @ cp.h.subgrad(Fa + J @ (y - anchor)) + cp.r.subgrad(y)

        prox_exact = None
        if cp.linearized_prox is not None:
            def prox_exact(center, mu):
                return cp.linearized_prox(anchor, center, mu)

        return ProblemOracle(cp.dim, value, cp.rho_r, subgrad, prox_exact, name="prox-linear-model")

    return ModelOracle(build, cp.rho_r, cp.beta, name=f"prox-linear:{cp.name}")


@dataclass(frozen=True)
class MBAParams:
    tau: float
    alpha: float
    rho: float
    eta: float
    beta: float
    rho_hat: float
    rate_constant: float
    decrease_constant: float
    relative_error_constant: float
    contraction: float  # (2 rho_hat - rho - eta - beta) / (rho_hat + tau - rho - eta)


def validate_params(problem, model: ModelOracle, tau, alpha):
    """Check the step-size hypotheses and derive ``rho_hat`` and the certificate constants.

    ``problem`` may be a :class:`ProblemOracle` or its modulus ``rho``.

    Raises
    ------
    ParameterError
        Naming the first violated inequality.
    """
    rho = float(getattr(problem, "rho", problem))
    eta, beta = float(model.eta), float(model.beta)
    tau, alpha = float(tau), float(alpha)
    if not 0 < alpha <= 1:
        raise ParameterError(f"alpha must lie in (0, 1], got {alpha}")
    if not tau > max(eta, 2 * rho, (4 * beta + rho + eta) / 2):
        raise ParameterError(
            f"tau > max{{eta, 2 rho, (4 beta + rho + eta)/2}} = "
            f"{max(eta, 2 * rho, (4 * beta + rho + eta) / 2):g} violated by tau = {tau:g}")
    rho_hat = tau / 2 + (rho + eta) / 4
    checks = [
        ("rho_hat - rho > 0", rho_hat - rho),
        ("tau - rho_hat - beta > 0", tau - rho_hat - beta),
        ("2 rho_hat - rho - eta - beta > 0", 2 * rho_hat - rho - eta - beta),
        ("rho_hat + tau - rho - eta > 0", rho_hat + tau - rho - eta),
    ]
    for label, v in checks:
        if not v > 0:
            raise ParameterError(f"inequality {label} fails ({v:g})")
    denom = rho_hat + tau - rho - eta
    q = (2 * rho_hat - rho - eta - beta) / denom
    if not 1 - q > 0:
        raise ParameterError(
            f"inequality 1 - (2 rho_hat - rho - eta - beta)/(rho_hat + tau - rho - eta) > 0 fails ({1 - q:g})")
    rate = alpha * (2 * rho_hat - rho - eta - beta) / (2 * rho_hat * denom)
    dec = rho_hat * (tau - rho_hat - beta) / (2 * alpha * denom)
    lip = rho_hat if rho == 0 else max(rho_hat, rho / (1 - rho / rho_hat))
    rel = lip + (rho_hat / alpha) / (1 - math.sqrt(1 - q))
    return MBAParams(tau, alpha, rho, eta, beta, rho_hat, rate, dec, rel, q)


@dataclass
class CertificateLog:
    """Per-iteration envelope data and certificate values.

    Row ``t`` describes ``x_t``; the step columns describe ``x_t -> x_{t+1}``
    and are NaN on the final row.
    """

    env_values: list = field(default_factory=list)
    env_grad_norms: list = field(default_factory=list)
    decrease_residuals: list = field(default_factory=list)
    rel_error_ratios: list = field(default_factory=list)
    critical_residuals: list = field(default_factory=list)

    def __len__(self):
        return len(self.env_values)

    def to_csv(self):
        buf = io.StringIO()
        buf.write("iter,env_value,env_grad_norm,decrease_residual,rel_error_ratio\n")
        for t in range(len(self)):
            buf.write(",".join([str(t), fmt(self.env_values[t]), fmt(self.env_grad_norms[t]),
                                fmt(self.decrease_residuals[t]), fmt(self.rel_error_ratios[t])]) + "\n")
        return buf.getvalue()


def _envelope(problem, x, params: MBAParams, inner_tol, inner_max_iters):
    p = ProxParams(1.0 / params.rho_hat, inner_tol, inner_max_iters)
    xh = prox(problem, x, p)
    val = float(problem.value(xh)) + 0.5 * params.rho_hat * float(np.sum((xh - x) ** 2))
    return xh, val, params.rho_hat * (x - xh)


def decrease_certificate(env_t, grad_t, env_next, x_t, x_next, params: MBAParams):
    """``rhs - lhs`` of the sufficient-decrease inequality (nonnegative when it holds)."""
    step2 = float(np.sum((np.asarray(x_next) - np.asarray(x_t)) ** 2))
    rhs = env_t - params.decrease_constant * step2 - params.rate_constant * float(np.sum(np.asarray(grad_t) ** 2))
    return rhs - env_next


def relative_error_certificate(grad_next, x_t, x_next, stop_tol=1e-12):
    """``|grad f_{1/rho_hat}(x_{t+1})| / |x_{t+1} - x_t|``, or 0 at a stationary step."""
    g = float(np.linalg.norm(grad_next))
    step = float(np.linalg.norm(np.asarray(x_next) - np.asarray(x_t)))
    if step <= stop_tol and g <= stop_tol:
        return 0.0
    if step == 0.0:
        return math.inf
    return g / step


def critical_lemma_residual(xhat, x, y, params: MBAParams):
    """``rhs - lhs`` of the comparison between the true prox point ``xhat`` and the model step ``y``."""
    a = float(np.sum((xhat - x) ** 2))
    b = float(np.sum((x - y) ** 2))
    denom = params.rho_hat + params.tau - params.rho - params.eta
    rhs = a - params.contraction * a - (params.tau - params.rho_hat - params.beta) / denom * b
    return rhs - float(np.sum((xhat - y) ** 2))


def mba_run(problem: ProblemOracle, model: ModelOracle, params: MBAParams, x0, T,
            inner_tol=DEFAULT_INNER_TOL, inner_max_iters=DEFAULT_INNER_MAX_ITERS,
            slack=1e-8, ratio_slack=1e-6, check=True,
            corrupt: Optional[Callable[[int, np.ndarray], np.ndarray]] = None,
            divergence_bound=1e6):
    """Run ``T`` model-based steps and certify each one.

    ``corrupt(t, y_t)``, if given, replaces the model minimizer; it exists for
    negative controls.  Certificate slacks are relative to
    ``max(1, |f_{1/rho_hat}(x_t)|)`` so that large envelope values do not
    trip them through round-off.

    Raises
    ------
    CertificateError
        When ``check`` is on and a step violates sufficient decrease, the
        relative-error bound or the prox comparison lemma.
    """
    x = np.asarray(x0, dtype=float).copy()
    rec = RunRecord()
    log = CertificateLog()
    model_params = ProxParams(1.0 / params.tau, inner_tol, inner_max_iters)
    xh, env, grad = _envelope(problem, x, params, inner_tol, inner_max_iters)
    rec.terminated = Termination.MAX_ITERS
    for t in range(int(T)):
        rec.iterates.append((t, x.copy()))
        rec.f_values.append(float(problem.value(x)))
        rec.envelope_grad_norms.append(float(np.linalg.norm(grad)))
        log.env_values.append(env)
        log.env_grad_norms.append(float(np.linalg.norm(grad)))

        y = prox(model.build(x), x, model_params)
        if corrupt is not None:
            y = np.asarray(corrupt(t, y), dtype=float)
        x_next = (1.0 - params.alpha) * x + params.alpha * y
        xh_next, env_next, grad_next = _envelope(problem, x_next, params, inner_tol, inner_max_iters)

        scale = max(1.0, abs(env))
        dec = decrease_certificate(env, grad, env_next, x, x_next, params)
        ratio = relative_error_certificate(grad_next, x, x_next)
        crit = critical_lemma_residual(xh, x, y, params)
        log.decrease_residuals.append(dec)
        log.rel_error_ratios.append(ratio)
        log.critical_residuals.append(crit)
        if check:
            if dec < -slack * scale:
                raise CertificateError(f"sufficient decrease violated at t={t} (residual {dec:.3g})",
                                       iteration=t, slack=dec)
            if ratio > params.relative_error_constant + ratio_slack:
                raise CertificateError(
                    f"relative error violated at t={t} (ratio {ratio:.6g} > "
                    f"{params.relative_error_constant:.6g})", iteration=t,
                    slack=params.relative_error_constant - ratio)
            if crit < -slack * max(scale, float(np.sum((xh - x) ** 2) + np.sum((x - y) ** 2))):
                raise CertificateError(f"prox comparison violated at t={t} (residual {crit:.3g})",
                                       iteration=t, slack=crit)
        x, xh, env, grad = x_next, xh_next, env_next, grad_next
        if not np.all(np.isfinite(x)) or np.linalg.norm(x) > divergence_bound:
            rec.terminated = Termination.DIVERGED
            break

    k = len(rec.iterates)
    rec.iterates.append((k, x.copy()))
    rec.f_values.append(float(problem.value(x)))
    rec.envelope_grad_norms.append(float(np.linalg.norm(grad)))
    log.env_values.append(env)
    log.env_grad_norms.append(float(np.linalg.norm(grad)))
    log.decrease_residuals.append(math.nan)
    log.rel_error_ratios.append(math.nan)
    log.critical_residuals.append(math.nan)
    rec.n_iters = k
    rec.limit_estimate = x.copy()
    return rec, log


@dataclass(frozen=True)
class RateBoundReport:
    worst_slack: float
    slacks: np.ndarray
    bounds: np.ndarray


def rate_bound_check(log: CertificateLog, params: MBAParams, inf_f_lower_bound=None, tol=1e-8):
    """Check ``min_{t<=T} |grad f_{1/rho_hat}(x_t)| <= sqrt((f_{1/rho_hat}(x_0) - inf f) / (c (T+1)))`` for every ``T``.

    ``inf_f_lower_bound`` must not exceed any envelope value in the log; the
    true infimum of ``f`` qualifies.  With ``None`` the smallest logged
    envelope value is used instead, which only certifies prefixes whose
    successor iterate is logged, so the final prefix is skipped.
    """
    if len(log) == 0:
        raise PreconditionError("empty certificate log")
    env = np.asarray(log.env_values, dtype=float)
    g = np.asarray(log.env_grad_norms, dtype=float)
    if inf_f_lower_bound is None:
        inf_f_lower_bound = float(env.min())
        g = g[:-1]
    elif inf_f_lower_bound > env.min():
        raise PreconditionError(
            f"lower bound {inf_f_lower_bound:g} exceeds the smallest envelope value {env.min():g}")
    T = np.arange(len(g))
    bounds = np.sqrt((env[0] - inf_f_lower_bound) / (params.rate_constant * (T + 1)))
    slacks = bounds + tol - np.minimum.accumulate(g)
    worst = float(slacks.min()) if slacks.size else math.inf
    if worst < 0:
        t = int(np.argmin(slacks))
        raise CertificateError(f"rate bound violated at T={t} (slack {worst:.3g})", iteration=t, slack=worst)
    return RateBoundReport(worst, slacks, bounds)
