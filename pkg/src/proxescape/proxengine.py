"""Proximal maps, Moreau envelopes and the one-step updates of the three methods."""

from __future__ import annotations

import enum
import math
import warnings
from dataclasses import dataclass
from typing import Union

import numpy as np

from .errors import CapabilityError, ConvergenceError, ParameterError, PreconditionError
from .problems import CompositeProblem, ProblemOracle, SplitProblem

DEFAULT_INNER_TOL = 1e-10
DEFAULT_INNER_MAX_ITERS = 100_000


class MapKind(str, enum.Enum):
    PROX_POINT = "prox_point"
    PROX_GRADIENT = "prox_gradient"
    PROX_LINEAR = "prox_linear"

    @classmethod
    def parse(cls, kind):
        if isinstance(kind, cls):
            return kind
        try:
            return cls(str(kind).replace("-", "_"))
        except ValueError:
            raise ParameterError(f"unknown iteration kind {kind!r}") from None


@dataclass(frozen=True)
class ProxParams:
    """Prox parameter ``mu`` and the inner-solver budget.

    Pass ``rho`` to have ``mu < 1/rho`` checked at construction.
    """

    mu: float
    inner_tol: float = DEFAULT_INNER_TOL
    inner_max_iters: int = DEFAULT_INNER_MAX_ITERS
    rho: float | None = None

    def __post_init__(self):
        if not self.mu > 0:
            raise ParameterError(f"mu must be positive, got {self.mu}")
        if not self.inner_tol > 0 or int(self.inner_max_iters) < 1:
            raise ParameterError("inner_tol must be positive and inner_max_iters >= 1")
        if self.rho is not None:
            self.check(self.rho)

    def check(self, rho):
        if not self.mu * rho < 1.0:
            raise ParameterError(f"mu = {self.mu:g} must satisfy mu < 1/rho with rho = {rho:g}")
        return self


# ---------------------------------------------------------------------------
# numeric inner solver


def _bundle_master(Y, Phi, G, m):
    """Minimize the max of the quadratic minorants ``phi_i + <g_i, y - y_i> + m/2 |y - y_i|^2``.

    Solved through the simplex-constrained dual, then polished by solving the
    KKT system on the active cuts exactly.
    """
    from cvxopt import matrix, solvers

    B = G - m * Y
    a = Phi - np.einsum("ij,ij->i", G, Y) + 0.5 * m * np.einsum("ij,ij->i", Y, Y)
    k, d = B.shape
    if k == 1:
        lam = np.ones(1)
    else:
        Q = B @ B.T / m + 1e-14 * np.eye(k)
        opts = {"show_progress": False, "abstol": 1e-13, "reltol": 1e-13, "feastol": 1e-13,
                "maxiters": 200}
        sol = solvers.qp(matrix(Q), matrix(-a), matrix(-np.eye(k)), matrix(np.zeros(k)),
                         matrix(np.ones((1, k))), matrix(1.0), options=opts)
        lam = np.clip(np.array(sol["x"]).ravel(), 0.0, None)
        lam /= lam.sum()
    y = -(B.T @ lam) / m
    active = np.flatnonzero(lam > 1e-9)
    n = active.size
    K = np.zeros((d + 1 + n, d + 1 + n))
    rhs = np.zeros(d + 1 + n)
    K[:d, :d] = m * np.eye(d)
    K[:d, d + 1:] = B[active].T
    K[d:d + n, :d] = B[active]
    K[d:d + n, d] = -1.0
    rhs[d:d + n] = -a[active]
    K[d + n, d + 1:] = 1.0
    rhs[d + n] = 1.0
    z = np.linalg.lstsq(K, rhs, rcond=None)[0]
    if np.all(z[d + 1:] >= -1e-12) and np.all(a + B @ z[:d] <= z[d] + 1e-12):
        y = z[:d]
    return y, lam


def numeric_inner_solve(subproblem, seed, modulus, tol=DEFAULT_INNER_TOL,
                        max_iters=DEFAULT_INNER_MAX_ITERS, bundle_size=40):
    """Minimize a ``modulus``-strongly convex function from value/subgradient calls.

    A cutting-plane (bundle) method whose cuts are the quadratic minorants
    implied by strong convexity.  Stops once two successive model minimizers
    are within ``tol``.

    Raises
    ------
    ConvergenceError
        When ``max_iters`` model steps do not meet ``tol``; carries the best
        iterate and the last step length.
    """
    if not modulus > 0:
        raise ParameterError("strong-convexity modulus must be positive")
    if subproblem.subgrad is None:
        raise CapabilityError("numeric inner solve needs a subgradient oracle")
    y = np.array(seed, dtype=float)
    Y = [y]
    Phi = [float(subproblem.value(y))]
    G = [np.asarray(subproblem.subgrad(y), dtype=float)]
    best, fbest = y, Phi[0]
    step = math.inf
    for _ in range(int(max_iters)):
        ynew, lam = _bundle_master(np.array(Y), np.array(Phi), np.array(G), modulus)
        step = float(np.linalg.norm(ynew - Y[-1]))
        fnew = float(subproblem.value(ynew))
        if fnew < fbest:
            best, fbest = ynew, fnew
        if step <= tol:
            return ynew
        if len(Y) >= bundle_size:
            keep = set(np.flatnonzero(lam > 0).tolist()) | set(range(len(Y) - bundle_size // 2, len(Y)))
            keep = sorted(keep)
            Y = [Y[i] for i in keep]
            Phi = [Phi[i] for i in keep]
            G = [G[i] for i in keep]
        Y.append(ynew)
        Phi.append(fnew)
        G.append(np.asarray(subproblem.subgrad(ynew), dtype=float))
    raise ConvergenceError(f"inner solver did not reach tol={tol:g} in {max_iters} iterations",
                           best=best, residual=step)


# ---------------------------------------------------------------------------
# prox and envelope


def _prox_subproblem(problem, x, mu):
    def value(y):
        return problem.value(y) + np.sum((np.asarray(y) - x) ** 2, axis=-1) / (2.0 * mu)

    subgrad = None
    if problem.subgrad is not None:
        def subgrad(y):
            return problem.subgrad(y) + (np.asarray(y) - x) / mu

    return ProblemOracle(problem.dim, value, 0.0, subgrad, name="prox-subproblem")


def prox(problem: ProblemOracle, x, params: ProxParams):
    """``argmin_y f(y) + |y - x|^2 / (2 mu)``; closed form when the oracle has one."""
    params.check(problem.rho)
    x = np.asarray(x, dtype=float)
    if x.shape != (problem.dim,):
        raise PreconditionError(f"point has shape {x.shape}, problem dim is {problem.dim}")
    if problem.prox_exact is not None:
        return np.asarray(problem.prox_exact(x, params.mu), dtype=float)
    return numeric_inner_solve(_prox_subproblem(problem, x, params.mu), x,
                               1.0 / params.mu - problem.rho,
                               params.inner_tol, params.inner_max_iters)


def moreau_value(problem, x, params):
    x = np.asarray(x, dtype=float)
    p = prox(problem, x, params)
    return float(problem.value(p)) + float(np.sum((p - x) ** 2)) / (2.0 * params.mu)


def moreau_grad(problem, x, params):
    x = np.asarray(x, dtype=float)
    return (x - prox(problem, x, params)) / params.mu


def prox_gradient_step(g, r, x, params):
    """One proximal gradient step ``prox_{mu r}(x - mu grad g(x))``."""
    x = np.asarray(x, dtype=float)
    return prox(r, x - params.mu * np.asarray(g.gradient(x)), params)


def prox_linear_step(cp: CompositeProblem, x, params):
    """Minimize ``h(F(x) + F'(x)(y - x)) + r(y) + |y - x|^2 / (2 mu)`` over ``y``."""
    params.check(cp.rho_r)
    x = np.asarray(x, dtype=float)
    if cp.linearized_prox is not None:
        return np.asarray(cp.linearized_prox(x, x, params.mu), dtype=float)
    if cp.h.subgrad is None or cp.r.subgrad is None:
        raise CapabilityError("prox-linear without a closed form needs subgradients of h and r")
    Fx = np.asarray(cp.F(x), dtype=float)
    J = np.asarray(cp.jacobian(x), dtype=float)
    mu = params.mu

    def value(y):
        y = np.asarray(y, dtype=float)
        return float(cp.h.value(Fx + J @ (y - x)) + cp.r.value(y)) + float(np.sum((y - x) ** 2)) / (2 * mu)

    def subgrad(y):
        y = np.asarray(y, dtype=float)
        return J.T @ cp.h.subgrad(Fx + J @ (y - x)) + cp.r.subgrad(y) + (y - x) / mu

    sub = ProblemOracle(cp.dim, value, 0.0, subgrad, name="prox-linear-subproblem")
    return numeric_inner_solve(sub, x, 1.0 / mu - cp.rho_r, params.inner_tol, params.inner_max_iters)


# ---------------------------------------------------------------------------
# damping thresholds


def max_damping(kind, rho, mu, beta=0.0):
    """Supremum (exclusive) of the damping parameters covered by the escape theorems."""
    kind = MapKind.parse(kind)
    if not mu > 0 or rho < 0 or beta < 0:
        raise ParameterError("need mu > 0, rho >= 0, beta >= 0")
    if kind is MapKind.PROX_POINT:
        if not mu * rho < 1:
            raise ParameterError(f"prox-point needs mu < 1/rho (mu={mu:g}, rho={rho:g})")
        return 1.0 if rho == 0 else min(1.0, 1.0 / (mu * rho) - 1.0)
    if kind is MapKind.PROX_GRADIENT:
        if not mu * rho < 1:
            raise ParameterError(f"prox-gradient needs mu < 1/rho (mu={mu:g}, rho={rho:g})")
        lip = max(1.0, mu * rho / (1.0 - mu * rho))
        return min(1.0, 1.0 / (mu * beta + (1.0 + mu * beta) * lip))
    if not mu * (rho + 2.0 * beta) < 1:
        raise ParameterError(
            f"prox-linear needs mu < 1/(rho + 2 beta) (mu={mu:g}, rho={rho:g}, beta={beta:g})")
    slope = (1.0 + math.sqrt(2.0 * beta * mu / (1.0 - mu * beta - mu * rho))) * \
        max(1.0, (mu * rho + mu * beta) / (1.0 - mu * rho - 2.0 * mu * beta))
    return min(1.0, 1.0 / (1.0 + slope))


# ---------------------------------------------------------------------------
# iteration maps


Problem = Union[ProblemOracle, SplitProblem, CompositeProblem]


@dataclass(frozen=True)
class IterationMap:
    """Undamped update ``S`` and damped update ``T = (1 - alpha) I + alpha S``.

    With ``strict=True`` the damping must lie below :func:`max_damping`; for
    the prox-linear method, whose escape result is only local, a violation
    just warns.
    """

    kind: MapKind
    problem: Problem
    params: ProxParams
    alpha: float = 1.0
    strict: bool = False

    def __post_init__(self):
        object.__setattr__(self, "kind", MapKind.parse(self.kind))
        expected = {MapKind.PROX_POINT: ProblemOracle, MapKind.PROX_GRADIENT: SplitProblem,
                    MapKind.PROX_LINEAR: CompositeProblem}[self.kind]
        if not isinstance(self.problem, expected):
            raise ParameterError(
                f"{self.kind.value} needs a {expected.__name__}, got {type(self.problem).__name__}")
        if not 0 < self.alpha <= 1:
            raise ParameterError(f"damping alpha must lie in (0, 1], got {self.alpha}")
        self.params.check(self.problem.rho)
        if self.strict:
            self.check_damping()

    @property
    def dim(self):
        return self.problem.dim

    @property
    def beta(self):
        return 0.0 if self.kind is MapKind.PROX_POINT else float(self.problem.beta)

    def max_damping(self):
        return max_damping(self.kind, self.problem.rho, self.params.mu, self.beta)

    def check_damping(self):
        try:
            bound = self.max_damping()
        except ParameterError as exc:
            if self.kind is MapKind.PROX_LINEAR:
                warnings.warn(f"prox-linear damping bound unavailable: {exc}", stacklevel=3)
                return
            raise
        if not self.alpha < bound:
            msg = f"alpha = {self.alpha:g} is not below the admissible bound {bound:.6g}"
            if self.kind is MapKind.PROX_LINEAR:
                warnings.warn(msg, stacklevel=3)
            else:
                raise ParameterError(msg)

    def S(self, x):
        if self.kind is MapKind.PROX_POINT:
            return prox(self.problem, x, self.params)
        if self.kind is MapKind.PROX_GRADIENT:
            return prox_gradient_step(self.problem.g, self.problem.r, x, self.params)
        return prox_linear_step(self.problem, x, self.params)

    def T(self, x):
        x = np.asarray(x, dtype=float)
        return (1.0 - self.alpha) * x + self.alpha * self.S(x)

    __call__ = T

    def objective(self, x):
        return float(self.problem.value(np.asarray(x, dtype=float)))

    def with_alpha(self, alpha):
        return IterationMap(self.kind, self.problem, self.params, alpha, self.strict)
