"""Problem oracles and the built-in catalog of test problems.

Every built-in evaluates ``value`` along the last axis, so a batch of points
with shape ``(..., d)`` is accepted wherever a single point is.  Subgradient
oracles return one deterministic element of the subdifferential; at kinks of
``|t|`` the element ``0`` is chosen.
"""

from __future__ import annotations

import enum
from dataclasses import dataclass, field
from typing import Callable, Optional

import numpy as np

from .errors import CapabilityError, ParameterError, PreconditionError

Point = np.ndarray


def _as_point(x, dim=None):
    x = np.asarray(x, dtype=float)
    if x.ndim != 1:
        raise PreconditionError(f"expected a 1-D point, got shape {x.shape}")
    if dim is not None and x.shape[0] != dim:
        raise PreconditionError(f"dimension mismatch: expected {dim}, got {x.shape[0]}")
    return x


@dataclass(frozen=True)
class ProblemOracle:
    """A ``rho``-weakly convex objective.

    ``prox_exact(x, mu)``, when given, returns the minimizer of
    ``value(y) + |y - x|^2 / (2 mu)`` for every ``mu < 1/rho``.
    """

    dim: int
    value: Callable[[Point], float]
    rho: float = 0.0
    subgrad: Optional[Callable[[Point], Point]] = None
    prox_exact: Optional[Callable[[Point, float], Point]] = None
    name: str = ""

    def __post_init__(self):
        if int(self.dim) < 1:
            raise ParameterError("dim must be a positive integer")
        if not self.rho >= 0:
            raise ParameterError("weak-convexity modulus rho must be nonnegative")

    def __call__(self, x):
        return self.value(x)


@dataclass(frozen=True)
class SmoothPiece:
    """A C^2 function whose gradient is ``beta``-Lipschitz."""

    dim: int
    value: Callable[[Point], float]
    gradient: Callable[[Point], Point]
    beta: float
    hessian: Optional[Callable[[Point], np.ndarray]] = None
    name: str = ""


@dataclass(frozen=True)
class SplitProblem:
    """Additive decomposition ``g + r`` used by the proximal gradient method."""

    g: SmoothPiece
    r: ProblemOracle
    name: str = ""

    @property
    def dim(self):
        return self.r.dim

    @property
    def rho(self):
        return self.r.rho

    @property
    def beta(self):
        return self.g.beta

    def value(self, x):
        return self.g.value(x) + self.r.value(x)


@dataclass(frozen=True)
class CompositeProblem:
    """Composite objective ``h(F(x)) + r(x)`` with convex ``h``.

    ``beta`` bounds the linearization error of ``h o F`` by
    ``beta/2 |y - x|^2``.  ``linearized_prox(anchor, center, mu)``, if present,
    minimizes ``h(F(a) + F'(a)(y - a)) + r(y) + |y - center|^2 / (2 mu)`` in
    closed form.
    """

    dim: int
    h: ProblemOracle
    F: Callable[[Point], np.ndarray]
    jacobian: Callable[[Point], np.ndarray]
    r: ProblemOracle
    beta: float
    rho_r: float = 0.0
    linearized_prox: Optional[Callable[[Point, Point, float], Point]] = None
    name: str = ""

    def __post_init__(self):
        if self.h.rho != 0:
            raise ParameterError("outer function h must be convex (rho = 0)")
        if self.beta < 0 or self.rho_r < 0:
            raise ParameterError("beta and rho_r must be nonnegative")

    @property
    def rho(self):
        return self.rho_r

    def value(self, x):
        x = np.asarray(x, dtype=float)
        return self.h.value(self.F(x)) + self.r.value(x)

    def linearized_value(self, anchor, y):
        anchor = np.asarray(anchor, dtype=float)
        y = np.asarray(y, dtype=float)
        z = self.F(anchor) + (y - anchor) @ self.jacobian(anchor).T
        return self.h.value(z) + self.r.value(y)


class ManifoldClass(str, enum.Enum):
    LOCAL_MIN = "local_min"
    STRICT_SADDLE = "strict_saddle"
    NON_ACTIVE = "non_active"


@dataclass(frozen=True)
class ManifoldSpec:
    """Active-manifold data at a critical point of a built-in problem.

    ``reduced_hessians`` maps an iteration kind (``"prox_point"``,
    ``"prox_gradient"``, ``"prox_linear"``) to a callable ``mu -> (Hxy, Hyy)``
    giving the tangent-space blocks of the parametric subproblem's Hessian.
    """

    critical_point: Point
    tangent_basis: np.ndarray
    reduced_quadratic: Optional[Callable[[Point], float]]
    classification: ManifoldClass
    reduced_hessians: dict = field(default_factory=dict)

    def __post_init__(self):
        B = np.atleast_2d(np.asarray(self.tangent_basis, dtype=float))
        if B.size == 0:
            if self.classification is not ManifoldClass.NON_ACTIVE:
                raise PreconditionError("an empty tangent basis means no active manifold")
            return
        gram = B @ B.T
        if np.max(np.abs(gram - np.eye(B.shape[0]))) > 1e-12:
            raise PreconditionError("tangent basis vectors must be orthonormal")
        expected = classify_manifold(B, self.reduced_quadratic)
        if expected is not self.classification:
            raise PreconditionError(
                f"classification {self.classification.value} disagrees with the "
                f"reduced quadratic form ({expected.value})")

    @property
    def basis(self):
        """Tangent basis as a ``(k, d)`` array (rows are basis vectors)."""
        B = np.asarray(self.tangent_basis, dtype=float)
        return B.reshape(0, len(self.critical_point)) if B.size == 0 else np.atleast_2d(B)

    def reduced_quadratic_matrix(self):
        """Matrix of the reduced quadratic form in the tangent basis (polarization)."""
        B = self.basis
        k = B.shape[0]
        Q = np.empty((k, k))
        q = self.reduced_quadratic
        for i in range(k):
            for j in range(k):
                Q[i, j] = 0.25 * (q(B[i] + B[j]) - q(B[i] - B[j]))
        return Q


def classify_manifold(basis, reduced_quadratic):
    """Strict saddle iff the reduced form is negative along some direction."""
    B = np.atleast_2d(np.asarray(basis, dtype=float))
    if B.size == 0 or reduced_quadratic is None:
        return ManifoldClass.NON_ACTIVE
    k = B.shape[0]
    Q = np.array([[0.25 * (reduced_quadratic(B[i] + B[j]) - reduced_quadratic(B[i] - B[j]))
                   for j in range(k)] for i in range(k)])
    if np.min(np.linalg.eigvalsh(0.5 * (Q + Q.T))) < 0:
        return ManifoldClass.STRICT_SADDLE
    return ManifoldClass.LOCAL_MIN


# ---------------------------------------------------------------------------
# elementary proximal maps


def soft_threshold(t, level):
    return np.sign(t) * np.maximum(np.abs(t) - level, 0.0)


def pathological_prox(p, rho, lam):
    """Closed-form prox of ``f(x,y) = (|x|+|y|)^2/2 - rho x^2/2`` with parameter ``1/lam``.

    Cases are tried in order; the formulas agree on the boundaries.
    """
    if not lam > rho > 0:
        raise ParameterError(f"pathological prox needs lam > rho > 0 (lam={lam}, rho={rho})")
    x, y = _as_point(p, 2)
    if x == 0.0 and y == 0.0:
        return np.zeros(2)
    a = 1.0 + lam
    b = 1.0 + lam - rho
    if abs(x) <= abs(y) / a:
        return np.array([0.0, lam / a * y])
    if abs(y) <= abs(x) / b:
        return np.array([lam / b * x, 0.0])
    c = lam / (a * b - 1.0)
    if np.sign(x) == np.sign(y):
        return c * np.array([a * x - y, -x + b * y])
    return c * np.array([a * x + y, x + b * y])


def absym_prox(p, mu):
    """Exact prox of ``|x| - y^2``; needs ``0 < mu < 1/2``."""
    if not 0 < mu < 0.5:
        raise ParameterError(f"absym prox needs 0 < mu < 1/2, got mu={mu}")
    x, y = _as_point(p, 2)
    return np.array([soft_threshold(x, mu), y / (1.0 - 2.0 * mu)])


# ---------------------------------------------------------------------------
# built-in catalog


def pathological(rho=2.0):
    """``f(x,y) = (|x|+|y|)^2/2 - (rho/2) x^2``, a rho-weakly convex function."""
    if not rho > 0:
        raise ParameterError("pathological family needs rho > 0")

    def value(p):
        p = np.asarray(p, dtype=float)
        x, y = p[..., 0], p[..., 1]
        return 0.5 * (np.abs(x) + np.abs(y)) ** 2 - 0.5 * rho * x ** 2

    def subgrad(p):
        x, y = _as_point(p, 2)
        s = abs(x) + abs(y)
        return np.array([s * np.sign(x) - rho * x, s * np.sign(y)])

    def prox(p, mu):
        if not mu > 0:
            raise ParameterError("mu must be positive")
        return pathological_prox(p, rho, 1.0 / mu)

    return ProblemOracle(2, value, rho, subgrad, prox, name=f"pathological:rho={rho:g}")


def absym():
    """``g(x,y) = |x| - y^2``: strict saddle at the origin on the manifold ``x = 0``."""

    def value(p):
        p = np.asarray(p, dtype=float)
        return np.abs(p[..., 0]) - p[..., 1] ** 2

    def subgrad(p):
        x, y = _as_point(p, 2)
        return np.array([np.sign(x), -2.0 * y])

    return ProblemOracle(2, value, 2.0, subgrad, absym_prox, name="absym")


def _abs_first(dim=2):
    def value(p):
        return np.abs(np.asarray(p, dtype=float)[..., 0])

    def subgrad(p):
        p = _as_point(p, dim)
        out = np.zeros(dim)
        out[0] = np.sign(p[0])
        return out

    def prox(p, mu):
        p = _as_point(p, dim).copy()
        p[0] = soft_threshold(p[0], mu)
        return p

    return ProblemOracle(dim, value, 0.0, subgrad, prox, name="abs-first")


def absym_split():
    """``absym`` written as smooth ``-y^2`` plus nonsmooth ``|x|``."""

    def value(p):
        return -np.asarray(p, dtype=float)[..., 1] ** 2

    def gradient(p):
        p = _as_point(p, 2)
        return np.array([0.0, -2.0 * p[1]])

    def hessian(p):
        return np.diag([0.0, -2.0])

    g = SmoothPiece(2, value, gradient, 2.0, hessian, name="neg-y-squared")
    return SplitProblem(g, _abs_first(), name="absym-split")


def zero_function(dim):
    return ProblemOracle(
        dim,
        lambda p: np.zeros(np.asarray(p).shape[:-1]) if np.asarray(p).ndim > 1 else 0.0,
        0.0,
        lambda p: np.zeros(dim),
        lambda p, mu: _as_point(p, dim).copy(),
        name="zero",
    )


def absym_composite():
    """``absym`` as ``h(F(x,y))`` with ``h(z) = |z1| + z2`` and ``F(x,y) = (x, -y^2)``."""

    def h_value(z):
        z = np.asarray(z, dtype=float)
        return np.abs(z[..., 0]) + z[..., 1]

    def h_subgrad(z):
        z = _as_point(z, 2)
        return np.array([np.sign(z[0]), 1.0])

    def h_prox(z, mu):
        z = _as_point(z, 2)
        return np.array([soft_threshold(z[0], mu), z[1] - mu])

    h = ProblemOracle(2, h_value, 0.0, h_subgrad, h_prox, name="abs-plus-linear")

    def F(p):
        p = np.asarray(p, dtype=float)
        return np.stack([p[..., 0], -p[..., 1] ** 2], axis=-1)

    def jacobian(p):
        p = _as_point(p, 2)
        return np.array([[1.0, 0.0], [0.0, -2.0 * p[1]]])

    def linearized_prox(anchor, center, mu):
        a = _as_point(anchor, 2)
        c = _as_point(center, 2)
        # model is |y1| - a2^2 - 2 a2 (y2 - a2): soft threshold in y1, shift in y2
        return np.array([soft_threshold(c[0], mu), c[1] + 2.0 * mu * a[1]])

    return CompositeProblem(2, h, F, jacobian, zero_function(2), beta=2.0, rho_r=0.0,
                            linearized_prox=linearized_prox, name="absym-composite")


def absquad():
    """``|x| + y^2``: convex, minimized at the origin on the manifold ``x = 0``."""

    def value(p):
        p = np.asarray(p, dtype=float)
        return np.abs(p[..., 0]) + p[..., 1] ** 2

    def subgrad(p):
        x, y = _as_point(p, 2)
        return np.array([np.sign(x), 2.0 * y])

    def prox(p, mu):
        x, y = _as_point(p, 2)
        return np.array([soft_threshold(x, mu), y / (1.0 + 2.0 * mu)])

    return ProblemOracle(2, value, 0.0, subgrad, prox, name="absquad")


def quadratic(diag):
    """``q(x) = 0.5 * sum_i a_i x_i^2``; weakly convex with ``rho = max(0, -min a)``."""
    a = np.asarray(diag, dtype=float)
    dim = a.shape[0]
    rho = max(0.0, -float(a.min()))

    def value(p):
        p = np.asarray(p, dtype=float)
        return 0.5 * np.sum(a * p ** 2, axis=-1)

    def subgrad(p):
        return a * _as_point(p, dim)

    def prox(p, mu):
        if not mu * rho < 1:
            raise ParameterError("quadratic prox needs mu < 1/rho")
        return _as_point(p, dim) / (1.0 + mu * a)

    return ProblemOracle(dim, value, rho, subgrad, prox,
                         name="quadratic:" + ",".join(f"{v:g}" for v in a))


def tilt(base, v):
    """Return ``x -> base(x) - <v, x>``; the exact prox is ``base.prox(x + mu v)``."""
    v = np.asarray(v, dtype=float)
    if v.shape != (base.dim,):
        raise PreconditionError(f"tilt vector has shape {v.shape}, problem dim is {base.dim}")

    def value(p):
        p = np.asarray(p, dtype=float)
        return base.value(p) - p @ v

    subgrad = None
    if base.subgrad is not None:
        def subgrad(p):
            return base.subgrad(p) - v

    prox = None
    if base.prox_exact is not None:
        def prox(p, mu):
            return base.prox_exact(_as_point(p, base.dim) + mu * v, mu)

    return ProblemOracle(base.dim, value, base.rho, subgrad, prox,
                         name=f"{base.name}~tilt({','.join(f'{t:g}' for t in v)})")


# ---------------------------------------------------------------------------
# manifold data for the built-ins


def absym_manifold():
    """Manifold ``{x = 0}`` of ``|x| - y^2`` at the origin.

    The stored Hessian blocks are the ``e2``-restrictions of the parametric
    subproblem of each method.  All three variants share ``f = |x| - y^2``.
    """
    return ManifoldSpec(
        critical_point=np.zeros(2),
        tangent_basis=np.array([[0.0, 1.0]]),
        reduced_quadratic=lambda u: -2.0 * float(np.asarray(u)[1]) ** 2,
        classification=ManifoldClass.STRICT_SADDLE,
        reduced_hessians={
            # prox point: H_xy = -1/mu, H_yy = f'' + 1/mu on the tangent line
            "prox_point": lambda mu: (np.array([[-1.0 / mu]]), np.array([[-2.0 + 1.0 / mu]])),
            # prox gradient: H_xy = g'' - 1/mu, H_yy = r'' + 1/mu
            "prox_gradient": lambda mu: (np.array([[-2.0 - 1.0 / mu]]), np.array([[1.0 / mu]])),
            # prox linear: the linearized model is affine in y2
            "prox_linear": lambda mu: (np.array([[-2.0 - 1.0 / mu]]), np.array([[1.0 / mu]])),
        },
    )


def absquad_manifold(v=(0.0, 0.0)):
    """Manifold ``{x = 0}`` of ``tilt(absquad, v)`` at its minimizer ``(0, v2/2)``; needs ``|v1| < 1``."""
    v = np.asarray(v, dtype=float)
    if abs(v[0]) >= 1:
        raise PreconditionError("tilt must satisfy |v1| < 1 for the minimizer to sit on x = 0")
    return ManifoldSpec(
        critical_point=np.array([0.0, 0.5 * v[1]]),
        tangent_basis=np.array([[0.0, 1.0]]),
        reduced_quadratic=lambda u: 2.0 * float(np.asarray(u)[1]) ** 2,
        classification=ManifoldClass.LOCAL_MIN,
        reduced_hessians={
            "prox_point": lambda mu: (np.array([[-1.0 / mu]]), np.array([[2.0 + 1.0 / mu]])),
        },
    )


def quadratic_manifold(diag):
    """Full-space manifold of a quadratic at the origin."""
    a = np.asarray(diag, dtype=float)
    A = np.diag(a)
    q = ManifoldClass.STRICT_SADDLE if a.min() < 0 else ManifoldClass.LOCAL_MIN
    return ManifoldSpec(
        critical_point=np.zeros(a.shape[0]),
        tangent_basis=np.eye(a.shape[0]),
        reduced_quadratic=lambda u: float(np.asarray(u) @ A @ np.asarray(u)),
        classification=q,
        reduced_hessians={
            "prox_point": lambda mu: (-np.eye(a.shape[0]) / mu, A + np.eye(a.shape[0]) / mu),
        },
    )


def pathological_manifold(rho=2.0):
    """The pathological origin has no active manifold."""
    return ManifoldSpec(np.zeros(2), np.zeros((0, 2)), None, ManifoldClass.NON_ACTIVE)


# ---------------------------------------------------------------------------
# brute-force prox oracle


def brute_force_prox(value, centers, mu, grid=201, refine_steps=50, chunk=32):
    """Derivative-free minimizer of ``value(y) + |y - c|^2 / (2 mu)`` for 2-D centers.

    A ``grid x grid`` search on the box of radius ``2|c| + 2`` around each
    center seeds a compass search (axes and diagonals) whose step halves
    ``refine_steps`` times.  ``value`` must accept batches of shape ``(..., 2)``.
    """
    C = np.atleast_2d(np.asarray(centers, dtype=float))
    if C.shape[1] != 2:
        raise CapabilityError("brute-force prox oracle supports 2-D problems only")
    out = np.empty_like(C)
    t = np.linspace(-1.0, 1.0, grid)
    gx, gy = np.meshgrid(t, t, indexing="ij")
    unit = np.stack([gx.ravel(), gy.ravel()], axis=-1)

    def phi(Y, Cb):
        return value(Y) + np.sum((Y - Cb) ** 2, axis=-1) / (2.0 * mu)

    dirs = np.array([[1, 0], [-1, 0], [0, 1], [0, -1],
                     [1, 1], [1, -1], [-1, 1], [-1, -1]], dtype=float)
    dirs[4:] /= np.sqrt(2.0)
    for s in range(0, C.shape[0], chunk):
        Cb = C[s:s + chunk]
        radius = 2.0 * np.linalg.norm(Cb, axis=1) + 2.0
        Y = Cb[:, None, :] + radius[:, None, None] * unit[None, :, :]
        vals = phi(Y, Cb[:, None, :])
        best = np.argmin(vals, axis=1)
        Yb = Y[np.arange(len(Cb)), best]
        fb = vals[np.arange(len(Cb)), best]
        step = radius * (2.0 / (grid - 1))
        for _ in range(refine_steps):
            for _ in range(20):
                cand = Yb[:, None, :] + step[:, None, None] * dirs[None, :, :]
                cv = phi(cand, Cb[:, None, :])
                j = np.argmin(cv, axis=1)
                cbest = cv[np.arange(len(Cb)), j]
                improve = cbest < fb
                if not improve.any():
                    break
                Yb = np.where(improve[:, None], cand[np.arange(len(Cb)), j], Yb)
                fb = np.where(improve, cbest, fb)
            step = 0.5 * step
        out[s:s + chunk] = Yb
    return out if np.ndim(centers) > 1 else out[0]


# ---------------------------------------------------------------------------
# string ids


def parse_problem_id(problem_id):
    """Split ``"name:key=val,key=val"`` into a name and a float parameter dict."""
    name, _, rest = problem_id.partition(":")
    params = {}
    if rest:
        for item in rest.split(","):
            key, eq, val = item.partition("=")
            if not eq:
                raise ParameterError(f"malformed problem parameter {item!r} in {problem_id!r}")
            try:
                params[key.strip()] = float(val)
            except ValueError:
                raise ParameterError(f"non-numeric parameter {item!r} in {problem_id!r}") from None
    return name.strip(), params


BUILTIN_IDS = ("pathological", "absym", "absym-split", "absym-composite", "absquad", "quadratic")


def builtin_problem(problem_id, algo="prox-point"):
    """Resolve a string id to the problem structure required by ``algo``.

    ``absym`` resolves to its split form for ``prox-gradient`` and to its
    composite form for ``prox-linear``.
    """
    name, params = parse_problem_id(problem_id)

    def no_params():
        if params:
            raise ParameterError(f"problem {name!r} takes no parameters")

    if name == "absym":
        no_params()
        if algo == "prox-gradient":
            return absym_split()
        if algo == "prox-linear":
            return absym_composite()
        return absym()
    if name == "absym-split":
        no_params()
        return absym_split()
    if name == "absym-composite":
        no_params()
        return absym_composite()
    if name == "pathological":
        unknown = set(params) - {"rho"}
        if unknown:
            raise ParameterError(f"unknown parameters {sorted(unknown)} for pathological")
        return pathological(params.get("rho", 2.0))
    if name == "absquad":
        no_params()
        return absquad()
    if name == "quadratic":
        unknown = set(params) - {"a", "b"}
        if unknown:
            raise ParameterError(f"unknown parameters {sorted(unknown)} for quadratic")
        return quadratic([params.get("a", 1.0), params.get("b", 1.0)])
    raise ParameterError(f"unknown problem id {problem_id!r}; known: {', '.join(BUILTIN_IDS)}")


def builtin_manifold(problem_id):
    name, params = parse_problem_id(problem_id)
    if name in ("absym", "absym-split", "absym-composite"):
        return absym_manifold()
    if name == "pathological":
        return pathological_manifold(params.get("rho", 2.0))
    if name == "absquad":
        return absquad_manifold()
    if name == "quadratic":
        return quadratic_manifold([params.get("a", 1.0), params.get("b", 1.0)])
    raise ParameterError(f"no manifold data for {problem_id!r}")
