"""Damped fixed-point iteration runner and Monte Carlo escape experiments."""

from __future__ import annotations

import enum
import io
import json
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from .errors import CertificateError, ConvergenceError, ParameterError, PreconditionError
from .problems import pathological
from .proxengine import IterationMap, MapKind, ProxParams, moreau_grad

SCHEMA_VERSION = "1"


def fmt(v):
    """Full-precision decimal rendering used in every CSV we emit."""
    return format(float(v), ".17g")


class Termination(str, enum.Enum):
    CONVERGED = "converged"
    MAX_ITERS = "max_iters"
    DIVERGED = "diverged"
    ERROR = "error"


@dataclass(frozen=True)
class RunConfig:
    map: IterationMap
    x0: np.ndarray
    max_iters: int = 10_000
    stop_tol: float = 1e-9
    record_every: int = 1
    seed: int = 0
    window: int = 5
    divergence_bound: float = 1e6

    def __post_init__(self):
        if not self.stop_tol > 0:
            raise ParameterError("stop_tol must be positive")
        if int(self.max_iters) < 1 or int(self.record_every) < 1 or int(self.window) < 1:
            raise ParameterError("max_iters, record_every and window must be >= 1")
        x0 = np.asarray(self.x0, dtype=float)
        if x0.shape != (self.map.dim,):
            raise ParameterError(f"x0 has shape {x0.shape}, map dimension is {self.map.dim}")
        object.__setattr__(self, "x0", x0)


@dataclass
class RunRecord:
    """Trajectory of a damped run.

    ``envelope_grad_norms`` holds ``|x_k - S(x_k)| / mu``: the Moreau envelope
    gradient norm for the proximal point map and the gradient-mapping norm
    for the other two methods.
    """

    iterates: list = field(default_factory=list)
    f_values: list = field(default_factory=list)
    envelope_grad_norms: list = field(default_factory=list)
    terminated: Termination = Termination.MAX_ITERS
    limit_estimate: np.ndarray | None = None
    n_iters: int = 0
    fixed_point_residual: float = float("nan")
    last_step: float = float("nan")

    @property
    def points(self):
        return np.array([p for _, p in self.iterates])

    def to_csv(self):
        buf = io.StringIO()
        d = len(self.iterates[0][1]) if self.iterates else 0
        buf.write(",".join(["iter"] + [f"x_{i}" for i in range(d)] + ["f", "env_grad_norm"]) + "\n")
        for (k, p), fv, g in zip(self.iterates, self.f_values, self.envelope_grad_norms):
            buf.write(",".join([str(k)] + [fmt(t) for t in p] + [fmt(fv), fmt(g)]) + "\n")
        return buf.getvalue()

    def to_dict(self):
        def num(v):
            return float(v) if np.isfinite(v) else None

        return {
            "schema_version": SCHEMA_VERSION,
            "terminated": self.terminated.value,
            "n_iters": self.n_iters,
            "fixed_point_residual": num(self.fixed_point_residual),
            "limit_estimate": None if self.limit_estimate is None else self.limit_estimate.tolist(),
            "rows": [{"iter": k, "x": p.tolist(), "f": num(fv), "env_grad_norm": num(g)}
                     for (k, p), fv, g in zip(self.iterates, self.f_values, self.envelope_grad_norms)],
        }

    def to_json(self):
        return json.dumps(self.to_dict(), sort_keys=True, indent=1) + "\n"


def run(config: RunConfig) -> RunRecord:
    """Iterate ``x_{k+1} = (1 - alpha) x_k + alpha S(x_k)``.

    Convergence needs ``window`` consecutive displacements below ``stop_tol``;
    an exactly zero displacement stops at once without duplicating the row.
    An inner-solver failure re-raises with ``partial_record`` attached.
    """
    m = config.map
    alpha = m.alpha
    mu = m.params.mu
    rec = RunRecord()
    x = config.x0.copy()
    small = 0
    k = 0

    def add_row(k, x, s):
        rec.iterates.append((k, x.copy()))
        rec.f_values.append(m.objective(x))
        rec.envelope_grad_norms.append(float(np.linalg.norm(x - s)) / mu)

    try:
        while True:
            s = m.S(x)
            if k == config.max_iters or rec.terminated is not Termination.MAX_ITERS:
                break
            if k % config.record_every == 0:
                add_row(k, x, s)
            x_new = (1.0 - alpha) * x + alpha * s
            disp = float(np.linalg.norm(x_new - x))
            rec.last_step = disp
            if disp == 0.0:
                rec.terminated = Termination.CONVERGED
                rec.n_iters = k + 1
                rec.limit_estimate = x.copy()
                rec.fixed_point_residual = float(np.linalg.norm(s - x))
                return rec
            x = x_new
            k += 1
            if not np.all(np.isfinite(x)) or np.linalg.norm(x) > config.divergence_bound:
                rec.terminated = Termination.DIVERGED
                continue
            small = small + 1 if disp <= config.stop_tol else 0
            if small >= config.window:
                rec.terminated = Termination.CONVERGED
    except ConvergenceError as exc:
        rec.terminated = Termination.ERROR
        rec.n_iters = k
        exc.partial_record = rec
        raise
    rec.n_iters = k
    if not rec.iterates or rec.iterates[-1][0] != k:
        add_row(k, x, s)
    rec.fixed_point_residual = float(np.linalg.norm(s - x))
    if rec.terminated is Termination.CONVERGED:
        rec.limit_estimate = x.copy()
    return rec


# ---------------------------------------------------------------------------
# samplers


@dataclass(frozen=True)
class BoxSampler:
    lo: np.ndarray
    hi: np.ndarray

    def __post_init__(self):
        lo = np.asarray(self.lo, dtype=float)
        hi = np.asarray(self.hi, dtype=float)
        if lo.shape != hi.shape or np.any(hi < lo):
            raise ParameterError("box needs matching bounds with lo <= hi")
        object.__setattr__(self, "lo", lo)
        object.__setattr__(self, "hi", hi)

    def __call__(self, rng):
        return rng.uniform(self.lo, self.hi)

    def describe(self):
        return {"type": "box", "lo": self.lo.tolist(), "hi": self.hi.tolist()}


@dataclass(frozen=True)
class ConeSampler:
    """Uniform ``y`` in ``(0, y_max]`` and uniform ``x`` in ``[-y/(1+lam), y/(1+lam)]``."""

    lam: float
    y_max: float = 1.0

    def __call__(self, rng):
        y = self.y_max * (1.0 - rng.random())
        w = y / (1.0 + self.lam)
        return np.array([rng.uniform(-w, w), y])

    def describe(self):
        return {"type": "cone", "lam": self.lam, "y_max": self.y_max}


def trial_rng(seed, trial):
    """Independent stream for one trial, a function of ``(seed, trial)`` only."""
    return np.random.default_rng(np.random.SeedSequence([int(seed) & (2 ** 64 - 1), int(trial)]))


# ---------------------------------------------------------------------------
# escape experiments


@dataclass
class EscapeReport:
    n_trials: int
    n_converged: int
    n_to_target: int
    fraction_to_target: float
    limits: list
    terminated: list
    inits: list
    n_diverged: int = 0
    n_errors: int = 0
    max_fixed_point_residual: float = 0.0
    meta: dict = field(default_factory=dict)

    def to_dict(self):
        return {
            "schema_version": SCHEMA_VERSION,
            "n_trials": self.n_trials,
            "n_converged": self.n_converged,
            "n_to_target": self.n_to_target,
            "n_diverged": self.n_diverged,
            "n_errors": self.n_errors,
            "fraction_to_target": self.fraction_to_target,
            "max_fixed_point_residual": self.max_fixed_point_residual,
            "meta": self.meta,
            "trials": [
                {"init": x0, "terminated": t, "limit": lim}
                for x0, t, lim in zip(self.inits, self.terminated, self.limits)
            ],
        }

    def to_json(self):
        return json.dumps(self.to_dict(), sort_keys=True, indent=1) + "\n"


def escape_experiment(map: IterationMap, sampler, n_trials, target, target_radius=1e-6,
                      seed=0, max_iters=10_000, stop_tol=1e-9, workers=1):
    """Run ``n_trials`` seeded trials and count limits within ``target_radius`` of ``target``.

    The result does not depend on ``workers``: each trial draws from its own
    stream derived from ``(seed, trial index)``.
    """
    map.check_damping()
    target = np.asarray(target, dtype=float)
    n_trials = int(n_trials)
    if n_trials < 0:
        raise ParameterError("n_trials must be nonnegative")

    def one(i):
        x0 = np.asarray(sampler(trial_rng(seed, i)), dtype=float)
        try:
            rec = run(RunConfig(map, x0, max_iters=max_iters, stop_tol=stop_tol, seed=seed))
        except ConvergenceError:
            return x0, Termination.ERROR, None, float("nan")
        return x0, rec.terminated, rec.limit_estimate, rec.fixed_point_residual

    if workers > 1 and n_trials > 1:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            results = list(pool.map(one, range(n_trials)))
    else:
        results = [one(i) for i in range(n_trials)]

    limits, terms, inits = [], [], []
    n_conv = n_target = n_div = n_err = 0
    max_res = 0.0
    for x0, term, lim, res in results:
        inits.append(x0.tolist())
        terms.append(term.value)
        limits.append(None if lim is None else lim.tolist())
        if term is Termination.CONVERGED:
            n_conv += 1
            max_res = max(max_res, res)
            if np.linalg.norm(lim - target) <= target_radius:
                n_target += 1
        elif term is Termination.DIVERGED:
            n_div += 1
        elif term is Termination.ERROR:
            n_err += 1
    meta = {
        "problem": getattr(map.problem, "name", ""),
        "kind": map.kind.value,
        "mu": map.params.mu,
        "alpha": map.alpha,
        "seed": int(seed),
        "target": target.tolist(),
        "target_radius": target_radius,
        "max_iters": int(max_iters),
        "stop_tol": stop_tol,
        "sampler": sampler.describe() if hasattr(sampler, "describe") else repr(sampler),
    }
    return EscapeReport(n_trials, n_conv, n_target, n_target / n_trials if n_trials else 0.0,
                        limits, terms, inits, n_div, n_err, max_res, meta)


# ---------------------------------------------------------------------------
# pathological cone


def in_cone(p, lam, slack=1e-14):
    x, y = p
    return abs(x) <= y / (1.0 + lam) + slack * max(1.0, abs(y))


def cone_closed_form(x0, lam, alpha, k):
    x, y = x0
    return np.array([(1.0 - alpha) ** k * x, (1.0 - alpha * (1.0 - lam / (1.0 + lam))) ** k * y])


def cone_dynamics_check(rho, lam, alpha, x0, k, tol=1e-10):
    """Run the damped proximal point method on the pathological family from a cone point.

    Every iterate up to ``k`` is compared with the closed form and checked to
    stay in the cone; returns the closed-form ``k``-th iterate.
    """
    if not lam > rho > 0:
        raise ParameterError(f"need lam > rho > 0 (lam={lam}, rho={rho})")
    x0 = np.asarray(x0, dtype=float)
    if not in_cone(x0, lam, slack=0.0):
        raise PreconditionError(f"{x0.tolist()} is outside the cone |x| <= y/(1+lam)")
    k = int(k)
    if k == 0:
        return x0.copy()
    m = IterationMap(MapKind.PROX_POINT, pathological(rho), ProxParams(1.0 / lam), alpha)
    rec = run(RunConfig(m, x0, max_iters=k, stop_tol=np.finfo(float).tiny, window=k + 1))
    for j, p in rec.iterates:
        expected = cone_closed_form(x0, lam, alpha, j)
        err = float(np.max(np.abs(p - expected)))
        if err > tol:
            raise CertificateError(f"iterate {j} differs from the closed form by {err:.3g}",
                                   iteration=j, slack=tol - err)
        if not in_cone(p, lam):
            raise CertificateError(f"iterate {j} left the cone: {p.tolist()}", iteration=j)
    last_k, last = rec.iterates[-1]
    expected = cone_closed_form(x0, lam, alpha, k)
    if last_k != k:
        # exact fixed point reached early: the remaining iterates repeat it
        if float(np.max(np.abs(last - expected))) > tol:
            raise CertificateError("early termination away from the closed form", iteration=last_k)
    return expected


# ---------------------------------------------------------------------------
# flow field


def grid_nodes(lo, hi, resolution):
    lo = np.asarray(lo, dtype=float)
    hi = np.asarray(hi, dtype=float)
    resolution = int(resolution)
    if resolution < 1:
        raise ParameterError("resolution must be >= 1")
    if resolution == 1:
        axes = [np.array([0.5 * (a + b)]) for a, b in zip(lo, hi)]
    else:
        axes = [np.linspace(a, b, resolution) for a, b in zip(lo, hi)]
    mesh = np.meshgrid(*axes, indexing="ij")
    return np.stack([m.ravel() for m in mesh], axis=-1)


def flowfield(problem, params, lo, hi, resolution):
    """Directions ``-grad f_mu`` of the envelope's gradient flow on a grid."""
    params.check(problem.rho)
    # 0.0 - g gives +0.0 where g is zero, so the CSV never prints "-0"
    return [(p, 0.0 - moreau_grad(problem, p, params)) for p in grid_nodes(lo, hi, resolution)]


def flowfield_csv(table):
    d = len(table[0][0]) if table else 0
    lines = [",".join([f"x_{i}" for i in range(d)] + [f"d_{i}" for i in range(d)])]
    for p, v in table:
        lines.append(",".join(fmt(t) for t in list(p) + list(v)))
    return "\n".join(lines) + "\n"
