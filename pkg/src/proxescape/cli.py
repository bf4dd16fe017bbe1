"""Command-line front end: ``proxescape <subcommand> [options]``.

Subcommands
-----------
run        damped iteration from ``--x0``; trajectory CSV/JSON
escape     Monte Carlo escape experiment; EscapeReport JSON (or per-trial CSV)
spectrum   FD Jacobian spectrum of the undamped map at ``--x0``
flowfield  envelope gradient-flow directions on a grid over ``--box``
cone       closed-form cone dynamics check on the pathological example
mba        model-based run with per-step certificates
verify     property suites against the built-in problems

Options may also come from ``--config FILE``, a flat ``key = value`` file using
the long option names.  Flags override the file, which overrides defaults.

Exit codes: 0 success, 1 failed check or certificate, 2 bad parameters,
3 inner-solver failure.  Every failure prints one JSON line on stderr.
"""

from __future__ import annotations

import argparse
import json
import sys
from dataclasses import dataclass, fields
from pathlib import Path
from typing import Optional

import numpy as np

from . import dynamics, mba, problems, spectra, verify
from .errors import (CapabilityError, CertificateError, ConvergenceError, ParameterError,
                     PreconditionError)
from .proxengine import IterationMap, MapKind, ProxParams

SUBCOMMANDS = ("run", "escape", "spectrum", "flowfield", "cone", "mba", "verify")

DEFAULT_FORMAT = {"run": "csv", "escape": "json", "spectrum": "json", "flowfield": "csv",
                  "cone": "json", "mba": "csv", "verify": "text"}
DEFAULT_MAX_ITERS = {"run": 10_000, "escape": 10_000, "cone": 50, "mba": 200}


@dataclass(frozen=True)
class CliConfig:
    """Every option of every subcommand.  ``None`` means "subcommand default"."""

    subcommand: str = "run"
    problem: str = "absym"
    algo: str = "prox-point"
    mu: float = 0.25
    alpha: float = 0.5
    tau: Optional[float] = None
    x0: Optional[tuple] = None
    box: tuple = (-1.0, 1.0)
    target: Optional[tuple] = None
    sampler: str = "box"
    n_trials: int = 1000
    max_iters: Optional[int] = None
    seed: int = 0
    tilt: Optional[tuple] = None
    fd_step: Optional[float] = None
    resolution: int = 21
    workers: int = 1
    only: Optional[tuple] = None
    out: Optional[str] = None
    format: Optional[str] = None

    # -- flat key = value serialization ---------------------------------------

    def to_text(self):
        lines = []
        for f in fields(self):
            v = getattr(self, f.name)
            if v is None:
                s = "none"
            elif isinstance(v, tuple):
                s = ",".join(repr(t) if isinstance(t, float) else str(t) for t in v)
            else:
                s = repr(v) if isinstance(v, float) else str(v)
            lines.append(f"{f.name.replace('_', '-')} = {s}")
        return "\n".join(lines) + "\n"

    @classmethod
    def parse_text(cls, text):
        """Parse a config file into a dict of the keys it sets."""
        out = {}
        for n, raw in enumerate(text.splitlines(), 1):
            line = raw.split("#", 1)[0].strip()
            if not line:
                continue
            key, eq, val = line.partition("=")
            if not eq:
                raise ParameterError(f"config line {n}: expected 'key = value', got {raw!r}")
            key = key.strip().replace("-", "_")
            if key not in _CONVERTERS:
                raise ParameterError(f"config line {n}: unknown key {key!r}")
            val = val.strip()
            try:
                out[key] = None if val.lower() == "none" else _CONVERTERS[key](val)
            except ValueError as exc:
                raise ParameterError(f"config line {n}: bad value for {key!r}: {val!r}") from exc
        return out

    @classmethod
    def from_text(cls, text):
        return cls(**cls.parse_text(text))


def _floats(s):
    try:
        return tuple(float(t) for t in str(s).split(",") if t.strip())
    except ValueError as exc:
        raise ParameterError(f"expected comma-separated numbers, got {s!r}") from exc


def _names(s):
    return tuple(t.strip() for t in str(s).split(",") if t.strip())


_CONVERTERS = {
    "subcommand": str, "problem": str, "algo": str, "mu": float, "alpha": float,
    "tau": float, "x0": _floats, "box": _floats, "target": _floats, "sampler": str,
    "n_trials": int, "max_iters": int, "seed": int, "tilt": _floats, "fd_step": float,
    "resolution": int, "workers": int, "only": _names, "out": str, "format": str,
}


class _Parser(argparse.ArgumentParser):
    """Turn usage errors into :class:`ParameterError` so they get the JSON treatment."""

    def error(self, message):
        raise ParameterError(message)


def build_parser():
    common = _Parser(add_help=False, argument_default=argparse.SUPPRESS)
    common.add_argument("--config", help="flat key = value file; flags override it")
    common.add_argument("--problem", help="built-in id, e.g. absym or pathological:rho=2")
    common.add_argument("--algo", help="prox-point | prox-gradient | prox-linear")
    common.add_argument("--mu", type=float, help="prox parameter")
    common.add_argument("--alpha", type=float, help="damping in (0, 1]")
    common.add_argument("--tau", type=float, help="MBA proximal weight")
    common.add_argument("--x0", type=_floats, help="start point, comma-separated")
    common.add_argument("--box", type=_floats,
                        help="lo,hi for every coordinate, or lo_1,hi_1,...,lo_d,hi_d")
    common.add_argument("--target", type=_floats, help="escape target point (default: origin)")
    common.add_argument("--sampler", choices=["box", "cone"], help="initialization sampler")
    common.add_argument("--n-trials", type=int)
    common.add_argument("--max-iters", type=int)
    common.add_argument("--seed", type=int)
    common.add_argument("--tilt", type=_floats, help="linear tilt vector v: f(x) - <v, x>")
    common.add_argument("--fd-step", type=float, help="finite-difference step override")
    common.add_argument("--resolution", type=int, help="flowfield grid nodes per axis")
    common.add_argument("--workers", type=int, help="threads for escape trials")
    common.add_argument("--only", type=_names, help="verify: comma-separated suite names")
    common.add_argument("--out", help="output file (default: stdout)")
    common.add_argument("--format", choices=["csv", "json", "text"])

    parser = _Parser(prog="proxescape", description=__doc__.split("\n")[0])
    sub = parser.add_subparsers(dest="subcommand", required=True)
    for name in SUBCOMMANDS:
        sub.add_parser(name, parents=[common])
    return parser


def resolve_config(argv):
    """Parse ``argv`` into a :class:`CliConfig`: defaults < config file < flags."""
    ns = vars(build_parser().parse_args(argv))
    merged = {}
    if "config" in ns:
        path = Path(ns.pop("config"))
        try:
            text = path.read_text()
        except OSError as exc:
            raise ParameterError(f"cannot read config {path}: {exc}") from exc
        merged.update(CliConfig.parse_text(text))
    merged.update(ns)
    return CliConfig(**merged)


# ---------------------------------------------------------------------------
# helpers


def _problem(cfg, algo=None):
    p = problems.builtin_problem(cfg.problem, algo or cfg.algo)
    if cfg.tilt is not None:
        if not isinstance(p, problems.ProblemOracle):
            raise ParameterError("--tilt is only supported with --algo prox-point")
        p = problems.tilt(p, cfg.tilt)
    return p


def _map(cfg, strict=False):
    kind = MapKind.parse(cfg.algo)
    return IterationMap(kind, _problem(cfg), ProxParams(cfg.mu), cfg.alpha, strict=strict)


def _point(v, dim, what):
    if v is None:
        return np.zeros(dim)
    a = np.asarray(v, dtype=float)
    if a.shape != (dim,):
        raise ParameterError(f"{what} has {a.size} entries, problem dimension is {dim}")
    return a


def _box(cfg, dim):
    b = np.asarray(cfg.box, dtype=float)
    if b.size == 2:
        b = np.tile(b, dim)
    if b.size != 2 * dim:
        raise ParameterError(f"--box needs 2 or {2 * dim} numbers, got {b.size}")
    return b[0::2], b[1::2]


def _max_iters(cfg):
    return cfg.max_iters if cfg.max_iters is not None else DEFAULT_MAX_ITERS.get(cfg.subcommand, 10_000)


def _format(cfg):
    return cfg.format or DEFAULT_FORMAT[cfg.subcommand]


def _emit(cfg, text):
    if cfg.out:
        Path(cfg.out).write_text(text)
    else:
        sys.stdout.write(text)


def _json(d):
    return json.dumps(d, sort_keys=True, indent=1) + "\n"


def _need(cfg, allowed):
    fmt = _format(cfg)
    if fmt not in allowed:
        raise ParameterError(f"{cfg.subcommand} does not support --format {fmt}")
    return fmt


# ---------------------------------------------------------------------------
# subcommands


def cmd_run(cfg):
    fmt = _need(cfg, ("csv", "json"))
    m = _map(cfg)
    rec = dynamics.run(dynamics.RunConfig(m, _point(cfg.x0, m.dim, "--x0"), _max_iters(cfg), seed=cfg.seed))
    _emit(cfg, rec.to_csv() if fmt == "csv" else rec.to_json())
    return 0


def cmd_escape(cfg):
    fmt = _need(cfg, ("csv", "json"))
    m = _map(cfg)
    if cfg.sampler == "cone":
        sampler = dynamics.ConeSampler(1.0 / cfg.mu)
    elif cfg.sampler == "box":
        sampler = dynamics.BoxSampler(*_box(cfg, m.dim))
    else:
        raise ParameterError(f"unknown sampler {cfg.sampler!r}")
    rep = dynamics.escape_experiment(m, sampler, cfg.n_trials, _point(cfg.target, m.dim, "--target"),
                                     seed=cfg.seed, max_iters=_max_iters(cfg), workers=cfg.workers)
    if fmt == "json":
        _emit(cfg, rep.to_json())
    else:
        d = m.dim
        head = ["trial"] + [f"init_{i}" for i in range(d)] + [f"limit_{i}" for i in range(d)] + ["terminated"]
        rows = [",".join(head)]
        for i, (x0, lim, term) in enumerate(zip(rep.inits, rep.limits, rep.terminated)):
            lim = [float("nan")] * d if lim is None else lim
            rows.append(",".join([str(i)] + [dynamics.fmt(t) for t in list(x0) + list(lim)]
                                 + [getattr(term, "value", str(term))]))
        _emit(cfg, "\n".join(rows) + "\n")
    return 0


def cmd_spectrum(cfg):
    _need(cfg, ("json",))
    m = _map(cfg)
    rep = spectra.classify_fixed_point(m, _point(cfg.x0, m.dim, "--x0"), fd_step=cfg.fd_step)
    _emit(cfg, rep.to_json())
    return 0


def cmd_flowfield(cfg):
    fmt = _need(cfg, ("csv", "json"))
    p = _problem(cfg, "prox-point")
    lo, hi = _box(cfg, p.dim)
    table = dynamics.flowfield(p, ProxParams(cfg.mu), lo, hi, cfg.resolution)
    if fmt == "csv":
        _emit(cfg, dynamics.flowfield_csv(table))
    else:
        _emit(cfg, _json({"schema_version": dynamics.SCHEMA_VERSION,
                          "nodes": [[float(t) for t in q] for q, _ in table],
                          "directions": [[float(t) for t in v] for _, v in table]}))
    return 0


def cmd_cone(cfg):
    _need(cfg, ("json",))
    name, params = problems.parse_problem_id(cfg.problem)
    if name != "pathological":
        raise ParameterError("cone requires --problem pathological[:rho=...]")
    rho, lam, k = params.get("rho", 2.0), 1.0 / cfg.mu, _max_iters(cfg)
    if cfg.x0 is not None:
        inits = [_point(cfg.x0, 2, "--x0")]
    else:
        sampler = dynamics.ConeSampler(lam)
        inits = [sampler(dynamics.trial_rng(cfg.seed, i)) for i in range(cfg.n_trials)]
    worst = 0.0
    for x0 in inits:
        got = dynamics.cone_dynamics_check(rho, lam, cfg.alpha, x0, k)
        worst = max(worst, float(np.max(np.abs(got - dynamics.cone_closed_form(x0, lam, cfg.alpha, k)))))
    _emit(cfg, _json({"schema_version": dynamics.SCHEMA_VERSION, "rho": rho, "lam": lam,
                      "alpha": cfg.alpha, "k": k, "n_inits": len(inits), "max_abs_error": worst,
                      "passed": True}))
    return 0


def cmd_mba(cfg):
    fmt = _need(cfg, ("csv", "json"))
    if cfg.tau is None:
        raise ParameterError("mba requires --tau")
    f = _problem(cfg, "prox-point")
    if MapKind.parse(cfg.algo) is MapKind.PROX_LINEAR:
        if cfg.tilt is not None:
            raise ParameterError("--tilt is not supported with the prox-linear model")
        model = mba.prox_linear_model(problems.builtin_problem(cfg.problem, "prox-linear"))
    else:
        model = mba.exact_model(f)
    params = mba.validate_params(f, model, cfg.tau, cfg.alpha)
    rec, log = mba.mba_run(f, model, params, _point(cfg.x0, f.dim, "--x0"), _max_iters(cfg))
    rate = mba.rate_bound_check(log, params)
    if fmt == "csv":
        _emit(cfg, log.to_csv())
    else:
        def num(v):
            return float(v) if np.isfinite(v) else None

        _emit(cfg, _json({
            "schema_version": dynamics.SCHEMA_VERSION,
            "rho_hat": params.rho_hat, "rate_constant": params.rate_constant,
            "decrease_constant": params.decrease_constant,
            "relative_error_constant": params.relative_error_constant,
            "terminated": rec.terminated.value, "rate_bound_worst_slack": rate.worst_slack,
            "env_values": [num(v) for v in log.env_values],
            "env_grad_norms": [num(v) for v in log.env_grad_norms],
            "decrease_residuals": [num(v) for v in log.decrease_residuals],
            "rel_error_ratios": [num(v) for v in log.rel_error_ratios],
        }))
    return 0


def cmd_verify(cfg):
    fmt = _need(cfg, ("text", "json"))
    opts = verify.VerifyOptions(seed=cfg.seed, fd_step=cfg.fd_step)
    try:
        results = verify.run_checks(cfg.only, opts)
    except KeyError as exc:
        raise ParameterError(exc.args[0]) from exc
    failed = [r for r in results if not r.passed]
    if fmt == "text":
        text = "\n".join(r.line() for r in results)
        text += f"\n{len(results) - len(failed)}/{len(results)} checks passed\n"
    else:
        text = _json({"schema_version": dynamics.SCHEMA_VERSION,
                      "checks": [{"suite": r.suite, "name": r.name, "passed": r.passed,
                                  "measured": r.measured, "threshold": r.threshold} for r in results]})
    _emit(cfg, text)
    if failed:
        _fail(1, "CheckFailed", "failed checks: " + ", ".join(f"{r.suite}/{r.name}" for r in failed))
        return 1
    return 0


COMMANDS = {"run": cmd_run, "escape": cmd_escape, "spectrum": cmd_spectrum, "flowfield": cmd_flowfield,
            "cone": cmd_cone, "mba": cmd_mba, "verify": cmd_verify}


def _fail(code, kind, message):
    sys.stderr.write(json.dumps({"error": kind, "message": str(message), "exit_code": code}) + "\n")
    return code


def main(argv=None):
    try:
        cfg = resolve_config(sys.argv[1:] if argv is None else argv)
        if cfg.subcommand not in COMMANDS:
            raise ParameterError(f"unknown subcommand {cfg.subcommand!r}")
        return COMMANDS[cfg.subcommand](cfg)
    except (ParameterError, PreconditionError, CapabilityError) as exc:
        return _fail(2, type(exc).__name__, exc)
    except ConvergenceError as exc:
        return _fail(3, type(exc).__name__, exc)
    except CertificateError as exc:
        return _fail(1, type(exc).__name__, exc)


if __name__ == "__main__":
    sys.exit(main())
