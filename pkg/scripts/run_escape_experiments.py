#!/usr/bin/env python3
"""Monte Carlo escape experiments for the built-in saddle and the pathological cone example.

Prints one summary line per experiment and optionally writes the full
EscapeReport JSON files to ``--out-dir``.
"""
import argparse
from pathlib import Path

from proxescape import dynamics, problems
from proxescape.proxengine import IterationMap, ProxParams


def experiments(mu, lam):
    p = ProxParams(mu)
    box = dynamics.BoxSampler([-1.0, -1.0], [1.0, 1.0])
    yield "absym-prox-point", IterationMap("prox-point", problems.absym(), p, 0.9, strict=True), box
    yield "absym-prox-gradient", IterationMap("prox-gradient", problems.absym_split(), p, 0.4, strict=True), box
    yield "absym-prox-linear", IterationMap("prox-linear", problems.absym_composite(), ProxParams(0.1), 0.3), box
    yield ("pathological-cone",
           IterationMap("prox-point", problems.pathological(2.0), ProxParams(1 / lam), 0.5, strict=True),
           dynamics.ConeSampler(lam))


def main():
    ap = argparse.ArgumentParser(description=__doc__.split("\n")[0])
    ap.add_argument("--n-trials", type=int, default=1000)
    ap.add_argument("--seed", type=int, default=7)
    ap.add_argument("--mu", type=float, default=0.25)
    ap.add_argument("--lam", type=float, default=6.0, help="cone parameter of the pathological example")
    ap.add_argument("--workers", type=int, default=1)
    ap.add_argument("--out-dir", type=Path)
    args = ap.parse_args()

    for name, m, sampler in experiments(args.mu, args.lam):
        rep = dynamics.escape_experiment(m, sampler, args.n_trials, [0.0, 0.0], seed=args.seed,
                                         workers=args.workers)
        print(f"{name:22s} trials={rep.n_trials} to_origin={rep.fraction_to_target:.3f} "
              f"converged={rep.n_converged} diverged={rep.n_diverged}")
        if args.out_dir is not None:
            args.out_dir.mkdir(parents=True, exist_ok=True)
            (args.out_dir / f"{name}.json").write_text(rep.to_json())


if __name__ == "__main__":
    main()
