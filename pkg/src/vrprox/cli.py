"""Command-line benchmark front end.

Example::

    vrprox-bench --synthetic n=1000,p=50 --loss logistic --lambda 1/10n \
        --algo rand-SVRG,acc-SVRG --passes 100 --out curves.csv

The master seed can also be set through the ``VRPROX_SEED`` environment
variable; the ``--seed`` flag wins when both are given.
"""

from __future__ import annotations

import argparse
import os
import sys

from .experiment import ExperimentSpec, run_experiment
from .solvers import ALGORITHMS

SEED_ENV_VAR = "VRPROX_SEED"


def _parse_kv(text):
    out = {}
    for part in text.split(","):
        part = part.strip()
        if not part:
            continue
        if "=" not in part:
            raise ValueError(f"expected key=value, got {part!r}")
        key, val = part.split("=", 1)
        out[key.strip()] = val.strip()
    return out


def build_parser():
    p = argparse.ArgumentParser(
        prog="vrprox-bench",
        description="Stochastic composite-optimization benchmark runner "
                    "(CSV convergence curves).")
    src = p.add_mutually_exclusive_group(required=True)
    src.add_argument("--data", metavar="PATH",
                     help="dataset in libsvm text format")
    src.add_argument("--synthetic", metavar="n=..,p=..[,seed=..,flip=..]",
                     help="generate a synthetic dataset")
    p.add_argument("--loss", choices=("logistic", "sqhinge"),
                   default="logistic")
    p.add_argument("--psi", default="none", metavar="none|l1:<t>|ball:<r>",
                   help="composite regularizer (default none)")
    p.add_argument("--lambda", dest="lam", default="1/10n",
                   help="ridge parameter: float or rule like 1/10n, 1/100n")
    p.add_argument("--dropout", type=float, default=0.0, metavar="DELTA",
                   help="feature dropout probability")
    p.add_argument("--gauss-noise", type=float, default=0.0, metavar="SIGMA",
                   help="additive gradient noise scale")
    p.add_argument("--algo", required=True,
                   help="comma list of algorithm names: "
                        + ", ".join(ALGORITHMS))
    p.add_argument("--passes", type=float, default=100.0,
                   help="effective-pass budget per run (default 100)")
    p.add_argument("--replicates", type=int, default=5)
    p.add_argument("--seed", type=int, default=None,
                   help=f"master seed (default 0; env {SEED_ENV_VAR} "
                        "overrides the default)")
    p.add_argument("--mode", choices=("theory", "experiment"),
                   default="experiment",
                   help="step-size constants and averaging defaults")
    p.add_argument("--eval-every", type=float, default=None, metavar="PASSES",
                   help="evaluation cadence (default 1; 5 under noise)")
    p.add_argument("--fstar-budget", type=float, default=1000.0,
                   help="pass budget for the best-point F* estimate")
    p.add_argument("--out", default=None, metavar="CSV",
                   help="output path (default: stdout)")
    return p


def parse_cli(argv):
    """argv (without the program name) -> ExperimentSpec. Raises ValueError
    on semantic errors; argparse handles syntactic ones."""
    ns = build_parser().parse_args(argv)
    seed = ns.seed
    if seed is None:
        seed = int(os.environ.get(SEED_ENV_VAR, "0"))
    synthetic = None
    if ns.synthetic is not None:
        kv = _parse_kv(ns.synthetic)
        unknown = set(kv) - {"n", "p", "seed", "flip"}
        if unknown:
            raise ValueError(f"unknown --synthetic keys: {sorted(unknown)}")
        if "n" not in kv or "p" not in kv:
            raise ValueError("--synthetic requires n=.. and p=..")
        synthetic = kv
    return ExperimentSpec(
        algos=[a for a in ns.algo.split(",") if a.strip()],
        data_path=ns.data,
        synthetic=synthetic,
        loss=ns.loss,
        psi=ns.psi,
        lam=ns.lam,
        dropout=ns.dropout,
        gauss=ns.gauss_noise,
        passes=ns.passes,
        replicates=ns.replicates,
        seed=seed,
        mode=ns.mode,
        eval_every=ns.eval_every,
        out=ns.out,
        fstar_budget=ns.fstar_budget,
    )


def main(argv=None):
    argv = sys.argv[1:] if argv is None else argv
    try:
        spec = parse_cli(argv)
    except ValueError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    try:
        text = run_experiment(spec)
    except (ValueError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    if spec.out is None:
        sys.stdout.write(text)
    return 0


if __name__ == "__main__":
    sys.exit(main())
