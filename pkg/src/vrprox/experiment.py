"""Benchmark harness: problem assembly, F* estimation, replicate runs, CSV.

The output schema is one row per (algorithm, replicate, pass) plus
``replicate="mean"`` rows averaging the replicates at matching pass counts:

    algo,replicate,pass,objective,objective_avg_iterate,dual_gap,fstar_gap,diverged

``fstar_gap`` is clamped at 1e-16 so log-scale plots never hit log(0).
Wall-clock time is deliberately excluded: identical spec + seed gives a
byte-identical file.
"""

from __future__ import annotations

import math
import re
from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from .data import Dataset, normalize_rows, read_libsvm, synthesize
from .fast import fast_eligible, run_fast
from .objective import (DualityGapUnavailable, Loss, duality_gap, full_grad,
                        full_objective, loss_value_deriv_vec)
from .prox import L1, L2Ball, ZERO, prox, reg_value
from .sampling import Dropout, Gaussian, NO_NOISE, dropout_mask, replicate_seed
from .solvers import ALGORITHMS, RunConfig, algorithm_config, resolve_algorithm, run

CSV_HEADER = "algo,replicate,pass,objective,objective_avg_iterate,dual_gap,fstar_gap,diverged"

_EVAL_MASKS_PER_POINT = 5
_FSTAR_GAP_FLOOR = 1e-16


@dataclass
class ExperimentSpec:
    """Declarative description of one benchmark experiment."""

    algos: list
    data_path: Optional[str] = None
    synthetic: Optional[dict] = None  # keys n, p, seed, flip
    loss: str = "logistic"
    psi: str = "none"  # "none" | "l1:<theta>" | "ball:<r>"
    lam: str = "1/10n"
    dropout: float = 0.0
    gauss: float = 0.0
    passes: float = 100.0
    replicates: int = 5
    seed: int = 0
    mode: str = "experiment"
    eval_every: Optional[float] = None  # default: 5 under noise, else 1
    out: Optional[str] = None
    fstar_budget: float = 1000.0

    def __post_init__(self):
        if self.replicates < 1:
            raise ValueError("replicates must be >= 1")
        if (self.data_path is None) == (self.synthetic is None):
            raise ValueError("exactly one of data_path / synthetic required")
        if self.dropout and self.gauss:
            raise ValueError("dropout and gaussian noise are exclusive")
        if self.mode not in ("experiment", "theory"):
            raise ValueError("mode must be 'experiment' or 'theory'")
        self.algos = [resolve_algorithm(a) for a in self.algos]


def parse_lambda(expr, n):
    """Parse '1/10n'-style rules or a plain float literal."""
    m = re.fullmatch(r"1\s*/\s*(\d+)\s*n", expr.strip())
    if m:
        return 1.0 / (int(m.group(1)) * n)
    try:
        return float(expr)
    except ValueError:
        raise ValueError(f"cannot parse lambda rule {expr!r}") from None


def parse_psi(text):
    text = text.strip()
    if text == "none":
        return ZERO
    if text.startswith("l1:"):
        return L1(float(text[3:]))
    if text.startswith("ball:"):
        return L2Ball(float(text[5:]))
    raise ValueError(f"cannot parse regularizer {text!r}")


def build_problem(spec):
    """Materialize the Problem an ExperimentSpec describes."""
    from .objective import Problem

    if spec.data_path is not None:
        data = normalize_rows(read_libsvm(spec.data_path))
    else:
        s = dict(spec.synthetic)
        data = synthesize(int(s["n"]), int(s["p"]), seed=int(s.get("seed", 0)),
                          flip_prob=float(s.get("flip", 0.0)))
    loss = Loss.LOGISTIC if spec.loss == "logistic" else Loss.SQUARED_HINGE
    if spec.loss not in ("logistic", "sqhinge"):
        raise ValueError(f"unknown loss {spec.loss!r}")
    noise = NO_NOISE
    if spec.dropout:
        noise = Dropout(spec.dropout)
    elif spec.gauss:
        noise = Gaussian(spec.gauss)
    lam = parse_lambda(spec.lam, data.n)
    return Problem(data=data, loss=loss, lam=lam, psi=parse_psi(spec.psi),
                   noise=noise)


def dropout_eval_objective(problem, mask_seed, masks_per_point=_EVAL_MASKS_PER_POINT):
    """Expected-objective estimator under dropout.

    Draws a fixed set of ``masks_per_point`` masks per data point (seeded
    once, reused for every evaluation of the run) and returns a callable
    x -> empirical mean of the masked losses plus the regularizers.
    """
    X = problem.data.to_dense()
    n, p = X.shape
    rng = np.random.default_rng(mask_seed)
    delta = problem.noise.delta
    reps = []
    for _ in range(masks_per_point):
        keep = rng.random((n, p)) >= delta
        reps.append(X * keep)
    Xm = np.vstack(reps)
    ym = np.tile(problem.data.y, masks_per_point)

    def objective(x):
        margins = ym * (Xm @ x)
        vals, _ = loss_value_deriv_vec(problem.loss, margins)
        return float(vals.mean()) + 0.5 * problem.lam * float(x @ x) \
            + reg_value(problem.psi, x)

    return objective


def deterministic_solve(problem, gap_target=1e-10, max_passes=20000.0):
    """Exact-gradient momentum descent to a duality-gap certificate.

    Returns (x, fstar, gap, certified). Requires psi = 0 and lam > 0 for
    the certificate; ``certified`` is False if the budget runs out first.
    """
    sm = problem.smoothness()
    L, mu = sm.L_max, problem.mu
    eta = 1.0 / L
    x = np.zeros(problem.p)
    y = x.copy()
    beta = 0.0
    if mu > 0:
        r = math.sqrt(mu * eta)
        beta = (1.0 - r) / (1.0 + r)
    gap = duality_gap(problem, x)
    k = 0
    t_prev = 1.0
    while gap > gap_target and k < max_passes:
        rep, _ = full_grad(problem, y)
        x_new = prox(problem.psi, eta, y - eta * rep.gradient)
        if mu > 0:
            y = x_new + beta * (x_new - x)
        else:
            t = 0.5 * (1.0 + math.sqrt(1.0 + 4.0 * t_prev**2))
            y = x_new + ((t_prev - 1.0) / t) * (x_new - x)
            t_prev = t
        x = x_new
        k += 1
        if k % 10 == 0 or k >= max_passes:
            gap = duality_gap(problem, x)
    return x, full_objective(problem, x), gap, gap <= gap_target


def estimate_f_star(problem, mode="auto", budget=1000.0, algos=None, seed=0,
                    objective_fn=None, run_mode="experiment"):
    """F* estimate: duality-gap certificate when possible, best point otherwise.

    Returns (fstar, certified).
    """
    if mode == "auto":
        mode = "best_point" if problem.noise else "dual_gap"
    if mode == "dual_gap":
        try:
            _, fstar, gap, ok = deterministic_solve(problem)
            return fstar, ok
        except DualityGapUnavailable:
            mode = "best_point"
    if objective_fn is None:
        objective_fn = lambda z: full_objective(problem, z)
    best = objective_fn(np.zeros(problem.p))
    names = algos if algos else list(ALGORITHMS)
    for name in names:
        cfg = algorithm_config(name, problem, mode=run_mode,
                               max_passes=budget, seed=seed,
                               eval_every=max(1.0, budget / 200.0))
        trace = _dispatch(problem, cfg, objective_fn)
        if trace.diverged:
            continue
        vals = [v for v in trace.objective if math.isfinite(v)]
        vals += [v for v in trace.objective_avg if math.isfinite(v)]
        if vals:
            best = min(best, min(vals))
    return best, False


def _dispatch(problem, config, objective_fn=None):
    """Route a run to the compiled path when it covers the configuration."""
    needs_custom_eval = objective_fn is not None
    if not needs_custom_eval and fast_eligible(problem, config):
        return run_fast(problem, config)
    return run(problem, config, objective_fn=objective_fn)


def _fmt(v):
    if isinstance(v, float):
        if math.isnan(v):
            return "nan"
        return f"{v:.17g}"
    return str(v)


def run_experiment(spec):
    """Execute the experiment and return the CSV text (also written to
    ``spec.out`` when set)."""
    problem = build_problem(spec)
    eval_every = spec.eval_every
    if eval_every is None:
        eval_every = 5.0 if problem.noise else 1.0

    objective_fn = None
    if isinstance(problem.noise, Dropout) and problem.noise:
        objective_fn = dropout_eval_objective(problem, mask_seed=spec.seed)

    fstar, _ = estimate_f_star(
        problem, budget=spec.fstar_budget, algos=spec.algos, seed=spec.seed,
        objective_fn=objective_fn, run_mode=spec.mode)

    lines = [CSV_HEADER]
    for name in spec.algos:
        traces = []
        for r in range(spec.replicates):
            cfg = algorithm_config(name, problem, mode=spec.mode,
                                   max_passes=spec.passes,
                                   seed=replicate_seed(spec.seed, r),
                                   eval_every=eval_every)
            trace = _dispatch(problem, cfg, objective_fn)
            traces.append(trace)
            for j in range(len(trace.passes)):
                gap = max(trace.objective[j] - fstar, _FSTAR_GAP_FLOOR)
                lines.append(",".join([
                    name, str(r), _fmt(trace.passes[j]),
                    _fmt(trace.objective[j]),
                    _fmt(trace.objective_avg[j]),
                    _fmt(trace.dual_gap[j]),
                    _fmt(gap),
                    "1" if trace.diverged else "0",
                ]))
        # mean rows over pass values present in every replicate
        common = set(traces[0].passes)
        for t in traces[1:]:
            common &= set(t.passes)
        for pv in sorted(common):
            objs, avgs, gaps = [], [], []
            flagged = False
            for t in traces:
                j = t.passes.index(pv)
                objs.append(t.objective[j])
                avgs.append(t.objective_avg[j])
                gaps.append(t.dual_gap[j])
                flagged = flagged or t.diverged
            mean_obj = float(np.mean(objs))
            lines.append(",".join([
                name, "mean", _fmt(pv), _fmt(mean_obj),
                _fmt(float(np.mean(avgs))),
                _fmt(float(np.mean(gaps))),
                _fmt(max(mean_obj - fstar, _FSTAR_GAP_FLOOR)),
                "1" if flagged else "0",
            ]))
    text = "\n".join(lines) + "\n"
    if spec.out:
        with open(spec.out, "w") as fh:
            fh.write(text)
    return text
