"""Optimizer loops: the three proximal iteration templates, the accelerated
variance-reduced solver, and the two-stage run driver with effective-pass
accounting.

Variants:

* A         x_k = prox(eta_k psi)[x_{k-1} - eta_k g_k]
* B         averaged-surrogate form; identical trajectory to A when psi = 0
* C         extrapolated (momentum) form, exact or sgd estimator
* acc_svrg  accelerated solver bound to the random-SVRG estimator

``run`` executes an optional constant-step first stage followed by a
decreasing-step second stage with warm-started iterates and a reset scalar
sequence. Cost accounting charges one unit per component-gradient evaluation;
a pass is n units.
"""

from __future__ import annotations

import math
import time
from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from .estimators import (ExactEstimator, SagaNonuniformEstimator,
                         SagaUniformEstimator, SgdEstimator, SvrgEstimator)
from .objective import DualityGapUnavailable, duality_gap, full_objective
from .prox import prox
from .sampling import make_distribution, make_streams
from .sequences import (SequenceState, extrapolation_beta, make_schedule,
                        online_tau, theta_acc_svrg)

_VARIANTS = ("A", "B", "C", "acc_svrg")
_ESTIMATORS = ("exact", "sgd", "svrg", "saga", "saga_nonuniform", "miso")
_AVERAGING = ("none", "online", "estimate", "uniform")

# Estimator compatibility: the momentum variant is analyzed only for generic
# bounded-variance estimators; the accelerated VR solver owns its estimator.
_COMPAT = {
    "A": _ESTIMATORS,
    "B": _ESTIMATORS,
    "C": ("exact", "sgd"),
    "acc_svrg": ("svrg",),
}


@dataclass
class RunConfig:
    """Everything needed to reproduce one optimizer run."""

    variant: str = "A"
    estimator: str = "exact"
    schedule: str = "const"  # stage-1 (or only) step-size kind
    eta: Optional[float] = None  # explicit step for kind "const"
    stage2_schedule: Optional[str] = None
    stage1_passes: float = 0.0  # 0 => single-stage run on `schedule`
    plateau_restart: bool = False  # optional early stage switch
    max_passes: float = 100.0
    averaging: str = "none"
    sampling: str = "uniform"
    batch: int = 1
    beta_shift: float = 0.0  # table shift for saga/miso estimators
    gamma0: Optional[float] = None
    seed: int = 0
    eval_every: float = 1.0
    fstar: Optional[float] = None  # with tol: stop when F - fstar <= tol
    tol: float = 0.0
    compute_dual_gap: bool = True

    def __post_init__(self):
        if self.variant not in _VARIANTS:
            raise ValueError(f"unknown variant {self.variant!r}")
        if self.estimator not in _ESTIMATORS:
            raise ValueError(f"unknown estimator {self.estimator!r}")
        if self.estimator not in _COMPAT[self.variant]:
            raise ValueError(
                f"estimator {self.estimator!r} not supported by variant "
                f"{self.variant!r}")
        if self.averaging not in _AVERAGING:
            raise ValueError(f"unknown averaging rule {self.averaging!r}")
        if self.eval_every <= 0:
            raise ValueError("eval_every must be > 0")


@dataclass
class RunTrace:
    """Objective curve sampled on the effective-pass grid."""

    passes: list = field(default_factory=list)
    objective: list = field(default_factory=list)
    objective_avg: list = field(default_factory=list)
    dual_gap: list = field(default_factory=list)
    wall: list = field(default_factory=list)
    iterations: list = field(default_factory=list)
    diverged: bool = False
    stop_iteration: Optional[int] = None
    stop_pass: Optional[float] = None
    x: Optional[np.ndarray] = None
    xhat: Optional[np.ndarray] = None
    k: int = 0


class DivergenceError(RuntimeError):
    """Internal signal: iterate norm blew past the guard."""


# ---------------------------------------------------------------------------
# Single-step templates (also exercised directly by the tests)


def step_A(problem, estimator, x, eta, streams):
    """Proximal stochastic gradient step. Returns (x_new, sample, cost)."""
    sample = estimator.estimate(x, streams)
    x_new = prox(problem.psi, eta, x - eta * sample.g)
    cost = sample.cost + estimator.post_update(x_new, streams)
    return x_new, sample, cost


def step_B(problem, estimator, x, xbar, eta, gamma, streams):
    """Surrogate-averaging step. Returns (x_new, xbar_new, sample, cost)."""
    mu = problem.mu
    sample = estimator.estimate(x, streams)
    xbar_new = (1.0 - mu * eta) * xbar + mu * eta * x - eta * sample.g
    x_new = prox(problem.psi, 1.0 / gamma, xbar_new)
    cost = sample.cost + estimator.post_update(x_new, streams)
    return x_new, xbar_new, sample, cost


def step_C(problem, estimator, x, y, seq, eta, eta_next, streams):
    """Extrapolated step; ``seq`` must already be advanced for this step.

    The momentum weight needs next-step scalars, so a lookahead copy of the
    sequence is advanced with ``eta_next``.
    Returns (x_new, y_new, v, beta, sample, cost).
    """
    sample = estimator.estimate(y, streams)
    x_new = prox(problem.psi, eta, y - eta * sample.g)
    look = seq.copy()
    delta_next, _ = look.advance(eta_next)
    beta = extrapolation_beta(seq.delta, delta_next, eta, eta_next)
    y_new = x_new + beta * (x_new - x)
    v = x + (x_new - x) / seq.delta
    cost = sample.cost + estimator.post_update(x_new, streams)
    return x_new, y_new, v, beta, sample, cost


def step_acc_svrg(problem, estimator, v, seq, eta, streams):
    """One accelerated variance-reduced step.

    Caps eta at 1/(15 gamma n) (gamma is non-increasing, so the previous
    value is a safe bound), solves (delta, gamma), mixes y between v and the
    anchor, takes the prox step, and updates v and (maybe) the anchor.
    Returns (x_new, v_new, y, sample, cost).
    """
    mu, n = problem.mu, problem.n
    eta = min(eta, 1.0 / (15.0 * seq.gamma * n))
    delta, gamma = seq.advance(eta)
    theta = theta_acc_svrg(delta, mu, eta, n)
    y = theta * v + (1.0 - theta) * estimator.anchor
    sample = estimator.estimate(y, streams)
    x_new = prox(problem.psi, eta, y - eta * sample.g)
    r = mu * delta / gamma
    v_new = (1.0 - r) * v + r * y + (delta / (gamma * eta)) * (x_new - y)
    cost = sample.cost + estimator.post_update(x_new, streams)
    return x_new, v_new, y, sample, cost


# ---------------------------------------------------------------------------
# Run driver


def _build_estimator(kind, dist, batch, beta_shift):
    if kind == "exact":
        return ExactEstimator()
    if kind == "sgd":
        return SgdEstimator(dist, batch=batch)
    if kind == "svrg":
        return SvrgEstimator(dist)
    if kind == "saga":
        return SagaUniformEstimator(beta=beta_shift)
    if kind == "miso":
        return SagaUniformEstimator(beta=beta_shift, zero_init=True)
    if kind == "saga_nonuniform":
        return SagaNonuniformEstimator(dist, beta=beta_shift)
    raise AssertionError(kind)


def _coupling(variant):
    if variant == "C":
        return "accelerated"
    if variant == "acc_svrg":
        return "acc_svrg"
    return "linear"


def _fresh_sequence(config, problem, schedule):
    eta0 = schedule.step_size(0)
    mu = problem.mu
    if config.gamma0 is not None:
        gamma0 = config.gamma0
    else:
        gamma0 = mu if mu > 0 else 1.0 / eta0
    return SequenceState(_coupling(config.variant), mu, gamma0, n=problem.n)


def run(problem, config, x0=None, objective_fn=None):
    """Execute the configured solver and return its trace.

    ``objective_fn`` overrides how the recorded objective is computed (used
    by the benchmark harness to evaluate expected objectives under
    perturbation); the early-stop test uses the same function.
    """
    n, p = problem.n, problem.p
    x = np.zeros(p) if x0 is None else np.array(x0, dtype=np.float64)
    guard = 1e8 * (1.0 + float(np.linalg.norm(x)))
    streams = make_streams(config.seed)
    sm = problem.smoothness()
    dist = make_distribution(config.sampling, sm.L_list)
    if objective_fn is None:
        objective_fn = lambda z: full_objective(problem, z)

    gap_ok = config.compute_dual_gap
    try:
        duality_gap(problem, x)
    except DualityGapUnavailable:
        gap_ok = False

    estimator = _build_estimator(config.estimator, dist, config.batch,
                                 config.beta_shift)

    def build_schedule(kind):
        return make_schedule(kind, L=sm.L_max, L_Q=dist.L_Q, mu=problem.mu,
                             n=n, eta=config.eta)

    two_stage = (config.stage2_schedule is not None
                 and (config.stage1_passes > 0 or config.plateau_restart))
    schedule = build_schedule(config.schedule)
    seq = _fresh_sequence(config, problem, schedule)
    stage = 1 if two_stage else 2

    trace = RunTrace()
    t0 = time.perf_counter()

    def record(pass_value, k):
        trace.passes.append(pass_value)
        f = objective_fn(x)
        trace.objective.append(f)
        trace.objective_avg.append(
            objective_fn(xhat) if xhat is not None else math.nan)
        trace.dual_gap.append(duality_gap(problem, x) if gap_ok else math.nan)
        trace.wall.append(time.perf_counter() - t0)
        trace.iterations.append(k)
        return f

    xhat = x.copy() if config.averaging != "none" else None
    record(0.0, 0)
    evals = estimator.init_state(problem, x, streams)
    next_eval = config.eval_every
    k = 0  # global iteration counter (for reporting)
    k_stage = 0  # resets at the stage switch
    # variant-specific companions
    xbar = x.copy()
    y = x.copy()
    v = x.copy()
    recent = [trace.objective[0]]

    def switch_to_stage2():
        nonlocal schedule, seq, stage, k_stage, evals, y, v
        schedule = build_schedule(config.stage2_schedule)
        seq = _fresh_sequence(config, problem, schedule)
        stage = 2
        k_stage = 0
        y = x.copy()
        v = x.copy()
        if isinstance(estimator, SvrgEstimator):
            evals += estimator.post_update(x, streams, force=True)

    try:
        while evals < config.max_passes * n:
            eta = schedule.step_size(k_stage)
            if config.variant == "A":
                seq.advance(eta)
                x, _, cost = step_A(problem, estimator, x, eta, streams)
            elif config.variant == "B":
                _, gamma = seq.advance(eta)
                x, xbar, _, cost = step_B(problem, estimator, x, xbar, eta,
                                          gamma, streams)
            elif config.variant == "C":
                seq.advance(eta)
                eta_next = schedule.step_size(k_stage + 1)
                x, y, _, _, _, cost = step_C(problem, estimator, x, y, seq,
                                             eta, eta_next, streams)
            else:
                x, v, _, _, cost = step_acc_svrg(problem, estimator, v, seq,
                                                 eta, streams)
            k += 1
            k_stage += 1
            evals += cost

            if not np.all(np.isfinite(x)) or np.linalg.norm(x) > guard:
                raise DivergenceError

            if xhat is not None:
                if config.averaging == "online":
                    w = online_tau(seq.delta, n)
                elif config.averaging == "estimate":
                    w = seq.delta
                else:
                    w = 1.0 / k
                xhat = (1.0 - w) * xhat + w * x

            passes = evals / n
            if passes + 1e-12 >= next_eval:
                grid = math.floor(passes / config.eval_every) * config.eval_every
                f = record(grid, k)
                next_eval = grid + config.eval_every
                recent.append(f)
                if len(recent) > 10:
                    recent.pop(0)
                if (config.fstar is not None
                        and f - config.fstar <= config.tol):
                    trace.stop_iteration = k
                    trace.stop_pass = passes
                    break
                if stage == 1:
                    plateaued = (config.plateau_restart and len(recent) == 10
                                 and abs(recent[0] - recent[-1])
                                 <= 1e-3 * abs(recent[0]))
                    if passes >= config.stage1_passes or plateaued:
                        switch_to_stage2()
                        recent = [f]
    except DivergenceError:
        trace.diverged = True

    if trace.passes[-1] != evals / n and not trace.diverged \
            and trace.stop_iteration is None:
        record(evals / n, k)
    trace.x = x
    trace.xhat = xhat
    trace.k = k
    return trace


# ---------------------------------------------------------------------------
# Benchmark algorithm registry (canonical CLI names)


@dataclass(frozen=True)
class AlgoSpec:
    variant: str
    estimator: str
    const_schedule: str  # experiment-mode constant kind
    theory_schedule: str  # theory-mode constant kind
    decr_schedule: Optional[str] = None  # None: constant-step algorithm
    minibatch: bool = False  # batch = ceil(sqrt(L/mu))


ALGORITHMS = {
    "SGD": AlgoSpec("A", "sgd", "sgd_const", "sgd_const"),
    "SGD-d": AlgoSpec("A", "sgd", "sgd_const", "sgd_const", "sgd_decr"),
    "acc-SGD": AlgoSpec("C", "sgd", "acc_sgd_const", "acc_sgd_const"),
    "acc-SGD-d": AlgoSpec("C", "sgd", "acc_sgd_const", "acc_sgd_const",
                          "acc_sgd_decr"),
    "acc-mb-SGD-d": AlgoSpec("C", "sgd", "acc_sgd_const", "acc_sgd_const",
                             "acc_sgd_decr", minibatch=True),
    "rand-SVRG": AlgoSpec("A", "svrg", "svrg_const", "svrg_const_theory"),
    "rand-SVRG-d": AlgoSpec("A", "svrg", "svrg_const", "svrg_const_theory",
                            "svrg_decr"),
    "acc-SVRG": AlgoSpec("acc_svrg", "svrg", "accsvrg_const", "accsvrg_const"),
    "acc-SVRG-d": AlgoSpec("acc_svrg", "svrg", "accsvrg_const",
                           "accsvrg_const", "accsvrg_decr"),
}

_BY_LOWER = {name.lower(): name for name in ALGORITHMS}


def resolve_algorithm(name):
    """Case-insensitive lookup; raises with the list of valid names."""
    key = name.strip().lower()
    if key not in _BY_LOWER:
        raise ValueError(
            f"unknown algorithm {name!r}; valid names: "
            + ", ".join(ALGORITHMS))
    return _BY_LOWER[key]


def algorithm_config(name, problem, mode="experiment", max_passes=100.0,
                     seed=0, eval_every=1.0, **overrides):
    """Build the RunConfig for a benchmark algorithm name.

    Experiment mode uses the looser constant steps and no averaging;
    theory mode uses the analysis caps and online averaging.
    """
    spec = ALGORITHMS[resolve_algorithm(name)]
    sm = problem.smoothness()
    batch = 1
    if spec.minibatch:
        if problem.mu <= 0:
            raise ValueError("minibatch sizing requires mu > 0")
        batch = int(math.ceil(math.sqrt(sm.L_max / problem.mu)))
    const = spec.const_schedule if mode == "experiment" else spec.theory_schedule
    if spec.decr_schedule is not None:
        schedule = spec.decr_schedule
    else:
        schedule = const
    cfg = dict(
        variant=spec.variant,
        estimator=spec.estimator,
        schedule=schedule,
        stage2_schedule=None,
        averaging="none" if mode == "experiment" else "online",
        batch=batch,
        seed=seed,
        max_passes=max_passes,
        eval_every=eval_every,
    )
    cfg.update(overrides)
    return RunConfig(**cfg)
