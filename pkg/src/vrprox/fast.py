"""Compiled hot loops for the large benchmark runs.

The reference solvers in :mod:`vrprox.solvers` stay pure Python and support
every configuration; these numba kernels cover the configurations that need
millions of iterations at desk scale: dense data, uniform sampling,
``psi`` none or l1, gaussian or no gradient noise, ``mu > 0`` with
``gamma0 = mu``. Under those restrictions the scalar sequences collapse to
closed forms (``gamma_k = mu``, ``delta_k = mu eta_k`` for the basic
iteration, ``delta_k = sqrt(5 eta_k mu / 3n)`` for the accelerated one),
which is what makes a flat compiled loop possible.

One deliberate divergence from the reference path: anchor gradients under
gaussian noise are stored as an (n, p) table instead of being replayed from
seeds. The distribution is identical; only the memory/time trade-off
differs, and n, p are small here.
"""

from __future__ import annotations

import math

import numpy as np
from numba import njit

from .prox import L1, Zero
from .sampling import Gaussian, NoNoise
from .sequences import make_schedule
from .solvers import RunTrace

_GUARD = 1e8


@njit(cache=True)
def _loss_vd(code, u):
    """(phi(u), phi'(u)); code 0 = logistic, 1 = squared hinge."""
    if code == 0:
        if u >= 0.0:
            e = math.exp(-u)
            return math.log1p(e), -e / (1.0 + e)
        e = math.exp(u)
        return -u + math.log1p(e), -1.0 / (1.0 + e)
    t = 1.0 - u
    if t <= 0.0:
        return 0.0, 0.0
    return t * t, -2.0 * t


@njit(cache=True)
def _comp_grad(X, y, lam, code, i, x, out):
    u = y[i] * np.dot(X[i], x)
    _, der = _loss_vd(code, u)
    for j in range(x.shape[0]):
        out[j] = lam * x[j] + der * y[i] * X[i, j]


@njit(cache=True)
def _objective(X, y, lam, code, l1, x):
    n = X.shape[0]
    s = 0.0
    for i in range(n):
        val, _ = _loss_vd(code, y[i] * np.dot(X[i], x))
        s += val
    reg = 0.5 * lam * np.dot(x, x)
    if l1 > 0.0:
        reg += l1 * np.sum(np.abs(x))
    return s / n + reg


@njit(cache=True)
def _fill_anchor(X, y, lam, code, sigma, x, G, zbar):
    n, p = X.shape
    zbar[:] = 0.0
    s = sigma / math.sqrt(p)
    for i in range(n):
        _comp_grad(X, y, lam, code, i, x, G[i])
        if sigma > 0.0:
            for j in range(p):
                G[i, j] += s * np.random.standard_normal()
        zbar += G[i]
    zbar /= n


@njit(cache=True)
def _soft_threshold(x, t):
    for j in range(x.shape[0]):
        v = x[j]
        if v > t:
            x[j] = v - t
        elif v < -t:
            x[j] = v + t
        else:
            x[j] = 0.0


@njit(cache=True)
def _svrg_kernel(X, y, lam, code, l1, cap, coef, power, mu,
                 max_evals, eval_evals, has_target, fstar, tol,
                 sigma, avg_on, seed, x0):
    np.random.seed(seed)
    n, p = X.shape
    x = x0.copy()
    xhat = x0.copy()
    G = np.zeros((n, p))
    zbar = np.zeros(p)
    gi = np.zeros(p)
    nois = sigma / math.sqrt(p)
    max_snaps = int(max_evals // eval_evals) + 3
    pass_vals = np.zeros(max_snaps)
    objs = np.zeros(max_snaps)
    objs_avg = np.zeros(max_snaps)
    iters = np.zeros(max_snaps, dtype=np.int64)
    objs[0] = _objective(X, y, lam, code, l1, x)
    objs_avg[0] = objs[0]
    count = 1
    _fill_anchor(X, y, lam, code, sigma, x, G, zbar)
    evals = n
    next_eval = eval_evals
    k = 0
    diverged = False
    stop_iter = -1
    tau_cap = 1.0 / (5.0 * n)
    while evals < max_evals:
        eta = cap
        if coef < np.inf:
            eta = min(cap, coef / float(k + 2) ** power)
        i = np.random.randint(n)
        _comp_grad(X, y, lam, code, i, x, gi)
        if sigma > 0.0:
            for j in range(p):
                gi[j] += nois * np.random.standard_normal()
        x = x - eta * (gi - G[i] + zbar)
        if l1 > 0.0:
            _soft_threshold(x, eta * l1)
        k += 1
        evals += 2
        if avg_on:
            tau = min(mu * eta, tau_cap)
            xhat = (1.0 - tau) * xhat + tau * x
        if np.random.random() < 1.0 / n:
            _fill_anchor(X, y, lam, code, sigma, x, G, zbar)
            evals += n
        if evals >= next_eval:
            if not np.all(np.isfinite(x)) or np.linalg.norm(x) > _GUARD:
                diverged = True
                break
            grid = (evals // eval_evals) * eval_evals
            f = _objective(X, y, lam, code, l1, x)
            pass_vals[count] = grid / n
            objs[count] = f
            objs_avg[count] = _objective(X, y, lam, code, l1, xhat) if avg_on else np.nan
            iters[count] = k
            count += 1
            next_eval = grid + eval_evals
            if has_target and f - fstar <= tol:
                stop_iter = k
                break
    return (pass_vals[:count], objs[:count], objs_avg[:count], iters[:count],
            k, evals, x, xhat, diverged, stop_iter)


@njit(cache=True)
def _accsvrg_kernel(X, y, lam, code, l1, cap, coef, power, mu,
                    max_evals, eval_evals, has_target, fstar, tol,
                    sigma, seed, x0):
    np.random.seed(seed)
    n, p = X.shape
    x = x0.copy()
    v = x0.copy()
    anchor = x0.copy()
    G = np.zeros((n, p))
    zbar = np.zeros(p)
    gi = np.zeros(p)
    nois = sigma / math.sqrt(p)
    max_snaps = int(max_evals // eval_evals) + 3
    pass_vals = np.zeros(max_snaps)
    objs = np.zeros(max_snaps)
    iters = np.zeros(max_snaps, dtype=np.int64)
    objs[0] = _objective(X, y, lam, code, l1, x)
    count = 1
    _fill_anchor(X, y, lam, code, sigma, x, G, zbar)
    evals = n
    next_eval = eval_evals
    k = 0
    diverged = False
    stop_iter = -1
    eta_gamma_cap = 1.0 / (15.0 * mu * n)
    while evals < max_evals:
        eta = cap
        if coef < np.inf:
            eta = min(cap, coef / float(k + 2) ** power)
        eta = min(eta, eta_gamma_cap)
        # gamma0 = mu keeps gamma_k = mu, so delta has a closed form
        delta = math.sqrt(5.0 * eta * mu / (3.0 * n))
        theta = (3.0 * n * delta - 5.0 * mu * eta) / (3.0 - 5.0 * mu * eta)
        yk = theta * v + (1.0 - theta) * anchor
        i = np.random.randint(n)
        _comp_grad(X, y, lam, code, i, yk, gi)
        if sigma > 0.0:
            for j in range(p):
                gi[j] += nois * np.random.standard_normal()
        x = yk - eta * (gi - G[i] + zbar)
        if l1 > 0.0:
            _soft_threshold(x, eta * l1)
        v = (1.0 - delta) * v + delta * yk + (delta / (mu * eta)) * (x - yk)
        k += 1
        evals += 2
        if np.random.random() < 1.0 / n:
            anchor = x.copy()
            _fill_anchor(X, y, lam, code, sigma, anchor, G, zbar)
            evals += n
        if evals >= next_eval:
            if not np.all(np.isfinite(x)) or np.linalg.norm(x) > _GUARD:
                diverged = True
                break
            grid = (evals // eval_evals) * eval_evals
            f = _objective(X, y, lam, code, l1, x)
            pass_vals[count] = grid / n
            objs[count] = f
            iters[count] = k
            count += 1
            next_eval = grid + eval_evals
            if has_target and f - fstar <= tol:
                stop_iter = k
                break
    return (pass_vals[:count], objs[:count], iters[:count],
            k, evals, x, diverged, stop_iter)


@njit(cache=True)
def _sgd_kernel(X, y, lam, code, l1, cap, coef, power, mu,
                max_evals, eval_evals, has_target, fstar, tol,
                sigma, avg_on, seed, x0):
    np.random.seed(seed)
    n, p = X.shape
    x = x0.copy()
    xhat = x0.copy()
    gi = np.zeros(p)
    nois = sigma / math.sqrt(p)
    max_snaps = int(max_evals // eval_evals) + 3
    pass_vals = np.zeros(max_snaps)
    objs = np.zeros(max_snaps)
    objs_avg = np.zeros(max_snaps)
    iters = np.zeros(max_snaps, dtype=np.int64)
    objs[0] = _objective(X, y, lam, code, l1, x)
    objs_avg[0] = objs[0]
    count = 1
    evals = 0
    next_eval = eval_evals
    k = 0
    diverged = False
    stop_iter = -1
    tau_cap = 1.0 / (5.0 * n)
    while evals < max_evals:
        eta = cap
        if coef < np.inf:
            eta = min(cap, coef / float(k + 2) ** power)
        i = np.random.randint(n)
        _comp_grad(X, y, lam, code, i, x, gi)
        if sigma > 0.0:
            for j in range(p):
                gi[j] += nois * np.random.standard_normal()
        x = x - eta * gi
        if l1 > 0.0:
            _soft_threshold(x, eta * l1)
        k += 1
        evals += 1
        if avg_on:
            tau = min(mu * eta, tau_cap)
            xhat = (1.0 - tau) * xhat + tau * x
        if evals >= next_eval:
            if not np.all(np.isfinite(x)) or np.linalg.norm(x) > _GUARD:
                diverged = True
                break
            grid = (evals // eval_evals) * eval_evals
            f = _objective(X, y, lam, code, l1, x)
            pass_vals[count] = grid / n
            objs[count] = f
            objs_avg[count] = _objective(X, y, lam, code, l1, xhat) if avg_on else np.nan
            iters[count] = k
            count += 1
            next_eval = grid + eval_evals
            if has_target and f - fstar <= tol:
                stop_iter = k
                break
    return (pass_vals[:count], objs[:count], objs_avg[:count], iters[:count],
            k, evals, x, xhat, diverged, stop_iter)


# ---------------------------------------------------------------------------
# Adapter


def fast_eligible(problem, config):
    """Whether the compiled path covers this (problem, config) pair."""
    from .objective import Loss  # local import to avoid cycles at module load

    if problem.data.is_sparse:
        return False
    if problem.mu <= 0:
        return False
    if config.gamma0 is not None and config.gamma0 != problem.mu:
        return False
    if config.sampling != "uniform" or config.batch != 1:
        return False
    if not isinstance(problem.psi, (Zero, L1)):
        return False
    if not isinstance(problem.noise, (NoNoise, Gaussian)):
        return False
    if config.averaging not in ("none", "online"):
        return False
    pair = (config.variant, config.estimator)
    return pair in (("A", "svrg"), ("A", "sgd"), ("acc_svrg", "svrg"))


def _kernel_args(problem, config, schedule):
    code = 0 if problem.loss.value == "logistic" else 1
    l1 = problem.psi.theta if isinstance(problem.psi, L1) else 0.0
    sigma = problem.noise.sigma if isinstance(problem.noise, Gaussian) else 0.0
    X = np.ascontiguousarray(problem.data.X, dtype=np.float64)
    y = np.asarray(problem.data.y, dtype=np.float64)
    return X, y, code, l1, sigma, schedule.cap, schedule.coef, schedule.power


def run_fast(problem, config, x0=None):
    """Compiled equivalent of :func:`vrprox.solvers.run` (restricted configs).

    Uses the same schedule construction and two-stage structure; the RNG
    stream differs from the reference path, so trajectories are not
    bit-identical across the two paths (each path is individually
    deterministic).
    """
    if not fast_eligible(problem, config):
        raise ValueError("configuration not covered by the compiled path")
    n, p = problem.n, problem.p
    x = np.zeros(p) if x0 is None else np.array(x0, dtype=np.float64)
    sm = problem.smoothness()
    mu = problem.mu

    def schedule_for(kind):
        return make_schedule(kind, L=sm.L_max, L_Q=sm.L_max, mu=mu, n=n,
                             eta=config.eta)

    two_stage = config.stage2_schedule is not None and config.stage1_passes > 0
    stages = []
    if two_stage:
        stages.append((schedule_for(config.schedule),
                       config.stage1_passes))
        stages.append((schedule_for(config.stage2_schedule),
                       config.max_passes - config.stage1_passes))
    else:
        stages.append((schedule_for(config.schedule), config.max_passes))

    trace = RunTrace()
    eval_evals = config.eval_every * n
    has_target = config.fstar is not None
    fstar = config.fstar if has_target else -np.inf
    avg_on = config.averaging == "online"
    pass_offset = 0.0
    iter_offset = 0
    xhat = x.copy()
    for stage_idx, (schedule, budget) in enumerate(stages):
        X, y, code, l1, sigma, cap, coef, power = _kernel_args(
            problem, config, schedule)
        seed = (config.seed * 1000003 + stage_idx) % (2**31 - 1)
        max_evals = int(round(budget * n))
        if max_evals <= 0:
            continue
        if config.variant == "acc_svrg":
            (pv, ob, it, k, evals, x, div, stop) = _accsvrg_kernel(
                X, y, problem.lam, code, l1, cap, coef, power, mu,
                max_evals, eval_evals, has_target, fstar, config.tol,
                sigma, seed, x)
            oa = np.full_like(ob, np.nan)
        elif config.estimator == "svrg":
            (pv, ob, oa, it, k, evals, x, xhat, div, stop) = _svrg_kernel(
                X, y, problem.lam, code, l1, cap, coef, power, mu,
                max_evals, eval_evals, has_target, fstar, config.tol,
                sigma, avg_on, seed, x)
        else:
            (pv, ob, oa, it, k, evals, x, xhat, div, stop) = _sgd_kernel(
                X, y, problem.lam, code, l1, cap, coef, power, mu,
                max_evals, eval_evals, has_target, fstar, config.tol,
                sigma, avg_on, seed, x)
        if not avg_on and config.variant != "acc_svrg":
            oa = np.full_like(ob, np.nan)
        first = 1 if stage_idx > 0 else 0  # skip duplicate boundary row
        trace.passes.extend((pv[first:] + pass_offset).tolist())
        trace.objective.extend(ob[first:].tolist())
        trace.objective_avg.extend(oa[first:].tolist())
        trace.dual_gap.extend([math.nan] * (len(pv) - first))
        trace.wall.extend([0.0] * (len(pv) - first))
        trace.iterations.extend((it[first:] + iter_offset).tolist())
        trace.diverged = bool(div)
        trace.k = iter_offset + int(k)
        if stop >= 0:
            trace.stop_iteration = iter_offset + int(stop)
            trace.stop_pass = pass_offset + evals / n
            break
        if trace.diverged:
            break
        pass_offset += evals / n
        iter_offset += int(k)
    trace.x = x
    trace.xhat = xhat if avg_on else None
    return trace
