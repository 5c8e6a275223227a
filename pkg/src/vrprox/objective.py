"""Composite empirical-risk objective: losses, gradients, smoothness, duality gap.

F(x) = (1/n) sum_i phi(b_i a_i'x) + (lambda/2)||x||^2 + psi(x). The ridge term
lives in the smooth part f, so component smoothness is
L_i = c_loss ||a_i||^2 + lambda and the strong convexity modulus is
mu = lambda when psi is not strongly convex.
"""

from __future__ import annotations

import enum
from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from .prox import ZERO, Zero, reg_value
from .sampling import NO_NOISE, Dropout, Gaussian, dropout_mask, gaussian_noise_vector


class Loss(enum.Enum):
    LOGISTIC = "logistic"
    SQUARED_HINGE = "squared_hinge"

    @property
    def curvature(self):
        """Upper bound on phi'' (per unit-norm feature vector)."""
        return 0.25 if self is Loss.LOGISTIC else 1.0


def loss_value_deriv(loss, u):
    """(phi(u), phi'(u)), numerically stable for |u| up to ~700."""
    if loss is Loss.LOGISTIC:
        if u >= 0:
            e = np.exp(-u)
            return float(np.log1p(e)), float(-e / (1.0 + e))
        e = np.exp(u)
        return float(-u + np.log1p(e)), float(-1.0 / (1.0 + e))
    t = 1.0 - u
    if t <= 0.0:
        return 0.0, 0.0
    return t * t, -2.0 * t


def loss_value_deriv_vec(loss, u):
    """Vectorized (phi(u), phi'(u)) over an array of margins."""
    u = np.asarray(u, dtype=np.float64)
    if loss is Loss.LOGISTIC:
        val = np.where(u >= 0, np.log1p(np.exp(-np.abs(u))), -u + np.log1p(np.exp(-np.abs(u))))
        der = np.where(u >= 0, -np.exp(-np.abs(u)) / (1.0 + np.exp(-np.abs(u))),
                       -1.0 / (1.0 + np.exp(-np.abs(u))))
        return val, der
    t = np.maximum(1.0 - u, 0.0)
    return t * t, -2.0 * t


@dataclass(frozen=True)
class Smoothness:
    L_list: np.ndarray
    L_max: float
    L_mean: float
    mu: float


@dataclass(frozen=True)
class Problem:
    """Composite finite-sum problem over a fixed dataset.

    Immutable; safe for concurrent shared reads.
    """

    data: object
    loss: Loss
    lam: float
    psi: object = ZERO
    noise: object = NO_NOISE

    def __post_init__(self):
        if self.lam < 0:
            raise ValueError("lambda must be >= 0")

    @property
    def n(self):
        return self.data.n

    @property
    def p(self):
        return self.data.p

    @property
    def mu(self):
        return self.lam

    def smoothness(self):
        L = self.loss.curvature * self.data.row_norms**2 + self.lam
        # zero rows still carry the ridge curvature; keep constants positive
        L = np.maximum(L, self.lam if self.lam > 0 else 1e-300)
        return Smoothness(L_list=L, L_max=float(L.max()), L_mean=float(L.mean()),
                          mu=self.lam)


@dataclass
class GradReport:
    gradient: np.ndarray
    function_value: Optional[float] = None
    perturbation_applied: bool = False


def _perturbed_row(problem, i, seed):
    """(indices, values, noise_vec) for component i under the problem's noise."""
    idx, vals = problem.data.row(i)
    noise_vec = None
    perturbed = False
    if isinstance(problem.noise, Dropout) and problem.noise:
        keep = dropout_mask(problem.noise.delta, len(vals), seed)
        vals = vals * keep
        perturbed = True
    elif isinstance(problem.noise, Gaussian) and problem.noise:
        noise_vec = gaussian_noise_vector(problem.noise.sigma, problem.p, seed)
        perturbed = True
    return idx, vals, noise_vec, perturbed


def component_grad(problem, i, x, seed=None):
    """Perturbed component gradient: phi'(b_i a~_i'x) b_i a~_i + lambda x.

    Pure in (problem, i, x, seed): identical inputs give bit-identical output.
    """
    if not 0 <= i < problem.n:
        raise IndexError(f"component index {i} out of range [0, {problem.n})")
    x = np.asarray(x, dtype=np.float64)
    idx, vals, noise_vec, perturbed = _perturbed_row(problem, i, seed)
    b = problem.data.y[i]
    u = b * float(vals @ x[idx])
    val, der = loss_value_deriv(problem.loss, u)
    g = problem.lam * x
    np.add.at(g, idx, der * b * vals)
    if noise_vec is not None:
        g = g + noise_vec
    fval = val + 0.5 * problem.lam * float(x @ x)
    return GradReport(gradient=g, function_value=fval,
                      perturbation_applied=perturbed and seed is not None)


def full_grad(problem, x, perturb=False, rng=None, registry=None):
    """Average of component gradients; exact and vectorized when unperturbed.

    With ``perturb`` set, one fresh seed is drawn per component from ``rng``
    and recorded into ``registry`` when given. Returns (GradReport, seeds).
    """
    x = np.asarray(x, dtype=np.float64)
    if not (perturb and problem.noise):
        margins = problem.data.y * (problem.data.X @ x)
        vals, ders = loss_value_deriv_vec(problem.loss, margins)
        w = ders * problem.data.y / problem.n
        g = problem.data.X.T @ w + problem.lam * x
        g = np.asarray(g).ravel()
        fval = float(vals.mean()) + 0.5 * problem.lam * float(x @ x)
        return GradReport(gradient=g, function_value=fval), None
    seeds = np.array([int(rng.integers(np.iinfo(np.int64).max))
                      for _ in range(problem.n)], dtype=np.int64)
    acc = np.zeros(problem.p)
    fsum = 0.0
    for i in range(problem.n):
        rep = component_grad(problem, i, x, seed=int(seeds[i]))
        acc += rep.gradient
        fsum += rep.function_value
    if registry is not None:
        registry.record_all(seeds)
    return GradReport(gradient=acc / problem.n, function_value=fsum / problem.n,
                      perturbation_applied=True), seeds


def full_objective(problem, x):
    """Unperturbed F(x) including psi(x)."""
    x = np.asarray(x, dtype=np.float64)
    margins = problem.data.y * (problem.data.X @ x)
    vals, _ = loss_value_deriv_vec(problem.loss, margins)
    return float(vals.mean()) + 0.5 * problem.lam * float(x @ x) + reg_value(problem.psi, x)


class DualityGapUnavailable(ValueError):
    """Raised when the Fenchel certificate does not apply (psi != 0 or lam = 0)."""


_ENT_EPS = 1e-12


def duality_gap(problem, x):
    """Fenchel duality gap F(x) - D(alpha) >= 0 with alpha_i = -phi'(b_i a_i'x).

    Only valid for psi = 0 and lambda > 0 (the ridge term plays the role of
    the strongly convex regularizer in the dual).
    """
    if not isinstance(problem.psi, Zero):
        raise DualityGapUnavailable("duality gap requires psi = 0")
    if problem.lam <= 0:
        raise DualityGapUnavailable("duality gap requires lambda > 0")
    x = np.asarray(x, dtype=np.float64)
    margins = problem.data.y * (problem.data.X @ x)
    vals, ders = loss_value_deriv_vec(problem.loss, margins)
    alpha = -ders
    if problem.loss is Loss.LOGISTIC:
        a = np.clip(alpha, _ENT_EPS, 1.0 - _ENT_EPS)
        conj = a * np.log(a) + (1.0 - a) * np.log(1.0 - a)
    else:
        conj = -alpha + alpha**2 / 4.0
    w = alpha * problem.data.y / problem.n
    v = np.asarray(problem.data.X.T @ w).ravel()
    dual = -float(conj.mean()) - float(v @ v) / (2.0 * problem.lam)
    primal = float(vals.mean()) + 0.5 * problem.lam * float(x @ x)
    return primal - dual
