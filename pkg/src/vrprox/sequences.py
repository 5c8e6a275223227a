"""Scalar sequences driving the solvers: (delta_k, gamma_k, Gamma_k),
step-size schedules, extrapolation/mixing coefficients, averaging rules.

Three couplings between delta_k and the step size are supported:

* linear       delta_k = eta_k * gamma_k            (basic iterations)
* accelerated  delta_k = sqrt(eta_k * gamma_k)      (extrapolated iteration)
* acc_svrg     delta_k = sqrt(5 eta_k gamma_k / 3n) (accelerated SVRG)

together with gamma_k = (1 - delta_k) gamma_{k-1} + delta_k mu.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field


class StepSizeError(ValueError):
    """Raised when the coupled system has no admissible root in (0, 1)."""


@dataclass
class SequenceState:
    """Mutable (k, gamma_k, Gamma_k) state under one coupling."""

    coupling: str  # "linear" | "accelerated" | "acc_svrg"
    mu: float
    gamma: float  # gamma_0 >= mu at construction
    n: int = 1  # components, only used by acc_svrg
    k: int = 0
    Gamma: float = 1.0
    delta: float = 0.0
    eta: float = 0.0

    def __post_init__(self):
        if self.gamma < self.mu:
            raise ValueError("gamma_0 must be >= mu")
        if self.coupling not in ("linear", "accelerated", "acc_svrg"):
            raise ValueError(f"unknown coupling {self.coupling!r}")

    def copy(self):
        return SequenceState(self.coupling, self.mu, self.gamma, self.n,
                             self.k, self.Gamma, self.delta, self.eta)

    def advance(self, eta_k):
        """Solve for (delta_k, gamma_k) given gamma_{k-1}; update Gamma."""
        if eta_k <= 0:
            raise StepSizeError("step size must be > 0")
        g_prev = self.gamma
        mu = self.mu
        if self.coupling == "linear":
            denom = 1.0 + eta_k * (g_prev - mu)
            delta = eta_k * g_prev / denom
        else:
            a = eta_k if self.coupling == "accelerated" else 5.0 * eta_k / (3.0 * self.n)
            # positive root of delta^2 + a(g_prev - mu) delta - a g_prev = 0,
            # written to avoid cancellation (the other root is negative)
            b = a * (g_prev - mu)
            c = a * g_prev
            delta = 2.0 * c / (b + math.sqrt(b * b + 4.0 * c))
        if not 0.0 < delta < 1.0:
            raise StepSizeError(
                f"no admissible delta in (0,1) for eta={eta_k} (got {delta})")
        self.delta = delta
        self.eta = eta_k
        # mathematically gamma_k >= mu whenever gamma_0 >= mu; clamp away
        # the last-ulp rounding drift of the convex combination
        self.gamma = max((1.0 - delta) * g_prev + delta * mu, mu)
        self.Gamma *= 1.0 - delta
        self.k += 1
        return delta, self.gamma


def gamma_closed_form(pattern, k, delta=None):
    """Closed-form Gamma_k = prod_{t<=k} (1 - delta_t) for standard patterns.

    Patterns: "const" (delta_t = delta), "inv_k" (1/(t+1)), "two_over_k"
    (2/(t+2)), "min_inv_k" (min(1/(t+1), delta)), "min_two_over_k"
    (min(2/(t+2), delta)).
    """
    if pattern == "const":
        return (1.0 - delta) ** k
    if pattern == "inv_k":
        return 1.0 / (k + 1)
    if pattern == "two_over_k":
        return 2.0 / ((k + 1) * (k + 2))
    if pattern == "min_inv_k":
        k0 = math.ceil(1.0 / delta - 1.0)
        if k < k0:
            return (1.0 - delta) ** k
        return (1.0 - delta) ** (k0 - 1) * k0 / (k + 1.0)
    if pattern == "min_two_over_k":
        k0 = math.ceil(2.0 / delta - 2.0)
        if k < k0:
            return (1.0 - delta) ** k
        return (1.0 - delta) ** (k0 - 1) * k0 * (k0 + 1.0) / ((k + 1.0) * (k + 2.0))
    raise ValueError(f"unknown pattern {pattern!r}")


# Schedule kinds, addressable by benchmark algorithm names.
_KINDS = (
    "const", "sgd_const", "sgd_decr", "acc_sgd_const", "acc_sgd_decr",
    "svrg_const", "svrg_const_theory", "svrg_const_mu", "svrg_decr",
    "accsvrg_const", "accsvrg_decr",
)


@dataclass(frozen=True)
class Schedule:
    """Step-size rule eta_k = min(cap, coef / (k+2)^pow); non-increasing."""

    kind: str
    cap: float
    coef: float = math.inf
    power: int = 1

    def step_size(self, k):
        if math.isinf(self.coef):
            return self.cap
        return min(self.cap, self.coef / float(k + 2) ** self.power)


def make_schedule(kind, L=None, L_Q=None, mu=None, n=None, eta=None):
    """Build one of the benchmark step-size rules.

    Decreasing kinds require mu > 0.
    """
    if kind not in _KINDS:
        raise ValueError(f"unknown schedule kind {kind!r}")
    if kind == "const":
        return Schedule(kind, cap=eta)
    if kind in ("sgd_decr", "acc_sgd_decr", "svrg_const_mu", "svrg_decr",
                "accsvrg_const", "accsvrg_decr") and not mu:
        raise ValueError(f"schedule {kind!r} requires mu > 0")
    if kind == "sgd_const":
        return Schedule(kind, cap=1.0 / L)
    if kind == "sgd_decr":
        return Schedule(kind, cap=1.0 / L, coef=2.0 / mu, power=1)
    if kind == "acc_sgd_const":
        return Schedule(kind, cap=1.0 / L)
    if kind == "acc_sgd_decr":
        return Schedule(kind, cap=1.0 / L, coef=4.0 / mu, power=2)
    if kind == "svrg_const":
        return Schedule(kind, cap=1.0 / (3.0 * L))
    if kind == "svrg_const_theory":
        return Schedule(kind, cap=1.0 / (12.0 * L_Q))
    if kind == "svrg_const_mu":
        return Schedule(kind, cap=min(1.0 / (12.0 * L_Q), 1.0 / (5.0 * mu * n)))
    if kind == "svrg_decr":
        return Schedule(kind, cap=min(1.0 / (12.0 * L_Q), 1.0 / (5.0 * mu * n)),
                        coef=2.0 / mu, power=1)
    if kind == "accsvrg_const":
        return Schedule(kind, cap=min(1.0 / (3.0 * L_Q), 1.0 / (15.0 * mu * n)))
    if kind == "accsvrg_decr":
        return Schedule(kind, cap=min(1.0 / (3.0 * L_Q), 1.0 / (15.0 * mu * n)),
                        coef=12.0 * n / (5.0 * mu), power=2)
    raise AssertionError


def extrapolation_beta(delta_k, delta_k1, eta_k, eta_k1):
    """beta_k = delta_k (1-delta_k) eta_{k+1} / (eta_k delta_{k+1} + eta_{k+1} delta_k^2).

    Requires the caller to have advanced the sequence one step ahead.
    """
    return delta_k * (1.0 - delta_k) * eta_k1 / (eta_k * delta_k1 + eta_k1 * delta_k**2)


def theta_acc_svrg(delta_k, mu, eta_k, n):
    """Mixing weight theta_k = (3 n delta_k - 5 mu eta_k) / (3 - 5 mu eta_k)."""
    if 5.0 * mu * eta_k >= 3.0:
        raise ValueError("requires 5 mu eta < 3")
    return (3.0 * n * delta_k - 5.0 * mu * eta_k) / (3.0 - 5.0 * mu * eta_k)


def average_update(xhat_prev, x_k, weight):
    """One averaging step xhat_k = (1 - w) xhat_prev + w x_k."""
    return (1.0 - weight) * xhat_prev + weight * x_k


def online_tau(delta_k, n):
    """Averaging weight tau_k = min(delta_k, 1/(5n))."""
    return min(delta_k, 1.0 / (5.0 * n))
