"""Proximal operators and regularizer evaluation.

All supported regularizers have closed-form prox maps: identity (zero),
componentwise soft-thresholding (l1), radial projection (l2 ball).
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np


@dataclass(frozen=True)
class Zero:
    """No regularizer: psi = 0."""

    def value(self, x):
        return 0.0

    def prox(self, eta, u):
        return u


@dataclass(frozen=True)
class L1:
    """psi(x) = theta * ||x||_1."""

    theta: float

    def __post_init__(self):
        if self.theta < 0:
            raise ValueError("l1 weight must be >= 0")

    def value(self, x):
        return self.theta * float(np.sum(np.abs(x)))

    def prox(self, eta, u):
        t = eta * self.theta
        return np.sign(u) * np.maximum(np.abs(u) - t, 0.0)


@dataclass(frozen=True)
class L2Ball:
    """Indicator of the Euclidean ball of radius r."""

    r: float

    def __post_init__(self):
        if self.r <= 0:
            raise ValueError("ball radius must be > 0")

    def value(self, x):
        return 0.0 if np.linalg.norm(x) <= self.r * (1 + 1e-12) else np.inf

    def prox(self, eta, u):
        nrm = np.linalg.norm(u)
        if nrm <= self.r:
            return u.copy()
        return u * (self.r / nrm)


ZERO = Zero()


def prox(reg, eta, u):
    """argmin_x eta*psi(x) + 0.5*||x - u||^2."""
    if eta <= 0:
        raise ValueError("prox step must be > 0")
    return reg.prox(eta, np.asarray(u, dtype=np.float64))


def reg_value(reg, x):
    """psi(x); +inf outside the domain for indicator regularizers."""
    return reg.value(np.asarray(x, dtype=np.float64))


def psi_subgradient_from_prox(u, x_out, eta, g):
    """Subgradient of psi at x_out = prox(eta, u - eta*g): (u - x_out)/eta - g."""
    return (u - x_out) / eta - g
