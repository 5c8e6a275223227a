"""Index sampling distributions, perturbation models, RNG streams, seed registry.

One master seed spawns named substreams (index sampling, perturbations,
anchor-refresh coin flips, secondary index draws) so that sampling decisions
are mutually independent and every run is reproducible. Streams are built
on numpy's splittable SeedSequence, so seeds are portable across platforms.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

_SEED_MAX = np.iinfo(np.int64).max


@dataclass(frozen=True)
class SamplingDist:
    """Distribution Q over component indices with its rate constants.

    L_Q = max_i L_i / (q_i n) and rho_Q = 1 / (n min_i q_i) >= 1, with
    equality iff Q is uniform.
    """

    q: np.ndarray
    cdf: np.ndarray
    L_Q: float
    rho_Q: float
    uniform: bool

    @property
    def n(self):
        return len(self.q)


def make_distribution(mode, L_list):
    """Build a uniform or Lipschitz-proportional sampling distribution."""
    L = np.asarray(L_list, dtype=np.float64)
    if np.any(L <= 0):
        raise ValueError("all component smoothness constants must be > 0")
    n = len(L)
    if mode == "uniform":
        q = np.full(n, 1.0 / n)
        L_Q = float(L.max())
        rho_Q = 1.0
        uniform = True
    elif mode == "lipschitz":
        q = L / L.sum()
        L_Q = float(L.mean())
        rho_Q = float(1.0 / (n * q.min()))
        uniform = bool(np.allclose(q, 1.0 / n))
    else:
        raise ValueError(f"unknown sampling mode {mode!r}")
    if np.any(q <= 0):
        raise ValueError("all sampling probabilities must be > 0")
    cdf = np.cumsum(q)
    cdf[-1] = 1.0
    return SamplingDist(q=q, cdf=cdf, L_Q=L_Q, rho_Q=rho_Q, uniform=uniform)


def sample_index(dist, rng):
    """Draw one index from Q (inverse CDF; O(1) for uniform)."""
    if dist.uniform:
        return int(rng.integers(dist.n))
    return int(np.searchsorted(dist.cdf, rng.random(), side="right"))


@dataclass(frozen=True)
class NoNoise:
    def __bool__(self):
        return False


@dataclass(frozen=True)
class Dropout:
    """Zero each stored feature entry independently with probability delta."""

    delta: float

    def __post_init__(self):
        if not 0.0 <= self.delta < 1.0:
            raise ValueError("dropout probability must be in [0, 1)")

    def __bool__(self):
        return self.delta > 0.0


@dataclass(frozen=True)
class Gaussian:
    """Additive zero-mean gradient noise with total variance sigma^2.

    Per-coordinate variance is sigma^2 / p so the squared-norm bound of the
    noise vector is sigma^2.
    """

    sigma: float

    def __post_init__(self):
        if self.sigma < 0:
            raise ValueError("noise scale must be >= 0")

    def __bool__(self):
        return self.sigma > 0.0


NO_NOISE = NoNoise()


def dropout_mask(delta, size, seed):
    """Deterministic keep-mask for ``size`` stored entries."""
    rng = np.random.default_rng(seed)
    return rng.random(size) >= delta


def gaussian_noise_vector(sigma, p, seed):
    """Deterministic N(0, sigma^2/p) noise vector of length p."""
    rng = np.random.default_rng(seed)
    return rng.normal(0.0, sigma / np.sqrt(p), size=p)


class SeedRegistry:
    """Per-component perturbation seeds from the last anchor refresh.

    Storing the n seeds instead of n gradient vectors keeps random-SVRG's
    memory at O(n + p): replay(i) regenerates the exact perturbation used
    for component i when the anchor gradient was computed.
    """

    def __init__(self, n):
        self._seeds = np.zeros(n, dtype=np.int64)
        self._recorded = np.zeros(n, dtype=bool)

    def record(self, i, seed):
        self._seeds[i] = seed
        self._recorded[i] = True

    def replay(self, i):
        if not self._recorded[i]:
            raise KeyError(f"no seed recorded for component {i}")
        return int(self._seeds[i])

    def record_all(self, seeds):
        self._seeds[:] = seeds
        self._recorded[:] = True


_STREAM_NAMES = ("index", "perturb", "refresh", "secondary", "init")


@dataclass
class RngStreams:
    """Named independent substreams for one run."""

    index: np.random.Generator
    perturb: np.random.Generator
    refresh: np.random.Generator
    secondary: np.random.Generator
    init: np.random.Generator

    def draw_seed(self):
        """Fresh perturbation seed from the perturb stream."""
        return int(self.perturb.integers(_SEED_MAX))


def make_streams(master_seed):
    """Split a master seed into the run's named substreams (fixed order)."""
    children = np.random.SeedSequence(master_seed).spawn(len(_STREAM_NAMES))
    gens = [np.random.default_rng(c) for c in children]
    return RngStreams(*gens)


def replicate_seed(master_seed, replicate):
    """Derived, documented per-replicate seed: SeedSequence spawn-key mixing."""
    ss = np.random.SeedSequence(entropy=master_seed, spawn_key=(replicate,))
    return int(ss.generate_state(1, dtype=np.uint64)[0] % _SEED_MAX)
