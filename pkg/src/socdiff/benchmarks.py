"""Accuracy measure and the two threshold-rule reference accuracies.

The private benchmark acts on one's own signal alone; the full-information
benchmark acts on the population-average signal. Both threshold at 0.5 and
break exact ties with a fair coin.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from socdiff.errors import ConfigError
from socdiff.rollout import play_greedy

SQRT2 = math.sqrt(2.0)


def normal_cdf(x: float) -> float:
    """Standard normal CDF as ``erfc(-x / sqrt(2)) / 2``.

    Using the complementary error function keeps full relative precision in
    the lower tail, where ``1 + erf`` would cancel.
    """
    return 0.5 * math.erfc(-x / SQRT2)


def accuracy(joint_actions, theta) -> float | np.ndarray:
    """Fraction of agents whose action equals the claim. Agents are the last axis."""
    a = np.asarray(joint_actions)
    th = np.asarray(theta)
    return np.mean(a == th[..., None] if th.ndim else a == th, axis=-1)


def private_optimal_action(s, rng: np.random.Generator):
    """1 above 0.5, 0 below, a fair coin at exactly 0.5."""
    s = np.asarray(s, dtype=float)
    coin = rng.integers(0, 2, size=s.shape)
    a = np.where(s > 0.5, 1, np.where(s < 0.5, 0, coin))
    return int(a) if a.ndim == 0 else a


def benchmark_private(sigma2: float) -> float:
    """Accuracy of thresholding one's own signal: ``Phi(0.5 / sigma)``."""
    if not sigma2 > 0:
        raise ConfigError("signal variance must be positive")
    return normal_cdf(0.5 / math.sqrt(sigma2))


def benchmark_full_info(sigma2: float, n_agents: int) -> float:
    """Accuracy of thresholding the average of ``n_agents`` signals: ``Phi(0.5 sqrt(N) / sigma)``."""
    if not sigma2 > 0 or n_agents < 1:
        raise ConfigError("need sigma2 > 0 and n_agents >= 1")
    return normal_cdf(0.5 * math.sqrt(n_agents) / math.sqrt(sigma2))


def monte_carlo_benchmark(sigma2: float, n_agents: int, n_samples: int, rng, theta: int = 1) -> tuple[float, float]:
    """Sampled accuracy of the threshold rule on the mean of ``n_agents`` signals; returns (estimate, stderr)."""
    s = theta + math.sqrt(sigma2) * rng.standard_normal((n_samples, n_agents))
    a = private_optimal_action(s.mean(axis=1), rng)
    hits = (a == theta).astype(float)
    return float(hits.mean()), float(hits.std(ddof=1) / math.sqrt(n_samples))


@dataclass
class AccuracyCurve:
    mean: np.ndarray  # (T,)
    stderr: np.ndarray  # (T,)
    n_episodes: int
    a_private: float
    a_full: float

    @classmethod
    def from_samples(cls, per_episode: np.ndarray, sigma2: float, n_agents: int) -> AccuracyCurve:
        """``per_episode`` is (T, B) accuracies."""
        B = per_episode.shape[1]
        se = per_episode.std(axis=1, ddof=1) / math.sqrt(B) if B > 1 else np.zeros(per_episode.shape[0])
        return cls(per_episode.mean(axis=1), se, B, benchmark_private(sigma2), benchmark_full_info(sigma2, n_agents))

    def first_reaching(self, level: float) -> int | None:
        """First period (1-based) with mean accuracy at or above ``level``."""
        hit = np.flatnonzero(self.mean >= level)
        return int(hit[0]) + 1 if hit.size else None


def evaluate(
    snapshot,
    graph,
    episodes: int,
    seed: int,
    *,
    attack=None,
    sigma2: float = 1.0,
    horizon: int = 20,
    chunk: int = 5000,
) -> AccuracyCurve:
    """Greedy (epsilon = 0) accuracy curve over ``episodes`` episodes."""
    acc, _ = play_greedy(graph, snapshot, seed, episodes, attack=attack, sigma2=sigma2, horizon=horizon, chunk=chunk)
    return AccuracyCurve.from_samples(acc, sigma2, graph.n_agents)
