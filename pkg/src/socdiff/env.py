"""The social learning game.

A world holds a batch of independent episodes that advance in lockstep, so
one call to ``step`` plays one period of every episode. A batch of one is
a single episode.
"""

from __future__ import annotations

import functools
from dataclasses import dataclass, field
from typing import Protocol

import numpy as np

from socdiff.errors import ConfigError, UsageError
from socdiff.graph import SocialGraph

# Stand-in for the undefined "previous action" at the first step.
SENTINEL = 0.5


class TargetRule(Protocol):
    beta: float

    def choose_targets(self, uniform_draw: np.ndarray, apply_u: np.ndarray) -> np.ndarray: ...


@dataclass
class EpisodeWorld:
    theta: np.ndarray  # (B,) in {0, 1}
    clean_signals: np.ndarray  # (B, N) before any bias
    signals: np.ndarray  # (B, N) what agents actually see
    sigma2: float
    horizon: int
    targets: np.ndarray  # (B,), -1 where no agent is attacked
    beta: float = 0.0
    t: int = 1
    last_actions: np.ndarray = field(default=None)

    def __post_init__(self):
        if self.last_actions is None:
            self.last_actions = np.full(self.signals.shape, SENTINEL)

    @property
    def n_episodes(self) -> int:
        return self.theta.shape[0]

    @property
    def n_agents(self) -> int:
        return self.signals.shape[1]

    @property
    def done(self) -> bool:
        return self.t > self.horizon


def bias_signals(clean: np.ndarray, theta: np.ndarray, targets: np.ndarray, beta: float) -> np.ndarray:
    """Push each targeted agent's signal away from the truth by ``beta``.

    Untargeted rows (``target == -1``) and every non-target agent keep their
    clean signal.
    """
    out = clean.copy()
    if beta == 0.0:
        return out
    rows = np.flatnonzero(targets >= 0)
    cols = targets[rows]
    out[rows, cols] = clean[rows, cols] + beta * (1 - 2 * theta[rows])
    return out


def new_episode(
    graph: SocialGraph,
    sigma2: float,
    rng: np.random.Generator,
    *,
    horizon: int = 20,
    attack: TargetRule | None = None,
    n_episodes: int = 1,
) -> EpisodeWorld:
    """Draw the claim, the private signals and (optionally) the attack target.

    The draws happen in a fixed order whatever the attack, so two calls with
    generators in the same state share the claim and clean signals exactly.
    """
    if not sigma2 > 0:
        raise ConfigError(f"signal variance must be positive, got {sigma2}")
    B, N = n_episodes, graph.n_agents
    theta = rng.integers(0, 2, size=B)
    noise = rng.standard_normal((B, N))
    uniform_target = rng.integers(0, N, size=B)
    apply_u = rng.random(B)
    clean = theta[:, None] + np.sqrt(sigma2) * noise
    if attack is None:
        targets = np.full(B, -1)
        beta = 0.0
    else:
        targets = np.asarray(attack.choose_targets(uniform_target, apply_u), dtype=int)
        beta = float(attack.beta)
    signals = bias_signals(clean, theta, targets, beta)
    return EpisodeWorld(theta, clean, signals, float(sigma2), int(horizon), targets, beta)


def observe(world: EpisodeWorld, graph: SocialGraph, agent: int) -> np.ndarray:
    """Observation rows ``[s_i, a_i(t-1), a_j(t-1) for j in neighbors ascending]``, shape (B, d_i)."""
    if not 0 <= agent < graph.n_agents:
        raise IndexError(f"agent {agent} out of range for {graph.n_agents} agents")
    cols = (agent,) + graph.neighborhoods[agent]
    return np.concatenate([world.signals[:, agent : agent + 1], world.last_actions[:, cols]], axis=1)


@functools.lru_cache(maxsize=64)
def observation_index(graph: SocialGraph) -> np.ndarray:
    """Action columns each agent reads, own first, padded with ``n_agents`` (a zero column)."""
    N = graph.n_agents
    width = max(graph.input_dim(i) for i in range(N))
    idx = np.full((N, width - 1), N)
    for i in range(N):
        cols = (i,) + graph.neighborhoods[i]
        idx[i, : len(cols)] = cols
    return idx


def observe_all(world: EpisodeWorld, graph: SocialGraph) -> np.ndarray:
    """Every agent's observation at once, zero-padded to the widest: shape (N, B, width).

    Row ``i`` restricted to its first ``graph.input_dim(i)`` entries equals ``observe(world, graph, i)``.
    """
    idx = observation_index(graph)
    B, N = world.signals.shape
    ext = np.concatenate([world.last_actions, np.zeros((B, 1))], axis=1)
    out = np.empty((N, B, idx.shape[1] + 1))
    out[:, :, 0] = world.signals.T
    out[:, :, 1:] = ext[:, idx].transpose(1, 0, 2)
    return out


def step(world: EpisodeWorld, actions: np.ndarray) -> np.ndarray:
    """Play one period. Returns stage utilities ``1{a == theta}``, shape (B, N)."""
    if world.done:
        raise UsageError(f"episode already finished after {world.horizon} steps")
    actions = np.asarray(actions)
    if actions.shape != world.signals.shape:
        raise ValueError(f"expected actions of shape {world.signals.shape}, got {actions.shape}")
    utilities = (actions == world.theta[:, None]).astype(float)
    world.last_actions = actions.astype(float)
    world.t += 1
    return utilities


def discounted_return(utilities, gamma: float) -> float | np.ndarray:
    """``sum_t gamma**t * u_t`` with the first period weighted ``gamma**1``; time is axis 0."""
    u = np.asarray(utilities, dtype=float)
    weights = gamma ** np.arange(1, u.shape[0] + 1)
    return np.tensordot(weights, u, axes=(0, 0))
