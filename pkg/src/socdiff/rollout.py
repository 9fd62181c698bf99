"""Playing episodes with a population of Q-networks."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from socdiff import env
from socdiff.graph import SocialGraph
from socdiff.neuralnet import AgentNet, StackedNets
from socdiff.rng import stream


def choose_actions(q, epsilon, explore_u, random_action, tie_coin):
    """Vectorised epsilon-greedy over Q-values of shape (..., 2).

    All randomness comes in through the three arrays (each shaped like
    ``q[..., 0]``) so paired runs can share it exactly.
    """
    q = np.asarray(q)
    greedy = np.where(q[..., 1] > q[..., 0], 1, 0)
    greedy = np.where(q[..., 1] == q[..., 0], tie_coin, greedy)
    return np.where(explore_u < epsilon, random_action, greedy)


def epsilon_greedy(q_values, epsilon: float, rng: np.random.Generator):
    """Greedy action with probability ``1 - epsilon`` (ties broken uniformly), else uniform over {0, 1}."""
    if not 0.0 <= epsilon <= 1.0:
        raise ValueError(f"epsilon must be in [0, 1], got {epsilon}")
    q = np.asarray(q_values, dtype=float)
    shape = q.shape[:-1]
    a = choose_actions(q, epsilon, rng.random(shape), rng.integers(0, 2, shape), rng.integers(0, 2, shape))
    return int(a) if a.ndim == 0 else a


@dataclass
class Trajectory:
    world: env.EpisodeWorld
    observations: np.ndarray | None  # (T, N, B, width), zero-padded per agent
    input_dims: list[int]
    actions: np.ndarray  # (T, B, N) int8
    utilities: np.ndarray  # (T, B, N)
    explored: np.ndarray  # (T, B, N) bool, True where the uniform branch fired

    @property
    def horizon(self) -> int:
        return self.actions.shape[0]

    def observations_of(self, agent: int) -> np.ndarray:
        """Agent ``agent``'s own observation sequence, (T, B, input_dim)."""
        return self.observations[:, agent, :, : self.input_dims[agent]]

    def accuracy(self) -> np.ndarray:
        """Fraction of agents matching the claim, per period and episode: (T, B)."""
        return self.utilities.mean(axis=2)


def run_episode(
    graph: SocialGraph,
    agents: list[AgentNet] | StackedNets,
    epsilon: float,
    rng: np.random.Generator,
    *,
    sigma2: float = 1.0,
    horizon: int = 20,
    attack=None,
    n_episodes: int = 1,
    record_observations: bool = True,
) -> Trajectory:
    """Play ``n_episodes`` episodes side by side from zero hidden states.

    Random numbers are consumed in the same order regardless of ``attack``
    and ``epsilon``, so runs from identically seeded generators are paired:
    same claim, same clean signals, same exploration draws.
    """
    stack = agents if isinstance(agents, StackedNets) else StackedNets(list(agents))
    if stack.input_dims != [graph.input_dim(i) for i in range(graph.n_agents)]:
        raise ValueError("network input sizes do not match the graph's neighborhoods")
    world = env.new_episode(graph, sigma2, rng, horizon=horizon, attack=attack, n_episodes=n_episodes)
    B, N = n_episodes, graph.n_agents
    hidden = stack.zero_state(B)
    obs = np.empty((horizon, N, B, stack.width)) if record_observations else None
    actions = np.empty((horizon, B, N), dtype=np.int8)
    utilities = np.empty((horizon, B, N))
    explored = np.empty((horizon, B, N), dtype=bool)
    for t in range(horizon):
        explore_u = rng.random((B, N))
        random_action = rng.integers(0, 2, (B, N))
        tie_coin = rng.integers(0, 2, (B, N))
        x = env.observe_all(world, graph)
        if obs is not None:
            obs[t] = x
        q, hidden = stack.step(x, hidden)
        a = choose_actions(q.transpose(1, 0, 2), epsilon, explore_u, random_action, tie_coin)
        actions[t] = a
        explored[t] = explore_u < epsilon
        utilities[t] = env.step(world, a)
    return Trajectory(world, obs, stack.input_dims, actions, utilities, explored)


def play_greedy(
    graph: SocialGraph,
    agents: list[AgentNet] | StackedNets,
    seed: int,
    episodes: int,
    *,
    attack=None,
    sigma2: float = 1.0,
    horizon: int = 20,
    chunk: int = 5000,
) -> tuple[np.ndarray, list[env.EpisodeWorld]]:
    """Greedy play of ``episodes`` episodes in fixed-size chunks.

    Chunk ``k`` always draws from the stream labelled ``chunk/<first episode>``
    under ``seed``, so two calls with the same seed are paired episode by
    episode whatever the attack. Returns per-episode accuracy (T, episodes)
    and the final world of each chunk.
    """
    stack = agents if isinstance(agents, StackedNets) else StackedNets(list(agents))
    acc, worlds = [], []
    for start in range(0, episodes, chunk):
        n = min(chunk, episodes - start)
        rng = stream(seed, f"chunk/{start}")
        traj = run_episode(graph, stack, 0.0, rng, sigma2=sigma2, horizon=horizon, attack=attack,
                           n_episodes=n, record_observations=False)
        acc.append(traj.accuracy())
        worlds.append(traj.world)
    return np.concatenate(acc, axis=1), worlds
