"""Independent recurrent deep Q-learning for the whole population.

Each agent owns a separate network and a stale target copy. Training
alternates between collecting a batch of whole episodes with the current
epsilon-greedy policies and taking one Adam step per agent on the summed
squared TD error of that batch. Targets are never differentiated.
"""

from __future__ import annotations

import logging
import math
import tempfile
from dataclasses import dataclass, field, fields
from pathlib import Path

import numpy as np

from socdiff.adversary import AttackSpec
from socdiff.errors import ConfigError, TrainingDiverged
from socdiff.graph import SocialGraph
from socdiff.neuralnet import AdamMoments, AgentNet, StackedNets, adam_update, init_params
from socdiff.rollout import Trajectory, run_episode
from socdiff.rng import stream

log = logging.getLogger(__name__)


@dataclass
class TrainerConfig:
    gamma: float = 0.95
    horizon: int = 20
    n_agents: int = 10
    hidden_dim: int = 12
    n_layers: int = 2
    sigma2: float = 1.0
    epsilon: float = 0.05
    learning_rate: float = 5e-4
    training_episodes: int = 50000
    episodes_per_update: int = 1
    target_sync_interval: int = 100
    aware_training: bool = False
    attack_beta: float = 3.0
    attack_probability: float = 1.0
    rng_seed: int = 0
    log_interval: int = 1000
    probe_episodes: int = 100

    def __post_init__(self):
        if not 0.0 < self.gamma <= 1.0:
            raise ConfigError(f"gamma must be in (0, 1], got {self.gamma}")
        if not 0.0 <= self.epsilon <= 1.0:
            raise ConfigError(f"epsilon must be in [0, 1], got {self.epsilon}")
        if self.horizon < 1 or self.hidden_dim < 1 or self.n_layers < 1:
            raise ConfigError("horizon, hidden_dim and n_layers must be positive")
        if self.training_episodes < 0 or self.episodes_per_update < 1 or self.target_sync_interval < 1:
            raise ConfigError("bad episode / update counts")
        if not self.learning_rate > 0 or not self.sigma2 > 0:
            raise ConfigError("learning_rate and sigma2 must be positive")

    def training_attack(self) -> AttackSpec | None:
        if not self.aware_training:
            return None
        return AttackSpec(self.attack_beta, "uniform_random", probability=self.attack_probability)


@dataclass
class LogRow:
    episode: int
    agent_id: int
    mean_loss: float
    probe_A1: float
    probe_AT: float


@dataclass
class TrainerState:
    live: list[AgentNet]
    target: list[AgentNet]
    moments: list[AdamMoments]
    episodes: int = 0
    updates: int = 0
    log: list[LogRow] = field(default_factory=list)
    target_stack: StackedNets | None = None


def dqn_targets(observations: np.ndarray, utilities: np.ndarray, target_net, gamma: float) -> np.ndarray:
    """Regression targets over a batch of complete episodes.

    ``y_t = u_t + gamma * max_a Q_target(t+1, a)`` for every period but the
    last, where the target network is unrolled over the same observations;
    the last period's target is the bare utility. Works for one agent
    (observations (T, B, d), utilities (T, B)) or a ``StackedNets``
    population (observations (T, N, B, width), utilities (T, N, B)).
    """
    q_next, _ = target_net.forward_sequence(observations)
    y = np.array(utilities, dtype=float, copy=True)
    if gamma != 0.0:
        y[:-1] += gamma * q_next[1:].max(axis=-1)
    return y


def dqn_loss(observations: np.ndarray, actions: np.ndarray, live_net, targets: np.ndarray):
    """Summed squared error between targets and the Q-value of the action taken, with its gradient.

    For a ``StackedNets`` population the loss is a per-agent array and the
    gradient a per-agent list.
    """
    q, cache = live_net.forward_sequence(observations)
    a = np.asarray(actions, dtype=np.intp)
    q_taken = np.take_along_axis(q, a[..., None], axis=-1)[..., 0]
    err = targets - q_taken
    dq = np.zeros_like(q)
    np.put_along_axis(dq, a[..., None], (-2.0 * err)[..., None], axis=-1)
    if isinstance(live_net, StackedNets):
        loss = np.sum(err * err, axis=(0, 2))
    else:
        loss = float(np.sum(err * err))
    return loss, live_net.backward(cache, dq)


def init_state(config: TrainerConfig, graph: SocialGraph) -> TrainerState:
    live = [
        init_params(graph.input_dim(i), config.hidden_dim, stream(config.rng_seed, f"init/agent/{i}"), config.n_layers)
        for i in range(graph.n_agents)
    ]
    return TrainerState(live, [n.copy() for n in live], [AdamMoments.zeros(n.params.size) for n in live])


def collect(config: TrainerConfig, graph: SocialGraph, agents, batch: int, update_index: int) -> Trajectory:
    rng = stream(config.rng_seed, f"train/batch/{update_index}")
    return run_episode(
        graph, agents, config.epsilon, rng, sigma2=config.sigma2, horizon=config.horizon,
        attack=config.training_attack(), n_episodes=batch,
    )


def probe(config: TrainerConfig, graph: SocialGraph, agents, episode: int) -> np.ndarray:
    """Greedy accuracy profile A_t over a small fixed-size probe."""
    rng = stream(config.rng_seed, f"probe/{episode}")
    traj = run_episode(
        graph, agents, 0.0, rng, sigma2=config.sigma2, horizon=config.horizon,
        n_episodes=config.probe_episodes, record_observations=False,
    )
    return traj.accuracy().mean(axis=1)


def update(config: TrainerConfig, state: TrainerState, traj: Trajectory, dump_dir=None) -> np.ndarray:
    """One Adam step per agent on the batch; returns each agent's batch loss."""
    if state.target_stack is None:
        state.target_stack = StackedNets(state.target)
    live = StackedNets(state.live)
    utilities = traj.utilities.transpose(0, 2, 1)
    actions = traj.actions.transpose(0, 2, 1)
    # overflow is caught below as a non-finite loss, so numpy need not warn about it
    with np.errstate(over="ignore", invalid="ignore"):
        y = dqn_targets(traj.observations, utilities, state.target_stack, config.gamma)
        losses, grads = dqn_loss(traj.observations, actions, live, y)
    for i, net in enumerate(state.live):
        if not (math.isfinite(losses[i]) and np.all(np.isfinite(grads[i]))):
            path = _dump_batch(traj, i, y[:, i], state, dump_dir)
            raise TrainingDiverged(
                f"non-finite loss for agent {i} at update {state.updates}; batch dumped to {path}", path
            )
        net.params[:], state.moments[i] = adam_update(net.params, grads[i], state.moments[i], config.learning_rate)
    state.updates += 1
    if state.updates % config.target_sync_interval == 0:
        for src, tgt in zip(state.live, state.target):
            tgt.params[:] = src.params
        state.target_stack = StackedNets(state.target)
    return losses


def _dump_batch(traj: Trajectory, agent: int, targets, state: TrainerState, dump_dir) -> Path:
    directory = Path(dump_dir) if dump_dir is not None else Path(tempfile.mkdtemp(prefix="socdiff-diverged-"))
    directory.mkdir(parents=True, exist_ok=True)
    path = directory / f"diverged_update{state.updates}_agent{agent}.npz"
    np.savez(
        path, observations=traj.observations_of(agent), actions=traj.actions, utilities=traj.utilities,
        theta=traj.world.theta, signals=traj.world.signals, targets=targets, params=state.live[agent].params,
    )
    return path


def train(config: TrainerConfig, graph: SocialGraph, *, dump_dir=None, progress=None) -> TrainerState:
    """Run the full training loop and return the final state (live networks are the snapshot)."""
    if graph.n_agents != config.n_agents:
        raise ConfigError(f"config has n_agents={config.n_agents} but graph has {graph.n_agents}")
    state = init_state(config, graph)
    loss_sum = np.zeros(graph.n_agents)
    loss_samples = 0
    next_log = config.log_interval
    while state.episodes < config.training_episodes:
        batch = min(config.episodes_per_update, config.training_episodes - state.episodes)
        traj = collect(config, graph, state.live, batch, state.updates)
        losses = update(config, state, traj, dump_dir)
        state.episodes += batch
        loss_sum += losses
        loss_samples += batch * config.horizon
        if state.episodes >= next_log or state.episodes == config.training_episodes:
            profile = probe(config, graph, state.live, state.episodes)
            for i in range(graph.n_agents):
                state.log.append(LogRow(state.episodes, i, loss_sum[i] / loss_samples, profile[0], profile[-1]))
            log.info("episode %d: mean loss %.4f, probe A1 %.3f AT %.3f",
                     state.episodes, loss_sum.mean() / loss_samples, profile[0], profile[-1])
            if progress is not None:
                progress(state.episodes, profile)
            loss_sum[:] = 0.0
            loss_samples = 0
            while next_log <= state.episodes:
                next_log += config.log_interval
    return state


def train_aware(config: TrainerConfig, graph: SocialGraph, **kwargs) -> TrainerState:
    """Train with a uniformly targeted adversary of budget ``config.attack_beta`` in every episode."""
    cfg = TrainerConfig(**{f.name: getattr(config, f.name) for f in fields(config)})
    cfg.aware_training = True
    return train(cfg, graph, **kwargs)
