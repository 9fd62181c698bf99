"""Signal-biasing adversary and manipulation-efficacy measurements.

Efficacy is always measured with paired runs: the baseline and the attacked
run are played from identically seeded generators, so they share the claim,
the clean signals and every exploration draw, and differ only by the bias.
"""

from __future__ import annotations

import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from socdiff.errors import ConfigError
from socdiff.graph import SocialGraph
from socdiff.neuralnet import AgentNet
from socdiff.rollout import play_greedy
from socdiff.rng import seed_split

DEFAULT_BIN_EDGES = (0.0, 0.5, 1.0, 2.0, 4.0)
DEFAULT_BETAS = (0.5, 1.0, 2.0, 3.0)
TARGETING = (
    "none",
    "uniform_random",
    "fixed_node",
    "report_by_target_signal_bins",
    "report_by_neighbor_signal_bins",
)


@dataclass(frozen=True)
class AttackSpec:
    """Who gets attacked and how hard.

    The binned targeting rules pick a target uniformly; the sweep then
    reports results conditionally on the target's (or its neighbors')
    signal strength.
    """

    beta: float = 0.0
    targeting: str = "none"
    node: int | None = None
    bin_edges: tuple[float, ...] = DEFAULT_BIN_EDGES
    probability: float = 1.0

    def __post_init__(self):
        if self.beta < 0:
            raise ConfigError(f"attack budget must be >= 0, got {self.beta}")
        if self.targeting not in TARGETING:
            raise ConfigError(f"unknown targeting {self.targeting!r}")
        if self.targeting == "fixed_node" and (self.node is None or self.node < 0):
            raise ConfigError("fixed_node targeting needs a non-negative node index")
        if any(b <= a for a, b in zip(self.bin_edges, self.bin_edges[1:])):
            raise ConfigError(f"bin edges must be strictly increasing, got {self.bin_edges}")
        if not 0.0 <= self.probability <= 1.0:
            raise ConfigError(f"attack probability must be in [0, 1], got {self.probability}")

    def choose_targets(self, uniform_draw: np.ndarray, apply_u: np.ndarray) -> np.ndarray:
        if self.targeting == "none":
            return np.full(uniform_draw.shape, -1)
        if self.targeting == "fixed_node":
            return np.full(uniform_draw.shape, self.node)
        return np.where(apply_u < self.probability, uniform_draw, -1)


def signal_strength(s, sigma2: float):
    """Absolute log-likelihood ratio of signal ``s`` between claim false and claim true.

    Evaluated from the two normal log-densities; equals ``|1 - 2s| / (2 sigma2)``.
    """
    if not sigma2 > 0:
        raise ConfigError("signal variance must be positive")
    s = np.asarray(s, dtype=float)
    log_norm = -0.5 * np.log(2.0 * np.pi * sigma2)
    log_f0 = log_norm - (s - 0.0) ** 2 / (2.0 * sigma2)
    log_f1 = log_norm - (s - 1.0) ** 2 / (2.0 * sigma2)
    return np.abs(log_f0 - log_f1)


def assign_bins(z: np.ndarray, edges) -> np.ndarray:
    """Half-open bins ``[lo, hi)``; values at or above the last edge go to the top bin, below the first get -1."""
    edges = np.asarray(edges, dtype=float)
    idx = np.searchsorted(edges, z, side="right") - 1
    idx = np.where(z >= edges[-1], len(edges) - 2, idx)
    return idx


@dataclass
class EfficacyRow:
    key: tuple
    beta: float
    delta_accuracy: float | None
    spread: float | None  # standard error (node sweep) or stddev over runs (bin sweeps)
    n_episodes: int


@dataclass
class EfficacyTable:
    kind: str  # "nodes" | "signal" | "neighbor_signal"
    rows: list[EfficacyRow] = field(default_factory=list)

    def header(self) -> list[str]:
        if self.kind == "nodes":
            return ["node_id", "beta", "delta_accuracy", "stderr", "n_episodes"]
        return ["bin_lo", "bin_hi", "beta", "delta_accuracy", "stddev_over_runs", "n_episodes"]

    def records(self) -> list[list]:
        out = []
        for row in self.rows:
            vals = ["" if v is None else v for v in (row.delta_accuracy, row.spread)]
            out.append([*row.key, row.beta, *vals, row.n_episodes])
        return out

    def lookup(self, key, beta) -> EfficacyRow:
        key = key if isinstance(key, tuple) else (key,)
        for row in self.rows:
            if row.key == key and row.beta == beta:
                return row
        raise KeyError((key, beta))


def max_workers() -> int:
    cap = os.environ.get("SOCDIFF_THREADS")
    return max(1, int(cap)) if cap else 1


def node_sweep(
    snapshot: list[AgentNet],
    graph: SocialGraph,
    beta: float,
    eval_episodes: int,
    seed: int,
    *,
    sigma2: float = 1.0,
    horizon: int = 20,
    chunk: int = 5000,
) -> EfficacyTable:
    """Efficacy of attacking each node in turn, with standard errors over episodes."""
    base, _ = play_greedy(graph, snapshot, seed, eval_episodes, sigma2=sigma2, horizon=horizon, chunk=chunk)

    def cell(node):
        attack = AttackSpec(beta, "fixed_node", node)
        hit, _ = play_greedy(graph, snapshot, seed, eval_episodes, attack=attack, sigma2=sigma2, horizon=horizon,
                             chunk=chunk)
        per_episode = (base - hit).mean(axis=0)
        se = per_episode.std(ddof=1) / np.sqrt(len(per_episode)) if len(per_episode) > 1 else 0.0
        return EfficacyRow((node,), beta, float(per_episode.mean()), float(se), eval_episodes)

    with ThreadPoolExecutor(max_workers()) as pool:
        rows = list(pool.map(cell, range(graph.n_agents)))
    return EfficacyTable("nodes", rows)


def _binned_sweep(kind, snapshot, graph, betas, edges, eval_episodes, seed, n_runs, sigma2, horizon, chunk):
    edges = tuple(float(e) for e in edges)
    n_bins = len(edges) - 1
    # row k averages over agent k's neighbors; agents without neighbors get NaN
    weights = np.zeros((graph.n_agents, graph.n_agents))
    for k, hood in enumerate(graph.neighborhoods):
        if hood:
            weights[k, list(hood)] = 1.0 / len(hood)
        else:
            weights[k, :] = np.nan

    def run(run_index):
        run_seed = seed_split(seed, f"run/{run_index}")
        spec0 = AttackSpec(0.0, "uniform_random", bin_edges=edges)
        base, worlds = play_greedy(graph, snapshot, run_seed, eval_episodes, attack=spec0, sigma2=sigma2,
                                   horizon=horizon, chunk=chunk)
        targets = np.concatenate([w.targets for w in worlds])
        clean = np.concatenate([w.clean_signals for w in worlds])
        rows = np.arange(len(targets))
        if kind == "signal":
            z = signal_strength(clean[rows, targets], sigma2)
        else:
            zs = signal_strength(clean, sigma2)
            z = np.einsum("bj,bj->b", zs, weights[targets])
        bins = assign_bins(z, edges)
        result = {}
        for beta in betas:
            if beta == 0.0:
                hit = base
            else:
                spec = AttackSpec(beta, "uniform_random", bin_edges=edges)
                hit, _ = play_greedy(graph, snapshot, run_seed, eval_episodes, attack=spec, sigma2=sigma2,
                                     horizon=horizon, chunk=chunk)
            per_episode = (base - hit).mean(axis=0)
            for b in range(n_bins):
                mask = bins == b
                count = int(mask.sum())
                result[(b, beta)] = (float(per_episode[mask].mean()) if count else None, count)
        return result

    with ThreadPoolExecutor(max_workers()) as pool:
        runs = list(pool.map(run, range(n_runs)))
    table = EfficacyTable(kind)
    for beta in betas:
        for b in range(n_bins):
            vals = [r[(b, beta)][0] for r in runs if r[(b, beta)][0] is not None]
            count = sum(r[(b, beta)][1] for r in runs)
            if count == 0:
                table.rows.append(EfficacyRow((edges[b], edges[b + 1]), beta, None, None, 0))
                continue
            spread = float(np.std(vals, ddof=1)) if len(vals) > 1 else 0.0
            table.rows.append(EfficacyRow((edges[b], edges[b + 1]), beta, float(np.mean(vals)), spread, count))
    return table


def signal_bin_sweep(
    snapshot: list[AgentNet],
    graph: SocialGraph,
    betas,
    bin_edges=DEFAULT_BIN_EDGES,
    eval_episodes: int = 10000,
    seed: int = 0,
    *,
    n_runs: int = 10,
    sigma2: float = 1.0,
    horizon: int = 20,
    chunk: int = 5000,
) -> EfficacyTable:
    """Efficacy binned by the attacked agent's clean-signal strength.

    Each of ``n_runs`` independent runs plays ``eval_episodes`` paired
    episodes with a uniformly chosen target; rows report the mean over runs
    of the per-bin efficacy and its standard deviation.
    """
    return _binned_sweep("signal", snapshot, graph, tuple(betas), bin_edges, eval_episodes, seed, n_runs,
                         sigma2, horizon, chunk)


def neighbor_signal_bin_sweep(
    snapshot: list[AgentNet],
    graph: SocialGraph,
    betas,
    bin_edges=DEFAULT_BIN_EDGES,
    eval_episodes: int = 10000,
    seed: int = 0,
    *,
    n_runs: int = 10,
    sigma2: float = 1.0,
    horizon: int = 20,
    chunk: int = 5000,
) -> EfficacyTable:
    """As ``signal_bin_sweep`` but binned on the mean clean-signal strength of the target's neighbors."""
    return _binned_sweep("neighbor_signal", snapshot, graph, tuple(betas), bin_edges, eval_episodes, seed,
                         n_runs, sigma2, horizon, chunk)
