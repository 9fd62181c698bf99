"""Network topologies for the social learning game.

An edge ``(j, i)`` means agent ``i`` sees agent ``j``'s last action. Agent
``i``'s neighborhood is every ``j`` with ``(j, i)`` in the edge set, sorted
ascending; that order is the layout of ``i``'s observation vector.

Topologies:
    - complete: everyone observes everyone else.
    - star: agent 0 is the hub; hub and leaves observe each other.
    - directed_ring: agent ``i`` observes ``(i - 1) mod n`` only.
    - barabasi_albert: preferential attachment, undirected (both directions).
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Literal

import numpy as np

from socdiff.errors import ConfigError

Topology = Literal["complete", "star", "directed_ring", "barabasi_albert"]
TOPOLOGIES: tuple[str, ...] = ("complete", "star", "directed_ring", "barabasi_albert")


@dataclass(frozen=True)
class SocialGraph:
    n_agents: int
    edges: frozenset[tuple[int, int]]
    topology: str
    ba_m: int | None = None
    seed: int | None = None
    neighborhoods: tuple[tuple[int, ...], ...] = field(init=False, repr=False, compare=False)

    def __post_init__(self):
        for j, i in self.edges:
            if j == i:
                raise ConfigError(f"self-loop on agent {i}")
            if not (0 <= i < self.n_agents and 0 <= j < self.n_agents):
                raise ConfigError(f"edge ({j}, {i}) out of range for {self.n_agents} agents")
        hoods = [[] for _ in range(self.n_agents)]
        for j, i in self.edges:
            hoods[i].append(j)
        object.__setattr__(self, "neighborhoods", tuple(tuple(sorted(h)) for h in hoods))

    def neighbors(self, i: int) -> tuple[int, ...]:
        """Agents whose actions ``i`` observes, ascending."""
        return self.neighborhoods[i]

    def input_dim(self, i: int) -> int:
        """Length of agent ``i``'s observation: own signal, own action, neighbors' actions."""
        return len(self.neighborhoods[i]) + 2

    def degrees(self) -> np.ndarray:
        """Undirected degree, counting ``j - i`` once whether one or both directions exist."""
        deg = np.zeros(self.n_agents, dtype=int)
        for a, b in {tuple(sorted(e)) for e in self.edges}:
            deg[a] += 1
            deg[b] += 1
        return deg

    def is_connected(self) -> bool:
        """Weak connectivity by breadth-first traversal."""
        adj = [set() for _ in range(self.n_agents)]
        for j, i in self.edges:
            adj[i].add(j)
            adj[j].add(i)
        seen = {0}
        frontier = [0]
        while frontier:
            nxt = []
            for v in frontier:
                for w in adj[v] - seen:
                    seen.add(w)
                    nxt.append(w)
            frontier = nxt
        return len(seen) == self.n_agents

    def to_text(self) -> str:
        """Plain edge list: header ``topology n_agents [ba_m] [seed]`` then one ``j i`` per line."""
        header = [self.topology, str(self.n_agents)]
        if self.ba_m is not None:
            header.append(str(self.ba_m))
            if self.seed is not None:
                header.append(str(self.seed))
        lines = [" ".join(header)]
        lines.extend(f"{j} {i}" for j, i in sorted(self.edges))
        return "\n".join(lines) + "\n"

    @classmethod
    def from_text(cls, text: str) -> SocialGraph:
        rows = [ln.split() for ln in text.splitlines() if ln.strip() and not ln.startswith("#")]
        if not rows:
            raise ConfigError("empty edge list")
        header = rows[0]
        if len(header) < 2:
            raise ConfigError("edge list header must be 'topology n_agents [ba_m] [seed]'")
        topology, n = header[0], int(header[1])
        ba_m = int(header[2]) if len(header) > 2 else None
        seed = int(header[3]) if len(header) > 3 else None
        edges = set()
        for lineno, row in enumerate(rows[1:], start=2):
            if len(row) != 2:
                raise ConfigError(f"edge list line {lineno}: expected 'j i', got {' '.join(row)!r}")
            edges.add((int(row[0]), int(row[1])))
        return cls(n, frozenset(edges), topology, ba_m, seed)


def _both_ways(pairs) -> frozenset[tuple[int, int]]:
    out = set()
    for a, b in pairs:
        out.add((a, b))
        out.add((b, a))
    return frozenset(out)


def barabasi_albert_pairs(n: int, m: int, rng: np.random.Generator) -> list[tuple[int, int]]:
    """Undirected preferential-attachment edges.

    Nodes ``0..m-1`` form a clique. Every later node picks ``m`` distinct
    existing nodes, one draw at a time, each draw proportional to current
    degree among the nodes not yet picked. When every candidate has degree
    zero (only possible for ``m == 1`` at the first attachment) the draw is
    uniform.
    """
    pairs = [(a, b) for a in range(m) for b in range(a + 1, m)]
    deg = np.zeros(n, dtype=float)
    for a, b in pairs:
        deg[a] += 1
        deg[b] += 1
    for v in range(m, n):
        candidates = list(range(v))
        chosen = []
        for _ in range(m):
            w = deg[candidates]
            total = w.sum()
            p = w / total if total > 0 else np.full(len(candidates), 1.0 / len(candidates))
            k = int(rng.choice(len(candidates), p=p))
            chosen.append(candidates.pop(k))
        for u in chosen:
            pairs.append((u, v))
            deg[u] += 1
            deg[v] += 1
    return pairs


def make_graph(
    topology: str, n_agents: int, ba_m: int | None = None, rng_seed: int | None = None
) -> SocialGraph:
    """Build one of the four supported topologies.

    ``rng_seed`` only matters for ``barabasi_albert``; the same seed always
    yields the same edge set.
    """
    if n_agents < 2:
        raise ConfigError(f"need at least 2 agents, got {n_agents}")
    n = n_agents
    if topology == "complete":
        edges = frozenset((j, i) for i in range(n) for j in range(n) if i != j)
        return SocialGraph(n, edges, topology)
    if topology == "star":
        return SocialGraph(n, _both_ways((0, i) for i in range(1, n)), topology)
    if topology == "directed_ring":
        return SocialGraph(n, frozenset(((i - 1) % n, i) for i in range(n)), topology)
    if topology == "barabasi_albert":
        if ba_m is None or not 1 <= ba_m < n:
            raise ConfigError(f"barabasi_albert needs 1 <= ba_m < n_agents, got ba_m={ba_m}")
        seed = 0 if rng_seed is None else int(rng_seed)
        rng = np.random.Generator(np.random.PCG64(seed))
        edges = _both_ways(barabasi_albert_pairs(n, ba_m, rng))
        return SocialGraph(n, edges, topology, ba_m, seed)
    raise ConfigError(f"unknown topology {topology!r}; expected one of {', '.join(TOPOLOGIES)}")
