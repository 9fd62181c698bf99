"""Config files, snapshots and the ``socdiff`` command line.

A config is a flat ``key = value`` text file. The model keys follow the
parameter names of the reference parameter table (``gamma``, ``T``, ``N``,
``m``, ``sigma2``, ``epsilon``, ``learning_rate``, ``training_episodes``,
``rnn_layers``); everything else is snake_case. Unknown keys, duplicates
and unparseable values are rejected with the offending line number.

Snapshot directory layout::

    config.txt          canonical echo of the config that produced the run
    graph.txt           edge list ("topology n [ba_m] [seed]" header, then "j i" lines)
    params.json         per-agent entries: agent_id, input_dim, hidden_dim, n_layers, file
    params/agent_NNN.f8 flat little-endian float64 parameters (layout in ``neuralnet``)
    training_log.csv    episode, agent_id, mean_loss, probe_A1, probe_AT
    manifest.json       version, seed, timing and sha256 of every file above

The manifest is written last, through a temporary file and an atomic
rename, so a directory without one is an interrupted run.
"""

from __future__ import annotations

import argparse
import csv
import dataclasses
import hashlib
import io
import json
import logging
import os
import sys
import time
from dataclasses import dataclass, field
from datetime import datetime, timezone
from pathlib import Path

from socdiff import __version__
from socdiff.adversary import (
    DEFAULT_BETAS,
    DEFAULT_BIN_EDGES,
    AttackSpec,
    EfficacyTable,
    neighbor_signal_bin_sweep,
    node_sweep,
    signal_bin_sweep,
)
from socdiff.benchmarks import AccuracyCurve, benchmark_full_info, benchmark_private, evaluate
from socdiff.errors import ChecksumMismatch, ConfigError, TrainingDiverged
from socdiff.graph import SocialGraph, make_graph
from socdiff.neuralnet import AgentNet
from socdiff.trainer import TrainerConfig, train

log = logging.getLogger(__name__)

# config-file key -> TrainerConfig field, for the keys named after the parameter table
TABLE_KEYS = {
    "gamma": "gamma",
    "T": "horizon",
    "N": "n_agents",
    "m": "hidden_dim",
    "sigma2": "sigma2",
    "epsilon": "epsilon",
    "learning_rate": "learning_rate",
    "training_episodes": "training_episodes",
    "rnn_layers": "n_layers",
}
_FIELD_TO_KEY = {v: k for k, v in TABLE_KEYS.items()}

@dataclass
class ExperimentConfig:
    trainer: TrainerConfig = field(default_factory=TrainerConfig)
    topology: str = "complete"
    ba_m: int = 3
    graph_seed: int = 7
    eval_episodes: int = 10000
    eval_chunk: int = 5000
    out_dir: str = ""

    @property
    def seed(self) -> int:
        return self.trainer.rng_seed

    def graph(self) -> SocialGraph:
        if self.topology == "barabasi_albert":
            return make_graph(self.topology, self.trainer.n_agents, self.ba_m, self.graph_seed)
        return make_graph(self.topology, self.trainer.n_agents)

    def items(self) -> list[tuple[str, object]]:
        """Every setting as (config-file key, value), in canonical order."""
        out = []
        for f in dataclasses.fields(TrainerConfig):
            key = "seed" if f.name == "rng_seed" else _FIELD_TO_KEY.get(f.name, f.name)
            out.append((key, getattr(self.trainer, f.name)))
        for f in dataclasses.fields(self):
            if f.name != "trainer":
                out.append((f.name, getattr(self, f.name)))
        return out

    def to_text(self) -> str:
        return "".join(f"{key} = {_format(value)}\n" for key, value in self.items())

    @classmethod
    def from_text(cls, text: str, source: str = "<config>") -> ExperimentConfig:
        types = {key: type(value) for key, value in cls().items()}
        seen: dict[str, int] = {}
        values: dict[str, object] = {}
        for lineno, raw in enumerate(text.splitlines(), start=1):
            line = raw.split("#", 1)[0].strip()
            if not line:
                continue
            where = f"{source}:{lineno}"
            if "=" not in line:
                raise ConfigError(f"{where}: expected 'key = value', got {raw.strip()!r}")
            key, value = (part.strip() for part in line.split("=", 1))
            if key not in types:
                raise ConfigError(f"{where}: unknown key {key!r}")
            if key in seen:
                raise ConfigError(f"{where}: duplicate key {key!r} (first set on line {seen[key]})")
            seen[key] = lineno
            try:
                values[key] = _parse(value, types[key])
            except ValueError as exc:
                raise ConfigError(f"{where}: bad value for {key!r}: {exc}") from None
        return cls.from_items(values, source)

    @classmethod
    def from_items(cls, values: dict, source: str = "<config>") -> ExperimentConfig:
        key_to_field = {**TABLE_KEYS, "seed": "rng_seed"}
        trainer_names = {f.name for f in dataclasses.fields(TrainerConfig)}
        trainer_kwargs, own_kwargs = {}, {}
        for key, value in values.items():
            name = key_to_field.get(key, key)
            (trainer_kwargs if name in trainer_names else own_kwargs)[name] = value
        try:
            cfg = cls(TrainerConfig(**trainer_kwargs), **own_kwargs)
            cfg.graph()
        except ConfigError as exc:
            raise ConfigError(f"{source}: {exc}") from None
        if cfg.eval_episodes < 1 or cfg.eval_chunk < 1:
            raise ConfigError(f"{source}: eval_episodes and eval_chunk must be positive")
        return cfg

    def replace(self, **changes) -> ExperimentConfig:
        values = dict(self.items())
        values.update(changes)
        return ExperimentConfig.from_items(values)

def _format(value) -> str:
    if isinstance(value, bool):
        return "true" if value else "false"
    return repr(value) if isinstance(value, float) else str(value)

def _parse(text: str, kind: type):
    if kind is bool:
        low = text.lower()
        if low in ("true", "yes", "1"):
            return True
        if low in ("false", "no", "0"):
            return False
        raise ValueError(f"expected true/false, got {text!r}")
    if kind is int:
        return int(text)
    if kind is float:
        return float(text)
    return text

def load_config(path) -> ExperimentConfig:
    path = Path(path)
    try:
        text = path.read_text()
    except OSError as exc:
        raise ConfigError(f"cannot read config {path}: {exc}") from None
    return ExperimentConfig.from_text(text, str(path))

# ---------------------------------------------------------------- snapshots

@dataclass
class RunManifest:
    version: str
    seed: int
    started_at: str
    wall_clock_seconds: float
    config: dict
    files: dict[str, str]

    def to_json(self) -> str:
        return json.dumps(dataclasses.asdict(self), indent=2, sort_keys=True) + "\n"

@dataclass
class Snapshot:
    config: ExperimentConfig
    graph: SocialGraph
    nets: list[AgentNet]
    manifest: RunManifest | None = None

def sha256_file(path: Path) -> str:
    return hashlib.sha256(path.read_bytes()).hexdigest()

def _atomic_write(path: Path, data: bytes) -> None:
    tmp = path.with_name(path.name + ".tmp")
    tmp.write_bytes(data)
    os.replace(tmp, path)

def save_snapshot(out_dir, config: ExperimentConfig, graph: SocialGraph, nets, log_rows, started_at: str,
                  wall_clock: float) -> Path:
    out = Path(out_dir)
    (out / "params").mkdir(parents=True, exist_ok=True)
    (out / "config.txt").write_text(config.to_text())
    (out / "graph.txt").write_text(graph.to_text())
    entries = []
    for i, net in enumerate(nets):
        name = f"params/agent_{i:03d}.f8"
        (out / name).write_bytes(net.to_bytes())
        entries.append({"agent_id": i, "input_dim": net.input_dim, "hidden_dim": net.hidden_dim,
                        "n_layers": net.n_layers, "file": name})
    (out / "params.json").write_text(json.dumps({"dtype": "<f8", "agents": entries}, indent=2) + "\n")
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(["episode", "agent_id", "mean_loss", "probe_A1", "probe_AT"])
    for row in log_rows:
        writer.writerow([row.episode, row.agent_id, repr(float(row.mean_loss)), repr(float(row.probe_A1)),
                         repr(float(row.probe_AT))])
    (out / "training_log.csv").write_text(buf.getvalue())
    files = ["config.txt", "graph.txt", "params.json", "training_log.csv"] + [e["file"] for e in entries]
    manifest = RunManifest(__version__, config.seed, started_at, round(wall_clock, 3), dict(config.items()),
                           {name: sha256_file(out / name) for name in files})
    _atomic_write(out / "manifest.json", manifest.to_json().encode())
    return out

def load_snapshot(path) -> Snapshot:
    """Load a snapshot, refusing if any file is missing or fails its checksum."""
    root = Path(path)
    try:
        raw = json.loads((root / "manifest.json").read_text())
    except FileNotFoundError:
        raise ChecksumMismatch(f"{root} has no manifest.json (incomplete or not a snapshot)") from None
    manifest = RunManifest(**raw)
    for name, digest in manifest.files.items():
        target = root / name
        if not target.exists():
            raise ChecksumMismatch(f"{target} is listed in the manifest but missing")
        if sha256_file(target) != digest:
            raise ChecksumMismatch(f"{target} does not match its manifest checksum")
    config = ExperimentConfig.from_text((root / "config.txt").read_text(), str(root / "config.txt"))
    graph = SocialGraph.from_text((root / "graph.txt").read_text())
    nets = []
    for entry in json.loads((root / "params.json").read_text())["agents"]:
        data = (root / entry["file"]).read_bytes()
        nets.append(AgentNet.from_bytes(data, entry["input_dim"], entry["hidden_dim"], entry["n_layers"]))
    return Snapshot(config, graph, nets, manifest)

# ---------------------------------------------------------------- pipelines

def run_training(config: ExperimentConfig, out_dir) -> Path:
    started = datetime.now(timezone.utc).isoformat(timespec="seconds")
    t0 = time.perf_counter()
    graph = config.graph()
    out = Path(out_dir)
    state = train(config.trainer, graph, dump_dir=out / "diverged")
    return save_snapshot(out, config, graph, state.live, state.log, started, time.perf_counter() - t0)

def attack_from_flags(beta: float | None, node: int | None, probability: float = 1.0) -> AttackSpec | None:
    if beta is None and node is None:
        return None
    if beta is None:
        raise ConfigError("--attack-node needs --beta")
    if node is None:
        return AttackSpec(beta, "uniform_random", probability=probability)
    return AttackSpec(beta, "fixed_node", node)

def run_eval(snap: Snapshot, episodes: int, seed: int, attack: AttackSpec | None) -> AccuracyCurve:
    cfg = snap.config
    if attack is not None and attack.node is not None and attack.node >= snap.graph.n_agents:
        raise ConfigError(f"attack node {attack.node} out of range for {snap.graph.n_agents} agents")
    return evaluate(snap.nets, snap.graph, episodes, seed, attack=attack, sigma2=cfg.trainer.sigma2,
                    horizon=cfg.trainer.horizon, chunk=cfg.eval_chunk)

def curve_csv(curve: AccuracyCurve) -> str:
    buf = io.StringIO()
    buf.write(f"# A1,{curve.a_private!r}\n# AN,{curve.a_full!r}\n")
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(["t", "mean_accuracy", "stderr", "n_episodes"])
    for t, (m, se) in enumerate(zip(curve.mean, curve.stderr), start=1):
        writer.writerow([t, repr(float(m)), repr(float(se)), curve.n_episodes])
    return buf.getvalue()

def table_csv(tables: list[EfficacyTable]) -> str:
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(tables[0].header())
    for table in tables:
        for rec in table.records():
            writer.writerow([repr(v) if isinstance(v, float) else v for v in rec])
    return buf.getvalue()

def run_sweep(snap: Snapshot, mode: str, betas, episodes: int, seed: int, n_runs: int = 10) -> str:
    cfg = snap.config.trainer
    kw = dict(sigma2=cfg.sigma2, horizon=cfg.horizon, chunk=snap.config.eval_chunk)
    if mode == "nodes":
        tables = [node_sweep(snap.nets, snap.graph, b, episodes, seed, **kw) for b in betas]
    elif mode == "signal":
        tables = [signal_bin_sweep(snap.nets, snap.graph, betas, DEFAULT_BIN_EDGES, episodes, seed,
                                   n_runs=n_runs, **kw)]
    elif mode == "neighbor_signal":
        tables = [neighbor_signal_bin_sweep(snap.nets, snap.graph, betas, DEFAULT_BIN_EDGES, episodes, seed,
                                            n_runs=n_runs, **kw)]
    else:
        raise ConfigError(f"unknown sweep mode {mode!r}")
    return table_csv(tables)

def bench_csv(sigma2: float, n_agents: int) -> str:
    return (f"sigma2,n_agents,A1,AN\n{sigma2!r},{n_agents},{benchmark_private(sigma2)!r},"
            f"{benchmark_full_info(sigma2, n_agents)!r}\n")

# ---------------------------------------------------------------- CLI

def _betas(text: str) -> list[float]:
    try:
        values = [float(v) for v in text.split(",") if v.strip()]
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected comma-separated numbers, got {text!r}") from None
    if not values:
        raise argparse.ArgumentTypeError("empty beta list")
    return values

def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="socdiff", description="Social learning with recurrent Q-learners.")
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    parser.add_argument("-v", "--verbose", action="store_true", help="log training progress")
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p, snapshot: bool):
        if snapshot:
            p.add_argument("snapshot", help="snapshot directory written by 'train'")
        p.add_argument("--config", help="config file (train) or override file applied on top of the snapshot's")
        p.add_argument("--seed", type=int, help="master seed (default: from config)")
        p.add_argument("--out", help="output directory (default: print CSV to stdout)")
        p.add_argument("--episodes", type=int, help="episode count override")

    p = sub.add_parser("train", help="train a population and write a snapshot")
    common(p, snapshot=False)
    p.add_argument("--topology", help="override the config topology")
    p.add_argument("--aware", action="store_true", help="train with the adversary present")
    p.add_argument("--beta", type=float, help="adversary budget during aware training")

    p = sub.add_parser("eval", help="greedy accuracy curve of a snapshot")
    common(p, snapshot=True)
    p.add_argument("--beta", type=float, help="attack budget (uniformly random target unless --attack-node)")
    p.add_argument("--attack-node", type=int, help="attack this node in every episode")

    for name, help_text in (("sweep-nodes", "efficacy of attacking each node"),
                            ("sweep-signal", "efficacy by the target's signal strength"),
                            ("sweep-neighbor-signal", "efficacy by the neighbors' mean signal strength")):
        p = sub.add_parser(name, help=help_text)
        common(p, snapshot=True)
        p.add_argument("--beta", type=_betas, help="comma-separated budgets")
        if name != "sweep-nodes":
            p.add_argument("--runs", type=int, default=10, help="independent evaluation runs (default 10)")

    p = sub.add_parser("bench", help="closed-form benchmarks A1 and AN")
    p.add_argument("--config")
    p.add_argument("--sigma2", type=float)
    p.add_argument("--agents", type=int)
    p.add_argument("--out")
    return parser

def _emit(text: str, out: str | None, filename: str) -> None:
    if out is None:
        sys.stdout.write(text)
        return
    path = Path(out)
    path.mkdir(parents=True, exist_ok=True)
    (path / filename).write_text(text)
    print(path / filename)

def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(message)s")
    try:
        return _dispatch(args)
    except ConfigError as exc:
        print(f"socdiff: configuration error: {exc}", file=sys.stderr)
        return 2
    except ChecksumMismatch as exc:
        print(f"socdiff: refusing to run: {exc}", file=sys.stderr)
        return 3
    except TrainingDiverged as exc:
        print(f"socdiff: training diverged: {exc}", file=sys.stderr)
        return 4

def _dispatch(args) -> int:
    if args.command == "bench":
        cfg = load_config(args.config) if args.config else ExperimentConfig()
        sigma2 = args.sigma2 if args.sigma2 is not None else cfg.trainer.sigma2
        n = args.agents if args.agents is not None else cfg.trainer.n_agents
        if not sigma2 > 0 or n < 1:
            raise ConfigError("sigma2 must be positive and agents >= 1")
        _emit(bench_csv(sigma2, n), args.out, "bench.csv")
        return 0

    if args.command == "train":
        cfg = load_config(args.config) if args.config else ExperimentConfig()
        changes = {}
        if args.seed is not None:
            changes["seed"] = args.seed
        if args.episodes is not None:
            changes["training_episodes"] = args.episodes
        if args.topology is not None:
            changes["topology"] = args.topology
        if args.aware:
            changes["aware_training"] = True
        if args.beta is not None:
            changes["attack_beta"] = args.beta
        out = args.out or cfg.out_dir
        if not out:
            raise ConfigError("train needs --out or an out_dir key in the config")
        if changes:
            cfg = cfg.replace(**changes)
        print(run_training(cfg, out))
        return 0

    snap = load_snapshot(args.snapshot)
    if args.config:
        overrides = load_config(args.config)
        keep = ("eval_episodes", "eval_chunk")
        snap.config = snap.config.replace(**{k: v for k, v in overrides.items() if k in keep})
    seed = args.seed if args.seed is not None else snap.config.seed
    episodes = args.episodes if args.episodes is not None else snap.config.eval_episodes
    if episodes < 1:
        raise ConfigError("--episodes must be positive")

    if args.command == "eval":
        curve = run_eval(snap, episodes, seed, attack_from_flags(args.beta, args.attack_node))
        _emit(curve_csv(curve), args.out, "eval.csv")
        return 0

    mode = {"sweep-nodes": "nodes", "sweep-signal": "signal", "sweep-neighbor-signal": "neighbor_signal"}[args.command]
    betas = args.beta if args.beta is not None else list(DEFAULT_BETAS)
    if any(b < 0 for b in betas):
        raise ConfigError("budgets must be non-negative")
    n_runs = getattr(args, "runs", 10)
    if n_runs < 1:
        raise ConfigError("--runs must be positive")
    _emit(run_sweep(snap, mode, betas, episodes, seed, n_runs), args.out, f"{mode}.csv")
    return 0

if __name__ == "__main__":
    sys.exit(main())
