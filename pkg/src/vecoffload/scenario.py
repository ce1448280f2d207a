"""Service DAGs, edge-node catalogs, and the TOML scenario configuration.

A scenario couples a generative configuration (task mixture, node
frequencies, bandwidth matrix, candidate quotas) with one materialized draw
of the service and the node catalog.  All generation is a pure function of
(config, seed).
"""

import json
import math
import sys
from dataclasses import dataclass, field, asdict
from pathlib import Path

import numpy as np

if sys.version_info >= (3, 11):
    import tomllib as _toml
else:
    import tomli as _toml

from .channel import ApChannel, BsChannel, ap_rate, bs_uplink_rate
from .errors import ConfigError
from .mobility import HeadwayChain

__all__ = [
    "TaskProfile",
    "ServiceDag",
    "EdgeNode",
    "ScenarioConfig",
    "Scenario",
    "KINDS",
    "generate_service",
    "generate_nodes",
    "sample_cpu_freq",
    "validate_dag",
    "build_scenario",
    "load_config",
    "bundled_config_path",
    "scenario_to_json",
    "scenario_from_json",
]

KIND_LOCAL = "LOCAL"
KIND_BS = "BS"
KIND_AP = "AP"
KIND_VN = "VN"
KIND_PSEUDO = "PSEUDO"
KINDS = frozenset({KIND_LOCAL, KIND_BS, KIND_AP, KIND_VN, KIND_PSEUDO})

SCHEMA_VERSION = 1


@dataclass(frozen=True)
class TaskProfile:
    """One task: compute demand (cycles), vehicle-interactive data (bits),
    and per-predecessor dependency data volumes (bits)."""

    id: int
    compute_demand: float
    interactive_data: float
    dep_data_in: dict = field(default_factory=dict)
    parallel_group: int | None = None

    def __post_init__(self):
        if self.compute_demand < 0:
            raise ConfigError(f"task {self.id}: compute_demand must be >= 0")
        if self.interactive_data < 0:
            raise ConfigError(f"task {self.id}: interactive_data must be >= 0")
        for pred, bits in self.dep_data_in.items():
            if bits < 0:
                raise ConfigError(f"task {self.id}: dep data from {pred} must be >= 0")


@dataclass(frozen=True)
class ServiceDag:
    """A service as a concrete DAG of tasks in topological order.

    ``edges`` are (src_id, dst_id, dep_bits) triples and mirror the per-task
    ``dep_data_in`` maps.  ``clamp_count`` reports how many jittered samples
    were clamped to zero during generation.
    """

    tasks: tuple
    edges: tuple
    topology_kind: str = "sequence"
    clamp_count: int = 0

    def __post_init__(self):
        ids = [t.id for t in self.tasks]
        if len(set(ids)) != len(ids):
            raise ConfigError("task ids must be unique within a service")

    @property
    def task_count(self) -> int:
        return len(self.tasks)

    def task_by_id(self, task_id: int) -> TaskProfile:
        for t in self.tasks:
            if t.id == task_id:
                return t
        raise KeyError(task_id)

    def predecessors(self, task_id: int) -> list:
        return [(src, bits) for src, dst, bits in self.edges if dst == task_id]

    def successors(self, task_id: int) -> list:
        return [dst for src, dst, _ in self.edges if src == task_id]


@dataclass(frozen=True)
class EdgeNode:
    """One offloading destination.

    ``access_rate`` is the vehicle-to-node link rate (infinite for the local
    node, whose interactive transfers cost nothing); ``backhaul`` maps peer
    node ids to node-to-node link rates.  Exactly the mobility/channel fields
    matching ``kind`` may be set.
    """

    id: int
    kind: str
    cpu_freq: float
    access_rate: float
    backhaul: dict = field(default_factory=dict)
    bs_channel: BsChannel | None = None
    ap_channel: ApChannel | None = None
    residence_rate: float | None = None
    handoff_delay: float | None = None
    headway: HeadwayChain | None = None

    def __post_init__(self):
        if self.kind not in KINDS:
            raise ConfigError(f"unknown node kind {self.kind!r}")
        if self.cpu_freq <= 0:
            raise ConfigError(f"node {self.id}: cpu_freq must be > 0")
        if self.access_rate <= 0:
            raise ConfigError(f"node {self.id}: access_rate must be > 0")
        wants_coverage = self.kind in (KIND_BS, KIND_AP)
        if wants_coverage:
            if self.residence_rate is None or self.residence_rate < 0:
                raise ConfigError(f"node {self.id}: {self.kind} needs residence_rate >= 0")
            if self.handoff_delay is None or self.handoff_delay < 0:
                raise ConfigError(f"node {self.id}: {self.kind} needs handoff_delay >= 0")
            if self.headway is not None:
                raise ConfigError(f"node {self.id}: {self.kind} cannot carry a headway chain")
        elif self.kind == KIND_VN:
            if self.headway is None:
                raise ConfigError(f"node {self.id}: VN needs a headway chain")
            if self.residence_rate is not None or self.handoff_delay is not None:
                raise ConfigError(f"node {self.id}: VN cannot carry coverage fields")
        else:
            for fname in ("residence_rate", "handoff_delay", "headway", "bs_channel", "ap_channel"):
                if getattr(self, fname) is not None:
                    raise ConfigError(f"node {self.id}: {self.kind} cannot carry {fname}")
        if self.bs_channel is not None and self.kind != KIND_BS:
            raise ConfigError(f"node {self.id}: only BS nodes carry bs_channel")
        if self.ap_channel is not None and self.kind != KIND_AP:
            raise ConfigError(f"node {self.id}: only AP nodes carry ap_channel")


# --------------------------------------------------------------------------
# configuration


@dataclass(frozen=True)
class ServiceSpec:
    task_count: int = 10
    topology: str = "sequence"
    compute_mixture: tuple = ((4, 5000.0), (3, 2000.0), (3, 9000.0))
    compute_std: float = 500.0
    dep_data_mean: float = 1.0e8
    dep_data_std: float = 2.0e7
    interactive_data_mean: float = 1.0e8
    interactive_data_std: float = 1.0e7
    # optional per-task means, cycled over the realized task order; overrides
    # interactive_data_mean when set
    interactive_data_per_task: tuple | None = None
    parallel_width: int = 2
    branch_lengths: tuple = (3, 5)
    branch_prob: float = 0.5
    loop_body: int = 2
    loop_iters: int = 3

    def __post_init__(self):
        if self.task_count < 1:
            raise ConfigError("task_count must be >= 1")
        if self.topology not in ("sequence", "parallel", "selective", "loop"):
            raise ConfigError(f"unknown topology {self.topology!r}")
        if not self.compute_mixture:
            raise ConfigError("compute_mixture must not be empty")
        for count, cycles in self.compute_mixture:
            if count < 1 or cycles < 0:
                raise ConfigError("compute_mixture entries must be (count >= 1, cycles >= 0)")
        for name in ("compute_std", "dep_data_mean", "dep_data_std",
                     "interactive_data_mean", "interactive_data_std"):
            v = getattr(self, name)
            if not math.isfinite(v) or v < 0:
                raise ConfigError(f"{name} must be finite and >= 0, got {v}")
        if self.interactive_data_per_task is not None:
            if not self.interactive_data_per_task:
                raise ConfigError("interactive_data_per_task must not be empty")
            for v in self.interactive_data_per_task:
                if not math.isfinite(v) or v < 0:
                    raise ConfigError("interactive_data_per_task entries must be >= 0")
        if self.parallel_width < 2:
            raise ConfigError("parallel_width must be >= 2")
        if not 0.0 <= self.branch_prob <= 1.0:
            raise ConfigError("branch_prob must lie in [0, 1]")
        if min(self.branch_lengths) < 1 or self.loop_body < 1 or self.loop_iters < 1:
            raise ConfigError("branch/loop sizes must be >= 1")


@dataclass(frozen=True)
class CoverageSpec:
    """BS or AP node group: nominal frequencies plus coverage parameters."""

    cpu_freqs: tuple
    residence_rate: float
    handoff_delay: float
    channel: dict | None = None

    def __post_init__(self):
        for f in self.cpu_freqs:
            if f <= 0:
                raise ConfigError(f"nominal frequency must be > 0, got {f}")
        if self.residence_rate < 0 or self.handoff_delay < 0:
            raise ConfigError("residence_rate and handoff_delay must be >= 0")


@dataclass(frozen=True)
class VnSpec:
    """Neighbor-vehicle node group: nominal frequencies plus headway chain."""

    cpu_freqs: tuple
    z_min: float = 10.0
    z_max: float = 400.0
    unit: float = 10.0
    p: float = 0.3
    q: float = 0.3
    beta: float = 0.2
    comm_range_state: int = 30
    time_step: float = 1.0

    def chain(self) -> HeadwayChain:
        return HeadwayChain(
            z_min=self.z_min, z_max=self.z_max, unit=self.unit,
            p=self.p, q=self.q, beta=self.beta,
            comm_range_state=self.comm_range_state, time_step=self.time_step,
        )


@dataclass(frozen=True)
class BandwidthSpec:
    """Link rates (bits/s) by endpoint kind; VN and the local node both count
    as \"vehicle\"."""

    bs_bs: float = 100.0e6
    bs_ap: float = 100.0e6
    ap_ap: float = 100.0e6
    ap_vehicle: float = 100.0e6
    bs_vehicle: float = 50.0e6
    vehicle_vehicle: float = 300.0e6

    def __post_init__(self):
        for name in ("bs_bs", "bs_ap", "ap_ap", "ap_vehicle", "bs_vehicle", "vehicle_vehicle"):
            if getattr(self, name) <= 0:
                raise ConfigError(f"bandwidth {name} must be > 0")

    def rate(self, kind_a: str, kind_b: str) -> float:
        key = "_".join(sorted((_matrix_kind(kind_a), _matrix_kind(kind_b))))
        return getattr(self, "bs_ap" if key == "ap_bs" else key)


def _matrix_kind(kind: str) -> str:
    if kind in (KIND_VN, KIND_LOCAL):
        return "vehicle"
    return kind.lower()


@dataclass(frozen=True)
class SpeedSpec:
    v_min: float = 10.0
    v_max: float = 30.0
    couples_residence: bool = False
    reference_speed: float = 20.0

    def __post_init__(self):
        if not 0 <= self.v_min <= self.v_max:
            raise ConfigError("need 0 <= v_min <= v_max")
        if self.reference_speed <= 0:
            raise ConfigError("reference_speed must be > 0")


@dataclass(frozen=True)
class TrainSpec:
    workers: int = 4
    gamma: float = 0.99
    entropy_coef: float = 0.01
    lr_actor: float = 1e-3
    lr_critic: float = 1e-3
    hidden_sizes: tuple = (64, 64, 64)
    episodes: int = 80000
    discount_sweep_episodes: int = 60000
    optimizer: str = "sgd"
    grad_clip: float | None = None
    n_step: int | None = None
    rms_epsilon: float = 1e-8

    def __post_init__(self):
        if self.workers < 1:
            raise ConfigError("workers must be >= 1")
        if not 0.0 <= self.gamma <= 1.0:
            raise ConfigError("gamma must lie in [0, 1]")
        if self.entropy_coef < 0:
            raise ConfigError("entropy_coef must be >= 0")
        if self.lr_actor <= 0 or self.lr_critic <= 0:
            raise ConfigError("learning rates must be > 0")
        if self.optimizer not in ("sgd", "rmsprop"):
            raise ConfigError(f"unknown optimizer {self.optimizer!r}")
        if self.rms_epsilon <= 0:
            raise ConfigError("rms_epsilon must be > 0")


@dataclass(frozen=True)
class ScenarioConfig:
    """Everything needed to generate services and node catalogs."""

    service: ServiceSpec = field(default_factory=ServiceSpec)
    local_cpu_freq: float = 100.0
    freq_jitter_std: float = 5.0
    bs: CoverageSpec = field(default_factory=lambda: CoverageSpec(
        cpu_freqs=(560.0, 676.0), residence_rate=0.02, handoff_delay=1.0))
    ap: CoverageSpec = field(default_factory=lambda: CoverageSpec(
        cpu_freqs=(526.0, 430.0), residence_rate=0.1, handoff_delay=1.0))
    vn: VnSpec = field(default_factory=lambda: VnSpec(
        cpu_freqs=(124.0, 120.0, 177.0, 144.0, 165.0, 130.0)))
    bandwidth: BandwidthSpec = field(default_factory=BandwidthSpec)
    quota_bs: int = 2
    quota_ap: int = 2
    quota_vn: int = 6
    speed: SpeedSpec = field(default_factory=SpeedSpec)
    train: TrainSpec = field(default_factory=TrainSpec)
    vn_penalty: str = "as_printed"
    bs_rate_as_printed: bool = False
    objective_as_printed: bool = False
    seed: int = 0

    def __post_init__(self):
        if self.local_cpu_freq <= 0:
            raise ConfigError("local_cpu_freq must be > 0")
        if self.freq_jitter_std < 0:
            raise ConfigError("freq_jitter_std must be >= 0")
        for q in (self.quota_bs, self.quota_ap, self.quota_vn):
            if q < 0:
                raise ConfigError("quotas must be >= 0")
        if self.vn_penalty not in ("as_printed", "failure_prob"):
            raise ConfigError("vn_penalty must be 'as_printed' or 'failure_prob'")

    @property
    def action_size(self) -> int:
        return 1 + self.quota_bs + self.quota_ap + self.quota_vn


@dataclass(frozen=True)
class Scenario:
    """A config together with its materialized node catalog and service draw."""

    config: ScenarioConfig
    nodes: tuple
    service: ServiceDag
    seed: int


# --------------------------------------------------------------------------
# generation


def _mixture_demands(spec: ServiceSpec, n: int) -> list:
    expanded = []
    for count, cycles in spec.compute_mixture:
        expanded.extend([float(cycles)] * int(count))
    return [expanded[i % len(expanded)] for i in range(n)]


def _build_topology(spec: ServiceSpec, rng: np.random.Generator):
    """Return (task ids in topo order, edge pairs, group map, realized kind)."""
    kind = spec.topology
    if kind == "sequence":
        ids = list(range(1, spec.task_count + 1))
        pairs = [(ids[i], ids[i + 1]) for i in range(len(ids) - 1)]
        return ids, pairs, {}, "sequence"
    if kind == "parallel":
        ids, pairs, groups = [1], [], {}
        nxt, group_id = 2, 0
        remaining = spec.task_count - 1
        while remaining > 0:
            # a fork-join block needs width members plus the join task
            if remaining >= spec.parallel_width + 1:
                fork = ids[-1]
                members = list(range(nxt, nxt + spec.parallel_width))
                join = nxt + spec.parallel_width
                for m in members:
                    pairs.append((fork, m))
                    pairs.append((m, join))
                    groups[m] = group_id
                ids.extend(members)
                ids.append(join)
                nxt = join + 1
                group_id += 1
                remaining -= spec.parallel_width + 1
            else:
                pairs.append((ids[-1], nxt))
                ids.append(nxt)
                nxt += 1
                remaining -= 1
        return ids, pairs, groups, "parallel"
    if kind == "selective":
        idx = 0 if rng.random() < spec.branch_prob else 1
        length = int(spec.branch_lengths[idx]) + 2  # entry + branch + exit
        ids = list(range(1, length + 1))
        pairs = [(ids[i], ids[i + 1]) for i in range(len(ids) - 1)]
        return ids, pairs, {}, "selective"
    # loop: entry followed by the body unrolled loop_iters times
    length = 1 + spec.loop_body * spec.loop_iters
    ids = list(range(1, length + 1))
    pairs = [(ids[i], ids[i + 1]) for i in range(len(ids) - 1)]
    return ids, pairs, {}, "loop-unrolled"


def generate_service(config: ScenarioConfig, seed: int) -> ServiceDag:
    """Draw one concrete service DAG.

    Compute demands come from the configured mixture plus normal jitter;
    interactive and dependency data volumes are normal draws.  Negative
    samples are clamped to zero and counted.  Deterministic given
    (config, seed).
    """
    spec = config.service
    rng = np.random.default_rng(np.random.SeedSequence([0x5E57, seed & 0xFFFFFFFF]))
    ids, pairs, groups, realized = _build_topology(spec, rng)
    n = len(ids)

    clamps = 0

    def draw(mean, std):
        nonlocal clamps
        value = mean if std == 0 else float(rng.normal(mean, std))
        if value < 0:
            clamps += 1
            return 0.0
        return value

    demands = [draw(m, spec.compute_std) for m in _mixture_demands(spec, n)]
    if spec.interactive_data_per_task is not None:
        means = [spec.interactive_data_per_task[i % len(spec.interactive_data_per_task)]
                 for i in range(n)]
    else:
        means = [spec.interactive_data_mean] * n
    interactive = [draw(m, spec.interactive_data_std) for m in means]
    edge_bits = {pair: draw(spec.dep_data_mean, spec.dep_data_std) for pair in pairs}

    tasks = []
    for pos, tid in enumerate(ids):
        deps = {src: edge_bits[(src, dst)] for src, dst in pairs if dst == tid}
        tasks.append(TaskProfile(
            id=tid,
            compute_demand=demands[pos],
            interactive_data=interactive[pos],
            dep_data_in=deps,
            parallel_group=groups.get(tid),
        ))
    edges = tuple((src, dst, edge_bits[(src, dst)]) for src, dst in pairs)
    return ServiceDag(tasks=tuple(tasks), edges=edges,
                      topology_kind=realized, clamp_count=clamps)


def generate_nodes(config: ScenarioConfig, seed: int = 0) -> tuple:
    """Materialize the node catalog: local node, then BS, AP, VN groups.

    The catalog itself is deterministic (nominal frequencies are configured,
    per-task frequency jitter is sampled at use time by the environment);
    ``seed`` is accepted for interface symmetry with the service generator.
    """
    del seed
    bw = config.bandwidth
    nodes = []
    nodes.append(dict(id=0, kind=KIND_LOCAL, cpu_freq=config.local_cpu_freq,
                      access_rate=math.inf))
    for f in config.bs.cpu_freqs:
        ch = None
        if config.bs.channel:
            args = dict(config.bs.channel)
            if "interferers" in args:
                args["interferers"] = tuple(tuple(pair) for pair in args["interferers"])
            ch = BsChannel(**args)
        rate = (bs_uplink_rate(ch, as_printed=config.bs_rate_as_printed)
                if ch else bw.rate(KIND_BS, KIND_LOCAL))
        nodes.append(dict(id=len(nodes), kind=KIND_BS, cpu_freq=float(f),
                          access_rate=rate, bs_channel=ch,
                          residence_rate=config.bs.residence_rate,
                          handoff_delay=config.bs.handoff_delay))
    for f in config.ap.cpu_freqs:
        ch = ApChannel(**config.ap.channel) if config.ap.channel else None
        rate = ap_rate(ch) if ch else bw.rate(KIND_AP, KIND_LOCAL)
        nodes.append(dict(id=len(nodes), kind=KIND_AP, cpu_freq=float(f),
                          access_rate=rate, ap_channel=ch,
                          residence_rate=config.ap.residence_rate,
                          handoff_delay=config.ap.handoff_delay))
    chain = config.vn.chain() if config.vn.cpu_freqs else None
    for f in config.vn.cpu_freqs:
        nodes.append(dict(id=len(nodes), kind=KIND_VN, cpu_freq=float(f),
                          access_rate=bw.rate(KIND_VN, KIND_LOCAL), headway=chain))
    # the link between a node and the vehicle is that node's access link; only
    # node-to-node links come from the bandwidth matrix
    def link(a: dict, b: dict) -> float:
        if a["id"] == 0:
            return b["access_rate"]
        if b["id"] == 0:
            return a["access_rate"]
        return bw.rate(a["kind"], b["kind"])

    for spec in nodes:
        spec["backhaul"] = {
            other["id"]: link(spec, other)
            for other in nodes if other["id"] != spec["id"]
        }
    return tuple(EdgeNode(**spec) for spec in nodes)


def sample_cpu_freq(nominal: float, std: float, rng: np.random.Generator) -> float:
    """One per-task-use frequency draw around the nominal value.

    Nonpositive draws are rejected and resampled; a frequency at or below
    zero has no physical reading.
    """
    if std == 0:
        return float(nominal)
    for _ in range(100):
        f = float(rng.normal(nominal, std))
        if f > 0:
            return f
    raise ConfigError(
        f"frequency jitter std {std} rejects every draw around {nominal}"
    )


def validate_dag(dag: ServiceDag) -> list:
    """Diagnostic structural check; returns a list of violation strings."""
    violations = []
    ids = [t.id for t in dag.tasks]
    known = set(ids)
    if len(known) != len(ids):
        violations.append("duplicate task ids")
    for src, dst, bits in dag.edges:
        if src not in known or dst not in known:
            violations.append(f"edge ({src}, {dst}) references unknown task")
        if bits < 0:
            violations.append(f"edge ({src}, {dst}) carries negative data")

    preds = {tid: set() for tid in known}
    succs = {tid: set() for tid in known}
    for src, dst, _ in dag.edges:
        if src in known and dst in known:
            preds[dst].add(src)
            succs[src].add(dst)

    # cycle check via Kahn's algorithm
    degree = {tid: len(preds[tid]) for tid in known}
    queue = [tid for tid in ids if degree[tid] == 0]
    seen = 0
    while queue:
        tid = queue.pop()
        seen += 1
        for nxt in succs[tid]:
            degree[nxt] -= 1
            if degree[nxt] == 0:
                queue.append(nxt)
    if seen != len(known):
        violations.append("dependency cycle detected")
        return violations

    roots = [tid for tid in ids if not preds[tid]]
    if len(roots) > 1:
        violations.append(f"multiple entry tasks: {sorted(roots)}")
    if roots:
        reachable = set(roots)
        stack = list(roots)
        while stack:
            for nxt in succs[stack.pop()]:
                if nxt not in reachable:
                    reachable.add(nxt)
                    stack.append(nxt)
        missing = known - reachable
        if missing:
            violations.append(f"tasks unreachable from entry: {sorted(missing)}")

    by_group = {}
    for t in dag.tasks:
        if t.parallel_group is not None:
            by_group.setdefault(t.parallel_group, []).append(t.id)
    for group, members in by_group.items():
        pred_sets = {frozenset(preds[m]) for m in members}
        succ_sets = {frozenset(succs[m]) for m in members}
        if len(pred_sets) > 1 or len(succ_sets) > 1:
            violations.append(
                f"parallel group {group} members disagree on predecessors/successors"
            )
    return violations


def build_scenario(config: ScenarioConfig, seed: int | None = None) -> Scenario:
    """Materialize a scenario: node catalog plus the service draw at ``seed``."""
    if seed is None:
        seed = config.seed
    service = generate_service(config, seed)
    bad = validate_dag(service)
    if bad:
        raise ConfigError(f"generated service failed validation: {bad}")
    return Scenario(config=config, nodes=generate_nodes(config, seed),
                    service=service, seed=seed)


# --------------------------------------------------------------------------
# TOML configuration files


def bundled_config_path(name: str) -> Path:
    """Path of a configuration bundled with the package (e.g. 'reference.toml')."""
    path = Path(__file__).parent / "data" / name
    if not path.exists():
        raise ConfigError(f"no bundled configuration named {name!r}")
    return path


def load_config(path) -> ScenarioConfig:
    """Load a scenario configuration from TOML.

    ``path`` may be a filesystem path or the name of a bundled configuration.
    """
    p = Path(path)
    if not p.exists():
        p = bundled_config_path(str(path))
    try:
        with open(p, "rb") as fh:
            raw = _toml.load(fh)
    except _toml.TOMLDecodeError as exc:
        raise ConfigError(f"{p}: {exc}") from exc
    return config_from_dict(raw, where=str(p))


def _take(section: dict, where: str, **casts):
    out = {}
    for key, cast in casts.items():
        if key in section:
            raw = section.pop(key)
            try:
                out[key] = cast(raw)
            except (TypeError, ValueError) as exc:
                raise ConfigError(f"{where}: bad value for {key!r}: {exc}") from exc
    if section:
        raise ConfigError(f"{where}: unknown keys {sorted(section)}")
    return out


def _tuple_of(cast):
    return lambda values: tuple(cast(v) for v in values)


def config_from_dict(raw: dict, where: str = "<config>") -> ScenarioConfig:
    raw = dict(raw)
    raw.pop("schema_version", None)
    kwargs = {}

    if "service" in raw:
        sect = dict(raw.pop("service"))
        fields = _take(
            sect, f"{where}:[service]",
            task_count=int, topology=str,
            compute_mixture=lambda m: tuple((int(c), float(v)) for c, v in m),
            compute_std=float, dep_data_mean=float, dep_data_std=float,
            interactive_data_mean=float, interactive_data_std=float,
            interactive_data_per_task=_tuple_of(float),
            parallel_width=int, branch_lengths=_tuple_of(int),
            branch_prob=float, loop_body=int, loop_iters=int,
        )
        kwargs["service"] = ServiceSpec(**fields)

    if "nodes" in raw:
        sect = dict(raw.pop("nodes"))
        if "local" in sect:
            local = _take(dict(sect.pop("local")), f"{where}:[nodes.local]", cpu_freq=float)
            kwargs["local_cpu_freq"] = local.get("cpu_freq", 100.0)
        for group in ("bs", "ap"):
            if group in sect:
                g = dict(sect.pop(group))
                channel = g.pop("channel", None)
                fields = _take(
                    g, f"{where}:[nodes.{group}]",
                    cpu_freqs=_tuple_of(float), residence_rate=float, handoff_delay=float,
                )
                fields["channel"] = dict(channel) if channel else None
                kwargs[group] = CoverageSpec(**fields)
        if "vn" in sect:
            g = dict(sect.pop("vn"))
            fields = _take(
                g, f"{where}:[nodes.vn]",
                cpu_freqs=_tuple_of(float), z_min=float, z_max=float, unit=float,
                p=float, q=float, beta=float, comm_range_state=int, time_step=float,
            )
            kwargs["vn"] = VnSpec(**fields)
        rest = _take(sect, f"{where}:[nodes]", freq_jitter_std=float)
        kwargs.update(rest)

    if "bandwidth" in raw:
        sect = dict(raw.pop("bandwidth"))
        fields = _take(sect, f"{where}:[bandwidth]",
                       bs_bs=float, bs_ap=float, ap_ap=float,
                       ap_vehicle=float, bs_vehicle=float, vehicle_vehicle=float)
        kwargs["bandwidth"] = BandwidthSpec(**fields)

    if "quotas" in raw:
        sect = dict(raw.pop("quotas"))
        fields = _take(sect, f"{where}:[quotas]", bs=int, ap=int, vn=int)
        kwargs.update({f"quota_{k}": v for k, v in fields.items()})

    if "speed" in raw:
        sect = dict(raw.pop("speed"))
        fields = _take(sect, f"{where}:[speed]",
                       v_min=float, v_max=float,
                       couples_residence=bool, reference_speed=float)
        kwargs["speed"] = SpeedSpec(**fields)

    if "train" in raw:
        sect = dict(raw.pop("train"))
        fields = _take(sect, f"{where}:[train]",
                       workers=int, gamma=float, entropy_coef=float,
                       lr_actor=float, lr_critic=float,
                       hidden_sizes=_tuple_of(int), episodes=int,
                       discount_sweep_episodes=int, optimizer=str,
                       grad_clip=float, n_step=int, rms_epsilon=float)
        kwargs["train"] = TrainSpec(**fields)

    if "model" in raw:
        sect = dict(raw.pop("model"))
        fields = _take(sect, f"{where}:[model]",
                       vn_penalty=str, bs_rate_as_printed=bool,
                       objective_as_printed=bool)
        kwargs.update(fields)

    top = _take(raw, where, seed=int)
    kwargs.update(top)
    return ScenarioConfig(**kwargs)


# --------------------------------------------------------------------------
# materialized scenario files (JSON)


def _chain_to_dict(chain: HeadwayChain | None):
    if chain is None:
        return None
    return {
        "z_min": chain.z_min, "z_max": chain.z_max, "unit": chain.unit,
        "p": chain.p, "q": chain.q, "beta": chain.beta,
        "comm_range_state": chain.comm_range_state, "time_step": chain.time_step,
        "initial_dist": list(chain.initial_dist),
    }


def _config_to_dict(config: ScenarioConfig) -> dict:
    d = asdict(config)
    return d


def _config_from_plain(d: dict) -> ScenarioConfig:
    d = dict(d)
    service = dict(d.pop("service"))
    service["compute_mixture"] = tuple(tuple(e) for e in service["compute_mixture"])
    service["branch_lengths"] = tuple(service["branch_lengths"])
    if service.get("interactive_data_per_task") is not None:
        service["interactive_data_per_task"] = tuple(service["interactive_data_per_task"])
    bs = dict(d.pop("bs"))
    bs["cpu_freqs"] = tuple(bs["cpu_freqs"])
    ap = dict(d.pop("ap"))
    ap["cpu_freqs"] = tuple(ap["cpu_freqs"])
    vn = dict(d.pop("vn"))
    vn["cpu_freqs"] = tuple(vn["cpu_freqs"])
    train = dict(d.pop("train"))
    train["hidden_sizes"] = tuple(train["hidden_sizes"])
    return ScenarioConfig(
        service=ServiceSpec(**service), bs=CoverageSpec(**bs), ap=CoverageSpec(**ap),
        vn=VnSpec(**vn), bandwidth=BandwidthSpec(**d.pop("bandwidth")),
        speed=SpeedSpec(**d.pop("speed")), train=TrainSpec(**train),
        **d,
    )


def scenario_to_json(scenario: Scenario) -> str:
    """Serialize a materialized scenario; byte-stable for identical inputs."""
    nodes = []
    for node in scenario.nodes:
        nodes.append({
            "id": node.id, "kind": node.kind, "cpu_freq": node.cpu_freq,
            "access_rate": "inf" if math.isinf(node.access_rate) else node.access_rate,
            "backhaul": {str(k): v for k, v in sorted(node.backhaul.items())},
            "residence_rate": node.residence_rate,
            "handoff_delay": node.handoff_delay,
            "headway": _chain_to_dict(node.headway),
        })
    service = {
        "topology_kind": scenario.service.topology_kind,
        "clamp_count": scenario.service.clamp_count,
        "tasks": [
            {
                "id": t.id, "compute_demand": t.compute_demand,
                "interactive_data": t.interactive_data,
                "dep_data_in": {str(k): v for k, v in sorted(t.dep_data_in.items())},
                "parallel_group": t.parallel_group,
            }
            for t in scenario.service.tasks
        ],
        "edges": [list(e) for e in scenario.service.edges],
    }
    doc = {
        "schema_version": SCHEMA_VERSION,
        "seed": scenario.seed,
        "config": _config_to_dict(scenario.config),
        "nodes": nodes,
        "service": service,
    }
    return json.dumps(doc, sort_keys=True, indent=2) + "\n"


def scenario_from_json(text: str) -> Scenario:
    doc = json.loads(text)
    if doc.get("schema_version") != SCHEMA_VERSION:
        raise ConfigError(
            f"unsupported scenario schema {doc.get('schema_version')!r}"
        )
    config = _config_from_plain(doc["config"])
    # the catalog and service are regenerated from config + seed, then checked
    scenario = build_scenario(config, doc["seed"])
    stored = doc["service"]["tasks"]
    if len(stored) != scenario.service.task_count:
        raise ConfigError("scenario file does not match its own config/seed")
    return scenario
