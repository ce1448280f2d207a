"""Episodic decision environment for placing service tasks on edge nodes.

One episode walks a service DAG task by task.  At each step the agent picks a
candidate slot (local node, base stations, access points, neighbor vehicles,
plus pseudo padding), the environment prices that placement and emits the
negative adjusted delay as the reward.  Delay pricing has two layers:

* raw delay: compute time on the chosen node, interactive transfer over the
  node's access link, and dependency transfers from the predecessors' nodes;
* adjusted delay: raw plus a mobility penalty.  Coverage nodes pay the
  expected number of handoffs times the per-handoff delay; neighbor vehicles
  pay a usability-weighted local recompute cost; the local node pays nothing.

Within a parallel group only the slowest member counts toward the service
delay, so the trace exposes longest-member indicators and masked rewards for
learning next to the per-step raw rewards.
"""

import csv
import math
from dataclasses import dataclass, field

import numpy as np

from .errors import ConfigError, DomainError, LifecycleError, PlacementError
from .mobility import UsabilityTable
from .scenario import (
    KIND_AP,
    KIND_BS,
    KIND_LOCAL,
    KIND_PSEUDO,
    KIND_VN,
    EdgeNode,
    Scenario,
    ServiceDag,
    TaskProfile,
    sample_cpu_freq,
)

__all__ = [
    "TRACE_COLUMNS",
    "Action",
    "EnvNorms",
    "EnvState",
    "EpisodeTrace",
    "OffloadEnv",
    "PseudoSlot",
    "StepRecord",
    "StepOutcome",
    "adjusted_task_delay",
    "candidate_set",
    "encode_state",
    "longest_flags",
    "raw_task_delay",
    "service_delay",
    "write_trace_csv",
]

# one-hot positions for remote node kinds; the local node encodes as all
# zeros and a pseudo slot reuses the position of the kind it pads
_ONE_HOT = {KIND_BS: 0, KIND_AP: 1, KIND_VN: 2}

# sentinel features for a pseudo slot: no compute power, no bandwidth, one
# expected handoff, zero chance the link survives
_PSEUDO_FEATURES = (0.0, 0.0, 1.0, 0.0)

# multiple of the worst real candidate's adjusted delay charged for picking a
# pseudo slot; keeps pseudo actions legal but always dominated
PSEUDO_DELAY_FACTOR = 10.0

PSEUDO_NODE_ID = -1

TRACE_COLUMNS = (
    "episode",
    "step",
    "action_slot",
    "node_id",
    "node_kind",
    "raw_delay_s",
    "adjusted_delay_s",
    "reward",
    "service_delay_s",
)


# --------------------------------------------------------------------------
# delay pricing


def raw_task_delay(task: TaskProfile, node: EdgeNode, pred_nodes: dict,
                   eff_freq: float | None = None) -> float:
    """Delay of running ``task`` on ``node``: compute + interactive transfer
    + dependency transfers.

    ``pred_nodes`` maps predecessor task id to the node that ran it; every id
    in ``task.dep_data_in`` must be present.  ``eff_freq`` overrides the
    node's nominal frequency with a jittered per-use draw.  Transfers between
    co-located tasks are free, as is interactive data on the local node (its
    access rate is infinite).
    """
    freq = node.cpu_freq if eff_freq is None else eff_freq
    if freq <= 0 or not math.isfinite(freq):
        raise PlacementError(f"node {node.id}: unusable frequency {freq}")
    delay = task.compute_demand / freq
    if task.interactive_data > 0:
        if node.access_rate <= 0:
            raise PlacementError(
                f"node {node.id}: no access bandwidth for interactive data")
        delay += task.interactive_data / node.access_rate
    for pred_id, bits in task.dep_data_in.items():
        pred = pred_nodes.get(pred_id)
        if pred is None:
            raise PlacementError(
                f"task {task.id}: predecessor {pred_id} has no placement")
        if bits == 0 or pred.id == node.id:
            continue
        link = node.backhaul.get(pred.id)
        if link is None or link <= 0:
            raise PlacementError(
                f"no usable link between nodes {pred.id} and {node.id}")
        delay += bits / link
    return delay


def adjusted_task_delay(raw: float, task: TaskProfile, node: EdgeNode,
                        pred_nodes: dict, *, local_node: EdgeNode,
                        usability: float | None = None,
                        vn_penalty: str = "as_printed",
                        residence_scale: float = 1.0) -> float:
    """Raw delay plus the mobility penalty for the node's kind.

    Coverage nodes (BS/AP) add the per-handoff delay times the expected
    handoff count, which is the residence rate (optionally scaled with the
    vehicle speed) times the execution window.  Neighbor vehicles add the
    cost of redoing the task locally, weighted by the link usability as
    printed, or by the failure probability (1 - usability) when
    ``vn_penalty="failure_prob"``.  The local node has no penalty.
    """
    if not math.isfinite(raw) or raw < 0:
        raise DomainError(f"raw delay must be finite and >= 0, got {raw}")
    if vn_penalty not in ("as_printed", "failure_prob"):
        raise ConfigError(f"unknown vn_penalty {vn_penalty!r}")
    if node.kind in (KIND_BS, KIND_AP):
        if node.residence_rate is None or node.handoff_delay is None:
            raise DomainError(f"node {node.id}: missing coverage data")
        handoffs = node.residence_rate * residence_scale * raw
        return raw + node.handoff_delay * handoffs
    if node.kind == KIND_VN:
        if usability is None:
            raise DomainError(f"node {node.id}: missing usability")
        recompute = task.compute_demand / local_node.cpu_freq
        for pred_id, bits in task.dep_data_in.items():
            pred = pred_nodes[pred_id]
            if bits == 0 or pred.id == local_node.id:
                continue
            link = local_node.backhaul.get(pred.id)
            if link is None or link <= 0:
                raise PlacementError(
                    f"no usable link between nodes {pred.id} and {local_node.id}")
            recompute += bits / link
        weight = usability if vn_penalty == "as_printed" else 1.0 - usability
        return raw + weight * recompute
    if node.kind == KIND_LOCAL:
        return raw
    raise DomainError(f"cannot price node kind {node.kind!r}")


def longest_flags(adjusted: dict, dag: ServiceDag) -> dict:
    """Per-task indicator: 1.0 if the task counts toward the service delay.

    Everything outside a parallel group counts.  Within a group only the
    slowest member does; ties go to the lowest task id.
    """
    flags = {}
    groups = {}
    for task in dag.tasks:
        if task.id not in adjusted:
            raise DomainError(f"task {task.id}: missing adjusted delay")
        if task.parallel_group is None:
            flags[task.id] = 1.0
        else:
            groups.setdefault(task.parallel_group, []).append(task.id)
    for members in groups.values():
        best = max(members, key=lambda tid: (adjusted[tid], -tid))
        for tid in members:
            flags[tid] = 1.0 if tid == best else 0.0
    return flags


def service_delay(adjusted: dict, dag: ServiceDag) -> float:
    """Total service delay: adjusted delays summed with parallel groups
    collapsed to their slowest member."""
    flags = longest_flags(adjusted, dag)
    return sum(flags[tid] * adjusted[tid] for tid in flags)


# --------------------------------------------------------------------------
# candidate slots


@dataclass(frozen=True)
class PseudoSlot:
    """Padding slot standing in for a missing node of ``kind``."""

    kind: str

    def __post_init__(self):
        if self.kind not in (KIND_BS, KIND_AP, KIND_VN):
            raise ConfigError(f"pseudo slots only pad remote kinds, got {self.kind!r}")


def candidate_set(nodes, quotas: tuple) -> tuple:
    """Fixed action slots: local, then per remote kind the quota's worth of
    nodes sorted by nominal frequency descending, padded with pseudo slots.

    ``quotas`` is (bs, ap, vn).  The slot order is stable for a given node
    catalog, so the action space never changes shape mid-experiment.
    """
    by_kind = {KIND_BS: [], KIND_AP: [], KIND_VN: []}
    local = None
    for node in nodes:
        if node.kind == KIND_LOCAL:
            if local is not None:
                raise ConfigError("multiple local nodes in catalog")
            local = node
        elif node.kind in by_kind:
            by_kind[node.kind].append(node)
        else:
            raise ConfigError(f"cannot slot node kind {node.kind!r}")
    if local is None:
        raise ConfigError("catalog has no local node")
    slots = [local]
    for kind, quota in zip((KIND_BS, KIND_AP, KIND_VN), quotas):
        ranked = sorted(by_kind[kind], key=lambda n: -n.cpu_freq)[:quota]
        slots.extend(ranked)
        slots.extend(PseudoSlot(kind) for _ in range(quota - len(ranked)))
    return tuple(slots)


# --------------------------------------------------------------------------
# state


@dataclass(frozen=True)
class EnvNorms:
    """Per-feature scale constants for the flat state encoding."""

    compute: float
    interactive: float
    dep: float
    freq: float
    bandwidth: float
    speed: float
    handoff: float = 1.0

    def __post_init__(self):
        for name in ("compute", "interactive", "dep", "freq", "bandwidth",
                     "speed", "handoff"):
            v = getattr(self, name)
            if not math.isfinite(v) or v <= 0:
                raise ConfigError(f"norm {name} must be finite and > 0, got {v}")

    @staticmethod
    def from_scenario(scenario: Scenario) -> "EnvNorms":
        def guard(x):
            return x if math.isfinite(x) and x > 0 else 1.0

        cfg = scenario.config
        svc = cfg.service
        interactive = max((svc.interactive_data_mean,)
                          + (svc.interactive_data_per_task or ()))
        rates = [r for n in scenario.nodes
                 for r in (n.access_rate, *n.backhaul.values())
                 if math.isfinite(r)]
        return EnvNorms(
            compute=guard(max(cycles for _, cycles in svc.compute_mixture)),
            interactive=guard(interactive),
            dep=guard(svc.dep_data_mean),
            freq=guard(max(n.cpu_freq for n in scenario.nodes)),
            bandwidth=guard(max(rates, default=1.0)),
            speed=guard(cfg.speed.v_max),
        )


@dataclass(frozen=True)
class EnvState:
    """Observation for one decision step.

    ``task_features`` is (compute cycles, interactive bits, total dependency
    bits in).  ``node_features`` holds one (kind, freq, bandwidth, expected
    handoffs, usability) tuple per slot; values are already finite (the local
    slot reports the catalog's best finite rate instead of its infinite
    access rate, pseudo slots report fixed worst-case values).
    """

    task_features: tuple
    node_features: tuple
    speed: float
    step_index: int


def encode_state(state: EnvState, norms: EnvNorms) -> np.ndarray:
    """Flatten to the fixed layout
    [task(3) | per slot (one-hot(3), f, b, handoffs, usability) | speed]."""
    parts = [
        state.task_features[0] / norms.compute,
        state.task_features[1] / norms.interactive,
        state.task_features[2] / norms.dep,
    ]
    for kind, freq, bandwidth, handoffs, usability in state.node_features:
        hot = [0.0, 0.0, 0.0]
        if kind != KIND_LOCAL:
            hot[_ONE_HOT[kind]] = 1.0
        parts.extend(hot)
        parts.append(freq / norms.freq)
        parts.append(bandwidth / norms.bandwidth)
        parts.append(handoffs / norms.handoff)
        parts.append(usability)
    parts.append(state.speed / norms.speed)
    vec = np.asarray(parts, dtype=np.float64)
    if not np.all(np.isfinite(vec)):
        raise DomainError("state encoding produced non-finite features")
    return vec


# --------------------------------------------------------------------------
# episode bookkeeping


@dataclass(frozen=True)
class Action:
    slot: int


@dataclass(frozen=True)
class StepOutcome:
    reward: float
    raw_delay: float
    adjusted_delay: float
    next_state: EnvState | None
    placement: int

    @property
    def terminal(self) -> bool:
        return self.next_state is None


@dataclass(frozen=True)
class StepRecord:
    step: int
    task_id: int
    state: np.ndarray
    action_slot: int
    node_id: int
    node_kind: str
    raw_delay: float
    adjusted_delay: float
    reward: float


@dataclass(frozen=True)
class EpisodeTrace:
    """Complete episode record with longest-member indicators resolved."""

    records: tuple
    flags: tuple
    service_delay: float

    def masked_rewards(self) -> list:
        """Rewards with non-longest parallel siblings zeroed; this is the
        sequence the learner trains on."""
        return [f * r.reward for f, r in zip(self.flags, self.records)]


@dataclass
class _PendingGroup:
    group: int
    remaining: int
    steps: list = field(default_factory=list)


def write_trace_csv(path, traces, first_episode: int = 0) -> None:
    """Write episode traces as one flat CSV, schema ``TRACE_COLUMNS``."""
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(TRACE_COLUMNS)
        for offset, trace in enumerate(traces):
            episode = first_episode + offset
            for rec in trace.records:
                writer.writerow([
                    episode, rec.step, rec.action_slot, rec.node_id,
                    rec.node_kind, repr(rec.raw_delay),
                    repr(rec.adjusted_delay), repr(rec.reward),
                    repr(trace.service_delay),
                ])


# --------------------------------------------------------------------------
# the environment


class OffloadEnv:
    """Steps one service episode at a time against a fixed scenario.

    All randomness (vehicle speed, per-use frequency jitter) is drawn from a
    generator seeded at :meth:`reset`, with a fixed draw order independent of
    the actions taken, so an episode is fully determined by (scenario, seed,
    action sequence).  Instances are single-threaded; concurrent workers each
    own one.
    """

    def __init__(self, scenario: Scenario):
        self.scenario = scenario
        cfg = scenario.config
        self.slots = candidate_set(
            scenario.nodes, (cfg.quota_bs, cfg.quota_ap, cfg.quota_vn))
        self.norms = EnvNorms.from_scenario(scenario)
        self._local = self.slots[0]
        self._tasks = scenario.service.tasks
        # VN nodes in one catalog share a headway chain; share its cache too
        tables = {}
        self._usability = {}
        for slot in self.slots:
            if isinstance(slot, EdgeNode) and slot.kind == KIND_VN:
                key = id(slot.headway)
                if key not in tables:
                    tables[key] = UsabilityTable(slot.headway)
                self._usability[slot.id] = tables[key]
        self._rng = None
        self._state = None
        self._records = None

    @property
    def action_size(self) -> int:
        return len(self.slots)

    @property
    def task_count(self) -> int:
        return len(self._tasks)

    @property
    def state(self) -> EnvState | None:
        return self._state

    @property
    def current_task(self) -> TaskProfile:
        if self._state is None:
            raise LifecycleError("no active episode")
        return self._tasks[self._state.step_index - 1]

    def reset(self, seed: int) -> EnvState:
        entropy = [0x0FF10AD, self.scenario.seed & 0xFFFFFFFF, seed & 0xFFFFFFFF]
        self._rng = np.random.default_rng(np.random.SeedSequence(entropy))
        spec = self.scenario.config.speed
        self._speed = float(self._rng.uniform(spec.v_min, spec.v_max))
        self._residence_scale = (self._speed / spec.reference_speed
                                 if spec.couples_residence else 1.0)
        self._placements = {}
        self._records = []
        self._flags = {}
        self._pending = None
        self._state = self._build_state(1)
        return self._state

    def encode(self, state: EnvState | None = None) -> np.ndarray:
        target = self._state if state is None else state
        if target is None:
            raise LifecycleError("no state to encode")
        return encode_state(target, self.norms)

    def slot_delays(self) -> np.ndarray:
        """Adjusted delay of placing the current task on each slot (the
        greedy baseline's oracle).  Pseudo slots carry their sentinel."""
        if self._state is None:
            raise LifecycleError("no active episode")
        return self._slot_adjusted.copy()

    def step(self, action) -> StepOutcome:
        if self._state is None:
            raise LifecycleError("step before reset or after terminal state")
        slot = action.slot if isinstance(action, Action) else int(action)
        if not 0 <= slot < len(self.slots):
            raise DomainError(f"action slot {slot} outside 0..{len(self.slots) - 1}")
        task = self.current_task
        chosen = self.slots[slot]
        if isinstance(chosen, PseudoSlot):
            raw = adjusted = self._pseudo_delay
            node_id, node_kind = PSEUDO_NODE_ID, KIND_PSEUDO
            # the fictitious node cannot hold data; successors fetch the
            # dependency from the vehicle as if the task had run locally
            self._placements[task.id] = self._local
        else:
            raw = float(self._slot_raw[slot])
            adjusted = float(self._slot_adjusted[slot])
            node_id, node_kind = chosen.id, chosen.kind
            self._placements[task.id] = chosen
        reward = -adjusted
        step_index = self._state.step_index
        self._records.append(StepRecord(
            step=step_index, task_id=task.id, state=self.encode(),
            action_slot=slot, node_id=node_id, node_kind=node_kind,
            raw_delay=float(raw), adjusted_delay=float(adjusted),
            reward=float(reward),
        ))
        self._resolve_flags(task, adjusted)
        if step_index == len(self._tasks):
            self._state = None
            return StepOutcome(reward=reward, raw_delay=raw,
                               adjusted_delay=adjusted, next_state=None,
                               placement=node_id)
        self._state = self._build_state(step_index + 1)
        return StepOutcome(reward=reward, raw_delay=raw,
                           adjusted_delay=adjusted, next_state=self._state,
                           placement=node_id)

    def trace(self) -> EpisodeTrace:
        if self._records is None or self._state is not None:
            raise LifecycleError("trace available only after a finished episode")
        flags = tuple(self._flags[rec.task_id] for rec in self._records)
        total = sum(f * rec.adjusted_delay
                    for f, rec in zip(flags, self._records))
        return EpisodeTrace(records=tuple(self._records), flags=flags,
                            service_delay=total)

    # -- internals --------------------------------------------------------

    def _resolve_flags(self, task: TaskProfile, adjusted: float):
        if task.parallel_group is None:
            self._flags[task.id] = 1.0
            return
        if self._pending is None or self._pending.group != task.parallel_group:
            size = sum(1 for t in self._tasks
                       if t.parallel_group == task.parallel_group)
            self._pending = _PendingGroup(group=task.parallel_group, remaining=size)
        self._pending.steps.append((task.id, adjusted))
        self._pending.remaining -= 1
        if self._pending.remaining == 0:
            best = max(self._pending.steps, key=lambda p: (p[1], -p[0]))[0]
            for tid, _ in self._pending.steps:
                self._flags[tid] = 1.0 if tid == best else 0.0
            self._pending = None

    def _build_state(self, step_index: int) -> EnvState:
        cfg = self.scenario.config
        task = self._tasks[step_index - 1]
        # fixed draw order: one frequency per real slot, local first
        eff = {}
        for slot in self.slots:
            if isinstance(slot, EdgeNode):
                eff[slot.id] = sample_cpu_freq(
                    slot.cpu_freq, cfg.freq_jitter_std, self._rng)
        raw = np.empty(len(self.slots))
        adjusted = np.empty(len(self.slots))
        features = []
        for idx, slot in enumerate(self.slots):
            if isinstance(slot, PseudoSlot):
                raw[idx] = adjusted[idx] = math.nan
                features.append((slot.kind,) + _PSEUDO_FEATURES)
                continue
            d_raw = raw_task_delay(task, slot, self._placements,
                                   eff_freq=eff[slot.id])
            usability = None
            handoffs = 0.0
            link_up = 1.0
            if slot.kind == KIND_VN:
                usability = (self._usability[slot.id].usability(d_raw)
                             if d_raw > 0 else 1.0)
                link_up = usability
            elif slot.kind in (KIND_BS, KIND_AP):
                handoffs = slot.residence_rate * self._residence_scale * d_raw
            d_adj = adjusted_task_delay(
                d_raw, task, slot, self._placements, local_node=self._local,
                usability=usability, vn_penalty=cfg.vn_penalty,
                residence_scale=self._residence_scale)
            raw[idx] = d_raw
            adjusted[idx] = d_adj
            bandwidth = (self.norms.bandwidth if math.isinf(slot.access_rate)
                         else slot.access_rate)
            features.append((slot.kind, eff[slot.id], bandwidth, handoffs, link_up))
        finite = adjusted[np.isfinite(adjusted)]
        worst = float(finite.max()) if finite.size else 1.0
        self._pseudo_delay = PSEUDO_DELAY_FACTOR * worst
        missing = np.isnan(adjusted)
        raw[missing] = self._pseudo_delay
        adjusted[missing] = self._pseudo_delay
        self._slot_raw = raw
        self._slot_adjusted = adjusted
        dep_total = float(sum(task.dep_data_in.values()))
        return EnvState(
            task_features=(task.compute_demand, task.interactive_data, dep_total),
            node_features=tuple(features),
            speed=self._speed,
            step_index=step_index,
        )
