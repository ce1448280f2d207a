"""Advantage actor-critic training over the offloading environment.

Each worker owns a private environment, pulls a consistent parameter snapshot
from the global store, rolls one episode, computes discounted returns by the
backward recursion R = r + gamma * R over the masked rewards, and pushes the
episode's summed gradients back as one transactional update.  A single-thread
mode runs the identical loop inline and is bit-reproducible; it is the
default for anything that needs exact repeatability.
"""

import csv
import math
import threading
import time
from dataclasses import dataclass

import numpy as np

from .env import OffloadEnv
from .errors import DomainError
from .nn import (
    Gradients,
    NetParams,
    apply_sgd,
    backward_actor_batch,
    backward_critic_batch,
    forward_policy,
    forward_value,
    init_params,
    policy_entropy,
)
from .scenario import Scenario

__all__ = [
    "TRAINING_COLUMNS",
    "GlobalStore",
    "Hyperparams",
    "TrainReport",
    "advantage",
    "apply_async",
    "build_networks",
    "episode_returns",
    "evaluate",
    "greedy_traces",
    "k_step_return",
    "online_learn",
    "run_episode",
    "summarize_traces",
    "train",
    "write_training_csv",
]

TRAINING_COLUMNS = (
    "episode",
    "worker",
    "return",
    "service_delay_s",
    "mean_entropy",
    "value_loss",
    "store_version",
)

_RMS_DECAY = 0.99
_RMS_EPS = 1e-8


@dataclass(frozen=True)
class Hyperparams:
    gamma: float = 0.99
    entropy_coef: float = 0.01
    lr_actor: float = 1e-3
    lr_critic: float = 1e-3
    workers: int = 1
    episodes: int = 1000
    seed: int = 0
    hidden_sizes: tuple = (64, 64, 64)
    n_step: int | None = None
    optimizer: str = "sgd"
    grad_clip: float | None = None
    # larger values make rmsprop steps gradient-proportional once gradients
    # are small, which keeps a saturated softmax escapable
    rms_epsilon: float = 1e-8

    def __post_init__(self):
        if not 0.0 <= self.gamma <= 1.0:
            raise DomainError("gamma must lie in [0, 1]")
        if self.entropy_coef < 0:
            raise DomainError("entropy_coef must be >= 0")
        if self.lr_actor <= 0 or self.lr_critic <= 0:
            raise DomainError("learning rates must be > 0")
        if self.workers < 1:
            raise DomainError("workers must be >= 1")
        if self.episodes < 0:
            raise DomainError("episodes must be >= 0")
        if self.n_step is not None and self.n_step < 1:
            raise DomainError("n_step must be >= 1 when set")
        if self.optimizer not in ("sgd", "rmsprop"):
            raise DomainError(f"unknown optimizer {self.optimizer!r}")
        if self.grad_clip is not None and self.grad_clip <= 0:
            raise DomainError("grad_clip must be > 0 when set")
        if self.rms_epsilon <= 0:
            raise DomainError("rms_epsilon must be > 0")

    @staticmethod
    def from_scenario(scenario: Scenario, **over) -> "Hyperparams":
        spec = scenario.config.train
        base = dict(
            gamma=spec.gamma, entropy_coef=spec.entropy_coef,
            lr_actor=spec.lr_actor, lr_critic=spec.lr_critic,
            workers=spec.workers, episodes=spec.episodes,
            seed=scenario.config.seed, hidden_sizes=tuple(spec.hidden_sizes),
            n_step=spec.n_step, optimizer=spec.optimizer,
            grad_clip=spec.grad_clip, rms_epsilon=spec.rms_epsilon,
        )
        base.update(over)
        return Hyperparams(**base)


# --------------------------------------------------------------------------
# returns


def k_step_return(rewards, bootstrap: float, gamma: float) -> float:
    """Discounted sum of the rewards plus the discounted bootstrap value."""
    if len(rewards) == 0:
        raise DomainError("k_step_return needs at least one reward")
    g = float(bootstrap)
    for r in reversed(rewards):
        g = r + gamma * g
    return g


def advantage(g: float, value: float) -> float:
    if not (math.isfinite(g) and math.isfinite(value)):
        raise DomainError("advantage needs finite inputs")
    return g - value


def episode_returns(rewards, gamma: float, values=None,
                    n_step: int | None = None) -> np.ndarray:
    """Per-step return targets for one finished episode.

    Full depth (the default) runs the backward recursion R = r + gamma * R
    seeded with 0 at the terminal state.  A truncation depth bootstraps each
    window with the critic's value of the state n_step ahead (``values[t]``
    is V(s_t); beyond the terminal the bootstrap is 0).
    """
    rewards = list(rewards)
    m = len(rewards)
    out = np.empty(m)
    if n_step is None:
        g = 0.0
        for t in range(m - 1, -1, -1):
            g = rewards[t] + gamma * g
            out[t] = g
        return out
    if values is None:
        raise DomainError("truncated returns need per-state values")
    values = np.asarray(values, dtype=np.float64)
    if values.shape != (m,):
        raise DomainError("values must hold one entry per step")
    for t in range(m):
        end = t + n_step
        boot = 0.0 if end >= m else float(values[end])
        out[t] = k_step_return(rewards[t:min(end, m)], boot, gamma)
    return out


# --------------------------------------------------------------------------
# the parameter store


class GlobalStore:
    """Shared actor/critic parameters with transactional snapshot/apply.

    Updates are serialized under one lock; readers always see a consistent
    (actor, critic, version) triple and never a half-applied update.  The
    version increases by exactly one per apply, so the update counter doubles
    as a lost-update detector.
    """

    def __init__(self, actor: NetParams, critic: NetParams,
                 hyper: Hyperparams):
        self._lock = threading.Lock()
        self._actor = actor
        self._critic = critic
        self._hyper = hyper
        self._version = 0
        self._rms = {"actor": None, "critic": None}

    @property
    def version(self) -> int:
        with self._lock:
            return self._version

    def snapshot(self) -> tuple:
        with self._lock:
            return self._actor, self._critic, self._version

    def apply(self, d_actor: Gradients, d_critic: Gradients) -> int:
        """Ascend the actor along its gradient, descend the critic, bump the
        version; returns the new version."""
        hyper = self._hyper
        if hyper.grad_clip is not None:
            d_actor = d_actor.clipped(hyper.grad_clip)
            d_critic = d_critic.clipped(hyper.grad_clip)
        with self._lock:
            if hyper.optimizer == "rmsprop":
                self._actor, self._rms["actor"] = _rmsprop_step(
                    self._actor, d_actor.scaled(-1.0), hyper.lr_actor,
                    self._rms["actor"], hyper.rms_epsilon)
                self._critic, self._rms["critic"] = _rmsprop_step(
                    self._critic, d_critic, hyper.lr_critic,
                    self._rms["critic"], hyper.rms_epsilon)
            else:
                self._actor = apply_sgd(self._actor, d_actor.scaled(-1.0),
                                        hyper.lr_actor)
                self._critic = apply_sgd(self._critic, d_critic,
                                         hyper.lr_critic)
            self._version += 1
            return self._version


def apply_async(store: GlobalStore, d_actor: Gradients,
                d_critic: Gradients) -> int:
    return store.apply(d_actor, d_critic)


def _rmsprop_step(params: NetParams, grads: Gradients, lr: float, state,
                  eps: float = _RMS_EPS):
    """Root-mean-square propagation with per-parameter accumulators."""
    if state is None:
        state = ([np.zeros_like(w) for w in params.weights],
                 [np.zeros_like(b) for b in params.biases])
    vws, vbs = state
    new_ws, new_bs = [], []
    for w, g, v in zip(params.weights, grads.weights, vws):
        v *= _RMS_DECAY
        v += (1.0 - _RMS_DECAY) * g * g
        new_ws.append(w - lr * g / np.sqrt(v + eps))
    for b, g, v in zip(params.biases, grads.biases, vbs):
        v *= _RMS_DECAY
        v += (1.0 - _RMS_DECAY) * g * g
        new_bs.append(b - lr * g / np.sqrt(v + eps))
    stepped = NetParams(sizes=params.sizes, weights=tuple(new_ws),
                        biases=tuple(new_bs), out_kind=params.out_kind)
    return stepped, (vws, vbs)


# --------------------------------------------------------------------------
# episodes


def build_networks(scenario: Scenario, hyper: Hyperparams) -> tuple:
    """Seeded actor and critic sized to the scenario's encoded state."""
    env = OffloadEnv(scenario)
    state_dim = env.encode(env.reset(seed=0)).shape[0]
    root = np.random.SeedSequence([0xA3C, hyper.seed & 0xFFFFFFFF])
    actor_seed, critic_seed = root.spawn(2)
    actor = init_params((state_dim, *hyper.hidden_sizes, env.action_size),
                        seed=actor_seed, out_kind="softmax")
    critic = init_params((state_dim, *hyper.hidden_sizes, 1),
                         seed=critic_seed, out_kind="identity")
    return actor, critic


def run_episode(env: OffloadEnv, actor: NetParams, critic: NetParams,
                hyper: Hyperparams, episode: int, greedy: bool = False):
    """One episode: sample (or argmax) actions, then accumulate the episode's
    actor and critic gradients from the masked discounted returns.

    Returns (trace, d_actor, d_critic, stats) where stats carries the
    undiscounted masked return, the mean policy entropy, and the critic loss.
    """
    rng = np.random.default_rng(
        np.random.SeedSequence([0xAC7, hyper.seed & 0xFFFFFFFF, episode]))
    state = env.reset(seed=episode)
    states, actions, entropies = [], [], []
    done = False
    while not done:
        x = env.encode(state)
        probs = forward_policy(actor, x)
        if greedy:
            action = int(np.argmax(probs))
        else:
            action = int(rng.choice(len(probs), p=probs))
        states.append(x)
        actions.append(action)
        entropies.append(policy_entropy(probs))
        outcome = env.step(action)
        state = outcome.next_state
        done = outcome.terminal
    trace = env.trace()
    rewards = trace.masked_rewards()
    batch = np.stack(states)
    values = forward_value(critic, batch)
    returns = episode_returns(rewards, hyper.gamma, values=values,
                              n_step=hyper.n_step)
    advantages = returns - values
    d_actor = backward_actor_batch(actor, batch, actions, advantages,
                                   hyper.entropy_coef)
    d_critic, loss = backward_critic_batch(critic, batch, returns)
    stats = {
        "return": float(sum(rewards)),
        "service_delay": trace.service_delay,
        "mean_entropy": float(np.mean(entropies)),
        "value_loss": float(loss),
    }
    return trace, d_actor, d_critic, stats


# --------------------------------------------------------------------------
# training


@dataclass(frozen=True)
class TrainReport:
    """Per-episode rows (sorted by episode), final params, and wall-clock."""

    rows: tuple
    actor: NetParams
    critic: NetParams
    hyper: Hyperparams
    wall_clock: float

    @property
    def episode_count(self) -> int:
        return len(self.rows)


def write_training_csv(path, report: TrainReport) -> None:
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(TRAINING_COLUMNS)
        for row in report.rows:
            writer.writerow([
                row["episode"], row["worker"], repr(row["return"]),
                repr(row["service_delay"]), repr(row["mean_entropy"]),
                repr(row["value_loss"]), row["store_version"],
            ])


def _worker_loop(worker_id: int, scenario: Scenario, store: GlobalStore,
                 hyper: Hyperparams, counter: dict, rows: list):
    env = OffloadEnv(scenario)
    lock = counter["lock"]
    while True:
        with lock:
            episode = counter["next"]
            if episode >= hyper.episodes:
                return
            counter["next"] = episode + 1
        actor, critic, _ = store.snapshot()
        _, d_actor, d_critic, stats = run_episode(
            env, actor, critic, hyper, episode)
        version = store.apply(d_actor, d_critic)
        rows.append({
            "episode": episode, "worker": worker_id,
            "return": stats["return"],
            "service_delay": stats["service_delay"],
            "mean_entropy": stats["mean_entropy"],
            "value_loss": stats["value_loss"],
            "store_version": version,
        })


def train(scenario: Scenario, hyper: Hyperparams,
          initial: tuple | None = None) -> TrainReport:
    """Run the full training loop and return the report.

    ``initial`` optionally seeds the store with existing (actor, critic)
    parameters instead of a fresh initialization.  With one worker the loop
    runs inline on the calling thread and is exactly reproducible; with more,
    worker threads race on the store and only aggregate behavior is
    reproducible.
    """
    start = time.perf_counter()
    actor, critic = initial if initial is not None else \
        build_networks(scenario, hyper)
    store = GlobalStore(actor, critic, hyper)
    counter = {"next": 0, "lock": threading.Lock()}
    if hyper.workers == 1:
        rows = []
        _worker_loop(0, scenario, store, hyper, counter, rows)
    else:
        per_worker = [[] for _ in range(hyper.workers)]
        threads = [
            threading.Thread(
                target=_worker_loop,
                args=(i, scenario, store, hyper, counter, per_worker[i]),
                name=f"a3c-worker-{i}")
            for i in range(hyper.workers)
        ]
        for t in threads:
            t.start()
        for t in threads:
            t.join()
        rows = [row for bucket in per_worker for row in bucket]
    rows.sort(key=lambda r: r["episode"])
    final_actor, final_critic, _ = store.snapshot()
    return TrainReport(rows=tuple(rows), actor=final_actor,
                       critic=final_critic, hyper=hyper,
                       wall_clock=time.perf_counter() - start)


def online_learn(actor: NetParams, critic: NetParams, scenario: Scenario,
                 hyper: Hyperparams) -> TrainReport:
    """Continue training from existing parameters (e.g. a loaded checkpoint)
    through the same store-mediated loop; zero episodes is a no-op."""
    return train(scenario, hyper, initial=(actor, critic))


# --------------------------------------------------------------------------
# evaluation


def greedy_traces(actor: NetParams, scenario: Scenario, episodes: int,
                  seed: int) -> list:
    """Roll out argmax placements over episodes seeded ``seed + i``.

    The additive seeding means evaluations of different policies with the
    same base seed see identical environments (paired comparison).
    """
    if episodes < 1:
        raise DomainError("need at least one evaluation episode")
    env = OffloadEnv(scenario)
    traces = []
    for i in range(episodes):
        state = env.reset(seed=seed + i)
        done = False
        while not done:
            probs = forward_policy(actor, env.encode(state))
            outcome = env.step(int(np.argmax(probs)))
            state = outcome.next_state
            done = outcome.terminal
        traces.append(env.trace())
    return traces


def summarize_traces(traces, gamma: float, action_size: int,
                     as_printed: bool = False) -> dict:
    """Aggregate delay and objective metrics over finished episode traces.

    The objective J averages (1/M) * sum_t gamma^(t-1) * r_t over episodes,
    rewards masked to longest-group members.  The as-printed variant uses
    the constant exponent gamma^(M-1) instead of gamma^(t-1).
    """
    traces = list(traces)
    if not traces:
        raise DomainError("need at least one finished episode")
    slot_counts = np.zeros(action_size)
    service_delays = []
    task_delays = []
    objectives = []
    for trace in traces:
        rewards = trace.masked_rewards()
        m = len(rewards)
        if as_printed:
            j = gamma ** (m - 1) * sum(rewards) / m
        else:
            j = sum(gamma ** t * r for t, r in enumerate(rewards)) / m
        objectives.append(j)
        service_delays.append(trace.service_delay)
        for record in trace.records:
            slot_counts[record.action_slot] += 1
            task_delays.append(record.adjusted_delay)
    return {
        "episodes": len(traces),
        "mean_service_delay": float(np.mean(service_delays)),
        "mean_task_delay": float(np.mean(task_delays)),
        "objective": float(np.mean(objectives)),
        "slot_fractions": (slot_counts / slot_counts.sum()).tolist(),
    }


def evaluate(actor: NetParams, scenario: Scenario, episodes: int, seed: int,
             gamma: float, objective_as_printed: bool | None = None) -> dict:
    """Greedy-action evaluation over seeded episodes.

    By default the scenario's flag picks the objective exponent convention;
    pass ``objective_as_printed`` to force one.
    """
    as_printed = (scenario.config.objective_as_printed
                  if objective_as_printed is None else objective_as_printed)
    traces = greedy_traces(actor, scenario, episodes, seed)
    return summarize_traces(traces, gamma, scenario.config.action_size,
                            as_printed=as_printed)
