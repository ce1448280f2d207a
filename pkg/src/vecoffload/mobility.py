"""Mobility impact on offloading: handoff counts and neighbor-link usability.

BS/AP attachments pay per-handoff migration delay; the expected handoff count
is the ratio of mean execution time to mean coverage-residence time.  Neighbor
vehicle links survive only while the inter-vehicle distance headway stays
within radio range; the headway is modeled as a discrete-time birth-death
Markov chain and usability is the in-range probability mass after the task's
execution window.
"""

from dataclasses import dataclass, field

import numpy as np

from .errors import ConfigError, DomainError

__all__ = [
    "HeadwayChain",
    "HeadwayDistribution",
    "expected_handoffs",
    "expected_handoffs_from_means",
    "transition_probs",
    "build_transition_matrix",
    "evolve",
    "node_usability",
    "UsabilityTable",
]


def expected_handoffs(exec_rate: float, residence_rate: float) -> float:
    """Expected number of coverage handoffs during one task execution.

    ``exec_rate`` is 1 / mean execution time, ``residence_rate`` is 1 / mean
    residence time in one coverage area.  The closed form residence/execution
    ratio holds for any residence-time distribution with that mean, so only
    the rate is needed.
    """
    if exec_rate <= 0:
        raise DomainError(f"exec_rate must be > 0, got {exec_rate}")
    if residence_rate < 0:
        raise DomainError(f"residence_rate must be >= 0, got {residence_rate}")
    return residence_rate / exec_rate


def expected_handoffs_from_means(exec_mean: float, residence_mean: float) -> float:
    """Same ratio stated in mean times; infinite residence means no handoffs."""
    if exec_mean <= 0:
        raise DomainError(f"exec_mean must be > 0, got {exec_mean}")
    if residence_mean <= 0:
        raise DomainError(f"residence_mean must be > 0, got {residence_mean}")
    return exec_mean / residence_mean


@dataclass(frozen=True)
class HeadwayChain:
    """Discrete-time birth-death chain over quantized distance headways.

    States 0..n-2 cover headways ``z_min + j*unit`` up to ``z_max``; the last
    state is the overflow bucket just beyond ``z_max``.  ``comm_range_state``
    is the largest state index still within radio range.  Transition
    probabilities grow toward ``p`` (up) and ``q`` (down) as the headway
    approaches ``z_max``; ``beta`` sets how strongly they depend on the state.
    """

    z_min: float
    z_max: float
    unit: float
    p: float
    q: float
    beta: float
    comm_range_state: int
    time_step: float
    initial_dist: tuple = ()

    def __post_init__(self):
        if not self.z_min < self.z_max:
            raise ConfigError(f"z_min must be < z_max, got {self.z_min} >= {self.z_max}")
        if self.unit <= 0:
            raise ConfigError(f"unit must be > 0, got {self.unit}")
        for name in ("p", "q", "beta"):
            v = getattr(self, name)
            if not 0.0 <= v <= 1.0:
                raise ConfigError(f"{name} must lie in [0, 1], got {v}")
        if self.time_step <= 0:
            raise ConfigError(f"time_step must be > 0, got {self.time_step}")
        n = self.state_count
        if not 0 <= self.comm_range_state < n:
            raise ConfigError(
                f"comm_range_state {self.comm_range_state} outside 0..{n - 1}"
            )
        for j in range(n):
            pj, qj, lj = transition_probs(self, j)
            if pj + qj > 1.0 + 1e-12:
                raise ConfigError(
                    f"p_{j} + q_{j} = {pj + qj} > 1; reduce p, q or beta"
                )
        if self.initial_dist:
            if len(self.initial_dist) != n:
                raise ConfigError(
                    f"initial_dist has {len(self.initial_dist)} entries, chain has {n} states"
                )
            total = float(sum(self.initial_dist))
            if abs(total - 1.0) > 1e-12 or min(self.initial_dist) < 0:
                raise ConfigError("initial_dist must be a probability vector")

    @property
    def state_count(self) -> int:
        # covered states plus the overflow bucket beyond z_max; the tiny bias
        # keeps exact multiples from flooring down through rounding noise
        return int((self.z_max - self.z_min) / self.unit + 1e-9) + 2

    def initial(self) -> "HeadwayDistribution":
        """Initial distribution; uniform over in-range states when unspecified."""
        n = self.state_count
        if self.initial_dist:
            probs = np.asarray(self.initial_dist, dtype=np.float64)
        else:
            probs = np.zeros(n)
            probs[: self.comm_range_state + 1] = 1.0 / (self.comm_range_state + 1)
        return HeadwayDistribution(probs=probs, step=0)


@dataclass(frozen=True)
class HeadwayDistribution:
    """State distribution of a headway chain after ``step`` transitions."""

    probs: np.ndarray
    step: int

    def __post_init__(self):
        probs = np.asarray(self.probs, dtype=np.float64)
        if np.any(probs < 0) or abs(float(probs.sum()) - 1.0) > 1e-12:
            raise ConfigError("probs must be a probability vector")
        object.__setattr__(self, "probs", probs)


def transition_probs(chain: HeadwayChain, j: int) -> tuple:
    """(up, down, stay) probabilities of state ``j``."""
    n = chain.state_count
    if not 0 <= j < n:
        raise DomainError(f"state {j} outside 0..{n - 1}")
    ratio = (chain.z_min + j * chain.unit) / chain.z_max
    factor = 1.0 - chain.beta * (1.0 - ratio)
    p_j = chain.p * factor
    q_j = chain.q * factor
    return p_j, q_j, 1.0 - p_j - q_j


def build_transition_matrix(chain: HeadwayChain) -> np.ndarray:
    """Row-stochastic tridiagonal one-step matrix of the chain.

    Boundary states reflect: the bottom state folds its down-move into
    staying, the top (overflow) state folds its up-move into staying, so no
    probability mass is lost.
    """
    n = chain.state_count
    mat = np.zeros((n, n))
    for j in range(n):
        p_j, q_j, l_j = transition_probs(chain, j)
        if j == 0:
            mat[j, j] = l_j + q_j
        else:
            mat[j, j - 1] = q_j
            mat[j, j] = l_j
        if j == n - 1:
            mat[j, j] += p_j
        else:
            mat[j, j + 1] = p_j
    # guard against rounding drift in l_j = 1 - p_j - q_j
    mat /= mat.sum(axis=1, keepdims=True)
    return mat


def evolve(dist: HeadwayDistribution, mat: np.ndarray, steps: int) -> HeadwayDistribution:
    """Advance a state distribution ``steps`` transitions."""
    if steps < 0:
        raise DomainError(f"steps must be >= 0, got {steps}")
    probs = dist.probs
    if mat.shape != (probs.size, probs.size):
        raise DomainError(
            f"matrix shape {mat.shape} does not match {probs.size} states"
        )
    if steps == 0:
        return dist
    for _ in range(steps):
        probs = probs @ mat
    return HeadwayDistribution(probs=probs, step=dist.step + steps)


def _window_steps(chain: HeadwayChain, task_exec_mean: float) -> int:
    if task_exec_mean <= 0:
        raise DomainError(f"task_exec_mean must be > 0, got {task_exec_mean}")
    return max(1, round(task_exec_mean / chain.time_step))


def node_usability(chain: HeadwayChain, task_exec_mean: float) -> float:
    """Probability the neighbor link survives a task's execution window.

    The window is quantized to ``round(task_exec_mean / time_step)`` chain
    steps (at least one); the result is the probability mass at or below
    ``comm_range_state`` after evolving the initial distribution that long.
    """
    steps = _window_steps(chain, task_exec_mean)
    mat = build_transition_matrix(chain)
    final = evolve(chain.initial(), mat, steps)
    return float(final.probs[: chain.comm_range_state + 1].sum())


class UsabilityTable:
    """Usability lookups for one chain with the step-wise evolution cached.

    Evolving the distribution one transition at a time and caching every
    intermediate step makes repeated queries (one per candidate slot per
    environment step) cost a single matrix-vector product at most.  Results
    are bit-identical to :func:`node_usability` because the evolution applies
    the same products in the same order.
    """

    def __init__(self, chain: HeadwayChain):
        self.chain = chain
        self._mat = build_transition_matrix(chain)
        self._dists = [chain.initial().probs]

    def usability(self, task_exec_mean: float) -> float:
        steps = _window_steps(self.chain, task_exec_mean)
        while len(self._dists) <= steps:
            self._dists.append(self._dists[-1] @ self._mat)
        probs = self._dists[steps]
        return float(probs[: self.chain.comm_range_state + 1].sum())
