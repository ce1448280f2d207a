"""Reference policies sharing the learner's environment.

The greedy baseline asks the environment for the true adjusted delay of every
slot and takes the myopic argmin, local-only always keeps tasks on the
vehicle, and the random baseline draws slots uniformly.  A brute-force
enumerator replays every action sequence of one seeded episode to find its
exact optimum; it is the ground truth the greedy comparisons are judged
against on small services.
"""

import itertools
import math

import numpy as np

from .env import Action, EpisodeTrace, OffloadEnv
from .errors import DomainError

__all__ = [
    "RandomPolicy",
    "brute_force_optimum",
    "greedy_decide",
    "local_decide",
    "rollout",
]


def greedy_decide(env) -> Action:
    """Slot with the least adjusted delay for the current task; ties break
    toward the lowest slot index."""
    return Action(slot=int(np.argmin(env.slot_delays())))


def local_decide(env) -> Action:
    return Action(slot=0)


class RandomPolicy:
    """Uniform over slots, reproducible for a fixed seed."""

    def __init__(self, seed: int):
        self._rng = np.random.default_rng(np.random.SeedSequence([0xD1CE, seed]))

    def __call__(self, env) -> Action:
        return Action(slot=int(self._rng.integers(env.action_size)))


def rollout(env: OffloadEnv, decide, seed: int) -> EpisodeTrace:
    """Run one full episode under ``decide(env) -> Action``."""
    env.reset(seed=seed)
    done = False
    while not done:
        done = env.step(decide(env)).terminal
    return env.trace()


def brute_force_optimum(env: OffloadEnv, seed: int,
                        cap: int = 250_000) -> tuple:
    """Exhaustive minimum service delay over all action sequences of one
    seeded episode.

    Every rollout replays the same seed, and the environment's random draws
    do not depend on the actions, so all sequences see identical node
    frequencies: the returned (actions, service_delay) pair is the episode's
    exact paired optimum.  Refuses action spaces beyond ``cap`` sequences.
    """
    sequences = env.action_size ** env.task_count
    if sequences > cap:
        raise DomainError(
            f"{env.action_size}^{env.task_count} sequences exceed the "
            f"enumeration cap {cap}")
    best_actions = None
    best_delay = math.inf
    for actions in itertools.product(range(env.action_size),
                                     repeat=env.task_count):
        env.reset(seed=seed)
        for slot in actions:
            env.step(slot)
        delay = env.trace().service_delay
        if delay < best_delay:
            best_delay = delay
            best_actions = actions
    return best_actions, best_delay
