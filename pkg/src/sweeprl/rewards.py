"""Rate-tracking reward construction.

The per-step reward is built so that the mean reward over any finite
trajectory equals the tracked quantity per second exactly: with n completed
steps, cumulative total f and cumulative seconds t, the step reward is

    (n+1) * f_{n+1} / t_{n+1}  -  n * f_n / t_n

and the first step's reward is defined as 0. Summing telescopes to
n * f_n / t_n, so the mean over n steps is f_n / t_n. Tracking cumulative
detections makes average reward equal detections per second.

Both ratio terms are evaluated with one shared expression shape so that the
telescoped floating-point sum cancels to machine precision.
"""
from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Iterable

from .errors import EmptyListError, NonMonotonicTimeError


@dataclass(frozen=True)
class RewardTracker:
    """Immutable snapshot of a trajectory's running totals.

    Attributes:
        steps: decision steps completed so far.
        tracked_total: cumulative tracked quantity (detections).
        elapsed: cumulative simulated seconds.
    """

    steps: int = 0
    tracked_total: float = 0.0
    elapsed: float = 0.0

    def advanced(self, amount: float, duration: float) -> "RewardTracker":
        """Snapshot after one more step gathering `amount` over `duration` seconds."""
        return RewardTracker(
            steps=self.steps + 1,
            tracked_total=self.tracked_total + amount,
            elapsed=self.elapsed + duration,
        )


def _scaled_rate(steps: int, tracker: RewardTracker) -> float:
    # Single expression shape shared by both reward terms: the value computed
    # for step k as the "after" term is bit-identical to the value computed
    # for step k+1 as the "before" term, so trajectory sums telescope exactly.
    return steps * tracker.tracked_total / tracker.elapsed


def reward(before: RewardTracker, after: RewardTracker) -> float:
    """Reward for the transition between two consecutive tracker snapshots."""
    if after.steps != before.steps + 1:
        raise ValueError(
            f"tracker must advance exactly one step, got {before.steps} -> {after.steps}"
        )
    if after.elapsed <= before.elapsed:
        raise NonMonotonicTimeError(
            f"elapsed time must increase, got {before.elapsed} -> {after.elapsed}"
        )
    if before.steps == 0:
        return 0.0
    return _scaled_rate(before.steps + 1, after) - _scaled_rate(before.steps, before)


def empirical_gain(rewards: Iterable[float]) -> float:
    """Arithmetic mean of a reward list, the finite-sample gain estimate."""
    values = list(rewards)
    if not values:
        raise EmptyListError("cannot average an empty reward list")
    # fsum keeps the telescoped sum exact to one rounding.
    return math.fsum(values) / len(values)


class TrajectoryRewarder:
    """Stateful wrapper advancing a RewardTracker per decision step.

    The environment side owns this object so the history dependence of the
    construction (the reward depends on cumulative step count, total, and
    time) stays out of the learner.
    """

    def __init__(self):
        self.tracker = RewardTracker()

    def observe(self, amount: float, duration: float) -> float:
        before = self.tracker
        after = before.advanced(amount, duration)
        self.tracker = after
        return reward(before, after)
