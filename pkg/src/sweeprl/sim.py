"""Semi-Markov sweep simulator: variable-duration steps, detections, metrics.

An action names a target cell. The robot walks the deterministic shortest
path there at one cell per second; a stay-in-place action still consumes one
second so time always advances. Within every simulated second the order is:
advance clocks, spawn events, move the robot one cell, detect everything in
the occupied cell. An event appearing in the cell the robot currently
occupies is therefore detected immediately.
"""
from __future__ import annotations

import csv
from dataclasses import dataclass, field

from .errors import NoEventsError, TargetIsObstacleError, ZeroElapsedTimeError
from .events import Event, EventField, EventGenerator, spawn_tick
from .grid import Cell, GridMap, shortest_path


@dataclass(frozen=True)
class StepOutcome:
    """Record of one decision step.

    Attributes:
        path: cells traversed, inclusive of origin and target.
        duration: simulated seconds consumed (moves walked, minimum 1).
        detections: events detected during this step.
        wallclock: cumulative simulated seconds after the step.
        decision_index: 1-based index of the step.
    """

    path: tuple[Cell, ...]
    duration: int
    detections: int
    wallclock: int
    decision_index: int

    @property
    def target(self) -> Cell:
        return self.path[-1]


@dataclass
class RunLog:
    """Everything that happened in one simulation run."""

    outcomes: list[StepOutcome] = field(default_factory=list)
    all_events: list[Event] = field(default_factory=list)
    now: int = 0

    @property
    def total_events(self) -> int:
        return len(self.all_events)

    @property
    def total_detections(self) -> int:
        return sum(outcome.detections for outcome in self.outcomes)


class SweepSimulator:
    """Owns the grid, the event field, the robot, and the run log."""

    def __init__(
        self,
        grid: GridMap,
        generator: EventGenerator,
        bound: int = 1,
        start: Cell | None = None,
    ):
        self.grid = grid
        self.generator = generator
        self.field = EventField(grid, bound)
        if start is None:
            start = grid.free_cells()[0]
        if not grid.is_free(start):
            raise TargetIsObstacleError(f"start cell {start} is not free")
        self.robot = start
        self.now = 0
        self.log = RunLog()
        # Events detected during the most recent step, for agents that learn
        # from per-cell observations.
        self.last_detected: list[Event] = []

    def step(self, target: Cell) -> StepOutcome:
        """Walk the shortest path to `target`, spawning and detecting per second."""
        if not self.grid.is_free(target):
            raise TargetIsObstacleError(f"target cell {target} is not free")
        path = shortest_path(self.grid, self.robot, target)
        duration = max(len(path) - 1, 1)
        detected: list[Event] = []
        for second in range(1, duration + 1):
            self.now += 1
            self.field.advance_clocks()
            spawned = spawn_tick(self.generator, self.field, self.now)
            self.log.all_events.extend(spawned)
            # Stay-in-place keeps the robot on path[0] for its single second.
            self.robot = path[second] if len(path) > 1 else path[0]
            detected.extend(self.field.detect_at(self.robot, self.now))
            self.field.mark_visited(self.robot)
        outcome = StepOutcome(
            path=tuple(path),
            duration=duration,
            detections=len(detected),
            wallclock=self.now,
            decision_index=len(self.log.outcomes) + 1,
        )
        self.log.outcomes.append(outcome)
        self.log.now = self.now
        self.last_detected = detected
        return outcome

    def reposition(self, cell: Cell) -> None:
        """Teleport the robot without advancing time, spawning, or detecting.

        Used by exploration resets; a detection without an elapsed second
        would violate the per-second spawn-then-detect ordering.
        """
        if not self.grid.is_free(cell):
            raise TargetIsObstacleError(f"reposition cell {cell} is not free")
        self.robot = cell

    def metric_adt(self, now: int | None = None) -> float:
        return metric_adt(self.log, self.now if now is None else now)

    def metric_dps(self) -> float:
        return metric_dps(self.log)


def metric_adt(log: RunLog, now: int) -> float:
    """Average detection time: mean seconds from onset to detection.

    Events not yet detected are charged up to `now`. Raises NoEventsError
    when no event has occurred.
    """
    if not log.all_events:
        raise NoEventsError("no events have occurred")
    total = 0.0
    for event in log.all_events:
        seen = now if event.detected_at is None else event.detected_at
        total += seen - event.onset
    return total / len(log.all_events)


def metric_dps(log: RunLog) -> float:
    """Detections per second: cumulative detections over cumulative seconds."""
    if not log.outcomes or log.outcomes[-1].wallclock <= 0:
        raise ZeroElapsedTimeError("no simulated time has elapsed")
    elapsed = log.outcomes[-1].wallclock
    return log.total_detections / elapsed


def write_runlog_csv(log: RunLog, path: str) -> None:
    """Write one row per decision step: n, action_x, action_y, duration_s, detections, t_n."""
    with open(path, "w", newline="") as handle:
        writer = csv.writer(handle)
        writer.writerow(["n", "action_x", "action_y", "duration_s", "detections", "t_n"])
        for outcome in log.outcomes:
            x, y = outcome.target
            writer.writerow(
                [outcome.decision_index, x, y, outcome.duration, outcome.detections, outcome.wallclock]
            )


def write_events_csv(log: RunLog, path: str) -> None:
    """Write one row per event: cell ("x;y"), onset, detected_at (empty if never)."""
    with open(path, "w", newline="") as handle:
        writer = csv.writer(handle)
        writer.writerow(["cell", "onset", "detected_at"])
        for event in log.all_events:
            cell = f"{event.cell[0]};{event.cell[1]}"
            detected = "" if event.detected_at is None else event.detected_at
            writer.writerow([cell, event.onset, detected])
