"""Comparison agents: the greedy rate-learning sweeper and coverage patrol.

The greedy agent keeps a per-cell estimate of the event arrival rate and
repeatedly drives to the target whose path promises the most expected events,
assuming (by default) that events accumulate without bound. The patrol agent
walks a fixed boustrophedon cycle covering every free cell.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .events import EventField
from .grid import Cell, GridMap, shortest_path
from .sim import SweepSimulator

DEFAULT_SMOOTHING = 0.2
DEFAULT_NEVER_VISITED_HORIZON = 1000.0
DEFAULT_INITIAL_RATE = 0.05


@dataclass(frozen=True)
class GreedyConfig:
    """Knobs of the greedy baseline.

    smoothing: exponential moving average weight for rate updates.
    never_visited_horizon: stand-in age (seconds) for never-visited cells.
    assume_unbounded: when True the score ignores per-cell bounds, matching
        the baseline's historical assumption; when False expected counts are
        capped at the bound.
    initial_rate: optimistic starting estimate on free cells so unvisited
        regions attract exploration before any observations exist.
    """

    smoothing: float = DEFAULT_SMOOTHING
    never_visited_horizon: float = DEFAULT_NEVER_VISITED_HORIZON
    assume_unbounded: bool = True
    initial_rate: float = DEFAULT_INITIAL_RATE


class RateEstimateTable:
    """Per-cell estimated events-per-second, exponentially smoothed."""

    def __init__(self, grid: GridMap, initial_rate: float = DEFAULT_INITIAL_RATE):
        if not 0.0 <= initial_rate <= 1.0:
            raise ValueError("initial_rate must be in [0, 1]")
        self.grid = grid
        free = grid.free_mask()
        self.p_hat = np.where(free, float(initial_rate), 0.0)
        self.last_obs = np.zeros((grid.height, grid.width), dtype=np.float64)


def greedy_update(
    table: RateEstimateTable,
    cell: Cell,
    observed: int,
    elapsed: float,
    smoothing: float = DEFAULT_SMOOTHING,
    now: float | None = None,
) -> RateEstimateTable:
    """Blend an observation of `observed` events over `elapsed` seconds into the table."""
    if elapsed < 1:
        raise ValueError(f"elapsed must be >= 1 second, got {elapsed}")
    if not 0.0 < smoothing <= 1.0:
        raise ValueError(f"smoothing must be in (0, 1], got {smoothing}")
    x, y = cell
    sample = min(observed / elapsed, 1.0)
    table.p_hat[y, x] = (1.0 - smoothing) * table.p_hat[y, x] + smoothing * sample
    if now is not None:
        table.last_obs[y, x] = now
    return table


def greedy_select(
    table: RateEstimateTable,
    field: EventField,
    grid: GridMap,
    position: Cell,
    never_visited_horizon: float = DEFAULT_NEVER_VISITED_HORIZON,
    assume_unbounded: bool = True,
) -> Cell:
    """Pick the free target whose path maximizes expected events.

    A target's score sums, over the cells of the deterministic shortest path
    from `position`, the estimated rate times the cell's age (seconds since
    the robot last visited; never-visited cells use the configured horizon).
    With assume_unbounded=False each cell's expected count is capped at its
    bound. Ties break toward shorter paths, then the lowest row-major index.
    """
    if not grid.is_free(position):
        raise ValueError(f"position {position} is not a free cell")
    age = np.where(np.isinf(field.last_visit), never_visited_horizon, field.last_visit)
    contribution = table.p_hat * age
    if not assume_unbounded:
        contribution = np.minimum(contribution, field.bound.astype(np.float64))
    best_cell: Cell | None = None
    best_key: tuple[float, int] | None = None
    for target in grid.free_cells():  # row-major order fixes the final tie-break
        path = shortest_path(grid, position, target)
        score = 0.0
        for x, y in path:
            score += contribution[y, x]
        key = (score, -len(path))
        if best_key is None or key > best_key:
            best_key = key
            best_cell = target
    assert best_cell is not None
    return best_cell


class GreedyRateAgent:
    """Online agent: observe detections along each path, re-estimate, go greedy."""

    def __init__(self, grid: GridMap, config: GreedyConfig | None = None):
        self.grid = grid
        self.config = config or GreedyConfig()
        self.table = RateEstimateTable(grid, self.config.initial_rate)

    def act(self, sim: SweepSimulator) -> Cell:
        return greedy_select(
            self.table,
            sim.field,
            self.grid,
            sim.robot,
            never_visited_horizon=self.config.never_visited_horizon,
            assume_unbounded=self.config.assume_unbounded,
        )

    def observe(self, sim: SweepSimulator) -> None:
        """Fold the last step's per-cell detections into the rate table.

        Each visited cell contributes one observation: the count detected
        there over the window since this agent last observed the cell.
        """
        outcome = sim.log.outcomes[-1]
        counts: dict[Cell, int] = {}
        for event in sim.last_detected:
            counts[event.cell] = counts.get(event.cell, 0) + 1
        start_time = outcome.wallclock - outcome.duration
        visited = outcome.path[1:] if len(outcome.path) > 1 else outcome.path[:1]
        for offset, cell in enumerate(visited, start=1):
            visit_time = start_time + offset
            elapsed = max(visit_time - self.table.last_obs[cell[1], cell[0]], 1.0)
            greedy_update(
                self.table,
                cell,
                counts.get(cell, 0),
                elapsed,
                smoothing=self.config.smoothing,
                now=visit_time,
            )

    def run(self, sim: SweepSimulator, horizon: int) -> None:
        """Act until at least `horizon` simulated seconds have elapsed."""
        while sim.now < horizon:
            self.act_once(sim)

    def act_once(self, sim: SweepSimulator) -> None:
        sim.step(self.act(sim))
        self.observe(sim)


@dataclass(frozen=True)
class PatrolPlan:
    """A closed tour whose consecutive cells (including the wrap) are 4-adjacent."""

    cycle: tuple[Cell, ...]


def plan_patrol(grid: GridMap) -> PatrolPlan:
    """Boustrophedon sweep visiting every free cell, closed into a loop.

    Free cells are scanned row by row, alternating direction; consecutive
    scan cells are joined by shortest paths, which inserts detours around
    obstacles. The tour ends with a return leg to the starting cell.
    """
    scan: list[Cell] = []
    for y in range(grid.height):
        row = [(x, y) for x in range(grid.width) if grid.is_free((x, y))]
        if y % 2 == 1:
            row.reverse()
        scan.extend(row)
    cycle: list[Cell] = [scan[0]]
    for nxt in scan[1:] + [scan[0]]:
        leg = shortest_path(grid, cycle[-1], nxt)
        cycle.extend(leg[1:])
    if len(cycle) > 1:
        cycle.pop()  # the return leg re-lands on cycle[0]; drop the duplicate
    return PatrolPlan(cycle=tuple(cycle))


class PatrolAgent:
    """Walks the patrol cycle one cell per decision step."""

    def __init__(self, plan: PatrolPlan):
        self.plan = plan
        self.index = 0

    def start_cell(self) -> Cell:
        return self.plan.cycle[0]

    def act(self, sim: SweepSimulator) -> Cell:
        cycle = self.plan.cycle
        if sim.robot != cycle[self.index]:
            # Walked off-plan (e.g. custom start); rejoin at the nearest index.
            self.index = min(
                range(len(cycle)),
                key=lambda i: abs(cycle[i][0] - sim.robot[0]) + abs(cycle[i][1] - sim.robot[1]),
            )
        self.index = (self.index + 1) % len(cycle)
        return cycle[self.index]

    def run(self, sim: SweepSimulator, horizon: int) -> None:
        while sim.now < horizon:
            sim.step(self.act(sim))
