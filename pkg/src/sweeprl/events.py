"""Events, the per-cell event field, and the event spawn processes.

Events appear in free cells according to a generator process, persist until
the robot's path crosses their cell, and are then marked detected. Each cell
holds at most `bound` undetected events; spawns beyond the bound are dropped
silently and counted for audit.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .grid import Cell, GridMap

DEFAULT_PERSON_EVENT_PROB = 0.3


@dataclass
class Event:
    """A single event: where it appeared, when, and when it was detected.

    detected_at stays None while the event is undetected.
    """

    cell: Cell
    onset: int
    detected_at: int | None = None


class EventField:
    """Undetected events per cell plus visit bookkeeping.

    Attributes:
        active: dict mapping cell -> list of undetected Events (absent key
            means no active events).
        bound: int array (height, width), per-cell cap on active events.
        last_visit: float array (height, width), seconds since the robot
            last occupied the cell; inf if never visited.
        dropped: int array (height, width), spawns dropped at saturation.
    """

    def __init__(self, grid: GridMap, bound: int | np.ndarray = 1):
        self.grid = grid
        if np.isscalar(bound):
            self.bound = np.full((grid.height, grid.width), int(bound), dtype=np.int64)
        else:
            self.bound = np.asarray(bound, dtype=np.int64).copy()
            if self.bound.shape != (grid.height, grid.width):
                raise ValueError("bound array shape must match the map")
        if (self.bound < 1).any():
            raise ValueError("per-cell bound must be >= 1")
        self.active: dict[Cell, list[Event]] = {}
        self.last_visit = np.full((grid.height, grid.width), np.inf, dtype=np.float64)
        self.dropped = np.zeros((grid.height, grid.width), dtype=np.int64)

    def active_count(self, cell: Cell) -> int:
        return len(self.active.get(cell, ()))

    def spawn(self, cell: Cell, now: int) -> Event | None:
        """Create an event at `cell`, or drop it if the cell is saturated."""
        if not self.grid.is_free(cell):
            raise ValueError(f"events can only spawn on free cells, got {cell}")
        x, y = cell
        events = self.active.setdefault(cell, [])
        if len(events) >= self.bound[y, x]:
            self.dropped[y, x] += 1
            return None
        event = Event(cell=cell, onset=now)
        events.append(event)
        return event

    def detect_at(self, cell: Cell, now: int) -> list[Event]:
        """Mark every undetected event at `cell` detected at time `now`."""
        events = self.active.pop(cell, [])
        for event in events:
            event.detected_at = now
        return events

    def advance_clocks(self) -> None:
        """Advance every cell's time-since-visit by one second."""
        self.last_visit += 1.0

    def mark_visited(self, cell: Cell) -> None:
        self.last_visit[cell[1], cell[0]] = 0.0

    def total_dropped(self) -> int:
        return int(self.dropped.sum())


class EventGenerator:
    """Base class for spawn processes. Subclasses override tick()."""

    def tick(self, field: EventField, now: int) -> list[Event]:
        raise NotImplementedError

    def marker_cells(self) -> list[Cell]:
        """Cells highlighted in the optional extra state channel."""
        return []


class BinomialGenerator(EventGenerator):
    """Each active cell independently spawns with a fixed per-second probability.

    The random draw happens for every rate cell on every tick, whether or not
    the cell is saturated, so the spawn schedule for a given seed does not
    depend on the robot's behavior. That keeps paired agent comparisons on a
    shared event world.
    """

    def __init__(self, grid: GridMap, rates: dict[Cell, float], seed: int = 0):
        for cell, p in rates.items():
            if not grid.is_free(cell):
                raise ValueError(f"rate cell {cell} is not free")
            if not 0.0 <= p <= 1.0:
                raise ValueError(f"per-second probability must be in [0, 1], got {p}")
        # Fixed iteration order for determinism.
        self.rates = sorted(rates.items(), key=lambda item: (item[0][1], item[0][0]))
        self.rng = np.random.default_rng(seed)

    def tick(self, field: EventField, now: int) -> list[Event]:
        spawned = []
        for cell, p in self.rates:
            if self.rng.random() < p:
                event = field.spawn(cell, now)
                if event is not None:
                    spawned.append(event)
        return spawned


class PeriodicGenerator(EventGenerator):
    """Each cell spawns exactly when (now - phase) is a multiple of its period."""

    def __init__(self, grid: GridMap, schedule: dict[Cell, tuple[int, int]]):
        """schedule maps cell -> (period seconds, phase offset seconds)."""
        for cell, (period, phase) in schedule.items():
            if not grid.is_free(cell):
                raise ValueError(f"schedule cell {cell} is not free")
            if period < 1:
                raise ValueError(f"period must be >= 1 second, got {period}")
            if not 0 <= phase:
                raise ValueError(f"phase must be >= 0, got {phase}")
        self.schedule = sorted(schedule.items(), key=lambda item: (item[0][1], item[0][0]))

    def tick(self, field: EventField, now: int) -> list[Event]:
        spawned = []
        for cell, (period, phase) in self.schedule:
            if (now - phase) % period == 0:
                event = field.spawn(cell, now)
                if event is not None:
                    spawned.append(event)
        return spawned


class PersonWalkGenerator(EventGenerator):
    """A person random-walks the free space and leaves events behind.

    Every tick the person moves to a uniformly random free 4-neighbor (staying
    put only when boxed in), then spawns an event at its current cell with
    probability event_prob.
    """

    def __init__(
        self,
        grid: GridMap,
        start: Cell,
        event_prob: float = DEFAULT_PERSON_EVENT_PROB,
        seed: int = 0,
    ):
        if not grid.is_free(start):
            raise ValueError(f"person start cell {start} is not free")
        if not 0.0 <= event_prob <= 1.0:
            raise ValueError(f"event probability must be in [0, 1], got {event_prob}")
        self.grid = grid
        self.person = start
        self.event_prob = event_prob
        self.rng = np.random.default_rng(seed)

    def tick(self, field: EventField, now: int) -> list[Event]:
        options = list(self.grid.neighbors(self.person))
        if options:
            self.person = options[int(self.rng.integers(len(options)))]
        spawned = []
        if self.rng.random() < self.event_prob:
            event = field.spawn(self.person, now)
            if event is not None:
                spawned.append(event)
        return spawned

    def marker_cells(self) -> list[Cell]:
        return [self.person]


class FurnitureWalkGenerator(EventGenerator):
    """A rigid furniture footprint with attached event sites and a move schedule.

    The footprint is a set of cell offsets from an anchor; event sites are
    offsets with a spawn period each. At every scheduled (time, anchor) pair
    the footprint and any attached sites relocate rigidly. With
    events_attached=False the sites stay frozen at their initial absolute
    cells while the footprint still moves, which breaks the correlation
    between events and geometry.
    """

    def __init__(
        self,
        grid: GridMap,
        anchor: Cell,
        footprint_offsets: list[Cell],
        site_offsets: list[tuple[Cell, int]],
        relocations: list[tuple[int, Cell]] | None = None,
        events_attached: bool = True,
    ):
        """site_offsets maps (offset from anchor) -> spawn period in seconds."""
        self.grid = grid
        self.footprint_offsets = list(footprint_offsets)
        self.site_offsets = list(site_offsets)
        self.relocations = sorted(relocations or [])
        self.events_attached = events_attached
        self._next_move = 0
        self.anchor = anchor
        self._validate_anchor(anchor)
        for _, target in self.relocations:
            self._validate_anchor(target)
        for _, period in self.site_offsets:
            if period < 1:
                raise ValueError(f"site period must be >= 1 second, got {period}")
        self.fixed_sites = [
            (self._offset_cell(anchor, off), period) for off, period in self.site_offsets
        ]

    @staticmethod
    def _offset_cell(anchor: Cell, offset: Cell) -> Cell:
        return (anchor[0] + offset[0], anchor[1] + offset[1])

    def _validate_anchor(self, anchor: Cell) -> None:
        for off in self.footprint_offsets:
            cell = self._offset_cell(anchor, off)
            if not self.grid.is_free(cell):
                raise ValueError(f"footprint cell {cell} is not free")
        for off, _ in self.site_offsets:
            cell = self._offset_cell(anchor, off)
            if not self.grid.is_free(cell):
                raise ValueError(f"site cell {cell} is not free")

    def current_sites(self) -> list[tuple[Cell, int]]:
        if self.events_attached:
            return [
                (self._offset_cell(self.anchor, off), period)
                for off, period in self.site_offsets
            ]
        return self.fixed_sites

    def tick(self, field: EventField, now: int) -> list[Event]:
        while self._next_move < len(self.relocations) and self.relocations[self._next_move][0] <= now:
            self.anchor = self.relocations[self._next_move][1]
            self._next_move += 1
        spawned = []
        for cell, period in self.current_sites():
            if now % period == 0:
                event = field.spawn(cell, now)
                if event is not None:
                    spawned.append(event)
        return spawned

    def marker_cells(self) -> list[Cell]:
        return [self._offset_cell(self.anchor, off) for off in self.footprint_offsets]


def spawn_tick(gen: EventGenerator, field: EventField, now: int) -> list[Event]:
    """Run one simulated second of the spawn process. Call once per second."""
    return gen.tick(field, now)
