"""Occupancy-grid map with validated connectivity and 4-connected shortest paths.

Cells are (x, y) tuples where x is the column and y the row; the occupancy
array is indexed [y, x]. Row y = 0 is the top row of the ASCII map, so the
"up" move decreases y.
"""
from __future__ import annotations

from collections import deque
from dataclasses import dataclass, field

import numpy as np

from .errors import (
    DisconnectedFreeSpaceError,
    NonRectangularError,
    UnknownCharacterError,
    UnreachableError,
)

Cell = tuple[int, int]

# Move priority used to break ties between equal-length shortest paths:
# up, then down, then left, then right. A path is chosen so its move
# sequence is lexicographically smallest under this order.
MOVES: tuple[Cell, ...] = ((0, -1), (0, 1), (-1, 0), (1, 0))

OBSTACLE_CHAR = "#"
FREE_CHAR = "."


@dataclass
class GridMap:
    """Static occupancy grid.

    Attributes:
        width: number of columns.
        height: number of rows.
        occupancy: uint8 array of shape (height, width); 1 = obstacle, 0 = free.
    """

    width: int
    height: int
    occupancy: np.ndarray

    # Per-target BFS distance fields, filled lazily. Maps are small (a few
    # hundred cells) so caching every field is cheap and makes repeated
    # path queries O(path length).
    _distance_fields: dict[Cell, np.ndarray] = field(
        default_factory=dict, repr=False, compare=False
    )
    _free_cells: list[Cell] | None = field(default=None, repr=False, compare=False)

    def in_bounds(self, cell: Cell) -> bool:
        x, y = cell
        return 0 <= x < self.width and 0 <= y < self.height

    def is_free(self, cell: Cell) -> bool:
        x, y = cell
        return self.in_bounds(cell) and self.occupancy[y, x] == 0

    def free_cells(self) -> list[Cell]:
        """All free cells in row-major order ((0,0), (1,0), ... row by row)."""
        if self._free_cells is None:
            ys, xs = np.nonzero(self.occupancy == 0)
            order = np.argsort(ys * self.width + xs)
            self._free_cells = [(int(xs[i]), int(ys[i])) for i in order]
        return self._free_cells

    def neighbors(self, cell: Cell):
        """Free 4-neighbors of a cell, in move-priority order."""
        x, y = cell
        for dx, dy in MOVES:
            nxt = (x + dx, y + dy)
            if self.is_free(nxt):
                yield nxt

    def distance_field(self, target: Cell) -> np.ndarray:
        """BFS distance (in moves) from every free cell to the target.

        Returns an int32 array of shape (height, width) with -1 on obstacle
        cells. On a validated map every free cell has a finite distance.
        """
        cached = self._distance_fields.get(target)
        if cached is not None:
            return cached
        if not self.is_free(target):
            raise UnreachableError(f"cell {target} is not a free cell")
        dist = np.full((self.height, self.width), -1, dtype=np.int32)
        dist[target[1], target[0]] = 0
        queue = deque([target])
        while queue:
            cur = queue.popleft()
            base = dist[cur[1], cur[0]]
            for nxt in self.neighbors(cur):
                if dist[nxt[1], nxt[0]] < 0:
                    dist[nxt[1], nxt[0]] = base + 1
                    queue.append(nxt)
        self._distance_fields[target] = dist
        return dist

    def row_major_index(self, cell: Cell) -> int:
        return cell[1] * self.width + cell[0]

    def cell_from_index(self, index: int) -> Cell:
        return (index % self.width, index // self.width)

    def free_mask(self) -> np.ndarray:
        """Boolean (height, width) array, True on free cells."""
        return self.occupancy == 0


def load_map(text: str) -> GridMap:
    """Parse an ASCII map into a validated GridMap.

    The text uses '#' for obstacles and '.' for free cells, one row per
    line. A single trailing newline is tolerated. The map must be
    rectangular, contain at least one free cell, and all free cells must be
    mutually reachable under 4-connectivity.

    Raises:
        NonRectangularError: rows have differing lengths or the map is empty.
        UnknownCharacterError: any character other than '#' or '.'.
        DisconnectedFreeSpaceError: a free cell unreachable from the rest;
            the message names one such cell.
    """
    lines = text.split("\n")
    if lines and lines[-1] == "":
        lines = lines[:-1]
    if not lines:
        raise NonRectangularError("map text is empty")
    width = len(lines[0])
    if width == 0:
        raise NonRectangularError("map rows are empty")
    for y, line in enumerate(lines):
        if len(line) != width:
            raise NonRectangularError(
                f"row {y} has length {len(line)}, expected {width}"
            )
    height = len(lines)
    occupancy = np.zeros((height, width), dtype=np.uint8)
    for y, line in enumerate(lines):
        for x, ch in enumerate(line):
            if ch == OBSTACLE_CHAR:
                occupancy[y, x] = 1
            elif ch != FREE_CHAR:
                raise UnknownCharacterError(
                    f"unknown character {ch!r} at cell ({x}, {y})"
                )
    grid = GridMap(width=width, height=height, occupancy=occupancy)
    free = grid.free_cells()
    if not free:
        raise DisconnectedFreeSpaceError("map has no free cells")
    # Flood fill from the first free cell; anything left over is disconnected.
    dist = grid.distance_field(free[0])
    for cell in free:
        if dist[cell[1], cell[0]] < 0:
            raise DisconnectedFreeSpaceError(
                f"free cell {cell} is not reachable from {free[0]}"
            )
    return grid


def shortest_path(grid: GridMap, start: Cell, goal: Cell) -> list[Cell]:
    """Minimal-length 4-connected path from start to goal, inclusive.

    Among all shortest paths the one whose move sequence is
    lexicographically smallest under the (up, down, left, right) priority is
    returned, which makes path choice deterministic. start == goal yields
    the single-cell path [start].

    Raises:
        UnreachableError: either endpoint is not free, or no path exists
            (impossible on a validated map; kept as a defensive check).
    """
    for cell in (start, goal):
        if not grid.is_free(cell):
            raise UnreachableError(f"cell {cell} is not a free cell")
    dist = grid.distance_field(goal)
    if dist[start[1], start[0]] < 0:
        raise UnreachableError(f"no path from {start} to {goal}")
    path = [start]
    cur = start
    # Greedy descent on distance-to-goal: taking the highest-priority move
    # that still decreases the BFS distance yields the lexicographically
    # smallest move sequence among shortest paths.
    while cur != goal:
        remaining = dist[cur[1], cur[0]]
        for dx, dy in MOVES:
            nxt = (cur[0] + dx, cur[1] + dy)
            if grid.is_free(nxt) and dist[nxt[1], nxt[0]] == remaining - 1:
                cur = nxt
                break
        else:  # pragma: no cover - cannot happen on a consistent field
            raise UnreachableError(f"distance field inconsistent at {cur}")
        path.append(cur)
    return path
