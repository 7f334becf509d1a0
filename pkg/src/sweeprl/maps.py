"""Builtin office-style maps used by the experiment harness and tests."""
from __future__ import annotations

from .grid import GridMap, load_map

# 10x10 desk-scale layout: one walled room with a two-cell doorway on top.
OFFICE10 = "\n".join(
    [
        "..........",
        "..........",
        "..##..##..",
        "..#....#..",
        "..#....#..",
        "..#....#..",
        "..##..##..",
        "..........",
        "..........",
        "..........",
    ]
)

# 20x20 layout: two rooms with bottom doorways plus a central room below.
OFFICE20 = "\n".join(
    [
        "....................",
        "....................",
        "....................",
        "..######....######..",
        "..#....#....#....#..",
        "..#....#....#....#..",
        "..#....#....#....#..",
        "..#....#....#....#..",
        "..#.####....####.#..",
        "....................",
        "....................",
        "......########......",
        "......#......#......",
        "......#......#......",
        "......#......#......",
        "......#......#......",
        "......###..###......",
        "....................",
        "....................",
        "....................",
    ]
)

BUILTIN_MAPS = {"office10": OFFICE10, "office20": OFFICE20}


def builtin_map(name: str) -> GridMap:
    """Load a builtin map by name; raises KeyError listing the known names."""
    if name not in BUILTIN_MAPS:
        raise KeyError(f"unknown builtin map {name!r}; known: {sorted(BUILTIN_MAPS)}")
    return load_map(BUILTIN_MAPS[name])
