"""Multi-channel grid encoding of the simulator state.

Channel 0 is the costmap (1 on obstacles), channel 1 the robot one-hot,
channel 2 the staleness channel exp(-rate * seconds_since_visit) which is 1
on just-visited cells and 0 on never-visited ones. An optional channel 3
marks the cells of a tracked entity (person or furniture footprint).
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .sim import SweepSimulator

DEFAULT_UNCERTAINTY_RATE = 0.02


@dataclass(frozen=True)
class EncodingConfig:
    uncertainty_rate: float = DEFAULT_UNCERTAINTY_RATE
    include_person_channel: bool = False
    include_furniture_channel: bool = False

    def __post_init__(self):
        if self.uncertainty_rate <= 0:
            raise ValueError("uncertainty_rate must be > 0")
        if self.include_person_channel and self.include_furniture_channel:
            raise ValueError("at most one extra channel is supported")

    @property
    def channels(self) -> int:
        extra = self.include_person_channel or self.include_furniture_channel
        return 4 if extra else 3


def encode_state(sim: SweepSimulator, config: EncodingConfig) -> np.ndarray:
    """Encode the current simulator state as a float32 (C, H, W) tensor."""
    grid = sim.grid
    state = np.zeros((config.channels, grid.height, grid.width), dtype=np.float32)
    state[0] = grid.occupancy
    rx, ry = sim.robot
    state[1, ry, rx] = 1.0
    # exp(-rate * inf) evaluates to 0, covering never-visited cells.
    state[2] = np.exp(-config.uncertainty_rate * sim.field.last_visit)
    if config.channels == 4:
        for x, y in sim.generator.marker_cells():
            state[3, y, x] = 1.0
    return state
