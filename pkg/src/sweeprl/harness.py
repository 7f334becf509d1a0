"""Config-driven experiment harness: seeded instances, paired agent
comparisons, and CSV reports.

An experiment is defined by a key-value config file with [map], [events],
[agent], and [run] sections. Each instance draws a random event layout from
the instance seed, evaluates the chosen agent and the baseline on the same
event world (generators draw their randomness independently of the robot, so
paired runs see identical spawn schedules), and reports per-instance metrics
plus percentage differences.
"""
from __future__ import annotations

import configparser
import csv
import math
import os
import warnings
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from .baselines import GreedyConfig, GreedyRateAgent, PatrolAgent, plan_patrol
from .encoding import EncodingConfig, encode_state
from .errors import TooFewFreeCellsError
from .events import (
    BinomialGenerator,
    EventGenerator,
    FurnitureWalkGenerator,
    PeriodicGenerator,
    PersonWalkGenerator,
)
from .grid import Cell, GridMap, load_map
from .maps import builtin_map
from .rlearn import AgentConfig, DeepRAgent, DiagnosticsRow, explore_loop
from .sim import SweepSimulator

AGENT_KINDS = ("dps_max", "adt_greedy", "patrol")
EVENT_KINDS = ("binomial", "periodic", "person", "furniture")

# Instance-generation ranges for randomized event layouts.
INSTANCE_CELLS = 5
BINOMIAL_RANGE = (1.0 / 50.0, 1.0 / 10.0)
PERIOD_RANGE = (10, 50)

# Seed streams derived from the instance seed. The evaluation world is shared
# by both agents of a pairing; training streams never touch it.
_WORLD, _TRAIN_WORLD, _EVAL_WORLD, _AGENT = 0, 101, 202, 303


def _stream(seed: int, offset: int) -> int:
    return 1000 * seed + offset


@dataclass(frozen=True)
class InstanceSpec:
    """A concrete event-world layout, reproducible from its fields alone."""

    kind: str
    bound: int = 1
    cells: tuple[Cell, ...] = ()
    values: tuple[float, ...] = ()  # per-cell probability or period
    phases: tuple[int, ...] = ()  # periodic only
    person_start: Cell | None = None
    spawn_chance: float = 0.3
    anchor: Cell | None = None
    footprint: tuple[Cell, ...] = ()  # offsets from the anchor
    sites: tuple[tuple[Cell, int], ...] = ()  # (offset, period)
    relocations: tuple[tuple[int, Cell], ...] = ()
    events_attached: bool = True

    def __post_init__(self):
        if self.kind not in EVENT_KINDS:
            raise ValueError(f"unknown event kind {self.kind!r}")
        if self.bound < 1:
            raise ValueError("bound must be >= 1")

    def longest_period(self) -> int:
        """Slowest recurrence in seconds, for the horizon sufficiency guard."""
        if self.kind == "periodic" and self.values:
            return int(max(self.values))
        if self.kind == "binomial" and self.values:
            return int(round(1.0 / min(self.values)))
        if self.kind == "furniture" and self.sites:
            return max(period for _, period in self.sites)
        if self.kind == "person":
            return int(round(1.0 / self.spawn_chance))
        return 1


def generate_instance(
    rng: np.random.Generator,
    grid: GridMap,
    variant: str,
    bound: int = 1,
    n_cells: int = INSTANCE_CELLS,
) -> InstanceSpec:
    """Draw a random event layout: n_cells distinct free cells with per-cell
    probabilities (binomial) or integer periods and phases (periodic)."""
    free = grid.free_cells()
    if len(free) < n_cells:
        raise TooFewFreeCellsError(
            f"map has {len(free)} free cells, need {n_cells}"
        )
    picks = rng.choice(len(free), size=n_cells, replace=False)
    cells = tuple(free[i] for i in picks)
    if variant == "binomial":
        values = tuple(rng.uniform(*BINOMIAL_RANGE, size=n_cells).tolist())
        return InstanceSpec("binomial", bound, cells, values)
    if variant == "periodic":
        periods = rng.integers(PERIOD_RANGE[0], PERIOD_RANGE[1] + 1, size=n_cells)
        phases = tuple(int(rng.integers(p)) for p in periods)
        return InstanceSpec(
            "periodic", bound, cells, tuple(int(p) for p in periods), phases
        )
    raise ValueError(f"generate_instance supports binomial/periodic, got {variant!r}")


def make_generator(spec: InstanceSpec, grid: GridMap, seed: int) -> EventGenerator:
    if spec.kind == "binomial":
        return BinomialGenerator(grid, dict(zip(spec.cells, spec.values)), seed=seed)
    if spec.kind == "periodic":
        phases = spec.phases or (0,) * len(spec.cells)
        schedule = {
            cell: (int(value), int(phase))
            for cell, value, phase in zip(spec.cells, spec.values, phases)
        }
        return PeriodicGenerator(grid, schedule)
    if spec.kind == "person":
        start = spec.person_start or grid.free_cells()[0]
        return PersonWalkGenerator(grid, start, spec.spawn_chance, seed=seed)
    if spec.kind == "furniture":
        if spec.anchor is None:
            raise ValueError("furniture spec needs an anchor")
        return FurnitureWalkGenerator(
            grid,
            spec.anchor,
            list(spec.footprint),
            [(off, period) for off, period in spec.sites],
            list(spec.relocations),
            events_attached=spec.events_attached,
        )
    raise ValueError(f"unknown event kind {spec.kind!r}")


def make_simulator(
    grid: GridMap, spec: InstanceSpec, seed: int, start: Cell | None = None
) -> SweepSimulator:
    return SweepSimulator(
        grid, make_generator(spec, grid, seed), bound=spec.bound, start=start
    )


@dataclass
class ExperimentConfig:
    grid: GridMap
    kind: str = "binomial"
    bound: int = 1
    n_cells: int = INSTANCE_CELLS
    agent: str = "dps_max"
    baseline: str = "adt_greedy"
    seeds: tuple[int, ...] = (1, 2, 3, 4, 5, 6, 7, 8)
    instances: int | None = None
    horizon: int = 50_000
    agent_config: AgentConfig = field(default_factory=AgentConfig)
    greedy_config: GreedyConfig = field(default_factory=GreedyConfig)
    encoding: EncodingConfig = field(default_factory=EncodingConfig)
    explicit_spec: InstanceSpec | None = None

    def __post_init__(self):
        count = self.instances if self.instances is not None else len(self.seeds)
        if count < 1:
            raise ValueError("instance count must be >= 1")
        if count > len(self.seeds):
            raise ValueError("not enough seeds for the instance count")
        if len(set(self.seeds)) != len(self.seeds):
            raise ValueError("seeds must be distinct")
        if self.bound < 1:
            raise ValueError("bound must be >= 1")
        for kind in (self.agent, self.baseline):
            if kind not in AGENT_KINDS:
                raise ValueError(f"unknown agent kind {kind!r}")

    @property
    def instance_count(self) -> int:
        return self.instances if self.instances is not None else len(self.seeds)


def _parse_cell(text: str) -> Cell:
    x, y = text.strip().split(";")
    return (int(x), int(y))


def _parse_bool(text: str) -> bool:
    value = text.strip().lower()
    if value in ("true", "yes", "on", "1"):
        return True
    if value in ("false", "no", "off", "0"):
        return False
    raise ValueError(f"expected a boolean, got {text!r}")


def _split(text: str) -> list[str]:
    return text.replace(",", " ").split()


# [agent] keys forwarded to AgentConfig, with their casts.
_AGENT_KEYS = {
    "optimizer_lr": float,
    "gain_lr": float,
    "near_greedy_gate": float,
    "target_sync_period": int,
    "epsilon": float,
    "epsilon_final": float,
    "epsilon_decay_steps": int,
    "batch_size": int,
    "replay_capacity": int,
    "warmup": int,
    "reset_interval": int,
    "eval_interval": int,
    "patience": int,
    "eval_steps": int,
    "max_steps": int,
    "restarts": int,
    "optimizer": str,
    "plan": str,
}
_GREEDY_KEYS = {
    "smoothing": float,
    "never_visited_horizon": float,
    "assume_unbounded": _parse_bool,
    "initial_rate": float,
}
_ENCODING_KEYS = {
    "uncertainty_rate": float,
    "person_channel": ("include_person_channel", _parse_bool),
    "furniture_channel": ("include_furniture_channel", _parse_bool),
}


def parse_experiment_config(path: str) -> ExperimentConfig:
    """Read an experiment definition from an INI-style config file."""
    parser = configparser.ConfigParser()
    with open(path) as handle:
        parser.read_file(handle)

    map_section = parser["map"] if parser.has_section("map") else {}
    if "builtin" in map_section:
        grid = builtin_map(map_section["builtin"])
    elif "path" in map_section:
        map_path = map_section["path"]
        if not os.path.isabs(map_path):
            map_path = os.path.join(os.path.dirname(os.path.abspath(path)), map_path)
        with open(map_path) as handle:
            grid = load_map(handle.read())
    else:
        raise ValueError("config [map] section needs 'builtin' or 'path'")

    events = parser["events"] if parser.has_section("events") else {}
    kind = events.get("kind", "binomial")
    bound = int(events.get("bound", "1"))
    n_cells = int(events.get("cells", str(INSTANCE_CELLS)))
    explicit = _parse_explicit_spec(events, kind, bound) if _has_explicit(events) else None

    agent_section = dict(parser["agent"]) if parser.has_section("agent") else {}
    agent = agent_section.pop("kind", "dps_max")
    baseline = agent_section.pop("baseline", "adt_greedy")
    agent_kwargs = {}
    greedy_kwargs = {}
    encoding_kwargs = {}
    for key, raw in agent_section.items():
        if key in _AGENT_KEYS:
            agent_kwargs[key] = _AGENT_KEYS[key](raw)
        elif key in _GREEDY_KEYS:
            greedy_kwargs[key] = _GREEDY_KEYS[key](raw)
        elif key in _ENCODING_KEYS:
            spec = _ENCODING_KEYS[key]
            if isinstance(spec, tuple):
                encoding_kwargs[spec[0]] = spec[1](raw)
            else:
                encoding_kwargs[key] = spec(raw)
        else:
            raise ValueError(f"unknown [agent] key {key!r}")

    run = parser["run"] if parser.has_section("run") else {}
    seeds = tuple(int(s) for s in _split(run.get("seeds", "1 2 3 4 5 6 7 8")))
    instances = int(run["instances"]) if "instances" in run else None
    horizon = int(run.get("horizon", "50000"))

    return ExperimentConfig(
        grid=grid,
        kind=kind,
        bound=bound,
        n_cells=n_cells,
        agent=agent,
        baseline=baseline,
        seeds=seeds,
        instances=instances,
        horizon=horizon,
        agent_config=AgentConfig(**agent_kwargs),
        greedy_config=GreedyConfig(**greedy_kwargs),
        encoding=EncodingConfig(**encoding_kwargs),
        explicit_spec=explicit,
    )


def _has_explicit(events) -> bool:
    return any(k in events for k in ("sites", "anchor", "person_start"))


def _parse_explicit_spec(events, kind: str, bound: int) -> InstanceSpec:
    if kind in ("binomial", "periodic"):
        cells = []
        values = []
        for item in _split(events["sites"]):
            cell_text, value_text = item.rsplit(":", 1)
            cells.append(_parse_cell(cell_text))
            values.append(float(value_text) if kind == "binomial" else int(value_text))
        return InstanceSpec(kind, bound, tuple(cells), tuple(values))
    if kind == "person":
        return InstanceSpec(
            kind,
            bound,
            person_start=_parse_cell(events["person_start"]),
            spawn_chance=float(events.get("chance", "0.3")),
        )
    if kind == "furniture":
        sites = []
        for item in _split(events.get("sites", "")):
            cell_text, period = item.rsplit(":", 1)
            sites.append((_parse_cell(cell_text), int(period)))
        relocations = []
        for item in _split(events.get("relocations", "")):
            when, cell_text = item.split(":", 1)
            relocations.append((int(when), _parse_cell(cell_text)))
        return InstanceSpec(
            kind,
            bound,
            anchor=_parse_cell(events["anchor"]),
            footprint=tuple(_parse_cell(c) for c in _split(events.get("footprint", "0;0"))),
            sites=tuple(sites),
            relocations=tuple(relocations),
            events_attached=_parse_bool(events.get("attached", "true")),
        )
    raise ValueError(f"unknown event kind {kind!r}")


@dataclass
class InstanceRow:
    instance: int
    seed: int
    ours_adt: float
    ours_dps: float
    base_adt: float
    base_dps: float

    @property
    def adt_pct(self) -> float:
        return _pct(self.ours_adt, self.base_adt)

    @property
    def dps_pct(self) -> float:
        return _pct(self.ours_dps, self.base_dps)


def _pct(ours: float, base: float) -> float:
    if base == 0.0:
        return math.nan
    return 100.0 * (ours - base) / base


@dataclass
class ComparisonReport:
    ours: str
    base: str
    rows: list[InstanceRow]

    def _stats(self, values: list[float]) -> tuple[float, float]:
        arr = np.asarray(values, dtype=np.float64)
        std = float(arr.std(ddof=1)) if arr.size > 1 else 0.0
        return float(arr.mean()), std

    @property
    def mean_dps_pct(self) -> float:
        return self._stats([r.dps_pct for r in self.rows])[0]

    @property
    def std_dps_pct(self) -> float:
        return self._stats([r.dps_pct for r in self.rows])[1]

    @property
    def mean_adt_pct(self) -> float:
        return self._stats([r.adt_pct for r in self.rows])[0]

    @property
    def std_adt_pct(self) -> float:
        return self._stats([r.adt_pct for r in self.rows])[1]

    @property
    def dps_wins(self) -> int:
        return sum(1 for r in self.rows if r.ours_dps > r.base_dps)

    @property
    def adt_wins(self) -> int:
        # Lower detection latency is the win condition for ADT.
        return sum(1 for r in self.rows if r.ours_adt < r.base_adt)


def sign_test_pvalue(wins: int, trials: int) -> float:
    """One-sided exact sign test: P[X >= wins] for X ~ Binomial(trials, 1/2)."""
    if not 0 <= wins <= trials:
        raise ValueError("wins must be within [0, trials]")
    total = sum(math.comb(trials, k) for k in range(wins, trials + 1))
    return total / 2.0**trials


REPORT_COLUMNS = (
    "instance",
    "seed",
    "ours_adt",
    "ours_dps",
    "base_adt",
    "base_dps",
    "adt_pct_diff",
    "dps_pct_diff",
)


def write_report_csv(report: ComparisonReport, path: str) -> None:
    """Per-instance rows plus a trailing mean row (instance column 'mean')."""
    with open(path, "w", newline="") as handle:
        writer = csv.writer(handle)
        writer.writerow(REPORT_COLUMNS)
        for row in report.rows:
            writer.writerow(
                [
                    row.instance,
                    row.seed,
                    f"{row.ours_adt:.6f}",
                    f"{row.ours_dps:.6f}",
                    f"{row.base_adt:.6f}",
                    f"{row.base_dps:.6f}",
                    f"{row.adt_pct:.6f}",
                    f"{row.dps_pct:.6f}",
                ]
            )
        means = [
            np.mean([r.ours_adt for r in report.rows]),
            np.mean([r.ours_dps for r in report.rows]),
            np.mean([r.base_adt for r in report.rows]),
            np.mean([r.base_dps for r in report.rows]),
            np.mean([r.adt_pct for r in report.rows]),
            np.mean([r.dps_pct for r in report.rows]),
        ]
        writer.writerow(["mean", ""] + [f"{m:.6f}" for m in means])


def check_horizon(spec: InstanceSpec, horizon: int) -> None:
    """Warn when the evaluation horizon is short relative to event recurrence."""
    needed = 20 * spec.longest_period()
    if horizon < needed:
        warnings.warn(
            f"horizon {horizon}s is under 20x the slowest event recurrence "
            f"({spec.longest_period()}s); metrics may be unstable",
            stacklevel=2,
        )


def instance_for(config: ExperimentConfig, seed: int) -> InstanceSpec:
    if config.explicit_spec is not None:
        return config.explicit_spec
    rng = np.random.default_rng(seed)
    return generate_instance(rng, config.grid, config.kind, config.bound, config.n_cells)


def train_dps_max(
    grid: GridMap,
    spec: InstanceSpec,
    seed: int,
    agent_config: AgentConfig,
    encoding: EncodingConfig,
) -> tuple[DeepRAgent, list[DiagnosticsRow]]:
    """Train a fresh deep agent on this instance's event distribution.

    The training world and the stopping-rule evaluation world use seed
    streams disjoint from the final comparison world. With restarts > 1 the
    whole loop runs that many times from independent initializations and the
    run with the best evaluation checkpoint wins; a run that settles into a
    degenerate policy early never produces a competitive checkpoint, so the
    selection discards it.
    """

    def one_run(attempt: int) -> tuple[float, DeepRAgent, list[DiagnosticsRow]]:
        train_sim = make_simulator(grid, spec, _stream(seed, _TRAIN_WORLD))
        agent = DeepRAgent(
            grid, encoding, agent_config, seed=_stream(seed, _AGENT) + attempt
        )

        def eval_factory() -> SweepSimulator:
            return make_simulator(grid, spec, _stream(seed, _EVAL_WORLD))

        rows = explore_loop(train_sim, agent, eval_factory, agent_config)
        best = max((row.eval_dps for row in rows), default=-math.inf)
        return best, agent, rows

    runs = [one_run(attempt) for attempt in range(agent_config.restarts)]
    _, agent, rows = max(runs, key=lambda run: run[0])
    return agent, rows


def run_greedy_policy(agent: DeepRAgent, sim: SweepSimulator, horizon: int) -> None:
    """Roll the trained policy greedily until `horizon` simulated seconds."""
    while sim.now < horizon:
        state = encode_state(sim, agent.encoding)
        sim.step(agent.grid.cell_from_index(agent.act(state, epsilon=0.0)))


def evaluate_agent_kind(
    kind: str, config: ExperimentConfig, spec: InstanceSpec, seed: int
) -> tuple[float, float]:
    """(ADT, DPS) of one agent kind on the shared evaluation world."""
    grid = config.grid
    world_seed = _stream(seed, _WORLD)
    if kind == "adt_greedy":
        sim = make_simulator(grid, spec, world_seed)
        GreedyRateAgent(grid, config.greedy_config).run(sim, config.horizon)
    elif kind == "patrol":
        plan = plan_patrol(grid)
        sim = make_simulator(grid, spec, world_seed, start=plan.cycle[0])
        PatrolAgent(plan).run(sim, config.horizon)
    elif kind == "dps_max":
        agent, _ = train_dps_max(grid, spec, seed, config.agent_config, config.encoding)
        sim = make_simulator(grid, spec, world_seed)
        run_greedy_policy(agent, sim, config.horizon)
    else:
        raise ValueError(f"unknown agent kind {kind!r}")
    return sim.metric_adt(), sim.metric_dps()


def run_instance(config: ExperimentConfig, index: int) -> InstanceRow:
    seed = config.seeds[index]
    spec = instance_for(config, seed)
    check_horizon(spec, config.horizon)
    ours_adt, ours_dps = evaluate_agent_kind(config.agent, config, spec, seed)
    base_adt, base_dps = evaluate_agent_kind(config.baseline, config, spec, seed)
    return InstanceRow(index, seed, ours_adt, ours_dps, base_adt, base_dps)


def _run_instance_star(args: tuple[ExperimentConfig, int]) -> InstanceRow:
    return run_instance(*args)


def run_experiment(config: ExperimentConfig, workers: int | None = None) -> ComparisonReport:
    """Evaluate agent vs. baseline across all instances.

    Instances are independent; with workers > 1 (or SWEEPRL_WORKERS set)
    they run in separate processes. Results are deterministic either way
    because every instance derives all randomness from its own seed.
    """
    if workers is None:
        workers = int(os.environ.get("SWEEPRL_WORKERS", "1"))
    count = config.instance_count
    if workers > 1:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            rows = list(pool.map(_run_instance_star, [(config, i) for i in range(count)]))
    else:
        rows = [run_instance(config, i) for i in range(count)]
    return ComparisonReport(config.agent, config.baseline, rows)
