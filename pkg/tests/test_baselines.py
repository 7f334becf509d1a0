"""Greedy rate-learning baseline and coverage patrol."""
import numpy as np
import pytest

from sweeprl.baselines import (
    GreedyConfig,
    GreedyRateAgent,
    PatrolAgent,
    PatrolPlan,
    RateEstimateTable,
    greedy_select,
    greedy_update,
    plan_patrol,
)
from sweeprl.events import BinomialGenerator, EventField
from sweeprl.grid import load_map, shortest_path
from sweeprl.sim import SweepSimulator

OPEN5 = "\n".join(["....."] * 5)


def fresh_field(grid, ages=None, bound=1):
    field = EventField(grid, bound)
    if ages is not None:
        field.last_visit = np.asarray(ages, dtype=np.float64)
    return field


class TestGreedyUpdate:
    def test_zero_observations_decay_geometrically(self):
        grid = load_map("..")
        table = RateEstimateTable(grid, initial_rate=0.05)
        for k in range(1, 6):
            greedy_update(table, (0, 0), observed=0, elapsed=10)
            assert table.p_hat[0, 0] == pytest.approx(0.05 * 0.8**k)

    def test_constant_samples_converge_to_sample(self):
        grid = load_map("..")
        table = RateEstimateTable(grid, initial_rate=0.05)
        for _ in range(200):
            greedy_update(table, (1, 0), observed=5, elapsed=10)
        assert table.p_hat[0, 1] == pytest.approx(0.5, abs=1e-9)

    def test_sample_capped_at_one(self):
        grid = load_map("..")
        table = RateEstimateTable(grid, initial_rate=0.05)
        greedy_update(table, (0, 0), observed=10, elapsed=2)
        # blended toward min(10/2, 1) = 1
        assert table.p_hat[0, 0] == pytest.approx(0.8 * 0.05 + 0.2 * 1.0)

    def test_last_obs_recorded(self):
        grid = load_map("..")
        table = RateEstimateTable(grid)
        greedy_update(table, (1, 0), observed=0, elapsed=4, now=17.0)
        assert table.last_obs[0, 1] == 17.0

    def test_invalid_arguments(self):
        grid = load_map("..")
        table = RateEstimateTable(grid)
        with pytest.raises(ValueError):
            greedy_update(table, (0, 0), observed=1, elapsed=0.5)
        with pytest.raises(ValueError):
            greedy_update(table, (0, 0), observed=1, elapsed=2, smoothing=0.0)
        with pytest.raises(ValueError):
            RateEstimateTable(grid, initial_rate=1.5)

    def test_obstacle_cells_start_at_zero(self):
        grid = load_map(".#\n..")
        table = RateEstimateTable(grid, initial_rate=0.05)
        assert table.p_hat[0, 1] == 0.0


class TestGreedySelect:
    def test_all_zero_rates_stay_put(self):
        grid = load_map(OPEN5)
        table = RateEstimateTable(grid, initial_rate=0.0)
        field = fresh_field(grid)
        assert greedy_select(table, field, grid, (2, 2)) == (2, 2)

    def test_hand_computed_one_row_map(self):
        # Cells A(0,0) B(1,0) C(2,0); position B. Path scores (p_hat * age):
        # stay: 2.0; A: 2.0 + 0.1*30 = 5.0; C: 2.0 + 0.05*horizon.
        grid = load_map("...")
        table = RateEstimateTable(grid, initial_rate=0.0)
        table.p_hat[0] = [0.1, 0.2, 0.05]
        field = fresh_field(grid, ages=[[30.0, 10.0, np.inf]])
        # horizon 1000: C scores 52.0 and wins
        assert greedy_select(table, field, grid, (1, 0)) == (2, 0)
        # horizon 20: C scores only 3.0, A's 5.0 wins
        assert greedy_select(
            table, field, grid, (1, 0), never_visited_horizon=20.0
        ) == (0, 0)

    def test_dominant_cell_chosen(self):
        grid = load_map(OPEN5)
        table = RateEstimateTable(grid, initial_rate=0.001)
        table.p_hat[3, 4] = 0.9
        field = fresh_field(grid, ages=np.full((5, 5), 50.0))
        assert greedy_select(table, field, grid, (0, 0)) == (4, 3)

    def test_equal_scores_prefer_shorter_path(self):
        # equal-score hot cells in opposite directions, distances 2 and 5
        grid = load_map("." * 11)
        table = RateEstimateTable(grid, initial_rate=0.0)
        table.p_hat[0, 3] = 0.2  # distance 2 left of (5,0)
        table.p_hat[0, 10] = 0.2  # distance 5 right
        field = fresh_field(grid, ages=np.full((1, 11), 30.0))
        assert greedy_select(table, field, grid, (5, 0)) == (3, 0)

    def test_equal_everything_breaks_to_row_major(self):
        grid = load_map("...\n...\n...")
        table = RateEstimateTable(grid, initial_rate=0.0)
        table.p_hat[0, 2] = 0.3  # target (2,0)
        table.p_hat[2, 0] = 0.3  # target (0,2), same distance from (1,1)
        field = fresh_field(grid, ages=np.full((3, 3), 12.0))
        assert greedy_select(table, field, grid, (1, 1)) == (2, 0)

    def test_matches_exhaustive_score_oracle(self):
        # independent score evaluation over every target on random instances
        grid = load_map(OPEN5)
        rng = np.random.default_rng(42)
        for _ in range(20):
            table = RateEstimateTable(grid, initial_rate=0.0)
            table.p_hat = rng.uniform(0.0, 0.3, size=(5, 5))
            ages = rng.uniform(0.0, 200.0, size=(5, 5))
            ages[rng.random((5, 5)) < 0.2] = np.inf
            field = fresh_field(grid, ages=ages.copy())
            position = (int(rng.integers(5)), int(rng.integers(5)))

            horizon = 1000.0
            capped_ages = np.where(np.isinf(ages), horizon, ages)
            best_key, best_cell = None, None
            for target in grid.free_cells():
                path = shortest_path(grid, position, target)
                score = sum(table.p_hat[y, x] * capped_ages[y, x] for x, y in path)
                key = (score, -len(path))
                if best_key is None or key > best_key:
                    best_key, best_cell = key, target
            assert greedy_select(table, field, grid, position) == best_cell

    def test_scale_invariance(self):
        grid = load_map(OPEN5)
        rng = np.random.default_rng(8)
        for scale in (0.1, 3.7, 250.0):
            table = RateEstimateTable(grid, initial_rate=0.0)
            table.p_hat = rng.uniform(0.0, 0.2, size=(5, 5))
            ages = rng.uniform(1.0, 90.0, size=(5, 5))
            field = fresh_field(grid, ages=ages)
            choice = greedy_select(table, field, grid, (2, 2))
            table.p_hat = table.p_hat * scale
            assert greedy_select(table, field, grid, (2, 2)) == choice

    def test_growing_age_never_flips_away_from_target(self):
        grid = load_map(OPEN5)
        table = RateEstimateTable(grid, initial_rate=0.01)
        table.p_hat[4, 4] = 0.5
        ages = np.full((5, 5), 10.0)
        for age in (20.0, 80.0, 400.0):
            field = fresh_field(grid, ages=ages)
            field.last_visit[4, 4] = age
            assert greedy_select(table, field, grid, (0, 0)) == (4, 4)

    def test_bound_cap_changes_ranking(self):
        # one saturated hot cell (capped at bound 1) loses to two warm cells
        # on one path (each below cap, summing past 1) once capping is on
        grid = load_map("...\n...")
        table = RateEstimateTable(grid, initial_rate=0.0)
        table.p_hat[0, 2] = 0.9  # single hot target (2,0): 0.9*100 -> cap 1
        table.p_hat[1, 1] = 0.008
        table.p_hat[1, 2] = 0.008  # path (0,0)->(2,1): 2 cells * 0.8
        field = fresh_field(grid, ages=np.full((2, 3), 100.0))
        unbounded = greedy_select(table, field, grid, (0, 0), assume_unbounded=True)
        capped = greedy_select(table, field, grid, (0, 0), assume_unbounded=False)
        assert unbounded == (2, 0)
        assert capped == (2, 1)

    def test_position_must_be_free(self):
        grid = load_map(".#\n..")
        table = RateEstimateTable(grid)
        with pytest.raises(ValueError):
            greedy_select(table, fresh_field(grid), grid, (1, 0))


class TestGreedyAgent:
    def test_run_learns_and_reaches_horizon(self):
        grid = load_map(OPEN5)
        gen = BinomialGenerator(grid, {(4, 4): 0.4}, seed=3)
        sim = SweepSimulator(grid, gen, bound=1)
        agent = GreedyRateAgent(grid)
        agent.run(sim, horizon=600)
        assert sim.now >= 600
        assert sim.log.total_detections > 0
        # the hot cell's learned rate should clearly exceed a cold cell's
        assert agent.table.p_hat[4, 4] > agent.table.p_hat[0, 2]

    def test_observe_updates_only_traversed_cells(self):
        grid = load_map(OPEN5)
        gen = BinomialGenerator(grid, {}, seed=0)
        sim = SweepSimulator(grid, gen, bound=1, start=(0, 0))
        agent = GreedyRateAgent(grid)
        before = agent.table.p_hat.copy()
        sim.step((2, 0))
        agent.observe(sim)
        changed = {(x, y) for y, x in zip(*np.nonzero(agent.table.p_hat != before))}
        assert changed == {(1, 0), (2, 0)}


class TestPatrol:
    @staticmethod
    def assert_valid_cycle(plan: PatrolPlan, grid):
        cycle = plan.cycle
        assert set(cycle) == set(grid.free_cells())
        for i, cell in enumerate(cycle):
            nxt = cycle[(i + 1) % len(cycle)]
            dist = abs(cell[0] - nxt[0]) + abs(cell[1] - nxt[1])
            assert dist == 1 or (len(cycle) == 1 and dist == 0)

    def test_open_3x3_snake(self):
        grid = load_map("...\n...\n...")
        plan = plan_patrol(grid)
        self.assert_valid_cycle(plan, grid)
        assert plan.cycle[:9] == (
            (0, 0), (1, 0), (2, 0), (2, 1), (1, 1), (0, 1), (0, 2), (1, 2), (2, 2),
        )
        assert len(plan.cycle) == 12  # 9 scan cells + 3-cell return leg

    def test_walled_map_covered(self):
        from sweeprl.maps import builtin_map

        grid = builtin_map("office10")
        self.assert_valid_cycle(plan_patrol(grid), grid)

    def test_single_cell_map(self):
        grid = load_map(".")
        plan = plan_patrol(grid)
        assert plan.cycle == ((0, 0),)
        sim = SweepSimulator(grid, BinomialGenerator(grid, {}, seed=0), bound=1)
        agent = PatrolAgent(plan)
        agent.run(sim, horizon=5)
        assert sim.now >= 5

    def test_agent_walks_the_loop(self):
        grid = load_map("...\n...\n...")
        plan = plan_patrol(grid)
        gen = BinomialGenerator(grid, {}, seed=0)
        sim = SweepSimulator(grid, gen, bound=1, start=plan.cycle[0])
        agent = PatrolAgent(plan)
        seen = []
        for _ in range(len(plan.cycle)):
            sim.step(agent.act(sim))
            seen.append(sim.robot)
        assert set(seen) == set(grid.free_cells())
        assert sim.now == len(plan.cycle)  # every hop is one move
