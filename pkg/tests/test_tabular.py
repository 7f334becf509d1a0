"""Exact SMDP solvers, the tabular learner, and the gridworld abstraction."""
import itertools

import numpy as np
import pytest

from sweeprl.errors import NoConvergenceError, NotUnichainError
from sweeprl.grid import load_map
from sweeprl.tabular import (
    TabularRConfig,
    TabularSMDP,
    brute_force_gain,
    exact_policy_gain,
    greedy_policy,
    gridworld_to_smdp,
    simulate_policy_dps,
    smdp_value_iteration,
    tabular_r_learning,
)


def single_state_smdp():
    # one state, two actions: 1 detection per 2 s vs 1 detection per 4 s
    return TabularSMDP(
        transitions=np.ones((1, 2, 1)),
        durations=np.array([[2.0, 4.0]]),
        detections=np.array([[1.0, 1.0]]),
    )


def two_state_cycle():
    # deterministic swap; only the 0->1 leg detects anything
    transitions = np.zeros((2, 1, 2))
    transitions[0, 0, 1] = 1.0
    transitions[1, 0, 0] = 1.0
    return TabularSMDP(
        transitions=transitions,
        durations=np.ones((2, 1)),
        detections=np.array([[1.0], [0.0]]),
    )


def random_smdp(rng, n_states=4, n_actions=3):
    # dense positive rows keep the chain communicating under every policy
    transitions = rng.dirichlet(np.ones(n_states) * 2.0, size=(n_states, n_actions))
    transitions += 1e-3
    transitions /= transitions.sum(axis=2, keepdims=True)
    return TabularSMDP(
        transitions=transitions,
        durations=rng.uniform(1.0, 5.0, size=(n_states, n_actions)),
        detections=rng.uniform(0.0, 1.0, size=(n_states, n_actions)),
    )


class TestValueIteration:
    def test_single_state_picks_best_rate(self):
        rho, h = smdp_value_iteration(single_state_smdp())
        assert rho == pytest.approx(0.5, abs=1e-8)
        assert h[0] == 0.0

    def test_two_state_cycle_gain_and_values(self):
        rho, h = smdp_value_iteration(two_state_cycle())
        assert rho == pytest.approx(0.5, abs=1e-8)
        # Bellman residual at the fixed point: h0 - h1 = 1 - rho
        assert h[0] - h[1] == pytest.approx(0.5, abs=1e-7)

    def test_matches_exhaustive_enumeration(self):
        for seed in range(5):
            smdp = random_smdp(np.random.default_rng(seed))
            rho, _ = smdp_value_iteration(smdp)
            best, _ = brute_force_gain(smdp)
            assert rho == pytest.approx(best, abs=1e-7)

    def test_greedy_policy_achieves_the_gain(self):
        smdp = random_smdp(np.random.default_rng(42))
        rho, h = smdp_value_iteration(smdp)
        policy = greedy_policy(smdp, rho, h)
        assert exact_policy_gain(smdp, policy) == pytest.approx(rho, abs=1e-7)

    def test_disconnected_chain_rejected(self):
        transitions = np.zeros((2, 1, 2))
        transitions[0, 0, 0] = 1.0
        transitions[1, 0, 1] = 1.0
        smdp = TabularSMDP(
            transitions=transitions,
            durations=np.ones((2, 1)),
            detections=np.zeros((2, 1)),
        )
        with pytest.raises(NotUnichainError):
            smdp_value_iteration(smdp)

    def test_sweep_cap_raises(self):
        with pytest.raises(NoConvergenceError):
            smdp_value_iteration(two_state_cycle(), max_sweeps=1)

    def test_shape_validation(self):
        with pytest.raises(ValueError):
            TabularSMDP(
                transitions=np.ones((1, 1, 1)) * 0.5,  # row sums to 0.5
                durations=np.ones((1, 1)),
                detections=np.zeros((1, 1)),
            )
        with pytest.raises(ValueError):
            TabularSMDP(
                transitions=np.ones((1, 1, 1)),
                durations=np.full((1, 1), 0.5),  # sub-second sojourn
                detections=np.zeros((1, 1)),
            )


class TestExactPolicyGain:
    def test_cycle_rate(self):
        assert exact_policy_gain(two_state_cycle(), np.array([0, 0])) == 0.5

    def test_transient_start_mixes_absorbing_classes(self):
        # state 0 falls into self-loop 1 or self-loop 2 with equal chance
        transitions = np.zeros((3, 1, 3))
        transitions[0, 0, 1] = 0.5
        transitions[0, 0, 2] = 0.5
        transitions[1, 0, 1] = 1.0
        transitions[2, 0, 2] = 1.0
        smdp = TabularSMDP(
            transitions=transitions,
            durations=np.ones((3, 1)),
            detections=np.array([[0.0], [0.2], [0.6]]),
        )
        policy = np.zeros(3, dtype=np.int64)
        assert exact_policy_gain(smdp, policy, start=0) == pytest.approx(0.4)
        assert exact_policy_gain(smdp, policy, start=1) == pytest.approx(0.2)
        assert exact_policy_gain(smdp, policy, start=2) == pytest.approx(0.6)

    def test_sojourn_weighting(self):
        # equal detections, unequal sojourns: time-weighted, not per-decision
        transitions = np.zeros((2, 1, 2))
        transitions[0, 0, 1] = 1.0
        transitions[1, 0, 0] = 1.0
        smdp = TabularSMDP(
            transitions=transitions,
            durations=np.array([[1.0], [3.0]]),
            detections=np.array([[1.0], [1.0]]),
        )
        assert exact_policy_gain(smdp, np.array([0, 0])) == pytest.approx(0.5)


class TestMonteCarlo:
    def test_simulated_dps_matches_exact(self):
        smdp = random_smdp(np.random.default_rng(3))
        policy = np.array([0, 1, 2, 0])
        exact = exact_policy_gain(smdp, policy)
        simulated = simulate_policy_dps(smdp, policy, steps=200_000, seed=1)
        assert simulated == pytest.approx(exact, rel=0.02)


class TestTabularLearner:
    def test_single_state_learns_best_rate(self):
        config = TabularRConfig(steps=60_000)
        gain, policy = tabular_r_learning(single_state_smdp(), config, seed=0)
        assert gain == pytest.approx(0.5, abs=0.02)
        assert policy[0] == 0

    def test_two_state_cycle(self):
        config = TabularRConfig(steps=60_000)
        gain, _ = tabular_r_learning(two_state_cycle(), config, seed=1)
        assert gain == pytest.approx(0.5, abs=0.02)

    def test_config_validation(self):
        with pytest.raises(ValueError):
            TabularRConfig(steps=0)
        with pytest.raises(ValueError):
            TabularRConfig(tail_fraction=0.0)


GRID13 = load_map("...")  # 1x3 corridor


class TestGridworldAbstraction:
    def build(self):
        return gridworld_to_smdp(GRID13, {(0, 0): 0.1, (2, 0): 0.2})

    def test_state_and_action_counts(self):
        smdp = self.build()
        # robot at either event cell, the other cell empty or occupied
        assert smdp.n_states == 4
        assert smdp.n_actions == 2
        three = gridworld_to_smdp(
            load_map(".....\n.....\n....."),
            {(0, 0): 0.05, (4, 0): 0.05, (2, 2): 0.05},
        )
        assert three.n_states == 3 * 2 ** 2

    def test_rows_are_stochastic(self):
        smdp = self.build()
        assert np.allclose(smdp.transitions.sum(axis=2), 1.0)

    def test_hand_computed_move_transition(self):
        smdp = self.build()
        labels = list(smdp.state_labels)
        s = labels.index("robot@0;0 bits=00")
        to_empty = labels.index("robot@2;0 bits=00")
        to_filled = labels.index("robot@2;0 bits=10")
        move = list(smdp.action_labels).index("2;0")
        # travel takes 2 s; the home cell refills with 1 - 0.9^2
        assert smdp.durations[s, move] == 2.0
        assert smdp.detections[s, move] == pytest.approx(1.0 - 0.8 ** 2)
        assert smdp.transitions[s, move, to_filled] == pytest.approx(0.19)
        assert smdp.transitions[s, move, to_empty] == pytest.approx(0.81)

    def test_occupied_target_always_detects(self):
        smdp = self.build()
        labels = list(smdp.state_labels)
        s = labels.index("robot@0;0 bits=01")
        move = list(smdp.action_labels).index("2;0")
        assert smdp.detections[s, move] == 1.0

    def test_stay_detects_at_spawn_rate(self):
        smdp = self.build()
        labels = list(smdp.state_labels)
        s = labels.index("robot@0;0 bits=00")
        stay = list(smdp.action_labels).index("0;0")
        assert smdp.durations[s, stay] == 1.0
        assert smdp.detections[s, stay] == pytest.approx(0.1)

    def test_crossing_event_cell_rejected(self):
        with pytest.raises(ValueError):
            gridworld_to_smdp(
                GRID13, {(0, 0): 0.1, (1, 0): 0.1, (2, 0): 0.1}
            )

    def test_rate_validation(self):
        with pytest.raises(ValueError):
            gridworld_to_smdp(GRID13, {})
        with pytest.raises(ValueError):
            gridworld_to_smdp(GRID13, {(0, 0): 0.0})

    def test_value_iteration_matches_enumeration_on_abstraction(self):
        smdp = self.build()
        rho, _ = smdp_value_iteration(smdp)
        best, _ = brute_force_gain(smdp)
        assert rho == pytest.approx(best, abs=1e-8)

    def test_policy_count_is_enumerable(self):
        smdp = self.build()
        policies = list(
            itertools.product(range(smdp.n_actions), repeat=smdp.n_states)
        )
        assert len(policies) == 16
