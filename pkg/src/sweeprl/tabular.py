"""Exact solvers and a tabular learner for small semi-Markov decision processes.

These are the verification oracles for the deep learner: an average-reward
value-iteration solver (bisection on the gain with a damped relative
value-iteration inner loop), an exact per-policy gain evaluator backing
exhaustive policy enumeration, a tabular learner mirroring the deep training
loop, and a converter that abstracts a small gridworld with binomial event
cells into an enumerable SMDP.
"""
from __future__ import annotations

import itertools
from dataclasses import dataclass

import numpy as np

from .errors import NoConvergenceError, NotUnichainError
from .grid import Cell, GridMap, shortest_path
from .rewards import TrajectoryRewarder


@dataclass
class TabularSMDP:
    """Finite SMDP: per-(state, action) transition rows, sojourn seconds,
    and expected detections."""

    transitions: np.ndarray  # (S, A, S), rows sum to 1
    durations: np.ndarray  # (S, A), expected sojourn seconds, >= 1
    detections: np.ndarray  # (S, A), expected detections per decision
    start_state: int = 0
    state_labels: tuple[str, ...] | None = None
    action_labels: tuple[str, ...] | None = None

    def __post_init__(self):
        self.transitions = np.asarray(self.transitions, dtype=np.float64)
        self.durations = np.asarray(self.durations, dtype=np.float64)
        self.detections = np.asarray(self.detections, dtype=np.float64)
        s, a, s2 = self.transitions.shape
        if s != s2 or self.durations.shape != (s, a) or self.detections.shape != (s, a):
            raise ValueError("inconsistent SMDP array shapes")
        if np.any(self.transitions < 0):
            raise ValueError("negative transition probability")
        if not np.allclose(self.transitions.sum(axis=2), 1.0, atol=1e-9):
            raise ValueError("transition rows must sum to 1")
        if np.any(self.durations < 1.0):
            raise ValueError("sojourn times must be >= 1 second")
        if not np.all(np.isfinite(self.detections)) or np.any(self.detections < 0):
            raise ValueError("detections must be finite and >= 0")
        if not 0 <= self.start_state < s:
            raise ValueError("start_state out of range")

    @property
    def n_states(self) -> int:
        return self.transitions.shape[0]

    @property
    def n_actions(self) -> int:
        return self.transitions.shape[1]


def _reaches_all(adjacency: np.ndarray) -> bool:
    # Breadth-first closure from state 0 over a boolean adjacency matrix.
    visited = np.zeros(adjacency.shape[0], dtype=bool)
    visited[0] = True
    while True:
        frontier = adjacency[visited].any(axis=0) & ~visited
        if not frontier.any():
            return bool(visited.all())
        visited |= frontier


def assert_communicating(smdp: TabularSMDP) -> None:
    """Require the union-over-actions support graph to be strongly connected.

    This guarantees a constant optimal gain, which the bisection solver
    assumes.
    """
    support = smdp.transitions.max(axis=1) > 0.0
    if not (_reaches_all(support) and _reaches_all(support.T)):
        raise NotUnichainError("action-union support graph is not strongly connected")


def _bellman_q(smdp: TabularSMDP, rho: float, h: np.ndarray) -> np.ndarray:
    return smdp.detections - rho * smdp.durations + smdp.transitions @ h


def _damped_values(smdp: TabularSMDP, rho: float, max_sweeps: int):
    """Iterate h <- (h + T_rho(h)) / 2 until the increment is a constant
    vector; returns (h, per-sweep drift). The drift is positive iff the
    optimal gain exceeds rho."""
    h = np.zeros(smdp.n_states)
    for _ in range(max_sweeps):
        target = _bellman_q(smdp, rho, h).max(axis=1)
        new = 0.5 * (h + target)
        delta = new - h
        span = float(delta.max() - delta.min())
        if span < 1e-11 * max(1.0, float(np.abs(new).max())):
            return new - new[0], 2.0 * float(delta.mean())
        h = new - new[0]
    raise NoConvergenceError(
        f"relative value iteration did not settle in {max_sweeps} sweeps"
    )


def smdp_value_iteration(
    smdp: TabularSMDP, tolerance: float = 1e-9, max_sweeps: int = 200_000
) -> tuple[float, np.ndarray]:
    """Optimal average detections per second and differential values.

    Bisection on the gain: for a candidate rho, damped relative value
    iteration on the rho-adjusted problem drifts upward iff the achievable
    gain exceeds rho. Sojourn-weighted rate bounds bracket the search.
    """
    assert_communicating(smdp)
    rates = smdp.detections / smdp.durations
    lo = float(rates.min()) - tolerance
    hi = float(rates.max()) + tolerance
    while hi - lo > tolerance:
        mid = 0.5 * (lo + hi)
        _, drift = _damped_values(smdp, mid, max_sweeps)
        if drift > 0.0:
            lo = mid
        else:
            hi = mid
    rho = 0.5 * (lo + hi)
    h, _ = _damped_values(smdp, rho, max_sweeps)
    return rho, h


def greedy_policy(smdp: TabularSMDP, rho: float, h: np.ndarray) -> np.ndarray:
    """Per-state argmax of the rho-adjusted action values, ties to the
    lowest action index."""
    return _bellman_q(smdp, rho, h).argmax(axis=1)


def _strong_components(support: np.ndarray) -> list[list[int]]:
    # Kosaraju on a boolean adjacency matrix; graphs here are tiny.
    n = support.shape[0]
    adj = [np.flatnonzero(support[u]).tolist() for u in range(n)]
    radj = [np.flatnonzero(support[:, u]).tolist() for u in range(n)]
    order: list[int] = []
    seen = [False] * n
    for s0 in range(n):
        if seen[s0]:
            continue
        seen[s0] = True
        stack: list[tuple[int, int]] = [(s0, 0)]
        while stack:
            node, ptr = stack[-1]
            if ptr < len(adj[node]):
                stack[-1] = (node, ptr + 1)
                nxt = adj[node][ptr]
                if not seen[nxt]:
                    seen[nxt] = True
                    stack.append((nxt, 0))
            else:
                order.append(node)
                stack.pop()
    comp = [-1] * n
    comps: list[list[int]] = []
    for s0 in reversed(order):
        if comp[s0] != -1:
            continue
        cid = len(comps)
        comps.append([])
        todo = [s0]
        comp[s0] = cid
        while todo:
            u = todo.pop()
            comps[cid].append(u)
            for v in radj[u]:
                if comp[v] == -1:
                    comp[v] = cid
                    todo.append(v)
    return comps


def _stationary(p: np.ndarray) -> np.ndarray:
    # Unique stationary row vector of an irreducible stochastic matrix.
    n = p.shape[0]
    a = p.T - np.eye(n)
    a[-1, :] = 1.0
    b = np.zeros(n)
    b[-1] = 1.0
    mu = np.linalg.solve(a, b)
    mu = np.maximum(mu, 0.0)
    return mu / mu.sum()


def exact_policy_gain(
    smdp: TabularSMDP, policy: np.ndarray, start: int | None = None
) -> float:
    """Exact long-run detections per second of a deterministic policy.

    Handles multichain policies: each closed recurrent class contributes its
    stationary rate, and transient start states mix class rates by absorption
    probability.
    """
    start = smdp.start_state if start is None else start
    policy = np.asarray(policy, dtype=np.int64)
    rows = np.arange(smdp.n_states)
    p = smdp.transitions[rows, policy]
    d = smdp.detections[rows, policy]
    tau = smdp.durations[rows, policy]

    comps = _strong_components(p > 0.0)
    comp_of = np.empty(smdp.n_states, dtype=np.int64)
    for cid, members in enumerate(comps):
        comp_of[members] = cid
    closed = [
        members
        for members in comps
        if not np.any(p[np.ix_(members, [s for s in range(smdp.n_states)
                                         if comp_of[s] != comp_of[members[0]]])] > 0)
    ]

    gain = np.zeros(smdp.n_states)
    recurrent = np.zeros(smdp.n_states, dtype=bool)
    for members in closed:
        idx = np.asarray(members)
        mu = _stationary(p[np.ix_(idx, idx)])
        rate = float(mu @ d[idx]) / float(mu @ tau[idx])
        gain[idx] = rate
        recurrent[idx] = True
    if recurrent[start]:
        return float(gain[start])

    transient = np.flatnonzero(~recurrent)
    q = p[np.ix_(transient, transient)]
    fundamental = np.linalg.solve(np.eye(transient.size) - q, np.eye(transient.size))
    mixed = np.zeros(smdp.n_states)
    for members in closed:
        idx = np.asarray(members)
        entry = p[np.ix_(transient, idx)].sum(axis=1)
        absorb = fundamental @ entry
        mixed[transient] += absorb * gain[idx[0]]
    return float(mixed[start])


def brute_force_gain(
    smdp: TabularSMDP, start: int | None = None
) -> tuple[float, np.ndarray]:
    """Best start-state gain over every deterministic stationary policy."""
    best = -np.inf
    best_policy: tuple[int, ...] | None = None
    for policy in itertools.product(range(smdp.n_actions), repeat=smdp.n_states):
        value = exact_policy_gain(smdp, np.asarray(policy), start)
        if value > best:
            best = value
            best_policy = policy
    return best, np.asarray(best_policy, dtype=np.int64)


def simulate_policy_dps(
    smdp: TabularSMDP,
    policy: np.ndarray,
    steps: int = 200_000,
    seed: int = 0,
    start: int | None = None,
) -> float:
    """Monte Carlo detections per second: sampled transitions, expected
    per-decision detections and sojourns."""
    policy = np.asarray(policy, dtype=np.int64)
    rows = np.arange(smdp.n_states)
    cum = np.cumsum(smdp.transitions[rows, policy], axis=1)
    d = smdp.detections[rows, policy]
    tau = smdp.durations[rows, policy]
    rng = np.random.default_rng(seed)
    draws = rng.random(steps)
    state = smdp.start_state if start is None else start
    total = 0.0
    elapsed = 0.0
    last = smdp.n_states - 1
    for k in range(steps):
        total += d[state]
        elapsed += tau[state]
        state = min(int(np.searchsorted(cum[state], draws[k], side="right")), last)
    return total / elapsed


@dataclass
class TabularRConfig:
    """Knobs for the tabular learner; defaults sized for 4-6 state SMDPs."""

    steps: int = 400_000
    q_lr: float = 0.1
    gain_lr: float = 1e-4
    epsilon: float = 0.3
    epsilon_final: float = 0.02
    near_greedy_gate: float = 1e-9
    tail_fraction: float = 0.25  # reported gain averages this final slice

    def __post_init__(self):
        if self.steps < 1 or self.q_lr <= 0 or self.gain_lr <= 0:
            raise ValueError("steps and learning rates must be positive")
        if not 0.0 < self.tail_fraction <= 1.0:
            raise ValueError("tail_fraction must be in (0, 1]")


def tabular_r_learning(
    smdp: TabularSMDP, config: TabularRConfig | None = None, seed: int = 0
) -> tuple[float, np.ndarray]:
    """Average-reward Q-learning with an exact table.

    Runs the same loop as the deep learner: epsilon-greedy behavior,
    cumulative-rate telescoped rewards, TD targets r - gain + max Q(s'), and
    a gain update gated to near-greedy samples. Epsilon decays linearly over
    the first half of training. The reported gain is the running estimate
    averaged over the final tail_fraction of steps, which strips update
    noise without altering the learning dynamics.
    """
    cfg = config or TabularRConfig()
    rng = np.random.default_rng(seed)
    q = np.zeros((smdp.n_states, smdp.n_actions))
    cum = np.cumsum(smdp.transitions, axis=2)
    rewarder = TrajectoryRewarder()
    gain = 0.0
    state = smdp.start_state
    last = smdp.n_states - 1
    decay_steps = cfg.steps // 2
    tail_start = int(cfg.steps * (1.0 - cfg.tail_fraction))
    tail_sum = 0.0
    tail_count = 0

    for step in range(cfg.steps):
        frac = min(step / decay_steps, 1.0) if decay_steps else 1.0
        eps = cfg.epsilon + frac * (cfg.epsilon_final - cfg.epsilon)
        if rng.random() < eps:
            action = int(rng.integers(smdp.n_actions))
        else:
            action = int(q[state].argmax())
        reward = rewarder.observe(
            smdp.detections[state, action], smdp.durations[state, action]
        )
        nxt = min(
            int(np.searchsorted(cum[state, action], rng.random(), side="right")), last
        )
        td = reward - gain + q[nxt].max() - q[state, action]
        near_greedy = abs(q[state, action] - q[state].max()) < cfg.near_greedy_gate
        q[state, action] += cfg.q_lr * td
        if near_greedy:
            gain += cfg.gain_lr * td
        if step >= tail_start:
            tail_sum += gain
            tail_count += 1
        state = nxt
    return tail_sum / tail_count, q.argmax(axis=1)


def gridworld_to_smdp(grid: GridMap, rates: dict[Cell, float]) -> TabularSMDP:
    """Abstract a gridworld with per-second binomial event cells (bound 1)
    into a fully observable SMDP.

    States pair the robot's cell with presence bits for the other event
    cells (the robot's own cell is always clear: arrival detection empties
    it). Actions move to an event cell along the shortest path; sojourn is
    the travel time (1 s for staying put). Spawns accumulate per second with
    saturation at one event per cell, and the arrival cell's detection
    covers anything that appeared en route.
    """
    cells = sorted(rates, key=lambda c: (c[1], c[0]))
    if not cells:
        raise ValueError("at least one event cell is required")
    for cell in cells:
        if not grid.is_free(cell):
            raise ValueError(f"event cell {cell} is not free")
        if not 0.0 < rates[cell] < 1.0:
            raise ValueError(f"rate at {cell} must be in (0, 1)")
    k = len(cells)
    probs = np.array([rates[c] for c in cells])

    dist = np.zeros((k, k), dtype=np.int64)
    for u in range(k):
        for v in range(k):
            if u == v:
                continue
            path = shortest_path(grid, cells[u], cells[v])
            dist[u, v] = len(path) - 1
            crossed = set(path[1:-1]) & set(cells)
            if crossed:
                raise ValueError(
                    f"shortest path {cells[u]}->{cells[v]} crosses event "
                    f"cells {sorted(crossed)}; abstraction unsupported"
                )

    states: list[tuple[int, tuple[int, ...]]] = []
    index: dict[tuple[int, tuple[int, ...]], int] = {}
    for r in range(k):
        for mask in range(1 << k):
            bits = tuple((mask >> i) & 1 for i in range(k))
            if bits[r]:
                continue
            index[(r, bits)] = len(states)
            states.append((r, bits))

    n = len(states)
    transitions = np.zeros((n, k, n))
    durations = np.zeros((n, k))
    detections = np.zeros((n, k))
    for s_idx, (r, bits) in enumerate(states):
        for v in range(k):
            dur = int(dist[r, v]) if v != r else 1
            hit = (1.0 - probs[v]) ** dur
            detections[s_idx, v] = 1.0 if bits[v] else 1.0 - hit
            durations[s_idx, v] = dur
            # Cells still empty after the move can have gained an event on
            # any of the dur seconds; occupied cells stay occupied.
            flips = [i for i in range(k) if i != v and bits[i] == 0]
            alphas = [1.0 - (1.0 - probs[i]) ** dur for i in flips]
            for combo in itertools.product((0, 1), repeat=len(flips)):
                prob = 1.0
                nxt_bits = [0 if i == v else bits[i] for i in range(k)]
                for flip_i, took, alpha in zip(flips, combo, alphas):
                    prob *= alpha if took else 1.0 - alpha
                    nxt_bits[flip_i] = took
                transitions[s_idx, v, index[(v, tuple(nxt_bits))]] += prob

    labels = tuple(
        f"robot@{cells[r][0]};{cells[r][1]} bits={''.join(map(str, bits))}"
        for r, bits in states
    )
    return TabularSMDP(
        transitions,
        durations,
        detections,
        start_state=index[(0, (0,) * k)],
        state_labels=labels,
        action_labels=tuple(f"{c[0]};{c[1]}" for c in cells),
    )
