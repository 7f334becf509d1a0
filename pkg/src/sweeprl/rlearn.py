"""Deep average-reward learning on an encoder-decoder action-value network.

The network maps the C x H x W state tensor to an H x W grid of action
values, one per target cell. Training keeps a running gain estimate (the
average reward per step) alongside the network: targets are
r - gain + q_next, and the gain moves by gain_lr times the mean TD error of
the near-greedy samples in the batch. Target-network evaluation at the
online network's argmax (double-Q) supplies q_next.
"""
from __future__ import annotations

import csv
from dataclasses import dataclass

import numpy as np

from .encoding import EncodingConfig, encode_state
from .errors import EmptyMaskError, MapTooSmallError, ReplayTooSmallError
from .grid import Cell, GridMap
from .net import Network, load_network, make_optimizer, save_network
from .net.layers import Conv2D, Deconv2D, Dense, MaxPool2, ReLU, Upsample2
from .rewards import TrajectoryRewarder
from .sim import SweepSimulator, metric_dps

# Encoder shape plans: (filters, kernel, stride) per conv, pool after the
# first conv, dense width last. The full plan matches the reference
# architecture for 20x20 maps; the quarter plan halves filter counts,
# kernels, and strides to keep small-map training cheap.
PLANS: dict[str, dict] = {
    "full": {"convs": [(32, 5, 3), (16, 4, 2), (16, 4, 2)], "dense": 500},
    "quarter": {"convs": [(16, 3, 2), (8, 2, 1), (8, 2, 1)], "dense": 250},
}
# Maps up to this size default to the quarter plan.
QUARTER_PLAN_LIMIT = 12


@dataclass
class AgentConfig:
    """All learner knobs. Defaults follow the reference experiment scale."""

    optimizer_lr: float = 0.001
    gain_lr: float = 0.0001
    near_greedy_gate: float = 0.05  # delta: Q-gap width counted as near-greedy
    target_sync_period: int = 500
    epsilon: float = 0.1
    epsilon_final: float | None = None  # linear schedule endpoint, None = constant
    epsilon_decay_steps: int = 0
    batch_size: int = 32
    replay_capacity: int = 100_000
    warmup: int = 1_000  # stored transitions before training starts
    reset_interval: int = 50
    eval_interval: int = 20_000
    patience: int = 10
    eval_steps: int = 2_000
    max_steps: int = 500_000
    restarts: int = 1  # independent training runs; best by evaluation DPS wins
    optimizer: str = "adam"
    plan: str | None = None  # network shape plan override

    def __post_init__(self):
        if self.optimizer_lr <= 0 or self.gain_lr <= 0:
            raise ValueError("learning rates must be > 0")
        if self.near_greedy_gate <= 0:
            raise ValueError("near_greedy_gate must be > 0")
        if self.target_sync_period < 1:
            raise ValueError("target_sync_period must be >= 1")
        for eps in (self.epsilon, self.epsilon_final):
            if eps is not None and not 0.0 <= eps <= 1.0:
                raise ValueError("epsilon values must be in [0, 1]")
        if self.replay_capacity < self.batch_size:
            raise ValueError("replay capacity must be >= batch size")
        if self.restarts < 1:
            raise ValueError("restarts must be >= 1")

    def epsilon_at(self, step: int) -> float:
        if self.epsilon_final is None or self.epsilon_decay_steps <= 0:
            return self.epsilon
        frac = min(max(step, 0) / self.epsilon_decay_steps, 1.0)
        return self.epsilon + frac * (self.epsilon_final - self.epsilon)


def _conv_pad(size: int, kernel: int, stride: int, want_even: bool) -> int | None:
    # Smallest per-axis zero padding giving a valid (and, ahead of a pooling
    # layer, even) output extent. Capped at kernel // 2 so a window always
    # covers at least one real input cell.
    for pad in range(kernel // 2 + 1):
        if size + 2 * pad < kernel:
            continue
        out = (size + 2 * pad - kernel) // stride + 1
        if want_even and out % 2 != 0:
            continue
        return pad
    return None


def build_qnetwork(
    height: int,
    width: int,
    channels: int,
    plan: str | None = None,
    dtype=np.float32,
    rng: np.random.Generator | None = None,
) -> Network:
    """Build the encoder-decoder value network for an H x W map.

    The encoder is conv / pool / conv / conv / dense; the decoder mirrors it
    with dense / deconv / deconv / upsample / deconv, ending in a single
    channel of per-cell action values with the input's spatial size.
    Paddings are chosen per layer so the shape chain works out; transposed
    convolutions record the output padding needed to undo flooring.
    """
    if plan is None:
        plan = "quarter" if max(height, width) <= QUARTER_PLAN_LIMIT else "full"
    if plan not in PLANS:
        raise ValueError(f"unknown plan {plan!r}")
    convs = PLANS[plan]["convs"]
    dense_width = PLANS[plan]["dense"]
    rng = rng or np.random.default_rng(0)

    sizes = [(height, width)]
    chans = [channels]
    pads: list[tuple[int, int]] = []
    h, w = height, width
    for idx, (filters, kernel, stride) in enumerate(convs):
        pool_next = idx == 0
        ph = _conv_pad(h, kernel, stride, pool_next)
        pw = _conv_pad(w, kernel, stride, pool_next)
        if ph is None or pw is None:
            raise MapTooSmallError(
                f"{height}x{width} map does not admit the {plan!r} shape plan"
            )
        pads.append((ph, pw))
        h = (h + 2 * ph - kernel) // stride + 1
        w = (w + 2 * pw - kernel) // stride + 1
        sizes.append((h, w))
        chans.append(filters)
        if pool_next:
            h, w = h // 2, w // 2
            sizes.append((h, w))
            chans.append(filters)

    encoder: list = []
    (f1, k1, s1), (f2, k2, s2), (f3, k3, s3) = convs
    encoder.append(Conv2D(channels, f1, k1, s1, pads[0], rng=rng, dtype=dtype))
    encoder.append(ReLU())
    encoder.append(MaxPool2())
    encoder.append(Conv2D(f1, f2, k2, s2, pads[1], rng=rng, dtype=dtype))
    encoder.append(ReLU())
    encoder.append(Conv2D(f2, f3, k3, s3, pads[2], rng=rng, dtype=dtype))
    encoder.append(ReLU())
    bottleneck_h, bottleneck_w = sizes[4]
    flat = f3 * bottleneck_h * bottleneck_w
    encoder.append(Dense(flat, dense_width, rng=rng, dtype=dtype))
    encoder.append(ReLU())

    def out_pad(in_size: tuple[int, int], pad: tuple[int, int], kernel: int,
                stride: int) -> tuple[int, int]:
        return (
            (in_size[0] + 2 * pad[0] - kernel) % stride,
            (in_size[1] + 2 * pad[1] - kernel) % stride,
        )

    decoder: list = [
        Dense(dense_width, flat, out_shape=(f3, bottleneck_h, bottleneck_w),
              rng=rng, dtype=dtype),
        ReLU(),
        Deconv2D(f3, f2, k3, s3, pads[2], out_pad(sizes[3], pads[2], k3, s3),
                 rng=rng, dtype=dtype),
        ReLU(),
        Deconv2D(f2, f1, k2, s2, pads[1], out_pad(sizes[2], pads[1], k2, s2),
                 rng=rng, dtype=dtype),
        ReLU(),
        Upsample2(),
        Deconv2D(f1, 1, k1, s1, pads[0], out_pad(sizes[0], pads[0], k1, s1),
                 rng=rng, dtype=dtype),
    ]
    return Network(encoder + decoder, dtype=dtype)


class ReplayBuffer:
    """Bounded FIFO transition store over preallocated arrays."""

    def __init__(self, capacity: int):
        if capacity < 1:
            raise ValueError("capacity must be >= 1")
        self.capacity = int(capacity)
        self.size = 0
        self._next = 0
        self._states: np.ndarray | None = None
        self._actions = np.zeros(self.capacity, dtype=np.int64)
        self._rewards = np.zeros(self.capacity, dtype=np.float32)
        self._next_states: np.ndarray | None = None

    def push(self, state: np.ndarray, action: int, reward: float,
             next_state: np.ndarray) -> None:
        if self._states is None:
            shape = (self.capacity, *state.shape)
            self._states = np.zeros(shape, dtype=np.float32)
            self._next_states = np.zeros(shape, dtype=np.float32)
        i = self._next
        self._states[i] = state
        self._actions[i] = action
        self._rewards[i] = reward
        self._next_states[i] = next_state
        self._next = (i + 1) % self.capacity
        self.size = min(self.size + 1, self.capacity)

    def sample(self, rng: np.random.Generator, batch: int):
        idx = rng.integers(0, self.size, size=batch)
        return (
            self._states[idx],
            self._actions[idx],
            self._rewards[idx],
            self._next_states[idx],
        )


def select_action(
    net: Network,
    state: np.ndarray,
    epsilon: float,
    mask: np.ndarray,
    rng: np.random.Generator,
) -> int:
    """Epsilon-greedy over free cells; returns a flat row-major cell index."""
    flat_mask = np.asarray(mask, dtype=bool).ravel()
    free = np.flatnonzero(flat_mask)
    if free.size == 0:
        raise EmptyMaskError("no free cells to act on")
    if epsilon > 0 and rng.random() < epsilon:
        return int(free[rng.integers(free.size)])
    q = net.forward(state[None])[0, 0].ravel()
    q = np.where(flat_mask, q, -np.inf)
    return int(np.argmax(q))  # first max wins: lowest row-major index


def masked_argmax_batch(q: np.ndarray, flat_mask: np.ndarray) -> np.ndarray:
    """Row-wise masked argmax over (B, cells) values."""
    masked = np.where(flat_mask[None, :], q, -np.inf)
    return masked.argmax(axis=1)


@dataclass
class StepDiagnostics:
    mean_td_error: float
    gated_count: int
    gain_delta: float
    gain: float


class DeepRAgent:
    """Online network, target network, gain estimate, and replay store."""

    def __init__(
        self,
        grid: GridMap,
        encoding: EncodingConfig,
        config: AgentConfig | None = None,
        seed: int = 0,
    ):
        self.grid = grid
        self.encoding = encoding
        self.config = config or AgentConfig()
        self.rng = np.random.default_rng(seed)
        self.net = build_qnetwork(
            grid.height, grid.width, encoding.channels,
            plan=self.config.plan, rng=self.rng,
        )
        self.target_net = self.net.copy()
        self.optimizer = make_optimizer(self.config.optimizer, self.config.optimizer_lr)
        self.replay = ReplayBuffer(self.config.replay_capacity)
        self.gain = 0.0
        self.step_count = 0
        self._flat_mask = grid.free_mask().ravel()

    # -- acting --

    def act(self, state: np.ndarray, epsilon: float) -> int:
        return select_action(self.net, state, epsilon, self.grid.free_mask(), self.rng)

    def greedy_cell(self, state: np.ndarray) -> Cell:
        return self.grid.cell_from_index(self.act(state, epsilon=0.0))

    # -- learning --

    def train_step(self) -> StepDiagnostics:
        cfg = self.config
        if self.replay.size < cfg.batch_size:
            raise ReplayTooSmallError(
                f"replay holds {self.replay.size} < batch {cfg.batch_size}"
            )
        states, actions, rewards, next_states = self.replay.sample(self.rng, cfg.batch_size)
        batch = states.shape[0]
        cells = self.grid.height * self.grid.width

        rows = np.arange(batch)
        q_next_online = self.net.forward(next_states).reshape(batch, cells)
        next_greedy = masked_argmax_batch(q_next_online, self._flat_mask)
        q_next_target = self.target_net.forward(next_states).reshape(batch, cells)
        q_max = q_next_target[rows, next_greedy]

        # This forward must come last: backward() consumes the layer caches
        # of the most recent forward pass, which has to be the states batch.
        q_all = self.net.forward(states).reshape(batch, cells)
        q_sa = q_all[rows, actions]

        targets = rewards - self.gain + q_max
        td_errors = targets - q_sa

        # Mean squared regression toward the frozen targets: only the taken
        # action's output receives gradient.
        grad = np.zeros((batch, cells), dtype=self.net.dtype)
        grad[rows, actions] = -2.0 * td_errors / batch
        self.net.zero_gradients()
        self.net.backward(grad.reshape(batch, 1, self.grid.height, self.grid.width))
        self.optimizer.step(self.net.parameters(), self.net.gradients())

        # Gain update from samples whose taken action was near-greedy.
        greedy_value = np.where(self._flat_mask[None, :], q_all, -np.inf).max(axis=1)
        gap = np.abs(q_sa - greedy_value)
        near_greedy = gap < cfg.near_greedy_gate
        gain_delta = 0.0
        if near_greedy.any():
            gain_delta = float(td_errors[near_greedy].mean())
            self.gain += cfg.gain_lr * gain_delta

        self.step_count += 1
        if self.step_count % cfg.target_sync_period == 0:
            self.target_net.set_parameters_from(self.net)
        return StepDiagnostics(
            mean_td_error=float(td_errors.mean()),
            gated_count=int(near_greedy.sum()),
            gain_delta=gain_delta,
            gain=self.gain,
        )

    # -- persistence --

    def save(self, path: str) -> None:
        save_network(
            self.net,
            path,
            extra={
                "gain": self.gain,
                "step_count": self.step_count,
                "channels": self.encoding.channels,
                "uncertainty_rate": self.encoding.uncertainty_rate,
                "person_channel": self.encoding.include_person_channel,
                "furniture_channel": self.encoding.include_furniture_channel,
            },
        )


def load_agent(path: str, grid: GridMap, config: AgentConfig | None = None,
               seed: int = 0) -> DeepRAgent:
    network, extra = load_network(path)
    encoding = EncodingConfig(
        uncertainty_rate=extra.get("uncertainty_rate", 0.02),
        include_person_channel=extra.get("person_channel", False),
        include_furniture_channel=extra.get("furniture_channel", False),
    )
    agent = DeepRAgent(grid, encoding, config, seed=seed)
    agent.net = network
    agent.target_net = network.copy()
    agent.gain = float(extra.get("gain", 0.0))
    agent.step_count = int(extra.get("step_count", 0))
    return agent


def evaluate_policy(agent: DeepRAgent, sim: SweepSimulator, steps: int) -> float:
    """Greedy rollout for a fixed number of decision steps; returns DPS."""
    for _ in range(steps):
        state = encode_state(sim, agent.encoding)
        sim.step(agent.grid.cell_from_index(agent.act(state, epsilon=0.0)))
    return metric_dps(sim.log)


@dataclass
class DiagnosticsRow:
    step: int
    gain: float
    mean_td_error: float
    eval_dps: float


def write_diagnostics_csv(rows: list[DiagnosticsRow], path: str) -> None:
    with open(path, "w", newline="") as handle:
        writer = csv.writer(handle)
        writer.writerow(["step", "gain", "mean_td_error", "eval_dps"])
        for row in rows:
            writer.writerow([row.step, row.gain, row.mean_td_error, row.eval_dps])


def explore_loop(
    train_sim: SweepSimulator,
    agent: DeepRAgent,
    eval_sim_factory,
    config: AgentConfig | None = None,
) -> list[DiagnosticsRow]:
    """Train until the evaluation DPS stops improving or the step cap hits.

    Alternates reset_interval-step epsilon-greedy rollouts with random
    repositioning. Every eval_interval steps a fresh simulator from
    eval_sim_factory is rolled out greedily for eval_steps decisions; when
    the best evaluation has not improved for `patience` evaluations training
    stops and the best-scoring parameters are restored.
    """
    cfg = config or agent.config
    rewarder = TrajectoryRewarder()
    free = agent.grid.free_cells()
    state = encode_state(train_sim, agent.encoding)
    rows: list[DiagnosticsRow] = []
    best_dps = -np.inf
    best_params: Network | None = None
    evals_since_best = 0
    last_td = 0.0

    for step in range(1, cfg.max_steps + 1):
        action = agent.act(state, cfg.epsilon_at(step))
        outcome = train_sim.step(agent.grid.cell_from_index(action))
        step_reward = rewarder.observe(outcome.detections, outcome.duration)
        next_state = encode_state(train_sim, agent.encoding)
        agent.replay.push(state, action, step_reward, next_state)
        state = next_state

        if agent.replay.size >= max(cfg.warmup, cfg.batch_size):
            last_td = agent.train_step().mean_td_error

        if step % cfg.reset_interval == 0:
            train_sim.reposition(free[int(agent.rng.integers(len(free)))])
            state = encode_state(train_sim, agent.encoding)

        if step % cfg.eval_interval == 0:
            dps = evaluate_policy(agent, eval_sim_factory(), cfg.eval_steps)
            rows.append(DiagnosticsRow(step, agent.gain, last_td, dps))
            if dps > best_dps:
                best_dps = dps
                best_params = agent.net.copy()
                evals_since_best = 0
            else:
                evals_since_best += 1
                if evals_since_best >= cfg.patience:
                    break
    if best_params is not None:
        agent.net.set_parameters_from(best_params)
        agent.target_net.set_parameters_from(best_params)
    return rows
