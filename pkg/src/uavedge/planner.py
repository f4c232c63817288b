"""Deep-Q path planner for the UAV fleet.

Observations are square urgency maps anchored to each UAV, discounted where
other UAVs already cover; a shared CNN scores the nine candidate moves.
Samples from all UAVs feed one central replay memory and trainer; the
per-action update rate shrinks for over-represented actions.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .neural import AdamState, QNetwork, optimizer_step

N_ACTIONS = 9


@dataclass
class PlannerConfig:
    gamma: float = 0.8
    alpha_max: float = 1.0
    balanced_alpha: bool = True
    eps0: float = 0.97
    eps_decay: float = 0.92
    eps_reset_period: int = 300
    target_sync_steps: int = 200
    batch_size: int = 32
    replay_capacity: int = 20000
    overlap_penalty: float = 8000.0
    step_length: float = 8.0
    path_slot_multiple: int = 5
    obs_resolution: int = 84
    obs_span: float = 252.0
    learning_rate: float = 2.5e-4
    reward_scale: float = 1.0
    trains_per_path_slot: int = 1

    def __post_init__(self):
        if not (0.0 <= self.gamma < 1.0):
            raise ValueError("gamma must be in [0, 1)")
        if not (0.0 < self.alpha_max <= 1.0):
            raise ValueError("alpha_max must be in (0, 1]")
        if self.obs_resolution < 2 or self.obs_span <= 0:
            raise ValueError("observation grid needs resolution >= 2, span > 0")


def action_set(v: float) -> np.ndarray:
    """The nine candidate displacements: eight compass steps of length v, then hover."""
    if v <= 0:
        raise ValueError("step length must be positive")
    moves = [(v * math.cos(m * math.pi / 4.0), v * math.sin(m * math.pi / 4.0))
             for m in range(8)]
    moves.append((0.0, 0.0))
    return np.array(moves)


@dataclass
class ObservationGrid:
    values: np.ndarray
    observation_span: float
    center: np.ndarray
    resolution: int


def cell_anchor(uav_pos, i: int, j: int, resolution: int, span: float):
    """Map position owned by grid cell (i, j), zero-based indices.

    Cells tile the span x span window centered on the UAV; cell (i, j) owns
    the pitch-sized box around (x - span/2 + pitch*(i + 1/2), ...).
    """
    pitch = span / resolution
    return (float(uav_pos[0]) - span / 2.0 + pitch * (i + 0.5),
            float(uav_pos[1]) - span / 2.0 + pitch * (j + 0.5))


def build_observation(uav_pos, sensor_positions, sensor_urgency,
                      other_uav_positions, coverage_radius: float,
                      area, resolution: int, span: float,
                      overlap_penalty: float) -> ObservationGrid:
    """Urgency map over an R x R grid of pitch span/R centered on the UAV.

    Each sensor inside the window adds its urgency to the cell whose anchor
    is nearest.  Cells covered by other UAVs are discounted by the overlap
    penalty per coverer, and cells outside the area are zeroed.
    """
    r_cells = resolution
    pitch = span / r_cells
    x0 = float(uav_pos[0]) - span / 2.0
    y0 = float(uav_pos[1]) - span / 2.0
    grid = np.zeros((r_cells, r_cells))

    sensor_positions = np.atleast_2d(sensor_positions)
    if sensor_positions.size:
        ii = np.floor((sensor_positions[:, 0] - x0) / pitch).astype(np.int64)
        jj = np.floor((sensor_positions[:, 1] - y0) / pitch).astype(np.int64)
        inside = (ii >= 0) & (ii < r_cells) & (jj >= 0) & (jj < r_cells)
        np.add.at(grid, (ii[inside], jj[inside]),
                  np.asarray(sensor_urgency, dtype=float)[inside])

    cell_x = x0 + pitch * (np.arange(r_cells) + 0.5)
    cell_y = y0 + pitch * (np.arange(r_cells) + 0.5)
    others = np.atleast_2d(other_uav_positions) if len(other_uav_positions) \
        else np.empty((0, 2))
    if len(others):
        dx = cell_x[:, None, None] - others[None, None, :, 0]
        dy = cell_y[None, :, None] - others[None, None, :, 1]
        covered = (dx * dx + dy * dy) <= coverage_radius ** 2
        grid -= overlap_penalty * covered.sum(axis=2)

    width, height = area
    out_x = (cell_x < 0.0) | (cell_x > width)
    out_y = (cell_y < 0.0) | (cell_y > height)
    grid[out_x, :] = 0.0
    grid[:, out_y] = 0.0

    return ObservationGrid(values=grid, observation_span=span,
                           center=np.asarray(uav_pos, dtype=float),
                           resolution=r_cells)


@dataclass
class ReplaySample:
    obs: ObservationGrid
    action_index: int
    reward: float
    next_obs: ObservationGrid

    def __post_init__(self):
        if not (0 <= self.action_index < N_ACTIONS):
            raise ValueError("action index out of range")


class ReplayMemory:
    """Fixed-capacity ring of interaction samples, oldest overwritten first."""

    def __init__(self, capacity: int):
        if capacity < 1:
            raise ValueError("capacity must be positive")
        self.capacity = capacity
        self._ring: list = []
        self._cursor = 0

    def push(self, sample: ReplaySample):
        if len(self._ring) < self.capacity:
            self._ring.append(sample)
        else:
            self._ring[self._cursor] = sample
        self._cursor = (self._cursor + 1) % self.capacity

    def __len__(self):
        return len(self._ring)

    def __getitem__(self, i):
        return self._ring[i]

    def sample_indices(self, batch_size: int, rng: np.random.Generator):
        if not self._ring:
            raise ValueError("replay memory is empty")
        return rng.integers(0, len(self._ring), size=batch_size)


class ActionStats:
    """Running per-action counts and their normalized frequencies."""

    def __init__(self, n_actions: int = N_ACTIONS):
        self.counts = np.zeros(n_actions, dtype=np.int64)

    def update(self, action_indices):
        for a in np.atleast_1d(action_indices):
            self.counts[int(a)] += 1

    @property
    def frequencies(self) -> np.ndarray:
        total = self.counts.sum()
        if total == 0:
            return np.zeros_like(self.counts, dtype=float)
        return self.counts / total


def select_action(obs: ObservationGrid, qnet, eps: float,
                  rng: np.random.Generator,
                  overlap_penalty: float = 8000.0) -> int:
    """Epsilon-greedy choice over the nine moves; greedy ties go to the lowest index."""
    if not (0.0 <= eps <= 1.0):
        raise ValueError("eps must be a probability")
    if rng.uniform() < eps:
        return int(rng.integers(0, N_ACTIONS))
    q = np.asarray(qnet.forward(obs.values / overlap_penalty)).reshape(-1)
    return int(np.argmax(q))


def epsilon_schedule(t_p: int, cfg: PlannerConfig) -> float:
    """Exploration rate at path slot t_p: geometric decay, periodic reset."""
    if t_p < 0:
        raise ValueError("t_p must be non-negative")
    return cfg.eps0 * cfg.eps_decay ** (t_p % cfg.eps_reset_period)


def compute_update_rate(stats: ActionStats, action_index: int, t_p: int,
                        alpha_max: float, balanced: bool = True) -> float:
    """Per-sample update rate; frequent actions and late slots update less.

    An action never seen yet has no frequency estimate and gets the full
    rate.  With balancing off, the rate is the plain inverse-root schedule.
    """
    if t_p < 1:
        raise ValueError("t_p must be >= 1")
    if not balanced:
        return min(alpha_max, 1.0 / math.sqrt(t_p))
    rho = float(stats.frequencies[action_index])
    if rho == 0.0:
        return alpha_max
    return min(alpha_max, 1.0 / (rho * math.sqrt(t_p)))


def compute_target(sample: ReplaySample, qnet, target_net, alpha: float,
                   gamma: float, overlap_penalty: float = 8000.0):
    """Blended one-step target for the taken action; other actions carry no loss."""
    q_now = np.asarray(qnet.forward(
        sample.obs.values / overlap_penalty)).reshape(-1)
    q_next = np.asarray(target_net.forward(
        sample.next_obs.values / overlap_penalty)).reshape(-1)
    y = alpha * (sample.reward + gamma * float(q_next.max())) \
        + (1.0 - alpha) * float(q_now[sample.action_index])
    return y, sample.action_index


def path_reward(bits_collected: float, reward_scale: float) -> float:
    """Reward of one path slot: data bits gathered, rescaled to unit order."""
    return bits_collected * reward_scale


class PlannerTrainer:
    """Central trainer: one shared online net, a lagged target net, and stats."""

    def __init__(self, cfg: PlannerConfig, rng: np.random.Generator,
                 n_actions: int = N_ACTIONS):
        self.cfg = cfg
        self.qnet = QNetwork(cfg.obs_resolution, n_actions, rng)
        self.target_net = self.qnet.clone()
        self.stats = ActionStats(n_actions)
        self.memory = ReplayMemory(cfg.replay_capacity)
        self.adam = AdamState(learning_rate=cfg.learning_rate)
        self.train_calls = 0

    def train_step(self, t_p: int, rng: np.random.Generator) -> float:
        """One batch update from replay; returns the batch MSE loss."""
        cfg = self.cfg
        idx = self.memory.sample_indices(cfg.batch_size, rng)
        batch = [self.memory[i] for i in idx]

        obs = np.stack([s.obs.values for s in batch]) / cfg.overlap_penalty
        next_obs = np.stack([s.next_obs.values
                             for s in batch]) / cfg.overlap_penalty
        actions = np.array([s.action_index for s in batch])
        rewards = np.array([s.reward for s in batch])

        q_next = self.target_net.forward(next_obs).max(axis=1)
        q_now = self.qnet.forward(obs, keep_cache=True)
        taken = q_now[np.arange(len(batch)), actions]

        alphas = np.array([compute_update_rate(self.stats, int(a),
                                               max(t_p, 1), cfg.alpha_max,
                                               cfg.balanced_alpha)
                           for a in actions])
        targets = alphas * (rewards + cfg.gamma * q_next) \
            + (1.0 - alphas) * taken

        residual = taken - targets
        loss = float(np.mean(residual ** 2))
        dout = np.zeros_like(q_now)
        dout[np.arange(len(batch)), actions] = 2.0 * residual / len(batch)
        grads = self.qnet.backward(dout)
        optimizer_step(self.qnet.params, grads, self.adam)

        self.stats.update(actions)
        self.train_calls += 1
        if self.train_calls % cfg.target_sync_steps == 0:
            self.target_net.copy_weights_from(self.qnet)
        return loss
