"""Two-timescale network simulation.

System slots advance sensors, uplinks, scheduling, and queues; every few
system slots a path slot moves the UAVs (randomly or by the learned
planner).  Every random draw comes from a stream derived from the master
seed and a fixed purpose label, so runs are exactly reproducible and
subsystems stay decoupled from each other's draw counts.
"""

from __future__ import annotations

from dataclasses import dataclass, field as dc_field, replace

import numpy as np

from .channel import (AgChannelParams, OffloadChannelParams, mean_offload_gain,
                      offload_capacity, optimal_altitude)
from .edge import EdgeParams, edge_power, edge_throughput, queue_update
from .field import FieldConfig, SensorField
from .planner import (N_ACTIONS, PlannerConfig, PlannerTrainer, ReplaySample,
                      action_set, build_observation, epsilon_schedule,
                      path_reward, select_action)
from .scheduler import (SchedulerConfig, SchedulerDecision, default_epsilon_floor,
                        lyapunov_drift_bound, optimal_frequency, optimal_power,
                        p2b_objective, schedule_slot)

POLICIES = ("learned", "random-path", "even-bandwidth", "edge-only",
            "transmit-only", "max-load")

CSV_HEADER = "slot,avg_urgency,avg_queue_bits,weighted_power_w,policy,seed"

_STREAMS = {"placement": 1, "uav_init": 2, "arrivals": 3, "fading": 4,
            "exploration": 5, "weights": 6, "replay": 7}


def seeded_stream(seed: int, label: str) -> np.random.Generator:
    """Independent generator for one subsystem of one run."""
    return np.random.default_rng([int(seed), _STREAMS[label]])


@dataclass
class SimConfig:
    seed: int = 0
    duration_slots: int = 1000
    policy: str = "random-path"
    uav_count: int = 3
    coverage_radius: float = 60.0
    slot_tau: float = 0.5
    field: FieldConfig = dc_field(default_factory=FieldConfig)
    ag: AgChannelParams = dc_field(default_factory=AgChannelParams)
    offload: OffloadChannelParams = dc_field(default_factory=OffloadChannelParams)
    edge: EdgeParams = dc_field(default_factory=EdgeParams)
    scheduler: SchedulerConfig = dc_field(default_factory=SchedulerConfig)
    planner: PlannerConfig = dc_field(default_factory=PlannerConfig)
    checkpoint_path: str = ""
    assert_lemma1: bool = False

    def __post_init__(self):
        if self.duration_slots < 0:
            raise ValueError("duration_slots must be >= 0")
        if self.uav_count < 1:
            raise ValueError("uav_count must be >= 1")
        if self.policy not in POLICIES:
            raise ValueError(f"unknown policy {self.policy!r}")


def normalized_config(cfg: SimConfig) -> SimConfig:
    """Fill the couplings the dataclass defaults cannot express.

    Per-UAV weight is 1/K and the band-share floor defaults to
    min(0.01, 1/(2K)) unless explicitly overridden.
    """
    edge = replace(cfg.edge, weight=1.0 / cfg.uav_count)
    eps = cfg.scheduler.epsilon_floor
    if eps * cfg.uav_count > 1.0:
        eps = default_epsilon_floor(cfg.uav_count)
    sched = replace(cfg.scheduler, epsilon_floor=eps)
    return replace(cfg, edge=edge, scheduler=sched)


@dataclass
class MetricsRecord:
    slot: int
    avg_urgency: float
    avg_queue_bits: float
    weighted_power_w: float
    queues: np.ndarray
    powers: np.ndarray


class MetricsWriter:
    """Streams rows to CSV with a fixed schema, flushing every 100 slots."""

    def __init__(self, path, policy: str, seed: int):
        self.path = path
        self.policy = policy
        self.seed = seed
        self._fh = open(path, "w", newline="") if path else None
        if self._fh:
            self._fh.write(CSV_HEADER + "\n")
        self._since_flush = 0

    def write(self, rec: MetricsRecord):
        if not self._fh:
            return
        self._fh.write(f"{rec.slot},{rec.avg_urgency!r},{rec.avg_queue_bits!r},"
                       f"{rec.weighted_power_w!r},{self.policy},{self.seed}\n")
        self._since_flush += 1
        if self._since_flush >= 100:
            self._fh.flush()
            self._since_flush = 0

    def close(self):
        if self._fh:
            self._fh.close()
            self._fh = None


class World:
    """Mutable simulation state: the sensor field, the fleet, and the queues."""

    def __init__(self, cfg: SimConfig, field_override: SensorField = None):
        cfg = normalized_config(cfg)
        self.cfg = cfg
        self.rng_arrivals = seeded_stream(cfg.seed, "arrivals")
        self.rng_fading = seeded_stream(cfg.seed, "fading")
        self.rng_explore = seeded_stream(cfg.seed, "exploration")
        self.rng_replay = seeded_stream(cfg.seed, "replay")

        self.field = field_override if field_override is not None else \
            SensorField(cfg.field, seeded_stream(cfg.seed, "placement"))
        width, height = cfg.field.area
        init = seeded_stream(cfg.seed, "uav_init")
        self.uav_positions = np.column_stack([
            init.uniform(0.0, width, size=cfg.uav_count),
            init.uniform(0.0, height, size=cfg.uav_count)])
        self.altitude = optimal_altitude(cfg.coverage_radius, cfg.ag)
        self.queues = np.zeros(cfg.uav_count)

        uplink_bits = cfg.field.uplink_rate * cfg.slot_tau
        self.a_u_max = self.field.max_coverable_count(cfg.coverage_radius) \
            * uplink_bits
        self.reward_scale = 1.0 / max(self.a_u_max
                                      * cfg.planner.path_slot_multiple, 1.0)
        self.actions = action_set(cfg.planner.step_length)
        self.warm_decision = None
        self.drift_margins: list = []

    def mean_gains(self) -> np.ndarray:
        return np.array([mean_offload_gain(self.uav_positions[k],
                                           self.altitude, self.cfg.offload)
                         for k in range(self.cfg.uav_count)])

    def sample_gains(self) -> np.ndarray:
        fades = self.rng_fading.exponential(1.0, size=self.cfg.uav_count)
        return fades * self.mean_gains()


def _even_bandwidth_decision(world: World, gains) -> SchedulerDecision:
    cfg = world.cfg
    k = cfg.uav_count
    shares = np.full(k, 1.0 / k)
    freqs = np.array([optimal_frequency(q, cfg.edge, cfg.scheduler,
                                        cfg.slot_tau) for q in world.queues])
    powers = np.array([optimal_power(world.queues[i], shares[i], gains[i],
                                     cfg.offload, cfg.edge.weight,
                                     cfg.scheduler.v_tradeoff, cfg.slot_tau,
                                     cfg.edge.p_max) for i in range(k)])
    return SchedulerDecision(freqs, powers, shares, 0.0, 0)


def _edge_only_decision(world: World, gains) -> SchedulerDecision:
    cfg = world.cfg
    k = cfg.uav_count
    freqs = np.array([optimal_frequency(q, cfg.edge, cfg.scheduler,
                                        cfg.slot_tau) for q in world.queues])
    return SchedulerDecision(freqs, np.zeros(k),
                             np.full(k, cfg.scheduler.epsilon_floor), 0.0, 0)


def _transmit_only_decision(world: World, gains) -> SchedulerDecision:
    cfg = world.cfg
    warm_lam = world.warm_decision.dual_multiplier if world.warm_decision \
        else 0.0
    dec = schedule_slot(world.queues, gains, cfg.edge, cfg.offload,
                        cfg.scheduler, cfg.slot_tau,
                        warm=world.warm_decision, warm_lam=warm_lam)
    dec.freqs = np.zeros(cfg.uav_count)
    dec.objective = p2b_objective(dec, world.queues, gains, cfg.edge,
                                  cfg.offload, cfg.scheduler, cfg.slot_tau)
    world.warm_decision = dec
    return dec


def _max_load_decision(world: World, gains) -> SchedulerDecision:
    cfg = world.cfg
    k = cfg.uav_count
    return SchedulerDecision(np.full(k, cfg.edge.f_max),
                             np.full(k, cfg.edge.p_max),
                             np.full(k, 1.0 / k), 0.0, 0)


def _lyapunov_decision(world: World, gains) -> SchedulerDecision:
    cfg = world.cfg
    warm_lam = world.warm_decision.dual_multiplier if world.warm_decision \
        else 0.0
    dec = schedule_slot(world.queues, gains, cfg.edge, cfg.offload,
                        cfg.scheduler, cfg.slot_tau,
                        warm=world.warm_decision, warm_lam=warm_lam)
    world.warm_decision = dec
    return dec


_SCHEDULING = {
    "learned": _lyapunov_decision,
    "random-path": _lyapunov_decision,
    "even-bandwidth": _even_bandwidth_decision,
    "edge-only": _edge_only_decision,
    "transmit-only": _transmit_only_decision,
    "max-load": _max_load_decision,
}


def run_system_slot(world: World, slot: int,
                    collected_accumulator=None) -> MetricsRecord:
    """Advance one system slot and return its metrics row."""
    cfg = world.cfg
    delivered, generated, moved = world.field.step_slot(
        world.uav_positions, cfg.coverage_radius, cfg.slot_tau,
        world.rng_arrivals)

    gains = world.sample_gains()
    decision = _SCHEDULING[cfg.policy](world, gains)

    d_l = np.array([edge_throughput(f, cfg.edge, cfg.slot_tau)
                    for f in decision.freqs])
    d_tm = np.array([offload_capacity(decision.band_shares[i],
                                      decision.powers[i], gains[i],
                                      cfg.offload, cfg.slot_tau)
                     for i in range(cfg.uav_count)])
    powers = np.array([edge_power(f, cfg.edge) for f in decision.freqs]) \
        + decision.powers

    if cfg.assert_lemma1:
        bound = lyapunov_drift_bound(world.queues, d_l, d_tm, delivered,
                                     world.a_u_max, cfg.edge, gains,
                                     cfg.offload, cfg.slot_tau)
        new_q = np.array([queue_update(world.queues[i], delivered[i],
                                       d_l[i], d_tm[i])
                          for i in range(cfg.uav_count)])
        drift = 0.5 * float((new_q ** 2 - world.queues ** 2).sum())
        world.drift_margins.append(bound - drift)
        if drift > bound + 1e-6 * abs(bound):
            raise AssertionError(
                f"drift bound violated at slot {slot}: {drift} > {bound}")
        world.queues = new_q
    else:
        world.queues = np.array([queue_update(world.queues[i], delivered[i],
                                              d_l[i], d_tm[i])
                                 for i in range(cfg.uav_count)])

    if collected_accumulator is not None:
        collected_accumulator += delivered

    weighted_power = float(cfg.edge.weight * powers.sum())
    return MetricsRecord(slot=slot,
                         avg_urgency=float(world.field.freshness.mean()),
                         avg_queue_bits=float(world.queues.mean()),
                         weighted_power_w=weighted_power,
                         queues=world.queues.copy(),
                         powers=powers)


class PathController:
    """Per-path-slot observation, action, movement, and (optionally) training."""

    def __init__(self, world: World, mode: str,
                 trainer: PlannerTrainer = None):
        if mode not in ("random", "train", "greedy"):
            raise ValueError(f"unknown path mode {mode!r}")
        self.world = world
        self.mode = mode
        self.trainer = trainer
        self.collected = np.zeros(world.cfg.uav_count)
        self._pending = None
        self.losses: list = []

    def _observe_all(self):
        world, cfg = self.world, self.world.cfg
        urgency = world.field.urgency
        obs = []
        for k in range(cfg.uav_count):
            others = np.delete(world.uav_positions, k, axis=0)
            obs.append(build_observation(
                world.uav_positions[k], world.field.positions, urgency,
                others, cfg.coverage_radius, cfg.field.area,
                cfg.planner.obs_resolution, cfg.planner.obs_span,
                cfg.planner.overlap_penalty))
        return obs

    def boundary(self, t_p: int):
        """Run the path-slot boundary: close out samples, pick and apply moves."""
        world, cfg = self.world, self.world.cfg
        rng = world.rng_explore
        obs_now = self._observe_all() if self.mode != "random" else None

        if self.mode == "train" and self._pending is not None:
            prev_obs, prev_actions = self._pending
            for k in range(cfg.uav_count):
                self.trainer.memory.push(ReplaySample(
                    prev_obs[k], prev_actions[k],
                    path_reward(float(self.collected[k]), world.reward_scale),
                    obs_now[k]))
            for _ in range(cfg.planner.trains_per_path_slot):
                self.losses.append(self.trainer.train_step(max(t_p, 1),
                                                           world.rng_replay))

        actions = []
        for k in range(cfg.uav_count):
            if self.mode == "random":
                actions.append(int(rng.integers(0, N_ACTIONS)))
            else:
                eps = epsilon_schedule(t_p, cfg.planner) \
                    if self.mode == "train" else 0.0
                actions.append(select_action(obs_now[k], self.trainer.qnet,
                                             eps, rng,
                                             cfg.planner.overlap_penalty))

        deltas = world.actions[actions]
        for k in range(cfg.uav_count):
            pos = world.uav_positions[k] + deltas[k]
            pos[0] = min(max(pos[0], 0.0), cfg.field.area[0])
            pos[1] = min(max(pos[1], 0.0), cfg.field.area[1])
            world.uav_positions[k] = pos

        if self.mode == "train":
            self._pending = (obs_now, actions)
        self.collected[:] = 0.0


def run_experiment(cfg: SimConfig, out_csv=None, trainer: PlannerTrainer = None,
                   field_override: SensorField = None):
    """Run the configured policy for the configured duration.

    Returns (list of MetricsRecord, World).  ``policy="learned"`` requires a
    trainer (or a checkpoint path in the config) whose network drives greedy
    path choices; training itself goes through ``train_planner``.
    """
    cfg = normalized_config(cfg)
    world = World(cfg, field_override=field_override)

    mode = "random"
    if cfg.policy == "learned":
        mode = "greedy"
        if trainer is None:
            trainer = PlannerTrainer(cfg.planner,
                                     seeded_stream(cfg.seed, "weights"))
            if cfg.checkpoint_path:
                from .neural import load_checkpoint
                load_checkpoint(cfg.checkpoint_path, trainer.qnet)
    controller = PathController(world, mode, trainer)

    writer = MetricsWriter(out_csv, cfg.policy, cfg.seed)
    records = []
    mult = cfg.planner.path_slot_multiple
    try:
        for t in range(cfg.duration_slots):
            if t % mult == 0:
                controller.boundary(t // mult)
            rec = run_system_slot(world, t, controller.collected)
            records.append(rec)
            writer.write(rec)
    finally:
        writer.close()
    return records, world


def train_planner(cfg: SimConfig, out_csv=None):
    """Run the central training loop and return (trainer, records, world)."""
    cfg = normalized_config(cfg)
    world = World(cfg)
    trainer = PlannerTrainer(cfg.planner, seeded_stream(cfg.seed, "weights"))
    controller = PathController(world, "train", trainer)

    writer = MetricsWriter(out_csv, "learned-train", cfg.seed)
    records = []
    mult = cfg.planner.path_slot_multiple
    try:
        for t in range(cfg.duration_slots):
            if t % mult == 0:
                controller.boundary(t // mult)
            rec = run_system_slot(world, t, controller.collected)
            records.append(rec)
            writer.write(rec)
    finally:
        writer.close()
    return trainer, records, world
