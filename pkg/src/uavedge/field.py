"""Distributed sensor population.

Sensors generate Poisson data into local buffers, upload to a covering UAV at
a capped per-slot rate, and keep a freshness counter that grows while
uncovered and shrinks in proportion to how much of the buffer was served.
Scalar per-sensor operations define the semantics; ``SensorField`` applies
the same rules to the whole population with numpy for simulation speed.
"""

from __future__ import annotations

import struct
from dataclasses import dataclass

import numpy as np

SNAPSHOT_MAGIC = b"UESF"
SNAPSHOT_VERSION = 1


@dataclass
class SensorState:
    """One sensor: position, mean data rate, buffer, and freshness counters."""

    position: np.ndarray
    lam: float
    buffer_bits: float = 0.0
    freshness: float = 0.0

    def __post_init__(self):
        self.position = np.asarray(self.position, dtype=float)
        if self.lam < 0 or self.buffer_bits < 0 or self.freshness < 0:
            raise ValueError("sensor state fields must be non-negative")

    @property
    def urgency(self) -> float:
        """Rate-weighted staleness: lambda times freshness, never stored."""
        return self.lam * self.freshness


@dataclass
class FieldConfig:
    sensor_count: int = 20000
    area: tuple = (600.0, 400.0)
    lambda_range: tuple = (250.0, 300.0)
    a_max: float = 1000.0
    uplink_rate: float = 2000.0
    density_skew: float = 1.0  # relative density of the left half-area

    def __post_init__(self):
        lo, hi = self.lambda_range
        if not (0 < lo <= hi <= self.a_max):
            raise ValueError("need 0 < lambda_low <= lambda_high <= a_max")
        if self.sensor_count < 1 or self.density_skew <= 0:
            raise ValueError("sensor_count and density_skew must be positive")


def generate_arrivals(sensor: SensorState, rng: np.random.Generator,
                      a_max: float) -> float:
    """Draw this slot's generated bits, clamp to [0, a_max], add to the buffer."""
    if sensor.lam == 0:
        return 0.0
    bits = float(min(rng.poisson(sensor.lam), a_max))
    sensor.buffer_bits += bits
    return bits


def coverage_assignment(sensor_positions: np.ndarray,
                        uav_positions: np.ndarray,
                        coverage_radius: float) -> np.ndarray:
    """Index of the covering UAV per sensor, or -1 when none is within radius.

    A sensor on the boundary counts as covered; among several coverers the
    nearest wins, with distance ties going to the lowest UAV index.
    """
    sensor_positions = np.atleast_2d(sensor_positions)
    uav_positions = np.atleast_2d(uav_positions)
    diff = sensor_positions[:, None, :] - uav_positions[None, :, :]
    dist = np.sqrt((diff * diff).sum(axis=2))
    nearest = np.argmin(dist, axis=1)  # argmin takes the first (lowest) index
    assigned = np.where(dist[np.arange(len(nearest)), nearest]
                        <= coverage_radius, nearest, -1)
    return assigned.astype(np.int64)


def uplink_transfer(sensor: SensorState, slot_tau: float,
                    uplink_rate: float) -> float:
    """Move up to one slot's uplink capacity from the sensor buffer; return it."""
    moved = min(sensor.buffer_bits, uplink_rate * slot_tau)
    sensor.buffer_bits = max(sensor.buffer_bits - moved, 0.0)
    return moved


def update_freshness(sensor: SensorState, covered: bool,
                     pre_transfer_buffer: float,
                     post_transfer_buffer: float) -> SensorState:
    """Advance the freshness counter after this slot's (non-)service.

    Uncovered sensors stale by one slot. Covered sensors keep the fraction of
    buffer left unserved; a covered sensor with nothing pending is fully
    fresh (the served-fraction rule's limit as the buffer empties).
    """
    if post_transfer_buffer > pre_transfer_buffer or post_transfer_buffer < 0:
        raise ValueError("post-transfer buffer must be in [0, pre-transfer]")
    if not covered:
        sensor.freshness += 1.0
    elif pre_transfer_buffer == 0.0:
        sensor.freshness = 0.0
    else:
        sensor.freshness *= post_transfer_buffer / pre_transfer_buffer
    return sensor


class SensorField:
    """Whole sensor population as parallel arrays, updated one slot at a time."""

    def __init__(self, cfg: FieldConfig, rng: np.random.Generator):
        self.cfg = cfg
        n = cfg.sensor_count
        width, height = cfg.area
        xs = rng.uniform(0.0, width, size=n)
        if cfg.density_skew != 1.0:
            # Rejection-free skew: route the configured share of sensors to
            # the left half, uniform within each half.
            p_left = cfg.density_skew / (cfg.density_skew + 1.0)
            left = rng.uniform(size=n) < p_left
            xs = np.where(left, rng.uniform(0.0, width / 2.0, size=n),
                          rng.uniform(width / 2.0, width, size=n))
        ys = rng.uniform(0.0, height, size=n)
        self.positions = np.column_stack([xs, ys])
        lo, hi = cfg.lambda_range
        self.lam = rng.uniform(lo, hi, size=n)
        self.buffer_bits = np.zeros(n)
        self.freshness = np.zeros(n)

    def __len__(self):
        return len(self.lam)

    @property
    def urgency(self) -> np.ndarray:
        return self.lam * self.freshness

    def step_slot(self, uav_positions: np.ndarray, coverage_radius: float,
                  slot_tau: float, rng: np.random.Generator):
        """Run one slot: generate, assign coverage, upload, refresh.

        Returns (per-UAV delivered bits, generated bits, delivered bits).
        """
        cfg = self.cfg
        generated = np.minimum(rng.poisson(self.lam).astype(float), cfg.a_max)
        self.buffer_bits += generated

        assigned = coverage_assignment(self.positions, uav_positions,
                                       coverage_radius)
        covered = assigned >= 0
        cap = cfg.uplink_rate * slot_tau
        moved = np.where(covered, np.minimum(self.buffer_bits, cap), 0.0)
        pre = self.buffer_bits.copy()
        self.buffer_bits = np.maximum(self.buffer_bits - moved, 0.0)

        served_fraction = np.divide(self.buffer_bits, pre,
                                    out=np.zeros_like(pre), where=pre > 0)
        self.freshness = np.where(covered, self.freshness * served_fraction,
                                  self.freshness + 1.0)

        k = len(np.atleast_2d(uav_positions))
        delivered_per_uav = np.bincount(assigned[covered],
                                        weights=moved[covered], minlength=k)
        return delivered_per_uav, float(generated.sum()), float(moved.sum())

    def max_coverable_count(self, coverage_radius: float) -> int:
        """Upper bound on how many sensors one coverage disk can hold.

        Every sensor inside a radius-r disk lies within 2r of any other sensor
        in that disk, so the densest 2r-neighborhood bounds the disk count.
        """
        pos = self.positions
        n = len(pos)
        limit = (2.0 * coverage_radius) ** 2
        best = 0
        block = 512
        for start in range(0, n, block):
            chunk = pos[start:start + block]
            d2 = ((chunk[:, None, :] - pos[None, :, :]) ** 2).sum(axis=2)
            best = max(best, int((d2 <= limit).sum(axis=1).max()))
        return best

    def snapshot(self, path):
        """Write positions, rates, buffers, and freshness to a versioned file."""
        arrays = [self.positions[:, 0], self.positions[:, 1],
                  self.lam, self.buffer_bits, self.freshness]
        with open(path, "wb") as fh:
            fh.write(SNAPSHOT_MAGIC)
            fh.write(struct.pack("<IQ", SNAPSHOT_VERSION, len(self)))
            for arr in arrays:
                fh.write(np.ascontiguousarray(arr, dtype="<f8").tobytes())

    @classmethod
    def restore(cls, path, cfg: FieldConfig) -> "SensorField":
        """Rebuild a field from a snapshot; config must match the stored size."""
        with open(path, "rb") as fh:
            magic = fh.read(4)
            if magic != SNAPSHOT_MAGIC:
                raise ValueError(f"not a sensor snapshot: bad magic {magic!r}")
            version, n = struct.unpack("<IQ", fh.read(12))
            if version != SNAPSHOT_VERSION:
                raise ValueError(f"unsupported snapshot version {version}")
            data = np.frombuffer(fh.read(), dtype="<f8")
        if data.size != 5 * n:
            raise ValueError("snapshot payload truncated")
        obj = cls.__new__(cls)
        obj.cfg = cfg
        xs, ys, lam, buf, fresh = data.reshape(5, n)
        obj.positions = np.column_stack([xs, ys]).astype(float)
        obj.lam = lam.copy()
        obj.buffer_bits = buf.copy()
        obj.freshness = fresh.copy()
        return obj
