"""UAV base-station state: onboard queue, edge processing, and motion."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .channel import AgChannelParams, optimal_altitude


@dataclass
class UavState:
    """One hovering UAV-BS: planar position, fixed altitude, onboard queue."""

    position: np.ndarray
    altitude: float
    coverage_radius: float
    queue_bits: float = 0.0

    def __post_init__(self):
        self.position = np.asarray(self.position, dtype=float)
        if self.queue_bits < 0:
            raise ValueError("queue_bits must be non-negative")


def make_uav(position, coverage_radius: float, ag: AgChannelParams) -> UavState:
    """Construct a UAV hovering at the loss-minimizing altitude for its radius."""
    return UavState(position=np.asarray(position, dtype=float),
                    altitude=optimal_altitude(coverage_radius, ag),
                    coverage_radius=coverage_radius)


@dataclass
class EdgeParams:
    """Onboard processor and radio limits of one UAV."""

    f_max: float = 2.0e9
    kappa: float = 1.0e-26
    cycles_per_bit: float = 3000.0
    p_max: float = 5.0
    weight: float = 1.0

    def __post_init__(self):
        for name in ("f_max", "kappa", "cycles_per_bit", "p_max", "weight"):
            if getattr(self, name) <= 0:
                raise ValueError(f"{name} must be strictly positive")


def edge_throughput(f: float, params: EdgeParams, slot_tau: float) -> float:
    """Bits the onboard processor works through in one slot at frequency f."""
    if f < 0 or f > params.f_max:
        raise ValueError(f"frequency {f} outside [0, {params.f_max}]")
    return slot_tau * f / params.cycles_per_bit


def edge_power(f: float, params: EdgeParams) -> float:
    """Processor power draw at frequency f (switched-capacitance cubic law)."""
    if f < 0 or f > params.f_max:
        raise ValueError(f"frequency {f} outside [0, {params.f_max}]")
    return params.kappa * f ** 3


def queue_update(q: float, arrivals: float, processed: float,
                 offloaded: float) -> float:
    """Next-slot queue length; service beyond the backlog is clipped at zero."""
    if min(q, arrivals, processed, offloaded) < 0:
        raise ValueError("queue inputs must be non-negative")
    return max(q + arrivals - processed - offloaded, 0.0)


def apply_move(uav: UavState, delta, area) -> UavState:
    """Shift the UAV by delta, clamping each coordinate to the area rectangle."""
    width, height = area
    new_pos = uav.position + np.asarray(delta, dtype=float)
    new_pos[0] = min(max(new_pos[0], 0.0), width)
    new_pos[1] = min(max(new_pos[1], 0.0), height)
    uav.position = new_pos
    return uav
