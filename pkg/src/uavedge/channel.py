"""Air-ground channel models and the UAV-to-cloud offload link.

The air-ground side combines a distance-dependent free-space term with a
line-of-sight probability that depends on the elevation angle; the offload
side is a block-fading link shared in FDMA between the UAVs.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

LIGHT_SPEED = 3.0e8


@dataclass
class AgChannelParams:
    """Environment constants of the air-ground link.

    ``eta_los``/``eta_nlos`` are the excess-loss factors of the LOS and NLOS
    components (LOS must not lose more than NLOS); ``env_a``/``env_b`` shape
    the LOS probability with the elevation angle measured in degrees.
    """

    carrier_freq_hz: float = 2.0e9
    light_speed: float = LIGHT_SPEED
    eta_los: float = 1.0
    eta_nlos: float = 20.0
    env_a: float = 9.61
    env_b: float = 0.16

    def __post_init__(self):
        for name in ("carrier_freq_hz", "light_speed", "eta_los", "eta_nlos",
                     "env_a", "env_b"):
            if getattr(self, name) <= 0:
                raise ValueError(f"{name} must be strictly positive")
        # Equality is tolerated so degenerate no-advantage channels can be
        # constructed; physically eta_los is far below eta_nlos.
        if self.eta_los > self.eta_nlos:
            raise ValueError("eta_los must not exceed eta_nlos")


@dataclass
class OffloadChannelParams:
    """Parameters of the UAV-to-cloud offload link and its FDMA band."""

    g0: float = 1.0e-4
    d0: float = 1.0
    pathloss_exp: float = 4.0
    bandwidth_w: float = 2.0e6
    noise_psd: float = 10.0 ** (-16.7) / 1000.0  # -167 dBm/Hz in W/Hz
    cloud_position: np.ndarray = field(
        default_factory=lambda: np.array([300.0, 200.0]))

    def __post_init__(self):
        self.cloud_position = np.asarray(self.cloud_position, dtype=float)
        if self.g0 <= 0 or self.d0 <= 0:
            raise ValueError("g0 and d0 must be strictly positive")
        if self.pathloss_exp < 2:
            raise ValueError("pathloss_exp must be >= 2")
        if self.bandwidth_w <= 0 or self.noise_psd <= 0:
            raise ValueError("bandwidth_w and noise_psd must be positive")


def los_probability(r: float, h: float, params: AgChannelParams) -> float:
    """Probability of a line-of-sight link at ground distance r and altitude h."""
    if r < 0 or h < 0:
        raise ValueError("r and h must be non-negative")
    if r == 0 and h == 0:
        raise ValueError("elevation angle undefined at r = h = 0")
    theta_deg = math.degrees(math.atan2(h, r))
    a, b = params.env_a, params.env_b
    return 1.0 / (1.0 + a * math.exp(-b * (theta_deg - a)))


def _component_loss(r: float, h: float, eta: float, params: AgChannelParams) -> float:
    k = 4.0 * math.pi * params.carrier_freq_hz / params.light_speed
    return k * k * (r * r + h * h) * eta


def avg_path_loss(r: float, h: float, params: AgChannelParams) -> float:
    """LOS-probability-weighted mean of the LOS and NLOS path losses."""
    p0 = los_probability(r, h, params)
    l0 = _component_loss(r, h, params.eta_los, params)
    l1 = _component_loss(r, h, params.eta_nlos, params)
    return p0 * l0 + (1.0 - p0) * l1


_ALTITUDE_RATIO_MAX = 20.0
_GOLDEN = (math.sqrt(5.0) - 1.0) / 2.0


def optimal_altitude(r: float, params: AgChannelParams,
                     rel_tol: float = 1e-9) -> float:
    """Hovering altitude minimizing the boundary path loss for coverage radius r.

    The loss at the coverage boundary factors as r^2 * g(h/r), so the search
    runs over the ratio u = h/r; the returned altitude therefore scales
    exactly linearly with r.
    """
    if r <= 0:
        raise ValueError("coverage radius must be positive")

    def boundary_loss(u):
        return avg_path_loss(1.0, u, params)

    lo, hi = 0.0, _ALTITUDE_RATIO_MAX
    x1 = hi - _GOLDEN * (hi - lo)
    x2 = lo + _GOLDEN * (hi - lo)
    f1, f2 = boundary_loss(x1), boundary_loss(x2)
    while hi - lo > rel_tol * _ALTITUDE_RATIO_MAX:
        if f1 < f2:
            hi, x2, f2 = x2, x1, f1
            x1 = hi - _GOLDEN * (hi - lo)
            f1 = boundary_loss(x1)
        else:
            lo, x1, f1 = x1, x2, f2
            x2 = lo + _GOLDEN * (hi - lo)
            f2 = boundary_loss(x2)
    return 0.5 * (lo + hi) * r


def cloud_distance(uav_pos: np.ndarray, altitude: float,
                   params: OffloadChannelParams) -> float:
    """3-D distance between a hovering UAV and the ground-level cloud station."""
    dx = float(uav_pos[0]) - params.cloud_position[0]
    dy = float(uav_pos[1]) - params.cloud_position[1]
    return math.sqrt(dx * dx + dy * dy + altitude * altitude)


def mean_offload_gain(uav_pos: np.ndarray, altitude: float,
                      params: OffloadChannelParams) -> float:
    """Channel power gain of the offload link with the fading factor at its mean."""
    d = cloud_distance(uav_pos, altitude, params)
    if d == 0:
        raise ValueError("UAV and cloud positions coincide")
    return params.g0 * (params.d0 / d) ** params.pathloss_exp


def sample_offload_gain(uav_pos: np.ndarray, altitude: float,
                        params: OffloadChannelParams,
                        rng: np.random.Generator) -> float:
    """Draw one block-fading realization of the offload channel power gain."""
    return float(rng.exponential(1.0)) * mean_offload_gain(uav_pos, altitude, params)


def offload_capacity(a: float, p_tm: float, gain: float,
                     params: OffloadChannelParams, slot_tau: float) -> float:
    """Bits deliverable to the cloud in one slot on band share a at power p_tm.

    A zero band share or zero power transmits nothing; the a -> 0 limit of the
    formula is positive, but with no allocated band there is no transmission.
    """
    if a < 0 or p_tm < 0:
        raise ValueError("band share and power must be non-negative")
    if a == 0.0 or p_tm == 0.0:
        return 0.0
    w, n0 = params.bandwidth_w, params.noise_psd
    snr = gain * p_tm / (a * n0 * w)
    return a * w * slot_tau * math.log2(1.0 + snr)
