"""Brute-force grid search over the per-slot policy space.

Audit tool for the closed-form/dual solver: enumerates band-share vectors on
a simplex lattice and, for each share value, minimizes the decoupled
frequency and power terms on dense 1-D grids.  Exponential in the UAV count,
so it refuses instances beyond four UAVs.
"""

from __future__ import annotations

import itertools
import math

import numpy as np

from .channel import OffloadChannelParams
from .edge import EdgeParams
from .scheduler import SchedulerConfig

ORACLE_MAX_UAVS = 4


def _freq_term_minimum(q, edge: EdgeParams, cfg: SchedulerConfig,
                       slot_tau, n_grid):
    """Two-stage grid search: coarse sweep, then refine around the argmin."""
    lo, hi = 0.0, edge.f_max

    def sweep(a, b):
        f = np.linspace(a, b, n_grid)
        obj = (-q * slot_tau / edge.cycles_per_bit * f
               + cfg.v_tradeoff * edge.weight * edge.kappa * f ** 3)
        i = int(np.argmin(obj))
        return float(obj[i]), float(f[i]), f[1] - f[0] if len(f) > 1 else 0.0

    _, centre, step = sweep(lo, hi)
    return sweep(max(lo, centre - 2 * step),
                 min(hi, centre + 2 * step))[:2]


def _power_term_table(q, gain, a_values, edge: EdgeParams,
                      chan: OffloadChannelParams, cfg: SchedulerConfig,
                      slot_tau, n_grid):
    """Minimum power-term value and argmin power for every candidate share."""
    p = np.linspace(0.0, edge.p_max, n_grid)
    a = a_values[:, None]
    with np.errstate(divide="ignore", invalid="ignore"):
        snr = gain * p[None, :] / (a * chan.noise_psd * chan.bandwidth_w)
        d_tm = a * chan.bandwidth_w * slot_tau * np.log2(1.0 + snr)
    d_tm[:, 0] = 0.0
    obj = -q * d_tm + cfg.v_tradeoff * edge.weight * p[None, :]
    idx = np.argmin(obj, axis=1)
    rows = np.arange(len(a_values))
    return obj[rows, idx], p[idx]


def p2b_grid_oracle(qs, gains, edge: EdgeParams, chan: OffloadChannelParams,
                    cfg: SchedulerConfig, slot_tau: float,
                    share_step: float = 0.01, n_freq: int = 2001,
                    n_power: int = 2001):
    """Grid-search minimum of the per-slot objective.

    Returns (objective, freqs, powers, shares).  Share vectors enumerate the
    lattice {eps + m*step} restricted to sum exactly one.
    """
    qs = np.asarray(qs, dtype=float)
    gains = np.asarray(gains, dtype=float)
    k = len(qs)
    if k > ORACLE_MAX_UAVS:
        raise ValueError(
            f"grid oracle supports at most {ORACLE_MAX_UAVS} UAVs, got {k}")
    eps = cfg.epsilon_floor
    budget = 1.0 - k * eps
    if budget < -1e-12:
        raise ValueError("epsilon floor infeasible")
    # Snap the lattice pitch so share vectors sum to exactly one.
    steps_total = max(int(round(budget / share_step)), 1)
    pitch = budget / steps_total
    a_values = eps + pitch * np.arange(steps_total + 1)
    a_values = np.minimum(a_values, 1.0)

    freq_best = [_freq_term_minimum(q, edge, cfg, slot_tau, n_freq)
                 for q in qs]
    freq_obj = sum(v for v, _ in freq_best)
    freqs = np.array([f for _, f in freq_best])

    tables = [_power_term_table(qs[i], gains[i], a_values, edge, chan, cfg,
                                slot_tau, n_power) for i in range(k)]

    vals = [t[0] for t in tables]
    if k == 1:
        combo = (steps_total,)
    elif k == 2:
        m1 = np.arange(steps_total + 1)
        total = vals[0][m1] + vals[1][steps_total - m1]
        i = int(np.argmin(total))
        combo = (i, steps_total - i)
    elif k == 3:
        m1 = np.arange(steps_total + 1)
        grid = vals[0][:, None] + vals[1][None, :]
        m3 = steps_total - (m1[:, None] + m1[None, :])
        valid = m3 >= 0
        total = np.where(valid, grid + vals[2][np.clip(m3, 0, steps_total)],
                         np.inf)
        i, j = np.unravel_index(int(np.argmin(total)), total.shape)
        combo = (int(i), int(j), steps_total - int(i) - int(j))
    else:
        best = (math.inf, None)
        for c in itertools.product(range(steps_total + 1), repeat=k - 1):
            rest = steps_total - sum(c)
            if rest < 0:
                continue
            full = c + (rest,)
            val = sum(vals[i][full[i]] for i in range(k))
            if val < best[0]:
                best = (val, full)
        combo = best[1]
    shares = np.array([a_values[m] for m in combo])
    powers = np.array([tables[i][1][combo[i]] for i in range(k)])
    share_obj = sum(float(vals[i][combo[i]]) for i in range(k))
    return freq_obj + share_obj, freqs, powers, shares
