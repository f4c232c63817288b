"""Per-slot drift-plus-penalty resource scheduler.

Each slot the scheduler picks processor frequencies, transmit powers, and
FDMA band shares minimizing (negative queue-weighted service) + V *
(weighted power).  Frequencies decouple and have a closed form; powers have
a closed form once shares are fixed; the shares couple through the unit-band
budget and are solved by dual decomposition: a projected diminishing-step
multiplier update outside, and per-UAV root solves on the share derivative
(Newton steps safeguarded by a shrinking bisection bracket) inside.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .channel import OffloadChannelParams, offload_capacity
from .edge import EdgeParams

LN2 = math.log(2.0)


@dataclass
class SchedulerConfig:
    v_tradeoff: float = 6.0e9
    epsilon_floor: float = 0.01
    max_outer_iters: int = 40
    max_dual_iters: int = 400
    bisection_tol: float = 1e-12
    convergence_tol: float = 1e-9

    def __post_init__(self):
        if self.v_tradeoff < 0:
            raise ValueError("v_tradeoff must be >= 0")
        if not (0 < self.epsilon_floor <= 1):
            raise ValueError("epsilon_floor must be in (0, 1]")
        if self.bisection_tol <= 0 or self.convergence_tol <= 0:
            raise ValueError("tolerances must be positive")


def default_epsilon_floor(k: int) -> float:
    return min(0.01, 1.0 / (2.0 * k))


@dataclass
class SchedulerDecision:
    freqs: np.ndarray
    powers: np.ndarray
    band_shares: np.ndarray
    objective: float
    iterations: int
    converged: bool = True
    dual_multiplier: float = 0.0
    objective_trace: list = field(default_factory=list)


def optimal_frequency(q: float, params: EdgeParams, cfg: SchedulerConfig,
                      slot_tau: float) -> float:
    """Closed-form processor frequency trading service against cubic power."""
    if q < 0:
        raise ValueError("queue must be non-negative")
    if cfg.v_tradeoff <= 0 or params.weight <= 0:
        raise ValueError("frequency closed form needs V > 0 and weight > 0")
    stationary = math.sqrt(slot_tau * q / (3.0 * params.cycles_per_bit
                                           * params.weight * params.kappa
                                           * cfg.v_tradeoff))
    return min(params.f_max, stationary)


def optimal_power(q: float, a: float, gain: float,
                  chan: OffloadChannelParams, weight: float, v: float,
                  slot_tau: float, p_max: float) -> float:
    """Closed-form transmit power for a fixed band share, clipped to [0, p_max]."""
    if a <= 0 or gain <= 0:
        raise ValueError("band share and gain must be positive")
    stationary = a * chan.bandwidth_w * (q * slot_tau / (v * weight * LN2)
                                         - chan.noise_psd / gain)
    return min(max(stationary, 0.0), p_max)


def _m(x: float) -> float:
    """Dimensionless derivative kernel: (ln(1+x) - x/(1+x)) / ln 2."""
    return (math.log1p(x) - x / (1.0 + x)) / LN2


def _solve_share(coeff: float, c: float, lam: float, eps: float,
                 tol: float) -> float:
    """Minimizer of -coeff*a*log2(1+c/a) + lam*a over [eps, 1].

    The derivative is increasing in a, so endpoint signs settle saturation;
    interior roots solve m(c/a) = lam/coeff by safeguarded Newton on x = c/a
    (m is increasing, bracket (c, c/eps) holds the root).
    """
    if coeff <= 0.0 or c <= 0.0:
        return eps
    if lam - coeff * _m(c) <= 0.0:
        return 1.0
    if lam - coeff * _m(c / eps) >= 0.0:
        return eps
    t = lam / coeff
    lo, hi = c, c / eps
    x = math.sqrt(2.0 * LN2 * t) + 2.0 ** min(t, 60.0) - 1.0
    x = min(max(x, lo), hi)
    for _ in range(100):
        fx = _m(x) - t
        if fx < 0.0:
            lo = x
        else:
            hi = x
        if abs(fx) <= 1e-14 * max(t, 1.0) or hi - lo <= tol * x:
            break
        newton = x - fx * (1.0 + x) ** 2 * LN2 / x
        x = newton if lo < newton < hi else 0.5 * (lo + hi)
    return min(max(c / x, eps), 1.0)


def _stationary_shares(coeff, c, lam, eps, tol):
    """Per-UAV minimizers of the dual term over [eps, 1]."""
    coeff = np.asarray(coeff, dtype=float)
    c = np.asarray(c, dtype=float)
    return np.array([_solve_share(float(coeff[i]), float(c[i]), lam, eps, tol)
                     for i in range(len(coeff))])


@dataclass
class BandwidthAllocation:
    shares: np.ndarray
    converged: bool
    iterations: int
    multiplier: float


def _repair_shares(shares, eps):
    """Project share vector onto {a >= eps, sum a = 1} keeping proportions."""
    k = len(shares)
    shares = np.maximum(shares, eps)
    excess = shares - eps
    budget = 1.0 - k * eps
    total = excess.sum()
    if budget <= 0:
        return np.full(k, 1.0 / k)
    if total <= 0:
        return np.full(k, eps + budget / k)
    return eps + excess * (budget / total)


def allocate_bandwidth(qs, powers, gains, chan: OffloadChannelParams,
                       cfg: SchedulerConfig, slot_tau: float,
                       eps: float | None = None,
                       lam0: float = 0.0,
                       fallback_shares=None) -> BandwidthAllocation:
    """Split the offload band across UAVs by dual decomposition.

    The multiplier follows a projected subgradient with diminishing step
    1/sqrt(n); per-UAV shares are the dual-term minimizers from
    _solve_share.  The best-feasibility iterate is kept and repaired to the
    exact simplex.
    """
    qs = np.asarray(qs, dtype=float)
    powers = np.asarray(powers, dtype=float)
    gains = np.asarray(gains, dtype=float)
    if np.any(gains <= 0):
        raise ValueError("gains must be positive")
    k = len(qs)
    if eps is None:
        eps = cfg.epsilon_floor
    if k * eps > 1.0 + 1e-12:
        raise ValueError("epsilon floor infeasible for this many UAVs")

    # Work in units normalized by W*tau*max(q) so coefficients are O(1).
    scale = max(float(qs.max()), 1.0)
    coeff = qs / scale
    c = gains * powers / (chan.noise_psd * chan.bandwidth_w)

    active = (coeff > 0) & (c > 0)
    if not active.any():
        return BandwidthAllocation(np.full(k, 1.0 / k), True, 0, 0.0)

    # Condition the multiplier iteration: express lambda in units of the
    # strongest per-UAV derivative magnitude at uniform shares.  The optimal
    # multiplier settles where the dominant band holder's derivative
    # balances, so unit subgradient steps are then the right size.
    x_probe = np.minimum(c[active] * k, 1e12)
    probe = coeff[active] * (np.log1p(x_probe)
                             - x_probe / (1.0 + x_probe)) / LN2
    lam_unit = max(float(probe.max()), 1e-12)

    coeff_l = coeff.tolist()
    c_l = c.tolist()
    lam = max(lam0, 0.0) / lam_unit
    best_shares = None
    best_gap = math.inf
    n_iter = 0
    for n in range(1, cfg.max_dual_iters + 1):
        n_iter = n
        shares = [_solve_share(coeff_l[i], c_l[i], lam * lam_unit, eps,
                               cfg.bisection_tol) for i in range(k)]
        gap = sum(shares) - 1.0
        if abs(gap) < best_gap:
            best_gap = abs(gap)
            best_shares = np.array(shares)
            best_lam = lam * lam_unit
        if abs(gap) <= cfg.convergence_tol:
            break
        if gap < 0.0 and lam == 0.0:
            # Budget slack at a zero multiplier price: dual optimum reached,
            # leftover band is free to hand out in the repair step.
            break
        lam = max(lam + gap / math.sqrt(n), 0.0)

    converged = best_gap <= max(cfg.convergence_tol, 1e-6)
    shares = _repair_shares(best_shares, eps)
    if fallback_shares is not None:
        # Never let the repaired iterate undo progress: keep whichever share
        # vector serves more queue-weighted bits at the fixed powers.
        def served(a):
            return sum(qs[i] * offload_capacity(a[i], powers[i], gains[i],
                                                chan, slot_tau)
                       for i in range(k))
        fallback = np.asarray(fallback_shares, dtype=float)
        if served(fallback) > served(shares):
            shares = fallback
    return BandwidthAllocation(shares, converged, n_iter, best_lam)


def p2b_objective(decision: SchedulerDecision, qs, gains,
                  edge_params: EdgeParams, chan: OffloadChannelParams,
                  cfg: SchedulerConfig, slot_tau: float) -> float:
    """Drift-plus-penalty value of a decision: -sum q*(served) + V*sum w*power."""
    qs = np.asarray(qs, dtype=float)
    gains = np.asarray(gains, dtype=float)
    f = np.asarray(decision.freqs, dtype=float)
    p = np.asarray(decision.powers, dtype=float)
    a = np.asarray(decision.band_shares, dtype=float)
    if np.any(f < 0) or np.any(f > edge_params.f_max + 1e-9):
        raise ValueError("infeasible frequencies")
    if np.any(p < 0) or np.any(p > edge_params.p_max + 1e-9):
        raise ValueError("infeasible powers")
    if np.any(a < cfg.epsilon_floor - 1e-12) or a.sum() > 1.0 + 1e-9:
        raise ValueError("infeasible band shares")
    total = 0.0
    for k in range(len(qs)):
        d_l = slot_tau * f[k] / edge_params.cycles_per_bit
        d_tm = offload_capacity(a[k], p[k], gains[k], chan, slot_tau)
        power = edge_params.kappa * f[k] ** 3 + p[k]
        total += -qs[k] * (d_l + d_tm) + cfg.v_tradeoff * edge_params.weight * power
    return float(total)


def schedule_slot(qs, gains, edge_params: EdgeParams,
                  chan: OffloadChannelParams, cfg: SchedulerConfig,
                  slot_tau: float, warm: SchedulerDecision | None = None,
                  warm_lam: float = 0.0) -> SchedulerDecision:
    """Solve the per-slot policy: closed-form frequencies, then alternate the
    power closed form with the dual band split until the objective settles."""
    qs = np.asarray(qs, dtype=float)
    gains = np.asarray(gains, dtype=float)
    k = len(qs)
    eps = cfg.epsilon_floor

    freqs = np.array([optimal_frequency(q, edge_params, cfg, slot_tau)
                      for q in qs])
    if warm is not None:
        shares = np.asarray(warm.band_shares, dtype=float)
    else:
        shares = np.full(k, 1.0 / k)
    lam = warm_lam

    def solve_powers(a):
        return np.array([optimal_power(qs[i], a[i], gains[i], chan,
                                       edge_params.weight, cfg.v_tradeoff,
                                       slot_tau, edge_params.p_max)
                         for i in range(k)])

    powers = solve_powers(shares)
    decision = SchedulerDecision(freqs, powers, shares, 0.0, 0)
    obj = p2b_objective(decision, qs, gains, edge_params, chan, cfg, slot_tau)
    trace = [obj]
    converged = True
    n_outer = 0
    for n_outer in range(1, cfg.max_outer_iters + 1):
        alloc = allocate_bandwidth(qs, powers, gains, chan, cfg, slot_tau,
                                   eps=eps, lam0=lam, fallback_shares=shares)
        shares = alloc.shares
        lam = alloc.multiplier
        converged = alloc.converged
        powers = solve_powers(shares)
        decision = SchedulerDecision(freqs, powers, shares, 0.0, n_outer)
        new_obj = p2b_objective(decision, qs, gains, edge_params, chan, cfg,
                                slot_tau)
        trace.append(new_obj)
        rel_change = abs(new_obj - obj) / max(abs(obj), 1e-12)
        obj = new_obj
        if rel_change < cfg.convergence_tol:
            break

    decision.objective = obj
    decision.iterations = n_outer
    decision.converged = converged
    decision.dual_multiplier = lam
    decision.objective_trace = trace
    return decision


def lyapunov_drift_bound(qs, served_edge, served_offload, arrivals,
                         a_u_max: float, edge_params: EdgeParams,
                         gains, chan: OffloadChannelParams,
                         slot_tau: float) -> float:
    """Slot upper bound on the quadratic-backlog drift.

    Uses the service capacities actually scheduled, the per-slot arrival
    bound, and the deterministic service caps (max-frequency throughput and
    the linearized capacity cap at full power under the realized fading).
    """
    qs = np.asarray(qs, dtype=float)
    served_edge = np.asarray(served_edge, dtype=float)
    served_offload = np.asarray(served_offload, dtype=float)
    arrivals = np.asarray(arrivals, dtype=float)
    gains = np.asarray(gains, dtype=float)

    d_l_max = slot_tau * edge_params.f_max / edge_params.cycles_per_bit
    d_tm_max = (slot_tau / chan.noise_psd) * edge_params.p_max * gains
    c_lp = float(np.sum(np.maximum(a_u_max ** 2,
                                   (d_l_max + d_tm_max) ** 2) / 2.0)
                 + np.sum(qs * arrivals))
    return float(-np.sum(qs * (served_edge + served_offload)) + c_lp)
