"""Bit allocation across blocks and reverse water-filling.

Both problems have the same shape: a convex objective separable over
coordinates with a single linear rate constraint, so the optimum is a
threshold rule in one multiplier. The multiplier is bracketed by
bisection and then pinned exactly on the active set.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

LN2 = math.log(2.0)
_BISECT_RTOL = 1e-12


@dataclass(frozen=True)
class Allocation:
    bits: np.ndarray  # bits per coefficient in each block
    multiplier: float
    objective: float


@dataclass(frozen=True)
class WaterfillResult:
    distortions: np.ndarray  # mu_j^2
    level: float  # eta
    rate: float


def _bisect_log(fn, lo: float, hi: float) -> float:
    """Root of a decreasing function of t = log(x) on [lo, hi]."""
    while hi - lo > _BISECT_RTOL * max(1.0, abs(lo), abs(hi)):
        mid = 0.5 * (lo + hi)
        if fn(mid) > 0:
            lo = mid
        else:
            hi = mid
    return 0.5 * (lo + hi)


def allocation_objective(weights, bits) -> float:
    return float(np.sum(np.asarray(weights) * 2.0 ** (-2.0 * np.asarray(bits))))


def allocate_bits(weights, sizes, budget: float) -> Allocation:
    """Minimise sum_k s_k 2^(-2 b_k) subject to sum_k T_k b_k <= B, b_k >= 0.

    Stationarity gives b_k = max(0, log2(2 ln2 s_k / (lam T_k)) / 2); ``lam``
    is found by bisection in log space and then recomputed in closed form on
    the active set so that the budget binds to rounding.
    """
    s = np.asarray(weights, dtype=float)
    T = np.asarray(sizes, dtype=float)
    if s.shape != T.shape:
        raise ValueError("weights and sizes must have the same length")
    if np.any(s < 0) or np.any(T <= 0) or budget < 0:
        raise ValueError("need s_k >= 0, T_k > 0 and B >= 0")

    zero = Allocation(np.zeros_like(s), 0.0, float(np.sum(s)))
    positive = s > 0
    if budget == 0 or not np.any(positive):
        if budget == 0 and np.any(positive):
            # lambda making the zero allocation KKT-consistent
            lam = float(np.max(2 * LN2 * s[positive] / T[positive]))
            return Allocation(np.zeros_like(s), lam, float(np.sum(s)))
        return zero

    # log2 of the per-block "water height" 2 ln2 s_k / T_k
    height = np.full_like(s, -np.inf)
    height[positive] = np.log2(2 * LN2 * s[positive] / T[positive])

    def bits_at(log2_lam: float) -> np.ndarray:
        return np.maximum(0.0, 0.5 * (height - log2_lam))

    def excess(log2_lam: float) -> float:
        return float(np.sum(T * bits_at(log2_lam))) - budget

    hi = float(np.max(height[positive]))  # zero bits everywhere
    lo = hi - 2.0 * budget / float(np.min(T[positive])) - 1.0
    log2_lam = _bisect_log(excess, lo, hi)

    active = bits_at(log2_lam) > 0
    if np.any(active):
        TA = T[active]
        log2_lam = float((np.sum(TA * height[active]) - 2.0 * budget) / np.sum(TA))
    bits = bits_at(log2_lam)
    # clip any block that the closed form pushed marginally negative
    bits[~active] = 0.0
    return Allocation(bits, float(2.0**log2_lam), allocation_objective(s, bits))


def kkt_residual(weights, sizes, alloc: Allocation) -> float:
    """Largest violation of the stationarity / complementary slackness conditions.

    Measured relative to lam * T_k so the number is scale free.
    """
    s = np.asarray(weights, dtype=float)
    T = np.asarray(sizes, dtype=float)
    lam = alloc.multiplier
    grad = 2 * LN2 * s * 2.0 ** (-2.0 * alloc.bits)
    scale = lam * T
    on = alloc.bits > 0
    res = 0.0
    if np.any(on):
        res = max(res, float(np.max(np.abs(grad[on] - scale[on]) / scale[on])))
    if np.any(~on) and lam > 0:
        res = max(res, float(np.max(np.maximum(0.0, grad[~on] - scale[~on]) / scale[~on])))
    return res


def _log_rate(available, level_log, base: float) -> float:
    gap = np.maximum(0.0, available - level_log)
    return float(0.5 * np.sum(gap) / math.log(base))


def reverse_waterfill(sigma2, epsilon: float, budget: float, base: float = 2.0) -> WaterfillResult:
    """Inner minimisation over mu^2 for a fixed prior variance profile.

    Each coordinate can be distorted by at most D_j = sigma_j^4/(sigma_j^2+eps^2);
    mu_j^2 = min(eta, D_j) with eta chosen so that
    sum_j 0.5 log_base(D_j / mu_j^2) equals the budget. ``base`` is 2 for a
    budget in bits and e for nats.
    """
    sigma2 = np.asarray(sigma2, dtype=float)
    if np.any(~np.isfinite(sigma2)) or np.any(sigma2 < 0):
        raise ValueError("sigma2 must be finite and nonnegative")
    if not epsilon > 0 or budget < 0:
        raise ValueError("need epsilon > 0 and budget >= 0")
    avail = sigma2**2 / (sigma2 + epsilon**2)
    positive = avail > 0
    if budget == 0 or not np.any(positive):
        level = float(np.max(avail)) if avail.size else 0.0
        return WaterfillResult(avail.copy(), level, 0.0)

    logD = np.full_like(avail, -np.inf)
    logD[positive] = np.log(avail[positive])

    def excess(level_log: float) -> float:
        return _log_rate(logD[positive], level_log, base) - budget

    hi = float(np.max(logD[positive]))
    lo = hi - 2.0 * budget * math.log(base) - 1.0
    level_log = _bisect_log(excess, lo, hi)
    active = logD > level_log
    if np.any(active):
        level_log = float((np.sum(logD[active]) - 2.0 * budget * math.log(base)) / np.sum(active))
        active = logD > level_log
    level = math.exp(level_log)
    mu2 = np.where(active, level, avail)
    return WaterfillResult(mu2, level, _log_rate(logD[positive], level_log, base))
