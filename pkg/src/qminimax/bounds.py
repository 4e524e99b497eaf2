"""Risk constants for the three budget regimes and the variational value.

Normalized units throughout: the sufficient-regime value ``V`` multiplies
eps^(4m/(2m+1)) to give a risk, and ``d`` is the budget per effective
coefficient, B eps^(2/(2m+1)), measured in nats.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from scipy.optimize import brentq

_DAMPING = 0.5
_ALPHA_CAP = 200
_ALPHA_TOL = 1e-8
_GOLDEN_TOL = 1e-7
_SCAN_POINTS = 9
# ratio of the two upper-bound terms beyond which one regime dominates
REGIME_BAND = 10.0


class VariationalError(RuntimeError):
    def __init__(self, message: str, residual: float = math.nan):
        super().__init__(f"{message} (last residual {residual:.3g})")
        self.residual = residual


def _ellipsoid_bound(m: float, c: float) -> float:
    if not (m > 0 and c > 0):
        raise ValueError("m and c must be positive")
    return c**2 / math.pi ** (2 * m)


def pinsker_constant(m: float, c: float) -> float:
    """(c^2 (2m+1)/pi^(2m))^(1/(2m+1)) (m/(m+1))^(2m/(2m+1))."""
    C = _ellipsoid_bound(m, c)
    return (C * (2 * m + 1)) ** (1 / (2 * m + 1)) * (m / (m + 1)) ** (2 * m / (2 * m + 1))


def insufficient_constant(m: float, c: float) -> float:
    """c^2 m^(2m) / pi^(2m), the limit of B^(2m) times the risk."""
    return _ellipsoid_bound(m, c) * m ** (2 * m)


def _excess_log_ratio(J: int) -> float:
    # log(J^J / J!)
    return J * math.log(J) - math.lgamma(J + 1)


def optimal_J(B: float, m: float) -> int:
    """The J with J^J/J! < exp(B/m) <= (J+1)^(J+1)/(J+1)!."""
    if not (B > 0 and m > 0):
        raise ValueError("B and m must be positive")
    target = B / m
    hi = 2
    while _excess_log_ratio(hi) < target:
        hi *= 2
    lo = 1  # log(1^1/1!) = 0 < target always
    # invariant: f(lo) < target <= f(hi)
    while hi - lo > 1:
        mid = (lo + hi) // 2
        if _excess_log_ratio(mid) < target:
            lo = mid
        else:
            hi = mid
    return lo


@dataclass(frozen=True)
class AchievingSequence:
    sigma2: np.ndarray  # kept prefix sigma~^2_1..sigma~^2_{J'}
    J: int
    kept: int
    value: float  # J' sigma~^2_J


def achieving_sigma_insufficient(B: float, m: float, c: float, epsilon: float) -> AchievingSequence:
    """Prior variances C/(J a_j^2) truncated where they stop beating the noise."""
    if not epsilon > 0:
        raise ValueError("epsilon must be positive")
    C = _ellipsoid_bound(m, c)
    J = optimal_J(B, m)
    j = np.arange(1, J + 1, dtype=float)
    sigma2 = C / (J * j ** (2 * m))
    floor = sigma2[-1]
    keep = sigma2**2 / (sigma2 + epsilon**2) >= floor
    kept = int(np.count_nonzero(keep))
    return AchievingSequence(sigma2[:kept].copy(), J, kept, kept * float(floor))


@dataclass(frozen=True)
class RegimeConstants:
    pinsker: float
    insufficient: float
    regime: str  # over-sufficient | sufficient | insufficient
    scaling: float  # eps^(4m/(2m+1)) or B^(-2m)


@dataclass(frozen=True)
class RiskBound:
    value: float
    pinsker_term: float
    quantization_term: float
    constants: RegimeConstants

    @property
    def regime(self) -> str:
        return self.constants.regime


def classify_regime(pinsker_term: float, quantization_term: float) -> str:
    if quantization_term * REGIME_BAND <= pinsker_term:
        return "over-sufficient"
    if quantization_term >= REGIME_BAND * pinsker_term:
        return "insufficient"
    return "sufficient"


def risk_upper_bound(epsilon: float, B: float, m: float, c: float) -> RiskBound:
    """P eps^(4m/(2m+1)) + (c^2 m^(2m)/pi^(2m)) B^(-2m), with a regime tag."""
    if not (epsilon > 0 and B > 0):
        raise ValueError("epsilon and B must be positive")
    P, Q = pinsker_constant(m, c), insufficient_constant(m, c)
    eps_rate = epsilon ** (4 * m / (2 * m + 1))
    bit_rate = B ** (-2 * m)
    first, second = P * eps_rate, Q * bit_rate
    regime = classify_regime(first, second)
    scaling = bit_rate if regime == "insufficient" else eps_rate
    return RiskBound(first + second, first, second, RegimeConstants(P, Q, regime, scaling))


# ---------------------------------------------------------------------------
# variational problem


def stationarity_lhs(y, alpha: float):
    """1/(y+1)^2 + alpha (y+2)/(y(y+1)); strictly decreasing in y > 0."""
    y = np.asarray(y, dtype=float)
    return 1.0 / (y + 1.0) ** 2 + alpha * (y + 2.0) / (y * (y + 1.0))


def cubic_coefficients(q, alpha: float):
    """Coefficients (c3, c2, c1, c0) of q y^3 + (2q - a) y^2 + (q - 3a - 1) y - 2a, q = lam x^(2m)."""
    q = np.asarray(q, dtype=float)
    return q, 2 * q - alpha, q - 3 * alpha - 1.0, np.full_like(q, -2.0 * alpha)


def _log_lhs(t, log_alpha: float):
    """log g(e^t) and its derivative in t, stable for very small alpha and y."""
    y = np.exp(t)
    l1 = np.log1p(y)
    la = -2.0 * l1
    lb = log_alpha + np.log(y + 2.0) - t - l1
    lg = np.logaddexp(la, lb)
    slope = -2.0 * y / (y + 1.0) * np.exp(la - lg) - (y * y + 4.0 * y + 2.0) / (
        (y + 2.0) * (y + 1.0)
    ) * np.exp(lb - lg)
    return lg, slope


def solve_log_stationarity(log_q, log_alpha: float, start=None, tol: float = 1e-13, max_iter: int = 200):
    """log of the positive root y of g(y) = q, entrywise.

    Newton on log g against log y, with a per-entry bracket and bisection
    whenever a step leaves it. The root is the unique positive root of the
    cubic returned by :func:`cubic_coefficients`.
    """
    log_q = np.asarray(log_q, dtype=float)
    lo = np.minimum(-50.0, log_alpha - log_q - 10.0)
    hi = np.maximum(50.0, np.maximum(-0.5 * log_q, log_alpha - log_q) + 10.0)
    if start is None:
        t = np.clip(-0.5 * log_q, lo + 1.0, hi - 1.0)
    else:
        t = np.clip(np.asarray(start, dtype=float), lo, hi)
    for _ in range(max_iter):
        lg, slope = _log_lhs(t, log_alpha)
        F = lg - log_q
        above = F > 0
        lo = np.where(above, t, lo)
        hi = np.where(above, hi, t)
        tn = t - F / slope
        tn = np.where((tn > lo) & (tn < hi), tn, 0.5 * (lo + hi))
        done = np.max(np.abs(tn - t)) < tol
        t = tn
        if done:
            break
    return t


def solve_stationarity(q, alpha: float, start=None):
    """Positive root y of 1/(y+1)^2 + alpha (y+2)/(y(y+1)) = q for each entry of ``q``."""
    q = np.asarray(q, dtype=float)
    if np.any(q <= 0) or not alpha > 0:
        raise ValueError("need q > 0 and alpha > 0")
    log_start = None if start is None else np.log(start)
    return np.exp(solve_log_stationarity(np.log(q), math.log(alpha), log_start))


@dataclass
class _Profile:
    x0: float
    log_alpha: float
    log_lam: float
    log_sigma2: np.ndarray
    value: float
    moment: float
    alpha_residual: float
    iterations: int


class _Quadrature:
    """Composite Simpson in u on the graded nodes x = x0 u^2.

    The grading clusters nodes where sigma^2 blows up, and the Jacobian
    2 x0 u gives the u = 0 node zero weight, so the singular endpoint is
    never evaluated. ``n`` is rounded up to an even number of intervals.
    """

    def __init__(self, x0: float, n: int, m: float):
        n += n % 2
        u = np.arange(1, n + 1) / n
        simpson = np.where(np.arange(1, n + 1) % 2 == 1, 4.0, 2.0)
        simpson[-1] = 1.0
        self.x = x0 * u * u
        self.w = simpson / (3.0 * n) * 2.0 * x0 * u
        self.x0 = x0
        self.log_x2m = 2 * m * np.log(self.x)
        self.wx2m = self.w * self.x ** (2 * m)


def _lambda_for(quad: _Quadrature, C: float, log_alpha: float, log_lam: float, t):
    """Solve int x^(2m) sigma^2 = C for log lambda by safeguarded Newton."""
    lo, hi = -math.inf, math.inf
    log_C = math.log(C)
    for _ in range(200):
        t = solve_log_stationarity(log_lam + quad.log_x2m, log_alpha, t)
        _, slope = _log_lhs(t, log_alpha)
        mass = quad.wx2m * np.exp(t)
        total = float(np.sum(mass))
        F = math.log(total) - log_C
        if F > 0:
            lo = log_lam
        else:
            hi = log_lam
        dF = float(np.sum(mass / slope)) / total
        step = max(-5.0, min(5.0, -F / dF))
        nxt = log_lam + step
        if not lo < nxt < hi:
            nxt = 0.5 * (lo + hi) if math.isfinite(lo + hi) else log_lam + step
        if abs(F) < 1e-14 or abs(nxt - log_lam) < 1e-14:
            return log_lam, t
        log_lam = nxt
    raise VariationalError("moment constraint solve did not converge", abs(F))


def _alpha_functional(quad: _Quadrature, log_sigma2, d: float) -> float:
    """log of exp((1/x0) int log(s^4/(s+1)) dx - 2d/x0)."""
    logs = 2.0 * log_sigma2 - np.log1p(np.exp(log_sigma2))
    return float(np.sum(quad.w * logs)) / quad.x0 - 2.0 * d / quad.x0


def _initial_log_alpha(quad: _Quadrature, m: float, C: float, d: float) -> float:
    # power-law profile sigma^2 = (kappa/x)^m meeting the moment constraint
    kappa = (C * (m + 1) / quad.x0 ** (m + 1)) ** (1 / m)
    return _alpha_functional(quad, m * (math.log(kappa) - np.log(quad.x)), d)


def _profile(x0: float, m: float, C: float, d: float, n: int) -> _Profile:
    quad = _Quadrature(x0, n, m)
    log_alpha = _initial_log_alpha(quad, m, C, d)
    log_lam, t = 0.0, None
    residual = math.inf
    for it in range(1, _ALPHA_CAP + 1):
        log_lam, t = _lambda_for(quad, C, log_alpha, log_lam, t)
        target = _alpha_functional(quad, t, d)
        residual = abs(target - log_alpha)
        if residual < _ALPHA_TOL:
            log_alpha = target
            log_lam, t = _lambda_for(quad, C, log_alpha, log_lam, t)
            break
        log_alpha += _DAMPING * (target - log_alpha)
    else:
        raise VariationalError(f"alpha fixed point did not converge at x0={x0:.6g}", residual)
    value = float(np.sum(quad.w / (1.0 + np.exp(-t)))) + x0 * math.exp(log_alpha)
    moment = float(np.sum(quad.wx2m * np.exp(t)))
    final = abs(_alpha_functional(quad, t, d) - log_alpha)
    return _Profile(x0, log_alpha, log_lam, t, value, moment, final, it)


def _boundary_gap(p: _Profile, m: float) -> float:
    """log(lam x0^(2m)); feasibility sigma^4/(sigma^2+1) >= alpha holds iff this is <= 0."""
    return p.log_lam + 2 * m * math.log(p.x0)


@dataclass(frozen=True)
class VariationalSolution:
    m: float
    C: float
    d: float
    x0: float
    alpha: float
    lam: float
    grid: np.ndarray  # uniform nodes in (0, x0]
    sigma2: np.ndarray  # prior variance profile on ``grid``
    value: float
    moment: float
    alpha_residual: float
    stationarity_residual: float
    multiple_optima: bool
    scan: tuple = field(default=(), repr=False)  # (x0, V) pairs from the coarse scan

    def sigma2_at(self, x) -> np.ndarray:
        x = np.asarray(x, dtype=float)
        return solve_stationarity(self.lam * x ** (2 * self.m), self.alpha)


def _golden_max(fn, lo: float, hi: float, tol: float):
    invphi = (math.sqrt(5) - 1) / 2
    a, b = lo, hi
    c, d = b - invphi * (b - a), a + invphi * (b - a)
    fc, fd = fn(c), fn(d)
    while b - a > tol * max(1.0, abs(b)):
        if fc >= fd:
            b, d, fd = d, c, fc
            c = b - invphi * (b - a)
            fc = fn(c)
        else:
            a, c, fc = c, d, fd
            d = a + invphi * (b - a)
            fd = fn(d)
    return 0.5 * (a + b)


def solve_variational(m: float, c: float, d: float, grid_size: int = 512) -> VariationalSolution:
    """Value V_{m,c,d} of the continuous sufficient-regime program.

    For each support endpoint x0 the profile sigma^2(x) solves the
    Euler-Lagrange equation with lambda fixed by the moment constraint and
    alpha by its own fixed point. The objective increases in x0 up to the
    point where sigma^4/(sigma^2+1) >= alpha stops holding at x0, so the
    search is a golden-section over (0, x_boundary].
    """
    if not d > 0:
        raise ValueError(f"d must be positive, got {d}")
    if grid_size < 256:
        raise ValueError("grid_size must be at least 256")
    C = _ellipsoid_bound(m, c)
    cache: dict[float, _Profile] = {}

    def profile(x0: float) -> _Profile:
        if x0 not in cache:
            cache[x0] = _profile(x0, m, C, d, grid_size)
        return cache[x0]

    # bracket the feasibility boundary lam(x0) x0^(2m) = 1 starting from the
    # moment-constraint scale C^(1/(2m+1))
    scale = C ** (1 / (2 * m + 1))
    lo, hi = 0.5 * scale, 0.5 * scale
    while _boundary_gap(profile(lo), m) > 0:
        lo *= 0.5
    hi = lo
    while _boundary_gap(profile(hi), m) <= 0:
        if hi > 10 * scale * 2**10:
            raise VariationalError("no feasibility boundary found", _boundary_gap(profile(hi), m))
        hi *= 2.0
    xb = brentq(lambda x: _boundary_gap(profile(x), m), lo, hi, xtol=1e-12 * hi)
    if _boundary_gap(profile(xb), m) > 0:
        xb = math.nextafter(xb, 0.0)
        while _boundary_gap(profile(xb), m) > 0:
            xb -= 1e-12 * hi

    left = 0.05 * xb
    xs = np.linspace(left, xb, _SCAN_POINTS)
    vs = np.array([profile(float(x)).value for x in xs])
    peaks = [i for i in range(1, _SCAN_POINTS - 1) if vs[i] > vs[i - 1] and vs[i] > vs[i + 1]]
    if vs[-1] > vs[-2]:
        peaks.append(_SCAN_POINTS - 1)
    best = int(np.argmax(vs))
    a = float(xs[max(best - 1, 0)])
    b = float(xs[min(best + 1, _SCAN_POINTS - 1)])
    x0 = _golden_max(lambda x: profile(x).value, a, b, _GOLDEN_TOL)
    # golden-section cannot land exactly on the endpoint; keep the better one
    if profile(xb).value >= profile(x0).value:
        x0 = xb
    p = profile(x0)

    alpha, lam = math.exp(p.log_alpha), math.exp(p.log_lam)
    x = np.linspace(0.0, p.x0, grid_size + 1)[1:]
    sigma2 = np.exp(solve_log_stationarity(p.log_lam + 2 * m * np.log(x), p.log_alpha))
    quad = _Quadrature(p.x0, grid_size, m)
    q = lam * quad.x ** (2 * m)
    stat = float(np.max(np.abs(stationarity_lhs(np.exp(p.log_sigma2), alpha) - q) / q))

    sol = VariationalSolution(
        m=m,
        C=C,
        d=d,
        x0=p.x0,
        alpha=alpha,
        lam=lam,
        grid=x,
        sigma2=sigma2,
        value=p.value,
        moment=p.moment,
        alpha_residual=p.alpha_residual,
        stationarity_residual=stat,
        multiple_optima=len(peaks) > 1,
        scan=tuple(zip(xs.tolist(), vs.tolist())),
    )
    _check(sol)
    return sol


def _check(sol: VariationalSolution):
    if sol.stationarity_residual > 1e-5:
        raise VariationalError("stationarity equation violated", sol.stationarity_residual)
    if sol.moment > sol.C + 1e-8:
        raise VariationalError("moment constraint violated", sol.moment - sol.C)
    if sol.alpha_residual > 1e-6:
        raise VariationalError("alpha is not self-consistent", sol.alpha_residual)
    feas = sol.sigma2**2 / (sol.sigma2 + 1.0)
    if np.any(feas < sol.alpha * (1 - 1e-7)):
        raise VariationalError("sigma^4/(sigma^2+1) dips below alpha", float(np.min(feas / sol.alpha)))
    if np.any(np.diff(sol.sigma2) > 0):
        raise VariationalError("sigma^2 profile is not nonincreasing", float(np.max(np.diff(sol.sigma2))))


def discrete_program_value(sol: VariationalSolution, epsilon: float, rule: str = "midpoint") -> float:
    """Normalized risk of the discrete program built from a continuous profile.

    Coefficient j gets prior variance sigma^2(x_j) h^(2m+1) with h^(2m+1) = eps^2
    and x_j = (j - 1/2) h (``midpoint``) or j h (``right``), for x_j <= x0. The
    quantization term is the reverse water-filling distortion at a budget of
    d / h nats. Converges to ``sol.value`` as eps -> 0.
    """
    from .allocation import reverse_waterfill

    m = sol.m
    h = epsilon ** (2 / (2 * m + 1))
    if rule == "midpoint":
        count = int(round(sol.x0 / h))
        x = h * (np.arange(1, count + 1) - 0.5)
    elif rule == "right":
        count = int(math.floor(sol.x0 / h))
        x = h * np.arange(1, count + 1)
    else:
        raise ValueError(f"unknown rule {rule!r}")
    x = x[x <= sol.x0]
    sigma2 = sol.sigma2_at(x) * h ** (2 * m + 1)
    wf = reverse_waterfill(sigma2, epsilon, sol.d / h, base=math.e)
    risk = math.fsum((sigma2 * epsilon**2 / (sigma2 + epsilon**2)).tolist()) + math.fsum(wf.distortions.tolist())
    return risk / h ** (2 * m)
