"""Trigonometric basis, Sobolev ellipsoid geometry and the Gaussian sequence model."""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable, Sequence

import numpy as np

from .rng import generator

SQRT2 = np.sqrt(2.0)

#: Default number of Simpson nodes on [0, 1] (must be odd).
DEFAULT_QUADRATURE_POINTS = 2**20 + 1


@dataclass(frozen=True)
class EllipsoidParams:
    """Smoothness ``m`` and radius ``c`` of the Sobolev ellipsoid Theta(m, c)."""

    m: float
    c: float

    def __post_init__(self):
        if not (self.m > 0 and self.c > 0):
            raise ValueError(f"m and c must be positive, got m={self.m}, c={self.c}")

    def semiaxes(self, n: int) -> np.ndarray:
        """Return a_j = j**m for j = 1..n."""
        return np.arange(1, n + 1, dtype=float) ** self.m

    @property
    def bound(self) -> float:
        """Right-hand side c**2 / pi**(2m) of the ellipsoid constraint."""
        return self.c**2 / np.pi ** (2 * self.m)


@dataclass(frozen=True)
class ObservedSequence:
    values: np.ndarray
    epsilon: float

    def __len__(self):
        return len(self.values)


def trig_basis(j: int, t) -> np.ndarray | float:
    """Evaluate the j-th trigonometric basis function at ``t``.

    phi_1 = 1, phi_{2k} = sqrt(2) cos(2 pi k t), phi_{2k+1} = sqrt(2) sin(2 pi k t).
    """
    if j < 1:
        raise ValueError(f"basis index must be >= 1, got {j}")
    t = np.asarray(t, dtype=float)
    if j == 1:
        out = np.ones_like(t)
    elif j % 2 == 0:
        out = SQRT2 * np.cos(2 * np.pi * (j // 2) * t)
    else:
        out = SQRT2 * np.sin(2 * np.pi * (j // 2) * t)
    return float(out) if out.ndim == 0 else out


def basis_matrix(n: int, grid) -> np.ndarray:
    """Matrix ``Phi[i, j-1] = phi_j(grid[i])`` for j = 1..n."""
    t = np.asarray(grid, dtype=float)
    out = np.empty((t.size, n))
    if n >= 1:
        out[:, 0] = 1.0
    k = np.arange(1, n // 2 + 1)
    arg = 2 * np.pi * np.outer(t, k)
    out[:, 1::2] = SQRT2 * np.cos(arg)[:, : out[:, 1::2].shape[1]]
    out[:, 2::2] = SQRT2 * np.sin(arg)[:, : out[:, 2::2].shape[1]]
    return out


def simpson_weights(points: int) -> np.ndarray:
    if points < 3 or points % 2 == 0:
        raise ValueError(f"Simpson rule needs an odd number >= 3 of points, got {points}")
    h = 1.0 / (points - 1)
    w = np.full(points, 2.0)
    w[1::2] = 4.0
    w[0] = w[-1] = 1.0
    return w * h / 3.0


def fourier_coefficients(
    f: Callable[[np.ndarray], np.ndarray],
    J: int,
    points: int = DEFAULT_QUADRATURE_POINTS,
) -> np.ndarray:
    """Coefficients theta_1..theta_J of ``f`` by composite Simpson quadrature.

    All trigonometric moments are taken from a single FFT of the weighted
    samples, so the cost is O(points log points) regardless of ``J``.
    """
    if J < 1:
        raise ValueError("J must be >= 1")
    if (points - 1) // 2 < J // 2 + 1:
        raise ValueError(f"{points} quadrature points cannot resolve {J} coefficients")
    t = np.linspace(0.0, 1.0, points)
    values = np.asarray(f(t), dtype=float)
    if values.shape != t.shape or not np.all(np.isfinite(values)):
        raise ValueError("f must return finite values on the quadrature grid")
    g = simpson_weights(points) * values
    # t = 1 coincides with t = 0 for every 1-periodic basis function
    folded = g[:-1].copy()
    folded[0] += g[-1]
    spectrum = np.fft.rfft(folded)

    theta = np.empty(J)
    theta[0] = spectrum[0].real
    k = np.arange(1, J // 2 + 1)
    cos_part = SQRT2 * spectrum[k].real
    sin_part = -SQRT2 * spectrum[k].imag
    theta[1::2] = cos_part[: theta[1::2].size]
    theta[2::2] = sin_part[: theta[2::2].size]
    return theta


def ellipsoid_norm(theta, params: EllipsoidParams) -> float:
    """Weighted norm sum_j a_j**2 theta_j**2."""
    theta = np.asarray(theta, dtype=float)
    if theta.size == 0:
        return 0.0
    a = params.semiaxes(theta.size)
    return float(np.sum((a * theta) ** 2))


def in_ellipsoid(theta, params: EllipsoidParams) -> bool:
    return ellipsoid_norm(theta, params) <= params.bound


def sample_size(epsilon: float) -> int:
    """N = floor(1 / epsilon**2), guarded against representation error."""
    return int(np.floor(1.0 / epsilon**2 + 1e-9))


def sample_observation(theta, epsilon: float, seed: int) -> ObservedSequence:
    """Draw Y_j = theta_j + epsilon Z_j for j = 1..floor(1/epsilon**2).

    The noise stream is a pure function of ``seed``.
    """
    if not epsilon > 0:
        raise ValueError(f"epsilon must be positive, got {epsilon}")
    n = sample_size(epsilon)
    theta = np.asarray(theta, dtype=float)
    mean = np.zeros(n)
    k = min(n, theta.size)
    mean[:k] = theta[:k]
    noise = generator(seed).standard_normal(n)
    return ObservedSequence(mean + epsilon * noise, float(epsilon))


def damped_doppler(t):
    """sqrt(t(1-t)) sin(2.1 pi / (t + 0.3)) on [0, 1]."""
    t = np.asarray(t, dtype=float)
    out = np.sqrt(np.clip(t * (1.0 - t), 0.0, None)) * np.sin(2.1 * np.pi / (t + 0.3))
    return float(out) if out.ndim == 0 else out


def synthesize(theta, grid: Sequence[float]) -> np.ndarray:
    """Evaluate sum_j theta_j phi_j on ``grid``."""
    theta = np.asarray(theta, dtype=float)
    t = np.asarray(grid, dtype=float)
    if theta.size == 0:
        return np.zeros_like(t)
    return basis_matrix(theta.size, t) @ theta
