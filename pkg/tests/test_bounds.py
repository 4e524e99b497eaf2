import math

import numpy as np
import pytest

from qminimax.bounds import (
    VariationalError,
    achieving_sigma_insufficient,
    classify_regime,
    cubic_coefficients,
    discrete_program_value,
    insufficient_constant,
    optimal_J,
    pinsker_constant,
    risk_upper_bound,
    solve_stationarity,
    solve_variational,
    stationarity_lhs,
)

PI = math.pi
# 40-digit values from mpmath evaluation of the closed forms
PINSKER_M2_UNIT = 0.9975185798258964923387347595531883688780
PINSKER_M1_UNIT = 0.9085602964160698294456058781636302512141
UPPER_M1_EPS001_B10 = 0.01195743382058443179771246803020583571247


def test_pinsker_constant_closed_forms():
    assert pinsker_constant(2, PI**2) == pytest.approx(5 ** 0.2 * (2 / 3) ** 0.8, abs=1e-12)
    assert pinsker_constant(2, PI**2) == pytest.approx(PINSKER_M2_UNIT, abs=1e-14)
    assert pinsker_constant(1, PI) == pytest.approx(PINSKER_M1_UNIT, abs=1e-14)


@pytest.mark.parametrize("m", [0.5, 1, 2, 3.5])
@pytest.mark.parametrize("gamma", [0.1, 2.0, 17.0])
def test_constants_scale_with_radius(m, gamma):
    c = 1.3
    assert pinsker_constant(m, gamma * c) == pytest.approx(gamma ** (2 / (2 * m + 1)) * pinsker_constant(m, c), rel=1e-13)
    assert insufficient_constant(m, gamma * c) == pytest.approx(gamma**2 * insufficient_constant(m, c), rel=1e-13)


def test_insufficient_constant():
    assert insufficient_constant(1, PI) == pytest.approx(1.0, abs=1e-15)
    assert insufficient_constant(2, PI**2) == pytest.approx(16.0, rel=1e-15)
    with pytest.raises(ValueError):
        insufficient_constant(0, 1)


def brute_optimal_J(B, m):
    f = lambda J: J * math.log(J) - math.lgamma(J + 1)
    for J in range(1, 100_000):
        if f(J) < B / m <= f(J + 1):
            return J


@pytest.mark.parametrize("m", [0.5, 1, 2, 3])
def test_optimal_J(m):
    assert optimal_J(m * math.log(4), m) == 2
    assert optimal_J(m * math.log(1.5), m) == 1
    for B in (0.01, 0.7, 3.0, 10.0, 55.5, 400.0):
        assert optimal_J(B, m) == brute_optimal_J(B, m)
    J = optimal_J(200 * m, m)
    assert 0.95 <= J / 200 <= 1.05


def test_achieving_sequence():
    seq = achieving_sigma_insufficient(math.log(4), 1, PI, 1e-6)
    assert seq.J == 2
    assert seq.sigma2[0] == pytest.approx(0.5)
    for B in (1.0, 10.0, 200.0):
        s = achieving_sigma_insufficient(B, 1, PI, 1e-3)
        assert s.kept <= s.J
        assert np.all(np.diff(s.sigma2) < 0)
    big = achieving_sigma_insufficient(200, 1, PI, 1e-6)
    assert big.value * 200**2 == pytest.approx(1.0, rel=0.1)


def test_risk_upper_bound():
    rb = risk_upper_bound(0.01, 10, 1, PI)
    assert rb.value == pytest.approx(UPPER_M1_EPS001_B10, rel=1e-12)
    assert rb.quantization_term == pytest.approx(0.01)
    assert rb.regime == "sufficient"
    assert risk_upper_bound(0.01, 1e6, 1, PI).regime == "over-sufficient"
    assert risk_upper_bound(1e-12, 3, 1, PI).regime == "insufficient"
    far = risk_upper_bound(1e-30, 10, 1, PI)
    assert far.value == pytest.approx(0.01, rel=1e-12)
    assert far.constants.scaling == pytest.approx(0.01)
    assert classify_regime(1.0, 1.0) == "sufficient"


def sign_changes(coeffs, grid):
    c3, c2, c1, c0 = coeffs
    vals = ((c3 * grid + c2) * grid + c1) * grid + c0
    scale = abs(c3) * grid**3 + abs(c2) * grid**2 + abs(c1) * grid + abs(c0)
    signs = np.sign(np.where(np.abs(vals) <= 1e-10 * scale, 0.0, vals))
    signs = signs[signs != 0]
    return int(np.count_nonzero(np.diff(signs)))


@pytest.mark.parametrize("alpha", [1e-30, 1e-3, 0.5, 7.0])
def test_stationarity_root_is_the_unique_positive_cubic_root(alpha):
    q = np.logspace(-8, 4, 25)
    y = solve_stationarity(q, alpha)
    np.testing.assert_allclose(stationarity_lhs(y, alpha), q, rtol=1e-10)
    grid = np.logspace(-40, 40, 4001)
    for qi, yi in zip(q, y):
        coeffs = [float(v[0]) for v in cubic_coefficients(np.array([qi]), alpha)]
        c3, c2, c1, c0 = coeffs
        # negative at 0, positive at infinity, exactly one crossing in between
        assert c0 < 0 < c3
        assert sign_changes(coeffs, grid) == 1
        residual = ((c3 * yi + c2) * yi + c1) * yi + c0
        scale = abs(c3) * yi**3 + abs(c2) * yi**2 + abs(c1) * yi + abs(c0)
        assert abs(residual) <= 1e-9 * scale
        if alpha >= 1e-3:
            roots = np.roots(coeffs)
            positive = [r.real for r in roots if abs(r.imag) <= 1e-9 * abs(r) and r.real > 0]
            assert positive == [pytest.approx(yi, rel=1e-6)]


@pytest.fixture(scope="module")
def solution():
    return solve_variational(2, PI**2, 3.0, grid_size=256)


def test_variational_invariants(solution):
    s = solution
    assert s.moment <= s.C + 1e-8
    assert s.alpha_residual <= 1e-6
    assert s.stationarity_residual <= 1e-5
    assert np.all(np.diff(s.sigma2) <= 0)
    assert np.all(s.sigma2**2 / (s.sigma2 + 1) >= s.alpha * (1 - 1e-7))
    # independent check of the alpha functional on a fine uniform grid
    x = np.linspace(0, s.x0, 200_001)[1:]
    sig = s.sigma2_at(x)
    log_alpha = np.mean(2 * np.log(sig) - np.log1p(sig)) - 2 * s.d / s.x0
    assert log_alpha == pytest.approx(math.log(s.alpha), abs=2e-3)
    assert not s.multiple_optima


def test_variational_value_lies_in_sandwich(solution):
    P = pinsker_constant(2, PI**2)
    Q = insufficient_constant(2, PI**2) * 3.0 ** -4
    assert max(P, Q) <= solution.value <= P + Q


def test_objective_peaks_at_the_feasibility_boundary(solution):
    # the coarse scan increases all the way to the boundary
    values = [v for _, v in solution.scan]
    assert all(a < b for a, b in zip(values, values[1:]))
    boundary = solution.scan[-1][0]
    assert solution.x0 <= boundary
    assert solution.x0 == pytest.approx(boundary, rel=1e-4)
    assert 1 - 1e-3 <= solution.lam * solution.x0**4 <= 1.0 + 1e-12


def test_discrete_program_cross_check(solution):
    assert discrete_program_value(solution, 1e-3) == pytest.approx(solution.value, rel=0.05)
    # the literal right-endpoint sampling is first-order biased but converges
    coarse = abs(discrete_program_value(solution, 1e-3, rule="right") / solution.value - 1)
    fine = abs(discrete_program_value(solution, 1e-6, rule="right") / solution.value - 1)
    assert fine < coarse / 2


def test_variational_input_validation():
    with pytest.raises(ValueError):
        solve_variational(2, PI**2, 0.0)
    with pytest.raises(ValueError):
        solve_variational(2, PI**2, 1.0, grid_size=100)
    assert issubclass(VariationalError, RuntimeError)
