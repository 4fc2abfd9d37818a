import math

import numpy as np
import pytest

from mrglasso.basis import (
    FOURIER,
    NONPARAMETRIC,
    Parametric,
    ResolutionScheme,
    assemble_design,
)
from mrglasso.penalties import (
    PenaltySchedule,
    complexity_units,
    majorization_failure_bound,
    noise_majorization_check,
    penalty_levels,
)


def test_penalty_formula_nonparametric():
    # sigma=1, n=100, p=10, eps=1, level 4: sqrt(16/100) + sqrt(2 ln 10/100)
    scheme = ResolutionScheme(3, 4, (NONPARAMETRIC,) * 10)
    schedule = penalty_levels(scheme, 100, sigma=1.0, eps=1.0)
    assert schedule[(1, 4)] == pytest.approx(0.4 + 0.2145966026289347, abs=1e-10)
    assert schedule[(1, 4)] == pytest.approx(0.61460, abs=5e-6)


def test_penalty_formula_parametric():
    # d*=1, n=100, log(p/eps)=1: 0.1 + sqrt(0.02)
    scheme = ResolutionScheme(1, 1, (Parametric(1), NONPARAMETRIC))
    schedule = penalty_levels(scheme, 100, sigma=1.0, eps=2.0 / math.e)
    assert schedule[(1, 1)] == pytest.approx(0.1 + math.sqrt(0.02), abs=1e-12)
    assert schedule[(1, 1)] == pytest.approx(0.24142, abs=5e-6)


def test_penalty_linear_in_sigma():
    scheme = ResolutionScheme(3, 5, (NONPARAMETRIC,) * 4)
    s1 = penalty_levels(scheme, 64, sigma=1.0)
    s2 = penalty_levels(scheme, 64, sigma=1e-9)
    for key in s1.groups():
        assert s2[key] == pytest.approx(1e-9 * s1[key], rel=1e-12)


def test_penalty_monotonicity_exact_formula():
    scheme = ResolutionScheme(3, 7, (NONPARAMETRIC,) * 5)
    for n in (64, 256, 1024):
        schedule = penalty_levels(scheme, n, sigma=2.0, eps=0.7)
        tail = math.sqrt(2.0 * math.log(5 / 0.7) / n)
        for k in range(3, 8):
            expected = 2.0 * (math.sqrt(2.0 ** k / n) + tail)
            assert schedule[(2, k)] == pytest.approx(expected, rel=1e-14)
            if k > 3:
                assert schedule[(2, k)] > schedule[(2, k - 1)]


def test_penalty_upper_bracket_under_level_rule():
    # with 2^(k_star) >= 2 log(p/eps): lambda <= 2 sigma_n 2^(k/2)
    scheme = ResolutionScheme(3, 7, (NONPARAMETRIC,) * 10)
    n = 128
    schedule = penalty_levels(scheme, n, sigma=1.0, eps=1.0)
    sigma_n = 1.0 / math.sqrt(n)
    assert 2.0 ** scheme.k_star >= schedule.two_log
    for k in range(3, 8):
        assert schedule[(1, k)] <= 2.0 * sigma_n * 2.0 ** (k / 2.0) + 1e-15


def test_penalty_validation():
    scheme = ResolutionScheme(3, 4, (NONPARAMETRIC,) * 10)
    with pytest.raises(ValueError):
        penalty_levels(scheme, 100, sigma=-1.0)
    with pytest.raises(ValueError):
        penalty_levels(scheme, 100, sigma=1.0, eps=1.5)
    with pytest.raises(ValueError):
        penalty_levels(scheme, 100, sigma=1.0, a0=1.0)


def test_schedule_json_roundtrip():
    scheme = ResolutionScheme(2, 4, (NONPARAMETRIC,) * 3)
    schedule = penalty_levels(scheme, 50, sigma=1.3, eps=0.8, a0=1.5)
    clone = PenaltySchedule.from_json(schedule.to_json())
    assert clone.lam == schedule.lam
    assert clone.lambda0 == schedule.lambda0
    assert (clone.sigma, clone.eps, clone.a0) == (1.3, 0.8, 1.5)


@pytest.fixture(scope="module")
def small_design():
    rng = np.random.default_rng(21)
    scheme = ResolutionScheme(2, 4, (NONPARAMETRIC,) * 3)
    x = rng.uniform(size=(96, 3))
    return assemble_design(x, FOURIER, scheme)


def test_majorization_zero_residual(small_design):
    schedule = penalty_levels(small_design.scheme, small_design.n, sigma=1.0)
    holds, worst, _ = noise_majorization_check(
        small_design, np.zeros(small_design.n), schedule
    )
    assert holds and worst == 0.0


def test_majorization_orthogonal_residual(small_design):
    # residual orthogonal to every block's column space
    rng = np.random.default_rng(3)
    v = rng.normal(size=small_design.n)
    for key in small_design.groups():
        v -= small_design.project(key, v)
        # repeat a few times to push numerical leakage down
    for _ in range(3):
        for key in small_design.groups():
            v -= small_design.project(key, v)
    schedule = penalty_levels(small_design.scheme, small_design.n, sigma=1.0)
    holds, worst, _ = noise_majorization_check(small_design, v, schedule)
    assert holds
    assert worst < 1e-6


def test_majorization_zero_level_sentinel(small_design):
    lam = {key: 0.0 for key in small_design.groups()}
    schedule = PenaltySchedule(
        lam=lam, lambda0=0.0, sigma=1.0, eps=1.0, a0=2.0, n=small_design.n, p=3
    )
    rng = np.random.default_rng(4)
    holds, worst, _ = noise_majorization_check(
        small_design, rng.normal(size=small_design.n), schedule
    )
    assert not holds and math.isinf(worst)


def test_majorization_coverage_monte_carlo():
    # Gaussian residuals: failure frequency within the stated bound
    rng = np.random.default_rng(11)
    n, p = 256, 8
    scheme = ResolutionScheme(3, 7, (NONPARAMETRIC,) * p)
    x = rng.uniform(size=(n, p))
    design = assemble_design(x, FOURIER, scheme)
    schedule = penalty_levels(scheme, n, sigma=1.0, eps=1.0)
    reps = 500
    fails = 0
    qs = {key: design.ortho(key) for key in design.groups()}
    noise = rng.normal(size=(n, reps))
    for key, q in qs.items():
        norms = np.linalg.norm(q.T @ noise, axis=0) / math.sqrt(n)
        fails_mask = norms > schedule[key]
        fails = np.maximum(fails, fails_mask) if np.ndim(fails) else fails_mask.astype(int)
    freq_fail = float(np.mean(fails))
    bound = majorization_failure_bound(p, 1.0)
    se = math.sqrt(bound * (1 - bound) / reps)
    assert freq_fail <= bound + 3 * se


def test_complexity_identity_exact(small_design):
    schedule = penalty_levels(small_design.scheme, small_design.n, sigma=0.7, eps=0.9)
    rng = np.random.default_rng(5)
    for key in small_design.groups():
        for fbar_norm in (0.0, 1e-4, 0.3, 10.0, float(rng.uniform(0, 2))):
            lam = schedule[key]
            lhs = min(lam ** 2, lam * fbar_norm) / (
                schedule.sigma ** 2 / small_design.n
            )
            rhs = complexity_units(schedule, small_design.scheme, key, fbar_norm)
            assert lhs == pytest.approx(rhs, rel=1e-12, abs=1e-12)
