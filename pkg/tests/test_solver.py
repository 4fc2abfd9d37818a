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
from mrglasso.penalties import PenaltySchedule, penalty_levels
from mrglasso.solver import (
    ROOT_HALF,
    FitConfig,
    fit,
    fit_path,
    kkt_check,
    objective,
    predict,
)

from pg_reference import pg_fit


def orthonormal_single_group(n=64, d=4, seed=7):
    rng = np.random.default_rng(seed)
    scheme = ResolutionScheme(2, 2, (NONPARAMETRIC,))
    design = assemble_design(rng.uniform(size=(n, 1)), FOURIER, scheme)
    q, _ = np.linalg.qr(rng.normal(size=(n, d)))
    design._blocks[(1, 2)] = q * math.sqrt(n)
    design._projectors.clear()
    design._grams.clear()
    return design


def schedule_for(design, lam_map, a0=2.0):
    return PenaltySchedule(
        lam=dict(lam_map),
        lambda0=min(lam_map.values()) if lam_map else 0.0,
        sigma=1.0,
        eps=1.0,
        a0=a0,
        n=design.n,
        p=design.scheme.p,
    )


def random_instance(seed, n=40, p=3, sigma=0.5, eps=1.0):
    rng = np.random.default_rng(seed)
    from mrglasso.basis import make_scheme

    scheme = make_scheme(p, n=n, eps=eps)
    x = rng.uniform(size=(n, p))
    design = assemble_design(x, FOURIER, scheme)
    signal = 2.0 * np.sin(2 * np.pi * x[:, 0]) + 1.2 * np.cos(4 * np.pi * x[:, 1])
    y = signal + sigma * rng.normal(size=n)
    schedule = penalty_levels(scheme, n, sigma=sigma, eps=eps)
    return design, y, schedule


def test_zero_response_gives_zero_fit():
    design, _, schedule = random_instance(0)
    res = fit(np.zeros(design.n), design, schedule)
    assert res.active_set == []
    assert np.all(res.fitted == 0.0)
    assert res.objective_trace[-1] == 0.0


def test_single_group_closed_form():
    design = orthonormal_single_group()
    rng = np.random.default_rng(1)
    c = rng.normal(size=4)
    c /= np.linalg.norm(c)
    y = design.block((1, 2)) @ c
    schedule = schedule_for(design, {(1, 2): 0.125})  # A0 lam = 0.25
    res = fit(y, design, schedule)
    assert np.abs(res.beta[(1, 2)] - 0.75 * c).max() < 1e-12
    assert res.converged


def test_single_group_threshold_kill():
    design = orthonormal_single_group()
    rng = np.random.default_rng(2)
    c = rng.normal(size=4)
    c /= np.linalg.norm(c)
    y = design.block((1, 2)) @ c  # ||Py||_{2,n} = 1
    schedule = schedule_for(design, {(1, 2): 0.6})  # A0 lam = 1.2 > 1
    res = fit(y, design, schedule)
    assert res.active_set == []
    assert np.all(res.fitted == 0.0)


def test_objective_values():
    design, y, schedule = random_instance(3)
    n = design.n
    assert objective(y, design, schedule, {}) == pytest.approx(
        0.5 * np.linalg.norm(y) ** 2 / n, rel=1e-12
    )
    assert objective(np.zeros(n), design, schedule, {}) == 0.0


def test_fit_beats_random_perturbations():
    design, y, schedule = random_instance(4)
    res = fit(y, design, schedule)
    base = objective(y, design, schedule, res.beta)
    rng = np.random.default_rng(5)
    for _ in range(100):
        perturbed = {}
        for key in design.groups():
            b = res.beta.get(key)
            d = design.scheme.block_size(*key)
            noise = 1e-3 * rng.normal(size=d)
            perturbed[key] = (b if b is not None else 0.0) + noise
        assert objective(y, design, schedule, perturbed) >= base - 1e-12


def test_objective_trace_monotone():
    design, y, schedule = random_instance(6)
    res = fit(y, design, schedule)
    trace = res.objective_trace
    scale = max(1.0, trace[0])
    assert all(b <= a + 5e-15 * scale for a, b in zip(trace, trace[1:]))


def test_fitted_group_sum_and_range_invariants():
    design, y, schedule = random_instance(7)
    res = fit(y, design, schedule)
    n = design.n
    total = np.zeros(n)
    for key, vec in res.fitted_groups.items():
        total += vec
        # each fitted group lies in the range of its block
        assert (
            np.linalg.norm(design.project(key, vec) - vec) / math.sqrt(n) < 1e-10
        )
    assert np.linalg.norm(total - res.fitted) / math.sqrt(n) <= 1e-12 * (
        1 + np.linalg.norm(y) / math.sqrt(n)
    )


def test_sweep_order_invariance_of_fitted():
    design, y, schedule = random_instance(8)
    res_a = fit(y, design, schedule, FitConfig(sweep_order="ascending"))
    res_d = fit(y, design, schedule, FitConfig(sweep_order="descending"))
    n = design.n
    tol = 1e-8 * np.linalg.norm(y) / math.sqrt(n)
    assert np.linalg.norm(res_a.fitted - res_d.fitted) / math.sqrt(n) <= tol


def test_kkt_certificate_on_converged_fit():
    design, y, schedule = random_instance(9)
    res = fit(y, design, schedule)
    report = kkt_check(y, design, schedule, res)
    assert report.inactive_max_ratio <= 1.0 + 1e-6
    assert report.active_max_violation <= 1e-6 * (
        1.0 + max(schedule.lam_vector())
    )


def test_truncated_run_flags_nonconvergence():
    design, y, schedule = random_instance(10)
    res = fit(y, design, schedule, FitConfig(max_sweeps=1, active_set_iters=0))
    full = fit(y, design, schedule)
    assert full.converged
    # the deliberately truncated run must not silently claim optimality
    assert not res.converged or res.n_sweeps == 1
    if not res.converged:
        assert res.kkt.violation(max(schedule.lam_vector())) > full.kkt.violation(
            max(schedule.lam_vector())
        )


def test_screening_fixed_point():
    design, y, schedule = random_instance(11)
    # inflate all levels until nothing survives one sweep from zero
    big = {key: 100.0 for key in design.groups()}
    schedule_big = schedule_for(design, big)
    res = fit(y, design, schedule_big, FitConfig(max_sweeps=1))
    assert res.active_set == []
    for key in design.groups():
        assert design.project_norm2n(key, y) <= schedule_big.a0 * 100.0


def test_scaling_equivariance():
    design, y, _ = random_instance(12)
    n = design.n
    s1 = penalty_levels(design.scheme, n, sigma=0.5)
    s2 = penalty_levels(design.scheme, n, sigma=1.5)
    res1 = fit(y, design, s1)
    res2 = fit(3.0 * y, design, s2)
    assert np.abs(res2.fitted - 3.0 * res1.fitted).max() < 1e-9


def test_warm_start_path_matches_cold():
    design, y, schedule = random_instance(13)
    scheds = [
        penalty_levels(design.scheme, design.n, sigma=s) for s in (2.0, 1.0, 0.5)
    ]
    warm = fit_path(y, design, scheds)
    for schedule_i, res_i in zip(scheds, warm):
        cold = fit(y, design, schedule_i)
        assert (
            np.linalg.norm(res_i.fitted - cold.fitted) / math.sqrt(design.n) < 1e-7
        )


def test_predict_reproduces_fitted_and_zero_coefs():
    design, y, schedule = random_instance(14)
    res = fit(y, design, schedule)
    f_hat, per_comp = predict(res, design.x)
    assert np.abs(f_hat - res.fitted).max() < 1e-10
    assert per_comp.shape == (design.n, design.scheme.p)
    res.beta.clear()
    f0, _ = predict(res, design.x)
    assert np.all(f0 == 0.0)


def test_predict_linear_parametric_component():
    scheme = ResolutionScheme(1, 1, (Parametric(1), NONPARAMETRIC))
    rng = np.random.default_rng(15)
    design = assemble_design(rng.uniform(size=(30, 2)), FOURIER, scheme)
    schedule = schedule_for(design, {key: 0.1 for key in design.groups()})
    y = 2.0 * design.x[:, 0]
    res = fit(y, design, schedule)
    res.beta = {(1, 1): np.array([2.0])}
    probes = np.column_stack([np.linspace(0, 1, 7), np.full(7, 0.5)])
    f_hat, per = predict(res, probes)
    assert np.allclose(f_hat, 2.0 * probes[:, 0], atol=1e-12)
    assert np.allclose(per[:, 1], 0.0)


def test_predict_domain_validation():
    design, y, schedule = random_instance(16)
    res = fit(y, design, schedule)
    bad = design.x.copy()
    bad[0, 0] = 1.7
    with pytest.raises(ValueError):
        predict(res, bad)


def test_fit_rejects_bad_inputs():
    design, y, schedule = random_instance(17)
    with pytest.raises(ValueError):
        fit(y[:-1], design, schedule)
    with pytest.raises(ValueError):
        fit(np.r_[y[:-1], np.nan], design, schedule)
    partial = {k: v for k, v in schedule.lam.items() if k != (1, design.scheme.k_star)}
    broken = PenaltySchedule(
        lam=partial, lambda0=schedule.lambda0, sigma=1.0, eps=1.0, a0=2.0,
        n=design.n, p=design.scheme.p,
    )
    with pytest.raises(ValueError, match="missing group"):
        fit(y, design, broken)


def test_proximal_gradient_agreement_small():
    for seed in range(5):
        design, y, schedule = random_instance(100 + seed, n=30, p=2)
        res = fit(y, design, schedule)
        blocks = {key: design.block(key) for key in design.groups()}
        lam = {key: schedule[key] for key in design.groups()}
        ref = pg_fit(y, blocks, lam, schedule.a0)
        gap = np.linalg.norm(res.fitted - ref) / math.sqrt(design.n)
        assert gap <= 1e-6, f"seed {seed}: {gap}"


def test_root_half_variant_threshold_behavior():
    design = orthonormal_single_group()
    rng = np.random.default_rng(18)
    c = rng.normal(size=4)
    c /= np.linalg.norm(c)
    y = design.block((1, 2)) @ c
    # a0 * lam >= 1/2 kills every group under the square-root loss
    schedule = schedule_for(design, {(1, 2): 0.3})
    res = fit(y, design, schedule, FitConfig(loss_variant=ROOT_HALF))
    assert res.active_set == []
    # with y exactly in range (b = 0) and a0 lam < 1/2 there is no shrinkage
    schedule2 = schedule_for(design, {(1, 2): 0.2})
    res2 = fit(y, design, schedule2, FitConfig(loss_variant=ROOT_HALF))
    assert np.abs(res2.fitted - y).max() < 1e-10


def test_root_half_objective_definition():
    design, y, schedule = random_instance(19)
    val = objective(y, design, schedule, {}, loss_variant=ROOT_HALF)
    assert val == pytest.approx(
        0.5 * np.linalg.norm(y) / math.sqrt(design.n), rel=1e-12
    )
