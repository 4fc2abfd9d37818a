import math

import numpy as np
import pytest

from mrglasso.basis import FOURIER, ResolutionScheme, NONPARAMETRIC, assemble_design
from mrglasso.model import (
    Scenario,
    approx_tail_constant,
    component_values,
    make_decay_truth,
    population_complexity,
    population_l2_norm2,
    population_sobolev,
    scenario_from_config,
    simulate,
    tail_l2_norm2,
    truth_values,
)
from mrglasso.theory import empirical_sobolev


def toy_truth(**kwargs):
    defaults = dict(
        p=3, support=(1, 3), alpha=1.5, k_star=2, depth=8, seed=42, amplitude=2.0
    )
    defaults.update(kwargs)
    return make_decay_truth(**defaults)


def test_truth_inactive_components_zero():
    truth = toy_truth()
    assert truth.block_norm(2, 3) == 0.0
    assert population_sobolev(truth, 2, 1.0) == (0.0, 0.0, 0.0)


def test_truth_amplitude_is_l2_norm():
    truth = toy_truth(amplitude=3.0)
    for j in truth.support:
        assert population_l2_norm2(truth, j) == pytest.approx(9.0, rel=1e-12)


def test_truth_sobolev_partial_sums_cauchy():
    # finite smoothness norm: the level sums converge under the decay rule
    truth = toy_truth(depth=12)
    j = truth.support[0]
    alpha = truth.alpha[j]
    partials = []
    total = 0.0
    for k in range(truth.k_star + 1, truth.depth + 1):
        total += 4.0 ** (alpha * k) * truth.block_norm(j, k) ** 2
        partials.append(total)
    assert partials[-1] - partials[-3] < 1e-8 * (1 + partials[-1])


def test_population_sobolev_single_block():
    truth = toy_truth()
    j = truth.support[0]
    coeffs = {
        key: (np.zeros_like(v) if key[1] != truth.k_star + 1 else v)
        for key, v in truth.coeffs.items()
    }
    import dataclasses

    single = dataclasses.replace(truth, coeffs=coeffs)
    c = single.block_norm(j, truth.k_star + 1)
    for alpha in (0.7, 1.0, 2.0):
        norm_alpha, norm_sob, _ = population_sobolev(single, j, alpha)
        assert norm_alpha == pytest.approx(2.0 ** (alpha * (truth.k_star + 1)) * c)
        assert norm_sob == pytest.approx(norm_alpha)  # baseline block zeroed


def test_population_sobolev_geometric_series_oracle():
    # blocks ||beta_{j,k}|| = 2^(-1.5 k), alpha = 1 -> sum of 2^(-k)
    truth = toy_truth(alpha=1.0, depth=10, amplitude=1.0)
    j = truth.support[0]
    coeffs = {}
    for k in range(truth.k_star, truth.depth + 1):
        d = 2 ** max(k - 1, truth.k_star)
        vec = np.zeros(d)
        vec[0] = 2.0 ** (-1.5 * k)
        coeffs[(j, k)] = vec
    import dataclasses

    g = dataclasses.replace(truth, support=(j,), coeffs=coeffs)
    norm_alpha, _, _ = population_sobolev(g, j, 1.0)
    brute = sum(
        4.0 ** k * (2.0 ** (-1.5 * k)) ** 2 for k in range(g.k_star + 1, g.depth + 1)
    )
    assert norm_alpha ** 2 == pytest.approx(brute, rel=1e-14)


def test_population_complexity_limits():
    truth = toy_truth()
    m0, mbr0 = population_complexity(truth, alpha=1.0, q=0.0)
    assert m0 == truth.s0  # active count at q = 0
    norms = [population_sobolev(truth, j, 1.0)[0] for j in range(1, truth.p + 1)]
    minf, _ = population_complexity(truth, alpha=1.0, q=math.inf)
    assert minf == max(norms)
    m1, _ = population_complexity(truth, alpha=1.0, q=1.0)
    assert m1 == pytest.approx(sum(norms), rel=1e-12)


def test_population_complexity_euclidean():
    import dataclasses

    truth = toy_truth(p=2, support=(1, 2), alpha=1.0, amplitude=1.0)
    # rescale components so the alpha-norms are exactly 3 and 4
    norms = {j: population_sobolev(truth, j, 1.0)[0] for j in (1, 2)}
    coeffs = {}
    for (j, k), v in truth.coeffs.items():
        coeffs[(j, k)] = v * ((3.0 if j == 1 else 4.0) / norms[j])
    scaled = dataclasses.replace(truth, coeffs=coeffs)
    m2, _ = population_complexity(scaled, alpha=1.0, q=2.0)
    assert m2 == pytest.approx(5.0, rel=1e-12)


def make_scenario(**kwargs):
    defaults = dict(n=64, sigma=0.5, seed=7)
    defaults.update(kwargs)
    truth = defaults.pop("truth", toy_truth())
    return Scenario(truth=truth, **defaults)


def test_simulate_noiseless_and_deterministic():
    scn = make_scenario(sigma=0.0)
    x1, y1, f1, comps1 = simulate(scn)
    x2, y2, f2, _ = simulate(scn)
    assert np.array_equal(x1, x2) and np.array_equal(y1, y2)
    assert np.array_equal(y1, f1)
    total = np.zeros(scn.n)
    for vec in comps1.values():
        total += vec
    assert np.allclose(total, f1, atol=1e-12)


def test_simulate_replicates_independent():
    scn = make_scenario()
    _, y0, _, _ = simulate(scn, replicate=0)
    _, y1, _, _ = simulate(scn, replicate=1)
    assert not np.allclose(y0, y1)


def test_simulate_zero_truth_noise_moments():
    truth = make_decay_truth(
        p=2, support=(), alpha=1.0, k_star=2, depth=5, seed=0
    )
    scn = Scenario(n=10_000, truth=truth, sigma=1.0, seed=3)
    _, y, f_star, _ = simulate(scn)
    assert np.all(f_star == 0.0)
    assert abs(y.mean()) < 4.0 / math.sqrt(scn.n)
    assert abs(y.var() - 1.0) < 0.1


def test_simulate_rejects_negative_sigma():
    with pytest.raises(ValueError):
        make_scenario(sigma=-0.1)


def test_copula_design_uniform_marginals():
    scn = make_scenario(design="copula", copula_rho=0.6, n=20_000)
    x, _, _, _ = simulate(scn)
    assert x.min() >= 0.0 and x.max() <= 1.0
    # marginal uniformity: mean 1/2, var 1/12
    assert np.abs(x.mean(axis=0) - 0.5).max() < 0.02
    assert np.abs(x.var(axis=0) - 1.0 / 12.0).max() < 0.01
    # positive dependence across columns
    r = np.corrcoef(x.T)
    off = r[np.triu_indices_from(r, 1)]
    assert off.min() > 0.3


def test_parseval_monte_carlo():
    truth = toy_truth(amplitude=1.5)
    scn = Scenario(n=20_000, truth=truth, sigma=0.0, seed=5)
    x, _, _, comps = simulate(scn)
    j = truth.support[0]
    fj = np.zeros(scn.n)
    for (jj, k), vec in comps.items():
        if jj == j:
            fj += vec
    mc = float(fj @ fj / scn.n)
    pop = population_l2_norm2(truth, j)
    se = float(np.std(fj ** 2, ddof=1) / math.sqrt(scn.n))
    assert abs(mc - pop) <= 3 * se


def test_empirical_sobolev_mean_matches_population():
    # iid uniform + Fourier: per-group population Gram is the identity, so
    # E ||f_j||_{alpha,2,n}^2 equals the coefficient-side norm exactly
    truth = toy_truth(amplitude=1.0, depth=6)
    j = truth.support[0]
    alpha = 1.0
    pop = population_sobolev(truth, j, alpha)[0] ** 2
    rng_values = []
    for rep in range(200):
        scn = Scenario(n=64, truth=truth, sigma=0.0, seed=1000 + rep)
        x, _, _, comps = simulate(scn)
        blocks = {k: comps[(j, k)] for k in range(truth.k_star, truth.depth + 1)}
        na, _ = empirical_sobolev(blocks, alpha, truth.k_star)
        rng_values.append(na ** 2)
    mean = float(np.mean(rng_values))
    se = float(np.std(rng_values, ddof=1) / math.sqrt(len(rng_values)))
    assert abs(mean - pop) <= 3.5 * se


def test_truncation_tail_bound_every_seed():
    # || f_j - fbar_j ||_{2,n} <= 2^(-alpha k_max) ||f_j||_{alpha,2,n} C_alpha
    truth = toy_truth(depth=9, alpha=1.25)
    k_max = 5
    for seed in range(50):
        scn = Scenario(n=48, truth=truth, sigma=0.0, seed=seed)
        x, _, _, comps = simulate(scn)
        for j in truth.support:
            blocks = {k: comps[(j, k)] for k in range(truth.k_star, truth.depth + 1)}
            tail = np.zeros(scn.n)
            for k in range(k_max + 1, truth.depth + 1):
                tail += blocks[k]
            lhs = np.linalg.norm(tail) / math.sqrt(scn.n)
            alpha = truth.alpha[j]
            na, _ = empirical_sobolev(blocks, alpha, truth.k_star)
            rhs = 2.0 ** (-alpha * k_max) * na * approx_tail_constant(alpha)
            assert lhs <= rhs + 1e-12


def test_tail_l2_exact_vs_monte_carlo():
    truth = toy_truth(depth=8, alpha=1.0)
    k_max = 4
    exact = tail_l2_norm2(truth, k_max)
    scn = Scenario(n=40_000, truth=truth, sigma=0.0, seed=77)
    x, _, _, comps = simulate(scn)
    tail = np.zeros(scn.n)
    for (j, k), vec in comps.items():
        if k > k_max:
            tail += vec
    mc = float(tail @ tail / scn.n)
    se = float(np.std(tail ** 2, ddof=1) / math.sqrt(scn.n))
    assert abs(mc - exact) <= 4 * se


def test_approx_tail_constant_value():
    assert approx_tail_constant(1.0) == pytest.approx(1.0 / math.sqrt(3.0), abs=1e-12)


def test_scenario_from_config_roundtrip():
    config = {
        "n": 32,
        "p": 6,
        "s0": 2,
        "alpha": 2.0,
        "sigma": 0.3,
        "design": "iid-uniform",
        "seed": 5,
        "depth": 8,
    }
    scn = scenario_from_config(config)
    assert scn.truth.s0 == 2
    assert scn.n == 32
    scn2 = scenario_from_config(config)
    assert scn.truth.support == scn2.truth.support
    x1, y1, _, _ = simulate(scn)
    x2, y2, _, _ = simulate(scn2)
    assert np.array_equal(x1, x2) and np.array_equal(y1, y2)
    with pytest.raises(ValueError, match="missing"):
        scenario_from_config({"n": 32})


def test_out_of_sample_error_truth_is_zero():
    from mrglasso.model import out_of_sample_error
    from mrglasso.penalties import penalty_levels
    from mrglasso.solver import FitConfig, fit

    truth = toy_truth(amplitude=1.0, depth=6)
    scn = Scenario(n=96, truth=truth, sigma=0.0, seed=13)
    x, y, f_star, _ = simulate(scn)
    scheme = ResolutionScheme(truth.k_star, 6, (NONPARAMETRIC,) * truth.p)
    design = assemble_design(x, FOURIER, scheme)
    schedule = penalty_levels(scheme, scn.n, sigma=1.0)
    result = fit(y, design, schedule)
    # feed the truth coefficients directly: error must vanish
    result.beta.clear()
    result.beta.update(
        {key: vec.copy() for key, vec in truth.coeffs.items() if key[1] <= 6}
    )
    est, se = out_of_sample_error(result, scn, m=4000, seed=3)
    assert est < 1e-20
    # zero fit on a unit component reproduces its squared norm
    result.beta.clear()
    est0, se0 = out_of_sample_error(result, scn, m=4000, seed=4)
    pop = sum(population_l2_norm2(truth, j) for j in truth.support)
    # the component sum is orthogonal across components except constants;
    # keep a generous 4-se band
    cross = 0.0
    assert abs(est0 - pop - cross) <= 4 * se0 + 0.05 * pop


def test_out_of_sample_error_se_scaling():
    from mrglasso.model import out_of_sample_error
    from mrglasso.penalties import penalty_levels
    from mrglasso.solver import fit

    truth = toy_truth(amplitude=1.0, depth=6)
    scn = Scenario(n=48, truth=truth, sigma=0.2, seed=21)
    x, y, _, _ = simulate(scn)
    scheme = ResolutionScheme(truth.k_star, 5, (NONPARAMETRIC,) * truth.p)
    design = assemble_design(x, FOURIER, scheme)
    schedule = penalty_levels(scheme, scn.n, sigma=0.2)
    result = fit(y, design, schedule)
    _, se1 = out_of_sample_error(result, scn, m=2000, seed=5)
    _, se2 = out_of_sample_error(result, scn, m=4000, seed=5)
    assert se2 == pytest.approx(se1 / math.sqrt(2.0), rel=0.2)
    with pytest.raises(ValueError):
        out_of_sample_error(result, scn, m=1, seed=5)
