"""Ground-truth additive functions, synthetic data, and population norms.

A truth is stored as coefficient blocks beta*_{j,k} for the active
components, truncated at a depth >= the modeled top level; the default
generator draws one unit direction per block and sets the block norm to
c_j 2^(-(alpha + 1/2) k) g_{j,k}, which gives finite smoothness norms with
calculable values.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from typing import Dict, Optional, Sequence, Tuple

import numpy as np
from scipy.stats import norm as _gaussian

from .basis import (
    FOURIER,
    NONPARAMETRIC,
    BasisFamily,
    GroupKey,
    Nonparametric,
    ResolutionScheme,
    _block_columns,
)


def _rng(*tags: int) -> np.random.Generator:
    """Independent, reproducible stream keyed by integer tags."""
    return np.random.default_rng(np.random.SeedSequence(list(tags)))


_TRUTH_TAG = 101
_DESIGN_TAG = 211
_NOISE_TAG = 307
_FRESH_TAG = 401


@dataclass(frozen=True)
class TruthSpec:
    """Coefficient representation of the true additive function."""

    p: int
    support: Tuple[int, ...]
    alpha: Dict[int, float]          # per active component
    k_star: int
    depth: int                       # levels k_star..depth are stored
    coeffs: Dict[GroupKey, np.ndarray]
    amplitude: Dict[int, float] = field(default_factory=dict)

    def __post_init__(self):
        for j in self.support:
            if not 1 <= j <= self.p:
                raise ValueError(f"support component {j} outside 1..{self.p}")
            if self.alpha.get(j, 1.0) <= 0.5:
                raise ValueError("smoothness index must exceed 1/2")
        if self.depth < self.k_star:
            raise ValueError("depth must be >= k_star")

    @property
    def s0(self) -> int:
        return len(self.support)

    def block_norm(self, j: int, k: int) -> float:
        arr = self.coeffs.get((j, k))
        return 0.0 if arr is None else float(np.linalg.norm(arr))

    def levels(self) -> range:
        return range(self.k_star, self.depth + 1)

    def scheme(self, k_max: int) -> ResolutionScheme:
        """The nonparametric modeling scheme matching this truth."""
        return ResolutionScheme(self.k_star, k_max, (NONPARAMETRIC,) * self.p)


def _block_dim(k_star: int, k: int) -> int:
    return 2 ** max(k - 1, k_star)


def make_decay_truth(
    p: int,
    support: Sequence[int],
    alpha: float | Dict[int, float],
    k_star: int,
    depth: int,
    seed: int,
    amplitude: float | Dict[int, float] = 1.0,
    gains: str = "ones",
    k_min_active: Optional[int] = None,
) -> TruthSpec:
    """Draw a truth whose block norms decay like 2^(-(alpha + 1/2) k).

    ``amplitude`` is the target population L2 norm of each active component
    (under the orthonormal-basis Parseval identity).  ``gains='seeded'``
    multiplies each block norm by a per-block factor in [0.5, 1.5].
    ``k_min_active`` zeroes blocks below that level (useful to keep baseline
    blocks empty).
    """
    support = tuple(sorted(set(support)))
    alphas = {j: float(alpha) for j in support} if np.isscalar(alpha) else dict(alpha)
    amps = (
        {j: float(amplitude) for j in support}
        if np.isscalar(amplitude)
        else dict(amplitude)
    )
    k_lo = k_star if k_min_active is None else max(k_star, k_min_active)
    coeffs: Dict[GroupKey, np.ndarray] = {}
    for j in support:
        a = alphas[j]
        rng = _rng(seed, _TRUTH_TAG, j)
        gain = {}
        for k in range(k_lo, depth + 1):
            gain[k] = 1.0 if gains == "ones" else rng.uniform(0.5, 1.5)
        # normalize so sum_k ||beta_{j,k}||^2 = amplitude^2
        raw = {k: 2.0 ** (-(a + 0.5) * k) * gain[k] for k in range(k_lo, depth + 1)}
        total = math.sqrt(sum(v ** 2 for v in raw.values()))
        scale = amps[j] / total if total > 0 else 0.0
        for k in range(k_lo, depth + 1):
            d = _block_dim(k_star, k)
            direction = rng.normal(size=d)
            direction /= np.linalg.norm(direction)
            coeffs[(j, k)] = raw[k] * scale * direction
    return TruthSpec(
        p=p,
        support=support,
        alpha=alphas,
        k_star=k_star,
        depth=depth,
        coeffs=coeffs,
        amplitude=amps,
    )


@dataclass(frozen=True)
class Scenario:
    """A reproducible data-generating configuration."""

    n: int
    truth: TruthSpec
    sigma: float
    seed: int
    design: str = "iid-uniform"     # or "copula"
    copula_rho: float = 0.0
    family: BasisFamily = FOURIER

    def __post_init__(self):
        if self.sigma < 0:
            raise ValueError(f"sigma must be >= 0, got {self.sigma}")
        if self.design not in ("iid-uniform", "copula"):
            raise ValueError(f"unknown design {self.design!r}")
        if self.design == "copula" and not 0.0 <= self.copula_rho <= 0.99:
            raise ValueError("copula correlation must lie in [0, 0.99]")


def _draw_design(scenario: Scenario, n: int, rng: np.random.Generator) -> np.ndarray:
    p = scenario.truth.p
    if scenario.design == "iid-uniform":
        return rng.uniform(size=(n, p))
    # Gaussian copula with equicorrelation rho: marginals stay uniform, so
    # per-group population Grams remain the identity while components become
    # dependent.
    rho = scenario.copula_rho
    shared = rng.normal(size=(n, 1))
    own = rng.normal(size=(n, p))
    z = math.sqrt(rho) * shared + math.sqrt(1.0 - rho) * own
    return _gaussian.cdf(z)


def component_values(
    truth: TruthSpec, family: BasisFamily, x: np.ndarray
) -> Dict[GroupKey, np.ndarray]:
    """Realized block vectors f*_{j,k} at the given covariates."""
    from .basis import _fourier_weighted_sum

    scheme = truth.scheme(k_max=truth.depth)
    out: Dict[GroupKey, np.ndarray] = {}
    for (j, k), beta in truth.coeffs.items():
        if family.name == "fourier":
            m_first = scheme.block_offset(j, k) + 1
            out[(j, k)] = _fourier_weighted_sum(x[:, j - 1], m_first, beta)
        else:
            cols = _block_columns(family, scheme, j, k, x[:, j - 1])
            out[(j, k)] = cols @ beta
    return out


def simulate(
    scenario: Scenario, n: Optional[int] = None, replicate: int = 0
) -> Tuple[np.ndarray, np.ndarray, np.ndarray, Dict[GroupKey, np.ndarray]]:
    """Draw (X, y, f*(rows), per-group realizations) reproducibly.

    Separate replicates (or overridden n) get independent design/noise
    streams while sharing the same truth.
    """
    n = scenario.n if n is None else n
    if scenario.truth.s0 == 0 and any(
        np.linalg.norm(v) > 0 for v in scenario.truth.coeffs.values()
    ):
        raise ValueError("empty support with nonzero coefficients")
    x = _draw_design(
        scenario, n, _rng(scenario.seed, _DESIGN_TAG, replicate, n)
    )
    comps = component_values(scenario.truth, scenario.family, x)
    f_star = np.zeros(n)
    for vec in comps.values():
        f_star += vec
    noise_rng = _rng(scenario.seed, _NOISE_TAG, replicate, n)
    y = f_star + scenario.sigma * noise_rng.normal(size=n)
    return x, y, f_star, comps


def truth_values(truth: TruthSpec, family: BasisFamily, x: np.ndarray) -> np.ndarray:
    """f*(rows of x)."""
    vals = component_values(truth, family, x)
    out = np.zeros(x.shape[0])
    for v in vals.values():
        out += v
    return out


# ---------------------------------------------------------------------------
# Population quantities
# ---------------------------------------------------------------------------

def population_sobolev(
    truth: TruthSpec, j: int, alpha: float
) -> Tuple[float, float, float]:
    """(||f*_j||_{alpha,2}, Sobolev variant, truncation tail bound).

    The sums run over the stored levels; the reported tail bounds the
    contribution of the discarded levels using the generator decay rule of
    the component (infinite when the requested alpha outgrows it).
    """
    if alpha <= 0:
        raise ValueError("alpha must be positive")
    base = truth.block_norm(j, truth.k_star) ** 2
    high = sum(
        4.0 ** (alpha * k) * truth.block_norm(j, k) ** 2
        for k in range(truth.k_star + 1, truth.depth + 1)
    )
    norm_alpha = math.sqrt(high)
    norm_sobolev = math.sqrt(base + high)
    alpha_j = truth.alpha.get(j)
    if alpha_j is None or truth.block_norm(j, truth.depth) == 0.0:
        tail = 0.0
    else:
        # ratio of consecutive squared terms under the decay rule
        r = 2.0 ** (2.0 * alpha - 2.0 * alpha_j - 1.0)
        last = 4.0 ** (alpha * truth.depth) * truth.block_norm(j, truth.depth) ** 2
        tail = math.inf if r >= 1.0 else last * (2.25 * r) / (1.0 - r)
        # 2.25 covers seeded gains up to 1.5x the decay rule
    return norm_alpha, norm_sobolev, tail


def population_complexity(
    truth: TruthSpec, alpha: float, q: float
) -> Tuple[float, float]:
    """Aggregate complexity of the truth across components.

    Returns (M_{alpha,q}, baseline q-power sum).  The first is the l_q
    aggregate of the component smoothness norms: a count for q = 0, the
    maximum for q = inf, otherwise the q-th root of the power sum.  The
    second is sum_j ||beta*_{j,k_star}||^q with the same q = 0 convention.
    """
    if q < 0:
        raise ValueError("q must be >= 0 (math.inf allowed)")
    norms = [population_sobolev(truth, j, alpha)[0] for j in range(1, truth.p + 1)]
    base = [truth.block_norm(j, truth.k_star) for j in range(1, truth.p + 1)]
    if q == 0:
        return float(sum(v > 0 for v in norms)), float(sum(v > 0 for v in base))
    if math.isinf(q):
        return (max(norms) if norms else 0.0), (max(base) if base else 0.0)
    m_alpha = sum(v ** q for v in norms) ** (1.0 / q)
    m_base_pow = sum(v ** q for v in base)
    return float(m_alpha), float(m_base_pow)


def population_l2_norm2(truth: TruthSpec, j: int) -> float:
    """||f*_j||_{L2}^2 under the orthonormal-family Parseval identity."""
    return float(
        sum(
            truth.block_norm(j, k) ** 2
            for k in range(truth.k_star, truth.depth + 1)
        )
    )


def tail_l2_norm2(truth: TruthSpec, k_max: int) -> float:
    """||f* - fbar||_{L2}^2: exact when covariates are iid uniform and the
    family is orthonormal (the levels above k_max are mean zero, so cross
    terms vanish)."""
    return float(
        sum(
            truth.block_norm(j, k) ** 2
            for j in truth.support
            for k in range(k_max + 1, truth.depth + 1)
        )
    )


def approx_tail_constant(alpha: float) -> float:
    """(4^alpha - 1)^(-1/2): the geometric constant of the truncation
    bound."""
    return (4.0 ** alpha - 1.0) ** (-0.5)


def out_of_sample_error(
    fit_result,
    scenario: Scenario,
    m: int,
    seed: int,
) -> Tuple[float, float]:
    """Monte-Carlo estimate of ||fhat - f*||_{L2}^2 with its standard error.

    Draws m fresh rows from the scenario design distribution, evaluates the
    fitted expansion and the stored truth on them, and averages the squared
    difference.
    """
    from .solver import predict

    if m < 2:
        raise ValueError(f"m must be >= 2, got {m}")
    x_new = _draw_design(scenario, m, _rng(seed, _FRESH_TAG))
    f_hat, _ = predict(fit_result, x_new)
    f_true = truth_values(scenario.truth, scenario.family, x_new)
    sq = (f_hat - f_true) ** 2
    return float(sq.mean()), float(sq.std(ddof=1) / math.sqrt(m))


# ---------------------------------------------------------------------------
# Scenario (de)serialization
# ---------------------------------------------------------------------------

def scenario_to_json(scenario: Scenario) -> str:
    t = scenario.truth
    payload = {
        "n": scenario.n,
        "p": t.p,
        "s0": t.s0,
        "alpha": t.alpha[t.support[0]] if t.support else 1.0,
        "sigma": scenario.sigma,
        "design": scenario.design
        if scenario.design == "iid-uniform"
        else f"copula:{scenario.copula_rho}",
        "seed": scenario.seed,
        "depth": t.depth,
        "k_star": t.k_star,
        "amplitude": t.amplitude[t.support[0]] if t.support else 1.0,
    }
    return json.dumps(payload, indent=2, sort_keys=True)


def scenario_from_config(config: dict) -> Scenario:
    """Build a scenario from the JSON fields
    {n, p, s0, alpha, sigma, design, seed, depth} (optional: amplitude,
    k_star, eps).

    The support is a seeded draw of s0 distinct components; k_star defaults
    to the level rule for (p, eps = 1).
    """
    required = {"n", "p", "s0", "alpha", "sigma", "design", "seed", "depth"}
    missing = required - set(config)
    if missing:
        raise ValueError(f"scenario config missing fields: {sorted(missing)}")
    n = int(config["n"])
    p = int(config["p"])
    s0 = int(config["s0"])
    if not 0 <= s0 <= p:
        raise ValueError(f"s0={s0} outside 0..p={p}")
    eps = float(config.get("eps", 1.0))
    if "k_star" in config:
        k_star = int(config["k_star"])
    else:
        from .basis import make_scheme

        k_star = make_scheme(p, n=n, eps=eps).k_star
    depth = int(config["depth"])
    seed = int(config["seed"])
    rng = _rng(seed, _TRUTH_TAG)
    support = (
        tuple(sorted(int(v) + 1 for v in rng.choice(p, size=s0, replace=False)))
        if s0
        else ()
    )
    truth = make_decay_truth(
        p=p,
        support=support,
        alpha=float(config["alpha"]),
        k_star=k_star,
        depth=depth,
        seed=seed,
        amplitude=float(config.get("amplitude", 1.0)),
    )
    design = str(config["design"])
    rho = 0.0
    if design.startswith("copula"):
        parts = design.split(":")
        rho = float(parts[1]) if len(parts) > 1 else 0.5
        design = "copula"
    return Scenario(
        n=n,
        truth=truth,
        sigma=float(config["sigma"]),
        seed=seed,
        design=design,
        copula_rho=rho,
    )
