"""Smoothness norms, complexity aggregates, and oracle-bound right-hand
sides, all evaluated exactly so inequalities can be checked numerically."""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Dict, Iterable, Mapping, Optional, Sequence, Tuple

import numpy as np

from ..basis import GroupKey, Parametric, ResolutionScheme
from ..penalties import PenaltySchedule


def geometric_tail_sum(c: float, q: float, k1: int, k2: int) -> float:
    """Two-branch geometric sum J used in the interpolation bound.

    c <= 0: (sum_{k=k1+1}^{k2} 2^(ck/(1-q/2)))^(1-q/2);
    c > 0:  (sum_{k=0}^{k2-k1-1} 2^(-ck/(1-q/2)))^(1-q/2);
    equal endpoints give 0.
    """
    if not 0 <= k1 <= k2:
        raise ValueError(f"need 0 <= k1 <= k2, got ({k1}, {k2})")
    if not 0.0 <= q <= 1.0:
        raise ValueError(f"q must lie in [0, 1], got {q}")
    if k1 == k2:
        return 0.0
    power = 1.0 - q / 2.0
    if c <= 0:
        ks = np.arange(k1 + 1, k2 + 1)
        total = np.sum(2.0 ** (c * ks / power))
    else:
        ks = np.arange(0, k2 - k1)
        total = np.sum(2.0 ** (-c * ks / power))
    return float(total ** power)


@dataclass(frozen=True)
class ExponentBundle:
    """Interpolation exponents (gamma, rho) with their Hoelder companions.

    Invariants: 1 <= gamma <= min(4 alpha/(2 alpha + 1), 2 - q) and
    gamma + q (1 - rho) + rho = 2.
    """

    q: float
    alpha: float
    alpha0: float
    gamma: float
    rho: float
    q1: float
    q2: float

    def coefficient(self) -> float:
        """(1/rho - 1)^rho + (1/rho - 1)^(rho - 1), the constant from
        minimizing the two-term tradeoff; equals 1 in the degenerate
        rho = 0 or rho = 1 limits."""
        if self.rho <= 0.0 or self.rho >= 1.0:
            return 1.0
        r = 1.0 / self.rho - 1.0
        return r ** self.rho + r ** (self.rho - 1.0)

    def tail_factor(self, k1: int, k2: int) -> float:
        """The combined geometric factor multiplying the two norms."""
        a = 1.0 - self.q / 2.0 - self.alpha0 * self.q
        j_low = geometric_tail_sum(a, self.q, k1, k2)
        j_high = geometric_tail_sum(self.alpha - 0.5, 1.0, k1, k2)
        return (
            self.coefficient()
            * j_low ** (1.0 - self.rho)
            * j_high ** self.rho
        )


def interpolation_exponents(q: float, alpha: float, alpha0: float) -> ExponentBundle:
    """Exponents controlling the penalized-block-sum bound.

    gamma = ((2-q)(alpha-1/2) + (1 - q/2 - q alpha0)_+) /
            (alpha - 1/2 + (1 - q/2 - q alpha0)_+), with gamma = 1 at
    alpha = 1/2; rho = (1 - q/2 - alpha0 q)_+ / (alpha - 1/2 + (...)_+).
    """
    if not 0.0 <= q <= 1.0:
        raise ValueError(f"q must lie in [0, 1], got {q}")
    if alpha < 0.5:
        raise ValueError(f"alpha must be >= 1/2, got {alpha}")
    if not 0.0 <= alpha0 <= alpha:
        raise ValueError(f"need 0 <= alpha0 <= alpha, got alpha0={alpha0}")
    a = max(0.0, 1.0 - q / 2.0 - q * alpha0)
    if alpha == 0.5:
        gamma, rho = 1.0, 1.0
    else:
        denom = alpha - 0.5 + a
        gamma = ((2.0 - q) * (alpha - 0.5) + a) / denom
        rho = a / denom
    if q > 0.0:
        q1, q2 = 1.0, q
    else:
        q1, q2 = (rho if rho > 0 else 1.0), 1.0
    return ExponentBundle(q=q, alpha=alpha, alpha0=alpha0, gamma=gamma, rho=rho, q1=q1, q2=q2)


def empirical_sobolev(
    blocks: Mapping[int, np.ndarray] | Mapping[int, float],
    alpha: float,
    k_star: int,
    n: Optional[int] = None,
) -> Tuple[float, float]:
    """(||f_j||_{alpha,2,n}, Sobolev variant) from realized level vectors.

    ``blocks`` maps level k to either the realized n-vector f_{j,k} or its
    precomputed ||.||_{2,n} norm.
    """
    def norm2n(value) -> float:
        if np.isscalar(value):
            return float(value)
        arr = np.asarray(value, dtype=float)
        size = arr.size if n is None else n
        return float(np.linalg.norm(arr) / math.sqrt(size))

    high = sum(
        4.0 ** (alpha * k) * norm2n(v) ** 2 for k, v in blocks.items() if k > k_star
    )
    base = sum(norm2n(v) ** 2 for k, v in blocks.items() if k == k_star)
    return math.sqrt(high), math.sqrt(base + high)


def empirical_complexity(
    component_blocks: Mapping[int, Mapping[int, np.ndarray]],
    schedule: PenaltySchedule,
    scheme: ResolutionScheme,
    alpha: float,
    q: float,
    q0: float,
) -> Tuple[float, float]:
    """Complexity aggregates of realized components.

    Returns (M_{alpha,q,n}, baseline measure) where the first is the l_q
    aggregate of per-component smoothness norms (count at q = 0, max at
    q = inf, else the q-th root) over nonparametric components, and the
    second is the q0-power sum sum_j (lambda_{j,k_star}/lambda_0)^(2-q0)
    ||f_{j,k_star}||_{2,n}^q0 over all components (its q0 -> 0 limit keeps
    the squared weight on the active ones).
    """
    norms = []
    base_terms = []
    two_log = schedule.two_log
    for j in range(1, scheme.p + 1):
        blocks = component_blocks.get(j, {})
        if isinstance(scheme.kind(j), Parametric):
            n_alpha = 0.0
        else:
            n_alpha, _ = empirical_sobolev(blocks, alpha, scheme.k_star)
            norms.append(n_alpha)
        k_star = scheme.k_star
        vec = blocks.get(k_star)
        bnorm = (
            0.0
            if vec is None
            else float(np.linalg.norm(vec) / math.sqrt(np.asarray(vec).size))
        )
        weight = schedule[(j, k_star)] / schedule.lambda0
        if (
            not isinstance(scheme.kind(j), Parametric)
            and 2.0 ** (scheme.k_star - 1) < two_log <= 2.0 ** scheme.k_star
            and weight > 3.0
        ):
            raise AssertionError(
                f"baseline weight {weight:.4f} exceeds 3 despite the level rule"
            )
        base_terms.append((weight, bnorm))

    if q == 0:
        m_alpha = float(sum(v > 0 for v in norms))
    elif math.isinf(q):
        m_alpha = max(norms) if norms else 0.0
    else:
        m_alpha = float(sum(v ** q for v in norms) ** (1.0 / q))
    if q0 == 0:
        m_base = float(sum(w ** 2 for w, b in base_terms if b > 0))
    elif math.isinf(q0):
        m_base = max((b for _, b in base_terms), default=0.0)
    else:
        m_base = float(sum(w ** (2.0 - q0) * b ** q0 for w, b in base_terms))
    return m_alpha, m_base


def penalized_block_sum_bound(
    block_norms: Mapping[int, float],
    sigma_n: float,
    lam: Mapping[int, float],
    bundle: ExponentBundle,
    k_star: int,
    k_max: int,
) -> Tuple[float, float]:
    """(lhs, rhs) of the interpolation bound for one component.

    lhs = sum_{k_star < k <= k_max} lambda_k min(||f_{j,k}||_{2,n},
    lambda_k); rhs = sigma_n^gamma * tail factor * (low-smoothness norm^q)
    ^(1-rho) * (high-smoothness norm)^rho.  Requires lambda_k <=
    sigma_n 2^(k/2) on the covered levels.
    """
    lhs = 0.0
    for k in range(k_star + 1, k_max + 1):
        lam_k = lam[k]
        if lam_k > sigma_n * 2.0 ** (k / 2.0) * (1.0 + 1e-12):
            raise ValueError(
                f"lambda_{k}={lam_k} exceeds sigma_n 2^(k/2); bracket violated"
            )
        lhs += lam_k * min(block_norms.get(k, 0.0), lam_k)
    norm_alpha0 = math.sqrt(
        sum(
            4.0 ** (bundle.alpha0 * k) * block_norms.get(k, 0.0) ** 2
            for k in range(k_star + 1, k_max + 1)
        )
    )
    norm_alpha = math.sqrt(
        sum(
            4.0 ** (bundle.alpha * k) * block_norms.get(k, 0.0) ** 2
            for k in range(k_star + 1, k_max + 1)
        )
    )
    rhs = (
        sigma_n ** bundle.gamma
        * bundle.tail_factor(k_star, k_max)
        * (norm_alpha0 ** bundle.q) ** (1.0 - bundle.rho)
        * norm_alpha ** bundle.rho
    )
    return lhs, rhs


@dataclass(frozen=True)
class Theorem1Bounds:
    """Right-hand sides of the empirical prediction-error bounds."""

    b_s: float                 # (A0+1)^2 C_pred ||lambda_S||_2^2
    delta_s: float             # ||fbar - f*||^2 + 4 A0 pen_{S^c}(fbar)
    bound_err: float           # B_S + Delta_S, bounds ||fhat - f*||^2
    bound_sum: float           # 4 B_S + 2 Delta_S, bounds the error sum
    bound_adaptive: float      # threshold-set form with C*_pred
    s_adaptive: Tuple[GroupKey, ...]
    c_star_pred: float


def prediction_error_bounds(
    fbar_blocks: Mapping[GroupKey, np.ndarray],
    f_star: np.ndarray,
    schedule: PenaltySchedule,
    s_set: Iterable[GroupKey],
    c_pred: float,
    c_pred_adaptive: Optional[float] = None,
) -> Theorem1Bounds:
    """Evaluate the oracle right-hand sides for a given approximation.

    ``c_pred`` is a certified upper bound for the prediction factor at the
    supplied set; ``c_pred_adaptive`` (defaults to ``c_pred``) is used for
    the threshold-set form, whose set is recomputed here as
    {(j,k): ||fbar_{j,k}||_{2,n} >= A0 lambda_{j,k}}.
    """
    f_star = np.asarray(f_star, dtype=float)
    n = f_star.size
    a0 = schedule.a0
    s_set = set(s_set)

    def norm2n(vec) -> float:
        return float(np.linalg.norm(vec) / math.sqrt(n))

    fbar = np.zeros(n)
    norms: Dict[GroupKey, float] = {}
    for key, vec in fbar_blocks.items():
        fbar += vec
        norms[key] = norm2n(vec)
    approx2 = norm2n(fbar - f_star) ** 2

    pen_sc = sum(
        schedule[key] * norms.get(key, 0.0)
        for key in schedule.groups()
        if key not in s_set
    )
    lam_s2 = sum(schedule[key] ** 2 for key in s_set)
    b_s = (a0 + 1.0) ** 2 * c_pred * lam_s2
    delta_s = approx2 + 4.0 * a0 * pen_sc

    s_adaptive = tuple(
        key
        for key in schedule.groups()
        if norms.get(key, 0.0) >= a0 * schedule[key]
    )
    cpa = c_pred if c_pred_adaptive is None else c_pred_adaptive
    c_star = max(8.0 * a0 ** 2, 4.0 * (a0 + 1.0) ** 2 * cpa)
    mixed = sum(
        min(schedule[key] ** 2, schedule[key] * norms.get(key, 0.0))
        for key in schedule.groups()
    )
    bound_adaptive = 2.0 * approx2 + c_star * mixed
    return Theorem1Bounds(
        b_s=b_s,
        delta_s=delta_s,
        bound_err=b_s + delta_s,
        bound_sum=4.0 * b_s + 2.0 * delta_s,
        bound_adaptive=bound_adaptive,
        s_adaptive=s_adaptive,
        c_star_pred=c_star,
    )


def adaptive_rate_bound(
    m_alpha_q1: float,
    m_alpha0_q2: float,
    m_first: float,
    m_base_pow: float,
    bundle: ExponentBundle,
    k_star: int,
    k_max: int,
    n: int,
    sigma: float,
    lambda0: float,
    c_star_pred: float,
    alpha_star: float,
    q0: float,
) -> float:
    """Right-hand side of the three-term adaptive oracle bound.

      n^(-2 alpha/(2 alpha_star + 1)) m_first^2 / ((4^alpha - 1)/2)
      + c_star_pred [ 4 sigma_n^gamma J m_alpha0_q2^(q(1-rho))
                      m_alpha_q1^rho + lambda0^(2-q0) m_base_pow ]

    ``m_first`` is the l1 aggregate of smoothness norms (or the l2 one when
    the weak-correlation condition is invoked); ``m_base_pow`` the
    baseline q0-power sum.  Requires 2^k_max >= n^(1/(2 alpha_star + 1)).
    """
    if 2.0 ** k_max < n ** (1.0 / (2.0 * alpha_star + 1.0)) * (1.0 - 1e-12):
        raise ValueError(
            f"2^k_max={2**k_max} below n^(1/(2 alpha*+1)); bracket violated"
        )
    sigma_n = sigma / math.sqrt(n)
    alpha = bundle.alpha
    first = (
        n ** (-2.0 * alpha / (2.0 * alpha_star + 1.0))
        * m_first ** 2
        / ((4.0 ** alpha - 1.0) / 2.0)
    )
    j_factor = bundle.tail_factor(k_star, k_max)
    middle = (
        4.0
        * sigma_n ** bundle.gamma
        * j_factor
        * m_alpha0_q2 ** (bundle.q * (1.0 - bundle.rho))
        * m_alpha_q1 ** bundle.rho
    )
    base = lambda0 ** (2.0 - q0) * m_base_pow
    return first + c_star_pred * (middle + base)


def tail_complexity_budget(
    n: int,
    sigma: float,
    tail_l2_sq: float,
    off_support_pen: float,
    c0: float,
    nu_plus: float,
    a0: float,
    eps2: float,
    alpha: float,
    alpha_star: float,
    l0: float,
    m_alpha_1: float,
    c_star_2: Optional[float] = None,
    m_alpha_2: Optional[float] = None,
    k_max: Optional[int] = None,
) -> Tuple[float, str]:
    """Effective sample budget s2 controlling the off-set error terms.

    ``tail_l2_sq`` is ||f* - fbar||_{L2}^2 (exact or bounded); when
    ``c_star_2`` and ``m_alpha_2`` are given the alternative tail bound
    c_star_2 * 2^(-2 alpha k_max) m_alpha_2^2 replaces it (requires
    ``k_max``).  ``off_support_pen`` is
    sum_{(j,k) outside S0} lambda_{j,k} ||beta*_{j,k}||_2.  Returns
    (s2, which branch the min selected).
    """
    if not 0.0 < eps2 < 1.0:
        raise ValueError(f"eps2 must lie in (0, 1), got {eps2}")
    if c_star_2 is not None:
        if m_alpha_2 is None or k_max is None:
            raise ValueError("the alternative tail bound needs m_alpha_2 and k_max")
        tail_l2_sq = c_star_2 * 2.0 ** (-2.0 * alpha * k_max) * m_alpha_2 ** 2
    c_tail = (4.0 ** (alpha - 0.5) - 1.0) ** (-0.5)
    first = 2.0 * tail_l2_sq
    second = 4.0 * a0 * (1.0 + c0) * math.sqrt(nu_plus) * off_support_pen
    bern = (
        (c_tail * l0 * m_alpha_1) ** 2
        * abs(math.log(eps2))
        / n ** (2.0 * (alpha + alpha_star) / (2.0 * alpha_star + 1.0))
    )
    markov = tail_l2_sq * max(1.0 / eps2 - 2.0, 0.0)
    third = min(bern, markov)
    branch = "bernstein" if bern <= markov else "markov"
    s2 = (n / sigma ** 2) * (first + second + third)
    return s2, branch


def off_support_penalty(
    truth, schedule: PenaltySchedule, s0_set: Iterable[GroupKey], k_max: int
) -> float:
    """sum over modeled groups outside s0_set of lambda_{j,k}
    ||beta*_{j,k}||_2, the coefficient-level off-set penalty mass."""
    s0_set = set(s0_set)
    total = 0.0
    for (j, k) in schedule.groups():
        if (j, k) in s0_set or k > k_max:
            continue
        total += schedule[(j, k)] * truth.block_norm(j, k)
    return total
