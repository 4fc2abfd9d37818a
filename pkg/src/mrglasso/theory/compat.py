"""Compatibility coefficients, Gram concentration, and design-regularity
event checks.

The compatibility coefficient is a cone-restricted infimum; a sampled
minimizer only ever gives an upper bound, which is the wrong direction for
certifying prediction factors.  :func:`compatibility_bruteforce` therefore
runs a deterministic branch-and-bound over the unit l-inf sphere with
interval/Lipschitz box bounds until the enclosure width reaches the
requested resolution; only its lower end may feed bound verification.
:func:`compatibility_search` is the reporting-only stochastic upper bound.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Dict, Iterable, List, Mapping, Optional, Sequence, Tuple

import numpy as np

from ..basis import (
    FOURIER,
    BasisFamily,
    GroupKey,
    GroupedDesign,
    Nonparametric,
    Parametric,
    ResolutionScheme,
)
from ..penalties import PenaltySchedule

_CONE_SLACK = 1e-12


class CertificationError(RuntimeError):
    """The box budget ran out before the requested resolution was reached."""


@dataclass(frozen=True)
class ConeSpec:
    """Which cone-restricted coefficient to compute.

    ``weights='penalty'`` uses the per-group penalty levels and fitted-value
    norms (the form tied to the prediction factor); ``weights='dimension'``
    uses sqrt(block dimension) weights on coefficient norms (the classical
    groupwise form).  ``norm_side='population'`` replaces empirical norms by
    their design-distribution expectations.
    """

    xi: float
    s_set: Tuple[GroupKey, ...]
    weights: str = "penalty"
    norm_side: str = "empirical"

    def __post_init__(self):
        if self.xi <= 0:
            raise ValueError(f"xi must be positive, got {self.xi}")
        if self.weights not in ("penalty", "dimension"):
            raise ValueError(f"unknown weights {self.weights!r}")
        if self.norm_side not in ("empirical", "population"):
            raise ValueError(f"unknown norm side {self.norm_side!r}")
        if not self.s_set:
            raise ValueError("the restriction set S must be nonempty")


@dataclass(frozen=True)
class CertifiedValue:
    """An enclosure [lo, hi] around a brute-forced extremum."""

    lo: float
    hi: float
    argbest: Optional[np.ndarray]
    n_boxes: int

    @property
    def gap(self) -> float:
        return self.hi - self.lo

    @property
    def value(self) -> float:
        return 0.5 * (self.lo + self.hi)


@dataclass
class _ConeProblem:
    """Whitened data for the box search.

    Group norms are Euclidean in the working coordinates; the numerator
    norm is ||F c||_2 with F a square root of the (whitened) quadratic.
    """

    f_mat: np.ndarray            # (r, D) factor, numerator = ||F c||
    op_norm: float               # ||F||_2
    slices: List[Tuple[int, int]]
    w: np.ndarray                # per-group weights
    s_mask: np.ndarray           # per-group bool, True on S
    xi: float
    norm_ws: float               # sqrt(sum of schedule levels^2 over S)

    @property
    def dim(self) -> int:
        return self.f_mat.shape[1]

    def analytic_floor(self) -> float:
        """Certified global lower bound on the cone ratio.

        By Cauchy-Schwarz the S-weighted denominator is at most
        ||w_S|| ||c_S||, and the numerator dominates the smallest positive
        eigenvalue of A = F'F times the squared distance to null(A); the
        distance-to-null vs ||c_S|| ratio is an S-coordinate Schur
        complement eigenvalue.  Exact (floor = 1) for orthonormal designs,
        0 when the null space meets the S coordinates.
        """
        a = self.f_mat.T @ self.f_mat
        vals, vecs = np.linalg.eigh(0.5 * (a + a.T))
        top = float(vals.max()) if vals.size else 0.0
        if top <= 0.0:
            return 0.0
        tol = 1e-10 * top
        pos = vals > tol
        if not pos.any():
            return 0.0
        lam_plus = float(vals[pos].min())
        v0 = vecs[:, ~pos]
        m = np.eye(self.dim) - v0 @ v0.T
        s_idx = np.concatenate(
            [np.arange(a_, b_) for g, (a_, b_) in enumerate(self.slices) if self.s_mask[g]]
        )
        r_idx = np.array(
            [i for i in range(self.dim) if i not in set(s_idx.tolist())], dtype=int
        )
        m_ss = m[np.ix_(s_idx, s_idx)]
        if r_idx.size:
            m_sr = m[np.ix_(s_idx, r_idx)]
            m_rr = m[np.ix_(r_idx, r_idx)]
            schur = m_ss - m_sr @ np.linalg.pinv(m_rr) @ m_sr.T
        else:
            schur = m_ss
        lam_schur = float(np.linalg.eigvalsh(0.5 * (schur + schur.T)).min())
        return math.sqrt(max(lam_plus * max(lam_schur, 0.0), 0.0))

    def group_norms(self, c: np.ndarray) -> np.ndarray:
        return np.array([np.linalg.norm(c[a:b]) for a, b in self.slices])

    def feasible(self, c: np.ndarray) -> bool:
        norms = self.group_norms(c)
        lhs = float(np.sum(self.w[~self.s_mask] * norms[~self.s_mask]))
        rhs = float(np.sum(self.w[self.s_mask] * norms[self.s_mask]))
        return lhs <= self.xi * rhs * (1.0 + _CONE_SLACK) + 1e-15

    def kappa_value(self, c: np.ndarray) -> float:
        norms = self.group_norms(c)
        den = float(np.sum(self.w[self.s_mask] * norms[self.s_mask]))
        if den <= 0.0:
            return math.inf
        return self.norm_ws * float(np.linalg.norm(self.f_mat @ c)) / den

    def cpred_value(self, c: np.ndarray) -> float:
        norms = self.group_norms(c)
        h = float(
            np.sum(self.w[self.s_mask] * norms[self.s_mask])
            - np.sum(self.w[~self.s_mask] * norms[~self.s_mask]) / self.xi
        )
        if h <= 0.0:
            return 0.0
        q = float(np.linalg.norm(self.f_mat @ c)) ** 2
        if q <= 0.0:
            return math.inf
        return h ** 2 / (self.norm_ws ** 2 * q)


def _factorize(a: np.ndarray) -> Tuple[np.ndarray, float]:
    """Symmetric square root factor F with a = F'F, plus ||F||_2."""
    a = 0.5 * (a + a.T)
    vals, vecs = np.linalg.eigh(a)
    vals = np.clip(vals, 0.0, None)
    f = (vecs * np.sqrt(vals)).T
    return f, math.sqrt(float(vals.max())) if vals.size else 0.0


def _group_indicator(slices: List[Tuple[int, int]], dim: int) -> np.ndarray:
    ind = np.zeros((len(slices), dim))
    for g, (a, b) in enumerate(slices):
        ind[g, a:b] = 1.0
    return ind


def _build_problem(
    design: GroupedDesign,
    schedule: PenaltySchedule,
    cone: ConeSpec,
    pop_gram: Optional[Mapping] = None,
) -> _ConeProblem:
    scheme = design.scheme
    keys = design.groups()
    s_mask = np.array([key in set(cone.s_set) for key in keys])
    if cone.weights == "penalty":
        w = np.array([schedule[key] for key in keys])
    else:
        w = np.array([math.sqrt(scheme.block_size(*key)) for key in keys])
    norm_ws = math.sqrt(float(np.sum(w[s_mask] ** 2)))

    if cone.norm_side == "empirical" and cone.weights == "penalty":
        # fitted-value parametrization: per-group orthonormal columns makes
        # the group norms Euclidean and the numerator ||Q c||_2
        qs = [design.ortho(key) for key in keys]
        slices, start = [], 0
        for q in qs:
            slices.append((start, start + q.shape[1]))
            start += q.shape[1]
        qcat = np.hstack(qs) if qs else np.zeros((design.n, 0))
        f_mat, op = _factorize(qcat.T @ qcat)
        return _ConeProblem(f_mat, op, slices, w, s_mask, cone.xi, norm_ws)

    # coefficient parametrization (classical form and population side)
    dims = [scheme.block_size(*key) for key in keys]
    slices, start = [], 0
    for d in dims:
        slices.append((start, start + d))
        start += d
    total = start
    if cone.norm_side == "empirical":
        u = np.hstack([design.block(key) for key in keys])
        a = u.T @ u / design.n
        whiten = None
    else:
        if pop_gram is None:
            raise ValueError("population norms need pop_gram")
        a = np.asarray(pop_gram["full"], dtype=float)
        whiten = [np.asarray(pop_gram["groups"][key], dtype=float) for key in keys]
    if cone.weights == "penalty" and cone.norm_side == "population":
        # group norms are population norms; whiten each block so they are
        # Euclidean in the working coordinates
        t_blocks = []
        for v in whiten:
            vals, vecs = np.linalg.eigh(0.5 * (v + v.T))
            vals = np.clip(vals, 1e-15, None)
            t_blocks.append(vecs @ np.diag(1.0 / np.sqrt(vals)) @ vecs.T)
        t_full = np.zeros((total, total))
        for (aa, bb), t in zip(slices, t_blocks):
            t_full[aa:bb, aa:bb] = t
        a = t_full.T @ a @ t_full
    f_mat, op = _factorize(a)
    return _ConeProblem(f_mat, op, slices, w, s_mask, cone.xi, norm_ws)


def _box_search(
    prob: _ConeProblem,
    mode: str,
    resolution: float,
    max_boxes: int,
    seed_point: Optional[np.ndarray] = None,
) -> CertifiedValue:
    """Best-first branch and bound over faces of the unit l-inf sphere."""
    dim = prob.dim
    ind = _group_indicator(prob.slices, dim)
    w_s = np.where(prob.s_mask, prob.w, 0.0)
    w_sc = np.where(prob.s_mask, 0.0, prob.w)
    f_abs = np.abs(prob.f_mat)

    los = np.full((dim, dim), -1.0)
    his = np.ones((dim, dim))
    for i in range(dim):
        los[i, i] = 1.0

    def bounds(lo: np.ndarray, hi: np.ndarray):
        """Vectorized box bounds; lo/hi have shape (N, dim)."""
        minabs = np.maximum(0.0, np.maximum(lo, -hi))
        maxabs = np.maximum(np.abs(lo), np.abs(hi))
        nmin = np.sqrt(minabs ** 2 @ ind.T)
        nmax = np.sqrt(maxabs ** 2 @ ind.T)
        center = 0.5 * (lo + hi)
        rad = 0.5 * (hi - lo)
        # row-interval bounds on ||F c||: F_r c lies in [m_r - rho_r, m_r + rho_r]
        mrow = center @ prob.f_mat.T
        rho = rad @ f_abs.T
        qmin = np.sqrt(np.sum(np.maximum(np.abs(mrow) - rho, 0.0) ** 2, axis=1))
        qmax = np.sqrt(np.sum((np.abs(mrow) + rho) ** 2, axis=1))
        den_min = nmin @ w_s
        den_max = nmax @ w_s
        cone_lb = nmin @ w_sc - prob.xi * den_max
        return nmin, nmax, qmin, qmax, den_min, den_max, cone_lb, center

    best_val = math.inf if mode == "kappa" else 0.0
    best_arg = None
    if seed_point is not None and prob.feasible(seed_point):
        best_val = (
            prob.kappa_value(seed_point)
            if mode == "kappa"
            else prob.cpred_value(seed_point)
        )
        best_arg = np.asarray(seed_point, dtype=float).copy()
    floor = prob.analytic_floor()
    ceiling = 1.0 / floor ** 2 if floor > 0 else math.inf
    if mode == "kappa" and math.isfinite(best_val) and best_val - floor <= resolution:
        return CertifiedValue(
            lo=min(floor, best_val), hi=best_val, argbest=best_arg, n_boxes=0
        )
    if mode == "cpred" and ceiling - best_val <= resolution:
        return CertifiedValue(
            lo=best_val, hi=max(ceiling, best_val), argbest=best_arg, n_boxes=0
        )
    n_processed = 0
    live_lo, live_hi = los, his

    while True:
        nmin, nmax, qmin, qmax, den_min, den_max, cone_lb, centers = bounds(
            live_lo, live_hi
        )
        n_processed += live_lo.shape[0]
        feasible_box = cone_lb <= 1e-12
        if mode == "kappa":
            with np.errstate(divide="ignore", invalid="ignore"):
                box_lb = np.where(
                    feasible_box & (den_max > 0),
                    prob.norm_ws * qmin / np.where(den_max > 0, den_max, 1.0),
                    math.inf,
                )
        else:
            h_max = nmax @ w_s - (nmin @ w_sc) / prob.xi
            with np.errstate(divide="ignore", invalid="ignore"):
                box_ub = np.where(
                    feasible_box & (h_max > 0),
                    np.where(
                        qmin > 0,
                        np.maximum(h_max, 0.0) ** 2 / (prob.norm_ws ** 2 * qmin ** 2),
                        math.inf,
                    ),
                    0.0,
                )
        # exact evaluations at feasible centers tighten the incumbent
        for idx in range(centers.shape[0]):
            c = centers[idx]
            if not feasible_box[idx]:
                continue
            if not prob.feasible(c):
                continue
            if mode == "kappa":
                val = prob.kappa_value(c)
                if val < best_val:
                    best_val, best_arg = val, c.copy()
            else:
                val = prob.cpred_value(c)
                if val > best_val:
                    best_val, best_arg = val, c.copy()

        if mode == "kappa":
            box_lb = np.maximum(box_lb, floor)
            keep = box_lb < best_val - 1e-15
            global_bound = float(box_lb[keep].min()) if keep.any() else best_val
            gap = best_val - min(global_bound, best_val)
        else:
            box_ub = np.minimum(box_ub, ceiling)
            keep = box_ub > best_val + 1e-15
            global_bound = float(box_ub[keep].max()) if keep.any() else best_val
            gap = max(global_bound, best_val) - best_val
        if not keep.any() or gap <= resolution:
            lo_val = min(global_bound, best_val) if mode == "kappa" else best_val
            hi_val = best_val if mode == "kappa" else max(global_bound, best_val)
            return CertifiedValue(
                lo=min(max(lo_val, 0.0), hi_val),
                hi=hi_val,
                argbest=best_arg,
                n_boxes=n_processed,
            )
        if n_processed > max_boxes:
            raise CertificationError(
                f"no certificate at resolution {resolution} within "
                f"{max_boxes} boxes (best enclosure gap {gap:.3g}); the cone "
                "search space is too large"
            )

        lo_k, hi_k = live_lo[keep], live_hi[keep]
        score = box_lb[keep] if mode == "kappa" else -box_ub[keep]
        order = np.argsort(score)
        batch = min(len(order), 512)
        split_idx, rest_idx = order[:batch], order[batch:]
        sel_lo, sel_hi = lo_k[split_idx], hi_k[split_idx]
        axes = np.argmax(sel_hi - sel_lo, axis=1)
        rows = np.arange(batch)
        mids = 0.5 * (sel_lo[rows, axes] + sel_hi[rows, axes])
        lo_left, hi_left = sel_lo.copy(), sel_hi.copy()
        lo_right, hi_right = sel_lo.copy(), sel_hi.copy()
        hi_left[rows, axes] = mids
        lo_right[rows, axes] = mids
        live_lo = np.vstack([lo_k[rest_idx], lo_left, lo_right])
        live_hi = np.vstack([hi_k[rest_idx], hi_left, hi_right])


def _restore_feasibility(prob: _ConeProblem, c: np.ndarray) -> Optional[np.ndarray]:
    """Scale the S part up minimally so the cone constraint holds."""
    if prob.feasible(c):
        return c
    norms = prob.group_norms(c)
    lhs = float(np.sum(prob.w[~prob.s_mask] * norms[~prob.s_mask]))
    rhs = float(np.sum(prob.w[prob.s_mask] * norms[prob.s_mask]))
    if rhs <= 0:
        return None
    c = c.copy()
    factor = max(lhs / (prob.xi * rhs), 1.0)
    for g, (a, b) in enumerate(prob.slices):
        if prob.s_mask[g]:
            c[a:b] *= factor
    return c if prob.feasible(c) else None


def _subgradient_descent(
    prob: _ConeProblem, c0: np.ndarray, iterations: int
) -> np.ndarray:
    """Cheap normalized subgradient descent on the cone ratio; used instead
    of a simplex search when the dimension is large."""
    c = c0 / max(np.linalg.norm(c0), 1e-300)
    a = prob.f_mat.T @ prob.f_mat
    step0 = 0.5
    best_c, best_v = c.copy(), prob.kappa_value(c)
    for it in range(iterations):
        norms = prob.group_norms(c)
        den = float(np.sum(prob.w[prob.s_mask] * norms[prob.s_mask]))
        num2 = float(c @ (a @ c))
        if den <= 1e-14 or num2 <= 0:
            break
        grad = (a @ c) / num2
        for g, (lo, hi) in enumerate(prob.slices):
            if prob.s_mask[g] and norms[g] > 1e-14:
                grad[lo:hi] -= prob.w[g] * c[lo:hi] / (norms[g] * den)
        gn = np.linalg.norm(grad)
        if gn <= 1e-14:
            break
        c = c - step0 / (1.0 + 0.05 * it) / gn * grad
        c /= max(np.linalg.norm(c), 1e-300)
        c_f = _restore_feasibility(prob, c)
        if c_f is not None:
            val = prob.kappa_value(c_f)
            if val < best_v:
                best_v, best_c = val, c_f.copy()
    return best_c


def _local_search(
    prob: _ConeProblem, mode: str, restarts: int, iterations: int, seed: int
) -> Tuple[float, Optional[np.ndarray]]:
    """Local optimization from random cone starts; returns the incumbent
    (an upper bound for 'kappa', a lower bound for 'cpred')."""
    from scipy.optimize import minimize

    rng = np.random.default_rng(seed)
    if prob.dim > 12 and mode == "kappa":
        best = math.inf
        best_arg = None
        for _ in range(restarts):
            c = _subgradient_descent(prob, rng.normal(size=prob.dim), iterations)
            c = _restore_feasibility(prob, c)
            if c is None:
                continue
            val = prob.kappa_value(c)
            if val < best:
                best, best_arg = val, c / max(np.abs(c).max(), 1e-300)
        return best, best_arg
    scale = prob.norm_ws * (prob.op_norm + 1.0) * 10.0 + 1.0
    sign = 1.0 if mode == "kappa" else -1.0

    def penalized(c: np.ndarray) -> float:
        norms = prob.group_norms(c)
        den = float(np.sum(prob.w[prob.s_mask] * norms[prob.s_mask]))
        if den <= 1e-14:
            return scale
        violation = (
            float(np.sum(prob.w[~prob.s_mask] * norms[~prob.s_mask]))
            - prob.xi * den
        )
        value = prob.kappa_value(c) if mode == "kappa" else prob.cpred_value(c)
        if not math.isfinite(value):
            return scale
        return sign * value + scale * max(0.0, violation / den) ** 2

    best = math.inf if mode == "kappa" else 0.0
    best_arg = None
    for _ in range(restarts):
        c0 = rng.normal(size=prob.dim)
        norms = prob.group_norms(c0)
        lhs = float(np.sum(prob.w[~prob.s_mask] * norms[~prob.s_mask]))
        rhs = float(np.sum(prob.w[prob.s_mask] * norms[prob.s_mask]))
        if lhs > prob.xi * rhs and lhs > 0:
            damp = 0.5 * prob.xi * rhs / lhs
            for g, (a, b) in enumerate(prob.slices):
                if not prob.s_mask[g]:
                    c0[a:b] *= damp
        res = minimize(
            penalized,
            c0,
            method="Nelder-Mead",
            options={"maxiter": iterations * prob.dim, "xatol": 1e-10, "fatol": 1e-12},
        )
        c = _restore_feasibility(prob, res.x)
        if c is None:
            continue
        value = prob.kappa_value(c) if mode == "kappa" else prob.cpred_value(c)
        better = value < best if mode == "kappa" else value > best
        if better and math.isfinite(value):
            best, best_arg = value, c / max(np.abs(c).max(), 1e-300)
    return best, best_arg


def compatibility_bruteforce(
    design: GroupedDesign,
    schedule: PenaltySchedule,
    cone: ConeSpec,
    resolution: float = 1e-2,
    max_boxes: int = 3_000_000,
    pop_gram: Optional[Mapping] = None,
    search_restarts: int = 24,
) -> CertifiedValue:
    """Certified enclosure of the compatibility coefficient.

    The search space must stay small (total working dimension <= 12);
    larger problems exhaust the box budget and raise
    :class:`CertificationError`.
    """
    prob = _build_problem(design, schedule, cone, pop_gram)
    if prob.dim > 12:
        raise CertificationError(
            f"search dimension {prob.dim} too large for grid certification"
        )
    _, seed_point = _local_search(
        prob, "kappa", restarts=search_restarts, iterations=300, seed=0
    )
    return _box_search(prob, "kappa", resolution, max_boxes, seed_point=seed_point)


def prediction_factor_bruteforce(
    design: GroupedDesign,
    schedule: PenaltySchedule,
    cone: ConeSpec,
    resolution: float = 1e-2,
    max_boxes: int = 3_000_000,
    pop_gram: Optional[Mapping] = None,
    search_restarts: int = 24,
) -> CertifiedValue:
    """Certified enclosure of the prediction factor (a supremum; the upper
    end is the certificate)."""
    prob = _build_problem(design, schedule, cone, pop_gram)
    if prob.dim > 12:
        raise CertificationError(
            f"search dimension {prob.dim} too large for grid certification"
        )
    _, seed_point = _local_search(
        prob, "cpred", restarts=search_restarts, iterations=300, seed=0
    )
    return _box_search(prob, "cpred", resolution, max_boxes, seed_point=seed_point)


def compatibility_search(
    design: GroupedDesign,
    schedule: PenaltySchedule,
    cone: ConeSpec,
    restarts: int = 64,
    iterations: int = 400,
    seed: int = 0,
    pop_gram: Optional[Mapping] = None,
) -> float:
    """Stochastic upper bound on the compatibility coefficient.

    Local minimization from random cone starts; the returned value is the
    infimum over a sampled subset and must never be used as a lower-bound
    certificate.
    """
    prob = _build_problem(design, schedule, cone, pop_gram)
    best, _ = _local_search(prob, "kappa", restarts, iterations, seed)
    return best


# ---------------------------------------------------------------------------
# Gram concentration
# ---------------------------------------------------------------------------

def gram_concentration(
    design: GroupedDesign,
    population_gram: Optional[Mapping[GroupKey, np.ndarray]] = None,
) -> Tuple[float, Dict[GroupKey, float]]:
    """Per-group spectral deviation of the normalized empirical Gram.

    Returns (max over groups, per-group map) of
    ||V^(-1/2) (U'U/n) V^(-1/2) - I||_2, with V defaulting to the identity
    (exact for the Fourier family under uniform covariates).
    """
    per_group: Dict[GroupKey, float] = {}
    for key in design.groups():
        g = design.gram(key)
        if population_gram is not None and key in population_gram:
            v = np.asarray(population_gram[key], dtype=float)
            if v.shape != g.shape:
                raise ValueError(f"population Gram shape mismatch for {key}")
            vals, vecs = np.linalg.eigh(0.5 * (v + v.T))
            vals = np.clip(vals, 1e-15, None)
            t = vecs @ np.diag(1.0 / np.sqrt(vals)) @ vecs.T
            g = t @ g @ t
        dev = np.linalg.eigvalsh(g - np.eye(g.shape[0]))
        per_group[key] = float(np.max(np.abs(dev)))
    max_dev = max(per_group.values()) if per_group else 0.0
    return max_dev, per_group


def gram_concentration_bound(
    dims: Sequence[int], n: int, c0: float, l0: float, nu_minus: float = 1.0
) -> float:
    """Union bound sum_g 2 d_g exp(-n c0^2 / (2 d_g (L0^2/nu_-)(1 + c0/3)))
    on the probability that some group deviation exceeds c0."""
    if c0 <= 0:
        raise ValueError("c0 must be positive")
    total = 0.0
    for d in dims:
        expo = -n * c0 ** 2 / (2.0 * d * (l0 ** 2 / nu_minus) * (1.0 + c0 / 3.0))
        total += 2.0 * d * math.exp(expo)
    return total


# ---------------------------------------------------------------------------
# Population Gram (Fourier family, iid uniform covariates)
# ---------------------------------------------------------------------------

def population_gram(
    scheme: ResolutionScheme, family: BasisFamily = FOURIER
) -> Dict[str, object]:
    """Exact population Gram under iid uniform covariates.

    Within a component the Fourier blocks are orthonormal; across
    independent components only mean-nonzero functions correlate (the
    constant at the baseline level, and monomials of parametric blocks).
    Returns {"full": D x D matrix, "groups": per-group diagonal blocks}.
    """
    if family.name not in ("fourier", "haar"):
        raise ValueError("population Gram available for fourier/haar only")
    labels = scheme.column_labels()
    descriptors = []
    for (j, k, ell) in labels:
        kind = scheme.kind(j)
        if isinstance(kind, Parametric):
            descriptors.append(("monomial", j, ell))
        else:
            m = scheme.block_offset(j, k) + ell
            if m == 1:
                descriptors.append(("const", j, 0))
            else:
                descriptors.append(("osc", j, m))
    d_total = len(labels)
    full = np.zeros((d_total, d_total))

    def mean(desc) -> float:
        tag, _, a = desc
        if tag == "const":
            return 1.0
        if tag == "monomial":
            return 1.0 / (a + 1.0)
        return 0.0

    for r in range(d_total):
        tr, jr, ar = descriptors[r]
        for c in range(r, d_total):
            tc, jc, ac = descriptors[c]
            if jr != jc:
                val = mean(descriptors[r]) * mean(descriptors[c])
            elif tr == "monomial" and tc == "monomial":
                val = 1.0 / (ar + ac + 1.0)
            elif tr == tc and ar == ac:
                val = 1.0
            else:
                val = 0.0  # same component, orthonormal family
            full[r, c] = full[c, r] = val
    groups = {}
    offset = 0
    for key in scheme.groups():
        d = scheme.block_size(*key)
        groups[key] = full[offset : offset + d, offset : offset + d].copy()
        offset += d
    return {"full": full, "groups": groups, "labels": labels}


# ---------------------------------------------------------------------------
# Norm-equivalence events (conservative verification)
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class NormEquivalenceReport:
    """Empirical-vs-population norm equivalence on one realized design.

    ``global_ok`` certifies |empirical/population norm ratio - 1| <= c0
    uniformly over all coefficient directions (a stronger statement than the
    cone-restricted one, so True implies the event).  ``group_ok`` is the
    per-group squared-norm version.
    """

    global_ok: bool
    group_ok: bool
    global_extremes: Tuple[float, float]
    worst_group_extremes: Tuple[float, float]

    @property
    def all_ok(self) -> bool:
        return self.global_ok and self.group_ok


def norm_equivalence_events(
    design: GroupedDesign,
    pop: Mapping[str, object],
    c0: float,
    null_tol: float = 1e-10,
) -> NormEquivalenceReport:
    """Verify the norm-equivalence inequalities on a realized design.

    Uses generalized-eigenvalue extremes of the empirical Gram against the
    population one on the complement of the population null space (shared
    duplicated directions, e.g. the constant present in every component).
    """
    keys = design.groups()
    u = np.hstack([design.block(key) for key in keys])
    g_emp = u.T @ u / design.n
    g_pop = np.asarray(pop["full"], dtype=float)
    vals, vecs = np.linalg.eigh(0.5 * (g_pop + g_pop.T))
    mask = vals > null_tol * vals.max()
    t = vecs[:, mask] / np.sqrt(vals[mask])
    reduced = t.T @ g_emp @ t
    ext = np.linalg.eigvalsh(0.5 * (reduced + reduced.T))
    glo, ghi = float(ext.min()), float(ext.max())
    global_ok = (1.0 - c0) ** 2 <= glo and ghi <= (1.0 + c0) ** 2

    worst_lo, worst_hi = 1.0, 1.0
    for key in keys:
        g = design.gram(key)
        v = np.asarray(pop["groups"][key], dtype=float)
        vv, vw = np.linalg.eigh(0.5 * (v + v.T))
        vv = np.clip(vv, 1e-15, None)
        tt = vw @ np.diag(1.0 / np.sqrt(vv)) @ vw.T
        ext = np.linalg.eigvalsh(tt @ g @ tt)
        worst_lo = min(worst_lo, float(ext.min()))
        worst_hi = max(worst_hi, float(ext.max()))
    group_ok = (1.0 - c0) <= worst_lo and worst_hi <= (1.0 + c0)
    return NormEquivalenceReport(
        global_ok=global_ok,
        group_ok=group_ok,
        global_extremes=(glo, ghi),
        worst_group_extremes=(worst_lo, worst_hi),
    )
