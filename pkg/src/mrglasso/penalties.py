"""Per-group penalty levels and the noise-majorization event.

For Gaussian noise with known scale sigma the level of group (j, k) is

    lambda_{j,k} = sigma (sqrt(d^*_j / n) + sqrt(2 log(p/eps) / n))   parametric
    lambda_{j,k} = sigma (sqrt(2^k / n)  + sqrt(2 log(p/eps) / n))   nonparametric

with eps in (0, 1].  The event that every group-projected residual norm
stays below its level (checked by :func:`noise_majorization_check`) is the
gateway assumption of all oracle-inequality diagnostics.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass
from typing import Dict, Tuple

import numpy as np

from .basis import GroupKey, GroupedDesign, Parametric, ResolutionScheme


@dataclass(frozen=True)
class PenaltySchedule:
    """Penalty levels per group plus the constants they were built from."""

    lam: Dict[GroupKey, float]
    lambda0: float
    sigma: float
    eps: float
    a0: float
    n: int
    p: int

    def __getitem__(self, key: GroupKey) -> float:
        return self.lam[key]

    def groups(self):
        return list(self.lam.keys())

    @property
    def two_log(self) -> float:
        """2 log(p/eps)."""
        return 2.0 * math.log(self.p / self.eps)

    def lam_vector(self, keys=None) -> np.ndarray:
        keys = list(self.lam.keys()) if keys is None else list(keys)
        return np.array([self.lam[k] for k in keys])

    def to_json(self) -> str:
        payload = {
            "lambda": {f"{j}:{k}": v for (j, k), v in self.lam.items()},
            "lambda0": self.lambda0,
            "sigma": self.sigma,
            "eps": self.eps,
            "a0": self.a0,
            "n": self.n,
            "p": self.p,
        }
        return json.dumps(payload, indent=2, sort_keys=True)

    @staticmethod
    def from_json(text: str) -> "PenaltySchedule":
        payload = json.loads(text)
        lam = {
            tuple(int(t) for t in key.split(":")): float(v)
            for key, v in payload["lambda"].items()
        }
        return PenaltySchedule(
            lam=lam,
            lambda0=float(payload["lambda0"]),
            sigma=float(payload["sigma"]),
            eps=float(payload["eps"]),
            a0=float(payload["a0"]),
            n=int(payload["n"]),
            p=int(payload["p"]),
        )


def penalty_levels(
    scheme: ResolutionScheme,
    n: int,
    sigma: float,
    eps: float = 1.0,
    a0: float = 2.0,
) -> PenaltySchedule:
    """Evaluate the penalty formula for every group of the scheme."""
    if sigma <= 0:
        raise ValueError(f"sigma must be positive, got {sigma}")
    if not 0.0 < eps <= 1.0:
        raise ValueError(f"eps must lie in (0, 1], got {eps}")
    if a0 <= 1.0:
        raise ValueError(f"A0 must exceed 1, got {a0}")
    p = scheme.p
    two_log = 2.0 * math.log(p / eps)
    if two_log < 1.0:
        raise ValueError(f"2 log(p/eps) = {two_log:.4f} < 1; not supported")
    tail = math.sqrt(two_log / n)
    lam: Dict[GroupKey, float] = {}
    for (j, k) in scheme.groups():
        if isinstance(scheme.kind(j), Parametric):
            width = math.sqrt(scheme.kind(j).d_star / n)
        else:
            width = math.sqrt(2.0 ** k / n)
        lam[(j, k)] = sigma * (width + tail)
    lambda0 = sigma * tail
    return PenaltySchedule(
        lam=lam, lambda0=lambda0, sigma=sigma, eps=eps, a0=a0, n=n, p=p
    )


def noise_majorization_check(
    design: GroupedDesign,
    residual: np.ndarray,
    schedule: PenaltySchedule,
) -> Tuple[bool, float, GroupKey]:
    """Does every group satisfy ||P_{j,k} residual||_{2,n} <= lambda_{j,k}?

    Returns (holds, worst ratio, group attaining it).  A zero level with a
    nonzero projected residual reports +inf.
    """
    residual = np.asarray(residual, dtype=float)
    if residual.shape != (design.n,):
        raise ValueError(
            f"residual has shape {residual.shape}, expected ({design.n},)"
        )
    worst = -1.0
    argmax = None
    for key in design.groups():
        norm = design.project_norm2n(key, residual)
        lam = schedule[key]
        if lam <= 0.0:
            ratio = math.inf if norm > 0.0 else 0.0
        else:
            ratio = norm / lam
        if ratio > worst:
            worst = ratio
            argmax = key
    return worst <= 1.0, worst, argmax


def majorization_failure_bound(p: int, eps: float) -> float:
    """Upper bound eps / sqrt(2 log(p/eps)) on the failure probability of
    the noise-majorization event under Gaussian noise."""
    return eps / math.sqrt(2.0 * math.log(p / eps))


def complexity_units(
    schedule: PenaltySchedule,
    scheme: ResolutionScheme,
    key: GroupKey,
    fbar_norm2n: float,
) -> float:
    """Per-group complexity lambda^2 ^ (lambda ||fbar||) in units of
    sigma^2/n.

    Equals (2^(delta_k/2) d^(1/2) + sqrt(2 log(p/eps)))^2 *
    min(1, ||fbar|| / lambda) with delta_k = 1{k > k_star}; tested as an
    algebraic identity against the left-hand side.
    """
    j, k = key
    d = scheme.block_size(j, k)
    delta = 1.0 if k > scheme.k_star else 0.0
    base = 2.0 ** (delta / 2.0) * math.sqrt(d) + math.sqrt(schedule.two_log)
    lam = schedule[key]
    frac = 1.0 if lam == 0.0 else min(1.0, fbar_norm2n / lam)
    return base ** 2 * frac


def estimate_sigma(y, design, eps: float = 1.0, a0: float = 2.0) -> float:
    """Pilot estimate of the noise scale (not part of the canonical method,
    which assumes sigma known): fit once with sigma = 1, take the residual
    standard deviation, refit once.
    """
    from .solver import FitConfig, fit

    sigma = 1.0
    for _ in range(2):
        schedule = penalty_levels(design.scheme, design.n, sigma, eps=eps, a0=a0)
        result = fit(y, design, schedule, FitConfig())
        resid = np.asarray(y) - result.fitted
        sigma = float(np.std(resid, ddof=0))
        if sigma <= 0:
            return 0.0
    return sigma
