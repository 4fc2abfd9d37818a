"""Multi-resolution block basis on [0, 1] and grouped design assembly.

Each additive component is expanded in blocks of basis functions indexed by a
resolution level k.  Nonparametric components get blocks of size
2^((k-1) v k_star) for k = k_star..k_max, so that levels k_star..k hold 2^k
functions in total.  Parametric components occupy a single block of d_star
user-chosen functions at the baseline level.

The default family is the real Fourier system on [0, 1], enumerated as
{1, sqrt(2) cos 2 pi x, sqrt(2) sin 2 pi x, sqrt(2) cos 4 pi x, ...} so that
blocks partition consecutive frequencies.  A Haar family is provided to
exercise basis-agnostic code paths.  Parametric blocks use monomials
x, x^2, ..., x^d_star (a linear effect is d_star = 1).
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field
from typing import Dict, List, Sequence, Tuple, Union

import numpy as np

GroupKey = Tuple[int, int]  # (component j, level k), j is 1-based

SQRT2 = math.sqrt(2.0)

#: frequencies at multiples of this anchor are evaluated with np.cos/np.sin
#: directly; the ones in between come from the exact angle-addition recurrence.
_ANCHOR = 16


class DesignError(ValueError):
    """Invalid covariates or scheme/design mismatch."""


@dataclass(frozen=True)
class Parametric:
    """A parametric (linear or group) effect with d_star basis functions."""

    d_star: int

    def __post_init__(self):
        if self.d_star < 1:
            raise ValueError(f"d_star must be a positive integer, got {self.d_star}")


@dataclass(frozen=True)
class Nonparametric:
    """A smooth component expanded over all resolution levels."""


ComponentKind = Union[Parametric, Nonparametric]

NONPARAMETRIC = Nonparametric()


@dataclass(frozen=True)
class ResolutionScheme:
    """Index set of groups (j, k) with their block dimensions.

    k_star is the baseline level (parametric components live only there),
    k_max the top modeled level.  For a nonparametric component the block at
    level k has 2^((k-1) v k_star) functions, hence 2^k functions up to
    level k.
    """

    k_star: int
    k_max: int
    kinds: Tuple[ComponentKind, ...]

    def __post_init__(self):
        if self.k_star < 0:
            raise ValueError(f"k_star must be >= 0, got {self.k_star}")
        if self.k_max < self.k_star:
            raise ValueError(
                f"k_max={self.k_max} below k_star={self.k_star}; no levels left"
            )
        if not self.kinds:
            raise ValueError("scheme needs at least one component")

    @property
    def p(self) -> int:
        return len(self.kinds)

    def kind(self, j: int) -> ComponentKind:
        self._check_component(j)
        return self.kinds[j - 1]

    def levels(self, j: int) -> range:
        """Resolution levels occupied by component j."""
        if isinstance(self.kind(j), Parametric):
            return range(self.k_star, self.k_star + 1)
        return range(self.k_star, self.k_max + 1)

    def groups(self) -> List[GroupKey]:
        """The ordered group index set, ascending in (j, k)."""
        return [(j, k) for j in range(1, self.p + 1) for k in self.levels(j)]

    def block_size(self, j: int, k: int) -> int:
        """Number of basis functions in group (j, k)."""
        kind = self.kind(j)
        if isinstance(kind, Parametric):
            if k != self.k_star:
                raise KeyError(f"parametric component {j} has no level {k}")
            return kind.d_star
        if not self.k_star <= k <= self.k_max:
            raise KeyError(f"level {k} outside [{self.k_star}, {self.k_max}]")
        return 2 ** max(k - 1, self.k_star)

    def block_offset(self, j: int, k: int) -> int:
        """Count of component-j basis functions below level k.

        For nonparametric components the cumulative count through level k is
        2^k, so the offset is 0 at the baseline and 2^(k-1) above it.
        """
        kind = self.kind(j)
        if isinstance(kind, Parametric):
            if k != self.k_star:
                raise KeyError(f"parametric component {j} has no level {k}")
            return 0
        if not self.k_star <= k <= self.k_max:
            raise KeyError(f"level {k} outside [{self.k_star}, {self.k_max}]")
        return 0 if k == self.k_star else 2 ** (k - 1)

    @property
    def total_dim(self) -> int:
        """d_star: the stacked coefficient dimension over all groups."""
        return sum(self.block_size(j, k) for (j, k) in self.groups())

    def column_labels(self) -> List[Tuple[int, int, int]]:
        """(j, k, ell) triplets in stacked column order, all 1-based in ell."""
        out = []
        for (j, k) in self.groups():
            out.extend((j, k, ell) for ell in range(1, self.block_size(j, k) + 1))
        return out

    def _check_component(self, j: int) -> None:
        if not 1 <= j <= self.p:
            raise KeyError(f"component {j} outside 1..{self.p}")


def make_scheme(
    p: int,
    kinds: Sequence[ComponentKind] | None = None,
    *,
    n: int,
    eps: float = 1.0,
) -> ResolutionScheme:
    """Choose baseline and top levels from (p, n, eps).

    k_star is the unique integer with 2^(k_star - 1) < 2 log(p/eps)
    <= 2^k_star, and k_max the largest integer with 2^k_max < n.  Rejects
    inputs that force k_max < k_star, reporting the minimal feasible n.
    """
    if p < 1:
        raise ValueError(f"p must be >= 1, got {p}")
    if n < 2:
        raise ValueError(f"n must be >= 2, got {n}")
    if not 0.0 < eps <= 1.0:
        raise ValueError(f"eps must lie in (0, 1], got {eps}")
    two_log = 2.0 * math.log(p / eps)
    if two_log < 1.0:
        raise ValueError(
            f"2 log(p/eps) = {two_log:.4f} < 1; increase p or decrease eps"
        )
    k_star = max(0, math.ceil(math.log2(two_log)))
    while 2.0 ** k_star < two_log:
        k_star += 1
    while k_star > 0 and 2.0 ** (k_star - 1) >= two_log:
        k_star -= 1
    k_max = int(math.floor(math.log2(n - 1))) if n > 1 else 0
    while 2 ** (k_max + 1) < n:
        k_max += 1
    while k_max > 0 and 2 ** k_max >= n:
        k_max -= 1
    if k_max < k_star:
        raise ValueError(
            f"n={n} too small for p={p}, eps={eps}: the level rule gives "
            f"k_star={k_star} but k_max={k_max}; need n >= {2 ** k_star + 1}"
        )
    if kinds is None:
        kinds = (NONPARAMETRIC,) * p
    kinds = tuple(kinds)
    if len(kinds) != p:
        raise ValueError(f"got {len(kinds)} kinds for p={p} components")
    return ResolutionScheme(k_star=k_star, k_max=k_max, kinds=kinds)


def block_size(scheme: ResolutionScheme, j: int, k: int) -> int:
    """Block dimension d_{j,k} of group (j, k)."""
    return scheme.block_size(j, k)


# ---------------------------------------------------------------------------
# Basis families
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class BasisFamily:
    """One of the supported families on the unit interval."""

    name: str  # "fourier" or "haar"

    def __post_init__(self):
        if self.name not in ("fourier", "haar"):
            raise ValueError(f"unknown basis family {self.name!r}")

    def bound(self, scheme: ResolutionScheme) -> float:
        """Uniform bound L0 on every nonparametric basis function in use."""
        if self.name == "fourier":
            return SQRT2
        # Haar amplitude grows with scale; indices up to 2^k_max reach
        # scale k_max - 1 with amplitude 2^((k_max - 1)/2).
        return 2.0 ** ((scheme.k_max - 1) / 2.0) if scheme.k_max >= 1 else 1.0


FOURIER = BasisFamily("fourier")
HAAR = BasisFamily("haar")


def _fourier_trig_table(x: np.ndarray, f_max: int) -> Tuple[np.ndarray, np.ndarray]:
    """cos(2 pi f x), sin(2 pi f x) for f = 0..f_max, shape (f_max+1, n).

    Frequencies at multiples of the anchor spacing are computed directly;
    the rest follow from the angle-addition recurrence, which drifts by at
    most a few ulp over one anchor span.
    """
    x = np.asarray(x, dtype=float)
    theta = 2.0 * math.pi * x
    cos_t = np.empty((f_max + 1, x.size))
    sin_t = np.empty((f_max + 1, x.size))
    cos_t[0] = 1.0
    sin_t[0] = 0.0
    if f_max == 0:
        return cos_t, sin_t
    c1, s1 = np.cos(theta), np.sin(theta)
    cos_t[1] = c1
    sin_t[1] = s1
    for f in range(2, f_max + 1):
        if f % _ANCHOR == 0:
            cos_t[f] = np.cos(f * theta)
            sin_t[f] = np.sin(f * theta)
        else:
            cos_t[f] = cos_t[f - 1] * c1 - sin_t[f - 1] * s1
            sin_t[f] = sin_t[f - 1] * c1 + cos_t[f - 1] * s1
    return cos_t, sin_t


def _fourier_columns(x: np.ndarray, m_first: int, count: int) -> np.ndarray:
    """Columns m_first..m_first+count-1 of the Fourier sequence at points x.

    Global index m enumerates {1, sqrt2 cos, sqrt2 sin, ...}: m = 1 is the
    constant; even m is sqrt2 cos(2 pi (m/2) x); odd m > 1 is
    sqrt2 sin(2 pi ((m-1)/2) x).
    """
    ms = np.arange(m_first, m_first + count)
    f_max = int(ms.max() // 2)
    cos_t, sin_t = _fourier_trig_table(x, f_max)
    out = np.empty((np.asarray(x).size, count))
    const = ms == 1
    is_cos = (ms % 2 == 0)
    is_sin = ~const & ~is_cos
    if const.any():
        out[:, const] = 1.0
    if is_cos.any():
        out[:, is_cos] = SQRT2 * cos_t[ms[is_cos] // 2].T
    if is_sin.any():
        out[:, is_sin] = SQRT2 * sin_t[(ms[is_sin] - 1) // 2].T
    return out


def _fourier_weighted_sum(
    x: np.ndarray, m_first: int, beta: np.ndarray
) -> np.ndarray:
    """sum_ell beta_ell u_{m_first + ell - 1}(x) with O(n) memory.

    Streams the frequency recurrence instead of materializing columns;
    useful for deep truth expansions.  Matches the tabled evaluation to
    rounding because the anchor/recurrence schedule is identical.
    """
    x = np.asarray(x, dtype=float)
    theta = 2.0 * math.pi * x
    c1, s1 = np.cos(theta), np.sin(theta)
    out = np.zeros_like(x)
    ms = np.arange(m_first, m_first + beta.size)
    weights = {}
    for m, b in zip(ms, beta):
        if m == 1:
            out += float(b)
            continue
        f = m // 2 if m % 2 == 0 else (m - 1) // 2
        wc, ws = weights.get(f, (0.0, 0.0))
        if m % 2 == 0:
            wc += float(b)
        else:
            ws += float(b)
        weights[f] = (wc, ws)
    if not weights:
        return out
    f_lo, f_hi = min(weights), max(weights)
    cos_f = np.cos(f_lo * theta) if f_lo % _ANCHOR == 0 or f_lo <= 1 else None
    sin_f = np.sin(f_lo * theta) if cos_f is not None else None
    if cos_f is None:
        anchor = (f_lo // _ANCHOR) * _ANCHOR
        cos_f = np.cos(anchor * theta) if anchor != 1 else c1.copy()
        sin_f = np.sin(anchor * theta) if anchor != 1 else s1.copy()
        for f in range(anchor + 1, f_lo + 1):
            if f % _ANCHOR == 0:
                cos_f, sin_f = np.cos(f * theta), np.sin(f * theta)
            else:
                cos_f, sin_f = cos_f * c1 - sin_f * s1, sin_f * c1 + cos_f * s1
    for f in range(f_lo, f_hi + 1):
        if f > f_lo:
            if f % _ANCHOR == 0:
                cos_f, sin_f = np.cos(f * theta), np.sin(f * theta)
            else:
                cos_f, sin_f = cos_f * c1 - sin_f * s1, sin_f * c1 + cos_f * s1
        if f in weights:
            wc, ws = weights[f]
            if wc:
                out += (SQRT2 * wc) * cos_f
            if ws:
                out += (SQRT2 * ws) * sin_f
    return out


def _haar_columns(x: np.ndarray, m_first: int, count: int) -> np.ndarray:
    """Haar system columns; m = 1 is the constant, m = 2^s + i + 1 the
    mother wavelet at scale s, shift i, supported on [i 2^-s, (i+1) 2^-s)."""
    x = np.asarray(x, dtype=float)
    out = np.zeros((x.size, count))
    for i, m in enumerate(range(m_first, m_first + count)):
        if m == 1:
            out[:, i] = 1.0
            continue
        s = int(math.floor(math.log2(m - 1)))
        shift = (m - 1) - 2 ** s
        t = x * 2 ** s - shift
        amp = 2.0 ** (s / 2.0)
        out[:, i] = amp * (((t >= 0) & (t < 0.5)).astype(float)
                           - ((t >= 0.5) & (t < 1.0)).astype(float))
    return out


def _block_columns(
    family: BasisFamily, scheme: ResolutionScheme, j: int, k: int, x: np.ndarray
) -> np.ndarray:
    """Evaluate all basis functions of group (j, k) at points x (one column
    per ell)."""
    d = scheme.block_size(j, k)
    kind = scheme.kind(j)
    x = np.asarray(x, dtype=float)
    if isinstance(kind, Parametric):
        # monomials x^ell; a linear effect is ell = 1
        return np.column_stack([x ** ell for ell in range(1, d + 1)])
    m_first = scheme.block_offset(j, k) + 1
    if family.name == "fourier":
        return _fourier_columns(x, m_first, d)
    return _haar_columns(x, m_first, d)


def _component_stack(
    family: BasisFamily, scheme: ResolutionScheme, j: int, x: np.ndarray
) -> Dict[int, np.ndarray]:
    """All level blocks of one component, sharing a single trig table."""
    levels = list(scheme.levels(j))
    kind = scheme.kind(j)
    x = np.asarray(x, dtype=float)
    if isinstance(kind, Parametric) or family.name != "fourier":
        return {k: _block_columns(family, scheme, j, k, x) for k in levels}
    m_last = scheme.block_offset(j, levels[-1]) + scheme.block_size(j, levels[-1])
    all_cols = _fourier_columns(x, 1, m_last)
    out = {}
    for k in levels:
        off = scheme.block_offset(j, k)
        out[k] = all_cols[:, off : off + scheme.block_size(j, k)]
    return out


def eval_basis(
    family: BasisFamily,
    scheme: ResolutionScheme,
    j: int,
    k: int,
    ell: int,
    x: float,
) -> float:
    """Value of basis function (j, k, ell) at a point x in [0, 1]."""
    d = scheme.block_size(j, k)
    if not 1 <= ell <= d:
        raise KeyError(f"ell={ell} outside 1..{d} for group ({j}, {k})")
    xv = float(x)
    if not 0.0 <= xv <= 1.0:
        raise DesignError(f"x={xv} outside [0, 1]")
    col = _block_columns(family, scheme, j, k, np.array([xv]))[:, ell - 1]
    return float(col[0])


# ---------------------------------------------------------------------------
# Grouped design
# ---------------------------------------------------------------------------

class _SvdProjector:
    """Exact rank-revealing projector onto the column space of one block.

    Keeps the thin orthonormal factor Q and the pieces needed to map fitted
    vectors back to minimal-Euclidean-norm coefficients.
    """

    def __init__(self, block: np.ndarray, rank_tol: float):
        n, d = block.shape
        u, s, vt = np.linalg.svd(block, full_matrices=False)
        smax = s[0] if s.size else 0.0
        rank = int(np.sum(s > rank_tol * smax)) if smax > 0 else 0
        self.n = n
        self.rank = rank
        self.q = u[:, :rank]
        self._sinv_vt = vt[:rank] / s[:rank, None] if rank else np.zeros((0, d))

    def reduced(self, vec: np.ndarray):
        """(working vector z, ||P vec||_{2,n}); the projection itself is
        ``expand(z)`` so callers pay for it only when needed."""
        if self.rank == 0:
            return None, 0.0
        z = self.q.T @ vec
        return z, float(np.linalg.norm(z) / math.sqrt(self.n))

    def expand(self, z) -> np.ndarray:
        if z is None:
            return np.zeros(self.n)
        return self.q @ z

    def project(self, vec: np.ndarray) -> np.ndarray:
        return self.expand(self.reduced(vec)[0])

    def project_norm2n(self, vec: np.ndarray) -> float:
        """||P vec||_{2,n}."""
        return self.reduced(vec)[1]

    def coef_from_fitted(self, fitted: np.ndarray) -> np.ndarray:
        """Minimal-norm coefficients b with U b = fitted (for fitted in
        range(U))."""
        return self._sinv_vt.T @ (self.q.T @ fitted)


class _CholProjector:
    """Projector via a Cholesky factor of the block Gram U'U/n.

    Requires a positive-definite Gram (true for random designs with
    d < n in the Fourier family); exact and much cheaper than an SVD for
    wide blocks.  The grouped design falls back to the SVD projector when
    the factorization fails.
    """

    def __init__(self, design: "GroupedDesign", key: GroupKey, gram: np.ndarray):
        import scipy.linalg as sla

        self._design = design
        self._key = key
        self.n = design.n
        self.rank = gram.shape[0]
        self._chol = sla.cho_factor(gram, lower=True, check_finite=False)

    def _solve(self, u: np.ndarray) -> np.ndarray:
        import scipy.linalg as sla

        return sla.cho_solve(self._chol, u, check_finite=False)

    def reduced(self, vec: np.ndarray):
        block = self._design.block(self._key)
        u = block.T @ vec / self.n
        z = self._solve(u)
        val = float(u @ z)
        return z, math.sqrt(max(val, 0.0))

    def expand(self, z) -> np.ndarray:
        block = self._design.block(self._key)
        return block @ z

    def project(self, vec: np.ndarray) -> np.ndarray:
        return self.expand(self.reduced(vec)[0])

    def project_norm2n(self, vec: np.ndarray) -> float:
        return self.reduced(vec)[1]

    def coef_from_fitted(self, fitted: np.ndarray) -> np.ndarray:
        block = self._design.block(self._key)
        return self._solve(block.T @ fitted / self.n)


@dataclass
class GroupedDesign:
    """Per-group design blocks with cached projection machinery.

    ``storage='dense'`` keeps every block and an exact SVD factor;
    ``storage='factor'`` keeps only per-group Gram Cholesky factors and
    rebuilds block columns on demand (one component cached at a time), which
    is what makes n ~ 4096, p ~ 50 designs affordable.
    """

    n: int
    scheme: ResolutionScheme
    family: BasisFamily
    x: np.ndarray
    storage: str
    rank_tol: float = 1e-10
    component_cache_size: int = 8
    _blocks: Dict[GroupKey, np.ndarray] = field(default_factory=dict, repr=False)
    _projectors: Dict[GroupKey, object] = field(default_factory=dict, repr=False)
    _grams: Dict[GroupKey, np.ndarray] = field(default_factory=dict, repr=False)
    _component_cache: Dict[int, Dict[int, np.ndarray]] = field(
        default_factory=dict, repr=False
    )

    def groups(self) -> List[GroupKey]:
        return self.scheme.groups()

    def block(self, key: GroupKey) -> np.ndarray:
        """The n x d_{j,k} matrix of basis values for group key."""
        if key in self._blocks:
            return self._blocks[key]
        j, k = key
        if j in self._component_cache:
            # LRU refresh
            self._component_cache[j] = self._component_cache.pop(j)
        else:
            while len(self._component_cache) >= max(self.component_cache_size, 1):
                self._component_cache.pop(next(iter(self._component_cache)))
            self._component_cache[j] = _component_stack(
                self.family, self.scheme, j, self.x[:, j - 1]
            )
        return self._component_cache[j][k]

    def gram(self, key: GroupKey) -> np.ndarray:
        """Block Gram U'U/n."""
        if key not in self._grams:
            if self.family.name == "fourier" and isinstance(
                self.scheme.kind(key[0]), Nonparametric
            ):
                self._grams[key] = self._fourier_gram(key)
            else:
                b = self.block(key)
                self._grams[key] = b.T @ b / self.n
        return self._grams[key]

    def _fourier_gram(self, key: GroupKey) -> np.ndarray:
        """Gram of a Fourier block from the trigonometric moments
        C_t = sum_i cos(2 pi t x_i), S_t likewise; O(n f_max + d^2) instead
        of O(n d^2)."""
        j, k = key
        d = self.scheme.block_size(j, k)
        ms = np.arange(1, d + 1) + self.scheme.block_offset(j, k)
        # freq(m): 0 for the constant, m//2 for cos (even m), (m-1)//2 for sin
        freqs = np.array([0 if m == 1 else (m // 2 if m % 2 == 0 else (m - 1) // 2)
                          for m in ms])
        is_sin = np.array([m != 1 and m % 2 == 1 for m in ms])
        f_max = int(freqs.max())
        cos_t, sin_t = _fourier_trig_table(self.x[:, j - 1], 2 * f_max)
        c_mom = cos_t.sum(axis=1)
        s_mom = sin_t.sum(axis=1)

        fa = freqs[:, None]
        fb = freqs[None, :]
        diff = np.abs(fa - fb)
        tot = fa + fb
        c_diff, c_tot = c_mom[diff], c_mom[tot]
        # S_{a-b} with sign; S_{-t} = -S_t
        s_signed_ba = np.sign(fb - fa) * s_mom[np.abs(fb - fa)]
        s_tot = s_mom[tot]

        sin_a = is_sin[:, None]
        sin_b = is_sin[None, :]
        gram = np.where(
            ~sin_a & ~sin_b, c_diff + c_tot,
            np.where(sin_a & sin_b, c_diff - c_tot,
                     # one sine, one cosine: 2 sin(b) cos(a) = sin(a+b) + sin(b-a)
                     np.where(~sin_a & sin_b, s_tot + s_signed_ba, s_tot - s_signed_ba))
        ) / self.n
        # constant rows/columns carry sqrt(2) instead of 2 from the product
        # of normalizations; fix them up, and the (const, const) cell is 1.
        const = freqs == 0
        if const.any():
            gram[const, :] /= SQRT2
            gram[:, const] /= SQRT2
            gram[np.ix_(const, const)] = 1.0
        return gram

    def projector(self, key: GroupKey):
        if key not in self._projectors:
            if self.storage == "dense":
                self._projectors[key] = _SvdProjector(self.block(key), self.rank_tol)
            else:
                try:
                    self._projectors[key] = _CholProjector(self, key, self.gram(key))
                except (np.linalg.LinAlgError, ValueError):
                    self._projectors[key] = _SvdProjector(self.block(key), self.rank_tol)
        return self._projectors[key]

    def project(self, key: GroupKey, vec: np.ndarray) -> np.ndarray:
        """Orthogonal projection of vec onto the column space of block key."""
        return self.projector(key).project(vec)

    def project_norm2n(self, key: GroupKey, vec: np.ndarray) -> float:
        return self.projector(key).project_norm2n(vec)

    def project_reduced(self, key: GroupKey, vec: np.ndarray):
        """(working vector, ||P vec||_{2,n}); expand via
        ``project_expand``."""
        return self.projector(key).reduced(vec)

    def project_expand(self, key: GroupKey, z) -> np.ndarray:
        return self.projector(key).expand(z)

    def ortho(self, key: GroupKey) -> np.ndarray:
        """Column-orthonormal factor Q with range(Q) = range(U)."""
        proj = self.projector(key)
        if isinstance(proj, _SvdProjector):
            return proj.q
        return _SvdProjector(self.block(key), self.rank_tol).q

    def coef_from_fitted(self, key: GroupKey, fitted: np.ndarray) -> np.ndarray:
        """Minimal-norm coefficient preimage of a fitted group vector."""
        return self.projector(key).coef_from_fitted(fitted)

    def fitted_from_coef(self, key: GroupKey, coef: np.ndarray) -> np.ndarray:
        return self.block(key) @ coef

    def export_csv(self, path) -> None:
        """Write the stacked design with one "j,k,ell" triplet per column."""
        labels = self.scheme.column_labels()
        with open(path, "w", newline="") as fh:
            writer = csv.writer(fh)
            writer.writerow([f"{j},{k},{ell}" for (j, k, ell) in labels])
            cols = np.hstack([self.block(key) for key in self.groups()])
            for row in cols:
                writer.writerow([f"{v:.17g}" for v in row])


def rescale_unit(x: np.ndarray) -> np.ndarray:
    """Min-max rescale each column into [0, 1] (constant columns map to 0)."""
    x = np.asarray(x, dtype=float)
    lo = x.min(axis=0)
    span = x.max(axis=0) - lo
    span = np.where(span > 0, span, 1.0)
    return (x - lo) / span


def assemble_design(
    x: np.ndarray,
    family: BasisFamily,
    scheme: ResolutionScheme,
    *,
    storage: str = "auto",
    rank_tol: float = 1e-10,
    dense_budget_bytes: int = 200_000_000,
    stream_cache_bytes: int = 1_500_000_000,
) -> GroupedDesign:
    """Evaluate every group block at the covariates and prepare projectors.

    Covariates must already lie in [0, 1]; use :func:`rescale_unit` first
    otherwise.  ``storage='auto'`` keeps everything dense (with exact SVD
    factors) unless the design would exceed ``dense_budget_bytes``; larger
    designs use Gram-Cholesky projectors with per-component block
    streaming, caching as many components as fit in
    ``stream_cache_bytes``.
    """
    x = np.asarray(x, dtype=float)
    if x.ndim != 2:
        raise DesignError(f"X must be 2-d, got shape {x.shape}")
    n, p = x.shape
    if p != scheme.p:
        raise DesignError(f"X has {p} columns but the scheme has {scheme.p}")
    if not np.all(np.isfinite(x)):
        raise DesignError("X contains non-finite entries")
    if x.min() < 0.0 or x.max() > 1.0:
        raise DesignError(
            "covariates outside [0, 1]; rescale first (see rescale_unit)"
        )
    if storage == "auto":
        storage = (
            "dense"
            if n * scheme.total_dim * 8 <= dense_budget_bytes
            else "factor"
        )
    if storage not in ("dense", "factor"):
        raise ValueError(f"unknown storage {storage!r}")
    per_comp_bytes = max(
        (n * sum(scheme.block_size(j, k) for k in scheme.levels(j)) * 8
         for j in range(1, p + 1)),
        default=1,
    )
    cache_size = max(2, int(stream_cache_bytes // max(per_comp_bytes, 1)))
    design = GroupedDesign(
        n=n,
        scheme=scheme,
        family=family,
        x=x,
        storage=storage,
        rank_tol=rank_tol,
        component_cache_size=cache_size,
    )
    if storage == "dense":
        for j in range(1, p + 1):
            stack = _component_stack(family, scheme, j, x[:, j - 1])
            for k, cols in stack.items():
                design._blocks[(j, k)] = cols
    return design
