"""Covariance estimators: the empirical/sample covariance and the four
regularized families (hard thresholding, soft thresholding, banding,
tapering), each a pure entrywise function of a symmetric input and a tuning
value ``lam``.

For thresholding families ``lam`` is a nonnegative real; for banding and
tapering it is an integer bandwidth in ``[0, p-1]``.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .linalg import symmetrize, validate_dataset

FAMILIES = ("hard", "soft", "banding", "tapering")
LINEAR_FAMILIES = ("banding", "tapering")  # estimate is linear in the input entries


class UnsupportedFamilyError(ValueError):
    """Raised when an operation only defined for linear-weight families
    (banding/tapering) is asked to run on a thresholding family."""


def empirical_cov(x) -> np.ndarray:
    """Divisor-n covariance of the rows of x: (1/n) sum (x_i - xbar)(x_i - xbar)^T."""
    x = validate_dataset(x, min_rows=1)
    xc = x - x.mean(axis=0)
    return symmetrize(xc.T @ xc / x.shape[0])


def sample_cov(x) -> np.ndarray:
    """Usual divisor-(n-1) sample covariance, n/(n-1) times :func:`empirical_cov`."""
    x = validate_dataset(x, min_rows=2)
    n = x.shape[0]
    return empirical_cov(x) * (n / (n - 1))


def hard_threshold(s, lam: float, preserve_diagonal: bool = False) -> np.ndarray:
    """Zero every entry with |s_ij| < lam (the diagonal included unless
    ``preserve_diagonal``)."""
    if lam < 0:
        raise ValueError(f"threshold must be nonnegative, got {lam}")
    s = np.asarray(s, dtype=float)
    out = np.where(np.abs(s) >= lam, s, 0.0)
    if preserve_diagonal:
        np.fill_diagonal(out, np.diagonal(s))
    return out


def soft_threshold(s, lam: float, preserve_diagonal: bool = False) -> np.ndarray:
    """Shrink every entry toward zero by lam: sign(s_ij) * (|s_ij| - lam)_+."""
    if lam < 0:
        raise ValueError(f"threshold must be nonnegative, got {lam}")
    s = np.asarray(s, dtype=float)
    out = np.sign(s) * np.maximum(np.abs(s) - lam, 0.0)
    if preserve_diagonal:
        np.fill_diagonal(out, np.diagonal(s))
    return out


def offset_matrix(p: int) -> np.ndarray:
    """|i - j| for an p x p grid."""
    idx = np.arange(p)
    return np.abs(np.subtract.outer(idx, idx))


def band(s, lam: int) -> np.ndarray:
    """Keep entries within lam positions of the diagonal, zero the rest."""
    s = np.asarray(s, dtype=float)
    _check_bandwidth(lam, s.shape[0])
    return np.where(offset_matrix(s.shape[0]) <= lam, s, 0.0)


def taper_weight_profile(p: int, lam: int) -> np.ndarray:
    """Trapezoidal taper weight as a function of the offset k = |i - j|.

    w(k) = 1 for k <= lam/2, 2 - 2k/lam for lam/2 < k < lam, 0 otherwise.
    The middle branch is empty at lam = 0, so the division is guarded.
    """
    k = np.arange(p, dtype=float)
    w = np.zeros(p)
    w[k <= lam / 2.0] = 1.0
    if lam > 0:
        mid = (k > lam / 2.0) & (k < lam)
        w[mid] = 2.0 - 2.0 * k[mid] / lam
    return w


def taper_weights(p: int, lam: int) -> np.ndarray:
    """Full p x p taper weight matrix w_ij = w(|i - j|)."""
    _check_bandwidth(lam, p)
    return taper_weight_profile(p, lam)[offset_matrix(p)]


def taper(s, lam: int) -> np.ndarray:
    """Entrywise taper: w_ij * s_ij with the trapezoidal weights above."""
    s = np.asarray(s, dtype=float)
    return taper_weights(s.shape[0], lam) * s


def _check_bandwidth(lam, p: int):
    if not float(lam).is_integer():
        raise ValueError(f"bandwidth must be an integer, got {lam!r}")
    if not 0 <= lam <= p - 1:
        raise ValueError(f"bandwidth {lam} outside [0, {p - 1}]")


@dataclass(frozen=True)
class EstimatorSpec:
    """An estimator family plus its grid of candidate tuning values.

    Grids are strictly increasing; banding/tapering grids hold integers in
    [0, p-1] (checked against p at application time).
    """

    family: str
    grid: np.ndarray = field(default_factory=lambda: np.array([]))

    def __post_init__(self):
        if self.family not in FAMILIES:
            raise ValueError(f"unknown estimator family {self.family!r}; expected one of {FAMILIES}")
        grid = np.asarray(self.grid, dtype=float)
        if grid.size == 0:
            raise ValueError("tuning grid must be non-empty")
        if np.any(np.diff(grid) <= 0):
            raise ValueError("tuning grid must be strictly increasing")
        if self.family in LINEAR_FAMILIES:
            if np.any(grid != np.round(grid)) or grid[0] < 0:
                raise ValueError(f"{self.family} grid must contain nonnegative integers")
        elif grid[0] < 0:
            raise ValueError("threshold grid must be nonnegative")
        object.__setattr__(self, "grid", grid)

    @property
    def is_linear(self) -> bool:
        return self.family in LINEAR_FAMILIES

    def weight_profiles(self, p: int) -> np.ndarray:
        """(len(grid), p) array of per-offset weights, linear families only."""
        if not self.is_linear:
            raise UnsupportedFamilyError(f"{self.family} has no linear weight representation")
        if self.family == "banding":
            return (np.arange(p)[None, :] <= self.grid[:, None]).astype(float)
        return np.stack([taper_weight_profile(p, int(l)) for l in self.grid])


def apply(spec: EstimatorSpec, s, lam, preserve_diagonal: bool = False) -> np.ndarray:
    """Dispatch to the family's estimator; pure in all arguments."""
    if spec.family == "hard":
        return hard_threshold(s, lam, preserve_diagonal)
    if spec.family == "soft":
        return soft_threshold(s, lam, preserve_diagonal)
    if spec.family == "banding":
        return band(s, int(lam))
    return taper(s, int(lam))


def apply_grid(spec: EstimatorSpec, s, preserve_diagonal: bool = False) -> np.ndarray:
    """Apply the spec's whole grid at once, returning a (len(grid), p, p) stack.

    Matches per-lam :func:`apply` bit-exactly.
    """
    s = np.asarray(s, dtype=float)
    p = s.shape[0]
    if spec.is_linear:
        _check_bandwidth(int(spec.grid[-1]), p)
        out = spec.weight_profiles(p)[:, offset_matrix(p)] * s[None]
    elif spec.family == "hard":
        out = np.where(np.abs(s)[None] >= spec.grid[:, None, None], s[None], 0.0)
    else:
        out = np.sign(s)[None] * np.maximum(np.abs(s)[None] - spec.grid[:, None, None], 0.0)
    if preserve_diagonal and not spec.is_linear:
        idx = np.arange(p)
        out[:, idx, idx] = np.diagonal(s)
    return out


def default_grid(family: str, x=None, s=None, n: int | None = None, size: int = 50) -> np.ndarray:
    """Default tuning grid for a family.

    Thresholding: ``size`` equally spaced values from 0 to the largest
    off-diagonal |entry| of the sample covariance, inclusive.  Banding and
    tapering: all integers 0..min(p-1, n); bandwidths beyond n are statistically
    useless and only add cost.
    """
    if s is None:
        if x is None:
            raise ValueError("either a dataset or a covariance matrix is required")
        x = validate_dataset(x)
        n = x.shape[0]
        s = sample_cov(x)
    s = np.asarray(s, dtype=float)
    p = s.shape[0]
    if family in LINEAR_FAMILIES:
        top = p - 1 if n is None else min(p - 1, n)
        return np.arange(0, top + 1, dtype=float)
    off = np.abs(s - np.diag(np.diagonal(s)))
    return np.linspace(0.0, float(off.max()), size)


def make_spec(family: str, x=None, s=None, n: int | None = None, grid=None) -> EstimatorSpec:
    """EstimatorSpec with an explicit or default grid."""
    if grid is None:
        grid = default_grid(family, x=x, s=s, n=n)
    return EstimatorSpec(family=family, grid=np.asarray(grid, dtype=float))
