"""Dense symmetric linear algebra, PSD utilities, Gaussian sampling, and
deterministic random streams.

All matrices in this package are plain ``numpy.ndarray`` squares kept exactly
symmetric (``m[i, j] == m[j, i]`` bit-for-bit); :func:`symmetrize` is the one
place that restores that property after an operation that may break it.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np


class NumericalError(RuntimeError):
    """An iterative numerical routine (eigen-solver) failed to converge."""


class NotPositiveSemidefiniteError(ValueError):
    """A matrix required to be PSD has a negative pivot beyond tolerance."""

    def __init__(self, pivot: int, value: float, tol: float):
        self.pivot = pivot
        self.value = value
        self.tol = tol
        super().__init__(
            f"matrix is not positive semidefinite: pivot {pivot} has "
            f"Schur-complement value {value:.3e} < -{tol:.3e}"
        )


def symmetrize(m):
    """Return (m + m.T) / 2, which is exactly symmetric in IEEE arithmetic."""
    return (m + m.T) / 2.0


def check_symmetric(m, name="matrix"):
    m = np.asarray(m, dtype=float)
    if m.ndim != 2 or m.shape[0] != m.shape[1]:
        raise ValueError(f"{name} must be square, got shape {m.shape}")
    if not np.all(np.isfinite(m)):
        raise ValueError(f"{name} contains non-finite entries")
    if not np.array_equal(m, m.T):
        raise ValueError(f"{name} is not exactly symmetric")
    return m


def frobenius_norm(m) -> float:
    """Entrywise Euclidean norm sqrt(sum_ij m_ij^2); off-diagonals count twice
    via the full double sum."""
    m = np.asarray(m, dtype=float)
    return float(np.sqrt(np.sum(m * m)))


def operator_norm(m) -> float:
    """Spectral norm of a symmetric matrix: max_j |l_j| over its eigenvalues."""
    m = np.asarray(m, dtype=float)
    try:
        vals = np.linalg.eigvalsh(m)
    except np.linalg.LinAlgError as exc:  # pragma: no cover - LAPACK rarely fails
        raise NumericalError(f"symmetric eigenvalue solver did not converge: {exc}") from exc
    return float(np.max(np.abs(vals))) if vals.size else 0.0


@dataclass(frozen=True)
class EigenSystem:
    """Eigenvalues in descending order with matching orthonormal columns."""

    values: np.ndarray   # shape (p,), values[0] >= values[1] >= ...
    vectors: np.ndarray  # shape (p, p), column j pairs with values[j]

    @property
    def p(self) -> int:
        return self.values.shape[0]

    def reconstruct(self) -> np.ndarray:
        return (self.vectors * self.values) @ self.vectors.T


def eigen_decompose(m) -> EigenSystem:
    """Full symmetric eigendecomposition, eigenvalues sorted descending."""
    m = np.asarray(m, dtype=float)
    try:
        vals, vecs = np.linalg.eigh(m)
    except np.linalg.LinAlgError as exc:  # pragma: no cover
        raise NumericalError(f"symmetric eigenvalue solver did not converge: {exc}") from exc
    return EigenSystem(values=vals[::-1].copy(), vectors=vecs[:, ::-1].copy())


def clip_to_psd(m):
    """Project a symmetric matrix onto the PSD cone by zeroing negative
    eigenvalues.

    Returns ``(clipped, clipped_mass)`` where ``clipped_mass`` is the total
    absolute mass ``sum(|l_j|)`` over the eigenvalues that were clipped; 0.0
    means the input was already PSD.
    """
    eig = eigen_decompose(m)
    neg = eig.values < 0.0
    if not np.any(neg):
        return symmetrize(np.asarray(m, dtype=float)), 0.0
    mass = float(np.sum(np.abs(eig.values[neg])))
    vals = np.where(neg, 0.0, eig.values)
    return symmetrize((eig.vectors * vals) @ eig.vectors.T), mass


def psd_factor(cov, rel_tol: float = 1e-8) -> np.ndarray:
    """Pivoted Cholesky factor ``B`` (p x rank) with ``B @ B.T ~= cov``.

    Semi-definite input is accepted: the factorization stops once the largest
    remaining Schur-complement diagonal falls below ``rel_tol * max(diag)``.
    If any remaining diagonal is below the negated tolerance the matrix is
    indefinite and :class:`NotPositiveSemidefiniteError` names the offending
    pivot (an index into the original matrix).
    """
    a = np.array(cov, dtype=float, copy=True)
    p = a.shape[0]
    tol = rel_tol * max(float(np.max(np.diagonal(a), initial=0.0)), 0.0)
    perm = np.arange(p)
    low = np.zeros((p, p))
    rank = p
    for k in range(p):
        d = np.diagonal(a)
        j = k + int(np.argmax(d[k:]))
        if a[j, j] <= tol:
            worst = k + int(np.argmin(d[k:]))
            if d[worst] < -tol:
                raise NotPositiveSemidefiniteError(int(perm[worst]), float(d[worst]), tol)
            rank = k
            break
        if j != k:
            a[[k, j], :] = a[[j, k], :]
            a[:, [k, j]] = a[:, [j, k]]
            low[[k, j], :k] = low[[j, k], :k]
            perm[[k, j]] = perm[[j, k]]
        piv = math.sqrt(a[k, k])
        low[k, k] = piv
        low[k + 1:, k] = a[k + 1:, k] / piv
        a[k + 1:, k + 1:] -= np.outer(low[k + 1:, k], low[k + 1:, k])
    out = np.empty((p, rank))
    out[perm] = low[:, :rank]
    return out


@dataclass(frozen=True)
class RngStream:
    """Value-type handle for a deterministic, splittable random stream.

    The same ``(seed, path)`` always reproduces the same draws; children
    derived through :meth:`child` are statistically independent of the parent
    and of each other.  Streams are cheap values, never shared mutable state:
    parallel workers derive their own children instead of sharing a generator.
    """

    seed: int
    path: tuple[int, ...] = ()

    def child(self, *ids: int) -> "RngStream":
        return RngStream(self.seed, self.path + tuple(int(i) for i in ids))

    def generator(self) -> np.random.Generator:
        return np.random.default_rng(np.random.SeedSequence(self.seed, spawn_key=self.path))


class MvnSampler:
    """Multivariate normal sampler with the PSD factorization done once.

    Validates the covariance on construction (PSD up to tolerance, pivoted
    factorization); rank-deficient covariances are fine.
    """

    def __init__(self, mean, cov):
        self.mean = np.asarray(mean, dtype=float)
        cov = np.asarray(cov, dtype=float)
        if self.mean.ndim != 1 or cov.shape != (self.mean.size, self.mean.size):
            raise ValueError(
                f"mean of length {self.mean.size} incompatible with covariance shape {cov.shape}"
            )
        self.factor = psd_factor(cov)

    @property
    def p(self) -> int:
        return self.mean.size

    def draw(self, n: int, rng: RngStream) -> np.ndarray:
        z = rng.generator().standard_normal((n, self.factor.shape[1]))
        return self.mean + z @ self.factor.T


def sample_mvn(mean, cov, n: int, rng: RngStream) -> np.ndarray:
    """Draw ``n`` i.i.d. rows from N(mean, cov); cov may be singular PSD."""
    if n < 1:
        raise ValueError(f"sample size must be at least 1, got {n}")
    return MvnSampler(mean, cov).draw(n, rng)


def validate_dataset(x, min_rows: int = 2) -> np.ndarray:
    """Check an (n, p) observation matrix: finite values, at least min_rows rows."""
    x = np.asarray(x, dtype=float)
    if x.ndim != 2:
        raise ValueError(f"dataset must be a 2-d array of shape (n, p), got ndim={x.ndim}")
    if x.shape[0] < min_rows:
        raise ValueError(f"dataset needs at least {min_rows} rows, got {x.shape[0]}")
    if not np.all(np.isfinite(x)):
        raise ValueError("dataset contains non-finite values")
    return x
