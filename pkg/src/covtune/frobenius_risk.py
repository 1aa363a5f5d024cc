"""Frobenius-risk estimation by parametric bootstrap (covariance-penalty
correction of the apparent error) and the closed-form SURE penalty for the
linear-weight families.

Risk curves drop the constant variance term, which does not depend on the
tuning value; reporting helpers can add it back.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass

import numpy as np

from .estimators import (
    EstimatorSpec,
    UnsupportedFamilyError,
    apply_grid,
    offset_matrix,
    sample_cov,
)
from .linalg import MvnSampler, RngStream, clip_to_psd, validate_dataset
from .selection import SelectionResult, SelectionRule

log = logging.getLogger(__name__)


@dataclass(frozen=True)
class BootModel:
    """Parametric Gaussian bootstrap model N(mean, cov).

    kind is "ultimate" (cov = the sample covariance) or "intermediate"
    (cov = a pre-tuned regularized estimate, clipped to PSD).
    """

    mean: np.ndarray
    cov: np.ndarray
    kind: str
    clipped_mass: float = 0.0

    def sampler(self) -> MvnSampler:
        return MvnSampler(self.mean, self.cov)


def ultimate_model(x) -> BootModel:
    """N(xbar, sample covariance): assumption-free bootstrap truth."""
    x = validate_dataset(x)
    cov, mass = clip_to_psd(sample_cov(x))
    if mass > 0:
        log.info("ultimate bootstrap model: clipped PSD mass %.3e", mass)
    return BootModel(mean=x.mean(axis=0), cov=cov, kind="ultimate", clipped_mass=mass)


def intermediate_model(x, spec: EstimatorSpec, lam0: float) -> BootModel:
    """N(xbar, regularized estimate at lam0), eigenvalue-clipped to PSD.

    Thresholded/tapered matrices need not be PSD, so the negative part of the
    spectrum is zeroed before use as a Gaussian covariance; the clipped mass
    is recorded on the model and in the run log.
    """
    x = validate_dataset(x)
    idx = int(np.flatnonzero(spec.grid == lam0)[0]) if lam0 in spec.grid else None
    if idx is None:
        raise ValueError(f"lam0={lam0} is not on the estimator grid")
    est = apply_grid(spec, sample_cov(x))[idx]
    cov, mass = clip_to_psd(est)
    if mass > 0:
        log.info(
            "intermediate bootstrap model (%s, lam0=%g): clipped PSD mass %.3e",
            spec.family, lam0, mass,
        )
    return BootModel(mean=x.mean(axis=0), cov=cov, kind="intermediate", clipped_mass=mass)


def boot_penalty(spec: EstimatorSpec, n: int, model: BootModel, n_boot: int,
                 rng: RngStream) -> np.ndarray:
    """Bootstrap estimate of the covariance penalty, per grid value.

    Draws ``n_boot`` samples of size n from the model; for each, computes the
    sample covariance and the regularized estimate over the grid, and returns

        2 * sum_ij cov_hat_b(est_ij(lam), samplecov_ij)

    with the B-1 normalized cross-moment sample covariance over bootstrap
    replicates.  For banding/tapering the estimate is the weighted sample
    covariance entry, so the cross-covariance collapses to weight times the
    entrywise bootstrap variance; thresholding accumulates the full
    cross-moments per grid value.
    """
    if n_boot < 2:
        raise ValueError(f"need at least 2 bootstrap resamples, got {n_boot}")
    sampler = model.sampler()
    p = sampler.p
    nb = n_boot
    if spec.is_linear:
        sum_s = np.zeros((p, p))
        sum_s2 = np.zeros((p, p))
        for b in range(nb):
            sb = sample_cov(sampler.draw(n, rng.child(b)))
            sum_s += sb
            sum_s2 += sb * sb
        var_b = (sum_s2 - sum_s * sum_s / nb) / (nb - 1)
        off = offset_matrix(p).ravel()
        var_by_offset = np.bincount(off, weights=var_b.ravel(), minlength=p)
        return 2.0 * (spec.weight_profiles(p) @ var_by_offset)
    grid_n = spec.grid.size
    sum_est = np.zeros((grid_n, p, p))
    sum_s = np.zeros((p, p))
    sum_prod = np.zeros((grid_n, p, p))
    for b in range(nb):
        sb = sample_cov(sampler.draw(n, rng.child(b)))
        est = apply_grid(spec, sb)
        sum_est += est
        sum_prod += est * sb[None]
        sum_s += sb
    cross = sum_prod / (nb - 1) - sum_est * sum_s[None] / (nb * (nb - 1))
    return 2.0 * cross.sum(axis=(1, 2))


@dataclass(frozen=True)
class RiskCurve:
    """Per-grid-value decomposition: total = apparent + penalty (the constant
    term is omitted; see :func:`frobenius_constant`)."""

    lambdas: np.ndarray
    apparent: np.ndarray
    penalty: np.ndarray

    @property
    def total(self) -> np.ndarray:
        return self.apparent + self.penalty


def apparent_error(spec: EstimatorSpec, s_sample) -> np.ndarray:
    """Squared Frobenius distance of each regularized estimate from the sample
    covariance it was built on."""
    diff = apply_grid(spec, s_sample) - s_sample[None]
    return np.sum(diff * diff, axis=(1, 2))


def boot_risk_curve(spec: EstimatorSpec, x, model: BootModel, n_boot: int,
                    rng: RngStream) -> RiskCurve:
    x = validate_dataset(x)
    s = sample_cov(x)
    return RiskCurve(
        lambdas=spec.grid.copy(),
        apparent=apparent_error(spec, s),
        penalty=boot_penalty(spec, x.shape[0], model, n_boot, rng),
    )


def boot_frobenius_select(spec: EstimatorSpec, x, n_boot: int, rng: RngStream) -> SelectionResult:
    """Two-stage bootstrap selection.

    Stage 1 estimates the risk under the assumption-free ("ultimate") model
    and picks a pilot value lam0; stage 2 re-estimates the penalty under the
    intermediate model centered at the stage-1 estimate and returns the argmin
    of that risk curve.
    """
    x = validate_dataset(x)
    rule = SelectionRule("boot_frobenius", "frobenius", n_boot=n_boot)
    stage1 = boot_risk_curve(spec, x, ultimate_model(x), n_boot, rng.child(0))
    lam0 = float(spec.grid[int(np.argmin(stage1.total))])
    model = intermediate_model(x, spec, lam0)
    stage2 = boot_risk_curve(spec, x, model, n_boot, rng.child(1))
    return SelectionResult(
        rule,
        spec.grid.copy(),
        stage2.total,
        details={
            "lam0": lam0,
            "apparent": stage2.apparent,
            "penalty": stage2.penalty,
            "stage1_scores": stage1.total,
            "clipped_mass": model.clipped_mass,
        },
    )


def _entry_variance_plugin(s, n: int) -> np.ndarray:
    # Gaussian/Wishart moment: Var(samplecov_ij) = (s_ii s_jj + s_ij^2)/(n-1),
    # with the sample covariance plugged in for the truth.
    d = np.diagonal(s)
    return (np.outer(d, d) + s * s) / (n - 1)


def sure_penalty(spec: EstimatorSpec, x) -> np.ndarray:
    """Closed-form covariance penalty for the linear-weight families.

    The estimate's entries are weight times the sample covariance entry, so
    cov(est_ij(lam), samplecov_ij) = w_ij(lam) * Var(samplecov_ij); the
    variance is the Gaussian moment with plugged-in sample entries.  Not
    available for thresholding, whose entries are not linear in the input.
    """
    if not spec.is_linear:
        raise UnsupportedFamilyError(
            f"closed-form penalty requires banding or tapering, not {spec.family}"
        )
    x = validate_dataset(x)
    s = sample_cov(x)
    p = s.shape[0]
    v = _entry_variance_plugin(s, x.shape[0])
    v_by_offset = np.bincount(offset_matrix(p).ravel(), weights=v.ravel(), minlength=p)
    return 2.0 * (spec.weight_profiles(p) @ v_by_offset)


def sure_select(spec: EstimatorSpec, x) -> SelectionResult:
    """Argmin of apparent error plus the closed-form penalty."""
    x = validate_dataset(x)
    s = sample_cov(x)
    scores = apparent_error(spec, s) + sure_penalty(spec, x)
    return SelectionResult(SelectionRule("sure", "frobenius"), spec.grid.copy(), scores)


def frobenius_constant(x) -> float:
    """Plug-in estimate of the constant term sum_ij Var(samplecov_ij), which
    selection curves omit; add it back for a full risk estimate."""
    x = validate_dataset(x)
    return float(np.sum(_entry_variance_plugin(sample_cov(x), x.shape[0])))
