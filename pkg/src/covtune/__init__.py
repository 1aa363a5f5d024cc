"""covtune: tuning-parameter selection for regularized covariance estimators.

Estimator families (hard/soft thresholding, banding, tapering) paired with a
suite of selection rules: oracle, V-fold and reverse cross-validation,
repeated random splits, parametric-bootstrap Frobenius risk, a closed-form
(SURE) penalty, and an operator-norm risk approximation.  A study harness
reproduces the benchmark comparison at configurable scale.
"""

from .estimators import (
    EstimatorSpec,
    UnsupportedFamilyError,
    apply,
    apply_grid,
    band,
    default_grid,
    empirical_cov,
    hard_threshold,
    make_spec,
    sample_cov,
    soft_threshold,
    taper,
    taper_weights,
)
from .frobenius_risk import (
    BootModel,
    RiskCurve,
    boot_frobenius_select,
    boot_penalty,
    boot_risk_curve,
    frobenius_constant,
    intermediate_model,
    sure_penalty,
    sure_select,
    ultimate_model,
)
from .linalg import (
    EigenSystem,
    MvnSampler,
    NotPositiveSemidefiniteError,
    NumericalError,
    RngStream,
    clip_to_psd,
    eigen_decompose,
    frobenius_norm,
    operator_norm,
    sample_mvn,
)
from .models import ModelSpec, build_sigma, generate_trial
from .operator_risk import (
    GammaStar,
    SecondVariationReport,
    boot_operator_select,
    gamma_star_estimate,
    operator_risk_estimate,
    product_moment_estimate,
    second_variation_check,
    spectral_projector,
)
from .selection import (
    FoldPlan,
    SelectionResult,
    SelectionRule,
    cv_select,
    fold_score_curve,
    make_folds,
    oracle_select,
    parse_rule,
    plan_score_curve,
    repeated_cv_select,
    reverse_cv_select,
)
from .study import ModelSetting, StudyConfig, TrialRecord, run_study, select_lambda, summarize

__version__ = "0.1.0"

__all__ = [name for name in dir() if not name.startswith("_")]
