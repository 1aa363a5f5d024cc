"""Tuning-parameter selection: oracle, V-fold cross-validation, reverse
cross-validation, and repeated-random-split cross-validation, in either the
Frobenius or the operator norm.

Scores are squared norms averaged over folds; the selected value is the
smallest grid point attaining the minimum (parsimony tie-break).
"""

from __future__ import annotations

import re
from dataclasses import dataclass, field

import numpy as np

from .estimators import EstimatorSpec, apply_grid, empirical_cov, offset_matrix
from .linalg import RngStream, validate_dataset

NORMS = ("frobenius", "operator")

RULE_KINDS = ("oracle", "cv", "reverse_cv", "repeated_cv", "boot_frobenius", "sure", "boot_operator")


@dataclass(frozen=True)
class SelectionRule:
    """Tag plus parameters for one selection method.

    folds: fold count V (cv / reverse_cv / repeated_cv)
    splits: number of random splits S (repeated_cv)
    n_boot: bootstrap resample count B (boot_* rules)
    norm: which squared norm the rule minimizes
    """

    kind: str
    norm: str = "frobenius"
    folds: int | None = None
    splits: int | None = None
    n_boot: int | None = None

    def __post_init__(self):
        if self.kind not in RULE_KINDS:
            raise ValueError(f"unknown rule kind {self.kind!r}")
        if self.norm not in NORMS:
            raise ValueError(f"unknown norm {self.norm!r}")
        if self.kind in ("cv", "reverse_cv", "repeated_cv"):
            if self.folds is None or self.folds < 2:
                raise ValueError(f"{self.kind} needs a fold count of at least 2")
        if self.kind == "repeated_cv" and (self.splits is None or self.splits < 1):
            raise ValueError("repeated_cv needs at least 1 split")
        if self.kind in ("boot_frobenius", "boot_operator"):
            if self.n_boot is None or self.n_boot < 2:
                raise ValueError(f"{self.kind} needs at least 2 bootstrap resamples")
        if self.kind in ("boot_frobenius", "sure") and self.norm != "frobenius":
            raise ValueError(f"{self.kind} is a Frobenius-risk rule")
        if self.kind == "boot_operator" and self.norm != "operator":
            raise ValueError("boot_operator is an operator-risk rule")

    @property
    def name(self) -> str:
        suffix = "f" if self.norm == "frobenius" else "op"
        if self.kind == "oracle":
            return f"oracle_{suffix}"
        if self.kind == "cv":
            return f"cv{self.folds}_{suffix}"
        if self.kind == "reverse_cv":
            return f"recv{self.folds}_{suffix}"
        if self.kind == "repeated_cv":
            return f"rcv{self.folds}_{suffix}"
        return {"boot_frobenius": "boot_f", "sure": "sure", "boot_operator": "boot_op"}[self.kind]


_RULE_RE = re.compile(r"^(?P<tag>cv|recv|rcv)(?P<folds>\d+)_(?P<norm>f|op)$")


def parse_rule(name: str, n_boot: int = 200, splits: int = 50) -> SelectionRule:
    """Map a rule name like ``cv10_f``, ``recv3_op``, ``rcv2_f``, ``oracle_op``,
    ``boot_f``, ``sure`` or ``boot_op`` to a :class:`SelectionRule`."""
    name = name.strip().lower()
    fixed = {
        "oracle_f": SelectionRule("oracle", "frobenius"),
        "oracle_op": SelectionRule("oracle", "operator"),
        "boot_f": SelectionRule("boot_frobenius", "frobenius", n_boot=n_boot),
        "sure": SelectionRule("sure", "frobenius"),
        "boot_op": SelectionRule("boot_operator", "operator", n_boot=n_boot),
    }
    if name in fixed:
        return fixed[name]
    m = _RULE_RE.match(name)
    if m is None:
        raise ValueError(f"unrecognized selection rule {name!r}")
    folds = int(m.group("folds"))
    norm = "frobenius" if m.group("norm") == "f" else "operator"
    kind = {"cv": "cv", "recv": "reverse_cv", "rcv": "repeated_cv"}[m.group("tag")]
    return SelectionRule(kind, norm, folds=folds, splits=splits if kind == "repeated_cv" else None)


@dataclass(frozen=True)
class SelectionResult:
    """Chosen tuning value plus the full score curve it came from."""

    rule: SelectionRule
    lambdas: np.ndarray
    scores: np.ndarray
    details: dict = field(default_factory=dict)

    @property
    def index(self) -> int:
        # first minimum = smallest lambda attaining it (grids are increasing)
        return int(np.argmin(self.scores))

    @property
    def selected(self) -> float:
        return float(self.lambdas[self.index])


@dataclass(frozen=True)
class FoldPlan:
    """Balanced random assignment of rows to folds 0..V-1."""

    assignments: np.ndarray
    folds: int

    def fold_sizes(self) -> np.ndarray:
        return np.bincount(self.assignments, minlength=self.folds)


def make_folds(n: int, folds: int, rng: RngStream) -> FoldPlan:
    """Uniformly random partition with fold sizes differing by at most 1."""
    if folds < 2:
        raise ValueError(f"need at least 2 folds, got {folds}")
    if folds > n:
        raise ValueError(f"cannot split {n} rows into {folds} folds")
    perm = rng.generator().permutation(n)
    labels = np.empty(n, dtype=np.intp)
    labels[perm] = np.arange(n) % folds
    return FoldPlan(assignments=labels, folds=folds)


def _offset_sums(m_flat, off_flat, p):
    return np.bincount(off_flat, weights=m_flat, minlength=p)


def fold_score_curve(spec: EstimatorSpec, s_train, s_valid, norm: str) -> np.ndarray:
    """Squared distance, per grid value, between the regularized training
    covariance and the validation covariance.

    The Frobenius branch uses closed forms (per-offset sums for banding and
    tapering, sorted cumulative sums for thresholding) and matches the direct
    ``|apply(spec, s_train, lam) - s_valid|`` evaluation to rounding error.
    """
    if norm == "operator":
        diff = apply_grid(spec, s_train) - s_valid[None]
        vals = np.linalg.eigvalsh(diff)
        return np.max(np.abs(vals), axis=1) ** 2
    p = s_train.shape[0]
    if spec.is_linear:
        off = offset_matrix(p).ravel()
        a = _offset_sums((s_train * s_train).ravel(), off, p)
        b = _offset_sums((s_train * s_valid).ravel(), off, p)
        c = float(np.sum(s_valid * s_valid))
        w = spec.weight_profiles(p)
        return (w * w) @ a - 2.0 * (w @ b) + c
    st = s_train.ravel()
    sv = s_valid.ravel()
    order = np.argsort(np.abs(st), kind="stable")
    abs_sorted = np.abs(st)[order]
    d = st[order] - sv[order]
    cum_d2 = np.concatenate([[0.0], np.cumsum(d * d)])
    cum_v2 = np.concatenate([[0.0], np.cumsum(sv[order] ** 2)])
    if spec.family == "hard":
        # entries with |s| < lam are zeroed
        idx = np.searchsorted(abs_sorted, spec.grid, side="left")
        return (cum_d2[-1] - cum_d2[idx]) + cum_v2[idx]
    # soft: kept entries contribute (d - sign(s) lam)^2
    cum_sd = np.concatenate([[0.0], np.cumsum(np.sign(st[order]) * d)])
    idx = np.searchsorted(abs_sorted, spec.grid, side="right")
    kept = st.size - idx
    return (
        (cum_d2[-1] - cum_d2[idx])
        - 2.0 * spec.grid * (cum_sd[-1] - cum_sd[idx])
        + spec.grid**2 * kept
        + cum_v2[idx]
    )


def plan_score_curve(spec: EstimatorSpec, x, plan: FoldPlan, norm: str,
                     reverse: bool = False) -> np.ndarray:
    """Cross-validation score curve for one fold plan: the fold-averaged
    squared distance between the regularized training covariance and the
    validation covariance (roles swapped when ``reverse``)."""
    sizes = plan.fold_sizes()
    small = np.flatnonzero(sizes < 2)
    if small.size:
        raise ValueError(f"fold {int(small[0])} has {int(sizes[small[0]])} rows; need at least 2")
    scores = np.zeros(spec.grid.size)
    for v in range(plan.folds):
        mask = plan.assignments == v
        train = x[mask] if reverse else x[~mask]
        valid = x[~mask] if reverse else x[mask]
        scores += fold_score_curve(spec, empirical_cov(train), empirical_cov(valid), norm)
    return scores / plan.folds


def cv_select(spec: EstimatorSpec, x, rule: SelectionRule, rng: RngStream) -> SelectionResult:
    """V-fold cross-validation: train on all-but-one fold, validate against the
    held-out fold's covariance."""
    x = validate_dataset(x)
    plan = make_folds(x.shape[0], rule.folds, rng)
    scores = plan_score_curve(spec, x, plan, rule.norm)
    return SelectionResult(rule, spec.grid.copy(), scores)


def reverse_cv_select(spec: EstimatorSpec, x, rule: SelectionRule, rng: RngStream) -> SelectionResult:
    """Reverse cross-validation: train on one fold, validate against the
    covariance of its complement."""
    x = validate_dataset(x)
    plan = make_folds(x.shape[0], rule.folds, rng)
    scores = plan_score_curve(spec, x, plan, rule.norm, reverse=True)
    return SelectionResult(rule, spec.grid.copy(), scores)


def repeated_cv_select(spec: EstimatorSpec, x, rule: SelectionRule, rng: RngStream) -> SelectionResult:
    """Cross-validation score averaged over ``rule.splits`` independent fold
    plans before taking the argmin."""
    x = validate_dataset(x)
    scores = np.zeros(spec.grid.size)
    for s in range(rule.splits):
        plan = make_folds(x.shape[0], rule.folds, rng.child(s))
        scores += plan_score_curve(spec, x, plan, rule.norm)
    return SelectionResult(rule, spec.grid.copy(), scores / rule.splits)


def oracle_select(spec: EstimatorSpec, s_in, truth, norm: str) -> SelectionResult:
    """Best tuning value against a known target covariance (squared norm)."""
    s_in = np.asarray(s_in, dtype=float)
    truth = np.asarray(truth, dtype=float)
    if truth.shape != s_in.shape:
        raise ValueError(f"truth shape {truth.shape} does not match input {s_in.shape}")
    scores = fold_score_curve(spec, s_in, truth, norm)
    return SelectionResult(SelectionRule("oracle", norm), spec.grid.copy(), scores)
