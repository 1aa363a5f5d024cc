"""Simulation-study harness: paired comparison of selection rules over models,
sample sizes, estimator families and replications, with CSV records, grouped
summaries, and rankings.

Every rule inside one replication sees the identical dataset (paired design),
so rule differences are measured on common noise; the dataset digest is logged
on each record to make that checkable.  Replications are the unit of
parallelism and derive their own random streams, so parallel and serial runs
produce identical records.
"""

from __future__ import annotations

import configparser
import hashlib
import logging
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from io import StringIO

import numpy as np
import pandas as pd

from .estimators import EstimatorSpec, LINEAR_FAMILIES, apply_grid, empirical_cov, make_spec
from .frobenius_risk import boot_frobenius_select, sure_select
from .linalg import RngStream, operator_norm
from .models import ModelSpec
from .operator_risk import boot_operator_select
from .selection import (
    SelectionResult,
    SelectionRule,
    cv_select,
    oracle_select,
    parse_rule,
    repeated_cv_select,
    reverse_cv_select,
)

log = logging.getLogger(__name__)

RECORD_COLUMNS = [
    "model", "rho", "alpha", "n", "p", "estimator", "rule", "rep",
    "selected_lambda", "sq_frobenius_error", "sq_operator_error",
    "wall_time_ms", "data_digest", "status", "reason",
]

SUMMARY_COLUMNS = [
    "model", "rho", "alpha", "n", "p", "estimator", "rule", "K",
    "mse_frobenius", "se_frobenius", "mse_operator", "se_operator", "mean_lambda",
]

CELL_COLUMNS = ["model", "rho", "alpha", "n", "p", "estimator"]


def select_lambda(rule: SelectionRule, spec: EstimatorSpec, x, rng: RngStream,
                  truth=None) -> SelectionResult:
    """Run one selection rule on one dataset."""
    if rule.kind == "oracle":
        if truth is None:
            raise ValueError("oracle selection requires the true covariance")
        return oracle_select(spec, empirical_cov(x), truth, rule.norm)
    if rule.kind == "cv":
        return cv_select(spec, x, rule, rng)
    if rule.kind == "reverse_cv":
        return reverse_cv_select(spec, x, rule, rng)
    if rule.kind == "repeated_cv":
        return repeated_cv_select(spec, x, rule, rng)
    if rule.kind == "boot_frobenius":
        return boot_frobenius_select(spec, x, rule.n_boot, rng)
    if rule.kind == "sure":
        return sure_select(spec, x)
    return boot_operator_select(spec, x, rule.n_boot, rng)


@dataclass(frozen=True)
class ModelSetting:
    """A covariance model without the dimension, which each (n, p) size binds."""

    model_id: int
    rho: float
    alpha: float = float("nan")

    def spec(self, p: int) -> ModelSpec:
        return ModelSpec(self.model_id, p, self.rho, self.alpha)


@dataclass(frozen=True)
class TrialRecord:
    model: int
    rho: float
    alpha: float
    n: int
    p: int
    estimator: str
    rule: str
    rep: int
    selected_lambda: float
    sq_frobenius_error: float
    sq_operator_error: float
    wall_time_ms: float
    data_digest: str
    status: str = "ok"
    reason: str = ""


@dataclass(frozen=True)
class StudyConfig:
    """Axes of a comparison study plus run controls.

    Rules are given by name (``cv10_f``, ``recv3_op``, ``rcv2_f``,
    ``oracle_op``, ``boot_f``, ``sure``, ``boot_op``); every (rule, family)
    pair must be admissible, e.g. ``sure``/``boot_op`` pair only with banding
    and tapering.
    """

    models: tuple[ModelSetting, ...]
    sizes: tuple[tuple[int, int], ...]
    families: tuple[str, ...]
    rules: tuple[str, ...]
    replications: int
    base_seed: int = 0
    n_boot: int = 200
    threads: int = 1

    def __post_init__(self):
        if self.replications < 1:
            raise ValueError("need at least 1 replication")
        if not (self.models and self.sizes and self.families and self.rules):
            raise ValueError("models, sizes, families and rules must all be non-empty")
        for name in self.rules:
            rule = parse_rule(name, n_boot=self.n_boot)
            if rule.kind in ("sure", "boot_operator"):
                bad = [f for f in self.families if f not in LINEAR_FAMILIES]
                if bad:
                    raise ValueError(
                        f"rule {name!r} requires banding/tapering but the study includes {bad}"
                    )

    def parsed_rules(self) -> list[SelectionRule]:
        return [parse_rule(name, n_boot=self.n_boot) for name in self.rules]

    @staticmethod
    def from_ini(path) -> "StudyConfig":
        cp = configparser.ConfigParser()
        read = cp.read(path)
        if not read:
            raise ValueError(f"cannot read study config {path!r}")
        try:
            study = cp["study"]
            models = []
            for _, value in cp.items("models"):
                parts = value.replace(",", " ").split()
                mid = int(parts[0])
                rho = float(parts[1])
                alpha = float(parts[2]) if len(parts) > 2 else float("nan")
                models.append(ModelSetting(mid, rho, alpha))
            sizes = []
            for _, value in cp.items("sizes"):
                n_str, p_str = value.replace(",", " ").split()
                sizes.append((int(n_str), int(p_str)))
            families = tuple(cp.get("estimators", "families").replace(",", " ").split())
            rules = tuple(cp.get("rules", "names").replace(",", " ").split())
        except (KeyError, configparser.NoSectionError, configparser.NoOptionError, IndexError) as exc:
            raise ValueError(f"malformed study config {path!r}: {exc}") from exc
        return StudyConfig(
            models=tuple(models),
            sizes=tuple(sizes),
            families=families,
            rules=rules,
            replications=study.getint("replications"),
            base_seed=study.getint("base_seed", 0),
            n_boot=study.getint("bootstrap_samples", 200),
            threads=study.getint("threads", 1),
        )

    def to_ini(self) -> str:
        cp = configparser.ConfigParser()
        cp["study"] = {
            "replications": str(self.replications),
            "base_seed": str(self.base_seed),
            "bootstrap_samples": str(self.n_boot),
            "threads": str(self.threads),
        }
        cp["models"] = {
            f"m{i + 1}": f"{m.model_id} {m.rho} {m.alpha}" for i, m in enumerate(self.models)
        }
        cp["sizes"] = {f"s{i + 1}": f"{n} {p}" for i, (n, p) in enumerate(self.sizes)}
        cp["estimators"] = {"families": " ".join(self.families)}
        cp["rules"] = {"names": " ".join(self.rules)}
        buf = StringIO()
        cp.write(buf)
        return buf.getvalue()


def _dataset_digest(x) -> str:
    return hashlib.sha256(np.ascontiguousarray(x).tobytes()).hexdigest()[:16]


def _replication_records(config: StudyConfig, mi: int, si: int, rep: int) -> list[TrialRecord]:
    from .models import generate_trial

    n, p = config.sizes[si]
    setting = config.models[mi]
    stream = RngStream(config.base_seed).child(mi, si, rep)
    x, sigma = generate_trial(setting.spec(p), n, stream.child(0))
    digest = _dataset_digest(x)
    rules = config.parsed_rules()
    records = []
    common = dict(
        model=setting.model_id, rho=setting.rho, alpha=setting.alpha,
        n=n, p=p, rep=rep, data_digest=digest,
    )
    for family in config.families:
        spec = make_spec(family, x=x)
        estimates = apply_grid(spec, empirical_cov(x))
        for ri, rule in enumerate(rules):
            t0 = time.perf_counter()
            try:
                result = select_lambda(rule, spec, x, stream.child(1 + ri), truth=sigma)
                diff = estimates[result.index] - sigma
                rec = TrialRecord(
                    estimator=family, rule=rule.name,
                    selected_lambda=result.selected,
                    sq_frobenius_error=float(np.sum(diff * diff)),
                    sq_operator_error=operator_norm(diff) ** 2,
                    wall_time_ms=(time.perf_counter() - t0) * 1000.0,
                    **common,
                )
            except Exception as exc:  # noqa: BLE001 - a failed trial must not kill the study
                log.warning("trial failed (model=%s n=%d p=%d %s %s rep=%d): %s",
                            setting.model_id, n, p, family, rule.name, rep, exc)
                rec = TrialRecord(
                    estimator=family, rule=rule.name,
                    selected_lambda=float("nan"),
                    sq_frobenius_error=float("nan"),
                    sq_operator_error=float("nan"),
                    wall_time_ms=(time.perf_counter() - t0) * 1000.0,
                    status="failed", reason=str(exc),
                    **common,
                )
            records.append(rec)
    return records


_BLAS_LIMITER = None


def _single_threaded_blas():
    # worker processes each pin BLAS to one thread; letting every worker spawn
    # a full BLAS pool oversubscribes the cores and slows the batched solves
    global _BLAS_LIMITER
    try:
        from threadpoolctl import threadpool_limits
    except ImportError:  # pragma: no cover - acceptable, just slower
        return
    _BLAS_LIMITER = threadpool_limits(limits=1)


def _task(args):
    return _replication_records(*args)


def run_study(config: StudyConfig, progress=None) -> pd.DataFrame:
    """Run the full study and return the trial records as a DataFrame.

    Record content is independent of the thread count; rows come out in the
    deterministic (model, size, replication, family, rule) order.
    """
    tasks = [
        (config, mi, si, rep)
        for mi in range(len(config.models))
        for si in range(len(config.sizes))
        for rep in range(config.replications)
    ]
    records: list[TrialRecord] = []
    if config.threads > 1:
        with ProcessPoolExecutor(max_workers=config.threads,
                                 initializer=_single_threaded_blas) as pool:
            for i, chunk in enumerate(pool.map(_task, tasks, chunksize=1)):
                records.extend(chunk)
                if progress:
                    progress(i + 1, len(tasks))
    else:
        for i, task in enumerate(tasks):
            records.extend(_task(task))
            if progress:
                progress(i + 1, len(tasks))
    frame = pd.DataFrame([vars(r) for r in records], columns=RECORD_COLUMNS)
    return frame


def summarize(records: pd.DataFrame, trim: float = 0.0) -> pd.DataFrame:
    """Per-cell mean squared errors with Monte Carlo standard errors.

    ``trim`` drops that fraction of the largest error values per cell and
    norm before averaging.  The default 0 keeps every record; trimming
    diverges from the plain-MSE definition and is for presentation only.
    """
    if not 0.0 <= trim < 0.5:
        raise ValueError("trim fraction must be in [0, 0.5)")
    if records.empty:
        return pd.DataFrame(columns=SUMMARY_COLUMNS)
    rows = []
    keys = CELL_COLUMNS + ["rule"]
    for key, group in records.groupby(keys, dropna=False, sort=True):
        ok = group[group["status"] == "ok"]
        row = dict(zip(keys, key))
        row["K"] = len(ok)
        for norm, col in (("frobenius", "sq_frobenius_error"), ("operator", "sq_operator_error")):
            vals = np.sort(ok[col].to_numpy(dtype=float))
            if trim > 0 and vals.size > 1:
                vals = vals[: max(1, int(np.ceil(vals.size * (1.0 - trim))))]
            row[f"mse_{norm}"] = float(vals.mean()) if vals.size else float("nan")
            row[f"se_{norm}"] = (
                float(vals.std(ddof=1) / np.sqrt(vals.size)) if vals.size > 1 else float("nan")
            )
        row["mean_lambda"] = float(ok["selected_lambda"].mean()) if len(ok) else float("nan")
        rows.append(row)
    return pd.DataFrame(rows, columns=SUMMARY_COLUMNS)


def rule_rankings(summary: pd.DataFrame) -> pd.DataFrame:
    """Rank rules within each cell by MSE (1 = lowest; ties share a rank)."""
    if summary.empty:
        cols = CELL_COLUMNS + ["rule", "mse_frobenius", "rank_frobenius",
                               "mse_operator", "rank_operator"]
        return pd.DataFrame(columns=cols)
    out = summary.copy()
    by_cell = out.groupby(CELL_COLUMNS, dropna=False, sort=True)
    out["rank_frobenius"] = by_cell["mse_frobenius"].rank(method="min").astype(int)
    out["rank_operator"] = by_cell["mse_operator"].rank(method="min").astype(int)
    cols = CELL_COLUMNS + ["rule", "mse_frobenius", "rank_frobenius",
                           "mse_operator", "rank_operator"]
    return out[cols]


def write_records(records: pd.DataFrame, path) -> None:
    records.to_csv(path, index=False, na_rep="NA")


def read_records(path) -> pd.DataFrame:
    frame = pd.read_csv(path, keep_default_na=False, na_values=["NA"])
    missing = [c for c in RECORD_COLUMNS if c not in frame.columns]
    if missing:
        raise ValueError(f"records file {path!r} is missing columns {missing}")
    frame["reason"] = frame["reason"].astype(str).replace("nan", "")
    return frame


def write_summary(summary: pd.DataFrame, path) -> None:
    summary.to_csv(path, index=False, na_rep="NA")
