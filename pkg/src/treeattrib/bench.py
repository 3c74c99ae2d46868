"""Benchmark studies comparing the two attribution methods.

Two protocols are implemented.  The local correlation study trains one model
on the full dataset, computes per-instance Shapley and CFC scores for every
row, and reports the per-feature correlation between the two local score
vectors, together with an importance filter that keeps the smallest
top-ranked feature set covering a fraction of the total global importance.

The subset predictive-power study holds out a test split, trains a full
model, then draws random feature subsets (cardinality uniform on {0..d},
members uniform), retrains the same model kind on each subset's columns, and
correlates the retrained test loss with the summed full-model importance of
the included features, separately for Shapley and CFC scores.

Determinism: everything derives from ``StudyConfig.seed`` via SeedSequence
splitting (one stream for subset draws, one spawned child per retraining
task), so reports are byte-identical for a fixed config regardless of the
worker thread count.  Retrained subset models reuse the full model's
hyperparameters verbatim; the report config echoes this.
"""

from __future__ import annotations

import json
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field, replace

import numpy as np

from .attribution import (
    AttributionResult,
    FeatureSubset,
    cfc_ensemble,
    global_importance,
    shap_ensemble,
)
from .dataset import Dataset
from .errors import StudyError, TrainingError
from .model import predict_ensemble
from .train import (
    TrainConfig,
    fit_gbt,
    fit_random_forest,
    forest_defaults,
    train_test_split,
)

MODEL_FOREST = "forest"
MODEL_BOOSTED = "boosted"

LOG_LOSS = "log-loss"
ONE_MINUS_F1 = "one-minus-f1"

PROB_CLIP = 1e-15


@dataclass(frozen=True)
class StudyConfig:
    """Knobs shared by both studies; unused fields are ignored per study."""

    seed: int = 0
    model_kind: str = MODEL_FOREST
    train_config: TrainConfig = field(default_factory=forest_defaults)
    test_fraction: float = 0.3
    n_subsets: int = 1000
    filter_fraction: float = 0.8
    loss: str = LOG_LOSS

    def __post_init__(self):
        if self.model_kind not in (MODEL_FOREST, MODEL_BOOSTED):
            raise ValueError(f"unknown model_kind {self.model_kind!r}")
        if not 0.0 < self.filter_fraction <= 1.0:
            raise ValueError("filter_fraction must be in (0, 1]")
        if self.n_subsets < 1:
            raise ValueError("n_subsets must be >= 1")
        if not 0.0 < self.test_fraction < 1.0:
            raise ValueError("test_fraction must be in (0, 1)")
        if self.loss not in (LOG_LOSS, ONE_MINUS_F1):
            raise ValueError(f"unknown loss {self.loss!r}")


@dataclass(frozen=True)
class FeatureRow:
    feature: str
    pearson_r: float
    r_squared: float
    r_undefined: bool
    global_shap: float
    global_cfc: float
    kept_by_filter: bool


@dataclass(frozen=True)
class StudyLevel:
    corr_shap_loss: float
    corr_cfc_loss: float
    corr_shap_undefined: bool
    corr_cfc_undefined: bool
    loss: str | None
    n_subsets: int | None
    n_skipped: int | None
    config: dict


@dataclass(frozen=True)
class CorrelationReport:
    dataset: str
    per_feature: tuple[FeatureRow, ...]
    study_level: StudyLevel


@dataclass(frozen=True)
class SubsetSample:
    subset: FeatureSubset
    cardinality: int
    retrained_loss: float
    total_importance_shap: float
    total_importance_cfc: float


def pearson_r(u, v) -> float:
    """Sample Pearson correlation; nan when undefined.

    Undefined means fewer than two points or a zero-variance input.  Exactly
    identical (or exactly opposite) inputs short-circuit to +-1.0, and the
    general case is clamped into [-1, 1].
    """
    u = np.asarray(u, dtype=np.float64)
    v = np.asarray(v, dtype=np.float64)
    if u.shape != v.shape or u.ndim != 1:
        raise ValueError(f"length mismatch: {u.shape} vs {v.shape}")
    if u.size < 2:
        return float("nan")
    if np.all(u == u[0]) or np.all(v == v[0]):
        return float("nan")
    if np.array_equal(u, v):
        return 1.0
    if np.array_equal(u, -v):
        return -1.0
    du = u - np.mean(u)
    dv = v - np.mean(v)
    r = float(np.dot(du, dv) / math.sqrt(np.dot(du, du) * np.dot(dv, dv)))
    return max(-1.0, min(1.0, r))


def log_loss(y_true, p_pred) -> float:
    """Cross entropy with probabilities clipped to [1e-15, 1 - 1e-15]."""
    y = np.asarray(y_true, dtype=np.float64)
    p = np.asarray(p_pred, dtype=np.float64)
    if y.shape != p.shape:
        raise ValueError(f"length mismatch: {y.shape} vs {p.shape}")
    p = np.clip(p, PROB_CLIP, 1.0 - PROB_CLIP)
    return float(-np.mean(y * np.log(p) + (1.0 - y) * np.log(1.0 - p)))


def f1_score(y_true, y_pred_binary) -> float:
    """2TP / (2TP + FP + FN); 0.0 when the denominator is 0."""
    y = np.asarray(y_true, dtype=np.int64)
    yp = np.asarray(y_pred_binary, dtype=np.int64)
    if y.shape != yp.shape:
        raise ValueError(f"length mismatch: {y.shape} vs {yp.shape}")
    tp = int(np.sum((y == 1) & (yp == 1)))
    fp = int(np.sum((y == 0) & (yp == 1)))
    fn = int(np.sum((y == 1) & (yp == 0)))
    denom = 2 * tp + fp + fn
    return 0.0 if denom == 0 else 2.0 * tp / denom


def sample_feature_subset(d: int, rng: np.random.Generator) -> FeatureSubset:
    """Two-stage subset draw: cardinality k uniform on {0..d}, then k
    distinct features uniform; the empty and full subsets are legal."""
    if d < 1:
        raise ValueError("d must be >= 1")
    k = int(rng.integers(0, d + 1))
    mask = 0
    if k:
        for i in rng.choice(d, size=k, replace=False):
            mask |= 1 << int(i)
    return mask


def _loss_of(loss_kind: str, y_true, p_pred) -> float:
    if loss_kind == LOG_LOSS:
        return log_loss(y_true, p_pred)
    return 1.0 - f1_score(y_true, np.asarray(p_pred) >= 0.5)


def _fit(kind: str, ds: Dataset, config: TrainConfig, n_threads: int = 1):
    if kind == MODEL_FOREST:
        return fit_random_forest(ds, config, n_threads=n_threads)
    return fit_gbt(ds, config)


def _config_echo(config: StudyConfig, note: str | None = None) -> dict:
    tc = config.train_config
    echo = {
        "study_seed": config.seed,
        "model_kind": config.model_kind,
        "test_fraction": config.test_fraction,
        "n_subsets": config.n_subsets,
        "filter_fraction": config.filter_fraction,
        "loss": config.loss,
        "n_trees": tc.n_trees,
        "max_depth": tc.max_depth,
        "min_samples_split": tc.min_samples_split,
        "min_samples_leaf": tc.min_samples_leaf,
        "max_features": tc.max_features,
        "learning_rate": tc.learning_rate,
        "train_seed": tc.seed,
    }
    if note is not None:
        echo["note"] = note
    return echo


def kept_by_importance(global_scores, filter_fraction: float) -> list[int]:
    """Minimal prefix of features, ranked by score descending (ties by
    index), whose scores sum to at least filter_fraction of the total."""
    g = np.asarray(global_scores, dtype=np.float64)
    order = sorted(range(g.size), key=lambda j: (-g[j], j))
    total = 0.0
    for j in order:
        total += g[j]
    threshold = filter_fraction * total
    kept = []
    cum = 0.0
    for j in order:
        if cum >= threshold:
            break
        kept.append(j)
        cum += g[j]
    return kept


def local_correlation_study(ds: Dataset, config: StudyConfig,
                            n_threads: int = 1) -> CorrelationReport:
    """Per-feature correlation between local Shapley and CFC scores.

    Trains the configured model on the full dataset, attributes every row
    with both methods, and reports Pearson r / R-squared per feature plus the
    global importance filter.  Rows are ordered by global Shapley importance
    descending.
    """
    model = _fit(config.model_kind, ds, config.train_config, n_threads)
    shap_res = shap_ensemble(model, ds.X)
    cfc_res = cfc_ensemble(model, ds.X)
    g_shap = global_importance(shap_res)
    g_cfc = global_importance(cfc_res)
    kept = set(kept_by_importance(g_shap, config.filter_fraction))
    order = sorted(range(ds.d), key=lambda j: (-g_shap[j], j))
    rows = []
    for j in order:
        r = pearson_r(shap_res.phi[:, j], cfc_res.phi[:, j])
        undefined = math.isnan(r)
        rows.append(FeatureRow(
            feature=ds.feature_names[j],
            pearson_r=r,
            r_squared=r * r,
            r_undefined=undefined,
            global_shap=float(g_shap[j]),
            global_cfc=float(g_cfc[j]),
            kept_by_filter=j in kept,
        ))
    study = StudyLevel(
        corr_shap_loss=float("nan"), corr_cfc_loss=float("nan"),
        corr_shap_undefined=True, corr_cfc_undefined=True,
        loss=None, n_subsets=None, n_skipped=None,
        config=_config_echo(config),
    )
    return CorrelationReport(dataset=ds.name, per_feature=tuple(rows),
                             study_level=study)


def collect_subset_samples(ds: Dataset, config: StudyConfig,
                           n_threads: int = 1):
    """Run the retraining loop of the subset study.

    Returns (samples, n_skipped): one SubsetSample per non-skipped subset in
    draw order.  Subsets whose retraining fails are skipped and counted.
    """
    train, test = train_test_split(ds, config.test_fraction, config.seed)
    full_model = _fit(config.model_kind, train, config.train_config, n_threads)
    g_shap = global_importance(shap_ensemble(full_model, test.X))
    g_cfc = global_importance(cfc_ensemble(full_model, test.X))

    master = np.random.SeedSequence(config.seed)
    subset_ss, retrain_ss = master.spawn(2)
    rng = np.random.default_rng(subset_ss)
    masks = [sample_feature_subset(ds.d, rng) for _ in range(config.n_subsets)]
    children = retrain_ss.spawn(config.n_subsets)
    prevalence = float(np.mean(train.y))

    def evaluate(i: int):
        mask = masks[i]
        indices = [j for j in range(ds.d) if (mask >> j) & 1]
        if not indices:
            p = np.full(test.n, prevalence)
        else:
            seed = int(children[i].generate_state(1, np.uint64)[0])
            cfg = replace(config.train_config, seed=seed)
            try:
                model = _fit(config.model_kind, train.subset_columns(indices), cfg)
            except TrainingError:
                return None
            p = predict_ensemble(model, test.subset_columns(indices).X)
        return SubsetSample(
            subset=mask,
            cardinality=len(indices),
            retrained_loss=_loss_of(config.loss, test.y, p),
            total_importance_shap=float(sum(g_shap[j] for j in indices)),
            total_importance_cfc=float(sum(g_cfc[j] for j in indices)),
        )

    if n_threads > 1:
        with ThreadPoolExecutor(max_workers=n_threads) as pool:
            results = list(pool.map(evaluate, range(config.n_subsets)))
    else:
        results = [evaluate(i) for i in range(config.n_subsets)]
    samples = [s for s in results if s is not None]
    return samples, config.n_subsets - len(samples)


def subset_power_study(ds: Dataset, config: StudyConfig,
                       n_threads: int = 1) -> CorrelationReport:
    """Correlate retrained-model test loss with summed full-model importance
    over random feature subsets, for both attribution methods."""
    samples, n_skipped = collect_subset_samples(ds, config, n_threads)
    if n_skipped > 0.1 * config.n_subsets:
        raise StudyError(
            f"{n_skipped} of {config.n_subsets} subset retrainings failed"
        )
    losses = [s.retrained_loss for s in samples]
    corr_shap = pearson_r([s.total_importance_shap for s in samples], losses)
    corr_cfc = pearson_r([s.total_importance_cfc for s in samples], losses)
    study = StudyLevel(
        corr_shap_loss=corr_shap, corr_cfc_loss=corr_cfc,
        corr_shap_undefined=math.isnan(corr_shap),
        corr_cfc_undefined=math.isnan(corr_cfc),
        loss=config.loss, n_subsets=config.n_subsets, n_skipped=n_skipped,
        config=_config_echo(
            config,
            note="retrained subset models reuse the full-model hyperparameters",
        ),
    )
    return CorrelationReport(dataset=ds.name, per_feature=(),
                             study_level=study)


FORMAT_DELIMITED = "delimited"
FORMAT_STRUCTURED = "structured"

_FEATURE_COLUMNS = ("feature", "pearson_r", "r_squared", "r_undefined",
                    "global_shap", "global_cfc", "kept_by_filter")


def _cell(value) -> str:
    if value is None:
        return "none"
    if isinstance(value, bool):
        return "true" if value else "false"
    if isinstance(value, float):
        return repr(value)
    return str(value)


def write_report(report: CorrelationReport, path, format: str = FORMAT_STRUCTURED) -> None:
    """Serialize a report with deterministic field ordering.

    The structured form is JSON mirroring the report fields (undefined
    correlations appear as NaN next to their boolean flags).  The delimited
    form is a tab-separated table, one row per feature, followed by a
    '#'-prefixed study-level footer block.
    """
    if format == FORMAT_STRUCTURED:
        doc = {
            "dataset": report.dataset,
            "per_feature": [
                {c: getattr(row, c) for c in _FEATURE_COLUMNS}
                for row in report.per_feature
            ],
            "study_level": {
                "corr_shap_loss": report.study_level.corr_shap_loss,
                "corr_cfc_loss": report.study_level.corr_cfc_loss,
                "corr_shap_undefined": report.study_level.corr_shap_undefined,
                "corr_cfc_undefined": report.study_level.corr_cfc_undefined,
                "loss": report.study_level.loss,
                "n_subsets": report.study_level.n_subsets,
                "n_skipped": report.study_level.n_skipped,
                "config": report.study_level.config,
            },
        }
        with open(path, "w", encoding="utf-8") as fh:
            json.dump(doc, fh, indent=2)
            fh.write("\n")
        return
    if format != FORMAT_DELIMITED:
        raise ValueError(f"unknown report format {format!r}")
    lines = [f"# dataset: {report.dataset}", "\t".join(_FEATURE_COLUMNS)]
    for row in report.per_feature:
        lines.append("\t".join(_cell(getattr(row, c)) for c in _FEATURE_COLUMNS))
    sl = report.study_level
    lines.append("# study_level")
    lines.append(f"# corr_shap_loss: {_cell(sl.corr_shap_loss)}")
    lines.append(f"# corr_shap_undefined: {_cell(sl.corr_shap_undefined)}")
    lines.append(f"# corr_cfc_loss: {_cell(sl.corr_cfc_loss)}")
    lines.append(f"# corr_cfc_undefined: {_cell(sl.corr_cfc_undefined)}")
    lines.append(f"# loss: {_cell(sl.loss)}")
    lines.append(f"# n_subsets: {_cell(sl.n_subsets)}")
    lines.append(f"# n_skipped: {_cell(sl.n_skipped)}")
    for key, value in sl.config.items():
        lines.append(f"# config.{key}: {_cell(value)}")
    with open(path, "w", encoding="utf-8") as fh:
        fh.write("\n".join(lines) + "\n")


def read_report(path) -> CorrelationReport:
    """Read back a structured-format report."""
    with open(path, "r", encoding="utf-8") as fh:
        doc = json.load(fh)
    rows = tuple(
        FeatureRow(**{c: row[c] for c in _FEATURE_COLUMNS})
        for row in doc["per_feature"]
    )
    sl = doc["study_level"]
    study = StudyLevel(
        corr_shap_loss=sl["corr_shap_loss"], corr_cfc_loss=sl["corr_cfc_loss"],
        corr_shap_undefined=sl["corr_shap_undefined"],
        corr_cfc_undefined=sl["corr_cfc_undefined"],
        loss=sl["loss"], n_subsets=sl["n_subsets"], n_skipped=sl["n_skipped"],
        config=sl["config"],
    )
    return CorrelationReport(dataset=doc["dataset"], per_feature=rows,
                             study_level=study)


def _eq(a, b) -> bool:
    if isinstance(a, float) and isinstance(b, float):
        return (math.isnan(a) and math.isnan(b)) or a == b
    return a == b


def reports_equal(a: CorrelationReport, b: CorrelationReport) -> bool:
    """Field-by-field equality treating NaN as equal to NaN."""
    if a.dataset != b.dataset or len(a.per_feature) != len(b.per_feature):
        return False
    for ra, rb in zip(a.per_feature, b.per_feature):
        if not all(_eq(getattr(ra, c), getattr(rb, c)) for c in _FEATURE_COLUMNS):
            return False
    sa, sb = a.study_level, b.study_level
    scalar = ("corr_shap_loss", "corr_cfc_loss", "corr_shap_undefined",
              "corr_cfc_undefined", "loss", "n_subsets", "n_skipped")
    if not all(_eq(getattr(sa, c), getattr(sb, c)) for c in scalar):
        return False
    return sa.config == sb.config
