# vim: set ts=4 sts=0 sw=4 si fenc=utf-8 et:
# vim: set fdm=marker fmr={{{,}}} fdl=0 foldcolumn=4:
# Authors:     BP
# =========================================
"""
metrics in slot-minutes, tiered by actual slot-time, model vs. the
predict-mean and predict-median constants.

variances are population variances. a metric that cannot be computed
(zero actual variance, empty tier) is None, never NaN.
"""

# ---- dependencies {{{
import io
import math
from dataclasses import dataclass, field

import numpy as np
import pandas as pd
import yaml
from loguru import logger
from sklearn.metrics import explained_variance_score, mean_absolute_error, mean_squared_error

from slotcast.errors import EmptyInput, InvalidValues, LengthMismatch

# }}}

BASELINE_SOURCES = {"train": "train", "train-derived": "train", "test": "test", "test-derived": "test"}


# --- metrics --- {{{
@dataclass(frozen=True)
class MetricSet:
    mae: float
    rmse: float
    explained_variance: float | None
    variance_ratio: float | None

    def to_dict(self):
        return {
            "mae": self.mae,
            "rmse": self.rmse,
            "explained_variance": self.explained_variance,
            "variance_ratio": self.variance_ratio,
        }


def as_pair(actual, predicted):
    a = np.asarray(actual, dtype=np.float64).ravel()
    p = np.asarray(predicted, dtype=np.float64).ravel()
    if a.size != p.size:
        raise LengthMismatch(f"{a.size} actuals vs {p.size} predictions")
    return a, p


def metrics(actual, predicted):
    a, p = as_pair(actual, predicted)
    if a.size == 0:
        raise EmptyInput("metrics of an empty vector")
    if not (np.all(np.isfinite(a)) and np.all(np.isfinite(p))):
        raise InvalidValues("metrics need finite values")
    if np.any(a < 0):
        raise InvalidValues("actual slot-minutes cannot be negative")
    mae = float(mean_absolute_error(a, p))
    rmse = float(np.sqrt(mean_squared_error(a, p)))
    # rounding can put rmse a hair under mae when every |err| is equal
    rmse = max(rmse, mae)
    var_a = float(np.var(a))
    if var_a == 0:
        return MetricSet(mae=mae, rmse=rmse, explained_variance=None, variance_ratio=None)
    return MetricSet(
        mae=mae,
        rmse=rmse,
        explained_variance=float(explained_variance_score(a, p)),
        variance_ratio=float(np.var(p) / var_a),
    )


def within_2x(actual, predicted):
    """share of rows with max(a, p) <= 2 * min(a, p); a = p = 0 counts"""
    a, p = as_pair(actual, predicted)
    if a.size == 0:
        return None
    hit = np.maximum(a, p) <= 2.0 * np.minimum(a, p)
    return float(np.mean(hit))


def reduction(baseline_mae, model_mae):
    """(baseline - model) / baseline as a fraction"""
    if baseline_mae is None or model_mae is None or baseline_mae == 0:
        return None
    return float((baseline_mae - model_mae) / baseline_mae)


# }}}


# --- baselines + tiers --- {{{
@dataclass(frozen=True)
class Baselines:
    mean_value: float
    median_value: float
    source: str = "train"

    def to_dict(self):
        return {"mean_value": self.mean_value, "median_value": self.median_value, "source": self.source}


def baselines(train_actuals, test_actuals, mode="train"):
    source = BASELINE_SOURCES.get(mode)
    if source is None:
        raise ValueError(f"unknown baseline source {mode!r}")
    ref = train_actuals if source == "train" else test_actuals
    ref = np.asarray(ref if ref is not None else [], dtype=np.float64).ravel()
    if ref.size == 0:
        raise EmptyInput(f"no {source} actuals to derive baselines from")
    return Baselines(mean_value=float(np.mean(ref)), median_value=float(np.median(ref)), source=source)


@dataclass(frozen=True)
class TierSpec:
    name: str
    minimum: float = -math.inf

    def select(self, actual):
        return np.asarray(actual) >= self.minimum


def default_tiers(config=None):
    config = config or {}
    return [
        TierSpec("full"),
        TierSpec("cost_significant", float(config.get("tier_cost_significant", 0.01))),
        TierSpec("long_tail", float(config.get("tier_long_tail", 20.0))),
    ]


@dataclass
class TierResult:
    name: str
    minimum: float
    n: int
    model: MetricSet | None = None
    mean_baseline: MetricSet | None = None
    median_baseline: MetricSet | None = None
    reduction_vs_mean: float | None = None
    reduction_vs_median: float | None = None
    within_2x: float | None = None

    def to_dict(self):
        def maybe(ms):
            return ms.to_dict() if ms is not None else None

        return {
            "name": self.name,
            "minimum": self.minimum,
            "n": self.n,
            "model": maybe(self.model),
            "mean_baseline": maybe(self.mean_baseline),
            "median_baseline": maybe(self.median_baseline),
            "reduction_vs_mean": self.reduction_vs_mean,
            "reduction_vs_median": self.reduction_vs_median,
            "within_2x": self.within_2x,
        }


@dataclass
class EvalReport:
    tiers: list
    baselines: Baselines
    actual: np.ndarray = field(repr=False, default=None)
    predicted: np.ndarray = field(repr=False, default=None)
    ids: list = field(repr=False, default=None)

    def tier(self, name):
        for t in self.tiers:
            if t.name == name:
                return t
        raise KeyError(name)

    def to_dict(self):
        return {
            "baselines": self.baselines.to_dict(),
            "n_queries": int(self.actual.size) if self.actual is not None else 0,
            "tiers": [t.to_dict() for t in self.tiers],
        }


def tiered_eval(actual, predicted, tiers, baselines, ids=None):
    a, p = as_pair(actual, predicted)
    if not tiers:
        raise EmptyInput("no tiers to evaluate")
    ids = list(ids) if ids is not None else [str(i) for i in range(1, a.size + 1)]
    if len(ids) != a.size:
        raise LengthMismatch(f"{len(ids)} ids vs {a.size} rows")
    results = []
    for spec in tiers:
        mask = spec.select(a)
        n = int(mask.sum())
        result = TierResult(name=spec.name, minimum=float(spec.minimum), n=n)
        if n:
            sub = a[mask]
            result.model = metrics(sub, p[mask])
            result.mean_baseline = metrics(sub, np.full(n, baselines.mean_value))
            result.median_baseline = metrics(sub, np.full(n, baselines.median_value))
            result.reduction_vs_mean = reduction(result.mean_baseline.mae, result.model.mae)
            result.reduction_vs_median = reduction(result.median_baseline.mae, result.model.mae)
            result.within_2x = within_2x(sub, p[mask])
        logger.info(
            f"tier {spec.name}: n={n}"
            + (f", model mae {result.model.mae:.4f}, mean-baseline mae {result.mean_baseline.mae:.4f}" if n else "")
        )
        results.append(result)
    return EvalReport(tiers=results, baselines=baselines, actual=a, predicted=p, ids=ids)


# }}}


# --- output --- {{{
def cell(value, pct=False):
    if value is None:
        return "n/a"
    if pct:
        return f"{100 * value:.0f}%"
    return f"{value:.4f}"


def text_report(report):
    head = (
        f"{'tier':<28}{'N':>7}{'model MAE':>12}{'mean MAE':>12}{'median MAE':>12}"
        f"{'vs mean':>10}{'vs median':>11}{'EV':>9}{'within 2x':>11}"
    )
    lines = [
        f"baselines ({report.baselines.source}-derived): "
        f"mean {report.baselines.mean_value:.6f}, median {report.baselines.median_value:.6f}",
        "",
        head,
        "-" * len(head),
    ]
    for t in report.tiers:
        label = t.name if t.minimum == -math.inf else f"{t.name} (>={t.minimum:g})"
        lines.append(
            f"{label:<28}{t.n:>7}"
            f"{cell(t.model.mae if t.model else None):>12}"
            f"{cell(t.mean_baseline.mae if t.mean_baseline else None):>12}"
            f"{cell(t.median_baseline.mae if t.median_baseline else None):>12}"
            f"{cell(t.reduction_vs_mean, pct=True):>10}"
            f"{cell(t.reduction_vs_median, pct=True):>11}"
            f"{cell(t.model.explained_variance if t.model else None):>9}"
            f"{cell(t.within_2x, pct=True):>11}"
        )
    return "\n".join(lines) + "\n"


def plot_frame(report):
    return pd.DataFrame(
        {
            "id": report.ids,
            "actual": report.actual,
            "predicted": report.predicted,
            "residual": report.actual - report.predicted,
        }
    )


def emit_report(report, fmt="text"):
    if fmt == "text":
        return text_report(report).encode("utf-8")
    if fmt == "structured":
        return yaml.safe_dump(report.to_dict(), sort_keys=True).encode("utf-8")
    if fmt == "plotdata":
        buf = io.StringIO()
        plot_frame(report).to_csv(buf, index=False)
        return buf.getvalue().encode("utf-8")
    raise ValueError(f"unknown report format {fmt!r}")


def write_plot_parquet(report, path):
    plot_frame(report).to_parquet(path, engine="fastparquet", index=False)
    return path


# }}}

# done.
