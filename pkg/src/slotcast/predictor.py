# vim: set ts=4 sts=0 sw=4 si fenc=utf-8 et:
# vim: set fdm=marker fmr={{{,}}} fdl=0 foldcolumn=4:
# Authors:     BP
# =========================================
"""
training and inference end to end.

    record -> clean + complexity score -> route (simple below the
    threshold, complex at or above) -> shared featurizer -> that route's
    forest -> expm1, clamped at 0

a route with too few training records is served by a unified forest
fitted on everything; the bundle records which routes fell back.
"""

# ---- dependencies {{{
from dataclasses import dataclass
from datetime import datetime, timezone

import numpy as np
from loguru import logger

from slotcast import gbrt
from slotcast.bundle import (
    FORMAT_VERSION,
    ModelBundle,
    Router,
    load_bundle,
    save_bundle,
)
from slotcast.errors import BundleVersionMismatch, NegativeTarget, TooFewSamples
from slotcast.featurizer import fit_transform_features, transform_features
from slotcast.sql_analyzer import OperatorWeights, clean_query, complexity_score

# }}}

ROUTES = ("simple", "complex")

__all__ = [
    "ModelBundle",
    "PredictionResult",
    "Router",
    "inverse_target",
    "load_bundle",
    "predict",
    "predict_many",
    "save_bundle",
    "train",
    "transform_target",
]


# --- target transform --- {{{
def transform_target(slot_min):
    y = np.asarray(slot_min, dtype=np.float64)
    if np.any(y < 0):
        raise NegativeTarget("slot-minutes cannot be negative")
    out = np.log1p(y)
    return float(out) if out.ndim == 0 else out


def inverse_target(z):
    out = np.maximum(np.expm1(np.asarray(z, dtype=np.float64)), 0.0)
    return float(out) if out.ndim == 0 else out


# }}}


@dataclass(frozen=True)
class PredictionResult:
    slot_min: float
    route: str
    complexity_score: int
    log_space_value: float

    def to_dict(self):
        return {
            "slot_min": self.slot_min,
            "route": self.route,
            "complexity_score": self.complexity_score,
            "log_space_value": self.log_space_value,
        }


# --- training --- {{{
def scored(records, weights):
    cleaned = [clean_query(r.query_text) for r in records]
    reports = [complexity_score(q, weights) for q in cleaned]
    return cleaned, reports


def train(records, config, created_at=None, unified=False):
    """
    `unified=True` (or `routing: false` in config) skips routing and fits
    a single forest on everything.
    """
    msl = int(config["min_samples_leaf"])
    if len(records) < 2 * msl:
        raise TooFewSamples(f"need at least {2 * msl} training records, got {len(records)}")
    weights = OperatorWeights.from_config(config)
    router = Router(threshold=int(config["route_threshold"]), min_subset=int(config["min_subset"]))
    cleaned, reports = scored(records, weights)
    state, features = fit_transform_features(records, reports, config, cleaned=cleaned)
    targets = transform_target([r.slot_min for r in records])
    routes = np.array([router.route(rep.score) for rep in reports])

    forests, route_model, fallback = {}, {}, {}
    routing = bool(config["routing"]) and not unified
    enough = max(router.min_subset, 2 * msl)
    counts = {route: int(np.sum(routes == route)) for route in ROUTES}
    for route in ROUTES:
        if routing and counts[route] >= enough:
            logger.info(f"fitting {route} forest on {counts[route]} records")
            rows = np.nonzero(routes == route)[0]
            forests[route] = gbrt.fit(features.rows[rows], targets[rows], config)
            route_model[route] = route
            fallback[route] = False
        else:
            if routing:
                logger.warning(
                    f"{route} route has {counts[route]} records (< {enough}), "
                    f"falling back to the unified forest"
                )
            route_model[route] = "unified"
            fallback[route] = routing
    if "unified" in route_model.values():
        logger.info(f"fitting unified forest on {len(records)} records")
        forests["unified"] = gbrt.fit(features.rows, targets, config)

    slot = np.array([r.slot_min for r in records], dtype=np.float64)
    created_at = created_at or datetime.now(timezone.utc).isoformat(timespec="seconds")
    metadata = {
        "architecture": "dual" if routing else "unified",
        "n_records": len(records),
        "route_counts": counts,
        "fallback": fallback,
        "seed": int(config["seed"]),
        "created_at": created_at,
        "train_slot_min_mean": float(slot.mean()),
        "train_slot_min_median": float(np.median(slot)),
        "config": {k: config[k] for k in sorted(config)},
    }
    return ModelBundle(
        featurizer=state,
        router=router,
        forests=forests,
        route_model=route_model,
        weights=dict(weights.weights),
        metadata=metadata,
    )


# }}}


# --- inference --- {{{
def check_version(bundle):
    if bundle.format_version > FORMAT_VERSION:
        raise BundleVersionMismatch(
            f"bundle format version {bundle.format_version}, this build reads up to {FORMAT_VERSION}"
        )


def predict_many(bundle, records):
    check_version(bundle)
    if not records:
        return []
    cleaned, reports = scored(records, OperatorWeights(weights=dict(bundle.weights)))
    rows = transform_features(bundle.featurizer, records, reports, cleaned=cleaned).rows
    routes = [bundle.router.route(rep.score) for rep in reports]
    z = np.zeros(len(records))
    for route in ROUTES:
        at = [i for i, r in enumerate(routes) if r == route]
        if at:
            z[at] = bundle.forest_for(route).predict(rows[at])
    slot = inverse_target(z)
    return [
        PredictionResult(
            slot_min=float(slot[i]),
            route=routes[i],
            complexity_score=reports[i].score,
            log_space_value=float(z[i]),
        )
        for i in range(len(records))
    ]


def predict(bundle, record):
    return predict_many(bundle, [record])[0]


# }}}

# done.
