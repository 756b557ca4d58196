# vim: set ts=4 sts=0 sw=4 si fenc=utf-8 et:
# vim: set fdm=marker fmr={{{,}}} fdl=0 foldcolumn=4:
# Authors:     BP
# =========================================

# ---- dependencies {{{
import sys

import yaml
from loguru import logger

from slotcast.errors import InvalidConfig, IoError

# }}}

LOGFORMAT = "<green>{time:YYYY-MM-DD⋅at⋅HH:mm:ss}</green>⋅<level>{message}</level>"

# every key a config file may set, with its default.
# hand/defaults.yml mirrors this table.
DEFAULTS = {
    # complexity weights
    "weight_join": 3,
    "weight_cross_join": 5,
    "weight_group_by": 2,
    "weight_distinct": 2,
    "weight_order_by": 2,
    "weight_window": 3,
    "weight_regex_function": 4,
    "weight_sql_udf": 1,
    "weight_js_udf": 6,
    "weight_unnest": 2,
    "weight_merge": 4,
    "weight_update": 3,
    "weight_insert": 1,
    "weight_with_cte": 1,
    "weight_subselect": 2,
    "weight_array_struct": 1,
    "weight_having": 1,
    # featurizer
    "min_df": 2,
    "max_vocab": 50000,
    "svd_components": 512,
    "svd_oversamples": 10,
    "svd_power_iterations": 4,
    "top_n_categories": 20,
    "top_n_asset_types": 20,
    # gbrt
    "learning_rate": 0.07,
    "iterations": 300,
    "max_leaves": 31,
    "min_samples_leaf": 20,
    "l2": 0.0,
    "bins": 255,
    "binning_sample": 100000,
    # predictor
    "route_threshold": 26,
    "min_subset": 50,
    "routing": True,
    "seed": 0,
    # evaluator
    "tier_cost_significant": 0.01,
    "tier_long_tail": 20.0,
    "baseline_source": "train",
    # advise
    "warn_threshold": 10.0,
}


# --- support methods --- {{{
def setuplogging(logfile=None, level="INFO"):
    """one stderr sink, plus a file sink when asked for one"""
    logger.remove()
    logger.add(sys.stderr, format=LOGFORMAT, level=level)
    if logfile:
        logger.add(logfile, colorize=True, format=LOGFORMAT, level=level)
    return 1


def read_yaml(fname):
    try:
        with open(fname, "r") as f:
            out = yaml.safe_load(f)
    except OSError as err:
        raise IoError(f"cannot read {fname}: {err}") from err
    except yaml.YAMLError as err:
        raise InvalidConfig(f"{fname} is not valid yaml: {err}") from err
    return out if out is not None else {}


def coerce(key, value, default):
    """match the type of the default; bools first since bool is an int"""
    try:
        if isinstance(default, bool):
            if isinstance(value, str):
                lowered = value.strip().lower()
                if lowered not in ("true", "false", "yes", "no", "1", "0"):
                    raise ValueError(value)
                return lowered in ("true", "yes", "1")
            return bool(value)
        if isinstance(default, int):
            as_float = float(value)
            if as_float != int(as_float):
                raise ValueError(value)
            return int(as_float)
        if isinstance(default, float):
            return float(value)
        return str(value)
    except (TypeError, ValueError) as err:
        raise InvalidConfig(f"`{key}` cannot be {value!r}") from err


def merge_config(overrides, defaults=None):
    defaults = DEFAULTS if defaults is None else defaults
    unknown = sorted(set(overrides) - set(defaults))
    if unknown:
        raise InvalidConfig(f"unknown config keys: {', '.join(unknown)}")
    merged = dict(defaults)
    for key, value in overrides.items():
        if isinstance(value, (dict, list)):
            raise InvalidConfig(f"`{key}` must be a flat value, found {type(value).__name__}")
        merged[key] = coerce(key, value, defaults[key])
    return merged


def load_config(path=None, **overrides):
    """defaults <- config file <- keyword overrides (flags)"""
    fromfile = {}
    if path:
        fromfile = read_yaml(path)
        if not isinstance(fromfile, dict):
            raise InvalidConfig(f"{path} must hold a flat key: value mapping")
    config = merge_config(fromfile)
    given = {k: v for k, v in overrides.items() if v is not None}
    return merge_config(given, defaults=config)


# }}}

# done.
