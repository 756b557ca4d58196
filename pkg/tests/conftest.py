# vim: set ts=4 sts=0 sw=4 si fenc=utf-8 et:
# vim: set fdm=marker fmr={{{,}}} fdl=0 foldcolumn=4:
# Authors:     BP
# =========================================

# ---- dependencies {{{
import numpy as np
import pytest

from slotcast.ingest import QueryRecord
from slotcast.synth import OracleCostModel, compose_query, score_of
from slotcast.util import DEFAULTS

# }}}

# small enough to keep unit tests quick, same routing rules as the defaults
FAST = dict(DEFAULTS, iterations=15, svd_components=16)


# --- support methods --- {{{
def make_record(rng, request, slot_min=None, **fields):
    sql, counts = compose_query(request, rng)
    bytes_processed = int(np.exp(rng.uniform(np.log(1e8), np.log(1e11))))
    if slot_min is None:
        slot_min = OracleCostModel().sample(bytes_processed, score_of(counts), False, rng)
    values = {
        "query_text": sql,
        "project_id": f"prj-{int(rng.integers(1, 4))}",
        "dataset_id": "security",
        "region": "us-east1",
        "asset_type": "compute_instance",
        "total_bytes_processed": bytes_processed,
        "total_bytes_billed": bytes_processed,
        "account_count": int(rng.integers(1, 500)),
        "resource_count": int(rng.integers(500, 5000)),
        "accounts_aws": int(rng.integers(0, 100)),
        "accounts_gcp": int(rng.integers(0, 100)),
        "accounts_azure": 0,
        "asset_type_counts": {"compute_instance": int(rng.integers(1, 50))},
        "environment": "medium-a",
        "total_slot_ms": int(round(slot_min * 60000)),
        "elapsed_ms": 1000,
    }
    values.update(fields)
    return QueryRecord(**values)


def simple_request(rng):
    """score at most 14"""
    return {
        "join": int(rng.integers(0, 3)),
        "group_by": int(rng.integers(0, 3)),
        "distinct": int(rng.integers(0, 3)),
    }


def complex_request(rng):
    """score at least 29"""
    return {
        "join": int(rng.integers(4, 6)),
        "window": 3,
        "regex_function": 2,
        "order_by": int(rng.integers(0, 3)),
    }


def routed_records(n_simple, n_complex, seed=0, **fields):
    rng = np.random.default_rng(seed)
    records = [make_record(rng, simple_request(rng), **fields) for _ in range(n_simple)]
    records += [make_record(rng, complex_request(rng), **fields) for _ in range(n_complex)]
    return records


# }}}


# --- fixtures --- {{{
@pytest.fixture
def fast_config():
    return dict(FAST)


@pytest.fixture(scope="session")
def mixed_records():
    return routed_records(120, 80, seed=3)


# }}}

# done.
