# vim: set ts=4 sts=0 sw=4 si fenc=utf-8 et:
# vim: set fdm=marker fmr={{{,}}} fdl=0 foldcolumn=4:
# Authors:     BP
# =========================================
"""
reading exported query logs (JSONL, one job per line) into QueryRecords,
with the filters from the training recipe:
    - trivial DDL (CREATE/ALTER/DROP without an embedded SELECT)
    - jobs that hit the execution timeout
    - anomalous execution records (training only)
    - empty query text

supplementary workload metadata (accounts, resources, asset catalogs) is
expected to be joined onto each line before it gets here.
"""

# ---- dependencies {{{
import json
import math
from dataclasses import asdict, dataclass, field
from datetime import datetime

from loguru import logger

from slotcast.errors import IoError, MalformedRecord
from slotcast.sql_analyzer import clean_query, is_ddl_only

# }}}

CATEGORICALS = ("project_id", "dataset_id", "region", "asset_type")
OPTIONAL_COUNTS = (
    "total_bytes_processed",
    "total_bytes_billed",
    "account_count",
    "resource_count",
    "accounts_aws",
    "accounts_gcp",
    "accounts_azure",
    "total_slot_ms",
    "elapsed_ms",
)
DROP_REASONS = ("ddl", "timeout", "anomalous", "empty", "malformed")


# --- types --- {{{
@dataclass
class QueryRecord:
    query_text: str
    project_id: str | None = None
    dataset_id: str | None = None
    region: str | None = None
    asset_type: str | None = None
    cache_hit: bool = False
    total_bytes_processed: int | None = None
    total_bytes_billed: int | None = None
    account_count: int | None = None
    resource_count: int | None = None
    accounts_aws: int | None = None
    accounts_gcp: int | None = None
    accounts_azure: int | None = None
    asset_type_counts: dict = field(default_factory=dict)
    creation_time: datetime | None = None
    environment: str | None = None
    total_slot_ms: int | None = None
    elapsed_ms: int | None = None
    timed_out: bool = False
    job_id: str | None = None

    @property
    def slot_min(self):
        if self.total_slot_ms is None:
            return None
        return self.total_slot_ms / 60000

    def to_dict(self):
        out = asdict(self)
        if self.creation_time is not None:
            out["creation_time"] = self.creation_time.isoformat()
        return out

    @classmethod
    def from_dict(cls, data, lineno=0):
        """validate one decoded line; anything off raises MalformedRecord"""
        if not isinstance(data, dict):
            raise MalformedRecord(lineno, "line is not a JSON object")
        known = set(cls.__dataclass_fields__)
        kwargs = {k: v for k, v in data.items() if k in known}
        text = kwargs.get("query_text")
        if text is None:
            text = ""
        if not isinstance(text, str):
            raise MalformedRecord(lineno, "query_text must be a string")
        kwargs["query_text"] = text
        for name in CATEGORICALS + ("environment", "job_id"):
            value = kwargs.get(name)
            if value is not None and not isinstance(value, str):
                kwargs[name] = str(value)
        for name in ("cache_hit", "timed_out"):
            value = kwargs.get(name, False)
            if value is None:
                value = False
            if not isinstance(value, bool):
                raise MalformedRecord(lineno, f"{name} must be true/false")
            kwargs[name] = value
        for name in OPTIONAL_COUNTS:
            value = kwargs.get(name)
            if value is None:
                continue
            if isinstance(value, bool) or not isinstance(value, (int, float)):
                raise MalformedRecord(lineno, f"{name} must be an integer")
            if isinstance(value, float) and not math.isfinite(value):
                raise MalformedRecord(lineno, f"{name} is not finite")
            if value != int(value):
                raise MalformedRecord(lineno, f"{name} must be an integer")
            value = int(value)
            # negative slot_ms is an anomalous record, not a malformed one
            if value < 0 and name != "total_slot_ms":
                raise MalformedRecord(lineno, f"{name} must be non-negative")
            kwargs[name] = value
        counts = kwargs.get("asset_type_counts") or {}
        if not isinstance(counts, dict):
            raise MalformedRecord(lineno, "asset_type_counts must be an object")
        clean = {}
        for key, value in counts.items():
            if isinstance(value, bool) or not isinstance(value, (int, float)):
                raise MalformedRecord(lineno, f"asset_type_counts[{key}] must be a count")
            if (isinstance(value, float) and not math.isfinite(value)) or value < 0:
                raise MalformedRecord(lineno, f"asset_type_counts[{key}] must be a count")
            clean[str(key)] = int(value)
        kwargs["asset_type_counts"] = clean
        stamp = kwargs.get("creation_time")
        if stamp is not None:
            try:
                kwargs["creation_time"] = datetime.fromisoformat(str(stamp))
            except ValueError as err:
                raise MalformedRecord(lineno, f"bad creation_time {stamp!r}") from err
        return cls(**kwargs)


@dataclass
class IngestStats:
    read: int = 0
    kept: int = 0
    dropped: dict = field(default_factory=lambda: dict.fromkeys(DROP_REASONS, 0))

    @property
    def balanced(self):
        return self.read == self.kept + sum(self.dropped.values())

    def to_dict(self):
        return {"read": self.read, "kept": self.kept, "dropped": dict(self.dropped)}


# }}}


# --- support methods --- {{{
def drop_reason(record, training=True):
    """None when the record survives the filters"""
    if not record.query_text.strip():
        return "empty"
    cleaned = clean_query(record.query_text)
    if not cleaned.tokens:
        return "empty"
    if is_ddl_only(cleaned):
        return "ddl"
    if record.timed_out:
        return "timeout"
    if training:
        if record.total_slot_ms is None or record.total_slot_ms < 0:
            return "anomalous"
        if record.elapsed_ms == 0 and record.total_slot_ms > 0:
            return "anomalous"
    return None


def read_lines(path):
    """raw bytes per line, each one decoded on its own by the caller"""
    try:
        with open(path, "rb") as f:
            return f.readlines()
    except OSError as err:
        raise IoError(f"cannot read {path}: {err}") from err


def ingest(path, fmt="jsonl", training=True):
    """
    order-preserving; malformed lines are logged by line number,
    counted, and skipped
    """
    assert fmt == "jsonl", f"unsupported ingest format {fmt}"
    stats = IngestStats()
    records = []
    for lineno, raw in enumerate(read_lines(path), start=1):
        if not raw.strip():
            continue
        stats.read += 1
        try:
            try:
                line = raw.decode("utf-8")
            except UnicodeDecodeError as err:
                raise MalformedRecord(lineno, f"not utf-8 ({err.reason} at byte {err.start})") from err
            try:
                data = json.loads(line)
            except (ValueError, RecursionError) as err:
                raise MalformedRecord(lineno, f"invalid JSON ({getattr(err, 'msg', err)})") from err
            record = QueryRecord.from_dict(data, lineno=lineno)
        except MalformedRecord as err:
            logger.warning(f"skipping malformed record, {err}")
            stats.dropped["malformed"] += 1
            continue
        reason = drop_reason(record, training=training)
        if reason:
            stats.dropped[reason] += 1
            continue
        if record.job_id is None:
            record.job_id = str(lineno)
        records.append(record)
        stats.kept += 1
    assert stats.balanced
    logger.info(
        f"ingested {path}: read {stats.read}, kept {stats.kept}, dropped {stats.dropped}"
    )
    return records, stats


def write_jsonl(records, path):
    try:
        with open(path, "w", encoding="utf-8") as f:
            for record in records:
                f.write(json.dumps(record.to_dict(), sort_keys=True) + "\n")
    except OSError as err:
        raise IoError(f"cannot write {path}: {err}") from err
    return len(records)


# }}}

# done.
