# vim: set ts=4 sts=0 sw=4 si fenc=utf-8 et:
# vim: set fdm=marker fmr={{{,}}} fdl=0 foldcolumn=4:
# Authors:     BP
# =========================================
"""
seeded synthetic workloads with a known cost.

every query is assembled from operator fragments, so the operator counts
that went into it are known exactly and the analyzer has to recover
them. slot-minutes come from a noisy oracle:

    slot = base * (bytes / 1e9)^alpha * (1 + beta * S) * (gamma if cache) * exp(eps)

three kinds of query get drawn: trivial (cache hits and metadata lookups,
always under 0.01 slot-min), regular, and a long tail of heavy scans.
"""

# ---- dependencies {{{
from dataclasses import dataclass, field
from datetime import datetime, timedelta

import numpy as np
from loguru import logger

from slotcast.errors import InvalidConfig, OverlappingEnvironments
from slotcast.ingest import QueryRecord
from slotcast.sql_analyzer import DEFAULT_WEIGHTS, KINDS
from slotcast.util import read_yaml

# }}}


# --- environment profiles --- {{{
@dataclass(frozen=True)
class EnvironmentProfile:
    name: str
    accounts: tuple  # (low, high), drawn log-uniform
    resources_per_account: tuple
    bytes_multiplier: float
    providers: tuple  # share of accounts on aws, gcp, azure
    regions: tuple


PROFILES = {
    p.name: p
    for p in (
        EnvironmentProfile("tiny-a", (1, 5), (20, 60), 0.5, (1.0, 0.0, 0.0), ("us-east1",)),
        EnvironmentProfile("tiny-b", (2, 10), (20, 80), 0.6, (0.0, 1.0, 0.0), ("europe-west1",)),
        EnvironmentProfile("small-a", (10, 40), (30, 100), 0.8, (0.7, 0.3, 0.0), ("us-east1", "us-west1")),
        EnvironmentProfile("small-b", (20, 80), (30, 120), 0.9, (0.5, 0.2, 0.3), ("us-central1",)),
        EnvironmentProfile("medium-a", (60, 250), (40, 150), 1.0, (0.6, 0.2, 0.2), ("us-east1", "europe-west1")),
        EnvironmentProfile("medium-b", (100, 400), (40, 150), 1.1, (0.4, 0.4, 0.2), ("us-central1", "asia-east1")),
        EnvironmentProfile("medium-c", (150, 600), (50, 160), 1.2, (0.5, 0.0, 0.5), ("europe-west1",)),
        EnvironmentProfile("large-a", (600, 3000), (60, 200), 1.6, (0.5, 0.3, 0.2), ("us-east1", "us-west1", "europe-west1")),
        EnvironmentProfile("large-b", (1000, 5000), (60, 200), 2.0, (0.4, 0.3, 0.3), ("us-central1", "asia-east1")),
    )
}

ASSET_TYPES = (
    "compute_instance",
    "storage_bucket",
    "iam_role",
    "network_interface",
    "database_instance",
    "k8s_cluster",
)
TABLES = (
    "assets",
    "findings",
    "billing_export",
    "resource_inventory",
    "iam_bindings",
    "network_flows",
    "audit_log",
    "cost_daily",
)
COLUMNS = (
    "account_id",
    "resource_id",
    "asset_id",
    "region_code",
    "cost_usd",
    "usage_hours",
    "severity",
    "status_code",
    "policy_name",
    "event_ts",
)
ARRAYS = ("tags", "labels", "findings_list", "permissions")

# mean operator counts of a regular query at intensity 1
OPERATOR_RATES = {
    "join": 1.2,
    "cross_join": 0.1,
    "group_by": 0.8,
    "distinct": 0.5,
    "order_by": 0.6,
    "window": 0.4,
    "regex_function": 0.3,
    "sql_udf": 0.15,
    "js_udf": 0.08,
    "unnest": 0.3,
    "merge": 0.03,
    "update": 0.05,
    "insert": 0.2,
    "with_cte": 0.6,
    "subselect": 0.7,
    "array_struct": 0.4,
    "having": 0.2,
}
# kinds the long-tail builder tops up with; none of them implies another
TAIL_KINDS = (
    "join",
    "cross_join",
    "group_by",
    "distinct",
    "order_by",
    "window",
    "regex_function",
    "unnest",
    "subselect",
    "array_struct",
    "having",
)
TAIL_SCORE = (50, 70)
TRIVIAL_MAX_SCORE = 4

# }}}


# --- config + oracle --- {{{
@dataclass(frozen=True)
class OracleCostModel:
    base: float = 0.05
    volume_exponent: float = 0.8
    complexity_slope: float = 0.02
    cache_multiplier: float = 1e-4
    sigma: float = 0.5

    def expected(self, bytes_processed, score, cache_hit):
        """noise-free slot-minutes; non-decreasing in bytes and score"""
        volume = (max(bytes_processed, 0) / 1e9) ** self.volume_exponent
        slot = self.base * volume * (1.0 + self.complexity_slope * score)
        if cache_hit:
            slot *= self.cache_multiplier
        return max(slot, 0.0)

    def sample(self, bytes_processed, score, cache_hit, rng):
        """lognormal noise, truncated at 4 sigma"""
        eps = float(np.clip(rng.normal(0.0, self.sigma), -4 * self.sigma, 4 * self.sigma))
        return self.expected(bytes_processed, score, cache_hit) * float(np.exp(eps))


@dataclass(frozen=True)
class WorkloadConfig:
    n_queries: int = 1000
    environments: tuple = tuple(PROFILES)
    trivial_fraction: float = 0.62
    long_tail_fraction: float = 0.03
    seed: int = 0
    oracle: OracleCostModel = field(default_factory=OracleCostModel)

    def __post_init__(self):
        if self.n_queries < 0:
            raise InvalidConfig(f"n_queries must be >= 0, got {self.n_queries}")
        if not self.environments:
            raise InvalidConfig("at least one environment is needed")
        unknown = [e for e in self.environments if e not in PROFILES]
        if unknown:
            raise InvalidConfig(f"unknown environments {unknown}, known: {sorted(PROFILES)}")
        for name in ("trivial_fraction", "long_tail_fraction"):
            value = getattr(self, name)
            if not 0.0 <= value <= 1.0:
                raise InvalidConfig(f"{name} must be in [0, 1], got {value}")
        if self.trivial_fraction + self.long_tail_fraction > 1.0 + 1e-12:
            raise InvalidConfig("trivial_fraction + long_tail_fraction must be <= 1")
        if self.oracle.sigma < 0:
            raise InvalidConfig("noise_sigma must be >= 0")


WORKLOAD_KEYS = {
    "n_queries": int,
    "environments": str,
    "trivial_fraction": float,
    "long_tail_fraction": float,
    "noise_sigma": float,
    "seed": int,
    "oracle_base": float,
    "oracle_volume_exponent": float,
    "oracle_complexity_slope": float,
    "oracle_cache_multiplier": float,
}


def workload_config(values):
    """flat mapping (as read from yaml) -> WorkloadConfig"""
    unknown = sorted(set(values) - set(WORKLOAD_KEYS))
    if unknown:
        raise InvalidConfig(f"unknown workload keys: {', '.join(unknown)}")
    clean = {}
    for key, value in values.items():
        if value is None:
            continue
        if key == "environments" and isinstance(value, (list, tuple)):
            clean[key] = tuple(str(v).strip() for v in value)
            continue
        try:
            clean[key] = WORKLOAD_KEYS[key](value)
        except (TypeError, ValueError) as err:
            raise InvalidConfig(f"`{key}` cannot be {value!r}") from err
        if key == "environments":
            clean[key] = tuple(e.strip() for e in clean[key].split(",") if e.strip())
    defaults = OracleCostModel()
    oracle = OracleCostModel(
        base=clean.pop("oracle_base", defaults.base),
        volume_exponent=clean.pop("oracle_volume_exponent", defaults.volume_exponent),
        complexity_slope=clean.pop("oracle_complexity_slope", defaults.complexity_slope),
        cache_multiplier=clean.pop("oracle_cache_multiplier", defaults.cache_multiplier),
        sigma=clean.pop("noise_sigma", defaults.sigma),
    )
    return WorkloadConfig(oracle=oracle, **clean)


def load_workload_config(path):
    values = read_yaml(path)
    if not isinstance(values, dict):
        raise InvalidConfig(f"{path} must hold a flat key: value mapping")
    return workload_config(values)


# }}}


# --- query composition --- {{{
def score_of(counts, weights=None):
    weights = weights or DEFAULT_WEIGHTS
    return sum(counts[k] * weights[k] for k in KINDS)


def pick(rng, options):
    return options[int(rng.integers(len(options)))]


def compose_query(request, rng, project="proj", dataset="ds"):
    """
    SQL text carrying exactly the returned operator counts.

    the returned counts can exceed the request where one operator implies
    others: every CTE body is a subselect, a MERGE carries an UPDATE and
    an INSERT, and HAVING is capped at one per GROUP BY.
    """
    want = {k: int(request.get(k, 0)) for k in KINDS}
    assert all(v >= 0 for v in want.values()), "operator counts must be >= 0"

    def table():
        return f"`{project}.{dataset}.{pick(rng, TABLES)}`"

    def col():
        return pick(rng, COLUMNS)

    n_blocks = max(1, want["group_by"])
    having = min(want["having"], want["group_by"])
    merges = want["merge"]
    extra_updates = max(0, want["update"] - merges)
    inserts = max(0, want["insert"] - merges)

    preamble = []
    udf_names = []
    for k in range(want["sql_udf"]):
        name = f"sql_fn_{k + 1}"
        udf_names.append(name)
        preamble.append(f"CREATE TEMP FUNCTION {name}(x FLOAT64) RETURNS FLOAT64 AS (x * {k + 2});")
    for k in range(want["js_udf"]):
        name = f"js_fn_{k + 1}"
        udf_names.append(name)
        preamble.append(
            f"CREATE TEMP FUNCTION {name}(x FLOAT64) RETURNS FLOAT64\n"
            f"LANGUAGE js AS \"return Math.log(1 + x) * {k + 1};\";"
        )

    # select-list items, dealt round-robin over the union blocks
    items = []
    for k in range(want["distinct"]):
        items.append(f"COUNT(DISTINCT t0.{col()}) AS distinct_{k}")
    for k in range(max(0, want["order_by"] - 1)):
        items.append(f"ARRAY_AGG(t0.{col()} ORDER BY t0.event_ts DESC LIMIT 1)[OFFSET(0)] AS latest_{k}")
    for k in range(want["window"]):
        items.append(f"SUM(t0.cost_usd) OVER (PARTITION BY t0.{col()}) AS running_{k}")
    for k in range(want["regex_function"]):
        items.append(f"REGEXP_CONTAINS(t0.policy_name, '^{pick(rng, ('allow', 'deny', 'audit'))}_') AS match_{k}")
    for k in range(want["array_struct"]):
        if k % 2:
            items.append(f"STRUCT(t0.{col()} AS first_value, t0.{col()} AS second_value) AS pair_{k}")
        else:
            items.append(f"ARRAY[t0.{col()}, t0.{col()}] AS pair_{k}")
    for k in range(want["subselect"]):
        items.append(f"(SELECT MAX(severity) FROM {table()}) AS worst_{k}")
    for k, name in enumerate(udf_names):
        items.append(f"{name}(t0.usage_hours) AS derived_{k}")

    joins = [
        f"JOIN {table()} AS j{k} ON j{k}.{c} = t0.{c}"
        for k, c in ((k, col()) for k in range(want["join"]))
    ]
    crosses = [f"CROSS JOIN {table()} AS x{k}" for k in range(want["cross_join"])]
    unnests = [f", UNNEST(t0.{pick(rng, ARRAYS)}) AS u{k}" for k in range(want["unnest"])]

    blocks = []
    for b in range(n_blocks):
        group_col = col()
        select = [f"t0.{group_col}"] + items[b::n_blocks]
        if want["group_by"]:
            select.append("COUNT(*) AS n_rows")
        lines = ["SELECT " + ",\n    ".join(select), f"FROM {table()} AS t0"]
        lines += joins[b::n_blocks] + crosses[b::n_blocks] + unnests[b::n_blocks]
        lines.append(f"WHERE t0.event_ts >= '2025-0{1 + b % 9}-01'")
        if want["group_by"]:
            lines.append(f"GROUP BY t0.{group_col}")
            if b < having:
                lines.append(f"HAVING COUNT(*) > {b + 1}")
        blocks.append("\n".join(lines))
    main = "\nUNION ALL\n".join(blocks)

    if want["with_cte"]:
        ctes = [
            f"cte_{k + 1} AS (\n  SELECT {col()}, {col()} FROM {table()} WHERE usage_hours > {k}\n)"
            for k in range(want["with_cte"])
        ]
        main = "WITH " + ",\n".join(ctes) + "\n" + main
    if inserts:
        main = f"INSERT INTO {table()} (account_id, cost_usd)\n" + main
    if want["order_by"]:
        main += "\nORDER BY 1"
    statements = preamble + [main + ";"]

    for k in range(merges):
        statements.append(
            f"MERGE {table()} AS tgt\nUSING {table()} AS src\nON tgt.resource_id = src.resource_id\n"
            f"WHEN MATCHED THEN UPDATE SET cost_usd = src.cost_usd\n"
            f"WHEN NOT MATCHED THEN INSERT (resource_id, cost_usd) VALUES (src.resource_id, src.cost_usd);"
        )
    for k in range(extra_updates):
        statements.append(f"UPDATE {table()} SET status_code = {k} WHERE severity > 3;")
    for k in range(max(0, inserts - 1)):
        statements.append(f"INSERT INTO {table()} (account_id) VALUES ('acct-{k}');")

    counts = dict(want)
    counts["having"] = having
    counts["subselect"] = want["subselect"] + want["with_cte"]
    counts["update"] = merges + extra_updates
    counts["insert"] = merges + inserts
    return "\n".join(statements), counts


def regular_request(rng):
    intensity = float(np.exp(rng.uniform(np.log(0.3), np.log(3.0))))
    request = {k: int(rng.poisson(rate * intensity)) for k, rate in OPERATOR_RATES.items()}
    request["having"] = min(request["having"], request["group_by"])
    return request


def tail_request(rng):
    """operators added one at a time until the score lands in TAIL_SCORE"""
    request = dict.fromkeys(KINDS, 0)
    target = int(rng.integers(TAIL_SCORE[0], TAIL_SCORE[1] + 1))
    rates = np.array([OPERATOR_RATES[k] for k in TAIL_KINDS])
    rates = rates / rates.sum()
    score = 0
    while score < target:
        kind = TAIL_KINDS[int(rng.choice(len(TAIL_KINDS), p=rates))]
        if kind == "having" and request["having"] >= request["group_by"]:
            continue
        weight = DEFAULT_WEIGHTS[kind]
        if score + weight > TAIL_SCORE[1]:
            kind, weight = "array_struct", DEFAULT_WEIGHTS["array_struct"]
        request[kind] += 1
        score += weight
    return request


def trivial_request(rng):
    request = dict.fromkeys(KINDS, 0)
    small = ("group_by", "distinct", "order_by", "join", "array_struct")
    score = 0
    for _ in range(int(rng.integers(0, 3))):
        kind = pick(rng, small)
        if score + DEFAULT_WEIGHTS[kind] <= TRIVIAL_MAX_SCORE:
            request[kind] += 1
            score += DEFAULT_WEIGHTS[kind]
    return request


# }}}


# --- generation --- {{{
@dataclass
class SyntheticWorkload:
    records: list
    counts: list
    expected_slot_min: list
    kinds: list

    def __len__(self):
        return len(self.records)


def loguniform(rng, low, high):
    return float(np.exp(rng.uniform(np.log(low), np.log(high))))


def tenant(profile, rng):
    accounts = max(1, int(round(loguniform(rng, *profile.accounts))))
    resources = max(accounts, int(round(accounts * loguniform(rng, *profile.resources_per_account))))
    split = {}
    for provider, share in zip(("aws", "gcp", "azure"), profile.providers):
        split[provider] = int(round(accounts * share))
    shares = rng.dirichlet(np.ones(len(ASSET_TYPES)))
    asset_counts = {
        name: int(round(resources * s)) for name, s in zip(ASSET_TYPES, shares) if round(resources * s) > 0
    }
    return accounts, resources, split, asset_counts


def synthesize(config):
    rng = np.random.default_rng(config.seed)
    oracle = config.oracle
    start = datetime(2025, 1, 1)
    records, counts, expected, kinds = [], [], [], []
    for i in range(config.n_queries):
        env = config.environments[i % len(config.environments)]
        profile = PROFILES[env]
        project = f"{env}-prj-{int(rng.integers(1, 4))}"
        dataset = pick(rng, ("security", "billing", "inventory"))

        u = rng.random()
        cache_hit = False
        if u < config.trivial_fraction:
            kind = "trivial"
            request = trivial_request(rng)
            cache_hit = bool(rng.random() < 0.5)
            high = 1e10 if cache_hit else 1e6
            bytes_processed = loguniform(rng, 1e3, high)
        elif u < config.trivial_fraction + config.long_tail_fraction:
            kind = "long_tail"
            request = tail_request(rng)
            bytes_processed = loguniform(rng, 4e12, 8e12)
        else:
            kind = "regular"
            request = regular_request(rng)
            bytes_processed = loguniform(rng, 1e8, 2e11)
        bytes_processed = int(round(bytes_processed * profile.bytes_multiplier))
        sql, emitted = compose_query(request, rng, project=project, dataset=dataset)
        score = score_of(emitted)
        slot_min = oracle.sample(bytes_processed, score, cache_hit, rng)
        slot_ms = int(round(slot_min * 60000))
        parallelism = loguniform(rng, 1.0, 50.0)
        accounts, resources, split, asset_counts = tenant(profile, rng)

        record = QueryRecord(
            query_text=sql,
            project_id=project,
            dataset_id=dataset,
            region=pick(rng, profile.regions),
            asset_type=pick(rng, ASSET_TYPES),
            cache_hit=cache_hit,
            total_bytes_processed=bytes_processed,
            total_bytes_billed=0 if cache_hit else max(bytes_processed, 10 * 2**20),
            account_count=accounts,
            resource_count=resources,
            accounts_aws=split["aws"],
            accounts_gcp=split["gcp"],
            accounts_azure=split["azure"],
            asset_type_counts=asset_counts,
            creation_time=start + timedelta(minutes=7 * i + int(rng.integers(0, 7))),
            environment=env,
            total_slot_ms=slot_ms,
            elapsed_ms=max(1, int(round(slot_ms / parallelism))),
            timed_out=False,
            job_id=f"job-{config.seed}-{i:06d}",
        )
        # a few tenants never reported their provider breakdown
        if rng.random() < 0.03:
            record.accounts_aws = record.accounts_gcp = record.accounts_azure = None
        records.append(record)
        counts.append(emitted)
        expected.append(oracle.expected(bytes_processed, score, cache_hit))
        kinds.append(kind)
    logger.info(
        f"synthesized {len(records)} queries over {len(config.environments)} environments "
        f"(trivial {kinds.count('trivial')}, regular {kinds.count('regular')}, long tail {kinds.count('long_tail')})"
    )
    return SyntheticWorkload(records=records, counts=counts, expected_slot_min=expected, kinds=kinds)


def generate(config):
    return synthesize(config).records


def split_by_environment(records, train_envs, test_envs):
    """an empty train list means every environment not held out for test"""
    train_envs, test_envs = set(train_envs or ()), set(test_envs or ())
    overlap = sorted(train_envs & test_envs)
    if overlap:
        raise OverlappingEnvironments(f"environments in both partitions: {overlap}")
    train, test = [], []
    for r in records:
        if r.environment in test_envs:
            test.append(r)
        elif not train_envs or r.environment in train_envs:
            train.append(r)
    return train, test


# }}}

# done.
