# vim: set ts=4 sts=0 sw=4 si fenc=utf-8 et:
# vim: set fdm=marker fmr={{{,}}} fdl=0 foldcolumn=4:
# Authors:     BP
# =========================================
"""
QueryRecords -> one dense matrix, four blocks side by side:

    text_svd_*  tf-idf over cleaned tokens (1-2 grams), randomized SVD
    num_*       complexity score + cardinalities, standardized
    vol_*       log1p of bytes and bytes-per-entity ratios
    cat_*       one-hot categoricals (top-N + OTHER), provider flags, cache hit
    miss_*      1 where an optional numeric field was imputed

every statistic comes out of `fit`; `transform` only reads the state.
"""

# ---- dependencies {{{
from collections import Counter
from dataclasses import dataclass, field
from functools import cached_property

import numpy as np
import scipy.sparse as sp
from loguru import logger
from sklearn.impute import MissingIndicator, SimpleImputer
from sklearn.preprocessing import OneHotEncoder, StandardScaler
from sklearn.utils.extmath import randomized_svd

from slotcast.errors import (
    DegenerateInput,
    DimensionMismatch,
    EmptyCorpus,
    StateNotFitted,
)
from slotcast.sql_analyzer import clean_query

# }}}

IMPUTED = (
    "total_bytes_processed",
    "total_bytes_billed",
    "account_count",
    "resource_count",
    "accounts_aws",
    "accounts_gcp",
    "accounts_azure",
)
SCALED = (
    "account_count",
    "resource_count",
    "accounts_aws",
    "accounts_gcp",
    "accounts_azure",
)
ONEHOT = ("project_id", "dataset_id", "asset_type", "region")
PROVIDERS = ("aws", "gcp", "azure")
RANK_TOL = 1e-10


# --- text: tf-idf --- {{{
@dataclass
class TextVectorizerState:
    vocabulary: dict
    doc_freq: np.ndarray
    idf: np.ndarray
    n_docs: int

    @property
    def terms(self):
        out = [None] * len(self.vocabulary)
        for term, col in self.vocabulary.items():
            out[col] = term
        return out

    def __len__(self):
        return len(self.vocabulary)


def text_terms(q):
    """unigrams and bigrams over the non-punctuation tokens"""
    words = [tok.value for tok in q.tokens if tok.kind != "punctuation"]
    return words + [f"{a} {b}" for a, b in zip(words, words[1:])]


def fit_text(corpus, min_df=2, max_vocab=50000):
    if len(corpus) == 0:
        raise EmptyCorpus("cannot fit a vocabulary on zero documents")
    df = Counter()
    for q in corpus:
        df.update(set(text_terms(q)))
    kept = [(term, n) for term, n in df.items() if n >= min_df]
    kept.sort(key=lambda tn: (-tn[1], tn[0]))
    kept = sorted(kept[:max_vocab])
    vocabulary = {term: col for col, (term, _) in enumerate(kept)}
    doc_freq = np.array([n for _, n in kept], dtype=np.float64)
    n_docs = len(corpus)
    idf = np.log((1.0 + n_docs) / (1.0 + doc_freq)) + 1.0
    return TextVectorizerState(
        vocabulary=vocabulary, doc_freq=doc_freq, idf=idf, n_docs=n_docs
    )


def transform_text_rows(state, queries):
    """raw counts x idf, rows L2-normalized, as CSR"""
    indptr, indices, data = [0], [], []
    for q in queries:
        tf = Counter(
            state.vocabulary[t] for t in text_terms(q) if t in state.vocabulary
        )
        cols = np.array(sorted(tf), dtype=np.int64)
        vals = np.array([tf[c] for c in cols], dtype=np.float64)
        if cols.size:
            vals = vals * state.idf[cols]
            norm = np.sqrt(np.dot(vals, vals))
            vals = vals / norm
        indices.append(cols)
        data.append(vals)
        indptr.append(indptr[-1] + cols.size)
    indices = np.concatenate(indices) if indices else np.zeros(0, dtype=np.int64)
    data = np.concatenate(data) if data else np.zeros(0)
    return sp.csr_matrix(
        (data, indices, np.array(indptr)), shape=(len(queries), len(state))
    )


def transform_text(state, q):
    return transform_text_rows(state, [q])


# }}}


# --- text: truncated SVD --- {{{
@dataclass
class SvdBasis:
    components: np.ndarray  # k x V, orthonormal rows
    singular_values: np.ndarray

    @property
    def rank(self):
        return self.components.shape[0]

    def explained_variance(self, rows):
        """mean squared projection of `rows` on each component"""
        return np.asarray((project_text(self, rows) ** 2).mean(axis=0)).ravel()


def fit_svd(tfidf_rows, k, oversamples=10, power_iterations=4, seed=0):
    """
    Randomized range finder with QR between the power steps, then an exact
    SVD of the small projected matrix (sklearn's randomized_svd). Two local
    conventions on top: numerically null directions are dropped, so a rank-1
    matrix gives one component however large `k` is, and the largest-magnitude
    entry of each component is positive.
    """
    X = sp.csr_matrix(tfidf_rows, dtype=np.float64)
    n_rows, vocab = X.shape
    if n_rows < 2:
        raise DegenerateInput(f"need at least 2 rows for an SVD basis, got {n_rows}")
    if k < 1:
        raise ValueError(f"k must be >= 1, got {k}")
    target = min(k, n_rows - 1, vocab)
    if target < 1:
        raise DegenerateInput("empty vocabulary, nothing to decompose")
    _, s, vt = randomized_svd(
        X,
        target,
        n_oversamples=oversamples,
        n_iter=power_iterations,
        power_iteration_normalizer="QR",
        flip_sign=False,
        random_state=seed,
    )
    if s.size == 0 or s[0] <= 0:
        keep = 0
    else:
        keep = int(np.sum(s > s[0] * RANK_TOL))
    s, vt = np.array(s[:keep]), np.array(vt[:keep])
    if keep:
        pivots = np.argmax(np.abs(vt), axis=1)
        signs = np.sign(vt[np.arange(keep), pivots])
        vt *= signs[:, None]
    return SvdBasis(components=vt, singular_values=s)


def project_text(basis, v):
    """components . v; one row in -> 1-D out, n rows in -> n x k out"""
    n_cols = basis.components.shape[1]
    if sp.issparse(v):
        if v.shape[1] != n_cols:
            raise DimensionMismatch(f"vector has {v.shape[1]} terms, basis {n_cols}")
        out = np.asarray(v @ basis.components.T)
        return out.ravel() if v.shape[0] == 1 else out
    v = np.asarray(v, dtype=np.float64)
    if v.shape[-1] != n_cols:
        raise DimensionMismatch(f"vector has {v.shape[-1]} terms, basis {n_cols}")
    return v @ basis.components.T


def text_energy_share(basis, rows):
    """share of the rows' squared norm the basis keeps"""
    total = rows.multiply(rows).sum() / rows.shape[0]
    return float(basis.explained_variance(rows).sum() / total) if total > 0 else 0.0


# }}}


# --- numerics + categoricals --- {{{
@dataclass
class NumericScalerState:
    """the fitted StandardScaler, kept as plain arrays so the bundle can carry it"""

    names: list
    mean: np.ndarray
    std: np.ndarray

    @cached_property
    def estimator(self):
        scaler = StandardScaler()
        scaler.mean_ = np.asarray(self.mean, dtype=np.float64)
        scaler.scale_ = np.asarray(self.std, dtype=np.float64)
        scaler.var_ = scaler.scale_**2
        scaler.n_features_in_ = scaler.mean_.size
        scaler.n_samples_seen_ = 0
        return scaler

    def apply(self, block):
        return self.estimator.transform(block)


def fit_scaler(names, block):
    # zero-variance columns come back with scale 1
    scaler = StandardScaler().fit(block)
    return NumericScalerState(names=list(names), mean=scaler.mean_, std=scaler.scale_)


def top_values(values, top_n):
    """descending frequency, ties lexicographic, missing values skipped"""
    freq = Counter(v for v in values if v is not None and v != "")
    ranked = sorted(freq.items(), key=lambda kv: (-kv[1], kv[0]))
    return [v for v, _ in ranked[:top_n]]


@dataclass
class FeaturizerState:
    text: TextVectorizerState
    svd: SvdBasis | None
    scaler: NumericScalerState
    category_maps: dict  # field -> retained values, OTHER implicit
    asset_keys: list
    medians: dict
    column_names: list = field(default_factory=list)

    @property
    def n_columns(self):
        return len(self.column_names)

    @cached_property
    def imputer(self):
        return median_imputer(self.medians)

    @cached_property
    def encoders(self):
        return {name: category_encoder(self.category_maps[name]) for name in ONEHOT}


def column_layout(svd_rank, asset_keys, category_maps):
    names = [f"text_svd_{i}" for i in range(svd_rank)]
    names += ["num_complexity_score"] + [f"num_{f}" for f in SCALED]
    names += [f"num_asset_{key}" for key in asset_keys]
    names += [
        "vol_log_bytes_processed",
        "vol_log_bytes_billed",
        "vol_log_bytes_per_account",
        "vol_log_bytes_per_resource",
    ]
    for name in ONEHOT:
        names += [f"cat_{name}={v}" for v in category_maps[name]]
        names.append(f"cat_{name}=OTHER")
    names += [f"cat_provider_{p}" for p in PROVIDERS]
    names.append("cat_cache_hit")
    names += [f"miss_{f}" for f in IMPUTED]
    return names


def raw_optional_block(records):
    """the optional numerics with NaN where a record left them out"""
    return np.array(
        [[np.nan if getattr(r, name) is None else float(getattr(r, name)) for name in IMPUTED] for r in records],
        dtype=np.float64,
    ).reshape(len(records), len(IMPUTED))


def fit_medians(records):
    # all-missing columns impute to 0
    imputer = SimpleImputer(strategy="median", keep_empty_features=True)
    imputer.fit(raw_optional_block(records))
    return {name: float(v) for name, v in zip(IMPUTED, imputer.statistics_)}


def median_imputer(medians):
    # a one-row fit restores the stored medians exactly
    row = np.array([[medians[name] for name in IMPUTED]], dtype=np.float64)
    return SimpleImputer(strategy="median").fit(row)


def imputed_block(records, imputer):
    """(values, missing) for the optional numerics, medians filled in"""
    raw = raw_optional_block(records)
    # every miss_ column exists whether or not fit saw a gap in it
    missing = MissingIndicator(features="all").fit_transform(raw).astype(np.float64)
    return imputer.transform(raw), missing


def raw_numeric_block(records, reports, imputed, asset_keys):
    idx = {name: j for j, name in enumerate(IMPUTED)}
    cols = [np.array([float(rep.score) for rep in reports])]
    cols += [imputed[:, idx[name]] for name in SCALED]
    for key in asset_keys:
        cols.append(np.array([float(r.asset_type_counts.get(key, 0)) for r in records]))
    return np.column_stack(cols)


def safe_ratio(num, den):
    out = np.zeros_like(num)
    np.divide(num, den, out=out, where=den > 0)
    return out


def volume_block(imputed):
    idx = {name: j for j, name in enumerate(IMPUTED)}
    processed = imputed[:, idx["total_bytes_processed"]]
    billed = imputed[:, idx["total_bytes_billed"]]
    per_account = safe_ratio(processed, imputed[:, idx["account_count"]])
    per_resource = safe_ratio(processed, imputed[:, idx["resource_count"]])
    return np.log1p(np.column_stack([processed, billed, per_account, per_resource]))


def category_encoder(retained):
    """one-hot over the retained values; anything else encodes to all zeros"""
    if not retained:
        return None
    cats = np.array(retained, dtype=object)
    encoder = OneHotEncoder(categories=[cats], handle_unknown="ignore", sparse_output=False)
    return encoder.fit(cats.reshape(-1, 1))


def onehot_block(records, encoders):
    cols = []
    for name in ONEHOT:
        encoder = encoders[name]
        values = np.array([getattr(r, name) or "" for r in records], dtype=object).reshape(-1, 1)
        known = encoder.transform(values) if encoder is not None else np.zeros((len(records), 0))
        other = 1.0 - known.sum(axis=1, keepdims=True)
        cols += [known, other]
    flags = np.zeros((len(records), len(PROVIDERS) + 1))
    for i, r in enumerate(records):
        for j, p in enumerate(PROVIDERS):
            flags[i, j] = 1.0 if (getattr(r, f"accounts_{p}") or 0) > 0 else 0.0
        flags[i, -1] = 1.0 if r.cache_hit else 0.0
    cols.append(flags)
    return np.hstack(cols)


# }}}


# --- the fused matrix --- {{{
@dataclass
class FeatureMatrix:
    rows: np.ndarray
    column_names: list

    @property
    def shape(self):
        return self.rows.shape

    def __len__(self):
        return self.rows.shape[0]

    def block(self, prefix):
        keep = [j for j, name in enumerate(self.column_names) if name.startswith(prefix)]
        return self.rows[:, keep]


def fit_features(records, reports, config, cleaned=None):
    if len(records) == 0:
        raise EmptyCorpus("no training records to fit the featurizer on")
    assert len(records) == len(reports), "one ComplexityReport per record"
    cleaned = cleaned or [clean_query(r.query_text) for r in records]

    text = fit_text(cleaned, min_df=config["min_df"], max_vocab=config["max_vocab"])
    svd = None
    if len(text) and len(records) >= 2:
        tfidf = transform_text_rows(text, cleaned)
        svd = fit_svd(
            tfidf,
            k=config["svd_components"],
            oversamples=config["svd_oversamples"],
            power_iterations=config["svd_power_iterations"],
            seed=config["seed"],
        )
        share = text_energy_share(svd, tfidf)
    medians = fit_medians(records)
    key_freq = Counter(k for r in records for k in r.asset_type_counts)
    asset_keys = [
        k for k, _ in sorted(key_freq.items(), key=lambda kv: (-kv[1], kv[0]))
    ][: config["top_n_asset_types"]]
    imputed, _ = imputed_block(records, median_imputer(medians))
    raw = raw_numeric_block(records, reports, imputed, asset_keys)
    names = ["complexity_score"] + list(SCALED) + [f"asset_{k}" for k in asset_keys]
    scaler = fit_scaler(names, raw)
    category_maps = {
        name: top_values([getattr(r, name) for r in records], config["top_n_categories"])
        for name in ONEHOT
    }
    rank = svd.rank if svd is not None else 0
    if svd is not None:
        logger.info(f"svd keeps {rank} components, {share:.1%} of the tf-idf energy")
    state = FeaturizerState(
        text=text,
        svd=svd,
        scaler=scaler,
        category_maps=category_maps,
        asset_keys=asset_keys,
        medians=medians,
        column_names=column_layout(rank, asset_keys, category_maps),
    )
    logger.info(
        f"featurizer fit on {len(records)} records: vocabulary {len(text)}, "
        f"svd rank {rank}, {state.n_columns} columns"
    )
    return state


def transform_features(state, records, reports, cleaned=None):
    if state is None or not state.column_names:
        raise StateNotFitted("featurizer state has not been fitted")
    assert len(records) == len(reports), "one ComplexityReport per record"
    n = len(records)
    if n == 0:
        return FeatureMatrix(rows=np.zeros((0, state.n_columns)), column_names=list(state.column_names))
    cleaned = cleaned or [clean_query(r.query_text) for r in records]
    if state.svd is not None and state.svd.rank:
        text_block = project_text(state.svd, transform_text_rows(state.text, cleaned))
        text_block = np.asarray(text_block).reshape(n, state.svd.rank)
    else:
        text_block = np.zeros((n, 0))
    imputed, missing = imputed_block(records, state.imputer)
    numeric = state.scaler.apply(
        raw_numeric_block(records, reports, imputed, state.asset_keys)
    )
    rows = np.hstack(
        [
            text_block,
            numeric,
            volume_block(imputed),
            onehot_block(records, state.encoders),
            missing,
        ]
    )
    assert rows.shape[1] == state.n_columns, "column layout drifted from fit"
    assert np.all(np.isfinite(rows)), "non-finite feature value"
    return FeatureMatrix(rows=rows, column_names=list(state.column_names))


def fit_transform_features(records, reports, config, cleaned=None):
    cleaned = cleaned or [clean_query(r.query_text) for r in records]
    state = fit_features(records, reports, config, cleaned=cleaned)
    return state, transform_features(state, records, reports, cleaned=cleaned)


# }}}

# done.
