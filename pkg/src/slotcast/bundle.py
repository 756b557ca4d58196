# vim: set ts=4 sts=0 sw=4 si fenc=utf-8 et:
# vim: set fdm=marker fmr={{{,}}} fdl=0 foldcolumn=4:
# Authors:     BP
# =========================================
"""
the trained artifact and its on-disk codec.

file layout, all integers little-endian:

    MAGIC
    u64 header length, then the header: utf-8 json, sorted keys
        (format_version, config, column layout, vocabulary, category maps,
         router, forest metadata, and the array manifest with a sha256
         per array)
    per array, in manifest order: u64 byte length, raw bytes
    32-byte sha256 over everything above

version is checked before the checksum so a newer file is reported
as such and not as corruption.
"""

# ---- dependencies {{{
import hashlib
import json
import struct
from dataclasses import dataclass, field

import numpy as np
from loguru import logger

from slotcast.errors import BundleVersionMismatch, CorruptBundle, IoError
from slotcast.featurizer import (
    FeaturizerState,
    NumericScalerState,
    SvdBasis,
    TextVectorizerState,
)
from slotcast.gbrt import Forest, Tree

# }}}

MAGIC = b"SLOTCAST-BUNDLE\n"
FORMAT_VERSION = 1
U64 = struct.Struct("<Q")
DIGEST_SIZE = 32
TREE_FIELDS = {
    "feature": "<i4",
    "bin": "<i4",
    "threshold": "<f8",
    "left": "<i4",
    "right": "<i4",
    "value": "<f8",
}


# --- the artifact --- {{{
@dataclass(frozen=True)
class Router:
    threshold: int = 26
    min_subset: int = 50

    def route(self, score):
        return "simple" if score < self.threshold else "complex"

    def to_dict(self):
        return {"threshold": self.threshold, "min_subset": self.min_subset}


@dataclass
class ModelBundle:
    featurizer: FeaturizerState
    router: Router
    forests: dict  # "simple" | "complex" | "unified" -> Forest
    route_model: dict  # route -> key into forests
    weights: dict
    metadata: dict = field(default_factory=dict)
    format_version: int = FORMAT_VERSION

    def forest_for(self, route):
        return self.forests[self.route_model[route]]

    @property
    def dual(self):
        return self.route_model["simple"] != self.route_model["complex"]


# }}}


# --- encoding --- {{{
def tree_arrays(forest):
    """all trees of a forest flattened per field, plus node offsets"""
    offsets = np.zeros(len(forest.trees) + 1, dtype="<i8")
    for i, tree in enumerate(forest.trees):
        offsets[i + 1] = offsets[i] + tree.n_nodes
    out = {"offsets": offsets}
    for name, dtype in TREE_FIELDS.items():
        parts = [getattr(tree, name) for tree in forest.trees]
        out[name] = (np.concatenate(parts) if parts else np.zeros(0)).astype(dtype)
    return out


def bundle_arrays(bundle):
    state = bundle.featurizer
    arrays = {
        "text_doc_freq": state.text.doc_freq,
        "text_idf": state.text.idf,
        "scaler_mean": state.scaler.mean,
        "scaler_std": state.scaler.std,
    }
    if state.svd is not None:
        arrays["svd_components"] = state.svd.components
        arrays["svd_singular_values"] = state.svd.singular_values
    for key in sorted(bundle.forests):
        for name, arr in tree_arrays(bundle.forests[key]).items():
            arrays[f"forest_{key}_{name}"] = arr
    out = {}
    for name, arr in arrays.items():
        arr = np.ascontiguousarray(arr)
        if arr.dtype.kind == "f":
            arr = arr.astype("<f8")
        out[name] = arr
    return out


def bundle_header(bundle, manifest, format_version):
    state = bundle.featurizer
    return {
        "format_version": format_version,
        "featurizer": {
            "vocabulary": state.text.terms,
            "n_docs": state.text.n_docs,
            "has_svd": state.svd is not None,
            "scaler_names": state.scaler.names,
            "category_maps": state.category_maps,
            "asset_keys": state.asset_keys,
            "medians": state.medians,
            "column_names": state.column_names,
        },
        "router": bundle.router.to_dict(),
        "route_model": bundle.route_model,
        "weights": bundle.weights,
        "forests": {
            key: {
                "baseline": forest.baseline,
                "learning_rate": forest.learning_rate,
                "n_features": forest.n_features,
                "n_trees": len(forest.trees),
                "config": forest.config,
            }
            for key, forest in sorted(bundle.forests.items())
        },
        "metadata": bundle.metadata,
        "arrays": manifest,
    }


def encode_bundle(bundle, format_version=FORMAT_VERSION):
    arrays = bundle_arrays(bundle)
    manifest = [
        {
            "name": name,
            "dtype": arr.dtype.str,
            "shape": list(arr.shape),
            "sha256": hashlib.sha256(arr.tobytes()).hexdigest(),
        }
        for name, arr in arrays.items()
    ]
    header = json.dumps(
        bundle_header(bundle, manifest, format_version), sort_keys=True
    ).encode("utf-8")
    parts = [MAGIC, U64.pack(len(header)), header]
    for arr in arrays.values():
        raw = arr.tobytes()
        parts += [U64.pack(len(raw)), raw]
    body = b"".join(parts)
    return body + hashlib.sha256(body).digest()


def save_bundle(bundle, path, format_version=FORMAT_VERSION):
    """format_version other than the current one is for tests"""
    payload = encode_bundle(bundle, format_version=format_version)
    try:
        with open(path, "wb") as f:
            f.write(payload)
    except OSError as err:
        raise IoError(f"cannot write bundle {path}: {err}") from err
    logger.info(
        f"saved bundle {path} ({len(payload)} bytes, sha256 {payload[-DIGEST_SIZE:].hex()[:16]})"
    )
    return path


# }}}


# --- decoding --- {{{
def read_header(payload):
    if not payload.startswith(MAGIC):
        raise CorruptBundle("not a slotcast bundle (bad magic)")
    at = len(MAGIC)
    if len(payload) < at + U64.size:
        raise CorruptBundle("bundle truncated inside the header length")
    (size,) = U64.unpack_from(payload, at)
    at += U64.size
    if len(payload) < at + size:
        raise CorruptBundle("bundle truncated inside the header")
    try:
        header = json.loads(payload[at : at + size].decode("utf-8"))
    except (UnicodeDecodeError, json.JSONDecodeError) as err:
        raise CorruptBundle(f"unreadable bundle header: {err}") from err
    if not isinstance(header, dict) or "format_version" not in header:
        raise CorruptBundle("bundle header carries no format_version")
    return header, at + size


def read_arrays(payload, at, manifest):
    arrays = {}
    end = len(payload) - DIGEST_SIZE
    for entry in manifest:
        if at + U64.size > end:
            raise CorruptBundle(f"bundle truncated before array {entry['name']}")
        (size,) = U64.unpack_from(payload, at)
        at += U64.size
        if at + size > end:
            raise CorruptBundle(f"bundle truncated inside array {entry['name']}")
        raw = payload[at : at + size]
        at += size
        if hashlib.sha256(raw).hexdigest() != entry["sha256"]:
            raise CorruptBundle(f"checksum mismatch on array {entry['name']}")
        arr = np.frombuffer(raw, dtype=np.dtype(entry["dtype"]))
        arrays[entry["name"]] = arr.reshape(entry["shape"]).copy()
    if at != end:
        raise CorruptBundle("trailing bytes after the last array")
    return arrays


def forest_from(key, meta, arrays):
    offsets = arrays[f"forest_{key}_offsets"]
    fields = {name: arrays[f"forest_{key}_{name}"] for name in TREE_FIELDS}
    trees = []
    for i in range(meta["n_trees"]):
        lo, hi = int(offsets[i]), int(offsets[i + 1])
        trees.append(Tree(**{name: arr[lo:hi].copy() for name, arr in fields.items()}))
    return Forest(
        trees=trees,
        learning_rate=meta["learning_rate"],
        baseline=meta["baseline"],
        n_features=meta["n_features"],
        config=meta["config"],
    )


def decode_bundle(payload):
    header, at = read_header(payload)
    version = header["format_version"]
    if not isinstance(version, int) or version > FORMAT_VERSION:
        raise BundleVersionMismatch(
            f"bundle format version {version}, this build reads up to {FORMAT_VERSION}"
        )
    if len(payload) < at + DIGEST_SIZE:
        raise CorruptBundle("bundle truncated before the checksum")
    if hashlib.sha256(payload[:-DIGEST_SIZE]).digest() != payload[-DIGEST_SIZE:]:
        raise CorruptBundle("whole-file checksum mismatch")
    try:
        arrays = read_arrays(payload, at, header["arrays"])
        feat = header["featurizer"]
        terms = feat["vocabulary"]
        text = TextVectorizerState(
            vocabulary={term: col for col, term in enumerate(terms)},
            doc_freq=arrays["text_doc_freq"],
            idf=arrays["text_idf"],
            n_docs=feat["n_docs"],
        )
        svd = None
        if feat["has_svd"]:
            svd = SvdBasis(
                components=arrays["svd_components"],
                singular_values=arrays["svd_singular_values"],
            )
        state = FeaturizerState(
            text=text,
            svd=svd,
            scaler=NumericScalerState(
                names=feat["scaler_names"],
                mean=arrays["scaler_mean"],
                std=arrays["scaler_std"],
            ),
            category_maps=feat["category_maps"],
            asset_keys=feat["asset_keys"],
            medians=feat["medians"],
            column_names=feat["column_names"],
        )
        forests = {
            key: forest_from(key, meta, arrays)
            for key, meta in header["forests"].items()
        }
        router = Router(**header["router"])
    except (KeyError, TypeError, ValueError) as err:
        raise CorruptBundle(f"incomplete bundle: {err}") from err
    if not forests:
        raise CorruptBundle("bundle holds no forest")
    return ModelBundle(
        featurizer=state,
        router=router,
        forests=forests,
        route_model=header["route_model"],
        weights=header["weights"],
        metadata=header["metadata"],
        format_version=version,
    )


def load_bundle(path):
    try:
        with open(path, "rb") as f:
            payload = f.read()
    except OSError as err:
        raise IoError(f"cannot read bundle {path}: {err}") from err
    bundle = decode_bundle(payload)
    logger.info(f"loaded bundle {path}, forests {sorted(bundle.forests)}")
    return bundle


# }}}

# done.
