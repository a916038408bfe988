"""Proximity forest: k independently randomized trees with majority voting.

Training derives one stream per tree from the master seed, so the model
is a pure function of (dataset, config) regardless of how many workers
built it. Prediction ties are broken from per-query streams for the same
reason.
"""

from __future__ import annotations

import hashlib
import json
import os
import struct
import time
from dataclasses import dataclass, field, replace

import numpy as np
from joblib import Parallel, delayed

from . import distances as dist
from .data import Dataset
from .errors import CorruptModelError, ModelFormatError
from .params import RandomStream
from .tree import BuildStats, Internal, Leaf, build_tree, classify_batch, classify_tree

__all__ = [
    "ForestConfig", "ProximityForest", "train_forest", "predict",
    "predict_proba", "predict_dataset", "save_model", "load_model",
    "dumps_model", "loads_model",
]

MEASURE_SCOPES = ("per-node", "per-tree")

# Root-stream namespaces: tree builds and query tie-breaks must never share
# a derived stream.
_NS_TREES = 0
_NS_QUERIES = 1


@dataclass(frozen=True)
class ForestConfig:
    """Training configuration; the defaults are the headline setting of
    100 trees choosing between 5 candidate splits per node."""

    num_trees: int = 100
    candidates: int = 5
    measure_scope: str = "per-node"
    seed: int = 0
    workers: int = 1

    def __post_init__(self):
        if self.num_trees < 1:
            raise ValueError("num_trees must be >= 1")
        if self.candidates < 1:
            raise ValueError("candidates must be >= 1")
        if self.measure_scope not in MEASURE_SCOPES:
            raise ValueError(f"measure_scope must be one of {MEASURE_SCOPES}")
        if self.workers < 1:
            raise ValueError("workers must be >= 1")


@dataclass
class ProximityForest:
    """A trained ensemble plus the metadata needed to apply and store it."""

    trees: list
    config: ForestConfig
    length: int
    label_table: tuple
    train_seconds: float = 0.0
    build_stats: list[BuildStats] = field(default_factory=list)

    @property
    def num_trees(self) -> int:
        return len(self.trees)

    def original_label(self, dense: int):
        return self.label_table[dense - 1]


def _build_one_tree(X, XD, y, tree_stream, candidates, measure_scope):
    kind = None
    if measure_scope == "per-tree":
        kind = dist.KIND_NAMES[int(tree_stream.generator().integers(len(dist.KIND_NAMES)))]
    stats = BuildStats()
    root = build_tree(X, y, tree_stream, candidates=candidates, kind=kind,
                      XD=XD, stats=stats)
    return root, stats


def train_forest(dataset: Dataset, config: ForestConfig) -> ProximityForest:
    """Train `config.num_trees` proximity trees on the dataset.

    Tree i draws all its randomness from a stream derived as
    (seed -> trees namespace -> i); workers only change wall time.
    """
    if dataset.n_classes < 2:
        raise ValueError("training needs at least 2 classes")
    if dataset.length < 3:
        raise ValueError("training needs series of length >= 3")
    X = dataset.X
    y = dataset.y
    XD = dist.derivative_matrix(X)
    root = RandomStream(config.seed).derive(_NS_TREES)
    streams = [root.derive(i) for i in range(config.num_trees)]

    start = time.perf_counter()
    if config.workers == 1 or config.num_trees == 1:
        built = [_build_one_tree(X, XD, y, s, config.candidates, config.measure_scope)
                 for s in streams]
    else:
        # Threads suffice: the DP kernels release the GIL.
        built = Parallel(n_jobs=config.workers, backend="threading")(
            delayed(_build_one_tree)(X, XD, y, s, config.candidates, config.measure_scope)
            for s in streams)
    elapsed = time.perf_counter() - start

    return ProximityForest(trees=[b[0] for b in built], config=config,
                           length=dataset.length, label_table=dataset.label_table,
                           train_seconds=elapsed,
                           build_stats=[b[1] for b in built])


def _query_rng(forest: ProximityForest, query_index: int) -> np.random.Generator:
    return RandomStream(forest.config.seed).derive(_NS_QUERIES).derive(query_index).generator()


def _vote_winner(votes: np.ndarray, rng: np.random.Generator, n_classes: int) -> int:
    counts = np.bincount(votes, minlength=n_classes + 1)
    top = counts.max()
    winners = np.flatnonzero(counts == top)
    if winners.shape[0] == 1:
        return int(winners[0])
    return int(winners[int(rng.integers(winners.shape[0]))])


def predict(query, forest: ProximityForest, query_index: int = 0):
    """Majority vote over the trees; returns the original class label.

    Vote ties are broken uniformly at random from a stream keyed by the
    master seed and `query_index`, so batch evaluation replays exactly.
    """
    q = np.ascontiguousarray(query, dtype=np.float64)
    if q.ndim != 1 or q.shape[0] != forest.length:
        raise ValueError(f"query length must be {forest.length}")
    votes = np.array([classify_tree(q, t) for t in forest.trees], dtype=np.int64)
    dense = _vote_winner(votes, _query_rng(forest, query_index), len(forest.label_table))
    return forest.original_label(dense)


def predict_proba(query, forest: ProximityForest) -> dict:
    """Vote fractions per original class label; fractions sum to 1."""
    q = np.ascontiguousarray(query, dtype=np.float64)
    if q.ndim != 1 or q.shape[0] != forest.length:
        raise ValueError(f"query length must be {forest.length}")
    votes = np.array([classify_tree(q, t) for t in forest.trees], dtype=np.int64)
    counts = np.bincount(votes, minlength=len(forest.label_table) + 1)
    k = votes.shape[0]
    return {forest.original_label(d): counts[d] / k
            for d in range(1, len(forest.label_table) + 1)}


def predict_dataset(forest: ProximityForest, X: np.ndarray,
                    workers: int | None = None,
                    count_visits: bool = False):
    """Predict a (n, l) query matrix.

    Returns (original labels array, mean internal nodes visited per query
    per tree when `count_visits` else None).
    """
    Q = np.ascontiguousarray(X, dtype=np.float64)
    if Q.ndim != 2 or Q.shape[1] != forest.length:
        raise ValueError(f"queries must be 2-D with length {forest.length}")
    QD = dist.derivative_matrix(Q)
    visits: list | None = [] if count_visits else None
    if workers is None:
        workers = forest.config.workers
    if workers == 1 or len(forest.trees) == 1:
        per_tree = [classify_batch(Q, QD, t, visits) for t in forest.trees]
    else:
        shared: list = [] if count_visits else None
        per_tree = Parallel(n_jobs=workers, backend="threading")(
            delayed(classify_batch)(Q, QD, t, shared) for t in forest.trees)
        visits = shared
    votes = np.stack(per_tree)  # (k, n)
    n_classes = len(forest.label_table)
    out = np.empty(Q.shape[0], dtype=np.int64)
    for qi in range(Q.shape[0]):
        counts = np.bincount(votes[:, qi], minlength=n_classes + 1)
        top = counts.max()
        winners = np.flatnonzero(counts == top)
        if winners.shape[0] == 1:
            out[qi] = winners[0]
        else:
            rng = _query_rng(forest, qi)
            out[qi] = winners[int(rng.integers(winners.shape[0]))]
    labels = np.array([forest.original_label(d) for d in out])
    mean_visits = None
    if count_visits:
        mean_visits = float(np.sum(visits)) / (Q.shape[0] * len(forest.trees))
    return labels, mean_visits


# ---------------------------------------------------------------------------
# model persistence
# ---------------------------------------------------------------------------

_MAGIC = b"PXFM"
_VERSION = 1


def _encode_tree(node, blob: list, offset: list) -> dict:
    if isinstance(node, Leaf):
        return {"leaf": node.label}
    m = node.measure
    b, l = node.exemplars.shape
    entry = {
        "kind": m.kind,
        "labels": [int(v) for v in node.exemplar_labels],
        "ex": [offset[0], b],
    }
    for name in ("window", "g", "epsilon", "nu", "lam", "cost"):
        value = getattr(m, name)
        if value is not None:
            entry[name] = value
    blob.append(np.ascontiguousarray(node.exemplars, dtype="<f8").tobytes())
    offset[0] += b * l
    entry["children"] = [_encode_tree(c, blob, offset) for c in node.children]
    return entry


def _decode_tree(entry: dict, values: np.ndarray, length: int):
    if "leaf" in entry:
        return Leaf(int(entry["leaf"]))
    params = {k: entry[k] for k in ("window", "g", "epsilon", "nu", "lam", "cost")
              if k in entry}
    measure = dist.MeasureParams(entry["kind"], **params)
    off, b = entry["ex"]
    exemplars = values[off: off + b * length].reshape(b, length)
    children = [_decode_tree(c, values, length) for c in entry["children"]]
    return Internal(measure, exemplars, np.array(entry["labels"], dtype=np.int64), children)


def dumps_model(forest: ProximityForest) -> bytes:
    """Serialize to a self-describing, canonical binary container."""
    blob: list = []
    offset = [0]
    trees = [_encode_tree(t, blob, offset) for t in forest.trees]
    header = {
        "config": {
            "num_trees": forest.config.num_trees,
            "candidates": forest.config.candidates,
            "measure_scope": forest.config.measure_scope,
            "seed": forest.config.seed,
            "workers": forest.config.workers,
        },
        "length": forest.length,
        "label_table": list(forest.label_table),
        "train_seconds": forest.train_seconds,
        "n_values": offset[0],
        "trees": trees,
    }
    header_bytes = json.dumps(header, sort_keys=True, separators=(",", ":")).encode()
    body = b"".join([
        _MAGIC,
        struct.pack("<I", _VERSION),
        struct.pack("<Q", len(header_bytes)),
        header_bytes,
        b"".join(blob),
    ])
    return body + hashlib.sha256(body).digest()


def loads_model(payload: bytes) -> ProximityForest:
    """Inverse of `dumps_model`; validates framing and integrity."""
    if len(payload) < len(_MAGIC) + 4 + 8 + 32:
        raise CorruptModelError("model payload is truncated")
    if payload[:4] != _MAGIC:
        raise ModelFormatError("not a proximity forest model file")
    body, digest = payload[:-32], payload[-32:]
    if hashlib.sha256(body).digest() != digest:
        raise CorruptModelError("model payload fails its integrity check")
    version = struct.unpack_from("<I", payload, 4)[0]
    if version != _VERSION:
        raise ModelFormatError(f"unsupported model version {version}")
    header_len = struct.unpack_from("<Q", payload, 8)[0]
    header_start = 16
    header_end = header_start + header_len
    try:
        header = json.loads(payload[header_start:header_end])
    except ValueError as exc:
        raise CorruptModelError("model header is not valid JSON") from exc
    n_values = header["n_values"]
    values = np.frombuffer(body, dtype="<f8", count=n_values, offset=header_end)
    if values.shape[0] != n_values:
        raise CorruptModelError("model value block is truncated")
    values = np.ascontiguousarray(values)
    length = header["length"]
    config = ForestConfig(**header["config"])
    trees = [_decode_tree(t, values, length) for t in header["trees"]]
    return ProximityForest(trees=trees, config=config, length=length,
                           label_table=tuple(header["label_table"]),
                           train_seconds=header["train_seconds"])


def save_model(forest: ProximityForest, path) -> None:
    """Write the model atomically (no partial files on failure)."""
    payload = dumps_model(forest)
    tmp = f"{path}.tmp.{os.getpid()}"
    with open(tmp, "wb") as fh:
        fh.write(payload)
    os.replace(tmp, path)


def load_model(path) -> ProximityForest:
    with open(path, "rb") as fh:
        return loads_model(fh.read())
