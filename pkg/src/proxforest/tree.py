"""Single proximity tree: exemplar-based splits chosen by Gini gain.

Internal nodes hold a parameterized measure and one exemplar per class
present; a series follows the branch of its nearest exemplar. Nodes are
split until pure. Trees are immutable once built and safe to share
across threads for classification.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Mapping

import numpy as np

from . import distances as dist
from .distances import MeasureParams
from .params import RandomStream, node_stats, sample_measure


def gini_impurity(class_counts) -> float:
    """Gini impurity 1 - sum((n_c/n)^2) of a count mapping or array."""
    if isinstance(class_counts, Mapping):
        counts = np.fromiter(class_counts.values(), dtype=np.float64)
    else:
        counts = np.asarray(class_counts, dtype=np.float64)
    total = counts.sum()
    if total <= 0:
        raise ValueError("class counts are empty")
    p = counts / total
    return float(1.0 - np.dot(p, p))


def gini_gain(parent_counts, branch_counts) -> float:
    """Parent impurity minus the size-weighted impurity of the branches."""
    if isinstance(parent_counts, Mapping):
        keys = set(parent_counts)
        for b in branch_counts:
            keys |= set(b)
        for k in keys:
            if sum(b.get(k, 0) for b in branch_counts) != parent_counts.get(k, 0):
                raise ValueError("branch counts do not sum to parent counts")
        parent = np.fromiter(parent_counts.values(), dtype=np.float64)
        branches = [np.fromiter(b.values(), dtype=np.float64) for b in branch_counts]
    else:
        parent = np.asarray(parent_counts, dtype=np.float64)
        branches = [np.asarray(b, dtype=np.float64) for b in branch_counts]
        stacked = np.zeros_like(parent)
        for b in branches:
            if b.shape != parent.shape:
                raise ValueError("branch count arrays must align with the parent")
            stacked += b
        if not np.array_equal(stacked, parent):
            raise ValueError("branch counts do not sum to parent counts")
    n = parent.sum()
    gain = gini_impurity(parent)
    for b in branches:
        nb = b.sum()
        if nb > 0:
            gain -= (nb / n) * gini_impurity(b)
    return float(gain)


@dataclass(frozen=True)
class Splitter:
    """A parameterized measure plus one exemplar per class at the node."""

    measure: MeasureParams
    exemplars: np.ndarray         # (b, l) raw exemplar series
    exemplar_labels: np.ndarray   # (b,) class label of each exemplar
    exemplar_rows: np.ndarray     # (b,) row indices into the training store


@dataclass(frozen=True)
class Leaf:
    label: int


class Internal:
    """Internal node: measure, per-branch exemplars and subtrees."""

    __slots__ = ("measure", "exemplars", "exemplars_deriv", "exemplar_labels", "children")

    def __init__(self, measure: MeasureParams, exemplars: np.ndarray,
                 exemplar_labels: np.ndarray, children: list):
        self.measure = measure
        self.exemplars = np.ascontiguousarray(exemplars, dtype=np.float64)
        self.exemplar_labels = np.asarray(exemplar_labels, dtype=np.int64)
        self.children = children
        if measure.uses_derivative:
            self.exemplars_deriv = dist.derivative_matrix(self.exemplars)
        else:
            self.exemplars_deriv = None

    @property
    def branch_space(self) -> np.ndarray:
        return self.exemplars_deriv if self.measure.uses_derivative else self.exemplars


def gen_candidate_splitter(X: np.ndarray, y: np.ndarray, rows: np.ndarray,
                           rng: np.random.Generator,
                           kind: str | None = None) -> Splitter:
    """Random splitter for the node data X[rows]: a sampled measure and one
    uniformly chosen exemplar per class present."""
    labels = y[rows]
    present = np.unique(labels)
    if present.shape[0] < 2:
        raise ValueError("cannot split a single-class node")
    measure = sample_measure(rng, node_stats(X[rows]), kind)
    ex_rows = np.empty(present.shape[0], dtype=np.int64)
    for i, cls in enumerate(present):
        cls_rows = rows[labels == cls]
        ex_rows[i] = cls_rows[int(rng.integers(cls_rows.shape[0]))]
    return Splitter(measure, X[ex_rows], present.astype(np.int64), ex_rows)


def _splitter_distances(X: np.ndarray, XD: np.ndarray | None, rows: np.ndarray,
                        splitter: Splitter) -> np.ndarray:
    m = splitter.measure
    if m.uses_derivative:
        if XD is None:
            XD = dist.derivative_matrix(X)
        return dist.block_distances(XD, rows, XD[splitter.exemplar_rows], m, X.shape[1])
    return dist.block_distances(X, rows, splitter.exemplars, m, X.shape[1])


def _assign_nearest(D: np.ndarray, rng: np.random.Generator) -> tuple[np.ndarray, int]:
    """Per-row argmin over exemplar distances, exact ties broken uniformly.

    Returns the assignment and the number of rows whose branch was decided
    by a tie draw.
    """
    assign = D.argmin(axis=1)
    mins = D[np.arange(D.shape[0]), assign]
    tie_rows = np.flatnonzero((D == mins[:, None]).sum(axis=1) > 1)
    for r in tie_rows:
        tied = np.flatnonzero(D[r] == mins[r])
        assign[r] = tied[int(rng.integers(tied.shape[0]))]
    return assign, int(tie_rows.shape[0])


def partition(X: np.ndarray, y: np.ndarray, rows: np.ndarray, splitter: Splitter,
              stream: RandomStream, XD: np.ndarray | None = None) -> dict[int, np.ndarray]:
    """Assign each node series to its nearest exemplar's branch.

    Returns branch index -> row indices; ties are resolved uniformly at
    random from the given stream. Subsets are disjoint and cover `rows`.
    """
    D = _splitter_distances(X, XD, rows, splitter)
    assign, _ = _assign_nearest(D, stream.generator())
    return {b: rows[assign == b] for b in range(splitter.exemplars.shape[0])}


def _gain_of_assignment(labels: np.ndarray, assign: np.ndarray,
                        n_branches: int, n_classes: int) -> float:
    counts = np.bincount(assign * (n_classes + 1) + labels,
                         minlength=n_branches * (n_classes + 1))
    counts = counts.reshape(n_branches, n_classes + 1).astype(np.float64)
    branch_n = counts.sum(axis=1)
    n = branch_n.sum()
    parent = counts.sum(axis=0)
    gain = 1.0 - np.dot(parent / n, parent / n)
    nz = branch_n > 0
    p = counts[nz] / branch_n[nz, None]
    child_impurity = 1.0 - (p * p).sum(axis=1)
    gain -= float(np.dot(branch_n[nz] / n, child_impurity))
    return float(gain)


@dataclass
class BuildStats:
    """Counters accumulated while growing a tree."""

    nodes: int = 0
    leaves: int = 0
    tie_rows: int = 0
    max_depth: int = 0


def choose_split(X: np.ndarray, XD: np.ndarray | None, y: np.ndarray,
                 rows: np.ndarray, node_stream: RandomStream, candidates: int,
                 kind: str | None = None):
    """Evaluate `candidates` random splitters at a node and keep the best.

    Returns (splitter, distances, assignment, gain, tie_rows) for the
    Gini-gain argmax; gain ties keep the lowest candidate index. With a
    single candidate no comparison happens and it is used verbatim.
    """
    labels = y[rows]
    n_classes = int(y.max())
    best = None
    for ci in range(candidates):
        rng = node_stream.derive(ci).generator()
        splitter = gen_candidate_splitter(X, y, rows, rng, kind)
        D = _splitter_distances(X, XD, rows, splitter)
        assign, ties = _assign_nearest(D, rng)
        if candidates == 1:
            return splitter, D, assign, None, ties
        gain = _gain_of_assignment(labels, assign, splitter.exemplars.shape[0], n_classes)
        if best is None or gain > best[3]:
            best = (splitter, D, assign, gain, ties)
    return best


def build_tree(X: np.ndarray, y: np.ndarray, stream: RandomStream,
               candidates: int = 5, kind: str | None = None,
               XD: np.ndarray | None = None, rows: np.ndarray | None = None,
               stats: BuildStats | None = None):
    """Grow a proximity tree over X[rows] (all rows by default).

    X is the (n, l) training matrix, y the dense integer labels (1..c).
    Splitting recurses until nodes are pure; a split that fails to
    separate anything (possible only through distance ties) becomes a
    majority-class leaf. Returns the root node.
    """
    if candidates < 1:
        raise ValueError("candidates must be >= 1")
    if rows is None:
        rows = np.arange(X.shape[0], dtype=np.int64)
    if rows.shape[0] == 0:
        raise ValueError("cannot build a tree from no data")
    if XD is None and X.shape[1] >= 3:
        XD = dist.derivative_matrix(X)
    if stats is None:
        stats = BuildStats()

    # Iterative construction: recursion depth is data-dependent and may
    # degenerate toward n on heavily tied data.
    root_slot: list = [None]
    work = [(rows, stream, root_slot, 0, 0)]  # rows, stream, parent slot, slot idx, depth
    while work:
        node_rows, node_stream, slot, slot_idx, depth = work.pop()
        stats.nodes += 1
        stats.max_depth = max(stats.max_depth, depth)
        node_labels = y[node_rows]
        first = node_labels[0]
        if (node_labels == first).all():
            stats.leaves += 1
            slot[slot_idx] = Leaf(int(first))
            continue
        splitter, D, assign, _gain, ties = choose_split(
            X, XD, y, node_rows, node_stream, candidates, kind)
        stats.tie_rows += ties
        n_branches = splitter.exemplars.shape[0]
        subsets = [node_rows[assign == b] for b in range(n_branches)]
        live = [b for b in range(n_branches) if subsets[b].shape[0] > 0]
        if len(live) < 2:
            # Every series tied onto one branch: purity is unreachable here.
            stats.leaves += 1
            counts = np.bincount(node_labels)
            slot[slot_idx] = Leaf(int(counts.argmax()))
            continue
        children: list = [None] * len(live)
        node = Internal(splitter.measure, splitter.exemplars[live],
                        splitter.exemplar_labels[live], children)
        slot[slot_idx] = node
        for out_idx, b in enumerate(live):
            # Child streams live above the candidate index range.
            work.append((subsets[b], node_stream.derive(candidates + b),
                         children, out_idx, depth + 1))
    return root_slot[0]


def classify_tree(query, root) -> int:
    """Route one query through the tree; returns the leaf's class label.

    At each internal node the query follows its nearest exemplar, first
    branch winning exact ties.
    """
    q = np.ascontiguousarray(query, dtype=np.float64)
    node = root
    qd = None
    while isinstance(node, Internal):
        if q.shape[0] != node.exemplars.shape[1]:
            raise ValueError(
                f"query length {q.shape[0]} != training length {node.exemplars.shape[1]}")
        m = node.measure
        if m.uses_derivative:
            if qd is None:
                qd = dist.derivative_transform(q)
            x = qd
        else:
            x = q
        D = dist.block_distances(x[None, :], np.zeros(1, dtype=np.int64),
                                 node.branch_space, m, q.shape[0])
        node = node.children[int(D[0].argmin())]
    return node.label


def classify_batch(Q: np.ndarray, QD: np.ndarray | None, root,
                   visits: list | None = None) -> np.ndarray:
    """Route a (n, l) query matrix through the tree in node-grouped batches."""
    n = Q.shape[0]
    out = np.empty(n, dtype=np.int64)
    visit_count = 0
    queue = [(root, np.arange(n, dtype=np.int64))]
    while queue:
        node, idx = queue.pop()
        if isinstance(node, Leaf):
            out[idx] = node.label
            continue
        visit_count += idx.shape[0]
        m = node.measure
        M = QD if m.uses_derivative else Q
        D = dist.block_distances(M, idx, node.branch_space, m, Q.shape[1])
        assign = D.argmin(axis=1)
        for b, child in enumerate(node.children):
            sub = idx[assign == b]
            if sub.shape[0]:
                queue.append((child, sub))
    if visits is not None:
        visits.append(visit_count)
    return out
