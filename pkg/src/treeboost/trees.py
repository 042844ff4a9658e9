"""Regression trees on gradient/hessian statistics with exact greedy splits.

Split finding enumerates every threshold midpoint between consecutive
distinct feature values, in presorted order.  Rows with a missing value
for the split feature are tried on both sides and the better side is
stored as the node's default direction.  Candidate features may be
scanned in parallel; the gain reduction always runs in ascending
feature order with a strictly-greater test (then lowest threshold,
then missing-left), so results do not depend on thread count.

Each node keeps, per candidate feature, its rows in ascending value
order, packed back to back (concat with an offsets table).  Scans
stream the packed row lists and gather values and gradient/hessian
pairs from cache-resident tables; partitions split the lists against a
byte mask of the chosen split.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Optional

import numpy as np
from numba import njit, prange

# below this many packed elements per node, serial kernels beat fork/join
PARALLEL_CUTOFF = 16384


@dataclass
class TreeNode:
    """Decision node (two children) or leaf (weight set, feature is None)."""

    feature: Optional[int] = None
    threshold: Optional[float] = None
    default_left: Optional[bool] = None
    left: Optional["TreeNode"] = None
    right: Optional["TreeNode"] = None
    weight: Optional[float] = None
    gain: Optional[float] = None

    @property
    def is_leaf(self) -> bool:
        return self.feature is None

    def to_dict(self) -> dict:
        if self.is_leaf:
            return {"weight": self.weight}
        return {
            "feature": self.feature,
            "threshold": self.threshold,
            "default": "left" if self.default_left else "right",
            "gain": self.gain,
            "left": self.left.to_dict(),
            "right": self.right.to_dict(),
        }

    @classmethod
    def from_dict(cls, obj: dict) -> "TreeNode":
        if "weight" in obj:
            return cls(weight=float(obj["weight"]))
        return cls(
            feature=int(obj["feature"]),
            threshold=float(obj["threshold"]),
            default_left=obj["default"] == "left",
            left=cls.from_dict(obj["left"]),
            right=cls.from_dict(obj["right"]),
            gain=None if obj.get("gain") is None else float(obj["gain"]),
        )

    def max_depth(self) -> int:
        if self.is_leaf:
            return 0
        return 1 + max(self.left.max_depth(), self.right.max_depth())

    def n_leaves(self) -> int:
        if self.is_leaf:
            return 1
        return self.left.n_leaves() + self.right.n_leaves()


@dataclass(frozen=True)
class SplitCandidate:
    gain: float
    feature: int
    threshold: float
    default_left: bool


@njit(cache=True, inline="always")
def _scan_slot(
    Xf, gh, concat, feat_ids, lo, hi, g_node, h_node, n_node,
    lam, min_child_h, min_split_loss, out_gain, out_thr, out_dl, s,
):
    """Scan one feature slot without per-candidate division.

    A candidate's unscaled score is X/Y with X = gl^2(hr+lam) +
    gr^2(hl+lam) and Y = (hl+lam)(hr+lam); scores compare by cross
    multiplication, and only the winner's gain is materialized.  A
    candidate is admissible when X/Y clears the parent score plus twice
    the split penalty, folded into the running (best_X, best_Y).
    """
    j = feat_ids[s]
    m = hi - lo
    out_gain[s] = -np.inf
    out_thr[s] = 0.0
    out_dl[s] = 1
    if m < 2:
        return

    has_missing = n_node > m
    g_miss = 0.0
    h_miss = 0.0
    if has_missing:
        g_nm = 0.0
        h_nm = 0.0
        for i in range(lo, hi):
            r = concat[i]
            g_nm += gh[r, 0]
            h_nm += gh[r, 1]
        g_miss = g_node - g_nm
        h_miss = h_node - h_nm

    parent_score = g_node * g_node / (h_node + lam)
    threshold_score = parent_score + 2.0 * min_split_loss
    best_x = threshold_score
    best_y = 1.0
    best_thr = 0.0
    best_dl = 1
    found = False

    gl = 0.0
    hl = 0.0
    r = concat[lo]
    v = Xf[r, j]
    if not has_missing:
        for i in range(lo, hi - 1):
            gl += gh[r, 0]
            hl += gh[r, 1]
            r = concat[i + 1]
            v_next = Xf[r, j]
            if v != v_next:
                hr = h_node - hl
                if hl >= min_child_h and hr >= min_child_h:
                    gr = g_node - gl
                    dl_den = hl + lam
                    dr_den = hr + lam
                    x = gl * gl * dr_den + gr * gr * dl_den
                    y = dl_den * dr_den
                    if x * best_y > best_x * y:
                        found = True
                        best_x = x
                        best_y = y
                        best_thr = 0.5 * (v + v_next)
            v = v_next
    else:
        for i in range(lo, hi - 1):
            gl += gh[r, 0]
            hl += gh[r, 1]
            r = concat[i + 1]
            v_next = Xf[r, j]
            if v != v_next:
                # missing routed left
                gl_l = gl + g_miss
                hl_l = hl + h_miss
                gr_l = g_node - gl_l
                hr_l = h_node - hl_l
                ok_l = hl_l >= min_child_h and hr_l >= min_child_h
                x_l = 0.0
                y_l = 1.0
                if ok_l:
                    dl_den = hl_l + lam
                    dr_den = hr_l + lam
                    x_l = gl_l * gl_l * dr_den + gr_l * gr_l * dl_den
                    y_l = dl_den * dr_den
                # missing routed right
                gr_r = g_node - gl
                hr_r = h_node - hl
                ok_r = hl >= min_child_h and hr_r >= min_child_h
                x_r = 0.0
                y_r = 1.0
                if ok_r:
                    dl_den = hl + lam
                    dr_den = hr_r + lam
                    x_r = gl * gl * dr_den + gr_r * gr_r * dl_den
                    y_r = dl_den * dr_den
                if ok_l or ok_r:
                    if ok_r and (not ok_l or x_r * y_l > x_l * y_r):
                        x, y, dl = x_r, y_r, 0
                    else:
                        x, y, dl = x_l, y_l, 1
                    if x * best_y > best_x * y:
                        found = True
                        best_x = x
                        best_y = y
                        best_thr = 0.5 * (v + v_next)
                        best_dl = dl
            v = v_next

    if found:
        out_gain[s] = 0.5 * (best_x / best_y - parent_score) - min_split_loss
        out_thr[s] = best_thr
        out_dl[s] = best_dl


@njit(cache=True, parallel=True)
def _scan_node_parallel(
    Xf, gh, concat, starts, ends, feat_ids, g_node, h_node, n_node,
    lam, min_child_h, min_split_loss, out_gain, out_thr, out_dl,
):
    for s in prange(starts.size):
        _scan_slot(
            Xf, gh, concat, feat_ids, starts[s], ends[s],
            g_node, h_node, n_node,
            lam, min_child_h, min_split_loss, out_gain, out_thr, out_dl, s,
        )


@njit(cache=True)
def _scan_node_serial(
    Xf, gh, concat, starts, ends, feat_ids, g_node, h_node, n_node,
    lam, min_child_h, min_split_loss, out_gain, out_thr, out_dl,
):
    for s in range(starts.size):
        _scan_slot(
            Xf, gh, concat, feat_ids, starts[s], ends[s],
            g_node, h_node, n_node,
            lam, min_child_h, min_split_loss, out_gain, out_thr, out_dl, s,
        )


@njit(cache=True)
def _reduce_best(out_gain):
    """Pick the winning feature slot in ascending order, strictly greater gain."""
    best = -1
    best_gain = 0.0
    for s in range(out_gain.size):
        if out_gain[s] > best_gain:
            best = s
            best_gain = out_gain[s]
    return best


@njit(cache=True, inline="always")
def _partition_slot(concat, side, lo, hi, dest_lo, dest_hi, out, counts_left, s):
    """One pass: lefts written forward, rights backward, then the right
    segment is reversed in place to restore ascending value order."""
    il = dest_lo
    ir = dest_hi - 1
    for i in range(lo, hi):
        r = concat[i]
        if side[r] == 1:
            out[il] = r
            il += 1
        else:
            out[ir] = r
            ir -= 1
    counts_left[s] = il - dest_lo
    a = il
    b = dest_hi - 1
    while a < b:
        t = out[a]
        out[a] = out[b]
        out[b] = t
        a += 1
        b -= 1


@njit(cache=True, parallel=True)
def _partition_parallel(concat, starts, ends, side, dest_starts, dest_ends, out, counts_left):
    for s in prange(starts.size):
        _partition_slot(
            concat, side, starts[s], ends[s], dest_starts[s], dest_ends[s],
            out, counts_left, s,
        )


@njit(cache=True)
def _partition_serial(concat, starts, ends, side, dest_starts, dest_ends, out, counts_left):
    for s in range(starts.size):
        _partition_slot(
            concat, side, starts[s], ends[s], dest_starts[s], dest_ends[s],
            out, counts_left, s,
        )


@njit(cache=True)
def _walk_rows(X, rows, feature, threshold, default_left, left, right, weight, out):
    """Route a subset of X's rows through one flat tree, adding leaf weights."""
    for k in range(rows.size):
        i = rows[k]
        node = 0
        while feature[node] >= 0:
            v = X[i, feature[node]]
            if np.isnan(v):
                node = left[node] if default_left[node] == 1 else right[node]
            elif v < threshold[node]:
                node = left[node]
            else:
                node = right[node]
        out[i] += weight[node]


@njit(cache=True)
def _predict_forest(X, tree_starts, feature, threshold, default_left, left, right, weight, out):
    """Sum leaf weights over all trees, walking each row through the forest."""
    n = X.shape[0]
    for i in range(n):
        acc = 0.0
        for t in range(tree_starts.size - 1):
            node = tree_starts[t]
            while feature[node] >= 0:
                v = X[i, feature[node]]
                if np.isnan(v):
                    node = left[node] if default_left[node] == 1 else right[node]
                elif v < threshold[node]:
                    node = left[node]
                else:
                    node = right[node]
            acc += weight[node]
        out[i] += acc


def _flatten_nodes(roots: list[TreeNode]) -> tuple[np.ndarray, ...]:
    nodes: list[TreeNode] = []
    starts = [0]

    def _collect(node: TreeNode):
        nodes.append(node)
        if not node.is_leaf:
            _collect(node.left)
            _collect(node.right)

    for root in roots:
        _collect(root)
        starts.append(len(nodes))
    index = {id(n): i for i, n in enumerate(nodes)}

    k = len(nodes)
    feature = np.full(k, -1, dtype=np.int64)
    threshold = np.zeros(k, dtype=np.float64)
    default_left = np.zeros(k, dtype=np.uint8)
    left = np.zeros(k, dtype=np.int64)
    right = np.zeros(k, dtype=np.int64)
    weight = np.zeros(k, dtype=np.float64)
    for i, node in enumerate(nodes):
        if node.is_leaf:
            weight[i] = node.weight
        else:
            feature[i] = node.feature
            threshold[i] = node.threshold
            default_left[i] = 1 if node.default_left else 0
            left[i] = index[id(node.left)]
            right[i] = index[id(node.right)]
    return (
        np.asarray(starts, dtype=np.int64),
        feature, threshold, default_left, left, right, weight,
    )


@dataclass
class FlatForest:
    """Array form of one or more trees for fast routing; feature -1 marks a leaf."""

    tree_starts: np.ndarray
    feature: np.ndarray
    threshold: np.ndarray
    default_left: np.ndarray
    left: np.ndarray
    right: np.ndarray
    weight: np.ndarray

    @classmethod
    def from_nodes(cls, roots: list[TreeNode]) -> "FlatForest":
        return cls(*_flatten_nodes(roots))

    def add_margins(self, X: np.ndarray, out: np.ndarray) -> None:
        _predict_forest(
            X, self.tree_starts, self.feature, self.threshold,
            self.default_left, self.left, self.right, self.weight, out,
        )

    def add_margins_rows(self, X: np.ndarray, rows: np.ndarray, out: np.ndarray) -> None:
        _walk_rows(
            X, rows, self.feature, self.threshold,
            self.default_left, self.left, self.right, self.weight, out,
        )


def best_split(
    values: np.ndarray,
    g: np.ndarray,
    h: np.ndarray,
    l2_lambda: float = 1.0,
    min_split_loss: float = 0.0,
    min_child_hessian: float = 0.0,
) -> Optional[SplitCandidate]:
    """Best threshold for a single feature vector (NaN cells are missing).

    Standalone entry point over the same kernel the trainer uses; returns
    None when no split has strictly positive gain.
    """
    col = np.asfortranarray(np.asarray(values, dtype=np.float64).reshape(-1, 1))
    g = np.ascontiguousarray(g, dtype=np.float64)
    h = np.ascontiguousarray(h, dtype=np.float64)
    n = len(g)
    gh = np.empty((n, 2), dtype=np.float64)
    gh[:, 0] = g
    gh[:, 1] = h
    order = np.argsort(col[:, 0], kind="stable").astype(np.int32)
    n_valid = n - int(np.isnan(col[:, 0]).sum())
    concat = np.ascontiguousarray(order[:n_valid])
    starts = np.zeros(1, dtype=np.int64)
    ends = np.full(1, n_valid, dtype=np.int64)
    feat_ids = np.zeros(1, dtype=np.int64)
    out_gain = np.empty(1, dtype=np.float64)
    out_thr = np.empty(1, dtype=np.float64)
    out_dl = np.empty(1, dtype=np.uint8)
    _scan_node_serial(
        col, gh, concat, starts, ends, feat_ids,
        float(g.sum()), float(h.sum()), n,
        l2_lambda, min_child_hessian, min_split_loss,
        out_gain, out_thr, out_dl,
    )
    if not np.isfinite(out_gain[0]):
        return None
    return SplitCandidate(float(out_gain[0]), 0, float(out_thr[0]), bool(out_dl[0]))


class TreeGrower:
    """Depth-first exact-greedy growth over a fixed (row, feature) sample."""

    def __init__(
        self,
        X_cols: np.ndarray,
        gh: np.ndarray,
        max_depth: int,
        learning_rate: float,
        l2_lambda: float,
        min_split_loss: float,
        min_child_hessian: float,
    ):
        self.X_cols = X_cols  # fortran-ordered (n, d) so columns are contiguous
        self.gh = gh  # (n, 2) interleaved gradient/hessian
        self.max_depth = max_depth
        self.learning_rate = learning_rate
        self.l2_lambda = l2_lambda
        self.min_split_loss = min_split_loss
        self.min_child_hessian = min_child_hessian
        self._side = np.zeros(X_cols.shape[0], dtype=np.uint8)
        self.leaf_rows: list[tuple[float, np.ndarray]] = []

    def grow(
        self, rows: np.ndarray, concat: np.ndarray, starts: np.ndarray,
        ends: np.ndarray, feat_ids: np.ndarray,
    ) -> TreeNode:
        """Grow one tree; records (weight, rows) per leaf for margin updates."""
        self.leaf_rows = []
        self.feat_ids = feat_ids
        g_sum = float(self.gh[rows, 0].sum())
        h_sum = float(self.gh[rows, 1].sum())
        k = feat_ids.size
        self._out_gain = np.empty(k, dtype=np.float64)
        self._out_thr = np.empty(k, dtype=np.float64)
        self._out_dl = np.empty(k, dtype=np.uint8)
        self._empty_span = np.zeros(0, dtype=np.int64)
        return self._grow(rows, concat, starts, ends, g_sum, h_sum, 0)

    def _leaf(self, rows: np.ndarray, g_sum: float, h_sum: float) -> TreeNode:
        w = -g_sum / (h_sum + self.l2_lambda) * self.learning_rate
        self.leaf_rows.append((w, rows))
        return TreeNode(weight=w)

    def _grow(self, rows, concat, starts, ends, g_sum, h_sum, depth) -> TreeNode:
        if depth >= self.max_depth or len(rows) < 2:
            return self._leaf(rows, g_sum, h_sum)

        k = self.feat_ids.size
        gain = self._out_gain
        thr = self._out_thr
        dl = self._out_dl
        span = int(ends[-1] - starts[0]) if k else 0
        parallel = span >= PARALLEL_CUTOFF
        scan = _scan_node_parallel if parallel else _scan_node_serial
        scan(
            self.X_cols, self.gh, concat, starts, ends, self.feat_ids,
            g_sum, h_sum, len(rows),
            self.l2_lambda, self.min_child_hessian, self.min_split_loss,
            gain, thr, dl,
        )
        s = _reduce_best(gain)
        if s < 0:
            return self._leaf(rows, g_sum, h_sum)
        best = SplitCandidate(
            float(gain[s]), int(self.feat_ids[s]), float(thr[s]), bool(dl[s])
        )

        v = self.X_cols[rows, best.feature]
        goes_left = v < best.threshold
        if best.default_left:
            goes_left |= np.isnan(v)
        side = self._side
        side[rows] = goes_left
        rows_left = rows[goes_left]
        rows_right = rows[~goes_left]

        gl = float(self.gh[rows_left, 0].sum())
        hl = float(self.gh[rows_left, 1].sum())
        node = TreeNode(
            feature=best.feature,
            threshold=best.threshold,
            default_left=best.default_left,
            gain=best.gain,
        )

        if depth + 1 >= self.max_depth:
            # children are leaves: no more scans, so skip list partitioning
            empty = np.empty(0, dtype=np.int32)
            span0 = self._empty_span
            node.left = self._grow(rows_left, empty, span0, span0, gl, hl, depth + 1)
            node.right = self._grow(
                rows_right, empty, span0, span0, g_sum - gl, h_sum - hl, depth + 1
            )
            return node

        # one pass packs both children into a compact shared buffer
        sizes = ends - starts
        dest_ends = np.cumsum(sizes)
        dest_starts = dest_ends - sizes
        child_buf = np.empty(int(dest_ends[-1]) if k else 0, dtype=np.int32)
        counts_left = np.empty(k, dtype=np.int64)
        part = _partition_parallel if parallel else _partition_serial
        part(concat, starts, ends, side, dest_starts, dest_ends, child_buf, counts_left)
        mid = dest_starts + counts_left

        node.left = self._grow(
            rows_left, child_buf, dest_starts, mid, gl, hl, depth + 1
        )
        node.right = self._grow(
            rows_right, child_buf, mid, dest_ends, g_sum - gl, h_sum - hl, depth + 1
        )
        return node
