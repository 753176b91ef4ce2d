"""
Greedy binary decision trees over presorted dense columns.

One builder serves both ensembles; the split criterion supplies node statistics, split
gains and leaf values. Candidate thresholds are midpoints between consecutive distinct
values (left branch: x <= threshold). Equal gains are broken by lowest feature id, then
lowest threshold.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Protocol

import numpy as np
from scipy.special import entr

GAIN_EPS = 1e-12
FEATURE_CHUNK = 256


@dataclass
class Tree:
    """Flat node arrays; feature == -1 marks a leaf."""

    feature: np.ndarray
    threshold: np.ndarray
    left: np.ndarray
    right: np.ndarray
    value: np.ndarray

    @property
    def n_nodes(self) -> int:
        return len(self.feature)

    def apply(self, X: np.ndarray) -> np.ndarray:
        node = np.zeros(X.shape[0], dtype=np.int64)
        while True:
            f = self.feature[node]
            rows = np.flatnonzero(f >= 0)
            if not len(rows):
                return node
            cur = node[rows]
            go_left = X[rows, f[rows]] <= self.threshold[cur]
            node[rows] = np.where(go_left, self.left[cur], self.right[cur])

    def predict(self, X: np.ndarray) -> np.ndarray:
        return self.value[self.apply(X)]

    def to_dict(self) -> dict:
        return {
            "feature": self.feature.tolist(),
            "threshold": self.threshold.tolist(),
            "left": self.left.tolist(),
            "right": self.right.tolist(),
            "value": self.value.tolist(),
        }

    @classmethod
    def from_dict(cls, d: dict) -> "Tree":
        return cls(
            np.asarray(d["feature"], dtype=np.int64),
            np.asarray(d["threshold"], dtype=np.float64),
            np.asarray(d["left"], dtype=np.int64),
            np.asarray(d["right"], dtype=np.int64),
            np.asarray(d["value"], dtype=np.float64),
        )


class Criterion(Protocol):
    def gains(self, sorted_rows: np.ndarray) -> np.ndarray:
        """Gain of splitting after each position (shape m x (n_node - 1)); -inf where not allowed."""

    def leaf_value(self, rows: np.ndarray) -> float: ...

    def splittable(self, rows: np.ndarray) -> bool: ...


class EntropyCriterion:
    """Information gain on sample-weighted class entropy (bits)."""

    def __init__(self, y: np.ndarray, w: np.ndarray) -> None:
        self.w1 = w * (y == 1)
        self.w0 = w * (y != 1)

    @staticmethod
    def _entropy(a: np.ndarray, b: np.ndarray) -> np.ndarray:
        tot = a + b
        with np.errstate(invalid="ignore", divide="ignore"):
            pa = np.where(tot > 0, a / tot, 0.0)
            pb = np.where(tot > 0, b / tot, 0.0)
        return (entr(pa) + entr(pb)) / np.log(2.0)

    def gains(self, sorted_rows: np.ndarray) -> np.ndarray:
        a = self.w1[sorted_rows]
        b = self.w0[sorted_rows]
        ca = np.cumsum(a, axis=1)[:, :-1]
        cb = np.cumsum(b, axis=1)[:, :-1]
        ta = a.sum(axis=1, keepdims=True)
        tb = b.sum(axis=1, keepdims=True)
        total = ta + tb
        wl = ca + cb
        wr = total - wl
        parent = self._entropy(ta, tb)
        child = (wl * self._entropy(ca, cb) + wr * self._entropy(ta - ca, tb - cb)) / total
        return parent - child

    def leaf_value(self, rows: np.ndarray) -> float:
        a = self.w1[rows].sum()
        b = self.w0[rows].sum()
        return float(a / (a + b)) if a + b > 0 else 0.0

    def splittable(self, rows: np.ndarray) -> bool:
        return self.w1[rows].sum() > 0 and self.w0[rows].sum() > 0


class SecondOrderCriterion:
    """Gain 1/2 [G_L^2/(H_L+lambda) + G_R^2/(H_R+lambda) - G^2/(H+lambda)] - gamma."""

    def __init__(self, g: np.ndarray, h: np.ndarray, reg_lambda: float, gamma: float, min_child_weight: float, learning_rate: float) -> None:
        self.g = g
        self.h = h
        self.reg_lambda = reg_lambda
        self.gamma = gamma
        self.min_child_weight = min_child_weight
        self.learning_rate = learning_rate

    def gains(self, sorted_rows: np.ndarray) -> np.ndarray:
        g = self.g[sorted_rows]
        h = self.h[sorted_rows]
        gl = np.cumsum(g, axis=1)[:, :-1]
        hl = np.cumsum(h, axis=1)[:, :-1]
        gt = g.sum(axis=1, keepdims=True)
        ht = h.sum(axis=1, keepdims=True)
        gr = gt - gl
        hr = ht - hl
        lam = self.reg_lambda
        gain = 0.5 * (gl**2 / (hl + lam) + gr**2 / (hr + lam) - gt**2 / (ht + lam)) - self.gamma
        ok = (hl >= self.min_child_weight) & (hr >= self.min_child_weight)
        return np.where(ok, gain, -np.inf)

    def leaf_value(self, rows: np.ndarray) -> float:
        G = self.g[rows].sum()
        H = self.h[rows].sum()
        return float(-self.learning_rate * G / (H + self.reg_lambda))

    def splittable(self, rows: np.ndarray) -> bool:
        return self.h[rows].sum() >= 2 * self.min_child_weight


@dataclass(frozen=True)
class Split:
    feature: int
    threshold: float
    gain: float


def presort(X: np.ndarray) -> np.ndarray:
    return np.argsort(X, axis=0, kind="stable")


def _feature_bests(X: np.ndarray, order: np.ndarray, in_node: np.ndarray, n_node: int, feats: np.ndarray, criterion: Criterion) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Per feature: best gain, its threshold, and whether the feature varies in the node."""
    sel = order[:, feats].T
    sorted_rows = sel[in_node[sel]].reshape(len(feats), n_node)
    vals = X[sorted_rows, feats[:, None]]
    lo, hi = vals[:, :-1], vals[:, 1:]
    boundary = lo < hi
    gains = np.where(boundary, criterion.gains(sorted_rows), -np.inf)
    best = gains.max(axis=1)
    # first position within GAIN_EPS of the row maximum = lowest threshold among ties
    pos = np.argmax(gains >= (best - GAIN_EPS)[:, None], axis=1)
    r = np.arange(len(feats))
    a, b = lo[r, pos], hi[r, pos]
    thr = (a + b) / 2.0
    thr = np.where(thr >= b, a, thr)
    return best, thr, boundary.any(axis=1)


def best_split(X: np.ndarray, order: np.ndarray, rows: np.ndarray, feats: np.ndarray, criterion: Criterion) -> Split | None:
    """Best split over the given features (evaluated all), or None when no gain > 0."""
    in_node = np.zeros(X.shape[0], dtype=bool)
    in_node[rows] = True
    feats = np.sort(np.asarray(feats, dtype=np.int64))
    bests, thrs = [], []
    for start in range(0, len(feats), FEATURE_CHUNK):
        chunk = feats[start:start + FEATURE_CHUNK]
        b, t, _ = _feature_bests(X, order, in_node, len(rows), chunk, criterion)
        bests.append(b)
        thrs.append(t)
    return _pick(feats, np.concatenate(bests), np.concatenate(thrs))


def _pick(feats: np.ndarray, bests: np.ndarray, thrs: np.ndarray) -> Split | None:
    if not len(feats):
        return None
    top = bests.max()
    if not np.isfinite(top) or top <= GAIN_EPS:
        return None
    i = int(np.argmax(bests >= top - GAIN_EPS))
    return Split(int(feats[i]), float(thrs[i]), float(bests[i]))


def sampled_split(X: np.ndarray, order: np.ndarray, rows: np.ndarray, candidates: np.ndarray, m: int, rng: np.random.Generator, criterion: Criterion) -> Split | None:
    """
    Draw features in random order until m of them vary within the node (constant features
    do not count), then take the best split among those m.
    """
    in_node = np.zeros(X.shape[0], dtype=bool)
    in_node[rows] = True
    perm = rng.permutation(candidates)
    chosen, bests, thrs = [], [], []
    for start in range(0, len(perm), max(m, 16)):
        chunk = perm[start:start + max(m, 16)]
        b, t, varies = _feature_bests(X, order, in_node, len(rows), chunk, criterion)
        for f, bb, tt, v in zip(chunk, b, t, varies):
            if v and len(chosen) < m:
                chosen.append(f)
                bests.append(bb)
                thrs.append(tt)
        if len(chosen) >= m:
            break
    if not chosen:
        return None
    feats = np.asarray(chosen, dtype=np.int64)
    idx = np.argsort(feats)
    return _pick(feats[idx], np.asarray(bests)[idx], np.asarray(thrs)[idx])


def grow_tree(
    X: np.ndarray,
    order: np.ndarray,
    rows: np.ndarray,
    criterion: Criterion,
    max_depth: int,
    candidates: np.ndarray,
    max_features: int | None = None,
    rng: np.random.Generator | None = None,
) -> Tree:
    """Depth-first growth from `rows`; max_features None evaluates every candidate at each node."""
    feature: list[int] = []
    threshold: list[float] = []
    left: list[int] = []
    right: list[int] = []
    value: list[float] = []

    def new_node(node_rows: np.ndarray) -> int:
        feature.append(-1)
        threshold.append(0.0)
        left.append(-1)
        right.append(-1)
        value.append(criterion.leaf_value(node_rows))
        return len(feature) - 1

    root = new_node(rows)
    stack = [(root, rows, 0)]
    while stack:
        node, node_rows, depth = stack.pop()
        if depth >= max_depth or len(node_rows) < 2 or not criterion.splittable(node_rows):
            continue
        if max_features is None or max_features >= len(candidates):
            split = best_split(X, order, node_rows, candidates, criterion)
        else:
            split = sampled_split(X, order, node_rows, candidates, max_features, rng or np.random.default_rng(0), criterion)
        if split is None:
            continue
        go_left = X[node_rows, split.feature] <= split.threshold
        lrows, rrows = node_rows[go_left], node_rows[~go_left]
        feature[node] = split.feature
        threshold[node] = split.threshold
        li = new_node(lrows)
        ri = new_node(rrows)
        left[node], right[node] = li, ri
        stack.append((ri, rrows, depth + 1))
        stack.append((li, lrows, depth + 1))
    return Tree(
        np.asarray(feature, dtype=np.int64),
        np.asarray(threshold, dtype=np.float64),
        np.asarray(left, dtype=np.int64),
        np.asarray(right, dtype=np.int64),
        np.asarray(value, dtype=np.float64),
    )
