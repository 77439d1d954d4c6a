"""Seeded regression forest: bagged variance-reduction trees with mean leaves.

Used as the counterfactual outcome predictor, the per-arm reward estimator,
and the ground-truth outcome models. Determinism contract: identical
(data, hyperparameters, seed) gives identical trees and predictions. Each
tree draws from its own generator spawned off the master seed; the first
draw is the split-sampler seed, the second the bootstrap index vector.
"""
from __future__ import annotations

import hashlib
import math
from dataclasses import dataclass

import numpy as np
from numba import njit

from .preprocess import TooFewRows

FOREST_FORMAT_VERSION = 1


def derive_seed(master: int, *tags) -> int:
    """Stable sub-seed from a master seed and string/int tags."""
    digest = hashlib.blake2b(repr((master,) + tags).encode(), digest_size=8).digest()
    return int.from_bytes(digest, "big") >> 1


class ShapeMismatch(ValueError):
    pass


class SchemaMismatch(ValueError):
    pass


class SchemaVersionMismatch(ValueError):
    pass


class MalformedDocument(ValueError):
    pass


@dataclass(frozen=True)
class ForestParams:
    tree_count: int = 100
    max_depth: int = 10
    min_leaf: int = 5
    features_per_split: int | None = None  # None means ceil(sqrt(d))
    seed: int = 0

    def resolve_mtry(self, d: int) -> int:
        mtry = self.features_per_split
        if mtry is None:
            mtry = math.ceil(math.sqrt(d))
        return max(1, min(mtry, d))


@njit(cache=True)
def _grow_tree(X, y, max_depth, min_leaf, mtry, rng_seed):
    n, d = X.shape
    np.random.seed(rng_seed)

    leaf_cap = n // min_leaf
    if leaf_cap < 1:
        leaf_cap = 1
    if max_depth < 30 and (1 << max_depth) < leaf_cap:
        leaf_cap = 1 << max_depth
    max_nodes = 2 * leaf_cap - 1
    if max_nodes < 1:
        max_nodes = 1

    feature = np.full(max_nodes, -1, dtype=np.int32)
    threshold = np.zeros(max_nodes, dtype=np.float64)
    left = np.full(max_nodes, -1, dtype=np.int32)
    right = np.full(max_nodes, -1, dtype=np.int32)
    value = np.zeros(max_nodes, dtype=np.float64)

    idx = np.arange(n)
    tmp = np.empty(n, dtype=np.int64)

    # stack rows: node_id, start, end, depth
    stack = np.empty((max_nodes, 4), dtype=np.int64)
    stack[0, 0] = 0
    stack[0, 1] = 0
    stack[0, 2] = n
    stack[0, 3] = 0
    top = 1
    node_count = 1

    while top > 0:
        top -= 1
        node_id = stack[top, 0]
        start = stack[top, 1]
        end = stack[top, 2]
        depth = stack[top, 3]
        m = end - start

        y_sum = 0.0
        for i in range(start, end):
            y_sum += y[idx[i]]
        value[node_id] = y_sum / m

        if depth >= max_depth or m < 2 * min_leaf or node_count + 2 > max_nodes:
            continue
        constant = True
        y0 = y[idx[start]]
        for i in range(start + 1, end):
            if y[idx[i]] != y0:
                constant = False
                break
        if constant:
            continue

        feats = np.random.permutation(d)[:mtry]
        best_score = -1.0
        best_f = -1
        best_t = 0.0
        base = (y_sum * y_sum) / m

        min_gain = 1e-12 * (1.0 + abs(base))
        vals = np.empty(m, dtype=np.float64)
        for fi in range(feats.shape[0]):
            f = feats[fi]
            for i in range(m):
                vals[i] = X[idx[start + i], f]
            order = np.argsort(vals)
            run = 0.0
            # prefix scan over the sorted segment; candidate cuts sit at
            # strict value changes with min_leaf rows on both sides
            for i in range(m):
                o = order[i]
                v_here = vals[o]
                if i >= min_leaf and i <= m - min_leaf and vals[order[i - 1]] < v_here:
                    score = (run * run) / i + (y_sum - run) * (y_sum - run) / (m - i)
                    if score > best_score and score - base > min_gain:
                        best_score = score
                        best_f = f
                        best_t = (vals[order[i - 1]] + v_here) / 2.0
                run += y[idx[start + o]]

        if best_f < 0:
            continue

        # stable partition of idx[start:end] on the chosen split
        n_left = 0
        for i in range(start, end):
            if X[idx[i], best_f] < best_t:
                tmp[n_left] = idx[i]
                n_left += 1
        n_right = 0
        for i in range(start, end):
            if not (X[idx[i], best_f] < best_t):
                tmp[n_left + n_right] = idx[i]
                n_right += 1
        for i in range(m):
            idx[start + i] = tmp[i]

        left_id = node_count
        right_id = node_count + 1
        node_count += 2
        feature[node_id] = best_f
        threshold[node_id] = best_t
        left[node_id] = left_id
        right[node_id] = right_id

        stack[top, 0] = right_id
        stack[top, 1] = start + n_left
        stack[top, 2] = end
        stack[top, 3] = depth + 1
        top += 1
        stack[top, 0] = left_id
        stack[top, 1] = start
        stack[top, 2] = start + n_left
        stack[top, 3] = depth + 1
        top += 1

    return (
        feature[:node_count],
        threshold[:node_count],
        left[:node_count],
        right[:node_count],
        value[:node_count],
    )


@njit(cache=True)
def _accumulate_tree(Xq, feature, threshold, left, right, value, out):
    for i in range(Xq.shape[0]):
        node = 0
        while feature[node] >= 0:
            if Xq[i, feature[node]] < threshold[node]:
                node = left[node]
            else:
                node = right[node]
        out[i] += value[node]


@dataclass(frozen=True)
class ForestModel:
    feature_names: tuple[str, ...]
    params: ForestParams
    trees: tuple  # per tree: (feature, threshold, left, right, value) arrays

    def predict(self, X, columns=None) -> np.ndarray:
        X = np.ascontiguousarray(np.asarray(X, dtype=np.float64))
        if X.ndim == 1:
            X = X.reshape(1, -1)
        if columns is not None:
            columns = tuple(columns)
            if set(columns) != set(self.feature_names):
                raise SchemaMismatch(
                    f"columns {columns} do not match schema {self.feature_names}"
                )
            perm = [columns.index(name) for name in self.feature_names]
            X = np.ascontiguousarray(X[:, perm])
        if X.shape[1] != len(self.feature_names):
            raise SchemaMismatch(
                f"expected {len(self.feature_names)} features, got {X.shape[1]}"
            )
        out = np.zeros(X.shape[0], dtype=np.float64)
        for tree in self.trees:
            _accumulate_tree(X, *tree, out)
        out /= len(self.trees)
        return out

    def to_json(self) -> dict:
        return {
            "format_version": FOREST_FORMAT_VERSION,
            "feature_names": list(self.feature_names),
            "params": {
                "tree_count": self.params.tree_count,
                "max_depth": self.params.max_depth,
                "min_leaf": self.params.min_leaf,
                "features_per_split": self.params.features_per_split,
                "seed": self.params.seed,
            },
            "trees": [
                {
                    "feature": t[0].tolist(),
                    "threshold": t[1].tolist(),
                    "left": t[2].tolist(),
                    "right": t[3].tolist(),
                    "value": t[4].tolist(),
                }
                for t in self.trees
            ],
        }

    @classmethod
    def from_json(cls, doc: dict) -> "ForestModel":
        if not isinstance(doc, dict) or "format_version" not in doc:
            raise MalformedDocument("forest document lacks format_version")
        if doc["format_version"] != FOREST_FORMAT_VERSION:
            raise SchemaVersionMismatch(
                f"unsupported forest format_version {doc['format_version']!r}"
            )
        try:
            params = ForestParams(**doc["params"])
            trees = tuple(
                (
                    np.asarray(t["feature"], dtype=np.int32),
                    np.asarray(t["threshold"], dtype=np.float64),
                    np.asarray(t["left"], dtype=np.int32),
                    np.asarray(t["right"], dtype=np.int32),
                    np.asarray(t["value"], dtype=np.float64),
                )
                for t in doc["trees"]
            )
            return cls(tuple(doc["feature_names"]), params, trees)
        except (KeyError, TypeError) as exc:
            raise MalformedDocument(f"malformed forest document: {exc}") from None


def fit_forest(X, y, params: ForestParams, feature_names=None) -> ForestModel:
    """Train a forest. Bootstrap per tree; feature subsets resampled at every
    node; per-tree seeds spawned from ``params.seed``."""
    X = np.ascontiguousarray(np.asarray(X, dtype=np.float64))
    y = np.asarray(y, dtype=np.float64)
    if X.ndim != 2 or y.ndim != 1 or X.shape[0] != y.shape[0]:
        raise ShapeMismatch(f"X {X.shape} incompatible with y {y.shape}")
    n, d = X.shape
    if feature_names is None:
        feature_names = tuple(f"x{j}" for j in range(d))
    feature_names = tuple(feature_names)
    if len(feature_names) != d:
        raise ShapeMismatch(f"{len(feature_names)} names for {d} columns")
    if n < params.min_leaf:
        raise TooFewRows(f"need at least min_leaf={params.min_leaf} rows, got {n}")
    if not (np.isfinite(X).all() and np.isfinite(y).all()):
        raise ValueError("training data contains missing or non-finite values")

    mtry = params.resolve_mtry(d)
    children = np.random.SeedSequence(params.seed).spawn(params.tree_count)
    trees = []
    for child in children:
        rng = np.random.default_rng(child)
        kernel_seed = int(rng.integers(0, 2**32))
        boot = rng.integers(0, n, size=n)
        trees.append(
            _grow_tree(X[boot], y[boot], params.max_depth, params.min_leaf, mtry, kernel_seed)
        )
    return ForestModel(feature_names, params, tuple(trees))
