"""Policy trees: per-visit reward estimation on matched data and shallow
axis-aligned trees that maximize class-weighted expected HbA1c reduction.

Search is exact (full enumeration over a decile threshold grid) up to depth
2 and greedy top-down beyond that. The objective of a tree is the sum over
its leaves of the weighted estimated rewards of the action each leaf
assigns; visits observed in the aggressive arm count ``alpha`` times.

All objective values are computed the same way everywhere (per-leaf masked
sums in visit order, added left to right), so equal-objective comparisons
and test oracles agree bit for bit.
"""
from __future__ import annotations

from dataclasses import dataclass, replace

import numpy as np

from .cohort import Cohort, PatientVisit, SPLIT_FEATURES, design_matrix, feature_value, regressor_schema
from .debias import Contrast, MatchedDataset
from .forest import ForestParams, derive_seed, fit_forest
from .preprocess import percentile

TREE_FORMAT_VERSION = 1

DEFAULT_ALPHA = 2.0
GRID_QUANTILES = tuple(q / 10 for q in range(1, 10))


class EmptyArm(ValueError):
    pass


class SchemaMismatch(ValueError):
    pass


@dataclass(frozen=True)
class RewardMatrix:
    contrast: Contrast
    visits: Cohort
    gamma: np.ndarray  # n x 2, columns ordered (stay, step)
    observed_arms: tuple[int, ...]


def estimate_rewards(matched: MatchedDataset, params: ForestParams) -> RewardMatrix:
    """Regress-and-compare reward estimates.

    One forest per arm, fit on that arm's retained visits with the observed
    reduction as target; both forests are then evaluated at every retained
    visit to fill the two reward columns.
    """
    contrast = matched.contrast
    arms = np.asarray(matched.arms)
    visits = matched.retained
    gamma = np.empty((len(visits), 2), dtype=np.float64)
    for arm in (0, 1):
        arm_visits = [v for v, a in zip(visits, arms) if a == arm]
        if not arm_visits:
            raise EmptyArm(f"contrast {contrast.cid}: no retained visits in arm {arm}")
        schema = regressor_schema(arm_visits)
        model = fit_forest(
            design_matrix(arm_visits, schema),
            np.array([v.reduction() for v in arm_visits]),
            replace(params, seed=derive_seed(params.seed, contrast.cid, "reward", arm)),
            feature_names=schema,
        )
        gamma[:, arm] = model.predict(design_matrix(visits.visits, schema))
    return RewardMatrix(contrast, visits, gamma, tuple(int(a) for a in arms))


@dataclass(frozen=True)
class TreeNode:
    feature: str | None = None
    threshold: float | None = None
    left: "TreeNode | None" = None
    right: "TreeNode | None" = None
    action: str | None = None

    @property
    def is_leaf(self) -> bool:
        return self.action is not None

    def depth(self) -> int:
        if self.is_leaf:
            return 0
        return 1 + max(self.left.depth(), self.right.depth())


@dataclass(frozen=True)
class PolicyTree:
    root: TreeNode
    feature_names: tuple[str, ...]
    options: tuple[str, str]  # (stay action, step action)
    objective: float | None = None

    def depth(self) -> int:
        return self.root.depth()

    def referenced_features(self) -> tuple[str, ...]:
        seen: list[str] = []

        def walk(node: TreeNode) -> None:
            if node.is_leaf:
                return
            if node.feature not in seen:
                seen.append(node.feature)
            walk(node.left)
            walk(node.right)

        walk(self.root)
        return tuple(seen)

    def to_json(self) -> dict:
        nodes: list[dict] = []

        def emit(node: TreeNode) -> int:
            my_id = len(nodes)
            if node.is_leaf:
                nodes.append({"kind": "leaf", "action": node.action})
                return my_id
            nodes.append({})
            left_id = emit(node.left)
            right_id = emit(node.right)
            nodes[my_id] = {
                "kind": "split",
                "feature": node.feature,
                "threshold": node.threshold,
                "left": left_id,
                "right": right_id,
            }
            return my_id

        emit(self.root)
        return {
            "format_version": TREE_FORMAT_VERSION,
            "feature_names": list(self.feature_names),
            "options": list(self.options),
            "objective": self.objective,
            "nodes": nodes,
        }

    @classmethod
    def from_json(cls, doc: dict) -> "PolicyTree":
        from .forest import MalformedDocument, SchemaVersionMismatch

        if not isinstance(doc, dict) or "format_version" not in doc:
            raise MalformedDocument("tree document lacks format_version")
        if doc["format_version"] != TREE_FORMAT_VERSION:
            raise SchemaVersionMismatch(
                f"unsupported tree format_version {doc['format_version']!r}"
            )
        try:
            nodes = doc["nodes"]

            def build(i: int) -> TreeNode:
                raw = nodes[i]
                if raw["kind"] == "leaf":
                    return TreeNode(action=raw["action"])
                return TreeNode(
                    feature=raw["feature"],
                    threshold=float(raw["threshold"]),
                    left=build(raw["left"]),
                    right=build(raw["right"]),
                )

            return cls(
                root=build(0),
                feature_names=tuple(doc["feature_names"]),
                options=tuple(doc["options"]),
                objective=doc.get("objective"),
            )
        except (KeyError, TypeError, IndexError) as exc:
            raise MalformedDocument(f"malformed tree document: {exc}") from None


def predict_action(tree: PolicyTree, visit) -> str:
    """Route a visit (or a feature mapping) to its leaf action. Values at a
    threshold go right, toward the action side."""
    node = tree.root
    while not node.is_leaf:
        value = _lookup(visit, node.feature)
        node = node.left if value < node.threshold else node.right
    return node.action


def _lookup(visit, name: str) -> float:
    if isinstance(visit, PatientVisit):
        return feature_value(visit, name)
    try:
        return float(visit[name])
    except (KeyError, TypeError) as exc:
        raise SchemaMismatch(f"missing feature {name!r}") from None


def threshold_grid(X: np.ndarray, feature_names) -> list[tuple[int, str, float]]:
    """Split candidates: for binary 0/1 columns a single 0.5 cut, otherwise
    the deciles of the column. Candidates that cannot separate the data are
    dropped."""
    grid: list[tuple[int, str, float]] = []
    names = tuple(feature_names)
    for j, name in enumerate(names):
        col = X[:, j]
        lo, hi = float(col.min()), float(col.max())
        if lo == hi:
            continue
        uniq = np.unique(col)
        if uniq.size == 2 and set(uniq.tolist()) <= {0.0, 1.0}:
            grid.append((j, name, 0.5))
            continue
        cuts = sorted({percentile(col, q) for q in GRID_QUANTILES})
        for t in cuts:
            if lo < t <= hi:
                grid.append((j, name, t))
    return grid


def leaf_objective(contrib: np.ndarray, mask: np.ndarray) -> float:
    """Canonical masked sum used for every objective computation."""
    return float(np.sum(contrib[mask]))


def tree_objective(
    tree: PolicyTree,
    rm: RewardMatrix,
    alpha: float = DEFAULT_ALPHA,
    weighting: str = "sample_weight",
) -> float:
    """Evaluate a fixed tree against a reward matrix under the training
    objective (leafwise canonical sums)."""
    arms = np.asarray(rm.observed_arms)
    gamma = rm.gamma
    if weighting == "sample_weight":
        weights = np.where(arms == 1, alpha, 1.0)
    else:
        weights = np.ones(len(rm.visits))
        gamma = gamma.copy()
        gamma[:, 1] = gamma[:, 1] / alpha
    contribs = (weights * gamma[:, 0], weights * gamma[:, 1])
    X = design_matrix(rm.visits.visits, tree.feature_names)
    names = tree.feature_names

    def walk(node: TreeNode, mask: np.ndarray) -> float:
        if node.is_leaf:
            return leaf_objective(contribs[tree.options.index(node.action)], mask)
        col = names.index(node.feature)
        right = mask & (X[:, col] >= node.threshold)
        return walk(node.left, mask & ~right) + walk(node.right, right)

    return walk(tree.root, np.ones(len(rm.visits), dtype=bool))


@dataclass(frozen=True)
class _Candidate:
    j: float
    depth: int
    step_count: int
    order_key: tuple
    node: TreeNode

    def better_than(self, other: "_Candidate") -> bool:
        if self.j != other.j:
            return self.j > other.j
        if self.depth != other.depth:
            return self.depth < other.depth
        if self.step_count != other.step_count:
            return self.step_count < other.step_count
        return self.order_key < other.order_key


def _best_leaf(c0, c1, mask, options) -> _Candidate:
    j0 = leaf_objective(c0, mask)
    j1 = leaf_objective(c1, mask)
    n = int(mask.sum())
    if j1 > j0:
        return _Candidate(j1, 0, n, ("", 0.0, 1, 1), TreeNode(action=options[1]))
    return _Candidate(j0, 0, 0, ("", 0.0, 0, 0), TreeNode(action=options[0]))


def _search(X, c0, c1, mask, grid, options, budget: int, exact: bool) -> _Candidate:
    best = _best_leaf(c0, c1, mask, options)
    if budget == 0:
        return best
    for j, name, t in grid:
        right = mask & (X[:, j] >= t)
        left = mask & ~ (X[:, j] >= t)
        if not right.any() or not left.any():
            continue
        if exact:
            bl = _search(X, c0, c1, left, grid, options, budget - 1, exact)
            br = _search(X, c0, c1, right, grid, options, budget - 1, exact)
        else:
            bl = _best_leaf(c0, c1, left, options)
            br = _best_leaf(c0, c1, right, options)
        cand = _Candidate(
            j=bl.j + br.j,
            depth=1 + max(bl.depth, br.depth),
            step_count=bl.step_count + br.step_count,
            order_key=(name, t) + bl.order_key + br.order_key,
            node=TreeNode(feature=name, threshold=t, left=bl.node, right=br.node),
        )
        if cand.better_than(best):
            best = cand
    return best


def train_tree(
    rm: RewardMatrix,
    feature_names=SPLIT_FEATURES,
    alpha: float = DEFAULT_ALPHA,
    depth: int = 1,
    weighting: str = "sample_weight",
) -> PolicyTree:
    """Fit a policy tree against the reward matrix.

    ``alpha`` (>= 1) upweights visits observed under the aggressive arm; the
    ``reward_penalty`` alternative divides the aggressive option's reward
    column by alpha instead. Depth <= 2 searches the grid exhaustively;
    deeper trees are grown greedily one split at a time. When no candidate
    split separates the data the better constant action is returned. Ties
    prefer shallower trees, then fewer aggressive assignments, then the
    lexicographically first (feature, threshold).
    """
    if alpha < 1.0:
        raise ValueError(f"alpha must be >= 1, got {alpha}")
    if depth < 0:
        raise ValueError(f"depth must be >= 0, got {depth}")
    if weighting not in ("sample_weight", "reward_penalty"):
        raise ValueError(f"unknown weighting mode {weighting!r}")
    n = len(rm.visits)
    if n == 0:
        raise EmptyArm("empty reward matrix")
    names = tuple(feature_names)
    X = design_matrix(rm.visits.visits, names)
    arms = np.asarray(rm.observed_arms)
    gamma = rm.gamma
    if weighting == "sample_weight":
        weights = np.where(arms == 1, alpha, 1.0)
    else:
        weights = np.ones(n)
        gamma = gamma.copy()
        gamma[:, 1] = gamma[:, 1] / alpha
    c0 = weights * gamma[:, 0]
    c1 = weights * gamma[:, 1]
    grid = threshold_grid(X, names)
    mask = np.ones(n, dtype=bool)
    options = (rm.contrast.stay, rm.contrast.step)
    if depth <= 2:
        best = _search(X, c0, c1, mask, grid, options, depth, exact=True)
    else:
        best = _grow_greedy(X, c0, c1, mask, grid, options, depth, names)
    return PolicyTree(
        root=_prune(best.node), feature_names=names, options=options, objective=best.j
    )


def _prune(node: TreeNode) -> TreeNode:
    """Collapse splits whose subtrees all reach the same action. Summation
    order can hand such a split a one-ulp edge over the equivalent leaf, so
    structural ties are resolved here rather than in the float comparison.
    Predictions are unchanged; the recorded objective is the search value."""
    if node.is_leaf:
        return node
    left = _prune(node.left)
    right = _prune(node.right)
    if left.is_leaf and right.is_leaf and left.action == right.action:
        return left
    return TreeNode(feature=node.feature, threshold=node.threshold, left=left, right=right)


def _grow_greedy(X, c0, c1, mask, grid, options, budget: int, names) -> _Candidate:
    """Greedy top-down splitting: each node takes the split that most
    improves the immediate (leaf-children) objective, then recurses."""
    shallow = _search(X, c0, c1, mask, grid, options, min(budget, 1), exact=True)
    if shallow.node.is_leaf or budget <= 1:
        return shallow
    col = names.index(shallow.node.feature)
    t = shallow.node.threshold
    right = mask & (X[:, col] >= t)
    left = mask & ~(X[:, col] >= t)
    bl = _grow_greedy(X, c0, c1, left, grid, options, budget - 1, names)
    br = _grow_greedy(X, c0, c1, right, grid, options, budget - 1, names)
    return _Candidate(
        j=bl.j + br.j,
        depth=1 + max(bl.depth, br.depth),
        step_count=bl.step_count + br.step_count,
        order_key=(shallow.node.feature, t) + bl.order_key + br.order_key,
        node=TreeNode(
            feature=shallow.node.feature, threshold=t, left=bl.node, right=br.node
        ),
    )
