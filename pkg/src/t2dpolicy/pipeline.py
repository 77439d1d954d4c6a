"""Aggressive-first decision pipelines per current-regimen group.

A pipeline evaluates its stages in order; the first stage whose tree picks
its step-up action ends the evaluation. The no-medication pipeline has one
two-level stage: a router tree that decides whether to start any first line
therapy, feeding a resolver tree that picks which monotherapy. If no stage
fires, the recommendation is to stay on the current regimen.
"""
from __future__ import annotations

import hashlib
import json
from dataclasses import dataclass

from .cohort import (
    ADMISSIBLE_OPTIONS,
    AGGRESSIVENESS_RANK,
    CURRENT_GROUPS,
    FIRST_LINE,
    INSULIN_MONO,
    INSULIN_PLUS_OTHER,
    METFORMIN_INSULIN_OTHER,
    METFORMIN_MONO,
    METFORMIN_PLUS_INSULIN,
    METFORMIN_PLUS_OTHER,
    NO_MEDICATION,
    OTHER_HYPO_MONO,
    PatientVisit,
    SPLIT_FEATURES,
)
from .forest import MalformedDocument, SchemaVersionMismatch
from .policytree import PolicyTree, TreeNode, _lookup

PIPELINE_FORMAT_VERSION = 1

FIRST_LINE_OPTIONS = (OTHER_HYPO_MONO, METFORMIN_MONO)


class OrderingViolation(ValueError):
    pass


class InadmissibleStage(ValueError):
    pass


class GroupMismatch(ValueError):
    pass


@dataclass(frozen=True)
class TreeStage:
    name: str
    tree: PolicyTree

    @property
    def step_action(self) -> str:
        return self.tree.options[1]


@dataclass(frozen=True)
class RouterStage:
    """First-line stage: the router's step outcome does not terminate on its
    own action but routes into the resolver tree, whose leaf is final."""

    name: str
    router: PolicyTree
    resolver: PolicyTree

    @property
    def step_action(self) -> str:
        return FIRST_LINE


Stage = TreeStage | RouterStage


@dataclass(frozen=True)
class Decision:
    feature: str
    threshold: float
    value: float
    branch: str  # "left" (value below threshold) or "right" (at or above)


@dataclass(frozen=True)
class StageTrace:
    stage: str
    part: str  # "tree", "router", or "resolver"
    decisions: tuple[Decision, ...]
    action: str
    fired: bool


@dataclass(frozen=True)
class Trace:
    stages: tuple[StageTrace, ...]
    recommendation: str

    def to_json(self) -> dict:
        return {
            "stages": [
                {
                    "stage": st.stage,
                    "part": st.part,
                    "decisions": [
                        {
                            "feature": d.feature,
                            "threshold": d.threshold,
                            "value": d.value,
                            "branch": d.branch,
                        }
                        for d in st.decisions
                    ],
                    "action": st.action,
                    "fired": st.fired,
                }
                for st in self.stages
            ],
            "recommendation": self.recommendation,
        }


@dataclass(frozen=True)
class Pipeline:
    group: str
    stages: tuple[Stage, ...]

    @property
    def terminal_action(self) -> str:
        return self.group

    def feature_names(self) -> tuple[str, ...]:
        names: list[str] = []
        for stage in self.stages:
            trees = (
                (stage.tree,) if isinstance(stage, TreeStage) else (stage.router, stage.resolver)
            )
            for tree in trees:
                for n in tree.feature_names:
                    if n not in names:
                        names.append(n)
        return tuple(names)


def _route(tree: PolicyTree, visit) -> tuple[str, tuple[Decision, ...]]:
    node = tree.root
    decisions: list[Decision] = []
    while not node.is_leaf:
        value = _lookup(visit, node.feature)
        branch = "left" if value < node.threshold else "right"
        decisions.append(Decision(node.feature, node.threshold, float(value), branch))
        node = node.left if branch == "left" else node.right
    return node.action, tuple(decisions)


def compose(group: str, trees) -> Pipeline:
    """Wire ordered trees into a validated pipeline.

    A tree whose step option is the first-line router must be immediately
    followed by its resolver tree; the pair becomes one stage. Stage step
    actions must be admissible for the group and strictly decreasing in
    aggressiveness.
    """
    if group not in CURRENT_GROUPS:
        raise GroupMismatch(f"unsupported current-regimen group {group!r}")
    admissible = set(ADMISSIBLE_OPTIONS[group])
    trees = list(trees)
    stages: list[Stage] = []
    i = 0
    while i < len(trees):
        tree = trees[i]
        if tree.options[1] == FIRST_LINE:
            if i + 1 >= len(trees):
                raise InadmissibleStage("first-line router lacks a resolver tree")
            resolver = trees[i + 1]
            if set(resolver.options) != set(FIRST_LINE_OPTIONS):
                raise InadmissibleStage(
                    f"resolver options {resolver.options} are not the first-line monotherapies"
                )
            if tree.options[0] != group:
                raise InadmissibleStage(
                    f"router stay option {tree.options[0]!r} is not the group {group!r}"
                )
            stages.append(RouterStage("start_first_line", tree, resolver))
            i += 2
            continue
        if tree.options[0] != group:
            raise InadmissibleStage(
                f"stage stay option {tree.options[0]!r} is not the group {group!r}"
            )
        if tree.options[1] not in admissible:
            raise InadmissibleStage(
                f"step action {tree.options[1]!r} not admissible for {group}"
            )
        stages.append(TreeStage(f"step_up_{tree.options[1]}", tree))
        i += 1
    if not stages:
        raise InadmissibleStage("pipeline needs at least one stage")
    ranks = [AGGRESSIVENESS_RANK[s.step_action] for s in stages]
    for a, b in zip(ranks, ranks[1:]):
        if b >= a:
            raise OrderingViolation(
                f"stages must step down in aggressiveness, got ranks {ranks}"
            )
    return Pipeline(group=group, stages=tuple(stages))


def recommend(pipeline: Pipeline, visit) -> tuple[str, Trace]:
    """Evaluate the pipeline on a visit (or a feature mapping)."""
    if isinstance(visit, PatientVisit) and visit.current_regimen.label != pipeline.group:
        raise GroupMismatch(
            f"visit is on {visit.current_regimen.label}, pipeline serves {pipeline.group}"
        )
    traces: list[StageTrace] = []
    for stage in pipeline.stages:
        if isinstance(stage, TreeStage):
            action, decisions = _route(stage.tree, visit)
            fired = action == stage.step_action
            traces.append(StageTrace(stage.name, "tree", decisions, action, fired))
            if fired:
                return action, Trace(tuple(traces), action)
        else:
            action, decisions = _route(stage.router, visit)
            fired = action == FIRST_LINE
            traces.append(StageTrace(stage.name, "router", decisions, action, fired))
            if fired:
                final, res_decisions = _route(stage.resolver, visit)
                traces.append(
                    StageTrace(stage.name, "resolver", res_decisions, final, True)
                )
                return final, Trace(tuple(traces), final)
    action = pipeline.terminal_action
    return action, Trace(tuple(traces), action)


def replay_trace(pipeline: Pipeline, trace: Trace) -> str:
    """Re-walk a recorded trace against the pipeline structure and return the
    recommendation it leads to. Raises if the trace does not fit the tree."""
    stages_by_key = {}
    for stage in pipeline.stages:
        if isinstance(stage, TreeStage):
            stages_by_key[(stage.name, "tree")] = stage.tree
        else:
            stages_by_key[(stage.name, "router")] = stage.router
            stages_by_key[(stage.name, "resolver")] = stage.resolver
    final = pipeline.terminal_action
    for st in trace.stages:
        tree = stages_by_key[(st.stage, st.part)]
        node = tree.root
        for d in st.decisions:
            if node.is_leaf or node.feature != d.feature or node.threshold != d.threshold:
                raise ValueError(f"trace does not match stage {st.stage}/{st.part}")
            node = node.left if d.branch == "left" else node.right
        if not node.is_leaf:
            raise ValueError(f"trace stops before a leaf in stage {st.stage}/{st.part}")
        if node.action != st.action:
            raise ValueError(f"trace action mismatch in stage {st.stage}/{st.part}")
        if st.fired and st.part != "router":
            final = st.action
    return final


def _leaf(action: str) -> TreeNode:
    return TreeNode(action=action)


def _split(feature: str, threshold: float, left: TreeNode, right: TreeNode) -> TreeNode:
    return TreeNode(feature=feature, threshold=threshold, left=left, right=right)


def _tree(root: TreeNode, options: tuple[str, str]) -> PolicyTree:
    return PolicyTree(root=root, feature_names=SPLIT_FEATURES, options=options)


def reference_pipelines() -> dict[str, Pipeline]:
    """The four published pipelines, fixed thresholds, no training."""
    no_med = compose(
        NO_MEDICATION,
        [
            _tree(
                _split("hba1c_last", 8.05, _leaf(NO_MEDICATION), _leaf(INSULIN_MONO)),
                (NO_MEDICATION, INSULIN_MONO),
            ),
            _tree(
                _split("hba1c_p25", 6.013, _leaf(NO_MEDICATION), _leaf(FIRST_LINE)),
                (NO_MEDICATION, FIRST_LINE),
            ),
            _tree(
                _split(
                    "kidney_contraindication",
                    0.5,
                    _split(
                        "bmi_last",
                        37.02,
                        _split(
                            "hba1c_last",
                            6.85,
                            _leaf(OTHER_HYPO_MONO),
                            _leaf(METFORMIN_MONO),
                        ),
                        _leaf(OTHER_HYPO_MONO),
                    ),
                    _leaf(OTHER_HYPO_MONO),
                ),
                (OTHER_HYPO_MONO, METFORMIN_MONO),
            ),
        ],
    )
    other_hypo = compose(
        OTHER_HYPO_MONO,
        [
            _tree(
                _split("hba1c_last", 9.05, _leaf(OTHER_HYPO_MONO), _leaf(INSULIN_PLUS_OTHER)),
                (OTHER_HYPO_MONO, INSULIN_PLUS_OTHER),
            ),
            _tree(
                _split(
                    "kidney_contraindication",
                    0.5,
                    _split(
                        "hba1c_last",
                        7.85,
                        _leaf(OTHER_HYPO_MONO),
                        _leaf(METFORMIN_PLUS_OTHER),
                    ),
                    _leaf(OTHER_HYPO_MONO),
                ),
                (OTHER_HYPO_MONO, METFORMIN_PLUS_OTHER),
            ),
        ],
    )
    met_mono = compose(
        METFORMIN_MONO,
        [
            _tree(
                _split("hba1c_last", 8.75, _leaf(METFORMIN_MONO), _leaf(METFORMIN_PLUS_INSULIN)),
                (METFORMIN_MONO, METFORMIN_PLUS_INSULIN),
            ),
            _tree(
                _split("bmi_median", 24.12, _leaf(METFORMIN_MONO), _leaf(METFORMIN_PLUS_OTHER)),
                (METFORMIN_MONO, METFORMIN_PLUS_OTHER),
            ),
        ],
    )
    met_other = compose(
        METFORMIN_PLUS_OTHER,
        [
            _tree(
                _split(
                    "bmi_median",
                    27.35,
                    _leaf(METFORMIN_PLUS_OTHER),
                    _leaf(METFORMIN_INSULIN_OTHER),
                ),
                (METFORMIN_PLUS_OTHER, METFORMIN_INSULIN_OTHER),
            ),
        ],
    )
    return {
        NO_MEDICATION: no_med,
        OTHER_HYPO_MONO: other_hypo,
        METFORMIN_MONO: met_mono,
        METFORMIN_PLUS_OTHER: met_other,
    }


def export_json(pipeline: Pipeline) -> dict:
    stages = []
    for stage in pipeline.stages:
        if isinstance(stage, TreeStage):
            stages.append(
                {"kind": "tree", "name": stage.name, "tree": stage.tree.to_json()}
            )
        else:
            stages.append(
                {
                    "kind": "router",
                    "name": stage.name,
                    "router": stage.router.to_json(),
                    "resolver": stage.resolver.to_json(),
                }
            )
    return {
        "format_version": PIPELINE_FORMAT_VERSION,
        "group": pipeline.group,
        "terminal_action": pipeline.terminal_action,
        "stages": stages,
    }


def import_json(doc: dict) -> Pipeline:
    if not isinstance(doc, dict) or "format_version" not in doc:
        raise MalformedDocument("pipeline document lacks format_version")
    if doc["format_version"] != PIPELINE_FORMAT_VERSION:
        raise SchemaVersionMismatch(
            f"unsupported pipeline format_version {doc['format_version']!r}"
        )
    try:
        trees: list[PolicyTree] = []
        for stage in doc["stages"]:
            if stage["kind"] == "tree":
                trees.append(PolicyTree.from_json(stage["tree"]))
            elif stage["kind"] == "router":
                trees.append(PolicyTree.from_json(stage["router"]))
                trees.append(PolicyTree.from_json(stage["resolver"]))
            else:
                raise MalformedDocument(f"unknown stage kind {stage['kind']!r}")
        return compose(doc["group"], trees)
    except (KeyError, TypeError) as exc:
        raise MalformedDocument(f"malformed pipeline document: {exc}") from None


def export_bundle(pipelines: dict[str, Pipeline]) -> dict:
    return {
        "format_version": PIPELINE_FORMAT_VERSION,
        "pipelines": [export_json(pipelines[g]) for g in CURRENT_GROUPS if g in pipelines],
    }


def import_bundle(doc: dict) -> dict[str, Pipeline]:
    if not isinstance(doc, dict) or "format_version" not in doc:
        raise MalformedDocument("bundle lacks format_version")
    if doc["format_version"] != PIPELINE_FORMAT_VERSION:
        raise SchemaVersionMismatch(
            f"unsupported bundle format_version {doc['format_version']!r}"
        )
    try:
        pipelines = [import_json(p) for p in doc["pipelines"]]
    except (KeyError, TypeError) as exc:
        raise MalformedDocument(f"malformed bundle: {exc}") from None
    return {p.group: p for p in pipelines}


def bundle_digest(doc: dict) -> str:
    return hashlib.sha256(
        json.dumps(doc, sort_keys=True, separators=(",", ":")).encode()
    ).hexdigest()
