"""End-to-end orchestration: inclusion filter, holdout split, per-contrast
trial emulation and tree training, pipeline composition, GTM training, and
the disagreement-set evaluation."""
from __future__ import annotations

from dataclasses import dataclass, replace

from .cohort import Cohort, group_by_current, inclusion_filter
from .config import RunConfig
from .debias import CONTRASTS, MatchedDataset, emulate_trial
from .evaluate import EvaluationReport, GtmSet, evaluate_pipelines, train_gtms
from .forest import derive_seed
from .pipeline import Pipeline, compose, recommend
from .policytree import PolicyTree, estimate_rewards, train_tree
from .preprocess import model_dataset, remove_outliers_p95, split


@dataclass(frozen=True)
class ContrastArtifacts:
    cid: str
    matched: MatchedDataset
    tree: PolicyTree
    train_size: int
    matched_size: int


@dataclass(frozen=True)
class TrainResult:
    pipelines: dict  # group -> Pipeline
    contrasts: dict  # cid -> ContrastArtifacts
    unsupported_count: int


@dataclass(frozen=True)
class ExperimentResult:
    training: TrainResult
    gtms: GtmSet
    report: EvaluationReport
    train_cohort: Cohort
    test_cohort: Cohort


def holdout_split(cohort: Cohort, config: RunConfig) -> tuple[Cohort, Cohort]:
    """Global 80/20 split of the filtered cohort. Trees and GTMs see only the
    first part; the evaluation runs on the second."""
    filtered = inclusion_filter(cohort)
    return split(filtered, derive_seed(config.seed, "holdout"))


def train_pipelines(train_main: Cohort, config: RunConfig) -> TrainResult:
    """Per contrast: model dataset, per-model split, outlier trimming, trial
    emulation, reward estimation, tree training; then compose per group."""
    groups, unsupported = group_by_current(train_main)
    artifacts: dict[str, ContrastArtifacts] = {}
    trees_by_group: dict[str, list[PolicyTree]] = {}
    for contrast in CONTRASTS:
        ds = model_dataset(groups[contrast.group], contrast.targets)
        train, _ = split(ds, derive_seed(config.seed, contrast.cid, "split"))
        train = remove_outliers_p95(train)
        cf_params = replace(
            config.forest, seed=derive_seed(config.seed, contrast.cid, "counterfactual")
        )
        matched = emulate_trial(
            train,
            contrast,
            cf_params,
            buckets=config.buckets,
            keep_fraction=config.keep_fraction,
        )
        rewards = estimate_rewards(matched, replace(config.forest, seed=config.seed))
        tree = train_tree(
            rewards,
            alpha=config.alpha,
            depth=config.tree_depths[contrast.cid],
            weighting=config.weighting,
        )
        artifacts[contrast.cid] = ContrastArtifacts(
            cid=contrast.cid,
            matched=matched,
            tree=tree,
            train_size=len(train),
            matched_size=len(matched.retained),
        )
        trees_by_group.setdefault(contrast.group, []).append(tree)
    pipelines = {g: compose(g, trees) for g, trees in trees_by_group.items()}
    return TrainResult(pipelines, artifacts, len(unsupported))


def run_experiment(cohort: Cohort, config: RunConfig) -> ExperimentResult:
    train_main, test_eval = holdout_split(cohort, config)
    training = train_pipelines(train_main, config)
    gtms = train_gtms(
        train_main, config.forest, seed=config.seed, min_visits=config.gtm_min_visits
    )
    report = evaluate_pipelines(
        training.pipelines, gtms, test_eval, doctor_outcome=config.doctor_outcome
    )
    return ExperimentResult(training, gtms, report, train_main, test_eval)


def pipeline_actions(pipelines: dict, cohort: Cohort) -> dict[str, str]:
    """Recommendation per visit for supported groups, keyed by visit id."""
    actions: dict[str, str] = {}
    for v in cohort:
        group = v.current_regimen.label
        if group in pipelines:
            actions[v.visit_id], _ = recommend(pipelines[group], v)
    return actions
