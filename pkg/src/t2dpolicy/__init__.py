"""Treatment-progression policy trees for type 2 diabetes visit data."""

from .cohort import (
    Cohort,
    PatientVisit,
    Regimen,
    group_by_current,
    inclusion_filter,
    load_cohort,
    save_cohort,
)
from .config import RunConfig
from .debias import CONTRASTS, Contrast, emulate_trial
from .evaluate import evaluate_pipelines, train_gtms
from .experiment import run_experiment, train_pipelines
from .forest import ForestModel, ForestParams, fit_forest
from .pipeline import Pipeline, compose, recommend, reference_pipelines
from .policytree import PolicyTree, estimate_rewards, predict_action, train_tree
from .synthgen import GeneratorConfig, GroundTruth, generate, true_regret

__version__ = "0.1.0"

__all__ = [
    "Cohort",
    "PatientVisit",
    "Regimen",
    "RunConfig",
    "Contrast",
    "CONTRASTS",
    "ForestModel",
    "ForestParams",
    "GeneratorConfig",
    "GroundTruth",
    "Pipeline",
    "PolicyTree",
    "compose",
    "emulate_trial",
    "estimate_rewards",
    "evaluate_pipelines",
    "fit_forest",
    "generate",
    "group_by_current",
    "inclusion_filter",
    "load_cohort",
    "predict_action",
    "recommend",
    "reference_pipelines",
    "run_experiment",
    "save_cohort",
    "train_gtms",
    "train_pipelines",
    "train_tree",
    "true_regret",
    "__version__",
]
