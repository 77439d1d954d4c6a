"""Ground-truth models and pipeline-versus-doctor evaluation.

One outcome regressor per (current regimen group, recommended option) pair,
fit to predict the achieved HbA1c reduction. On test visits where a pipeline
disagrees with the doctor, the pipeline side is scored by the matching GTM
and the doctor side by the observed reduction (or, behind a switch, by the
doctor pair's GTM); group and pooled medians summarize the comparison.
"""
from __future__ import annotations

import csv
import json
from dataclasses import dataclass, replace

import numpy as np

from .cohort import (
    ADMISSIBLE_OPTIONS,
    CURRENT_GROUPS,
    Cohort,
    PatientVisit,
    design_matrix,
    regressor_schema,
)
from .forest import ForestModel, ForestParams, MalformedDocument, SchemaVersionMismatch, derive_seed, fit_forest
from .pipeline import Pipeline, recommend
from .preprocess import percentile

GTM_FORMAT_VERSION = 1

DEFAULT_MIN_VISITS = 30


class MissingGtm(ValueError):
    pass


class InsufficientData(ValueError):
    pass


@dataclass(frozen=True)
class GtmSet:
    models: dict  # (group, option) -> ForestModel
    insufficient: tuple[tuple[str, str], ...]
    min_visits: int

    def get(self, group: str, option: str) -> ForestModel | None:
        return self.models.get((group, option))

    def predict_reduction(self, group: str, option: str, visit) -> float:
        model = self.get(group, option)
        if model is None:
            raise MissingGtm(f"no ground-truth model for ({group}, {option})")
        if isinstance(visit, PatientVisit):
            row = design_matrix([visit], model.feature_names)
        else:
            row = np.array([[_mapping_value(visit, n) for n in model.feature_names]])
        return float(model.predict(row)[0])

    def to_json(self) -> dict:
        entries = []
        for (group, option), model in sorted(self.models.items()):
            entries.append({"group": group, "option": option, "forest": model.to_json()})
        return {
            "format_version": GTM_FORMAT_VERSION,
            "min_visits": self.min_visits,
            "insufficient": [list(pair) for pair in self.insufficient],
            "models": entries,
        }

    @classmethod
    def from_json(cls, doc: dict) -> "GtmSet":
        if not isinstance(doc, dict) or "format_version" not in doc:
            raise MalformedDocument("GTM document lacks format_version")
        if doc["format_version"] != GTM_FORMAT_VERSION:
            raise SchemaVersionMismatch(
                f"unsupported GTM format_version {doc['format_version']!r}"
            )
        try:
            models = {
                (e["group"], e["option"]): ForestModel.from_json(e["forest"])
                for e in doc["models"]
            }
            insufficient = tuple((g, o) for g, o in doc["insufficient"])
            return cls(models, insufficient, doc["min_visits"])
        except (KeyError, TypeError) as exc:
            raise MalformedDocument(f"malformed GTM document: {exc}") from None


def _mapping_value(features, name: str) -> float:
    if name.startswith("sex="):
        return 1.0 if features.get("sex") == name[4:] else 0.0
    if name.startswith("race="):
        return 1.0 if features.get("race") == name[5:] else 0.0
    try:
        return float(features[name])
    except (KeyError, TypeError):
        raise MissingGtm(f"feature {name!r} unavailable for GTM prediction") from None


def train_gtms(
    train: Cohort,
    params: ForestParams,
    seed: int = 0,
    min_visits: int = DEFAULT_MIN_VISITS,
) -> GtmSet:
    """Fit one reduction regressor per (group, recommendable option) pair.

    Pairs with fewer than ``min_visits`` matching training visits are listed
    as insufficient and produce no model; evaluation later counts (rather
    than fails on) recommendations that hit such pairs.
    """
    models: dict = {}
    insufficient: list[tuple[str, str]] = []
    for group in CURRENT_GROUPS:
        for option in ADMISSIBLE_OPTIONS[group]:
            visits = [
                v
                for v in train
                if v.current_regimen.label == group
                and v.prescribed_regimen.label == option
            ]
            if len(visits) < min_visits:
                insufficient.append((group, option))
                continue
            schema = regressor_schema(visits)
            model = fit_forest(
                design_matrix(visits, schema),
                np.array([v.reduction() for v in visits]),
                replace(params, seed=derive_seed(seed, "gtm", group, option)),
                feature_names=schema,
            )
            models[(group, option)] = model
    return GtmSet(models, tuple(insufficient), min_visits)


@dataclass(frozen=True)
class DisagreementRow:
    visit_id: str
    group: str
    recommendation: str
    prescribed: str
    pipeline_reduction: float
    doctor_reduction: float


@dataclass(frozen=True)
class GroupResult:
    group: str
    visits: int
    agreements: int
    disagreements: int
    excluded_missing_gtm: int
    median_pipeline: float | None
    median_doctor: float | None

    @property
    def difference(self) -> float | None:
        if self.median_pipeline is None or self.median_doctor is None:
            return None
        return self.median_pipeline - self.median_doctor


@dataclass(frozen=True)
class EvaluationReport:
    groups: dict  # group -> GroupResult
    overall: GroupResult
    rows: tuple[DisagreementRow, ...]
    insufficient: tuple[tuple[str, str], ...]
    doctor_outcome: str

    def to_json(self) -> dict:
        def result_json(r: GroupResult) -> dict:
            return {
                "visits": r.visits,
                "agreements": r.agreements,
                "disagreements": r.disagreements,
                "excluded_missing_gtm": r.excluded_missing_gtm,
                "median_pipeline": r.median_pipeline,
                "median_doctor": r.median_doctor,
                "difference": r.difference,
            }

        return {
            "doctor_outcome": self.doctor_outcome,
            "groups": {g: result_json(r) for g, r in sorted(self.groups.items())},
            "overall": result_json(self.overall),
            "insufficient_gtm_pairs": [list(p) for p in self.insufficient],
        }

    def to_text(self) -> str:
        header = (
            f"{'group':22s} {'visits':>7s} {'agree':>7s} {'disagree':>9s} "
            f"{'no-GTM':>7s} {'median(pipe)':>13s} {'median(dr)':>11s} {'diff':>7s}"
        )
        lines = [header, "-" * len(header)]

        def fmt(x: float | None) -> str:
            return "-" if x is None else f"{x:.3f}"

        for g in sorted(self.groups):
            r = self.groups[g]
            lines.append(
                f"{g:22s} {r.visits:7d} {r.agreements:7d} {r.disagreements:9d} "
                f"{r.excluded_missing_gtm:7d} {fmt(r.median_pipeline):>13s} "
                f"{fmt(r.median_doctor):>11s} {fmt(r.difference):>7s}"
            )
        r = self.overall
        lines.append("-" * len(header))
        lines.append(
            f"{'overall':22s} {r.visits:7d} {r.agreements:7d} {r.disagreements:9d} "
            f"{r.excluded_missing_gtm:7d} {fmt(r.median_pipeline):>13s} "
            f"{fmt(r.median_doctor):>11s} {fmt(r.difference):>7s}"
        )
        return "\n".join(lines)


def _summarize(group: str, visits: int, agreements: int, excluded: int, rows) -> GroupResult:
    pipe = [r.pipeline_reduction for r in rows]
    doc = [r.doctor_reduction for r in rows]
    return GroupResult(
        group=group,
        visits=visits,
        agreements=agreements,
        disagreements=len(rows),
        excluded_missing_gtm=excluded,
        median_pipeline=percentile(pipe, 0.5) if pipe else None,
        median_doctor=percentile(doc, 0.5) if doc else None,
    )


def evaluate_pipelines(
    pipelines: dict[str, Pipeline],
    gtms: GtmSet,
    test: Cohort,
    doctor_outcome: str = "observed",
) -> EvaluationReport:
    """Compare pipeline recommendations against the doctors' prescriptions
    on the disagreement set of the test cohort."""
    if doctor_outcome not in ("observed", "gtm"):
        raise ValueError(f"unknown doctor_outcome mode {doctor_outcome!r}")
    rows_by_group: dict[str, list[DisagreementRow]] = {g: [] for g in CURRENT_GROUPS}
    counts = {g: {"visits": 0, "agree": 0, "excluded": 0} for g in CURRENT_GROUPS}
    for v in test:
        group = v.current_regimen.label
        if group not in pipelines:
            continue
        counts[group]["visits"] += 1
        rec, _ = recommend(pipelines[group], v)
        prescribed = v.prescribed_regimen.label
        if rec == prescribed:
            counts[group]["agree"] += 1
            continue
        try:
            pipeline_red = gtms.predict_reduction(group, rec, v)
            if doctor_outcome == "gtm":
                doctor_red = gtms.predict_reduction(group, prescribed, v)
            else:
                doctor_red = v.reduction()
        except MissingGtm:
            counts[group]["excluded"] += 1
            continue
        rows_by_group[group].append(
            DisagreementRow(v.visit_id, group, rec, prescribed, pipeline_red, doctor_red)
        )
    groups = {
        g: _summarize(g, counts[g]["visits"], counts[g]["agree"], counts[g]["excluded"], rows_by_group[g])
        for g in CURRENT_GROUPS
    }
    all_rows = [r for g in CURRENT_GROUPS for r in rows_by_group[g]]
    overall = _summarize(
        "overall",
        sum(c["visits"] for c in counts.values()),
        sum(c["agree"] for c in counts.values()),
        sum(c["excluded"] for c in counts.values()),
        all_rows,
    )
    return EvaluationReport(
        groups=groups,
        overall=overall,
        rows=tuple(all_rows),
        insufficient=gtms.insufficient,
        doctor_outcome=doctor_outcome,
    )


def export_disagreements_csv(report: EvaluationReport, path) -> None:
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(
            [
                "visit_id",
                "group",
                "recommendation",
                "prescribed",
                "pipeline_reduction",
                "doctor_reduction",
            ]
        )
        for r in report.rows:
            writer.writerow(
                [
                    r.visit_id,
                    r.group,
                    r.recommendation,
                    r.prescribed,
                    repr(r.pipeline_reduction),
                    repr(r.doctor_reduction),
                ]
            )
