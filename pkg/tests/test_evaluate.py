import json

import numpy as np
import pytest

from t2dpolicy.cohort import ADMISSIBLE_OPTIONS, CURRENT_GROUPS, NO_MEDICATION, inclusion_filter
from t2dpolicy.evaluate import (
    GtmSet,
    MissingGtm,
    evaluate_pipelines,
    export_disagreements_csv,
    train_gtms,
)
from t2dpolicy.forest import ForestParams
from t2dpolicy.pipeline import reference_pipelines
from t2dpolicy.synthgen import GeneratorConfig, generate

from conftest import make_cohort, make_visit

FAST = ForestParams(tree_count=20, max_depth=6)


def visits_for_pair(group, option, n, start=0, **overrides):
    return [
        make_visit(
            visit_id=f"{group}-{option}-{start + i}",
            current=group,
            prescribed=option,
            age=40.0 + i,
            **overrides,
        )
        for i in range(n)
    ]


class TestTrainGtms:
    def test_single_pair_cohort_trains_one_model(self):
        train = make_cohort(visits_for_pair(NO_MEDICATION, "InsulinMono", 35))
        gtms = train_gtms(train, FAST, min_visits=30)
        assert set(gtms.models) == {(NO_MEDICATION, "InsulinMono")}
        expected_pairs = sum(len(ADMISSIBLE_OPTIONS[g]) for g in CURRENT_GROUPS)
        assert len(gtms.insufficient) == expected_pairs - 1

    def test_constant_reduction_recovered(self):
        train = make_cohort(
            visits_for_pair(
                NO_MEDICATION, "InsulinMono", 40, hba1c_last=8.0, hba1c_after=7.0
            )
        )
        gtms = train_gtms(train, FAST, min_visits=30)
        pred = gtms.predict_reduction(NO_MEDICATION, "InsulinMono", make_visit())
        assert pred == 1.0

    def test_gtm_error_against_known_effects(self):
        cohort, gt = generate(GeneratorConfig(n_visits=4000, seed=61))
        train = inclusion_filter(cohort)
        gtms = train_gtms(train, ForestParams(tree_count=40, max_depth=8), min_visits=30)
        assert gtms.models, "expected at least one trainable pair"
        for (group, option), _ in gtms.models.items():
            errs = [
                abs(
                    gtms.predict_reduction(group, option, v)
                    - gt.options[v.visit_id][option]
                )
                for v in train
                if v.current_regimen.label == group
                and v.prescribed_regimen.label == option
            ]
            assert np.mean(errs) < 0.3, (group, option)

    def test_serialization_round_trip(self):
        train = make_cohort(
            visits_for_pair(NO_MEDICATION, "InsulinMono", 35)
            + visits_for_pair(NO_MEDICATION, "NoMedication", 35)
        )
        gtms = train_gtms(train, FAST, min_visits=30)
        doc = json.loads(json.dumps(gtms.to_json()))
        again = GtmSet.from_json(doc)
        v = make_visit()
        assert again.predict_reduction(NO_MEDICATION, "InsulinMono", v) == pytest.approx(
            gtms.predict_reduction(NO_MEDICATION, "InsulinMono", v)
        )
        assert again.insufficient == gtms.insufficient


class TestEvaluatePipelines:
    def _gtms_with_constant(self, group, option, value, n=40):
        train = make_cohort(
            visits_for_pair(group, option, n, hba1c_last=8.0, hba1c_after=8.0 - value)
        )
        return train_gtms(train, FAST, min_visits=30)

    def test_full_agreement_leaves_medians_undefined(self):
        pipelines = reference_pipelines()
        test = make_cohort(
            [make_visit(visit_id="a", hba1c_last=9.0, prescribed="InsulinMono",
                        hba1c_after=8.0)]
        )
        gtms = self._gtms_with_constant(NO_MEDICATION, "InsulinMono", 1.0)
        report = evaluate_pipelines(pipelines, gtms, test)
        assert report.overall.disagreements == 0
        assert report.overall.agreements == 1
        assert report.overall.median_pipeline is None
        assert report.overall.difference is None

    def test_single_disagreement_medians(self):
        pipelines = reference_pipelines()
        # pipeline will say insulin (hba1c 9.0); doctor prescribed staying
        test = make_cohort(
            [make_visit(visit_id="d", hba1c_last=9.0, prescribed="NoMedication",
                        hba1c_after=8.2)]
        )
        gtms = self._gtms_with_constant(NO_MEDICATION, "InsulinMono", 1.2)
        report = evaluate_pipelines(pipelines, gtms, test)
        r = report.groups[NO_MEDICATION]
        assert r.disagreements == 1
        assert r.median_pipeline == pytest.approx(1.2)
        assert r.median_doctor == pytest.approx(0.8)
        assert r.difference == pytest.approx(0.4)

    def test_missing_gtm_pair_excluded_and_counted(self):
        pipelines = reference_pipelines()
        test = make_cohort(
            [make_visit(visit_id="d", hba1c_last=9.0, prescribed="NoMedication",
                        hba1c_after=8.2)]
        )
        gtms = self._gtms_with_constant(NO_MEDICATION, "NoMedication", 0.3)
        report = evaluate_pipelines(pipelines, gtms, test)
        r = report.groups[NO_MEDICATION]
        assert r.excluded_missing_gtm == 1
        assert r.disagreements == 0
        assert r.visits == r.agreements + r.disagreements + r.excluded_missing_gtm

    def test_doctor_side_can_use_gtm(self):
        pipelines = reference_pipelines()
        test = make_cohort(
            [make_visit(visit_id="d", hba1c_last=9.0, prescribed="NoMedication",
                        hba1c_after=8.2)]
        )
        train = make_cohort(
            visits_for_pair(NO_MEDICATION, "InsulinMono", 40, hba1c_last=8.0, hba1c_after=6.8)
            + visits_for_pair(NO_MEDICATION, "NoMedication", 40, hba1c_last=8.0, hba1c_after=7.5)
        )
        gtms = train_gtms(train, FAST, min_visits=30)
        report = evaluate_pipelines(pipelines, gtms, test, doctor_outcome="gtm")
        r = report.groups[NO_MEDICATION]
        assert r.median_pipeline == pytest.approx(1.2)
        assert r.median_doctor == pytest.approx(0.5)

    def test_counts_partition_per_group(self):
        cohort, _ = generate(GeneratorConfig(n_visits=1200, seed=71))
        filtered = inclusion_filter(cohort)
        gtms = train_gtms(filtered, FAST, min_visits=30)
        report = evaluate_pipelines(reference_pipelines(), gtms, filtered)
        for g, r in report.groups.items():
            assert r.visits == r.agreements + r.disagreements + r.excluded_missing_gtm

    def test_report_is_deterministic(self):
        cohort, _ = generate(GeneratorConfig(n_visits=900, seed=73))
        filtered = inclusion_filter(cohort)
        gtms = train_gtms(filtered, FAST, min_visits=30)
        r1 = evaluate_pipelines(reference_pipelines(), gtms, filtered)
        r2 = evaluate_pipelines(reference_pipelines(), gtms, filtered)
        assert r1.to_json() == r2.to_json()

    def test_emitters(self, tmp_path):
        cohort, _ = generate(GeneratorConfig(n_visits=900, seed=79))
        filtered = inclusion_filter(cohort)
        gtms = train_gtms(filtered, FAST, min_visits=30)
        report = evaluate_pipelines(reference_pipelines(), gtms, filtered)
        text = report.to_text()
        assert "overall" in text and "median(pipe)" in text
        doc = report.to_json()
        assert set(doc["groups"]) <= set(CURRENT_GROUPS)
        path = tmp_path / "rows.csv"
        export_disagreements_csv(report, path)
        lines = path.read_text().splitlines()
        assert lines[0].startswith("visit_id,group,recommendation")
        assert len(lines) == 1 + report.overall.disagreements

    def test_invalid_mode_rejected(self):
        with pytest.raises(ValueError):
            evaluate_pipelines({}, GtmSet({}, (), 30), make_cohort([]), doctor_outcome="x")
