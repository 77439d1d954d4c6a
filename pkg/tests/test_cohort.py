import pytest

from t2dpolicy.cohort import (
    CSV_COLUMNS,
    CURRENT_GROUPS,
    InvariantViolation,
    MissingColumn,
    ParseFailure,
    Regimen,
    group_by_current,
    inclusion_filter,
    load_cohort,
    save_cohort,
)

from conftest import make_cohort, make_visit


HEADER = ",".join(CSV_COLUMNS)
ROW = "v{i},55.0,F,white,0,8.0,7.2,7.6,7.7,8.1,30.0,28.5,29.0,29.2,30.5,0,0,0,1,0,0,7.4"


def write_csv(tmp_path, rows, header=HEADER):
    path = tmp_path / "cohort.csv"
    path.write_text("\n".join([header] + rows) + "\n")
    return path


class TestLoadCohort:
    def test_round_trip_preserves_rows_and_order(self, tmp_path):
        path = write_csv(tmp_path, [ROW.format(i=i) for i in range(3)])
        cohort = load_cohort(path)
        assert len(cohort) == 3
        assert [v.visit_id for v in cohort] == ["v0", "v1", "v2"]
        out = tmp_path / "again.csv"
        save_cohort(cohort, out)
        assert load_cohort(out).visits == cohort.visits

    def test_save_load_is_bit_exact(self, tmp_path):
        cohort = make_cohort([make_visit(visit_id=f"v{i}", age=40 + i / 3) for i in range(5)])
        p1, p2 = tmp_path / "a.csv", tmp_path / "b.csv"
        save_cohort(cohort, p1)
        save_cohort(load_cohort(p1), p2)
        assert p1.read_bytes() == p2.read_bytes()

    def test_unparseable_number_names_row_and_column(self, tmp_path):
        bad = ROW.format(i=0).replace("8.0,7.2", "abc,7.2")
        path = write_csv(tmp_path, [bad])
        with pytest.raises(ParseFailure) as err:
            load_cohort(path)
        assert err.value.row == 2
        assert err.value.column == "hba1c_last"

    def test_quantile_ordering_violation_is_flagged(self, tmp_path):
        bad = ROW.format(i=0).replace("7.2,7.6", "8.4,7.6")  # p25 > median/p75
        path = write_csv(tmp_path, [bad])
        with pytest.raises(InvariantViolation) as err:
            load_cohort(path)
        assert err.value.row == 2

    def test_missing_column_rejected(self, tmp_path):
        header = ",".join(c for c in CSV_COLUMNS if c != "bmi_median")
        row = ROW.format(i=0)
        path = write_csv(tmp_path, [row], header=header)
        with pytest.raises(MissingColumn, match="bmi_median"):
            load_cohort(path)

    def test_bad_flag_rejected(self, tmp_path):
        bad = ROW.format(i=0).replace(",0,0,0,1,", ",2,0,0,1,")
        path = write_csv(tmp_path, [bad])
        with pytest.raises(ParseFailure):
            load_cohort(path)


class TestVisitValidation:
    def test_ranges(self):
        with pytest.raises(InvariantViolation):
            make_visit(hba1c_last=2.9)
        with pytest.raises(InvariantViolation):
            make_visit(bmi_last=9.0)
        with pytest.raises(InvariantViolation):
            make_visit(age=0.0)

    def test_bmi_quantile_ordering(self):
        with pytest.raises(InvariantViolation):
            make_visit(bmi_p25=31.0, bmi_median=29.0)

    def test_mean_is_unordered(self):
        make_visit(hba1c_mean=9.5)  # mean above p75 is fine

    def test_duplicate_visit_ids_rejected(self):
        with pytest.raises(InvariantViolation):
            make_cohort([make_visit(), make_visit()])

    def test_reduction(self):
        v = make_visit(hba1c_last=8.0, hba1c_after=7.4)
        assert v.reduction() == pytest.approx(0.6)


class TestRegimen:
    def test_labels_are_pure_function_of_flags(self):
        assert Regimen(False, False, 0).label == "NoMedication"
        assert Regimen(False, False, 1).label == "OtherHypoMono"
        assert Regimen(True, False, 0).label == "MetforminMono"
        assert Regimen(True, False, 1).label == "MetforminPlusOther"
        assert Regimen(False, True, 0).label == "InsulinMono"
        assert Regimen(False, True, 1).label == "InsulinPlusOther"
        assert Regimen(True, True, 0).label == "MetforminPlusInsulin"
        assert Regimen(True, True, 1).label == "MetforminInsulinOther"

    def test_from_label_round_trip(self):
        for flags, label in [((True, True, 1), "MetforminInsulinOther")]:
            assert Regimen.from_label(label) == Regimen(*flags)

    def test_other_count_bounded(self):
        with pytest.raises(InvariantViolation):
            Regimen(False, False, 2)


class TestInclusionFilter:
    def test_age_boundary_is_strict(self):
        minor = make_visit(age=17.0)
        boundary = make_visit(visit_id="v2", age=18.0)
        adult = make_visit(visit_id="v3", age=18.5)
        kept = inclusion_filter(make_cohort([minor, boundary, adult]))
        assert [v.visit_id for v in kept] == ["v3"]

    def test_prediabetic_on_no_medication_included(self):
        v = make_visit(
            hba1c_last=5.9, hba1c_p25=5.2, hba1c_median=5.5, hba1c_mean=5.6,
            hba1c_p75=6.0, hba1c_after=5.5,
        )
        assert len(inclusion_filter(make_cohort([v]))) == 1

    def test_treated_patient_below_thresholds_excluded(self):
        v = make_visit(
            current="MetforminMono", prescribed="MetforminMono",
            hba1c_last=6.5, hba1c_p25=6.0, hba1c_median=6.2, hba1c_mean=6.3,
            hba1c_p75=6.8, hba1c_after=6.2,
        )
        assert len(inclusion_filter(make_cohort([v]))) == 0

    def test_hba1c_increase_excluded(self):
        v = make_visit(hba1c_last=8.0, hba1c_after=8.3)
        assert len(inclusion_filter(make_cohort([v]))) == 0

    def test_idempotent(self):
        visits = [
            make_visit(visit_id=f"v{i}", age=16 + 2 * i, hba1c_after=7.2 + 0.3 * (i % 3))
            for i in range(12)
        ]
        cohort = make_cohort(visits)
        once = inclusion_filter(cohort)
        assert inclusion_filter(once) == once

    def test_every_retained_visit_shows_a_decrease(self):
        visits = [
            make_visit(visit_id=f"v{i}", hba1c_after=7.0 + 0.41 * i) for i in range(6)
        ]
        for v in inclusion_filter(make_cohort(visits)):
            assert v.reduction() > 0


class TestGrouping:
    def test_partition_into_four_groups(self):
        visits = [
            make_visit(visit_id=f"v{i}", current=g, prescribed=g)
            for i, g in enumerate(CURRENT_GROUPS)
        ]
        groups, unsupported = group_by_current(make_cohort(visits))
        assert set(groups) == set(CURRENT_GROUPS)
        assert all(len(groups[g]) == 1 for g in CURRENT_GROUPS)
        assert len(unsupported) == 0

    def test_insulin_current_regimen_reported_as_unsupported(self):
        visits = [
            make_visit(visit_id="v0"),
            make_visit(visit_id="v1", current="InsulinMono", prescribed="InsulinMono"),
        ]
        groups, unsupported = group_by_current(make_cohort(visits))
        assert [v.visit_id for v in unsupported] == ["v1"]
        assert sum(len(g) for g in groups.values()) == 1

    def test_empty_cohort_gives_four_empty_groups(self):
        groups, unsupported = group_by_current(make_cohort([]))
        assert set(groups) == set(CURRENT_GROUPS)
        assert all(len(g) == 0 for g in groups.values())
        assert len(unsupported) == 0

    def test_sizes_sum_to_input_minus_exclusions(self):
        visits = [
            make_visit(visit_id=f"v{i}", current=c, prescribed=c)
            for i, c in enumerate(
                ["NoMedication", "MetforminMono", "InsulinMono", "OtherHypoMono",
                 "MetforminPlusInsulin", "MetforminPlusOther"]
            )
        ]
        cohort = make_cohort(visits)
        groups, unsupported = group_by_current(cohort)
        assert sum(len(g) for g in groups.values()) == len(cohort) - len(unsupported)
        assert len(unsupported) == 2
