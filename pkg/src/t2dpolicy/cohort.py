"""Patient-visit data model, CSV ingestion, inclusion criteria, and regimen grouping.

A visit is an independent event: demographics, HbA1c and BMI history
statistics, the current drug regimen, the regimen prescribed at the visit,
and the HbA1c observed after following that prescription.
"""
from __future__ import annotations

import csv
from dataclasses import dataclass
from typing import Iterable, Iterator, NamedTuple

import numpy as np

# Regimen group labels. The first four are the supported *current* regimens;
# recommendations may additionally name the last four.
NO_MEDICATION = "NoMedication"
OTHER_HYPO_MONO = "OtherHypoMono"
METFORMIN_MONO = "MetforminMono"
METFORMIN_PLUS_OTHER = "MetforminPlusOther"
INSULIN_MONO = "InsulinMono"
INSULIN_PLUS_OTHER = "InsulinPlusOther"
METFORMIN_PLUS_INSULIN = "MetforminPlusInsulin"
METFORMIN_INSULIN_OTHER = "MetforminInsulinOther"

CURRENT_GROUPS = (NO_MEDICATION, OTHER_HYPO_MONO, METFORMIN_MONO, METFORMIN_PLUS_OTHER)

ALL_OPTIONS = CURRENT_GROUPS + (
    INSULIN_MONO,
    INSULIN_PLUS_OTHER,
    METFORMIN_PLUS_INSULIN,
    METFORMIN_INSULIN_OTHER,
)

# Pseudo-action used by the no-medication pipeline: "start some first line
# therapy", resolved into a concrete monotherapy by a downstream tree.
FIRST_LINE = "FirstLine"

# Total aggressiveness order used to orient treatment contrasts and to
# validate pipeline stage ordering. Higher is more aggressive:
# insulin triple > insulin double > insulin mono > metformin double >
# metformin mono > other mono > none. Metformin monotherapy is ranked above
# other-hypoglycemic monotherapy only to make the order total; the two sit in
# the same clinical class.
AGGRESSIVENESS_RANK = {
    NO_MEDICATION: 0,
    OTHER_HYPO_MONO: 1,
    METFORMIN_MONO: 2,
    FIRST_LINE: 2,
    METFORMIN_PLUS_OTHER: 3,
    INSULIN_MONO: 4,
    INSULIN_PLUS_OTHER: 5,
    METFORMIN_PLUS_INSULIN: 5,
    METFORMIN_INSULIN_OTHER: 6,
}

# Options a decision pipeline may recommend per current-regimen group,
# including staying on the current regimen.
ADMISSIBLE_OPTIONS = {
    NO_MEDICATION: (NO_MEDICATION, OTHER_HYPO_MONO, METFORMIN_MONO, INSULIN_MONO),
    OTHER_HYPO_MONO: (OTHER_HYPO_MONO, METFORMIN_PLUS_OTHER, INSULIN_PLUS_OTHER),
    METFORMIN_MONO: (METFORMIN_MONO, METFORMIN_PLUS_OTHER, METFORMIN_PLUS_INSULIN),
    METFORMIN_PLUS_OTHER: (METFORMIN_PLUS_OTHER, METFORMIN_INSULIN_OTHER),
}

# Continuous visit features, in canonical order. These drive outlier
# trimming, matching distances, and tree split candidates.
CONTINUOUS_FEATURES = (
    "age",
    "hba1c_last",
    "hba1c_p25",
    "hba1c_median",
    "hba1c_mean",
    "hba1c_p75",
    "bmi_last",
    "bmi_p25",
    "bmi_median",
    "bmi_mean",
    "bmi_p75",
)

# Split candidates for policy trees: the continuous features plus the
# metformin contraindication flag. Sex and race are never split candidates.
SPLIT_FEATURES = CONTINUOUS_FEATURES + ("kidney_contraindication",)

CSV_COLUMNS = (
    "visit_id",
    "age",
    "sex",
    "race",
    "kidney_contraindication",
    "hba1c_last",
    "hba1c_p25",
    "hba1c_median",
    "hba1c_mean",
    "hba1c_p75",
    "bmi_last",
    "bmi_p25",
    "bmi_median",
    "bmi_mean",
    "bmi_p75",
    "cur_metformin",
    "cur_insulin",
    "cur_other",
    "rx_metformin",
    "rx_insulin",
    "rx_other",
    "hba1c_after",
)


class CohortError(Exception):
    """Base class for cohort ingestion and validation failures."""


class MissingColumn(CohortError):
    def __init__(self, detail: str):
        super().__init__(f"CSV header does not match the documented schema: {detail}")


class ParseFailure(CohortError):
    def __init__(self, row: int, column: str, value: str):
        self.row = row
        self.column = column
        super().__init__(f"row {row}: cannot parse column {column!r} from {value!r}")


class InvariantViolation(CohortError):
    def __init__(self, detail: str, row: int | None = None):
        self.row = row
        self.detail = detail
        where = f"row {row}: " if row is not None else ""
        super().__init__(f"{where}{detail}")


_LABEL_BY_FLAGS = {
    (False, False, 0): NO_MEDICATION,
    (False, False, 1): OTHER_HYPO_MONO,
    (True, False, 0): METFORMIN_MONO,
    (True, False, 1): METFORMIN_PLUS_OTHER,
    (False, True, 0): INSULIN_MONO,
    (False, True, 1): INSULIN_PLUS_OTHER,
    (True, True, 0): METFORMIN_PLUS_INSULIN,
    (True, True, 1): METFORMIN_INSULIN_OTHER,
}
_FLAGS_BY_LABEL = {label: flags for flags, label in _LABEL_BY_FLAGS.items()}


@dataclass(frozen=True)
class Regimen:
    """A drug combination: metformin and insulin flags plus a count (0 or 1)
    of other hypoglycemic agents."""

    metformin: bool
    insulin: bool
    other_hypoglycemic: int

    def __post_init__(self):
        if self.other_hypoglycemic not in (0, 1):
            raise InvariantViolation(
                f"other_hypoglycemic must be 0 or 1, got {self.other_hypoglycemic}"
            )

    @property
    def label(self) -> str:
        return _LABEL_BY_FLAGS[(self.metformin, self.insulin, self.other_hypoglycemic)]

    @classmethod
    def from_label(cls, label: str) -> "Regimen":
        try:
            flags = _FLAGS_BY_LABEL[label]
        except KeyError:
            raise InvariantViolation(f"unknown regimen label {label!r}") from None
        return cls(*flags)


@dataclass(frozen=True)
class PatientVisit:
    visit_id: str
    age: float
    sex: str
    race: str
    kidney_contraindication: bool
    hba1c_last: float
    hba1c_p25: float
    hba1c_median: float
    hba1c_mean: float
    hba1c_p75: float
    bmi_last: float
    bmi_p25: float
    bmi_median: float
    bmi_mean: float
    bmi_p75: float
    current_regimen: Regimen
    prescribed_regimen: Regimen
    hba1c_after: float

    def __post_init__(self):
        self.validate()

    def validate(self) -> None:
        if not self.age > 0:
            raise InvariantViolation(f"age must be positive, got {self.age}")
        for name in ("hba1c_last", "hba1c_p25", "hba1c_median", "hba1c_mean",
                     "hba1c_p75", "hba1c_after"):
            v = getattr(self, name)
            if not 3.0 < v < 20.0:
                raise InvariantViolation(f"{name}={v} outside (3, 20)")
        for name in ("bmi_last", "bmi_p25", "bmi_median", "bmi_mean", "bmi_p75"):
            v = getattr(self, name)
            if not 10.0 < v < 80.0:
                raise InvariantViolation(f"{name}={v} outside (10, 80)")
        if not self.hba1c_p25 <= self.hba1c_median <= self.hba1c_p75:
            raise InvariantViolation(
                "HbA1c quantiles out of order: "
                f"p25={self.hba1c_p25}, median={self.hba1c_median}, p75={self.hba1c_p75}"
            )
        if not self.bmi_p25 <= self.bmi_median <= self.bmi_p75:
            raise InvariantViolation(
                "BMI quantiles out of order: "
                f"p25={self.bmi_p25}, median={self.bmi_median}, p75={self.bmi_p75}"
            )

    def reduction(self) -> float:
        """HbA1c decrease achieved after the prescribed regimen."""
        return self.hba1c_last - self.hba1c_after


def reduction(v: PatientVisit) -> float:
    return v.reduction()


@dataclass(frozen=True)
class Cohort:
    """An ordered, immutable collection of visits with unique ids."""

    visits: tuple[PatientVisit, ...]
    provenance: str = ""

    def __post_init__(self):
        seen: set[str] = set()
        for v in self.visits:
            if v.visit_id in seen:
                raise InvariantViolation(f"duplicate visit_id {v.visit_id!r}")
            seen.add(v.visit_id)

    def __len__(self) -> int:
        return len(self.visits)

    def __iter__(self) -> Iterator[PatientVisit]:
        return iter(self.visits)

    def __getitem__(self, i: int) -> PatientVisit:
        return self.visits[i]

    def with_visits(self, visits: Iterable[PatientVisit]) -> "Cohort":
        return Cohort(tuple(visits), self.provenance)


def _parse_float(raw: str, row: int, column: str) -> float:
    try:
        return float(raw)
    except ValueError:
        raise ParseFailure(row, column, raw) from None


def _parse_flag(raw: str, row: int, column: str) -> bool:
    if raw == "0":
        return False
    if raw == "1":
        return True
    raise ParseFailure(row, column, raw)


def load_cohort(path, provenance: str | None = None) -> Cohort:
    """Read a cohort CSV. The header must match CSV_COLUMNS exactly."""
    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        try:
            header = next(reader)
        except StopIteration:
            raise MissingColumn("file is empty") from None
        if tuple(header) != CSV_COLUMNS:
            missing = [c for c in CSV_COLUMNS if c not in header]
            if missing:
                raise MissingColumn(f"missing columns {missing}")
            raise MissingColumn(f"unexpected header {header}")
        visits = []
        for row_no, row in enumerate(reader, start=2):
            if len(row) != len(CSV_COLUMNS):
                raise ParseFailure(row_no, "<row>", ",".join(row))
            rec = dict(zip(CSV_COLUMNS, row))
            cur = Regimen(
                _parse_flag(rec["cur_metformin"], row_no, "cur_metformin"),
                _parse_flag(rec["cur_insulin"], row_no, "cur_insulin"),
                int(_parse_flag(rec["cur_other"], row_no, "cur_other")),
            )
            rx = Regimen(
                _parse_flag(rec["rx_metformin"], row_no, "rx_metformin"),
                _parse_flag(rec["rx_insulin"], row_no, "rx_insulin"),
                int(_parse_flag(rec["rx_other"], row_no, "rx_other")),
            )
            try:
                visit = PatientVisit(
                    visit_id=rec["visit_id"],
                    age=_parse_float(rec["age"], row_no, "age"),
                    sex=rec["sex"],
                    race=rec["race"],
                    kidney_contraindication=_parse_flag(
                        rec["kidney_contraindication"], row_no, "kidney_contraindication"
                    ),
                    hba1c_last=_parse_float(rec["hba1c_last"], row_no, "hba1c_last"),
                    hba1c_p25=_parse_float(rec["hba1c_p25"], row_no, "hba1c_p25"),
                    hba1c_median=_parse_float(rec["hba1c_median"], row_no, "hba1c_median"),
                    hba1c_mean=_parse_float(rec["hba1c_mean"], row_no, "hba1c_mean"),
                    hba1c_p75=_parse_float(rec["hba1c_p75"], row_no, "hba1c_p75"),
                    bmi_last=_parse_float(rec["bmi_last"], row_no, "bmi_last"),
                    bmi_p25=_parse_float(rec["bmi_p25"], row_no, "bmi_p25"),
                    bmi_median=_parse_float(rec["bmi_median"], row_no, "bmi_median"),
                    bmi_mean=_parse_float(rec["bmi_mean"], row_no, "bmi_mean"),
                    bmi_p75=_parse_float(rec["bmi_p75"], row_no, "bmi_p75"),
                    current_regimen=cur,
                    prescribed_regimen=rx,
                    hba1c_after=_parse_float(rec["hba1c_after"], row_no, "hba1c_after"),
                )
            except InvariantViolation as exc:
                raise InvariantViolation(exc.detail, row=row_no) from None
            visits.append(visit)
    return Cohort(tuple(visits), provenance if provenance is not None else str(path))


def save_cohort(cohort: Cohort, path) -> None:
    """Write a cohort CSV that round-trips through load_cohort bit-exactly."""
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(CSV_COLUMNS)
        for v in cohort:
            writer.writerow(
                [
                    v.visit_id,
                    repr(v.age),
                    v.sex,
                    v.race,
                    int(v.kidney_contraindication),
                    repr(v.hba1c_last),
                    repr(v.hba1c_p25),
                    repr(v.hba1c_median),
                    repr(v.hba1c_mean),
                    repr(v.hba1c_p75),
                    repr(v.bmi_last),
                    repr(v.bmi_p25),
                    repr(v.bmi_median),
                    repr(v.bmi_mean),
                    repr(v.bmi_p75),
                    int(v.current_regimen.metformin),
                    int(v.current_regimen.insulin),
                    v.current_regimen.other_hypoglycemic,
                    int(v.prescribed_regimen.metformin),
                    int(v.prescribed_regimen.insulin),
                    v.prescribed_regimen.other_hypoglycemic,
                    repr(v.hba1c_after),
                ]
            )


def _included(v: PatientVisit) -> bool:
    if not v.age > 18:
        return False
    if v.current_regimen.label == NO_MEDICATION:
        if not (v.hba1c_last >= 5.7 or v.hba1c_p75 >= 7.0):
            return False
    else:
        if not (v.hba1c_last >= 7.0 or v.hba1c_p75 >= 7.0):
            return False
    return v.hba1c_after < v.hba1c_last


def inclusion_filter(cohort: Cohort) -> Cohort:
    """Apply the study inclusion criteria.

    Retains visits where the patient is an adult (age strictly above 18),
    the glycemic history justifies treatment consideration (thresholds differ
    for patients on no medication versus on medication), and the visit shows a
    decrease in HbA1c after the prescription. Idempotent.
    """
    return cohort.with_visits(v for v in cohort if _included(v))


class GroupedCohorts(NamedTuple):
    groups: dict[str, Cohort]
    unsupported: Cohort


def group_by_current(cohort: Cohort) -> GroupedCohorts:
    """Partition by current-regimen group.

    Visits whose current regimen falls outside the four supported groups
    (for example patients already on insulin) are returned separately in
    ``unsupported`` rather than raised on.
    """
    buckets: dict[str, list[PatientVisit]] = {g: [] for g in CURRENT_GROUPS}
    outside: list[PatientVisit] = []
    for v in cohort:
        label = v.current_regimen.label
        if label in buckets:
            buckets[label].append(v)
        else:
            outside.append(v)
    groups = {g: cohort.with_visits(vs) for g, vs in buckets.items()}
    return GroupedCohorts(groups, cohort.with_visits(outside))


def regressor_schema(visits: Iterable[PatientVisit]) -> tuple[str, ...]:
    """Feature names for outcome regressors: continuous features, the
    contraindication flag, and one-hot demographic indicators derived from
    the categories observed in ``visits``."""
    sexes = sorted({v.sex for v in visits})
    races = sorted({v.race for v in visits})
    onehot = tuple(f"sex={s}" for s in sexes) + tuple(f"race={r}" for r in races)
    return SPLIT_FEATURES + onehot


def feature_value(v: PatientVisit, name: str) -> float:
    if name.startswith("sex="):
        return 1.0 if v.sex == name[4:] else 0.0
    if name.startswith("race="):
        return 1.0 if v.race == name[5:] else 0.0
    if name == "kidney_contraindication":
        return 1.0 if v.kidney_contraindication else 0.0
    return float(getattr(v, name))


def design_matrix(visits: Iterable[PatientVisit], feature_names: Iterable[str]) -> np.ndarray:
    names = tuple(feature_names)
    rows = [[feature_value(v, n) for n in names] for v in visits]
    return np.asarray(rows, dtype=np.float64).reshape(len(rows), len(names))
