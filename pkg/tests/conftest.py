import numpy as np
import pytest

from t2dpolicy.cohort import Cohort, PatientVisit, Regimen
from t2dpolicy.forest import ForestParams, fit_forest


def make_visit(
    visit_id="v1",
    age=55.0,
    sex="F",
    race="white",
    kidney_contraindication=False,
    hba1c_last=8.0,
    hba1c_p25=7.2,
    hba1c_median=7.6,
    hba1c_mean=7.7,
    hba1c_p75=8.1,
    bmi_last=30.0,
    bmi_p25=28.5,
    bmi_median=29.0,
    bmi_mean=29.2,
    bmi_p75=30.5,
    current="NoMedication",
    prescribed="NoMedication",
    hba1c_after=7.4,
) -> PatientVisit:
    return PatientVisit(
        visit_id=visit_id,
        age=age,
        sex=sex,
        race=race,
        kidney_contraindication=kidney_contraindication,
        hba1c_last=hba1c_last,
        hba1c_p25=hba1c_p25,
        hba1c_median=hba1c_median,
        hba1c_mean=hba1c_mean,
        hba1c_p75=hba1c_p75,
        bmi_last=bmi_last,
        bmi_p25=bmi_p25,
        bmi_median=bmi_median,
        bmi_mean=bmi_mean,
        bmi_p75=bmi_p75,
        current_regimen=Regimen.from_label(current),
        prescribed_regimen=Regimen.from_label(prescribed),
        hba1c_after=hba1c_after,
    )


def make_cohort(visits, provenance="test") -> Cohort:
    return Cohort(tuple(visits), provenance)


@pytest.fixture(scope="session", autouse=True)
def warm_numba_kernels():
    # compile the forest kernels once so timed acceptance budgets measure the
    # algorithms, not JIT compilation
    rng = np.random.default_rng(0)
    X = rng.normal(size=(30, 3))
    fit_forest(X, X[:, 0], ForestParams(tree_count=2, max_depth=2, seed=0))
