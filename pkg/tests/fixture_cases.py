"""Hand-traced recommendation fixtures for the published reference pipelines.

Each case is a complete feature document plus the recommendation the
published thresholds dictate. Boundary cases sit 0.01 on either side of
every published threshold, in a context where that threshold decides the
outcome.
"""

BASE_FEATURES = {
    "age": 50.0,
    "hba1c_last": 7.5,
    "hba1c_p25": 6.5,
    "hba1c_median": 7.0,
    "hba1c_mean": 7.0,
    "hba1c_p75": 7.6,
    "bmi_last": 30.0,
    "bmi_p25": 28.0,
    "bmi_median": 29.0,
    "bmi_mean": 29.0,
    "bmi_p75": 30.5,
    "kidney_contraindication": 0.0,
}


def case(name, group, expected, **overrides):
    return {
        "name": name,
        "group": group,
        "features": {**BASE_FEATURES, **overrides},
        "expected": expected,
    }


NINE_CASES = [
    case("nomed_high_hba1c_insulin", "NoMedication", "InsulinMono", hba1c_last=9.0),
    case("nomed_low_p25_stay", "NoMedication", "NoMedication", hba1c_p25=5.8),
    case("nomed_first_line_metformin", "NoMedication", "MetforminMono"),
    case(
        "nomed_contraindicated_other_hypo",
        "NoMedication",
        "OtherHypoMono",
        kidney_contraindication=1.0,
    ),
    case("otherhypo_very_high_insulin", "OtherHypoMono", "InsulinPlusOther", hba1c_last=9.5),
    case("otherhypo_add_metformin", "OtherHypoMono", "MetforminPlusOther", hba1c_last=8.2),
    case("metmono_very_high_insulin", "MetforminMono", "MetforminPlusInsulin", hba1c_last=8.8),
    case(
        "metmono_low_bmi_stay",
        "MetforminMono",
        "MetforminMono",
        hba1c_last=8.0,
        bmi_p25=20.0,
        bmi_median=23.0,
        bmi_mean=24.0,
        bmi_p75=31.0,
    ),
    case(
        "metother_high_bmi_triple",
        "MetforminPlusOther",
        "MetforminInsulinOther",
        hba1c_last=8.0,
        bmi_p25=20.0,
        bmi_median=28.0,
        bmi_mean=27.0,
        bmi_p75=31.0,
    ),
]

# context per threshold chosen so that crossing it flips the recommendation
BOUNDARY_CASES = [
    # insulin monotherapy cut at hba1c_last 8.05 (p25 kept low so nothing else fires)
    case("b_insulinmono_above", "NoMedication", "InsulinMono", hba1c_last=8.06, hba1c_p25=5.8),
    case("b_insulinmono_below", "NoMedication", "NoMedication", hba1c_last=8.04, hba1c_p25=5.8),
    # first-line router cut at hba1c_p25 6.013
    case("b_firstline_above", "NoMedication", "MetforminMono", hba1c_p25=6.023),
    case("b_firstline_below", "NoMedication", "NoMedication", hba1c_p25=6.003),
    # metformin-vs-other BMI cut at bmi_last 37.02
    case(
        "b_metobesity_above", "NoMedication", "OtherHypoMono",
        bmi_last=37.03, bmi_p75=38.0,
    ),
    case(
        "b_metobesity_below", "NoMedication", "MetforminMono",
        bmi_last=37.01, bmi_p75=38.0,
    ),
    # metformin-vs-other HbA1c cut at hba1c_last 6.85
    case("b_metlow_above", "NoMedication", "MetforminMono", hba1c_last=6.86),
    case("b_metlow_below", "NoMedication", "OtherHypoMono", hba1c_last=6.84),
    # insulin plus other cut at hba1c_last 9.05 (contraindication blocks stage 2)
    case(
        "b_insulinplus_above", "OtherHypoMono", "InsulinPlusOther",
        hba1c_last=9.06, kidney_contraindication=1.0,
    ),
    case(
        "b_insulinplus_below", "OtherHypoMono", "OtherHypoMono",
        hba1c_last=9.04, kidney_contraindication=1.0,
    ),
    # metformin plus other cut at hba1c_last 7.85
    case("b_metplus_above", "OtherHypoMono", "MetforminPlusOther", hba1c_last=7.86),
    case("b_metplus_below", "OtherHypoMono", "OtherHypoMono", hba1c_last=7.84),
    # metformin plus insulin cut at hba1c_last 8.75 (median BMI below 24.12)
    case(
        "b_metinsulin_above", "MetforminMono", "MetforminPlusInsulin",
        hba1c_last=8.76, bmi_p25=20.0, bmi_median=23.0, bmi_mean=24.0, bmi_p75=31.0,
    ),
    case(
        "b_metinsulin_below", "MetforminMono", "MetforminMono",
        hba1c_last=8.74, bmi_p25=20.0, bmi_median=23.0, bmi_mean=24.0, bmi_p75=31.0,
    ),
    # metformin plus other BMI cut at bmi_median 24.12
    case(
        "b_metbmi_above", "MetforminMono", "MetforminPlusOther",
        hba1c_last=8.0, bmi_p25=20.0, bmi_median=24.13, bmi_mean=25.0, bmi_p75=31.0,
    ),
    case(
        "b_metbmi_below", "MetforminMono", "MetforminMono",
        hba1c_last=8.0, bmi_p25=20.0, bmi_median=24.11, bmi_mean=25.0, bmi_p75=31.0,
    ),
    # triple therapy BMI cut at bmi_median 27.35
    case(
        "b_triple_above", "MetforminPlusOther", "MetforminInsulinOther",
        hba1c_last=8.0, bmi_p25=20.0, bmi_median=27.36, bmi_mean=27.0, bmi_p75=31.0,
    ),
    case(
        "b_triple_below", "MetforminPlusOther", "MetforminPlusOther",
        hba1c_last=8.0, bmi_p25=20.0, bmi_median=27.34, bmi_mean=27.0, bmi_p75=31.0,
    ),
]

ALL_CASES = NINE_CASES + BOUNDARY_CASES
