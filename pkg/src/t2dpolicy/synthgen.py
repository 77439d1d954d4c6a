"""Synthetic confounded visit generator with known ground truth.

Substitutes for the private clinical cohorts: a latent severity variable
drives both the visit features and the prescriber's (behavior) treatment
choice, so naive arm comparisons are biased exactly the way the real data
are. True expected reductions per option are known, threshold-shaped, and
deliberately ignored by the behavior policy, which makes both tree recovery
and regret comparisons testable.

Randomness is counter-based: visit ``i`` of a run seeded with ``seed`` is
drawn from an independent Philox stream keyed by ``(seed, i)``, so sharded
generation reproduces single-pass output bit for bit.
"""
from __future__ import annotations

import csv
from dataclasses import dataclass
from typing import Mapping

import numpy as np

from .cohort import (
    ADMISSIBLE_OPTIONS,
    AGGRESSIVENESS_RANK,
    CURRENT_GROUPS,
    INSULIN_MONO,
    INSULIN_PLUS_OTHER,
    METFORMIN_INSULIN_OTHER,
    METFORMIN_MONO,
    METFORMIN_PLUS_INSULIN,
    METFORMIN_PLUS_OTHER,
    NO_MEDICATION,
    OTHER_HYPO_MONO,
    Cohort,
    PatientVisit,
    Regimen,
)
from .preprocess import percentile


class InvalidConfig(ValueError):
    pass


class InadmissibleAction(ValueError):
    pass


@dataclass(frozen=True)
class GeneratorConfig:
    n_visits: int
    seed: int = 42
    confounding_strength: float = 1.0
    group_mix: tuple[float, float, float, float] = (0.40, 0.20, 0.25, 0.15)
    noise_sd: float = 0.35
    decrease_fraction: float = 0.9  # share of visits forced to show a decrease

    def __post_init__(self):
        if self.n_visits < 1:
            raise InvalidConfig(f"n_visits must be >= 1, got {self.n_visits}")
        if self.confounding_strength < 0:
            raise InvalidConfig("confounding_strength must be >= 0")
        if self.noise_sd < 0:
            raise InvalidConfig("noise_sd must be >= 0")
        if not 0.0 <= self.decrease_fraction <= 1.0:
            raise InvalidConfig("decrease_fraction must be in [0, 1]")
        if len(self.group_mix) != 4 or any(p < 0 or p > 1 for p in self.group_mix):
            raise InvalidConfig(f"group_mix must be 4 proportions, got {self.group_mix}")
        if abs(sum(self.group_mix) - 1.0) > 1e-9:
            raise InvalidConfig(f"group_mix must sum to 1, got {sum(self.group_mix)}")


@dataclass(frozen=True)
class GroundTruth:
    """Per-visit true expected reductions, the optimal action, and the
    behavior (prescriber) action."""

    options: dict[str, dict[str, float]]
    optimal_action: dict[str, str]
    behavior_action: dict[str, str]


# Mean last-HbA1c level per current-regimen group before severity shifts it.
_GROUP_BASE_HBA1C = {
    NO_MEDICATION: 9.0,
    OTHER_HYPO_MONO: 8.6,
    METFORMIN_MONO: 8.6,
    METFORMIN_PLUS_OTHER: 8.8,
}

# Severity-to-HbA1c coupling and measurement noise for the 4 simulated
# history measurements (the summary statistics are computed from these).
_SEVERITY_HBA1C = 1.3
_HBA1C_MEAS_SD = 0.45

# Behavior policy: softmax utility per option with a severity term that
# scales with both the option's aggressiveness rank and the configured
# confounding strength. Tuned so the default insulin-vs-stay gap in mean
# last HbA1c among no-medication visits sits near 1.1.
_BEHAVIOR_SLOPE = 0.24
_BEHAVIOR_INTERCEPTS = {
    NO_MEDICATION: {
        NO_MEDICATION: 1.00,
        OTHER_HYPO_MONO: -0.35,
        METFORMIN_MONO: 0.35,
        INSULIN_MONO: -0.55,
    },
    OTHER_HYPO_MONO: {
        OTHER_HYPO_MONO: 0.85,
        METFORMIN_PLUS_OTHER: 0.10,
        INSULIN_PLUS_OTHER: -0.45,
    },
    METFORMIN_MONO: {
        METFORMIN_MONO: 0.85,
        METFORMIN_PLUS_OTHER: 0.15,
        INSULIN_PLUS_OTHER: 0.0,  # unused; kept out of admissible set
        METFORMIN_PLUS_INSULIN: -0.40,
    },
    METFORMIN_PLUS_OTHER: {
        METFORMIN_PLUS_OTHER: 0.55,
        METFORMIN_INSULIN_OTHER: -0.20,
    },
}

_SEXES = ("F", "M")
_RACES = ("white", "black", "hispanic", "asian")
_RACE_CUM = (0.45, 0.70, 0.88, 1.0)


def _clip_ramp(x: float, lo_at: float, cap: float) -> float:
    """max(0, x - lo_at) capped at cap."""
    v = x - lo_at
    if v < 0.0:
        return 0.0
    return min(v, cap)


def true_reductions(
    group: str,
    hba1c_last: float,
    hba1c_p25: float,
    bmi_last: float,
    bmi_median: float,
    contraindicated: bool,
) -> dict[str, float]:
    """True expected HbA1c reduction per admissible option.

    The shapes are threshold-like on purpose: insulin-containing options pay
    off above a last-HbA1c cutoff, metformin is suppressed by the kidney
    contraindication and extreme obesity, and two options respond to BMI.
    """
    h = hba1c_last
    excess = max(0.0, h - 6.5)
    if group == NO_MEDICATION:
        return {
            NO_MEDICATION: 0.18 + 0.04 * excess,
            OTHER_HYPO_MONO: 0.10 + 0.45 * _clip_ramp(hba1c_p25, 8.2, 1.5) + 0.05 * excess,
            METFORMIN_MONO: 0.05
            if contraindicated
            else (0.22 if bmi_last >= 37.0 else 0.15 + 0.50 * _clip_ramp(h, 8.0, 1.6)),
            INSULIN_MONO: 0.05 + 0.90 * max(0.0, h - 8.4),
        }
    if group == OTHER_HYPO_MONO:
        return {
            OTHER_HYPO_MONO: 0.15 + 0.04 * excess,
            METFORMIN_PLUS_OTHER: 0.06
            if contraindicated
            else 0.08 + 0.55 * _clip_ramp(h, 7.6, 1.8),
            INSULIN_PLUS_OTHER: 0.10 + 0.90 * max(0.0, h - 8.8),
        }
    if group == METFORMIN_MONO:
        return {
            METFORMIN_MONO: 0.15 + 0.04 * excess,
            METFORMIN_PLUS_OTHER: 0.05
            + (0.52 if bmi_median >= 26.0 else 0.0)
            + 0.05 * excess,
            METFORMIN_PLUS_INSULIN: 0.12 + 0.85 * max(0.0, h - 8.7),
        }
    if group == METFORMIN_PLUS_OTHER:
        return {
            METFORMIN_PLUS_OTHER: 0.12 + 0.04 * excess,
            METFORMIN_INSULIN_OTHER: 0.10
            + 0.50 * _clip_ramp(h, 7.8, 2.5)
            + (0.30 if bmi_median >= 27.4 else 0.0),
        }
    raise InvalidConfig(f"unsupported group {group!r}")


def _pick_group(u: float, mix) -> str:
    acc = 0.0
    for g, p in zip(CURRENT_GROUPS, mix):
        acc += p
        if u < acc:
            return g
    return CURRENT_GROUPS[-1]


def _generate_visit(cfg: GeneratorConfig, index: int):
    key = np.array([cfg.seed & 0xFFFFFFFFFFFFFFFF, index], dtype=np.uint64)
    rng = np.random.Generator(np.random.Philox(key=key))

    group = _pick_group(rng.uniform(), cfg.group_mix)
    s = rng.normal()

    age = float(np.clip(52.0 + 11.0 * rng.normal() + 2.5 * s, 21.0, 92.0))
    sex = _SEXES[0] if rng.uniform() < 0.5 else _SEXES[1]
    u_race = rng.uniform()
    race = _RACES[min(sum(u_race >= c for c in _RACE_CUM), len(_RACES) - 1)]
    contra = rng.uniform() < 0.15

    level = _GROUP_BASE_HBA1C[group] + _SEVERITY_HBA1C * s
    meas = np.clip(level + _HBA1C_MEAS_SD * rng.normal(size=4), 3.2, 19.5)
    hba1c_last = float(meas[3])
    h_p25 = percentile(meas, 0.25)
    h_med = percentile(meas, 0.5)
    h_p75 = percentile(meas, 0.75)
    h_mean = float(np.mean(meas))

    bmi_level = 30.0 + 4.5 * rng.normal() + 0.8 * s
    bmeas = np.clip(bmi_level + 0.8 * rng.normal(size=4), 16.0, 70.0)
    bmi_last = float(bmeas[3])
    b_p25 = percentile(bmeas, 0.25)
    b_med = percentile(bmeas, 0.5)
    b_p75 = percentile(bmeas, 0.75)
    b_mean = float(np.mean(bmeas))

    effects = true_reductions(group, hba1c_last, h_p25, bmi_last, b_med, contra)
    options = ADMISSIBLE_OPTIONS[group]

    # behavior choice: severity-confounded softmax via Gumbel perturbation
    best_u = -np.inf
    behavior = options[0]
    for opt in options:
        util = (
            _BEHAVIOR_INTERCEPTS[group][opt]
            + cfg.confounding_strength * _BEHAVIOR_SLOPE * AGGRESSIVENESS_RANK[opt] * s
            + rng.gumbel()
        )
        if util > best_u:
            best_u = util
            behavior = opt

    # optimal action: per-visit argmax, ties to the less aggressive option
    optimal = max(options, key=lambda o: (effects[o], -AGGRESSIVENESS_RANK[o]))

    realized = effects[behavior] + cfg.noise_sd * rng.normal()
    force = rng.uniform() < cfg.decrease_fraction
    u_mag = rng.uniform()
    if force:
        realized = max(realized, 0.04 + 0.18 * u_mag)
    hba1c_after = float(np.clip(hba1c_last - realized, 3.05, 19.5))

    visit = PatientVisit(
        visit_id=f"v{index:07d}",
        age=age,
        sex=sex,
        race=race,
        kidney_contraindication=bool(contra),
        hba1c_last=hba1c_last,
        hba1c_p25=h_p25,
        hba1c_median=h_med,
        hba1c_mean=h_mean,
        hba1c_p75=h_p75,
        bmi_last=bmi_last,
        bmi_p25=b_p25,
        bmi_median=b_med,
        bmi_mean=b_mean,
        bmi_p75=b_p75,
        current_regimen=Regimen.from_label(group),
        prescribed_regimen=Regimen.from_label(behavior),
        hba1c_after=hba1c_after,
    )
    return visit, effects, optimal, behavior


def generate(cfg: GeneratorConfig) -> tuple[Cohort, GroundTruth]:
    """Generate a cohort and its ground truth. Deterministic given cfg."""
    visits = []
    options: dict[str, dict[str, float]] = {}
    optimal: dict[str, str] = {}
    behavior: dict[str, str] = {}
    for i in range(cfg.n_visits):
        visit, effects, opt, beh = _generate_visit(cfg, i)
        visits.append(visit)
        options[visit.visit_id] = effects
        optimal[visit.visit_id] = opt
        behavior[visit.visit_id] = beh
    cohort = Cohort(tuple(visits), provenance=f"synthetic(seed={cfg.seed}, n={cfg.n_visits})")
    return cohort, GroundTruth(options, optimal, behavior)


def true_regret(policy_actions: Mapping[str, str], gt: GroundTruth) -> float:
    """Mean over visits of the gap between the optimal and the chosen
    action's true expected reduction. Nonnegative by construction."""
    if not policy_actions:
        raise InvalidConfig("no actions supplied")
    total = 0.0
    for visit_id, action in policy_actions.items():
        effects = gt.options[visit_id]
        if action not in effects:
            raise InadmissibleAction(
                f"action {action!r} not admissible for visit {visit_id}"
            )
        total += effects[gt.optimal_action[visit_id]] - effects[action]
    return total / len(policy_actions)


def behavior_arm_gap(
    cohort: Cohort,
    group: str = NO_MEDICATION,
    aggressive: str = INSULIN_MONO,
    stay: str = NO_MEDICATION,
) -> float:
    """Mean last-HbA1c difference between two prescribed arms of one group."""
    a = [v.hba1c_last for v in cohort
         if v.current_regimen.label == group and v.prescribed_regimen.label == aggressive]
    b = [v.hba1c_last for v in cohort
         if v.current_regimen.label == group and v.prescribed_regimen.label == stay]
    if not a or not b:
        raise InvalidConfig(f"empty arm in group {group}")
    return float(np.mean(a) - np.mean(b))


_GT_OPTION_ORDER = (
    NO_MEDICATION,
    OTHER_HYPO_MONO,
    METFORMIN_MONO,
    METFORMIN_PLUS_OTHER,
    INSULIN_MONO,
    INSULIN_PLUS_OTHER,
    METFORMIN_PLUS_INSULIN,
    METFORMIN_INSULIN_OTHER,
)


def save_ground_truth(gt: GroundTruth, path) -> None:
    header = ["visit_id"] + [f"true_{o}" for o in _GT_OPTION_ORDER]
    header += ["optimal_action", "behavior_action"]
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(header)
        for visit_id in gt.options:
            effects = gt.options[visit_id]
            row = [visit_id]
            row += [repr(effects[o]) if o in effects else "" for o in _GT_OPTION_ORDER]
            row += [gt.optimal_action[visit_id], gt.behavior_action[visit_id]]
            writer.writerow(row)


def load_ground_truth(path) -> GroundTruth:
    options: dict[str, dict[str, float]] = {}
    optimal: dict[str, str] = {}
    behavior: dict[str, str] = {}
    with open(path, newline="") as fh:
        reader = csv.DictReader(fh)
        for rec in reader:
            visit_id = rec["visit_id"]
            options[visit_id] = {
                o: float(rec[f"true_{o}"]) for o in _GT_OPTION_ORDER if rec[f"true_{o}"]
            }
            optimal[visit_id] = rec["optimal_action"]
            behavior[visit_id] = rec["behavior_action"]
    return GroundTruth(options, optimal, behavior)
