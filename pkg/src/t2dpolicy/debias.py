"""Randomized-trial emulation for one treatment contrast.

Pipeline: predict the counterfactual outcome for the aggressive arm from a
forest fit on the conservative arm, stratify everyone into equal-width score
buckets, match cross-arm nearest neighbors within each bucket without
replacement, then drop the least similar pairings. The retained visits form
two comparable arms; balance diagnostics quantify how comparable.
"""
from __future__ import annotations

import csv
import itertools
import math
import warnings
from dataclasses import dataclass, replace

import numpy as np

from .cohort import (
    AGGRESSIVENESS_RANK,
    CONTINUOUS_FEATURES,
    FIRST_LINE,
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
    design_matrix,
    regressor_schema,
)
from .forest import ForestModel, ForestParams, fit_forest

# Features defining patient similarity for matching: age plus the full
# HbA1c and BMI histories. Demographic categoricals are not in the distance.
MATCH_FEATURES = CONTINUOUS_FEATURES

DEFAULT_BUCKETS = 6
DEFAULT_KEEP_FRACTION = 0.9


class EmptyArm(ValueError):
    pass


class DegenerateRange(UserWarning):
    pass


@dataclass(frozen=True)
class Contrast:
    """One conservative-versus-aggressive treatment comparison.

    ``stay_targets`` / ``step_targets`` are the prescribed-regimen labels
    that place a visit in each arm; they default to the arm's own action.
    The step action must rank strictly more aggressive than the stay action.
    """

    cid: str
    group: str
    stay: str
    step: str
    stay_targets: tuple[str, ...] = ()
    step_targets: tuple[str, ...] = ()

    def __post_init__(self):
        if not self.stay_targets:
            object.__setattr__(self, "stay_targets", (self.stay,))
        if not self.step_targets:
            object.__setattr__(self, "step_targets", (self.step,))
        if AGGRESSIVENESS_RANK[self.step] <= AGGRESSIVENESS_RANK[self.stay]:
            raise ValueError(
                f"contrast {self.cid}: step {self.step!r} does not rank above "
                f"stay {self.stay!r}"
            )

    @property
    def targets(self) -> tuple[str, ...]:
        return self.stay_targets + self.step_targets

    def arm_of(self, v: PatientVisit) -> int:
        label = v.prescribed_regimen.label
        if label in self.stay_targets:
            return 0
        if label in self.step_targets:
            return 1
        raise ValueError(f"visit {v.visit_id} outside contrast {self.cid} targets")


# The eight tree contrasts, grouped by current regimen. The first-line
# contrast treats both monotherapies pooled as its aggressive arm; the
# metformin-vs-other contrast orients metformin as the step side.
CONTRASTS = (
    Contrast("1a", NO_MEDICATION, NO_MEDICATION, INSULIN_MONO),
    Contrast(
        "1b",
        NO_MEDICATION,
        NO_MEDICATION,
        FIRST_LINE,
        step_targets=(METFORMIN_MONO, OTHER_HYPO_MONO),
    ),
    Contrast("1c", NO_MEDICATION, OTHER_HYPO_MONO, METFORMIN_MONO),
    Contrast("2a", OTHER_HYPO_MONO, OTHER_HYPO_MONO, INSULIN_PLUS_OTHER),
    Contrast("2b", OTHER_HYPO_MONO, OTHER_HYPO_MONO, METFORMIN_PLUS_OTHER),
    Contrast("3a", METFORMIN_MONO, METFORMIN_MONO, METFORMIN_PLUS_INSULIN),
    Contrast("3b", METFORMIN_MONO, METFORMIN_MONO, METFORMIN_PLUS_OTHER),
    Contrast("4a", METFORMIN_PLUS_OTHER, METFORMIN_PLUS_OTHER, METFORMIN_INSULIN_OTHER),
)

CONTRASTS_BY_GROUP = {
    g: tuple(c for c in CONTRASTS if c.group == g)
    for g in (NO_MEDICATION, OTHER_HYPO_MONO, METFORMIN_MONO, METFORMIN_PLUS_OTHER)
}


@dataclass(frozen=True)
class MatchPair:
    less: PatientVisit
    more: PatientVisit
    distance: float
    bucket: int


@dataclass(frozen=True)
class BalanceReport:
    features: dict  # name -> {"before": smd, "after": smd, "degenerate": bool}
    score_smd_before: float
    score_smd_after: float
    n_before: tuple[int, int]
    n_after: tuple[int, int]


@dataclass(frozen=True)
class MatchedDataset:
    contrast: Contrast
    pairs: tuple[MatchPair, ...]
    retained: Cohort
    arms: tuple[int, ...]
    diagnostics: BalanceReport | None = None

    def arm_visits(self, arm: int) -> list[PatientVisit]:
        return [v for v, a in zip(self.retained, self.arms) if a == arm]


def counterfactual_scores(
    train: Cohort, contrast: Contrast, params: ForestParams
) -> tuple[np.ndarray, np.ndarray, ForestModel]:
    """Per-visit stratification score.

    Conservative-arm visits keep their observed post-treatment HbA1c; the
    aggressive arm gets the HbA1c a forest trained on the conservative arm
    alone predicts for them.
    """
    arms = np.array([contrast.arm_of(v) for v in train], dtype=np.int8)
    stay_visits = [v for v, a in zip(train, arms) if a == 0]
    step_visits = [v for v, a in zip(train, arms) if a == 1]
    if not stay_visits or not step_visits:
        raise EmptyArm(
            f"contrast {contrast.cid}: empty arm "
            f"(stay={len(stay_visits)}, step={len(step_visits)})"
        )
    schema = regressor_schema(stay_visits)
    model = fit_forest(
        design_matrix(stay_visits, schema),
        np.array([v.hba1c_after for v in stay_visits]),
        params,
        feature_names=schema,
    )
    scores = np.empty(len(train), dtype=np.float64)
    scores[arms == 0] = [v.hba1c_after for v in stay_visits]
    scores[arms == 1] = model.predict(design_matrix(step_visits, schema))
    return scores, arms, model


@dataclass(frozen=True)
class Bucketing:
    edges: np.ndarray
    assignment: np.ndarray
    degenerate: bool


def bucketize(scores, k: int = DEFAULT_BUCKETS) -> Bucketing:
    """k equal-width buckets spanning the joint score range. Interior edges
    are half-open on the right; the final bucket includes its right edge."""
    scores = np.asarray(scores, dtype=np.float64)
    if k < 1:
        raise ValueError(f"bucket count must be >= 1, got {k}")
    if scores.size == 0:
        raise EmptyArm("no scores to bucketize")
    lo, hi = float(scores.min()), float(scores.max())
    if lo == hi:
        warnings.warn(
            f"degenerate score range [{lo}, {hi}]: single bucket", DegenerateRange
        )
        return Bucketing(np.array([lo, hi]), np.zeros(scores.size, dtype=np.int64), True)
    edges = np.linspace(lo, hi, k + 1)
    assignment = np.digitize(scores, edges[1:-1], right=False)
    return Bucketing(edges, assignment, False)


def standardize_features(pool: Cohort) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Z-score the match features against the pool's mean and sd. Features
    with zero spread contribute nothing to distances."""
    X = design_matrix(pool.visits, MATCH_FEATURES)
    mean = X.mean(axis=0)
    sd = X.std(axis=0)
    safe = np.where(sd > 0, sd, 1.0)
    return (X - mean) / safe, mean, sd


# buckets at or below this size per arm are matched by exhaustive optimal
# assignment; plain greedy can exceed the optimum by more than 10% there
EXACT_MATCH_LIMIT = 6


def _exact_assignment(dist: np.ndarray) -> list[tuple[int, int]]:
    n0, n1 = dist.shape
    transposed = n0 > n1
    if transposed:
        dist = dist.T
        n0, n1 = n1, n0
    best_total = np.inf
    best_perm = None
    for perm in itertools.permutations(range(n1), n0):
        total = 0.0
        for i, j in enumerate(perm):
            total += dist[i, j]
        if total < best_total:
            best_total = total
            best_perm = perm
    matches = [(i, j) for i, j in enumerate(best_perm)]
    if transposed:
        matches = [(j, i) for i, j in matches]
    return matches


def match_within_buckets(
    bucketing: Bucketing, train: Cohort, arms: np.ndarray, Z: np.ndarray | None = None
) -> list[MatchPair]:
    """1:1 within-bucket matching without replacement.

    Distances are standardized Euclidean over the match features. Buckets
    with at most EXACT_MATCH_LIMIT visits per arm are paired by exhaustive
    minimum-total-distance assignment; larger buckets greedily take the
    closest unmatched cross-arm couple until the smaller arm is exhausted.
    Visits left over in the larger arm are dropped. Ties resolve by visit
    order, so the result does not depend on evaluation order.
    """
    if Z is None:
        Z, _, _ = standardize_features(train)
    arms = np.asarray(arms)
    pairs: list[MatchPair] = []
    n_buckets = int(bucketing.assignment.max()) + 1 if len(train) else 0
    for b in range(n_buckets):
        in_bucket = bucketing.assignment == b
        idx0 = np.flatnonzero(in_bucket & (arms == 0))
        idx1 = np.flatnonzero(in_bucket & (arms == 1))
        if idx0.size == 0 or idx1.size == 0:
            continue
        diff = Z[idx0][:, None, :] - Z[idx1][None, :, :]
        dist = np.sqrt(np.einsum("ijk,ijk->ij", diff, diff))
        if idx0.size <= EXACT_MATCH_LIMIT and idx1.size <= EXACT_MATCH_LIMIT:
            matches = _exact_assignment(dist)
        else:
            matches = []
            order = np.argsort(dist, axis=None, kind="stable")
            used0 = np.zeros(idx0.size, dtype=bool)
            used1 = np.zeros(idx1.size, dtype=bool)
            remaining = min(idx0.size, idx1.size)
            for flat in order:
                i0, i1 = divmod(int(flat), idx1.size)
                if used0[i0] or used1[i1]:
                    continue
                used0[i0] = used1[i1] = True
                matches.append((i0, i1))
                remaining -= 1
                if remaining == 0:
                    break
        for i0, i1 in matches:
            pairs.append(
                MatchPair(
                    less=train[int(idx0[i0])],
                    more=train[int(idx1[i1])],
                    distance=float(dist[i0, i1]),
                    bucket=b,
                )
            )
    return pairs


def discard_least_similar(
    pairs: list[MatchPair],
    contrast: Contrast,
    keep_fraction: float = DEFAULT_KEEP_FRACTION,
) -> MatchedDataset:
    """Keep the ceil(keep_fraction * n) closest pairs; ties break on
    (bucket, visit ids) so the cut is deterministic."""
    if not pairs:
        raise EmptyArm(f"contrast {contrast.cid}: no pairs to filter")
    if not 0.0 < keep_fraction <= 1.0:
        raise ValueError(f"keep_fraction must be in (0, 1], got {keep_fraction}")
    ranked = sorted(
        pairs, key=lambda p: (p.distance, p.bucket, p.less.visit_id, p.more.visit_id)
    )
    keep = math.ceil(keep_fraction * len(ranked))
    kept = sorted(
        ranked[:keep],
        key=lambda p: (p.bucket, p.distance, p.less.visit_id, p.more.visit_id),
    )
    visits: list[PatientVisit] = []
    arms: list[int] = []
    for p in kept:
        visits.append(p.less)
        arms.append(0)
        visits.append(p.more)
        arms.append(1)
    return MatchedDataset(
        contrast=contrast,
        pairs=tuple(kept),
        retained=Cohort(tuple(visits), provenance=f"matched:{contrast.cid}"),
        arms=tuple(arms),
    )


def _smd(values0, values1) -> tuple[float, bool]:
    v0 = np.asarray(values0, dtype=np.float64)
    v1 = np.asarray(values1, dtype=np.float64)
    pooled = math.sqrt((v0.var(ddof=1) + v1.var(ddof=1)) / 2.0) if v0.size > 1 and v1.size > 1 else 0.0
    if pooled == 0.0:
        return 0.0, True
    return abs(float(v1.mean() - v0.mean())) / pooled, False


def balance_report(
    before: Cohort,
    after: MatchedDataset,
    scores: np.ndarray | None = None,
) -> BalanceReport:
    """Standardized mean differences per match feature, before and after
    matching, plus the same diagnostic on the stratification scores."""
    contrast = after.contrast
    arms_before = np.array([contrast.arm_of(v) for v in before], dtype=np.int8)
    if not (arms_before == 0).any() or not (arms_before == 1).any():
        raise EmptyArm(f"contrast {contrast.cid}: empty arm before matching")
    Xb = design_matrix(before.visits, MATCH_FEATURES)
    Xa = design_matrix(after.retained.visits, MATCH_FEATURES)
    arms_after = np.asarray(after.arms)
    features = {}
    for j, name in enumerate(MATCH_FEATURES):
        smd_b, deg_b = _smd(Xb[arms_before == 0, j], Xb[arms_before == 1, j])
        smd_a, deg_a = _smd(Xa[arms_after == 0, j], Xa[arms_after == 1, j])
        features[name] = {"before": smd_b, "after": smd_a, "degenerate": deg_b or deg_a}
    score_b = score_a = 0.0
    if scores is not None:
        scores = np.asarray(scores, dtype=np.float64)
        score_b, _ = _smd(scores[arms_before == 0], scores[arms_before == 1])
        by_id = {v.visit_id: float(s) for v, s in zip(before, scores)}
        s_after = np.array([by_id[v.visit_id] for v in after.retained])
        score_a, _ = _smd(s_after[arms_after == 0], s_after[arms_after == 1])
    return BalanceReport(
        features=features,
        score_smd_before=score_b,
        score_smd_after=score_a,
        n_before=(int((arms_before == 0).sum()), int((arms_before == 1).sum())),
        n_after=(int((arms_after == 0).sum()), int((arms_after == 1).sum())),
    )


def emulate_trial(
    train: Cohort,
    contrast: Contrast,
    forest_params: ForestParams,
    buckets: int = DEFAULT_BUCKETS,
    keep_fraction: float = DEFAULT_KEEP_FRACTION,
) -> MatchedDataset:
    """Full emulation for one contrast: score, stratify, match, discard,
    and attach balance diagnostics."""
    scores, arms, _ = counterfactual_scores(train, contrast, forest_params)
    bucketing = bucketize(scores, buckets)
    Z, _, _ = standardize_features(train)
    pairs = match_within_buckets(bucketing, train, arms, Z)
    matched = discard_least_similar(pairs, contrast, keep_fraction)
    return replace(matched, diagnostics=balance_report(train, matched, scores))


def export_matched_csv(matched: MatchedDataset, path) -> None:
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(
            ["contrast", "bucket", "distance", "less_visit_id", "more_visit_id"]
        )
        for p in matched.pairs:
            writer.writerow(
                [matched.contrast.cid, p.bucket, repr(p.distance), p.less.visit_id, p.more.visit_id]
            )
