"""Per-model dataset assembly: target filtering, train/test split, and
95th-percentile outlier trimming on training data."""
from __future__ import annotations

import math
from typing import Iterable, Sequence

import numpy as np

from .cohort import CONTINUOUS_FEATURES, Cohort


class EmptyInput(ValueError):
    pass


class TooFewRows(ValueError):
    pass


TRAIN_FRACTION = 0.8


def percentile(values, q: float) -> float:
    """Linear-interpolation quantile, fixed project-wide.

    On sorted values x[0..n-1], the quantile sits at position h = (n-1) * q
    and interpolates linearly between the two bracketing order statistics.
    """
    if not 0.0 <= q <= 1.0:
        raise ValueError(f"q must be in [0, 1], got {q}")
    xs = np.sort(np.asarray(values, dtype=np.float64))
    if xs.size == 0:
        raise EmptyInput("percentile of empty collection")
    h = (xs.size - 1) * q
    lo = math.floor(h)
    hi = min(lo + 1, xs.size - 1)
    return float(xs[lo] + (h - lo) * (xs[hi] - xs[lo]))


def model_dataset(group: Cohort, targets: Iterable[str]) -> Cohort:
    """Keep visits whose prescribed regimen is one of ``targets`` (labels)."""
    wanted = set(targets)
    return group.with_visits(v for v in group if v.prescribed_regimen.label in wanted)


def split(cohort: Cohort, seed: int) -> tuple[Cohort, Cohort]:
    """Random 80/20 split, deterministic given seed. No stratification."""
    n = len(cohort)
    if n < 5:
        raise TooFewRows(f"need at least 5 rows to split, got {n}")
    rng = np.random.default_rng(seed)
    order = rng.permutation(n)
    n_train = round(TRAIN_FRACTION * n)
    train_idx = np.sort(order[:n_train])
    test_idx = np.sort(order[n_train:])
    train = cohort.with_visits(cohort[int(i)] for i in train_idx)
    test = cohort.with_visits(cohort[int(i)] for i in test_idx)
    return train, test


def remove_outliers_p95(train: Cohort, columns: Sequence[str] = CONTINUOUS_FEATURES) -> Cohort:
    """Drop rows where any continuous column strictly exceeds that column's
    95th percentile. Thresholds are computed once on the input; the outcome
    column is never a trimming criterion."""
    if len(train) == 0:
        raise EmptyInput("cannot trim an empty training cohort")
    thresholds = {
        col: percentile([getattr(v, col) for v in train], 0.95) for col in columns
    }
    kept = [
        v for v in train
        if not any(getattr(v, col) > thresholds[col] for col in columns)
    ]
    return train.with_visits(kept)
