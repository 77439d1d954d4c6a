"""Declarative run configuration: one file holds every tunable default."""
from __future__ import annotations

import json
from dataclasses import asdict, dataclass, field

from .forest import ForestParams

DEFAULT_TREE_DEPTHS = {
    "1a": 1,
    "1b": 1,
    "1c": 3,
    "2a": 1,
    "2b": 2,
    "3a": 1,
    "3b": 1,
    "4a": 1,
}


@dataclass(frozen=True)
class RunConfig:
    seed: int = 42
    buckets: int = 6
    keep_fraction: float = 0.9
    alpha: float = 2.0
    weighting: str = "sample_weight"  # or "reward_penalty"
    tree_depths: dict = field(default_factory=lambda: dict(DEFAULT_TREE_DEPTHS))
    forest: ForestParams = field(default_factory=ForestParams)
    gtm_min_visits: int = 30
    doctor_outcome: str = "observed"  # or "gtm"

    def to_json(self) -> dict:
        doc = asdict(self)
        doc["forest"] = {
            "tree_count": self.forest.tree_count,
            "max_depth": self.forest.max_depth,
            "min_leaf": self.forest.min_leaf,
            "features_per_split": self.forest.features_per_split,
            "seed": self.forest.seed,
        }
        return doc

    @classmethod
    def from_json(cls, doc: dict) -> "RunConfig":
        doc = dict(doc)
        if "forest" in doc:
            doc["forest"] = ForestParams(**doc["forest"])
        return cls(**doc)


def load_config(path) -> RunConfig:
    with open(path) as fh:
        return RunConfig.from_json(json.load(fh))


def save_config(config: RunConfig, path) -> None:
    with open(path, "w") as fh:
        json.dump(config.to_json(), fh, indent=2, sort_keys=True)
        fh.write("\n")
