"""k-nearest-neighbour classification of DNS sequences under the custom-cost
edit distance."""
from __future__ import annotations

import json
from dataclasses import dataclass
from pathlib import Path
from typing import Sequence

import numpy as np

from .distance import UNIT_COSTS, CostSchedule, as_codes, dl_distance_matrix_scaled


@dataclass
class KnnModel:
    refs: list[np.ndarray]  # integer-coded sequences
    labels: list[str]
    k: int = 1
    costs: CostSchedule = UNIT_COSTS

    def __post_init__(self):
        self.refs = [as_codes(r) for r in self.refs]
        if len(self.refs) != len(self.labels):
            raise ValueError("refs and labels differ in length")
        if not 1 <= self.k <= len(self.refs):
            raise ValueError(f"k must be in [1, {len(self.refs)}]")

    @property
    def classes(self) -> tuple[str, ...]:
        return tuple(sorted(set(self.labels)))

    def distances(self, queries: Sequence) -> tuple[np.ndarray, int]:
        return dl_distance_matrix_scaled(queries, self.refs, self.costs)

    def _neighbours(self, dist_row: np.ndarray) -> np.ndarray:
        # stable sort: equal distances keep reference order
        return np.argsort(dist_row, kind="stable")[: self.k]

    def _vote(self, dist_row: np.ndarray) -> str:
        votes: dict[str, int] = {}
        summed: dict[str, int] = {}
        for j in self._neighbours(dist_row):
            lab = self.labels[j]
            votes[lab] = votes.get(lab, 0) + 1
            summed[lab] = summed.get(lab, 0) + int(dist_row[j])
        return min(votes, key=lambda lab: (-votes[lab], summed[lab], lab))

    def classify_many(self, queries: Sequence) -> list[str]:
        d, _ = self.distances(queries)
        return [self._vote(row) for row in d]

    def predict_proba(self, queries: Sequence) -> np.ndarray:
        """Neighbour vote fractions over ``classes``."""
        classes = self.classes
        cidx = {c: i for i, c in enumerate(classes)}
        d, _ = self.distances(queries)
        out = np.zeros((len(d), len(classes)))
        for i, row in enumerate(d):
            for j in self._neighbours(row):
                out[i, cidx[self.labels[j]]] += 1.0
        return out / self.k

    def save(self, path: str | Path) -> None:
        doc = {
            "format": "dnsfp-knn",
            "version": 1,
            "k": self.k,
            "costs": list(self.costs.as_tuple()),
            "labels": self.labels,
            "refs": [r.tolist() for r in self.refs],
        }
        Path(path).write_text(json.dumps(doc))

    @classmethod
    def load(cls, path: str | Path) -> "KnnModel":
        doc = json.loads(Path(path).read_text())
        if doc.get("format") != "dnsfp-knn" or doc.get("version") != 1:
            raise ValueError("unsupported kNN model container")
        return cls([np.asarray(r, np.int64) for r in doc["refs"]], doc["labels"], doc["k"],
                   CostSchedule.parse(",".join(doc["costs"])))


def knn_classify(m: KnnModel, q) -> str:
    """Majority label of the k nearest references.

    Distance ties go to the lower reference index; vote ties to the smaller
    summed distance, then to the lexicographically first label.
    """
    return m.classify_many([q])[0]
