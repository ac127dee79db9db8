"""The four attacks behind one fit/predict interface."""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from .distance import UNIT_COSTS, CostSchedule
from .features import BNR_POLICY, Attack, Vocabulary, build_vocabulary, extract_matrix, sequence_codes
from .forest import ForestModel, ForestParams, train_forest
from .knn import KnnModel
from .trace import Trace


@dataclass(frozen=True)
class AttackConfig:
    forest: ForestParams = field(default_factory=ForestParams)
    k: int = 1
    costs: CostSchedule = UNIT_COSTS


class FittedAttack:
    attack: Attack
    classes: tuple[str, ...]

    def predict(self, traces: Sequence[Trace]) -> list[str]:
        raise NotImplementedError

    def predict_proba(self, traces: Sequence[Trace]) -> np.ndarray:
        raise NotImplementedError


class ForestAttack(FittedAttack):
    def __init__(self, attack: Attack, vocab: Vocabulary, model: ForestModel):
        self.attack = attack
        self.vocab = vocab
        self.model = model
        self.classes = model.classes

    def predict_proba(self, traces):
        return self.model.predict_proba(extract_matrix(traces, self.vocab))

    def predict(self, traces):
        return self.model.predict(extract_matrix(traces, self.vocab))


class KnnAttack(FittedAttack):
    attack = Attack.BNR

    def __init__(self, model: KnnModel):
        self.model = model
        self.classes = model.classes

    def _seqs(self, traces):
        return [np.asarray(sequence_codes(t, BNR_POLICY), np.int64) for t in traces]

    def predict(self, traces):
        return self.model.classify_many(self._seqs(traces))

    def predict_proba(self, traces):
        return self.model.predict_proba(self._seqs(traces))


def fit_attack(attack: Attack, train: Sequence[Trace], labels: Sequence[str] | None = None,
               config: AttackConfig = AttackConfig(), threads: int | None = None) -> FittedAttack:
    """Train ``attack`` on ``train`` only. ``labels`` override the traces' app labels."""
    labels = list(labels) if labels is not None else [t.app_label for t in train]
    if attack is Attack.BNR:
        refs = [np.asarray(sequence_codes(t, BNR_POLICY), np.int64) for t in train]
        return KnnAttack(KnnModel(refs, labels, min(config.k, len(refs)), config.costs))
    vocab = build_vocabulary(train, attack)
    X = extract_matrix(train, vocab)
    model = train_forest(X, labels, config.forest, vocab_id=vocab.vocab_id, threads=threads)
    return ForestAttack(attack, vocab, model)
