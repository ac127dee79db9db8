"""Evaluation protocols: stratified k-fold closed world, open world (binary
and multi-class), cross-resolver transfer, and classification-time benchmarks."""
from __future__ import annotations

import csv
import json
import logging
import time
from collections import Counter
from dataclasses import asdict, dataclass, field, replace
from pathlib import Path
from typing import Callable, Iterable, Sequence

import numpy as np

from .attacks import AttackConfig, fit_attack
from .errors import ClassTooSmall, InsufficientData, NoLabelOverlap
from .features import Attack
from .trace import Dataset, Trace

logger = logging.getLogger(__name__)

AGGREGATE = "__unmonitored__"
DEFAULT_THRESHOLDS = tuple(round(i / 100, 2) for i in range(101))

# Called as on_fit(train_trace_ids, test_trace_ids) before every model fit.
FitHook = Callable[[Sequence[str], Sequence[str]], None]


# -- reports ---------------------------------------------------------------------

@dataclass
class ClassMetrics:
    precision: float
    recall: float
    f1: float
    support: int


@dataclass
class EvalReport:
    accuracy: float
    macro_f1: float
    per_class: dict[str, ClassMetrics]
    labels: list[str]
    confusion: list[list[int]]  # rows: truth, columns: prediction, both in `labels` order
    fold_metrics: list[dict] = field(default_factory=list)
    seed: int = 0
    attack: str = ""
    extra: dict = field(default_factory=dict)

    def to_dict(self) -> dict:
        return asdict(self)

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2, sort_keys=True)


def _f1(p: float, r: float) -> float:
    return 0.0 if p + r == 0 else 2 * p * r / (p + r)


def score(y_true: Sequence[str], y_pred: Sequence[str], labels: Sequence[str] | None = None) -> EvalReport:
    """Accuracy, per-class precision/recall/F1 and macro-F1 (undefined ratios count as 0)."""
    if len(y_true) != len(y_pred):
        raise ValueError("y_true and y_pred differ in length")
    labels = sorted(set(y_true) | set(y_pred)) if labels is None else list(labels)
    li = {lab: i for i, lab in enumerate(labels)}
    cm = np.zeros((len(labels), len(labels)), dtype=np.int64)
    for t, p in zip(y_true, y_pred):
        cm[li[t], li[p]] += 1
    tp = np.diag(cm)
    per_class = {}
    for i, lab in enumerate(labels):
        pred_n = int(cm[:, i].sum())
        sup = int(cm[i].sum())
        p = tp[i] / pred_n if pred_n else 0.0
        r = tp[i] / sup if sup else 0.0
        per_class[lab] = ClassMetrics(float(p), float(r), float(_f1(p, r)), sup)
    total = int(cm.sum())
    acc = float(tp.sum() / total) if total else 0.0
    macro = float(np.mean([m.f1 for m in per_class.values()])) if per_class else 0.0
    return EvalReport(acc, macro, per_class, labels, cm.tolist())


@dataclass
class PrPoint:
    threshold: float
    precision: float
    recall: float
    f1: float


@dataclass
class PrCurve:
    points: list[PrPoint]
    baseline: list[PrPoint] = field(default_factory=list)
    iterations: int = 1
    seed: int = 0
    attack: str = ""

    @property
    def best(self) -> PrPoint | None:
        if not self.points:
            return None
        return max(self.points, key=lambda p: (p.f1, -p.threshold))

    def to_dict(self) -> dict:
        d = asdict(self)
        d["best"] = asdict(self.best) if self.best else None
        return d

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2, sort_keys=True)

    def write_csv(self, path: str | Path, baseline: bool = False) -> None:
        with open(path, "w", newline="", encoding="utf-8") as fh:
            w = csv.writer(fh)
            w.writerow(["threshold", "precision", "recall", "f1"])
            for p in (self.baseline if baseline else self.points):
                w.writerow([f"{p.threshold:.2f}", repr(p.precision), repr(p.recall), repr(p.f1)])


@dataclass
class BenchEntry:
    attack: str
    protocol: str
    resolver: str
    mean_s: float
    std_s: float
    rel_std: float
    repeats: int
    train_s: float
    n_queries: int
    n_train: int
    accuracy: float


@dataclass
class BenchmarkReport:
    entries: list[BenchEntry]
    seed: int = 0

    def to_dict(self) -> dict:
        return asdict(self)

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2, sort_keys=True)

    def get(self, attack: str, protocol: str | None = None, resolver: str | None = None) -> BenchEntry:
        for e in self.entries:
            if e.attack == attack and protocol in (None, e.protocol) and resolver in (None, e.resolver):
                return e
        raise KeyError(attack)


# -- folds ---------------------------------------------------------------------------

def stratified_kfold(ds: Dataset | Sequence[str], k: int, seed: int = 0) -> list[tuple[list[int], list[int]]]:
    """Per class: shuffle (seeded by class rank), then deal round-robin, starting
    each class where the previous one stopped so fold sizes stay balanced."""
    labels = ds.labels if isinstance(ds, Dataset) else list(ds)
    if k < 2:
        raise ValueError("k must be >= 2")
    by_class: dict[str, list[int]] = {}
    for i, lab in enumerate(labels):
        by_class.setdefault(lab, []).append(i)
    folds: list[list[int]] = [[] for _ in range(k)]
    offset = 0
    for ci, lab in enumerate(sorted(by_class)):
        idx = by_class[lab]
        if len(idx) < k:
            raise ClassTooSmall(lab, len(idx), k)
        rng = np.random.default_rng([seed, ci])
        for j, i in enumerate(rng.permutation(idx)):
            folds[(offset + j) % k].append(int(i))
        offset = (offset + len(idx)) % k
    out = []
    all_idx = set(range(len(labels)))
    for f in folds:
        test = sorted(f)
        out.append((sorted(all_idx - set(test)), test))
    return out


def _fold_seed(seed: int, *parts: int) -> int:
    return int(np.random.SeedSequence([seed, *parts]).generate_state(1, np.uint64)[0])


def _with_seed(config: AttackConfig, seed: int) -> AttackConfig:
    return replace(config, forest=replace(config.forest, seed=seed))


# -- closed world ----------------------------------------------------------------------

def closed_world(ds: Dataset, attack: Attack, k: int = 5, seed: int = 0,
                 config: AttackConfig = AttackConfig(), threads: int | None = None,
                 on_fit: FitHook | None = None) -> EvalReport:
    folds = stratified_kfold(ds, k, seed)
    y_true: list[str] = []
    y_pred: list[str] = []
    fold_metrics = []
    for fi, (tr, te) in enumerate(folds):
        train = [ds[i] for i in tr]
        test = [ds[i] for i in te]
        if on_fit:
            on_fit([t.trace_id for t in train], [t.trace_id for t in test])
        model = fit_attack(attack, train, config=_with_seed(config, _fold_seed(seed, fi)), threads=threads)
        pred = model.predict(test)
        truth = [t.app_label for t in test]
        acc = sum(a == b for a, b in zip(truth, pred)) / len(test)
        logger.info("fold %d/%d %s accuracy %.4f", fi + 1, k, attack.value, acc)
        fold_metrics.append({"fold": fi, "accuracy": acc, "n_train": len(train), "n_test": len(test)})
        y_true += truth
        y_pred += pred
    rep = score(y_true, y_pred)
    rep.fold_metrics = fold_metrics
    rep.seed = seed
    rep.attack = attack.value
    rep.extra = {"k": k, "n_traces": len(ds), "n_classes": len(ds.label_index),
                 "random_baseline": 1 / len(ds.label_index)}
    return rep


# -- open world ----------------------------------------------------------------------

@dataclass(frozen=True)
class OpenWorldSplit:
    """App roles and per-role trace counts; defaults follow the 10/100/100 layout."""

    monitored: tuple[str, ...]
    unmonitored: tuple[str, ...]
    unknown: tuple[str, ...]
    train_per_monitored: int = 30
    test_per_monitored: int = 10
    train_per_unmonitored: int = 3
    test_per_unknown: int = 12

    def __post_init__(self):
        for name in ("monitored", "unmonitored", "unknown"):
            object.__setattr__(self, name, tuple(getattr(self, name)))
        m, u, x = set(self.monitored), set(self.unmonitored), set(self.unknown)
        if m & u or m & x or u & x:
            raise ValueError("monitored, unmonitored and unknown apps must be disjoint")
        if not self.monitored:
            raise ValueError("need at least one monitored app")

    @property
    def train_size(self) -> int:
        return (len(self.monitored) * self.train_per_monitored
                + len(self.unmonitored) * self.train_per_unmonitored)

    @property
    def test_size(self) -> int:
        return len(self.monitored) * self.test_per_monitored + len(self.unknown) * self.test_per_unknown

    @classmethod
    def sample(cls, ds: Dataset, n_monitored: int = 10, n_unmonitored: int = 100, n_unknown: int = 100,
               seed: int = 0, **counts) -> "OpenWorldSplit":
        apps = ds.classes()
        if n_monitored + n_unmonitored + n_unknown > len(apps):
            raise InsufficientData(f"need {n_monitored + n_unmonitored + n_unknown} apps, have {len(apps)}")
        perm = [apps[i] for i in np.random.default_rng([seed, 0x0E]).permutation(len(apps))]
        return cls(tuple(sorted(perm[:n_monitored])),
                   tuple(sorted(perm[n_monitored:n_monitored + n_unmonitored])),
                   tuple(sorted(perm[n_monitored + n_unmonitored:n_monitored + n_unmonitored + n_unknown])),
                   **counts)


def _take(ds: Dataset, app: str, n: int, rng: np.random.Generator, start: int = 0) -> list[Trace]:
    idx = ds.label_index.get(app, ())
    if len(idx) < start + n:
        raise InsufficientData(f"app {app!r} has {len(idx)} traces, need {start + n}")
    perm = rng.permutation(len(idx))
    return [ds[idx[int(i)]] for i in perm[start:start + n]]


def _open_world_sets(split: OpenWorldSplit, ds: Dataset, monitored: Sequence[str],
                     unmonitored: Sequence[str], seed: int):
    train: list[Trace] = []
    train_y: list[str] = []
    test: list[Trace] = []
    test_y: list[str] = []
    for ai, app in enumerate(monitored):
        traces = _take(ds, app, split.train_per_monitored + split.test_per_monitored,
                       np.random.default_rng([seed, 1, ai]))
        train += traces[:split.train_per_monitored]
        train_y += [app] * split.train_per_monitored
        test += traces[split.train_per_monitored:]
        test_y += [app] * split.test_per_monitored
    for ai, app in enumerate(unmonitored):
        train += _take(ds, app, split.train_per_unmonitored, np.random.default_rng([seed, 2, ai]))
        train_y += [AGGREGATE] * split.train_per_unmonitored
    for ai, app in enumerate(split.unknown):
        test += _take(ds, app, split.test_per_unknown, np.random.default_rng([seed, 3, ai]))
        test_y += [AGGREGATE] * split.test_per_unknown
    return train, train_y, test, test_y


def _iteration_roles(split: OpenWorldSplit, ds: Dataset, it: int, seed: int):
    if it == 0:
        return list(split.monitored), list(split.unmonitored)
    need = split.train_per_monitored + split.test_per_monitored
    pool = sorted(split.monitored + split.unmonitored)
    rng = np.random.default_rng([seed, 0x17, it])
    pool = [pool[i] for i in rng.permutation(len(pool))]
    eligible = [a for a in pool if len(ds.label_index.get(a, ())) >= need]
    if len(eligible) < len(split.monitored):
        raise InsufficientData("not enough apps with enough traces to resample the monitored set")
    mon = sorted(eligible[:len(split.monitored)])
    unm = sorted(a for a in pool if a not in set(mon))
    return mon, unm


def random_baseline_curve(positive_fraction: float, thresholds: Iterable[float]) -> list[PrPoint]:
    """A classifier that flags uniformly at random with probability 1 - t."""
    pts = []
    for t in thresholds:
        recall = 1.0 - t
        if recall <= 0:
            continue
        pts.append(PrPoint(t, positive_fraction, recall, _f1(positive_fraction, recall)))
    return pts


def open_world_binary(split: OpenWorldSplit, ds: Dataset, attack: Attack,
                      thresholds: Sequence[float] = DEFAULT_THRESHOLDS, iterations: int = 1, seed: int = 0,
                      config: AttackConfig = AttackConfig(), threads: int | None = None,
                      on_fit: FitHook | None = None) -> PrCurve:
    """Monitored-vs-not PR curve. A test trace is flagged monitored when the summed
    probability of the monitored classes is at least the threshold."""
    thresholds = list(thresholds)
    if any(b <= a for a, b in zip(thresholds, thresholds[1:])):
        raise ValueError("thresholds must be strictly increasing")
    prec = np.full((iterations, len(thresholds)), np.nan)
    rec = np.zeros((iterations, len(thresholds)))
    pos_frac = []
    for it in range(iterations):
        mon, unm = _iteration_roles(split, ds, it, seed)
        train, train_y, test, test_y = _open_world_sets(split, ds, mon, unm, _fold_seed(seed, it))
        if on_fit:
            on_fit([t.trace_id for t in train], [t.trace_id for t in test])
        model = fit_attack(attack, train, train_y, _with_seed(config, _fold_seed(seed, it, 1)), threads)
        proba = model.predict_proba(test)
        mon_cols = [i for i, c in enumerate(model.classes) if c != AGGREGATE]
        p_mon = proba[:, mon_cols].sum(axis=1)
        truth = np.asarray([y != AGGREGATE for y in test_y])
        pos_frac.append(truth.mean())
        for ti, t in enumerate(thresholds):
            flagged = p_mon >= t
            tp = int((flagged & truth).sum())
            fp = int((flagged & ~truth).sum())
            if tp + fp:
                prec[it, ti] = tp / (tp + fp)
            rec[it, ti] = tp / max(int(truth.sum()), 1)
    points = []
    for ti, t in enumerate(thresholds):
        col = prec[:, ti]
        if np.all(np.isnan(col)):
            continue  # nothing flagged at this threshold
        p = float(np.nanmean(col))
        r = float(rec[:, ti].mean())
        points.append(PrPoint(t, p, r, _f1(p, r)))
    return PrCurve(points, random_baseline_curve(float(np.mean(pos_frac)), thresholds),
                   iterations, seed, attack.value)


def open_world_multiclass(split: OpenWorldSplit, ds: Dataset, attack: Attack, seed: int = 0,
                          config: AttackConfig = AttackConfig(), threads: int | None = None,
                          on_fit: FitHook | None = None) -> EvalReport:
    """Monitored apps plus one aggregate class; unknown-app traces belong to the aggregate."""
    train, train_y, test, test_y = _open_world_sets(split, ds, list(split.monitored),
                                                     list(split.unmonitored), _fold_seed(seed, 0))
    if on_fit:
        on_fit([t.trace_id for t in train], [t.trace_id for t in test])
    model = fit_attack(attack, train, train_y, _with_seed(config, _fold_seed(seed, 0, 1)), threads)
    pred = model.predict(test)
    rep = score(test_y, pred, labels=sorted(set(train_y) | set(test_y)))
    rep.seed = seed
    rep.attack = attack.value
    rep.extra = {"aggregate_label": AGGREGATE, "n_train": len(train), "n_test": len(test)}
    return rep


# -- cross resolver ---------------------------------------------------------------------

def cross_resolver(train_ds: Dataset, test_ds: Dataset, attack: Attack, seed: int = 0,
                   config: AttackConfig = AttackConfig(), threads: int | None = None,
                   on_fit: FitHook | None = None) -> EvalReport:
    """Train on one dataset, test on another, no folding."""
    overlap = set(train_ds.label_index) & set(test_ds.label_index)
    if not overlap:
        raise NoLabelOverlap("training and test datasets share no app labels")
    if on_fit:
        on_fit([t.trace_id for t in train_ds], [t.trace_id for t in test_ds])
    model = fit_attack(attack, list(train_ds), config=_with_seed(config, _fold_seed(seed, 0)), threads=threads)
    truth = test_ds.labels
    pred = model.predict(list(test_ds))
    rep = score(truth, pred)
    rep.seed = seed
    rep.attack = attack.value
    rep.fold_metrics = [{"fold": 0, "accuracy": rep.accuracy, "n_train": len(train_ds), "n_test": len(test_ds)}]
    rep.extra = {"shared_labels": len(overlap)}
    return rep


# -- benchmark ---------------------------------------------------------------------------

def benchmark(ds: Dataset, attacks: Sequence[Attack], n_queries: int = 100, repeats: int = 10, seed: int = 0,
              config: AttackConfig = AttackConfig(), threads: int | None = None,
              clock: Callable[[], float] = time.perf_counter) -> BenchmarkReport:
    """Time the classification of ``n_queries`` held-out traces of distinct apps.

    Training is timed once and reported separately. One untimed warm-up pass per
    attack precedes the timed repeats so JIT compilation is not measured.
    """
    if repeats < 1:
        raise ValueError("repeats must be >= 1")
    groups: dict[tuple[str, str], list[int]] = {}
    for i, t in enumerate(ds):
        groups.setdefault((t.protocol.value, t.resolver_id), []).append(i)
    entries = []
    for gi, ((proto, resolver), idx) in enumerate(sorted(groups.items())):
        sub = ds.subset(idx)
        apps = sub.classes()
        if len(apps) < n_queries:
            raise InsufficientData(f"{proto}/{resolver}: {len(apps)} apps, need {n_queries} distinct apps")
        rng = np.random.default_rng([seed, gi])
        chosen = sorted(apps[i] for i in rng.choice(len(apps), size=n_queries, replace=False))
        q_idx = set()
        for a in chosen:
            cand = sub.label_index[a]
            q_idx.add(cand[int(rng.integers(len(cand)))])
        queries = [sub[i] for i in sorted(q_idx)]
        train = [sub[i] for i in range(len(sub)) if i not in q_idx]
        for attack in attacks:
            t0 = clock()
            model = fit_attack(attack, train, config=_with_seed(config, _fold_seed(seed, gi)), threads=threads)
            train_s = clock() - t0
            pred = model.predict(queries)  # warm-up
            times = []
            for _ in range(repeats):
                t0 = clock()
                model.predict(queries)
                times.append(clock() - t0)
            mean = float(np.mean(times))
            std = float(np.std(times))
            acc = sum(p == q.app_label for p, q in zip(pred, queries)) / len(queries)
            logger.info("bench %s %s/%s: %.4fs +- %.4fs", attack.value, proto, resolver, mean, std)
            entries.append(BenchEntry(attack.value, proto, resolver, mean, std, std / mean if mean else 0.0,
                                      repeats, train_s, len(queries), len(train), acc))
    return BenchmarkReport(entries, seed)
