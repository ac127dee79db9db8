import json
from collections import Counter

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from dnsfp import attacks as attacks_mod
from dnsfp.attacks import AttackConfig
from dnsfp.errors import ClassTooSmall, InsufficientData, NoLabelOverlap
from dnsfp.evaluation import (
    AGGREGATE,
    OpenWorldSplit,
    PrCurve,
    benchmark,
    closed_world,
    cross_resolver,
    open_world_binary,
    open_world_multiclass,
    random_baseline_curve,
    score,
    stratified_kfold,
)
from dnsfp.features import Attack
from dnsfp.forest import ForestParams
from dnsfp.synth import PaddingMode, generate_dataset, generate_profiles
from dnsfp.trace import Dataset

FAST = AttackConfig(ForestParams(n_trees=25))


@pytest.fixture(scope="module")
def ow_ds():
    """30 apps: 4 monitored, 12 unmonitored, 14 unknown candidates."""
    return generate_dataset(generate_profiles(30, seed=8), 14, seed=9)


@pytest.fixture(scope="module")
def ow_split():
    return OpenWorldSplit(("A1", "A2", "A3", "A4"), tuple(f"A{i}" for i in range(5, 17)),
                          tuple(f"A{i}" for i in range(17, 31)), 10, 4, 3, 4)


# -- folds ----------------------------------------------------------------------------

def test_kfold_even_split():
    labels = ["a"] * 10 + ["b"] * 10
    folds = stratified_kfold(labels, 5, seed=1)
    for _, test in folds:
        assert Counter(labels[i] for i in test) == {"a": 2, "b": 2}
    assert folds == stratified_kfold(labels, 5, seed=1)


def test_kfold_class_too_small():
    with pytest.raises(ClassTooSmall) as ei:
        stratified_kfold(["a"] * 10 + ["b"] * 3, 5)
    assert ei.value.label == "b"


@settings(max_examples=60, deadline=None)
@given(st.lists(st.integers(5, 13), min_size=1, max_size=6), st.integers(2, 5), st.integers(0, 99))
def test_kfold_partition_and_balance(sizes, k, seed):
    labels = [f"c{c}" for c, n in enumerate(sizes) for _ in range(n)]
    folds = stratified_kfold(labels, k, seed)
    tests = [i for _, te in folds for i in te]
    assert sorted(tests) == list(range(len(labels)))
    for tr, te in folds:
        assert not set(tr) & set(te) and len(tr) + len(te) == len(labels)
    for c in set(labels):
        per = [sum(labels[i] == c for i in te) for _, te in folds]
        assert max(per) - min(per) <= 1
    totals = [len(te) for _, te in folds]
    assert max(totals) - min(totals) <= 1


# -- scoring --------------------------------------------------------------------------------

def test_score_matches_sklearn():
    from sklearn.metrics import accuracy_score, f1_score, precision_recall_fscore_support
    rng = np.random.default_rng(0)
    y = [f"c{v}" for v in rng.integers(0, 5, 200)]
    p = [f"c{v}" for v in rng.integers(0, 6, 200)]
    rep = score(y, p)
    labels = rep.labels
    assert rep.accuracy == pytest.approx(accuracy_score(y, p))
    assert rep.macro_f1 == pytest.approx(f1_score(y, p, labels=labels, average="macro", zero_division=0))
    prec, rec, f1, sup = precision_recall_fscore_support(y, p, labels=labels, zero_division=0)
    for i, lab in enumerate(labels):
        m = rep.per_class[lab]
        assert (m.precision, m.recall, m.f1, m.support) == pytest.approx((prec[i], rec[i], f1[i], sup[i]))
    cm = np.asarray(rep.confusion)
    assert np.trace(cm) / cm.sum() == pytest.approx(rep.accuracy)
    assert sum(m.support for m in rep.per_class.values()) == len(y)


# -- closed world -------------------------------------------------------------------------------

@pytest.mark.parametrize("attack", list(Attack))
def test_closed_world_separable(small_ds, attack):
    rep = closed_world(small_ds, attack, k=5, seed=0, config=FAST)
    assert rep.accuracy >= 0.95
    assert rep.extra["random_baseline"] == pytest.approx(1 / 6)
    assert len(rep.fold_metrics) == 5
    cm = np.asarray(rep.confusion)
    assert cm.sum(axis=1).tolist() == [rep.per_class[lab].support for lab in rep.labels]


def test_closed_world_random_labels_near_chance(small_ds):
    rng = np.random.default_rng(4)
    flips = rng.permutation([0, 1] * (len(small_ds) // 2))
    ds = Dataset(t.relabel("xy"[f]) for t, f in zip(small_ds, flips))
    rep = closed_world(ds, Attack.SEGRAM, k=5, seed=1, config=FAST)
    assert abs(rep.accuracy - 0.5) <= 0.15


def test_closed_world_deterministic(small_ds):
    a = closed_world(small_ds, Attack.NGRAMS, seed=3, config=FAST)
    b = closed_world(small_ds, Attack.NGRAMS, seed=3, config=FAST, threads=4)
    assert a.to_json() == b.to_json()


def test_no_test_data_reaches_training(small_ds, monkeypatch):
    fits = []
    seen_vocab = []
    real_build = attacks_mod.build_vocabulary

    def spy(train, attack):
        train = list(train)
        seen_vocab.append({t.trace_id for t in train})
        return real_build(train, attack)

    monkeypatch.setattr(attacks_mod, "build_vocabulary", spy)
    closed_world(small_ds, Attack.SEGRAM, k=5, config=FAST,
                 on_fit=lambda tr, te: fits.append((set(tr), set(te))))
    assert len(fits) == len(seen_vocab) == 5
    for (tr, te), vocab_ids in zip(fits, seen_vocab):
        assert not tr & te
        assert vocab_ids == tr


# -- open world -----------------------------------------------------------------------------------

def test_split_shape():
    split = OpenWorldSplit(tuple(f"m{i}" for i in range(10)), tuple(f"u{i}" for i in range(100)),
                           tuple(f"x{i}" for i in range(100)))
    assert split.train_size == 10 * 30 + 100 * 3 == 600
    assert split.test_size == 10 * 10 + 100 * 12
    with pytest.raises(ValueError):
        OpenWorldSplit(("a",), ("a",), ())


def test_split_sample(ow_ds):
    s = OpenWorldSplit.sample(ow_ds, 4, 12, 14, seed=2)
    assert len(set(s.monitored + s.unmonitored + s.unknown)) == 30
    with pytest.raises(InsufficientData):
        OpenWorldSplit.sample(ow_ds, 10, 15, 10)


def test_open_world_binary(ow_ds, ow_split):
    fits = []
    curve = open_world_binary(ow_split, ow_ds, Attack.SEGRAM, iterations=2, seed=1, config=FAST,
                              on_fit=lambda tr, te: fits.append((set(tr), set(te))))
    assert all(not tr & te for tr, te in fits) and len(fits) == 2
    first = curve.points[0]
    assert first.threshold == 0.0 and first.recall == 1.0
    ts = [p.threshold for p in curve.points]
    assert ts == sorted(set(ts))
    # empty predictions (threshold above every score) are left out
    assert len(curve.points) <= 101 and all(p.precision == p.precision for p in curve.points)
    assert curve.best.f1 >= 0.9
    pos = 4 * 4 / (4 * 4 + 14 * 4)
    assert curve.baseline[0].precision == pytest.approx(pos)
    assert max(p.f1 for p in curve.baseline) == pytest.approx(2 * pos / (pos + 1))
    d = json.loads(curve.to_json())
    assert d["best"]["f1"] == curve.best.f1


def test_open_world_binary_rejects_bad_thresholds(ow_ds, ow_split):
    with pytest.raises(ValueError):
        open_world_binary(ow_split, ow_ds, Attack.FREQ, thresholds=[0.5, 0.2])


def test_random_baseline_formula():
    pts = random_baseline_curve(0.1, [0.0, 0.5, 1.0])
    assert [p.threshold for p in pts] == [0.0, 0.5]
    assert pts[0].f1 == pytest.approx(2 * 0.1 * 1.0 / 1.1)
    assert pts[1].recall == 0.5


def test_pr_curve_csv(tmp_path):
    curve = PrCurve(random_baseline_curve(0.2, [0.0, 0.1]), random_baseline_curve(0.2, [0.0]))
    path = tmp_path / "c.csv"
    curve.write_csv(path)
    lines = path.read_text().splitlines()
    assert lines[0] == "threshold,precision,recall,f1" and len(lines) == 3
    curve.write_csv(path, baseline=True)
    assert len(path.read_text().splitlines()) == 2


def test_open_world_multiclass(ow_ds, ow_split):
    rep = open_world_multiclass(ow_split, ow_ds, Attack.SEGRAM, seed=0, config=FAST)
    assert AGGREGATE in rep.labels and len(rep.labels) == 5
    assert rep.macro_f1 >= 0.9
    assert rep.extra["n_train"] == ow_split.train_size
    assert rep.extra["n_test"] == ow_split.test_size


def test_aggregate_recall_when_always_predicted():
    y = [AGGREGATE] * 12
    rep = score(y, [AGGREGATE] * 12, labels=["A1", AGGREGATE])
    assert rep.per_class[AGGREGATE].recall == 1.0


# -- cross resolver --------------------------------------------------------------------------------

def test_cross_resolver_resubstitution(small_ds):
    rep = cross_resolver(small_ds, small_ds, Attack.FREQ, config=FAST)
    from dnsfp.attacks import fit_attack
    from dnsfp.evaluation import _fold_seed, _with_seed
    model = fit_attack(Attack.FREQ, list(small_ds), config=_with_seed(FAST, _fold_seed(0, 0)))
    resub = np.mean(np.asarray(model.predict(list(small_ds))) == np.asarray(small_ds.labels))
    assert rep.accuracy == pytest.approx(resub)


def test_cross_resolver_disjoint_labels(small_ds):
    other = Dataset(t.relabel("zz" + t.app_label) for t in small_ds)
    with pytest.raises(NoLabelOverlap):
        cross_resolver(small_ds, other, Attack.FREQ)


def test_cross_resolver_padding_hurts():
    profiles = generate_profiles(8, seed=12)
    a_train = generate_dataset(profiles, 10, seed=13, resolver_id="A")
    a_test = generate_dataset(profiles, 6, seed=14, resolver_id="A")
    b_test = generate_dataset(profiles, 6, PaddingMode.edns(), seed=14, resolver_id="B")
    same = cross_resolver(a_train, a_test, Attack.SEGRAM, config=FAST)
    other = cross_resolver(a_train, b_test, Attack.SEGRAM, config=FAST)
    assert other.accuracy < same.accuracy


# -- benchmark ----------------------------------------------------------------------------------------

def test_benchmark_single_repeat_and_clock():
    ds = generate_dataset(generate_profiles(12, seed=15), 4, seed=16)
    ticks = iter(range(10_000))
    rep = benchmark(ds, [Attack.SEGRAM, Attack.BNR], n_queries=10, repeats=1, config=FAST,
                    clock=lambda: float(next(ticks)))
    assert len(rep.entries) == 2
    for e in rep.entries:
        assert e.std_s == 0.0 and e.repeats == 1 and e.n_queries == 10
        assert e.n_train == len(ds) - 10
    assert rep.get("bnr").mean_s == 1.0
    with pytest.raises(KeyError):
        rep.get("freq")


def test_benchmark_insufficient():
    ds = generate_dataset(generate_profiles(5, seed=1), 3, seed=1)
    with pytest.raises(InsufficientData):
        benchmark(ds, [Attack.FREQ], n_queries=10)
    with pytest.raises(ValueError):
        benchmark(ds, [Attack.FREQ], n_queries=2, repeats=0)
