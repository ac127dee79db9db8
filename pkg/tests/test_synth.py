import math

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from dnsfp.synth import (
    AppProfile,
    CacheMode,
    PaddingMode,
    PadKind,
    QuerySlot,
    generate_dataset,
    generate_profiles,
    generate_trace,
)
from dnsfp.trace import C2R, R2C, validate_trace


def test_profile_counts_and_determinism():
    assert len(generate_profiles(1, seed=0)) == 1
    assert generate_profiles(5, seed=3) == generate_profiles(5, seed=3)
    assert generate_profiles(5, seed=3) != generate_profiles(5, seed=4)


def test_zero_overlap_disjoint_pools():
    profiles = generate_profiles(12, seed=1, overlap=0.0)
    pools = [{q.domain for q in p.queries} for p in profiles]
    for i in range(len(pools)):
        for j in range(i + 1, len(pools)):
            assert not pools[i] & pools[j]


def test_overlap_draws_from_shared_pool():
    profiles = generate_profiles(10, seed=2, overlap=0.2)
    for p in profiles:
        n_shared = sum(q.shared for q in p.queries)
        assert n_shared == round(0.2 * len(p.queries))
    all_shared = [q.domain for p in profiles for q in p.queries if q.shared]
    assert len(set(all_shared)) < len(all_shared)  # some third-party domains recur


def test_padding_rule():
    edns = PaddingMode.edns()
    assert edns.pad(204, is_request=False) == 468 == 468 * math.ceil(204 / 468)
    assert edns.pad(128, is_request=True) == 128
    assert edns.pad(129, is_request=True) == 256
    assert PaddingMode.none().pad(77, True) == 77
    assert PaddingMode.custom(16, 100).pad(101, False) == 200


def test_mode_parsing():
    assert PaddingMode.parse("edns") == PaddingMode(PadKind.EDNS, 128, 468)
    assert PaddingMode.parse("custom:64,256") == PaddingMode.custom(64, 256)
    assert CacheMode.parse("warm:0.3") == CacheMode(True, 0.3)
    assert CacheMode.parse("cold") == CacheMode.cold()
    for bad in ("bogus", "custom:1"):
        with pytest.raises(ValueError):
            PaddingMode.parse(bad)
    with pytest.raises(ValueError):
        CacheMode.parse("warm:1.5")
    with pytest.raises(ValueError):
        PaddingMode.custom(0, 1)


def test_cold_cache_event_count():
    for p in generate_profiles(6, seed=5):
        t = generate_trace(p, seed=9)
        assert len(t.events) == 2 * len(p.queries)
        assert validate_trace(t) == []


def test_warm_cache_omits_only_shared():
    p = generate_profiles(1, seed=6, overlap=0.5)[0]
    cold = generate_trace(p, seed=1)
    full = generate_trace(p, cache=CacheMode.warm_with(1.0), seed=1)
    n_shared = sum(q.shared for q in p.queries)
    assert len(full.events) == len(cold.events) - 2 * n_shared
    assert generate_trace(p, cache=CacheMode.warm_with(0.0), seed=1) == cold
    # survivors keep their sizes
    from collections import Counter
    assert not Counter(e.signed_size for e in full.events) - Counter(e.signed_size for e in cold.events)
    partial = generate_trace(p, cache=CacheMode.warm_with(0.5), seed=1)
    assert len(full.events) <= len(partial.events) <= len(cold.events)


def test_all_cached_keeps_one_query():
    slot = QuerySlot("shared0.example", 40, 100, 0.0, 10.0, 20.0, shared=True)
    t = generate_trace(AppProfile("X", (slot, slot)), cache=CacheMode.warm_with(1.0), seed=0)
    assert len(t.events) == 2


@settings(max_examples=40, deadline=None)
@given(st.integers(0, 10_000), st.sampled_from(["none", "edns", "custom:32,200"]))
def test_padded_sizes(seed, mode):
    pad = PaddingMode.parse(mode)
    p = generate_profiles(1, seed=seed % 50)[0]
    raw = generate_trace(p, seed=seed)
    padded = generate_trace(p, pad, seed=seed)
    assert [e.direction for e in raw.events] == [e.direction for e in padded.events]
    for r, q in zip(raw.events, padded.events):
        assert q.size_bytes >= r.size_bytes
        if pad.kind is not PadKind.NONE:
            block = pad.block_req if q.direction is C2R else pad.block_resp
            assert q.size_bytes % block == 0
    assert generate_trace(p, pad, seed=seed) == padded


def test_dataset_layout():
    profiles = generate_profiles(3, seed=0)
    ds = generate_dataset(profiles, 4, seed=1, resolver_id="res-x")
    assert len(ds) == 12
    assert ds.classes() == ["A1", "A2", "A3"]
    assert ds[0].trace_id == "A1-0" and ds[0].resolver_id == "res-x"
    assert ds == generate_dataset(profiles, 4, seed=1, resolver_id="res-x")
    assert all(validate_trace(t) == [] for t in ds)
    assert any(e.direction is R2C for e in ds[0].events)


def test_profile_validation():
    with pytest.raises(ValueError):
        AppProfile("x", ())
    with pytest.raises(ValueError):
        generate_profiles(0, seed=0)
    with pytest.raises(ValueError):
        generate_profiles(2, seed=0, overlap=1.5)
