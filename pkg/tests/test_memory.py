import math

import numpy as np
import pytest
from hypothesis import HealthCheck, given, settings
from hypothesis import strategies as st

from cogworkspace.memory import (
    DuplicateItemError,
    ItemNotFoundError,
    MemoryItem,
    MemoryStore,
    TierKind,
    compress,
    default_tiers,
    replay_membership,
)
from cogworkspace.oplog import OpKind

from conftest import unit


def item(i, priority=0.5, tokens=10, half_life=5.0, step=0, **kw):
    return MemoryItem(
        id=f"m{i}",
        content=" ".join(["w"] * tokens),
        embedding=unit(i),
        priority=priority,
        half_life=half_life,
        created_step=step,
        last_access_step=step,
        **kw,
    )


def test_default_tiers():
    tiers = default_tiers()
    assert tiers[TierKind.IMMEDIATE].capacity_tokens == 8192
    assert tiers[TierKind.IMMEDIATE].capacity_items == 4
    assert tiers[TierKind.TASK].capacity_tokens == 65536
    assert tiers[TierKind.EPISODIC].capacity_tokens == 262144
    assert tiers[TierKind.SEMANTIC].capacity_tokens is None
    assert [t.nominal_latency for t in tiers.values()] == [0.001, 0.010, 0.100, 1.0]
    assert TierKind.SEMANTIC.below is None


@pytest.mark.parametrize("bad", [{"priority": 1.2}, {"priority": -0.1}, {"half_life": 0}])
def test_item_validation(bad):
    with pytest.raises(ValueError):
        item(0, **bad)


def test_item_rejects_non_unit_embedding():
    with pytest.raises(ValueError, match="unit norm"):
        MemoryItem("x", "text", np.array([1.0, 1.0]))


def test_fifth_insert_evicts_lowest_priority():
    store = MemoryStore()
    for i, p in enumerate([0.9, 0.7, 0.5, 0.3]):
        store.insert(item(i, p), TierKind.IMMEDIATE)
    receipt = store.insert(item(4, 0.6), TierKind.IMMEDIATE)
    assert receipt.evicted_ids == ["m3"]
    assert receipt.destination is TierKind.TASK
    assert store.locate("m3") is TierKind.TASK
    assert len(store.items(TierKind.IMMEDIATE)) == 4
    evicts = [e for e in store.log if e.kind is OpKind.EVICT]
    assert evicts[-1].payload == {"id": "m3", "src": "Immediate", "dest": "Task", "reason": "capacity"}


def test_eviction_tie_breaks_on_recency_then_id():
    store = MemoryStore()
    store.insert(item(0, 0.5, step=3), TierKind.IMMEDIATE)
    store.insert(item(1, 0.5, step=1), TierKind.IMMEDIATE)
    store.insert(item(2, 0.5, step=1), TierKind.IMMEDIATE)
    store.insert(item(3, 0.9), TierKind.IMMEDIATE)
    assert store.insert(item(4, 0.9), TierKind.IMMEDIATE).evicted_ids == ["m1"]


def test_token_capacity_eviction():
    store = MemoryStore()
    store.insert(item(0, 0.9, tokens=5000), TierKind.IMMEDIATE)
    receipt = store.insert(item(1, 0.2, tokens=5000), TierKind.IMMEDIATE)
    assert receipt.evicted_ids == ["m1"]
    assert store.tokens(TierKind.IMMEDIATE) == 5000


def test_duplicate_insert_rejected_anywhere():
    store = MemoryStore()
    store.insert(item(0), TierKind.TASK)
    with pytest.raises(DuplicateItemError):
        store.insert(item(0), TierKind.IMMEDIATE)


def test_access_boosts_and_logs_tier_kind():
    store = MemoryStore()
    store.insert(item(0, 0.9), TierKind.TASK)
    store.insert(item(1, 0.5), TierKind.EPISODIC)
    it = store.access("m0", 4)
    assert it.priority == 1.0 and it.access_count == 1 and it.last_access_step == 4
    assert store.access("m1", 5).priority == pytest.approx(0.7)
    kinds = [e.kind for e in store.log][-2:]
    assert kinds == [OpKind.REUSE_INTERNAL, OpKind.INTERNAL_FETCH]
    with pytest.raises(ItemNotFoundError):
        store.access("nope", 1)


def test_decay_one_half_life():
    store = MemoryStore()
    store.insert(item(0, 0.8, half_life=2), TierKind.TASK)
    store.decay_step(2)
    assert store.get("m0").priority == pytest.approx(0.4)


def test_decay_skips_item_accessed_this_step():
    store = MemoryStore()
    store.insert(item(0, 0.5), TierKind.TASK)
    store.access("m0", 7)
    store.decay_step(7)
    assert store.get("m0").priority == pytest.approx(0.7)


def test_decay_below_floor_demotes():
    store = MemoryStore()
    store.insert(item(0, 0.5, half_life=1), TierKind.TASK)
    assert store.decay_step(6) == 1
    assert 0.5 * 2**-6 == 0.0078125
    assert store.get("m0").priority == pytest.approx(0.0078125)
    assert store.locate("m0") is TierKind.EPISODIC
    decay = [e for e in store.log if e.kind is OpKind.DECAY]
    assert len(decay) == 1 and decay[0].payload["demoted"] == [["m0", "Task", "Episodic"]]


def test_decay_is_not_double_counted():
    # two calls over the same span decay exactly as one call
    a, b = MemoryStore(), MemoryStore()
    a.insert(item(0, 0.9, half_life=3), TierKind.TASK)
    b.insert(item(0, 0.9, half_life=3), TierKind.TASK)
    a.decay_step(2)
    a.decay_step(5)
    b.decay_step(5)
    assert a.get("m0").priority == pytest.approx(b.get("m0").priority, abs=1e-15)


def test_semantic_items_are_kept():
    store = MemoryStore()
    store.insert(item(0, 0.02, half_life=1), TierKind.SEMANTIC)
    store.decay_step(50)
    assert store.locate("m0") is TierKind.SEMANTIC


def test_consolidate_copies_frequently_used_items():
    store = MemoryStore()
    text = "First sentence here. Second one. Third is dropped."
    store.insert(MemoryItem("a", text, unit(0), half_life=4.0), TierKind.TASK)
    store.insert(item(1), TierKind.TASK)
    for step in range(3):
        store.access("a", step)
    assert store.consolidate(10, min_access=3) == ["a"]
    copy = store.get("a@episodic")
    assert copy.tier is TierKind.EPISODIC
    assert copy.content == "First sentence here. Second one."
    assert copy.priority == 0.5 and copy.half_life == 8.0
    assert store.locate("a") is TierKind.TASK
    # second call does not duplicate
    assert store.consolidate(11, min_access=3) == []


def test_compress():
    assert compress("One. Two! Three?") == "One. Two!"
    assert compress("no terminator") == "no terminator"


def test_serialisation_round_trip():
    store = MemoryStore()
    store.insert(item(0, 0.4, tags=["k"]), TierKind.TASK)
    store.access("m0", 2)
    again = MemoryStore.from_dict(store.to_dict(), store.log)
    assert again.to_dict() == store.to_dict()


# -- property suite ----------------------------------------------------------

ops = st.one_of(
    st.tuples(st.just("insert"), st.sampled_from(list(TierKind)), st.floats(0, 1), st.integers(1, 6000)),
    st.tuples(st.just("access"), st.integers(0, 200)),
    st.tuples(st.just("decay"), st.integers(0, 12)),
    st.tuples(st.just("consolidate"), st.integers(1, 3)),
    st.tuples(st.just("promote"), st.integers(0, 200), st.sampled_from([TierKind.IMMEDIATE, TierKind.TASK])),
)


def check_invariants(store: MemoryStore):
    assert len(store.items(TierKind.IMMEDIATE)) <= 4
    for kind, tier in store.tiers.items():
        if tier.capacity_tokens is not None:
            assert store.tokens(kind) <= tier.capacity_tokens
    for it in store.all_items():
        assert 0.0 <= it.priority <= 1.0
    assert replay_membership(store.log.events) == store.membership()


@settings(max_examples=1000, deadline=None, suppress_health_check=[HealthCheck.too_slow])
@given(st.lists(ops, max_size=40))
def test_random_operation_sequences_keep_invariants(sequence):
    store = MemoryStore()
    step = 0
    n = 0
    for op in sequence:
        ids = [it.id for it in store.all_items()]
        if op[0] == "insert":
            _, tier, p, tokens = op
            # large items only where they fit at all
            cap = store.tiers[tier].capacity_tokens
            tokens = min(tokens, cap) if cap else tokens
            store.insert(item(n, p, tokens=tokens, step=step), tier)
            n += 1
        elif op[0] == "access" and ids:
            step += 1
            store.access(ids[op[1] % len(ids)], step)
        elif op[0] == "decay":
            step += op[1]
            before = {it.id: it.priority for it in store.all_items()}
            store.decay_step(step)
            for it in store.all_items():
                if it.id in before:
                    assert it.priority <= before[it.id]
        elif op[0] == "consolidate":
            store.consolidate(step, op[1])
        elif op[0] == "promote" and ids:
            target = ids[op[1] % len(ids)]
            if store.locate(target) not in (op[2], TierKind.IMMEDIATE):
                store.promote(target, op[2])
        check_invariants(store)


def test_priority_decay_matches_closed_form():
    store = MemoryStore()
    store.insert(item(0, 0.9, half_life=5), TierKind.SEMANTIC)
    for s in (1, 4, 9, 13):
        store.decay_step(s)
    assert store.get("m0").priority == pytest.approx(0.9 * math.pow(2, -13 / 5), rel=1e-12)
