from collections import Counter

import pytest
from sklearn.base import clone

from cogworkspace.harness import load_corpus
from cogworkspace.memory import TierKind
from cogworkspace.oplog import OpKind
from cogworkspace.provider import StubProvider
from cogworkspace.retrieval import terms
from cogworkspace.workspace import (
    MODES,
    CognitiveWorkspace,
    InfoNeed,
    ModeKind,
    SnapshotError,
    mode_for_round,
)


@pytest.fixture
def engine(index):
    return CognitiveWorkspace(index=index).fit()


def test_mode_table_and_schedule():
    assert [MODES[k].retrieval_k for k in ModeKind] == [1, 5, 3, 0]
    assert MODES[ModeKind.CONSOLIDATION].consolidation_enabled
    assert [mode_for_round(r).kind for r in range(1, 7)] == [
        ModeKind.INTEGRATION,
        ModeKind.INTEGRATION,
        ModeKind.CONSOLIDATION,
        ModeKind.INTEGRATION,
        ModeKind.INTEGRATION,
        ModeKind.CONSOLIDATION,
    ]


def test_info_need_transitions():
    need = InfoNeed(["a", "b"])
    need.resolve("reuse")
    with pytest.raises(ValueError):
        need.resolve("external")
    with pytest.raises(ValueError):
        InfoNeed([])


def test_decompose_logs_event(engine):
    assert len(engine.decompose("What is supervised learning?")) == 2
    assert [e.kind for e in engine.log_] == [OpKind.DECOMPOSE]


def test_key_terms_are_rarest_corpus_terms(engine, index):
    df = Counter()
    for text in index.documents_.values():
        df.update(set(terms(text)))
    needs = engine.predict_needs(["define gradient descent optimization"])
    got = needs[0].key_terms
    assert set(got) <= {"gradient", "descent", "optimization"}
    assert got == sorted(got, key=lambda t: (df[t], t))


def test_needs_dedup_and_stopword_fallback(engine):
    assert len(engine.predict_needs(["gradient descent", "descent gradient"])) == 1
    assert engine.predict_needs(["what is it"])[0].key_terms == ["what"]
    assert [e.kind for e in engine.log_] == [OpKind.PREDICT, OpKind.PREDICT]


def test_prefetch_bounds(engine):
    engine.mode_ = MODES[ModeKind.INTEGRATION]
    needs = engine.predict_needs(["convolutional filters", "recurrent sequences"])
    assert 0 < engine.prefetch(needs) <= 6
    assert engine.log_.count(OpKind.RETRIEVE_EXTERNAL) == 2
    # now everything is resident
    assert engine.prefetch(needs) == 0


def test_lookup_hit_and_miss(engine):
    engine.mode_ = MODES[ModeKind.INTEGRATION]
    need = engine.predict_needs(["pooling"])[0]
    engine.prefetch([need])
    how, items = engine.lookup_or_retrieve(need)
    assert how == "reuse" and need.resolved_by == "reuse"
    assert items[0].access_count == 1
    odd = InfoNeed(["zzqx"])
    how, _ = engine.lookup_or_retrieve(odd)
    assert how == "external"


def test_round_counters_match_ledger(engine):
    res = engine.process_round("What is supervised learning?")
    round_events = [e for e in engine.log_ if e.round == 1]
    assert res.reuse_hits == sum(e.kind is OpKind.REUSE_INTERNAL for e in round_events)
    assert res.external_retrievals == sum(e.kind is OpKind.RETRIEVE_EXTERNAL for e in round_events)
    assert res.ops_this_round == engine.log_.ops(1)
    assert 0.4 <= res.cumulative_reuse_rate <= 0.6
    assert engine.tasks_[0].status == "done"


def test_repeat_query_is_all_reuse(engine):
    engine.process_round("How does backpropagation work?")
    engine.process_round("How does backpropagation work?")
    second = [e for e in engine.log_ if e.round == 2]
    assert not any(e.kind is OpKind.RETRIEVE_EXTERNAL for e in second)
    assert all(n.resolved_by == "reuse" for n in engine.tasks_[1].needs)


def test_answers_are_derived_items_and_immediate_capped(engine):
    for q in ["What is dropout?", "What is pooling?", "What is word2vec?", "What is momentum?", "What is softmax?"]:
        engine.process_round(q)
        assert len(engine.store_.items(TierKind.IMMEDIATE)) <= 4
    derived = [it for it in engine.store_.all_items() if it.source == "derived"]
    assert {it.id for it in derived} >= {f"answer:{r}" for r in range(1, 6)}
    assert len(engine.history_) == 5
    assert [h[2] for h in engine.history_] == sorted(h[2] for h in engine.history_)


def test_empty_query_changes_nothing(engine):
    engine.process_round("What is dropout?")
    before = engine.snapshot()
    with pytest.raises(ValueError):
        engine.process_round("   ")
    assert engine.snapshot() == before


class FlakyProvider(StubProvider):
    def synthesize(self, query, context_items):
        raise RuntimeError("provider down")


def test_provider_failure_rolls_back(index):
    engine = CognitiveWorkspace(index=index).fit()
    engine.process_round("What is dropout?")
    before = engine.snapshot()
    with pytest.raises(RuntimeError):
        engine.process_round("How does pooling work?", provider=FlakyProvider())
    assert engine.snapshot() == before
    assert engine.round_ == 1


def test_snapshot_round_trip(engine, index):
    for q in ["What is dropout?", "How does pooling work?", "Compare pooling and dropout"]:
        engine.process_round(q)
    blob = engine.snapshot()
    again = CognitiveWorkspace.restore(blob, index)
    assert again.snapshot() == blob
    assert again.store_.membership() == engine.store_.membership()
    # continuing both gives the same result
    assert again.process_round("What is softmax?") == engine.process_round("What is softmax?")


@pytest.mark.parametrize(
    "mangle, message",
    [
        (lambda b: b[: len(b) // 2], "checksum"),
        (lambda b: b.replace("CWSNAP v1", "CWSNAP v9"), "version"),
        (lambda b: "hello", "not a workspace snapshot"),
        (lambda b: b.replace('"round":1', '"round":2', 1), "checksum"),
    ],
)
def test_corrupt_snapshots_rejected(engine, index, mangle, message):
    engine.process_round("What is dropout?")
    with pytest.raises(SnapshotError, match=message):
        CognitiveWorkspace.restore(mangle(engine.snapshot()), index)


def test_snapshot_needs_matching_index(engine):
    engine.process_round("What is dropout?")
    with pytest.raises(SnapshotError, match="different corpus"):
        CognitiveWorkspace.restore(engine.snapshot(), load_corpus(conflict=True))


def test_estimator_api(index):
    est = CognitiveWorkspace(index=index, boost=0.3)
    assert clone(est).get_params()["boost"] == 0.3
    answers = est.fit().predict(["What is dropout?", "What is pooling?"])
    assert len(answers) == 2 and all(a.startswith("Answer to:") for a in answers)
    with pytest.raises(ValueError):
        CognitiveWorkspace(index=index, boost=1.5).fit()
    with pytest.raises(ValueError):
        CognitiveWorkspace(index=index, half_life=0).fit()


def test_fit_from_raw_documents():
    engine = CognitiveWorkspace().fit({"a.md": "Alpha beta gamma. Delta epsilon.", "b.md": "Zeta eta theta."})
    assert engine.process_round("What is alpha?").answer.startswith("Answer to: What is alpha.")


def test_empty_index_miss_warns():
    engine = CognitiveWorkspace().fit({"empty.md": ""})
    res = engine.process_round("What is zzqx?")
    assert engine.log_.count(OpKind.WARN) >= 1
    assert res.reuse_hits == 0
