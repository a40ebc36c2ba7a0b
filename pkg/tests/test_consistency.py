"""Scoring, canonical ordering, retention cuts, and scored-record IO."""

from __future__ import annotations

import io
import json
import math

import pytest
from hypothesis import given
from hypothesis import strategies as st

from conftest import (
    CAPTION_PLAIN,
    CHOICE_LETTER,
    DESCRIBE_REGION,
    GROUND_BOX,
    SHORT_WORD,
    make_triplet,
)
from oracles import naive_filter
from triloop.consistency import (
    ConsistencyScorer,
    Reconstruction,
    ScoredTriplet,
    canonical_order,
    component_similarities,
    consistency_score,
    filter_top,
    read_pairs,
    read_scored,
    reconstruction_prompts,
    score_pair,
    score_records,
    scored_from_dict,
    scored_to_dict,
    write_scored,
)
from triloop.errors import ConfigError, MalformedRecord, NoComponents
from triloop.records import QaType, Triplet
from triloop.resources import question_prompts
from triloop.similarity import lexical_backend

BACKEND = lexical_backend()


def archetype(kind: QaType, i: int = 0) -> Triplet:
    if kind is QaType.VQA:
        return make_triplet(id=f"v{i}", qa_type=kind,
                            question=f"What color is the lamp? {SHORT_WORD}",
                            answer="red")
    if kind is QaType.VISUAL_CHAT:
        return make_triplet(id=f"c{i}", qa_type=kind,
                            question="Describe the scene in detail.",
                            answer=" ".join(f"w{j}" for j in range(30)))
    if kind is QaType.REGION:
        return make_triplet(id=f"r{i}", qa_type=kind,
                            question=f"{GROUND_BOX} the red lamp",
                            answer="[0.1, 0.1, 0.5, 0.5]")
    if kind is QaType.CAPTION:
        return make_triplet(id=f"p{i}", qa_type=kind,
                            question=CAPTION_PLAIN,
                            answer="a lamp on a desk")
    return make_triplet(id=f"o{i}", qa_type=kind,
                        question=f"Which one? A. lamp B. desk {CHOICE_LETTER}",
                        answer="B")


def echo(t: Triplet) -> Reconstruction:
    return Reconstruction(t.id, t.question, t.answer)


def scored_stub(id: str, kind: QaType, score: float) -> ScoredTriplet:
    """A valid scored record with both components equal to the score."""
    t = archetype(kind, 0)
    t = Triplet(id=id, image_ref=t.image_ref, qa_type=t.qa_type,
                question=t.question, answer=t.answer)
    if kind in (QaType.CAPTION, QaType.CHOICE):
        return ScoredTriplet(t, echo(t), None, score, score)
    return ScoredTriplet(t, echo(t), score, score, score)


class TestReconstructionPrompts:
    def test_answer_prompt_is_the_original_question(self):
        t = archetype(QaType.VQA)
        prompt_a, _ = reconstruction_prompts(t)
        assert prompt_a == t.question

    def test_question_prompt_combines_template_and_answer(self):
        t = archetype(QaType.VQA)
        _, prompt_q = reconstruction_prompts(t)
        template = prompt_q[: -len(f" Answer: {t.answer}")]
        assert template in question_prompts()
        assert prompt_q.endswith(f" Answer: {t.answer}")

    def test_deterministic_for_same_record_and_seed(self):
        t = archetype(QaType.CAPTION)
        assert reconstruction_prompts(t, seed=7) == reconstruction_prompts(t, seed=7)

    def test_varies_across_records(self):
        prompts = {
            reconstruction_prompts(archetype(QaType.VQA, i))[1].split(" Answer:")[0]
            for i in range(40)
        }
        assert len(prompts) > 1


class TestComponentSimilarities:
    def test_vqa_both_sides_cosine(self):
        t = archetype(QaType.VQA)
        r = Reconstruction(t.id, "What color is the lamp?", "blue")
        sim_q, sim_a = component_similarities(t, r, BACKEND)
        # template suffix stripped before comparing, so questions agree
        assert sim_q == 1.0
        assert sim_a == 0.0

    def test_template_only_difference_ignored(self):
        t = archetype(QaType.VQA)
        r = Reconstruction(t.id, f"What color is the lamp? {SHORT_WORD}", "red")
        assert component_similarities(t, r, BACKEND) == (1.0, 1.0)

    def test_chat_long_answer_uses_token_matching(self):
        t = archetype(QaType.VISUAL_CHAT)
        shuffled = " ".join(f"w{j}" for j in reversed(range(30)))
        r = Reconstruction(t.id, t.question, shuffled)
        sim_q, sim_a = component_similarities(t, r, BACKEND)
        assert sim_q == 1.0
        # order-insensitive token matching sees identical token sets
        assert sim_a == 1.0

    def test_region_box_on_answer(self):
        t = archetype(QaType.REGION)
        r = Reconstruction(t.id, "the red lamp", "[0.1, 0.1, 0.5, 0.5]")
        sim_q, sim_a = component_similarities(t, r, BACKEND)
        assert sim_q == 1.0
        assert sim_a == 1.0

    def test_region_recon_without_box_scores_zero(self):
        t = archetype(QaType.REGION)
        r = Reconstruction(t.id, t.question, "no coordinates at all")
        _, sim_a = component_similarities(t, r, BACKEND)
        assert sim_a == 0.0

    def test_region_box_on_question_side(self):
        t = make_triplet(
            id="rq", qa_type=QaType.REGION,
            question=f"{DESCRIBE_REGION} [0.0, 0.0, 0.5, 0.5]",
            answer="a lamp",
        )
        r = Reconstruction(t.id, "[0.25, 0.25, 0.75, 0.75]", "a lamp")
        sim_q, sim_a = component_similarities(t, r, BACKEND)
        assert sim_q == pytest.approx(1.0 / 7.0, abs=1e-12)
        assert sim_a == 1.0

    def test_caption_scores_answer_only(self):
        t = archetype(QaType.CAPTION)
        r = Reconstruction(t.id, "whatever question", t.answer)
        assert component_similarities(t, r, BACKEND) == (None, 1.0)

    def test_choice_exact_match_only(self):
        t = archetype(QaType.CHOICE)
        assert component_similarities(
            t, Reconstruction(t.id, t.question, "b."), BACKEND
        ) == (None, 1.0)
        assert component_similarities(
            t, Reconstruction(t.id, t.question, "A"), BACKEND
        ) == (None, 0.0)


class TestConsistencyScore:
    def test_geometric_mean_worked_value(self):
        assert consistency_score(0.9, 0.4) == pytest.approx(0.6, abs=1e-12)

    def test_zero_component_zeroes_the_score(self):
        assert consistency_score(0.0, 1.0) == 0.0

    def test_single_component_passthrough(self):
        assert consistency_score(None, 0.73) == 0.73
        assert consistency_score(0.21, None) == 0.21

    def test_no_components_raises(self):
        with pytest.raises(NoComponents):
            consistency_score(None, None)

    @given(st.floats(0, 1), st.floats(0, 1))
    def test_bounded_and_monotone(self, x, y):
        s = consistency_score(x, y)
        assert 0.0 <= s <= 1.0
        assert s <= consistency_score(max(x, y), max(x, y)) + 1e-12

    def test_scored_triplet_rejects_inconsistent_score(self):
        t = archetype(QaType.VQA)
        with pytest.raises(ConfigError):
            ScoredTriplet(t, echo(t), 0.9, 0.4, 0.9)


class TestScorePair:
    @pytest.mark.parametrize("kind", list(QaType))
    def test_self_reconstruction_scores_exactly_one(self, kind):
        t = archetype(kind)
        st_ = score_pair(t, echo(t), BACKEND)
        assert st_.score == 1.0

    def test_empty_reconstruction_scores_zero(self):
        t = archetype(QaType.VQA)
        st_ = score_pair(t, Reconstruction(t.id, "", ""), BACKEND)
        assert st_.score == 0.0
        assert (st_.sim_q, st_.sim_a) == (0.0, 0.0)

    def test_score_records_preserves_input_order(self):
        pairs = [(archetype(QaType.VQA, i), echo(archetype(QaType.VQA, i)))
                 for i in range(7)]
        out = score_records(pairs, BACKEND)
        assert [s.triplet.id for s in out] == [t.id for t, _ in pairs]

    def test_score_records_parallel_matches_serial(self, fixture_corpus):
        sample = fixture_corpus[:60]
        serial = score_records(sample, BACKEND, workers=1)
        threaded = score_records(sample, BACKEND, workers=8)
        assert serial == threaded


class TestCanonicalOrder:
    def test_category_then_score_then_position(self):
        items = [
            scored_stub("a", QaType.CHOICE, 0.9),
            scored_stub("b", QaType.VQA, 0.1),
            scored_stub("c", QaType.VQA, 0.8),
            scored_stub("d", QaType.CAPTION, 0.5),
            scored_stub("e", QaType.VQA, 0.8),
        ]
        ordered = canonical_order(items)
        assert [s.triplet.id for s in ordered] == ["c", "e", "b", "d", "a"]


class TestFilterTop:
    def test_distinct_scores_keep_the_top(self):
        items = [scored_stub(f"s{i}", QaType.VQA, i / 10.0) for i in range(10)]
        retained, excluded = filter_top(items, 0.2)
        assert [s.triplet.id for s in retained] == ["s9", "s8"]
        assert len(excluded) == 8

    def test_tie_breaks_toward_earlier_position(self):
        items = [scored_stub(f"t{i}", QaType.VQA, 0.7) for i in range(5)]
        retained, _ = filter_top(items, 0.2)
        assert [s.triplet.id for s in retained] == ["t0"]

    def test_fraction_one_keeps_everything(self):
        items = [scored_stub(f"s{i}", QaType.CAPTION, i / 10.0) for i in range(4)]
        retained, excluded = filter_top(items, 1.0)
        assert len(retained) == 4 and excluded == []

    def test_tiny_fraction_keeps_at_least_one_per_pool(self):
        items = [scored_stub(f"s{i}", QaType.VQA, i / 10.0) for i in range(3)]
        retained, _ = filter_top(items, 0.01)
        assert [s.triplet.id for s in retained] == ["s2"]

    def test_exact_boundary_counts(self):
        # 0.2 * 15 carries float dust; the cut must still be 3
        items = [scored_stub(f"s{i}", QaType.VQA, i / 20.0) for i in range(15)]
        retained, _ = filter_top(items, 0.2)
        assert len(retained) == 3
        items = [scored_stub(f"s{i}", QaType.VQA, i / 20.0) for i in range(10)]
        retained, _ = filter_top(items, 0.3)
        assert len(retained) == 3

    def test_per_type_cuts_each_pool(self):
        items = (
            [scored_stub(f"v{i}", QaType.VQA, i / 10.0) for i in range(5)]
            + [scored_stub(f"p{i}", QaType.CAPTION, i / 10.0) for i in range(5)]
        )
        retained, _ = filter_top(items, 0.2, per_type=True)
        assert {s.triplet.id for s in retained} == {"v4", "p4"}

    def test_global_cut_ignores_categories(self):
        items = (
            [scored_stub(f"v{i}", QaType.VQA, 0.9 + i / 100.0) for i in range(5)]
            + [scored_stub(f"p{i}", QaType.CAPTION, i / 100.0) for i in range(5)]
        )
        retained, _ = filter_top(items, 0.2, per_type=False)
        assert {s.triplet.id for s in retained} == {"v3", "v4"}

    @pytest.mark.parametrize("bad", [0.0, -0.1, 1.2])
    def test_fraction_out_of_range(self, bad):
        with pytest.raises(ConfigError):
            filter_top([scored_stub("x", QaType.VQA, 0.5)], bad)

    @given(
        st.lists(
            st.tuples(
                st.sampled_from([QaType.VQA, QaType.CAPTION, QaType.CHOICE]),
                st.sampled_from([0.0, 0.25, 0.5, 0.75, 1.0]),
            ),
            min_size=1, max_size=30,
        ),
        st.sampled_from([0.1, 0.2, 1.0 / 3.0, 0.5, 1.0]),
        st.booleans(),
    )
    def test_matches_sort_and_slice_oracle(self, spec, fraction, per_type):
        items = [scored_stub(f"s{i}", kind, sc) for i, (kind, sc) in enumerate(spec)]
        retained, excluded = filter_top(items, fraction, per_type)
        want = naive_filter(
            [(kind.value, sc) for kind, sc in spec], fraction, per_type
        )
        assert {s.triplet.id for s in retained} == {f"s{i}" for i in want}
        assert len(retained) + len(excluded) == len(items)
        ids = [s.triplet.id for s in retained + excluded]
        assert sorted(ids) == sorted(f"s{i}" for i in range(len(spec)))


class TestScoredIO:
    def test_round_trip_with_both_components(self):
        t = archetype(QaType.VQA)
        st_ = score_pair(t, Reconstruction(t.id, t.question, "blue"), BACKEND)
        buf = io.StringIO()
        write_scored([st_], buf)
        assert read_scored(io.StringIO(buf.getvalue())) == [st_]

    def test_round_trip_with_null_question_component(self):
        t = archetype(QaType.CAPTION)
        st_ = score_pair(t, echo(t), BACKEND)
        assert st_.sim_q is None
        buf = io.StringIO()
        write_scored([st_], buf)
        got = read_scored(io.StringIO(buf.getvalue()))
        assert got == [st_]

    def test_wire_keys(self):
        t = archetype(QaType.VQA)
        d = scored_to_dict(score_pair(t, echo(t), BACKEND))
        assert set(d) == {"id", "image", "type", "question", "answer",
                          "q_prime", "a_prime", "sim_q", "sim_a", "score"}

    def test_inconsistent_score_rejected_on_read(self):
        t = archetype(QaType.VQA)
        d = scored_to_dict(score_pair(t, echo(t), BACKEND))
        d["score"] = 0.123
        with pytest.raises(MalformedRecord) as exc:
            read_scored([json.dumps(d)])
        assert exc.value.line_no == 1

    def test_missing_score_rejected(self):
        t = archetype(QaType.CAPTION)
        d = scored_to_dict(score_pair(t, echo(t), BACKEND))
        del d["score"]
        with pytest.raises(MalformedRecord):
            scored_from_dict(d)

    def test_read_pairs_accepts_plain_reconstruction_lines(self):
        t = archetype(QaType.VQA)
        line = json.dumps({
            "id": t.id, "image": t.image_ref, "type": "vqa",
            "question": t.question, "answer": t.answer,
            "q_prime": "What color?", "a_prime": "red",
        })
        pairs = read_pairs([line])
        assert pairs == [(t, Reconstruction(t.id, "What color?", "red"))]

    def test_read_pairs_requires_string_prime_fields(self):
        t = archetype(QaType.VQA)
        obj = {"id": t.id, "image": t.image_ref, "type": "vqa",
               "question": t.question, "answer": t.answer,
               "q_prime": None, "a_prime": "red"}
        with pytest.raises(MalformedRecord):
            read_pairs([json.dumps(obj)])


class TestConsistencyScorerEstimator:
    def test_get_params_round_trip(self):
        est = ConsistencyScorer(fraction=0.35, per_type=False, workers=2)
        params = est.get_params()
        clone = ConsistencyScorer(**params)
        assert clone.get_params() == params

    def test_sklearn_clone(self):
        from sklearn.base import clone

        est = clone(ConsistencyScorer(fraction=0.4))
        assert est.fraction == 0.4

    def test_transform_matches_functional_layer(self, fixture_corpus):
        sample = fixture_corpus[:25]
        est = ConsistencyScorer().fit()
        assert est.transform(sample) == score_records(sample, BACKEND)

    def test_filter_matches_functional_layer(self, fixture_corpus):
        sample = fixture_corpus[:50]
        est = ConsistencyScorer(fraction=0.3)
        got_r, got_x = est.filter(sample)
        want_r, want_x = filter_top(score_records(sample, BACKEND), 0.3, True)
        assert got_r == want_r and got_x == want_x

    def test_unknown_backend_name(self):
        with pytest.raises(ConfigError):
            ConsistencyScorer(backend="quantum").transform([])

    def test_score_math_consistency_invariant(self, fixture_corpus):
        for st_ in score_records(fixture_corpus[:80], BACKEND):
            if st_.sim_q is not None and st_.sim_a is not None:
                assert st_.score == pytest.approx(
                    math.sqrt(st_.sim_q * st_.sim_a), abs=1e-12
                )
            else:
                present = st_.sim_q if st_.sim_q is not None else st_.sim_a
                assert st_.score == present
