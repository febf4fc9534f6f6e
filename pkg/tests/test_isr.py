"""Window-ensemble extractor tests against brute-force oracles."""

from __future__ import annotations

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from inteval.attribution import AttributionMethod, TokenScores
from inteval.errors import SelectionError
from inteval.harness import (
    build_vocabulary,
    chunk_document,
    keep_only,
    remove,
    stub_harness,
)
from inteval.isr import (
    CandidateRationale,
    SelectionMode,
    enumerate_configurations,
    generate_candidates,
    jsd,
    rationale_budget,
    select_rationales,
)
from inteval.rationales import Span, Technique

from test_harness import toy_harness

M = AttributionMethod


def fake_scores(values, method=M.RANDOM, case_id="case") -> TokenScores:
    return TokenScores(
        case_id=case_id, method=method, scores=np.asarray(values, float), target=1
    )


# -- independent oracle implementations --------------------------------------


def oracle_candidates(values: np.ndarray, l: int) -> list[tuple[int, int, float]]:
    """List every window, filter strictly-above-mean, chain-merge overlaps."""
    n = len(values)
    if l > n:
        return []
    windows = [(s, s + l, float(sum(values[s : s + l]))) for s in range(n - l + 1)]
    mean = sum(w[2] for w in windows) / len(windows)
    kept = [w for w in windows if w[2] > mean]
    merged: list[tuple[int, int, list[float]]] = []
    for start, end, score in kept:
        if merged and start < merged[-1][1]:
            prev = merged.pop()
            merged.append((prev[0], max(prev[1], end), prev[2] + [score]))
        else:
            merged.append((start, end, [score]))
    return [(s, e, float(np.mean(scores))) for s, e, scores in merged]


def oracle_select(harness, chunked, all_scores, mode):
    """Exhaustively evaluate every shortlist with independent plumbing.

    Returns (method, spans, divergence) for the winner under the ranking
    contract: divergence first (signed by mode), then total length, then
    lexicographic span order.
    """
    budget = rationale_budget(chunked.n_tokens)
    entries = []
    for method in sorted(all_scores, key=lambda m: m.value):
        values = all_scores[method].scores
        for l in range(5, budget + 1):
            cands = oracle_candidates(values, l)
            if cands:
                entries.append((method, [(s, e) for s, e, _ in cands]))
    original = harness.predict(chunked).probs
    scored = []
    for method, spans in entries:
        idx = [i for s, e in spans for i in range(s, e)]
        mask = keep_only(idx) if mode is SelectionMode.SUFFICIENCY else remove(idx)
        div = jsd(original, harness.predict(chunked, mask).probs)
        total = sum(e - s for s, e in spans)
        sign = 1.0 if mode is SelectionMode.SUFFICIENCY else -1.0
        scored.append(((sign * div, total, tuple(spans)), method, spans, div))
    scored.sort(key=lambda t: t[0])
    _, method, spans, div = scored[0]
    return method, spans, div


class TestJsd:
    def test_identity_is_zero(self):
        assert jsd((0.3, 0.7), (0.3, 0.7)) == 0.0

    def test_pinned_closed_form(self):
        assert jsd((0.5, 0.5), (1.0, 0.0)) == pytest.approx(0.311278, abs=1e-4)

    @given(st.floats(0.001, 0.999), st.floats(0.001, 0.999))
    @settings(max_examples=200, deadline=None)
    def test_symmetric_and_bounded(self, a, b):
        p, q = (a, 1 - a), (b, 1 - b)
        d1, d2 = jsd(p, q), jsd(q, p)
        assert d1 == pytest.approx(d2, abs=1e-12)
        assert 0.0 <= d1 <= 1.0

    def test_degenerate_corners_hit_upper_bound(self):
        assert jsd((1.0, 0.0), (0.0, 1.0)) == pytest.approx(1.0, abs=1e-12)

    def test_non_distribution_rejected(self):
        with pytest.raises(SelectionError):
            jsd((0.5, 0.6), (0.5, 0.5))
        with pytest.raises(SelectionError):
            jsd((1.2, -0.2), (0.5, 0.5))
        with pytest.raises(SelectionError):
            jsd((0.5, 0.5), (0.2, 0.3, 0.5))


class TestBudget:
    def test_fraction_with_floor(self):
        assert rationale_budget(100) == 5  # ceil(2.5) below the floor
        assert rationale_budget(200) == 5
        assert rationale_budget(201) == 6
        assert rationale_budget(400) == 10

    def test_empty_document_rejected(self):
        with pytest.raises(SelectionError):
            rationale_budget(0)


class TestGenerateCandidates:
    def test_worked_example(self):
        cands = generate_candidates(fake_scores([1, 5, 2]), l=2)
        assert len(cands) == 1
        c = cands[0]
        assert (c.span.start, c.span.end) == (1, 3)
        assert c.score == pytest.approx(7.0)

    def test_all_equal_scores_yield_nothing(self):
        assert generate_candidates(fake_scores([2.0] * 30), l=5) == []

    def test_window_longer_than_document_is_empty(self):
        assert generate_candidates(fake_scores([1, 2, 3]), l=10) == []

    def test_invalid_length_rejected(self):
        with pytest.raises(SelectionError):
            generate_candidates(fake_scores([1, 2, 3]), l=0)

    def test_disjoint_peaks_stay_separate(self):
        # l=3 sums on [5,5,5,0,0,5,5,5]: 15,10,5,5,10,15; mean 10; the two
        # strict survivors sit at opposite ends and must not merge.
        cands = generate_candidates(fake_scores([5, 5, 5, 0, 0, 5, 5, 5]), l=3)
        assert [(c.span.start, c.span.end) for c in cands] == [(0, 3), (5, 8)]

    @given(
        st.lists(st.floats(-5, 5), min_size=8, max_size=50),
        st.integers(min_value=1, max_value=8),
        st.floats(-10, 10),
    )
    @settings(max_examples=60, deadline=None)
    def test_shift_invariance(self, values, l, shift):
        base = generate_candidates(fake_scores(values), l)
        moved = generate_candidates(fake_scores([v + shift for v in values]), l)
        assert [(c.span.start, c.span.end) for c in base] == [
            (c.span.start, c.span.end) for c in moved
        ]

    @given(
        st.integers(min_value=0, max_value=2**32 - 1),
        st.integers(min_value=10, max_value=60),
        st.integers(min_value=1, max_value=9),
    )
    @settings(max_examples=120, deadline=None)
    def test_matches_brute_force_oracle(self, seed, n, l):
        rng = np.random.default_rng(seed)
        values = rng.normal(0, 2, n)
        got = generate_candidates(fake_scores(values), l)
        want = oracle_candidates(values, l)
        assert [(c.span.start, c.span.end) for c in got] == [
            (s, e) for s, e, _ in want
        ]
        assert [c.score for c in got] == pytest.approx([sc for _, _, sc in want])
        for a, b in zip(got, got[1:]):
            assert a.span.end <= b.span.start

    def test_merged_span_cannot_shrink_below_window(self):
        with pytest.raises(SelectionError):
            CandidateRationale(
                span=Span(0, 3), window_length=5, score=1.0, method=M.RANDOM
            )


class TestSelection:
    def test_matches_exhaustive_oracle(self):
        h = toy_harness()
        rng = np.random.default_rng(0)
        for trial in range(25):
            # a few long documents exercise multi-length shortlists
            n = int(rng.integers(12, 60) if trial < 20 else rng.integers(210, 250))
            ch = chunk_document([f"t{i % 30}" for i in range(n)], h.vocab, 16)
            methods = [M.RANDOM, M.ATTENTION, M.LIME][: int(rng.integers(1, 4))]
            all_scores = {
                m: fake_scores(rng.normal(0, 1, n), m, case_id=f"trial-{trial}")
                for m in methods
            }
            for mode in SelectionMode:
                got = select_rationales(h, ch, all_scores, mode)
                method, spans, div = oracle_select(h, ch, all_scores, mode)
                assert [(s.start, s.end) for s in got.spans] == spans
                assert got.chosen_method == method.value
                # batched vs one-at-a-time forward passes differ at ~1e-9
                assert got.selection_divergence == pytest.approx(div, abs=1e-6)

    def test_single_shortlist_wins_in_both_modes(self):
        h = toy_harness()
        n = 30
        ch = chunk_document([f"t{i % 30}" for i in range(n)], h.vocab, 16)
        values = np.zeros(n)
        values[10:15] = 5.0
        scores = {M.RANDOM: fake_scores(values)}
        expected = [(s, e) for s, e, _ in oracle_candidates(values, 5)]
        for mode in SelectionMode:
            rs = select_rationales(h, ch, scores, mode)
            assert [(s.start, s.end) for s in rs.spans] == expected
            assert rs.chosen_method == "random"

    def test_ties_break_toward_smaller_total_length(self):
        # A constant-output model makes every divergence exactly zero, so the
        # ranking must fall through to total rationale length.
        h = stub_harness(build_vocabulary([[f"t{i}" for i in range(30)]]))
        n = 40
        ch = chunk_document([f"t{i % 30}" for i in range(n)], h.vocab, 64)
        a = np.zeros(n)
        a[0:6] = 9.0  # merges to a 10-token span at the front
        b = np.zeros(n)
        b[20:25] = 9.0  # merges to a 13-token span later on
        scores = {
            M.ATTENTION: fake_scores(a, M.ATTENTION),
            M.LIME: fake_scores(b, M.LIME),
        }
        for mode in SelectionMode:
            rs = select_rationales(h, ch, scores, mode)
            assert rs.selection_divergence == 0.0
            method, spans, _ = oracle_select(h, ch, scores, mode)
            assert [(s.start, s.end) for s in rs.spans] == spans
            assert rs.chosen_method == method.value
            assert rs.token_count == min(
                sum(c.span.length for c in generate_candidates(scores[m], 5))
                for m in scores
            )

    def test_equal_lengths_break_lexicographically(self):
        h = stub_harness(build_vocabulary([[f"t{i}" for i in range(30)]]))
        n = 40
        ch = chunk_document([f"t{i % 30}" for i in range(n)], h.vocab, 64)
        early = np.zeros(n)
        early[5:10] = 9.0
        late = np.zeros(n)
        late[30:35] = 9.0
        scores = {
            M.LIME: fake_scores(early, M.LIME),
            M.DEEPLIFT: fake_scores(late, M.DEEPLIFT),
        }
        rs = select_rationales(h, ch, scores, SelectionMode.SUFFICIENCY)
        ga = generate_candidates(scores[M.LIME], 5)
        gb = generate_candidates(scores[M.DEEPLIFT], 5)
        assert sum(c.span.length for c in ga) == sum(c.span.length for c in gb)
        # same total length, zero divergence everywhere: earliest span wins
        assert rs.spans[0].start < 30
        assert rs.chosen_method == "lime"

    def test_fallback_single_window(self, caplog):
        h = toy_harness()
        n = 24
        ch = chunk_document([f"t{i % 30}" for i in range(n)], h.vocab, 16)
        scores = {M.RANDOM: fake_scores(np.ones(n))}
        with caplog.at_level("WARNING"):
            rs = select_rationales(h, ch, scores, SelectionMode.SUFFICIENCY)
        assert len(rs.spans) == 1
        assert rs.spans[0].length == 5
        assert any("falling back" in r.getMessage() for r in caplog.records)

    def test_fallback_compares_methods_by_divergence(self, caplog):
        # Two methods, both with flat scores, give two fallback windows; the
        # winner must still be chosen by masked-prediction divergence.
        h = toy_harness()
        n = 24
        ch = chunk_document([f"t{i % 30}" for i in range(n)], h.vocab, 16)
        scores = {
            M.RANDOM: fake_scores(np.ones(n)),
            M.ATTENTION: fake_scores(np.zeros(n), M.ATTENTION),
        }
        with caplog.at_level("WARNING"):
            rs = select_rationales(h, ch, scores, SelectionMode.SUFFICIENCY)
        assert len(rs.spans) == 1 and rs.spans[0].length == 5
        assert rs.chosen_method in {"random", "attention"}
        assert rs.selection_divergence is not None

    def test_deterministic(self):
        h = toy_harness()
        n = 50
        ch = chunk_document([f"t{i % 30}" for i in range(n)], h.vocab, 16)
        rng = np.random.default_rng(4)
        scores = {
            m: fake_scores(rng.normal(0, 1, n), m) for m in (M.RANDOM, M.DEEPLIFT)
        }
        r1 = select_rationales(h, ch, scores)
        r2 = select_rationales(h, ch, scores)
        assert [(s.start, s.end) for s in r1.spans] == [
            (s.start, s.end) for s in r2.spans
        ]
        assert r1.selection_divergence == r2.selection_divergence

    def test_provenance_recorded(self):
        h = toy_harness()
        n = 40
        ch = chunk_document([f"t{i % 30}" for i in range(n)], h.vocab, 16)
        rng = np.random.default_rng(9)
        scores = {M.ATTENTION: fake_scores(rng.normal(0, 1, n), M.ATTENTION)}
        rs = select_rationales(h, ch, scores)
        assert rs.technique is Technique.ISR
        assert rs.chosen_method == "attention"
        assert rs.selection_divergence is not None
        assert rs.selection_divergence >= 0.0
        assert rs.case_id == ch.case_id

    def test_score_length_mismatch_rejected(self):
        h = toy_harness()
        ch = chunk_document([f"t{i % 30}" for i in range(20)], h.vocab, 16)
        with pytest.raises(SelectionError):
            select_rationales(h, ch, {M.RANDOM: fake_scores(np.ones(10))})

    def test_no_scores_rejected(self):
        h = toy_harness()
        ch = chunk_document([f"t{i % 30}" for i in range(20)], h.vocab, 16)
        with pytest.raises(SelectionError):
            select_rationales(h, ch, {})


class TestConfigurationEnumeration:
    def test_methods_in_canonical_order_with_bounded_lengths(self):
        rng = np.random.default_rng(1)
        n = 220
        all_scores = {
            m: fake_scores(rng.normal(0, 1, n), m) for m in (M.RANDOM, M.LIME)
        }
        configs = enumerate_configurations(all_scores, n)
        budget = rationale_budget(n)
        assert budget == 6
        assert {c.window_length for c in configs} == {5, 6}
        for cfg in configs:
            for a, b in zip(cfg.spans, cfg.spans[1:]):
                assert a.end <= b.start
        method_order = [c.method for c in configs]
        assert method_order == sorted(method_order, key=lambda m: m.value)
