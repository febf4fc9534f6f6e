"""Classifier harness tests: chunking, masking, gradients, training."""

from __future__ import annotations

import numpy as np
import pytest
import torch
from hypothesis import given, settings
from hypothesis import strategies as st

from inteval.corpus import FixtureSpec, LabelValue, balance_corpus, make_fixture_corpus
from inteval.errors import CapabilityError, CorpusError, HarnessError, IntevalError
from inteval.harness import (
    BlackBoxHarness,
    ModelConfig,
    TinyTransformer,
    TinyTransformerHarness,
    TrainConfig,
    Vocabulary,
    build_vocabulary,
    chunk_document,
    class_index,
    fit_classifier,
    keep_only,
    load_harness,
    macro_f1,
    remove,
    save_harness,
    stub_harness,
)
from inteval.harness.chunking import MaskMode, MaskSpec


def small_vocab() -> Vocabulary:
    return build_vocabulary([[f"t{i}" for i in range(30)]])


def toy_harness(n_layers: int = 1, dtype: str = "float32") -> TinyTransformerHarness:
    vocab = small_vocab()
    cfg = ModelConfig(
        vocab_size=len(vocab),
        d_model=16,
        n_heads=2,
        n_layers=n_layers,
        d_ff=32,
        max_chunk_len=16,
        dtype=dtype,
        seed=3,
    )
    torch.manual_seed(3)
    return TinyTransformerHarness(TinyTransformer(cfg), vocab)


def toy_doc(n: int = 30) -> list[str]:
    return [f"t{i % 30}" for i in range(n)]


class TestVocabulary:
    def test_specials_pinned(self):
        v = small_vocab()
        assert v.pad_id == 0 and v.unk_id == 1

    def test_round_trip_and_oov(self):
        v = small_vocab()
        ids = v.encode(["t0", "never-seen", "t5"])
        assert ids[1] == v.unk_id
        assert v.decode(ids)[0] == "t0"

    def test_build_deterministic(self):
        a = build_vocabulary([["b", "a"], ["c"]])
        b = build_vocabulary([["c", "b"], ["a"]])
        assert a.tokens == b.tokens

    def test_save_load(self, tmp_path):
        v = small_vocab()
        v.save(tmp_path / "v.json")
        assert Vocabulary.load(tmp_path / "v.json").tokens == v.tokens


class TestChunking:
    def test_chunk_count_exact(self):
        v = small_vocab()
        ch = chunk_document(toy_doc(1200), v, max_chunk_len=512)
        assert ch.n_chunks == 3 and ch.n_tokens == 1200

    def test_long_document_chunk_count(self):
        v = small_vocab()
        ch = chunk_document(toy_doc(2800), v, max_chunk_len=512)
        assert ch.n_chunks == 6

    def test_only_last_chunk_padded(self):
        v = small_vocab()
        ch = chunk_document(toy_doc(70), v, max_chunk_len=32)
        arr = ch.ids_array()
        assert arr.shape == (3, 32)
        assert (arr[:2] != v.pad_id).all()
        assert (arr[2, 6:] == v.pad_id).all()

    @given(st.integers(min_value=1, max_value=400))
    @settings(max_examples=25, deadline=None)
    def test_dechunk_identity(self, n):
        v = small_vocab()
        tokens = toy_doc(n)
        ch = chunk_document(tokens, v, max_chunk_len=16)
        assert ch.dechunk() == v.encode(tokens)

    def test_flat_positions_map_real_tokens(self):
        v = small_vocab()
        ch = chunk_document(toy_doc(40), v, max_chunk_len=32)
        flat = ch.ids_array().reshape(-1)
        expected = np.asarray(v.encode(toy_doc(40)))
        assert (flat[ch.flat_positions()] == expected).all()

    def test_empty_document_rejected(self):
        with pytest.raises(HarnessError):
            chunk_document([], small_vocab(), 32)

    def test_tiny_window_rejected(self):
        with pytest.raises(HarnessError):
            chunk_document(toy_doc(10), small_vocab(), max_chunk_len=8)


class TestMasks:
    def test_out_of_range_positions_rejected(self):
        v = small_vocab()
        ch = chunk_document(toy_doc(20), v, 16)
        with pytest.raises(IntevalError):
            keep_only([25]).validate_for(ch)

    def test_soft_values_bounded(self):
        with pytest.raises(IntevalError):
            MaskSpec(MaskMode.KEEP_ONLY, np.array([0.2, 1.4]))

    def test_keep_and_remove_complement(self):
        kept = keep_only([1, 3]).kept_weights(5)
        removed = remove([1, 3]).kept_weights(5)
        assert (kept + removed == 1.0).all()


class TestPrediction:
    def test_probability_simplex(self):
        h = toy_harness()
        out = h.predict(chunk_document(toy_doc(40), h.vocab, 16))
        assert abs(sum(out.probs) - 1.0) < 1e-6
        assert min(out.probs) >= 0

    def test_full_keep_bit_compatible(self):
        h = toy_harness()
        ch = chunk_document(toy_doc(45), h.vocab, 16)
        plain = h.predict(ch)
        kept = h.predict(ch, keep_only(range(ch.n_tokens)))
        assert plain.probs == kept.probs

    def test_all_ones_soft_mask_bit_compatible(self):
        h = toy_harness()
        ch = chunk_document(toy_doc(45), h.vocab, 16)
        plain = h.predict(ch)
        soft = h.predict(
            ch, MaskSpec(MaskMode.KEEP_ONLY, np.ones(ch.n_tokens))
        )
        assert plain.probs == soft.probs

    def test_all_masked_is_finite(self):
        h = toy_harness()
        ch = chunk_document(toy_doc(40), h.vocab, 16)
        out = h.predict(ch, keep_only([]))
        assert np.isfinite(out.probs).all()
        assert abs(sum(out.probs) - 1.0) < 1e-6

    def test_predict_many_matches_individual(self):
        h = toy_harness()
        ch = chunk_document(toy_doc(50), h.vocab, 16)
        masks = [keep_only(range(i, i + 5)) for i in range(0, 40, 5)]
        batched = h.predict_many(ch, masks, batch_size=3)
        single = [h.predict(ch, m) for m in masks]
        for b, s in zip(batched, single):
            assert b.probs == pytest.approx(s.probs, abs=1e-6)

    def test_tie_breaks_toward_class_zero(self):
        h = stub_harness(small_vocab())
        out = h.predict(chunk_document(toy_doc(20), h.vocab, 64))
        assert out.probs == (0.5, 0.5)
        assert out.predicted == 0

    def test_hard_mask_rejects_fractional_weights(self):
        h = toy_harness()
        ch = chunk_document(toy_doc(20), h.vocab, 16)
        soft = MaskSpec(MaskMode.KEEP_ONLY, np.full(ch.n_tokens, 0.5))
        out = h.predict(ch, soft)  # soft path accepts it
        assert abs(sum(out.probs) - 1.0) < 1e-6


class TestIntrospection:
    def test_token_attention_normalized(self):
        h = toy_harness()
        ch = chunk_document(toy_doc(40), h.vocab, 16)
        intro = h.introspect(ch, target=1)
        assert intro.token_attention.shape == (40,)
        assert intro.token_attention.sum() == pytest.approx(1.0, abs=1e-6)
        assert (intro.token_attention >= 0).all()

    def test_gradients_match_plain_embedding_call(self):
        h = toy_harness()
        ch = chunk_document(toy_doc(30), h.vocab, 16)
        intro = h.introspect(ch, target=1)
        grads, logits = h.embedding_gradients(ch, target=1)
        assert np.allclose(grads, intro.embedding_grads, atol=1e-6)
        assert logits.shape == (2,)

    def test_embedding_override_batched(self):
        h = toy_harness()
        ch = chunk_document(toy_doc(30), h.vocab, 16)
        intro = h.introspect(ch, target=1)
        stack = np.stack([intro.embeddings, intro.embeddings * 0.5])
        grads, logits = h.embedding_gradients(ch, target=1, embeddings=stack)
        assert grads.shape == (2, 30, h.model.cfg.d_model)
        assert logits.shape == (2, 2)
        assert np.allclose(grads[0], intro.embedding_grads, atol=1e-6)

    def test_stub_constant_output_and_zero_gradients(self):
        h = stub_harness(small_vocab())
        ch = chunk_document(toy_doc(35), h.vocab, 64)
        intro = h.introspect(ch, target=1)
        assert np.abs(intro.embedding_grads).max() == 0.0
        assert np.abs(intro.attn_grads).max() == 0.0
        assert np.abs(intro.chunk_attn_grads).max() == 0.0

    def test_baseline_rescale_gradients_shapes(self):
        h = toy_harness()
        ch = chunk_document(toy_doc(30), h.vocab, 16)
        grads, emb, base = h.baseline_rescale_gradients(ch, target=1)
        assert grads.shape == emb.shape == base.shape == (30, 16)
        assert np.abs(base).max() == 0.0

    def test_bad_target_rejected(self):
        h = toy_harness()
        ch = chunk_document(toy_doc(20), h.vocab, 16)
        with pytest.raises(HarnessError):
            h.introspect(ch, target=5)


class TestGradientAccuracy:
    def test_directional_derivative_two_layer_float64(self):
        h = toy_harness(n_layers=2, dtype="float64")
        ch = chunk_document(toy_doc(30), h.vocab, 16)
        rng = np.random.default_rng(11)
        grads, _ = h.embedding_gradients(ch, target=1)
        base = h.introspect(ch, target=1).embeddings
        direction = rng.standard_normal(base.shape)
        direction /= np.linalg.norm(direction)
        eps = 1e-6
        _, up = h.embedding_gradients(ch, 1, base + eps * direction)
        _, down = h.embedding_gradients(ch, 1, base - eps * direction)
        numeric = (up[1] - down[1]) / (2 * eps)
        analytic = float((grads * direction).sum())
        assert abs(analytic - numeric) <= 1e-3
        assert abs(analytic - numeric) <= 1e-6 * max(1.0, abs(analytic))

    def test_soft_forward_gradient_flows(self):
        h = toy_harness()
        ch = chunk_document(toy_doc(30), h.vocab, 16)
        lam = torch.full((30,), 0.5, requires_grad=True)
        logits = h.soft_forward(ch, lam)
        logits[0, 1].backward()
        assert lam.grad is not None
        assert float(lam.grad.abs().sum()) > 0


class TestBlackBox:
    def test_prediction_passes_through(self):
        inner = toy_harness()
        bb = BlackBoxHarness(inner)
        ch = chunk_document(toy_doc(25), inner.vocab, 16)
        assert bb.predict(ch).probs == inner.predict(ch).probs
        assert bb.capabilities() == frozenset({"predict"})

    def test_introspection_refused(self):
        bb = BlackBoxHarness(toy_harness())
        ch = chunk_document(toy_doc(25), small_vocab(), 16)
        with pytest.raises(CapabilityError):
            bb.introspect(ch, 1)
        with pytest.raises(CapabilityError):
            bb.predict(ch, include_attention=True)
        with pytest.raises(CapabilityError):
            bb.soft_forward(ch, torch.zeros(25))


class TestTraining:
    def test_planted_corpus_learned(self, trained):
        assert trained.report.overall.macro >= 0.95

    def test_per_article_scores_reported(self, trained):
        assert set(trained.report.per_article) == {"6", "8"}

    def test_cue_removal_flips_positives(self, trained):
        h = trained.harness
        held_out = trained.split.test + trained.split.dev
        positives = [
            cid
            for cid in held_out
            if trained.corpus.labels[cid].value is LabelValue.VIOLATION
        ]
        flips = 0
        for cid in positives:
            ch = chunk_document(trained.docs[cid], h.vocab, h.model.cfg.max_chunk_len)
            cue = trained.corpus.cues[cid]
            before = h.predict(ch).predicted
            after = h.predict(ch, remove(cue.tokens())).predicted
            flips += int(before == 1 and after == 0)
        assert flips / len(positives) >= 0.9

    def test_label_shuffle_sits_near_chance(self):
        fx = make_fixture_corpus(FixtureSpec(n_documents=60), seed=5)
        split = balance_corpus(fx.labeled(), seed=5)
        rng = np.random.default_rng(5)
        ids = list(fx.labels)
        values = [class_index(fx.labels[c]) for c in ids]
        rng.shuffle(values)
        shuffled = dict(zip(ids, values))
        cfg = TrainConfig(epochs=8, lr=5e-3, d_model=32, d_ff=64, seed=5)
        _, report = fit_classifier(fx.by_id(), shuffled, split, cfg)
        assert report.overall.macro <= 0.75

    def test_checkpoint_round_trip(self, trained, tmp_path):
        save_harness(trained.harness, tmp_path / "ckpt")
        loaded = load_harness(tmp_path / "ckpt")
        cid = trained.split.test[0]
        ch = chunk_document(trained.docs[cid], trained.harness.vocab, 64)
        assert loaded.predict(ch).probs == trained.harness.predict(ch).probs

    def test_missing_checkpoint_file_rejected(self, tmp_path):
        with pytest.raises(HarnessError):
            load_harness(tmp_path)

    def test_empty_split_rejected(self, trained):
        bad = type(trained.split)(train=[], dev=[], test=["fx-0001"])
        with pytest.raises((HarnessError, CorpusError)):
            fit_classifier(trained.docs, trained.corpus.labels, bad)

    def test_excluded_label_not_trainable(self):
        with pytest.raises(HarnessError):
            class_index(LabelValue.EXCLUDED)


class TestMetrics:
    def test_macro_f1_hand_case(self):
        # one class perfectly predicted, the other half-missed
        y_true = [0, 0, 1, 1]
        y_pred = [0, 0, 1, 0]
        # class 0: tp=2 fp=1 fn=0 -> f1 = 4/5; class 1: tp=1 fp=0 fn=1 -> 2/3
        assert macro_f1(y_true, y_pred) == pytest.approx((0.8 + 2 / 3) / 2)

    def test_empty_rejected(self):
        with pytest.raises(HarnessError):
            macro_f1([], [])

    @given(
        st.lists(st.integers(min_value=0, max_value=1), min_size=1, max_size=30)
    )
    @settings(max_examples=30, deadline=None)
    def test_perfect_predictions_score_one_when_both_classes_present(self, ys):
        score = macro_f1(ys, ys)
        if len(set(ys)) == 2:
            assert score == 1.0
        else:
            assert score == 0.5
