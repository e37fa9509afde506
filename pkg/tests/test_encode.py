"""Tokenizer, hashed n-gram vectors, and the feature pipeline."""

import numpy as np
import pytest

from rhetseg.corpus import Corpus, Document, Sentence
from rhetseg.encode import (
    WINDOW_SPECS,
    HashEncoderConfig,
    HashingEncoder,
    PrecomputedEncoder,
    feature_width,
    featurize,
    hash_embed,
    label_feature,
    load_embeddings,
    parse_window_spec,
    positional_features,
    tokenize,
    window_features,
)
from rhetseg.errors import DataError
from rhetseg.roles import RhetoricalRole


class TestTokenize:
    def test_lowercases_and_splits_punctuation(self):
        assert tokenize("The Court held: dismissed.") == \
            ["the", "court", "held", ":", "dismissed", "."]

    def test_alphanumeric_runs_stay_joined(self):
        assert tokenize("Section 80IA applies") == ["section", "80ia", "applies"]

    def test_punctuation_runs_are_single_tokens(self):
        assert tokenize("what?! yes...") == ["what", "?!", "yes", "..."]

    def test_empty(self):
        assert tokenize("") == []
        assert tokenize("   \t\n") == []


class TestHashEmbed:
    CFG = HashEncoderConfig(dim=32, ngram_orders=(1, 2), seed=0)

    def test_empty_tokens_zero_vector(self):
        np.testing.assert_array_equal(hash_embed([], self.CFG), np.zeros(32))

    def test_unit_norm_when_nonempty(self):
        v = hash_embed(["court", "held"], self.CFG)
        assert np.linalg.norm(v) == pytest.approx(1.0)

    def test_deterministic_across_calls(self):
        a = hash_embed(["appeal", "dismissed"], self.CFG)
        b = hash_embed(["appeal", "dismissed"], self.CFG)
        np.testing.assert_array_equal(a, b)

    def test_seed_changes_mapping(self):
        other = HashEncoderConfig(dim=32, ngram_orders=(1, 2), seed=1)
        a = hash_embed(["appeal", "dismissed"], self.CFG)
        b = hash_embed(["appeal", "dismissed"], other)
        assert not np.array_equal(a, b)

    def test_unigram_only_is_order_invariant(self):
        cfg = HashEncoderConfig(dim=32, ngram_orders=(1,), seed=0)
        a = hash_embed(["alpha", "beta", "gamma"], cfg)
        b = hash_embed(["gamma", "alpha", "beta"], cfg)
        np.testing.assert_allclose(a, b, atol=1e-15)

    def test_bigrams_are_order_sensitive(self):
        a = hash_embed(["alpha", "beta", "gamma"], self.CFG)
        b = hash_embed(["gamma", "alpha", "beta"], self.CFG)
        assert not np.allclose(a, b)

    def test_unigram_and_bigram_buckets_are_distinct(self):
        # the order prefix keeps the unigram "a b"-style collisions away
        cfg1 = HashEncoderConfig(dim=64, ngram_orders=(1,), seed=0)
        cfg2 = HashEncoderConfig(dim=64, ngram_orders=(2,), seed=0)
        v1 = hash_embed(["appeal"], cfg1)
        v2 = hash_embed(["appeal", "appeal"], cfg2)
        assert not np.array_equal(np.nonzero(v1), np.nonzero(v2))

    def test_unsigned_mode_nonnegative(self):
        cfg = HashEncoderConfig(dim=32, ngram_orders=(1, 2), seed=0, signed=False)
        rng = np.random.default_rng(0)
        toks = [f"w{i}" for i in rng.integers(0, 50, size=20)]
        assert np.all(hash_embed(toks, cfg) >= 0)

    def test_config_validation(self):
        with pytest.raises(DataError):
            HashEncoderConfig(dim=4)
        with pytest.raises(DataError):
            HashEncoderConfig(ngram_orders=(3,))
        with pytest.raises(DataError):
            HashEncoderConfig(ngram_orders=())


def two_sentence_doc():
    return Document(doc_id="d", sentences=(
        Sentence(index=0, text="The appeal is allowed."),
        Sentence(index=1, text="Costs follow the event."),
    ))


class TestEncoders:
    def test_hashing_encoder_shape_and_spec(self):
        enc = HashingEncoder(HashEncoderConfig(dim=16))
        M = enc.encode_document(two_sentence_doc())
        assert M.shape == (2, 16)
        assert enc.spec() == {"kind": "hash", "dim": 16, "ngram_orders": [1, 2],
                              "seed": 0, "signed": True}

    def test_precomputed_encoder_serves_rows(self):
        doc = two_sentence_doc()
        mat = np.arange(8, dtype=float).reshape(2, 4)
        enc = PrecomputedEncoder({"d": mat}, dim=4)
        np.testing.assert_array_equal(enc.encode_document(doc), mat)
        assert enc.spec() == {"kind": "precomputed", "dim": 4}

    def test_precomputed_encoder_missing_doc(self):
        enc = PrecomputedEncoder({}, dim=4)
        with pytest.raises(DataError, match="'d'"):
            enc.encode_document(two_sentence_doc())

    def test_precomputed_encoder_row_count_mismatch(self):
        enc = PrecomputedEncoder({"d": np.zeros((3, 4))}, dim=4)
        with pytest.raises(DataError, match="3 sentences"):
            enc.encode_document(two_sentence_doc())


class TestLoadEmbeddings:
    def corpus(self):
        return Corpus(documents=(two_sentence_doc(),))

    def write(self, tmp_path, body):
        path = tmp_path / "emb.tsv"
        path.write_text(body)
        return path

    def test_reads_declared_width(self, tmp_path):
        path = self.write(tmp_path, "dim=3\nd\t0\t1 2 3\nd\t1\t4 5 6\n")
        mats = load_embeddings(path, self.corpus())
        np.testing.assert_array_equal(mats["d"], [[1, 2, 3], [4, 5, 6]])

    def test_missing_row_named(self, tmp_path):
        path = self.write(tmp_path, "dim=3\nd\t0\t1 2 3\n")
        with pytest.raises(DataError, match="d:1 missing"):
            load_embeddings(path, self.corpus())

    def test_width_mismatch(self, tmp_path):
        path = self.write(tmp_path, "dim=3\nd\t0\t1 2\nd\t1\t4 5 6\n")
        with pytest.raises(DataError, match="line 2.*expected 3"):
            load_embeddings(path, self.corpus())

    def test_non_finite_rejected(self, tmp_path):
        path = self.write(tmp_path, "dim=2\nd\t0\t1 nan\nd\t1\t3 4\n")
        with pytest.raises(DataError, match="non-finite"):
            load_embeddings(path, self.corpus())

    def test_bad_header(self, tmp_path):
        path = self.write(tmp_path, "width=3\n")
        with pytest.raises(DataError, match="header"):
            load_embeddings(path, self.corpus())

    def test_bad_field_count(self, tmp_path):
        path = self.write(tmp_path, "dim=2\nd 0 1 2\n")
        with pytest.raises(DataError, match="3 tab-separated"):
            load_embeddings(path, self.corpus())


class TestWindow:
    def test_known_specs(self):
        assert parse_window_spec("i") == (0,)
        assert parse_window_spec("i-2:i-1:i") == (-2, -1, 0)
        assert parse_window_spec("i-1:i:i+1") == (-1, 0, 1)
        with pytest.raises(DataError, match="i-3"):
            parse_window_spec("i-3:i")

    def test_identity_window(self):
        M = np.arange(6, dtype=float).reshape(3, 2)
        np.testing.assert_array_equal(window_features(M, (0,)), M)

    def test_padding_at_edges(self):
        M = np.array([[1.0], [2.0], [3.0]])
        out = window_features(M, (-1, 0, 1))
        want = np.array([
            [0.0, 1.0, 2.0],
            [1.0, 2.0, 3.0],
            [2.0, 3.0, 0.0],
        ])
        np.testing.assert_array_equal(out, want)

    def test_two_back_window(self):
        M = np.array([[1.0], [2.0], [3.0], [4.0]])
        out = window_features(M, (-2, -1, 0))
        want = np.array([
            [0.0, 0.0, 1.0],
            [0.0, 1.0, 2.0],
            [1.0, 2.0, 3.0],
            [2.0, 3.0, 4.0],
        ])
        np.testing.assert_array_equal(out, want)

    def test_offsets_validated(self):
        M = np.zeros((2, 1))
        with pytest.raises(DataError):
            window_features(M, (-1,))
        with pytest.raises(DataError):
            window_features(M, (0, -1))
        with pytest.raises(DataError):
            window_features(M, (0, 2))


class TestPositional:
    def test_normalized_values(self):
        M = np.zeros((4, 1))
        out = positional_features(M, "normalized")
        np.testing.assert_allclose(out[:, 1], [0.25, 0.5, 0.75, 1.0])
        np.testing.assert_allclose(out[:, 2], [0.25, 0.25, 0.25, 0.25])

    def test_normalized_single_sentence(self):
        out = positional_features(np.zeros((1, 2)), "normalized")
        np.testing.assert_allclose(out[0, 2:], [1.0, 1.0])

    def test_sinusoidal_position_zero(self):
        out = positional_features(np.zeros((3, 1)), "sinusoidal", sin_dim=6)
        np.testing.assert_allclose(out[0, 1:], [0, 1, 0, 1, 0, 1], atol=1e-15)

    def test_sinusoidal_matches_definition(self):
        out = positional_features(np.zeros((5, 0)), "sinusoidal", sin_dim=4)
        for j in range(5):
            for k in range(2):
                angle = j / 10000.0 ** (2 * k / 4)
                assert out[j, 2 * k] == pytest.approx(np.sin(angle))
                assert out[j, 2 * k + 1] == pytest.approx(np.cos(angle))

    def test_sin_dim_validated(self):
        with pytest.raises(DataError):
            positional_features(np.zeros((2, 1)), "sinusoidal", sin_dim=5)
        with pytest.raises(DataError):
            positional_features(np.zeros((2, 1)), "nowhere")


class TestLabelFeature:
    def test_one_hot_blocks(self):
        M = np.zeros((3, 2))
        out = label_feature(M, [None, RhetoricalRole.FACTS, RhetoricalRole.DECISION])
        assert out.shape == (3, 9)
        np.testing.assert_array_equal(out[0, 2:], np.zeros(7))
        assert out[1, 2 + 1] == 1.0 and out[1, 2:].sum() == 1.0
        assert out[2, 2 + 6] == 1.0

    def test_length_checked(self):
        with pytest.raises(DataError):
            label_feature(np.zeros((3, 2)), [None, None])


class TestFeaturize:
    def test_width_matches_feature_width(self):
        rng = np.random.default_rng(0)
        base = rng.normal(size=(5, 16))
        for spec in WINDOW_SPECS.values():
            for positional, sd in (("none", 8), ("normalized", 8), ("sinusoidal", 4)):
                for labels in (None, [None] * 5):
                    X = featurize(base, spec, positional, sd, labels)
                    want = feature_width(16, spec, positional, sd, labels is not None)
                    assert X.shape == (5, want)

    def test_block_order_window_positional_label(self):
        base = np.ones((2, 3))
        X = featurize(base, (0,), "normalized", 8, [RhetoricalRole.ISSUE, None])
        np.testing.assert_array_equal(X[0, :3], np.ones(3))
        np.testing.assert_allclose(X[:, 3], [0.5, 1.0])
        assert X[0, 5 + 2] == 1.0
        np.testing.assert_array_equal(X[1, 5:], np.zeros(7))

    def test_non_finite_rejected(self):
        base = np.array([[np.inf, 0.0]])
        with pytest.raises(DataError, match="non-finite"):
            featurize(base, (0,), "none", 8, None)
