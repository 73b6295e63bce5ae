import unicodedata

import numpy as np
import pytest

from bitextmine.errors import ConfigInvalid, EmptySentence
from bitextmine.textpipe import (
    FeaturizerConfig,
    featurize,
    featurize_text,
    fnv1a_64,
    normalize,
    tokenize,
)

CFG = FeaturizerConfig(hash_buckets=256, hash_seed=0)


class TestNormalize:
    def test_whitespace_collapse_and_lowercase(self):
        assert normalize("  Hello   World ", CFG) == "hello world"

    def test_empty(self):
        assert normalize("", CFG) == ""

    def test_nfc_composition_matches_reference(self):
        # decomposed E + combining acute, twice
        decomposed = "Éé"
        expected = unicodedata.normalize("NFC", decomposed).lower()
        assert normalize(decomposed, CFG) == expected == "éé"

    def test_lowercase_disabled(self):
        cfg = FeaturizerConfig(hash_buckets=256, lowercase=False)
        assert normalize("Hello World", cfg) == "Hello World"

    def test_unicode_normalize_disabled(self):
        cfg = FeaturizerConfig(hash_buckets=256, unicode_normalize=False, lowercase=False)
        assert normalize("É", cfg) == "É"

    def test_tabs_and_newlines_collapse(self):
        assert normalize("a\t b\n\nc", CFG) == "a b c"


class TestTokenize:
    def test_whitespace_split(self):
        assert tokenize("how are you") == ["how", "are", "you"]

    def test_punctuation_isolated(self):
        assert tokenize("don't stop.") == ["don", "'", "t", "stop", "."]

    def test_single_token(self):
        assert tokenize("a") == ["a"]

    def test_each_punctuation_char_is_own_token(self):
        assert tokenize("a...b") == ["a", ".", ".", ".", "b"]


class TestFnv1a:
    def test_published_reference_values(self):
        # standard FNV-1a 64 vectors
        assert fnv1a_64(b"") == 0xCBF29CE484222325
        assert fnv1a_64(b"a") == 0xAF63DC4C8601EC8C
        assert fnv1a_64(b"foobar") == 0x85944171F73967E8

    def test_seed_changes_hash(self):
        assert fnv1a_64(b"token", seed=1) != fnv1a_64(b"token", seed=2)


class TestFeaturize:
    def test_counting_contract(self):
        f = featurize(["how", "are", "you"], CFG)
        assert f.token_count == 3
        assert len(f.unigram_ids) == 3
        assert len(f.bigram_ids) == 2

    def test_single_token_no_bigrams(self):
        f = featurize(["a"], CFG)
        assert f.token_count == 1
        assert len(f.bigram_ids) == 0

    def test_bigram_hash_uses_joined_tokens(self):
        f = featurize(["how", "are"], CFG)
        expected = fnv1a_64(b"how_are", CFG.hash_seed) % CFG.hash_buckets
        assert f.bigram_ids[0] == expected

    def test_seed_sensitivity(self):
        tokens = [f"tok{i}" for i in range(50)]
        a = featurize(tokens, FeaturizerConfig(hash_buckets=4096, hash_seed=1))
        b = featurize(tokens, FeaturizerConfig(hash_buckets=4096, hash_seed=2))
        c = featurize(tokens, FeaturizerConfig(hash_buckets=4096, hash_seed=1))
        assert not np.array_equal(a.unigram_ids, b.unigram_ids)
        assert np.array_equal(a.unigram_ids, c.unigram_ids)
        assert np.array_equal(a.bigram_ids, c.bigram_ids)

    def test_empty_raises(self):
        with pytest.raises(EmptySentence):
            featurize([], CFG)


class TestInvariants:
    def test_pipeline_deterministic(self, rng):
        alphabet = list("abcdefg ,.!xyz éü")
        for _ in range(50):
            text = "".join(rng.choice(alphabet) for _ in range(rng.integers(1, 60)))
            if not normalize(text, CFG):
                continue
            a = featurize_text(text, CFG)
            b = featurize_text(text, CFG)
            assert np.array_equal(a.unigram_ids, b.unigram_ids)
            assert np.array_equal(a.bigram_ids, b.bigram_ids)
            assert a.token_count == b.token_count

    def test_ids_bounded_and_length_law(self, rng):
        cfg = FeaturizerConfig(hash_buckets=128)
        for _ in range(100):
            n = int(rng.integers(1, 20))
            tokens = [f"w{rng.integers(0, 1000)}" for _ in range(n)]
            f = featurize(tokens, cfg)
            assert f.token_count == n
            assert len(f.bigram_ids) == n - 1
            assert np.all(f.unigram_ids >= 0) and np.all(f.unigram_ids < 128)
            if n > 1:
                assert np.all(f.bigram_ids >= 0) and np.all(f.bigram_ids < 128)

    def test_hash_buckets_must_be_power_of_two(self):
        with pytest.raises(ConfigInvalid):
            FeaturizerConfig(hash_buckets=100)
        with pytest.raises(ConfigInvalid):
            FeaturizerConfig(hash_buckets=1)
        FeaturizerConfig(hash_buckets=2)
