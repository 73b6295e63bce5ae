import numpy as np
import pytest

from bitextmine.encoder import ModelConfig, TowerConfig, init_model
from bitextmine.evalkit import SynthCorpusConfig, make_synthetic_corpus
from bitextmine.textpipe import FeaturizerConfig
from bitextmine.trainer import TrainingConfig, train


def tiny_model_config(buckets=64, dim=8, hidden=(8, 8), dropout=0.4):
    tower = TowerConfig(input_dim=dim, hidden_dims=hidden)
    return ModelConfig(
        featurizer=FeaturizerConfig(hash_buckets=buckets),
        source=tower,
        target=tower,
        dropout_rate=dropout,
    )


def small_model_config():
    tower = TowerConfig(input_dim=32, hidden_dims=(32, 32, 32))
    return ModelConfig(
        featurizer=FeaturizerConfig(hash_buckets=4096),
        source=tower,
        target=tower,
    )


@pytest.fixture(scope="session")
def cipher_corpus():
    """Small noise-free cipher bitext with a held-out tail."""
    cfg = SynthCorpusConfig(
        seed=17, num_pairs=480, vocab_size=80, sentence_length_range=(3, 7)
    )
    return make_synthetic_corpus(cfg).pairs


@pytest.fixture(scope="session")
def trained_model(cipher_corpus):
    """A small model trained well enough that true pairs win retrieval."""
    cfg = TrainingConfig(
        batch_size=64,
        learning_rate=0.25,
        decay_factor=0.8,
        decay_every_steps=150,
        total_steps=900,
        confidence_task_fraction=0.1,
        seed=5,
    )
    return train(cfg, cipher_corpus[:400], model_config=small_model_config())


@pytest.fixture()
def fresh_tiny_model():
    return init_model(tiny_model_config(), seed=11)


@pytest.fixture(scope="session")
def rng():
    return np.random.default_rng(1234)
