import numpy as np
import pytest

from sattext.sat_augment import DictionaryTranslationProvider, SynonymLexicon
from sattext.sat_config import SATConfig
from sattext.sat_corpus import Example, Vocab, tokenize
from sattext.sat_synthetic import as_dataset, generate_corpus


def pytest_addoption(parser):
    parser.addoption("--runslow", action="store_true", default=False, help="run the multi-seed experiments")


def pytest_configure(config):
    config.addinivalue_line("markers", "slow: multi-seed training experiments")


def pytest_collection_modifyitems(config, items):
    if config.getoption("--runslow"):
        return
    skip_slow = pytest.mark.skip(reason="needs --runslow")
    for item in items:
        if "slow" in item.keywords:
            item.add_marker(skip_slow)


def make_example(text: str, label=None, uid: str = None, vocab: Vocab = None) -> Example:
    words = tuple(tokenize(text))
    ex = Example(uid=uid or text, text=text, words=words, label=label)
    return vocab.encode_example(ex) if vocab is not None else ex


@pytest.fixture
def rng():
    return np.random.default_rng(0)


@pytest.fixture
def lexicon():
    return SynonymLexicon(
        {
            "cat": ["feline", "kitty"],
            "dog": ["hound", "puppy"],
            "sat": ["rested"],
            "big": ["large", "huge"],
            "red": ["crimson"],
        }
    )


@pytest.fixture
def provider():
    return DictionaryTranslationProvider(
        {"cat": "katze", "sat": "sass", "dog": "hund"},
        {"katze": "feline", "sass": "sat", "hund": "dog"},
    )


@pytest.fixture(scope="session")
def synthetic_corpus():
    return generate_corpus(n_classes=4, vocab_size=120, n_train_per_class=60, n_test_per_class=20, seed=0)


@pytest.fixture(scope="session")
def small_dataset(synthetic_corpus):
    return as_dataset(synthetic_corpus)


@pytest.fixture
def small_cfg():
    return SATConfig(
        n_c=5,
        n_unlabeled_per_class=20,
        n_dev_per_class=10,
        batch_size=4,
        mu=2,
        eta=0.05,
        beta=0.01,
        epochs=2,
        patience=2,
        d_emb=8,
        d_hid=16,
        d_proj=8,
    ).validate()
