import numpy as np
import pytest

from shoptoken.IndexShardSet import build_index
from shoptoken.LshHasher import make_hasher
from shoptoken.records import ProductRecord, as_embedding
from shoptoken.synthetic import make_clustered_corpus


def pytest_addoption(parser):
    parser.addoption('--runslow', action='store_true', default=False,
                     help='run full-size benchmarks')


def pytest_collection_modifyitems(config, items):
    if config.getoption('--runslow'):
        return
    skip_slow = pytest.mark.skip(reason='needs --runslow')
    for item in items:
        if 'slow' in item.keywords:
            item.add_marker(skip_slow)


def make_record(record_id, embedding, **attributes):
    attributes.setdefault('category', 'Sofa')
    return ProductRecord(record_id, as_embedding(embedding), attributes)


@pytest.fixture
def corpus():
    return make_clustered_corpus(600, 16, num_clusters=12, seed=11)


@pytest.fixture
def hasher():
    return make_hasher(16, num_bands=16, bits_per_band=4, seed=42)


@pytest.fixture
def shard_set(corpus, hasher):
    return build_index(corpus, hasher)


@pytest.fixture
def rng():
    return np.random.default_rng(2024)
