import numpy as np
import pytest

from videograph.config import PipelineConfig
from videograph.corpus import generate_corpus


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


@pytest.fixture(scope="session")
def small_config():
    return PipelineConfig(d_node=32, d_model=32, d_llm=48, n_related=3)


@pytest.fixture(scope="session")
def small_corpus(tmp_path_factory, small_config):
    corpus_dir = tmp_path_factory.mktemp("corpus") / "c"
    generate_corpus(corpus_dir, seed=21, video_count=8, d_node=small_config.d_node)
    return corpus_dir
