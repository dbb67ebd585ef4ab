"""Acceptance suite: one test per release criterion.

Each test runs the same check the `verify` subcommand uses, prints a
PASS/FAIL line (visible with `pytest -s`), asserts the check holds at its
stated tolerance, and enforces the runtime budget where one applies.
"""

import time

import numpy as np
import pytest

from videograph.config import PipelineConfig
from videograph.verification import (
    CriterionResult,
    check_attention_normalization,
    check_attention_oracles,
    check_class_embeddings,
    check_context_accounting,
    check_gradients,
    check_graph_construction,
    check_permutation_invariance,
    check_pipeline_determinism,
    check_related_passthrough,
    check_retrieval_exactness,
    check_scene_detection,
    ensure_corpus,
)


@pytest.fixture(scope="module")
def config():
    return PipelineConfig()


@pytest.fixture(scope="module")
def workdir(tmp_path_factory):
    return tmp_path_factory.mktemp("acceptance")


@pytest.fixture(scope="module")
def corpus(config, workdir):
    return ensure_corpus(config, workdir)


def rng():
    return np.random.default_rng(20240)


def report(name, passed, detail, seconds, budget=None):
    result = CriterionResult(name, passed, detail, seconds)
    print(result.line())
    assert passed, f"{name}: {detail}"
    if budget is not None:
        assert seconds < budget, f"{name} took {seconds:.2f}s, budget {budget}s"


def timed(check, *args, **kwargs):
    start = time.perf_counter()
    passed, detail = check(*args, **kwargs)
    return passed, detail, time.perf_counter() - start


def test_criterion_01_context_accounting(config):
    passed, detail, seconds = timed(check_context_accounting, config)
    report("context-accounting", passed, detail, seconds, budget=1.0)


def test_criterion_02_class_embedding_complement():
    passed, detail, seconds = timed(check_class_embeddings, rng())
    report("class-embeddings", passed, detail, seconds, budget=1.0)


def test_criterion_03_permutation_invariance():
    passed, detail, seconds = timed(check_permutation_invariance, rng())
    report("permutation-invariance", passed, detail, seconds, budget=30.0)


def test_criterion_04_related_passthrough():
    passed, detail, seconds = timed(check_related_passthrough, rng())
    report("related-passthrough", passed, detail, seconds)


def test_criterion_05_attention_oracles():
    passed, detail, seconds = timed(check_attention_oracles, rng())
    report("attention-oracles", passed, detail, seconds, budget=30.0)


def test_criterion_06_gradient_check():
    passed, detail, seconds = timed(check_gradients, rng())
    report("gradient-check", passed, detail, seconds, budget=120.0)


def test_criterion_07_attention_normalization(config, corpus, workdir):
    passed, detail, seconds = timed(
        check_attention_normalization, config, corpus, workdir
    )
    report("attention-normalization", passed, detail, seconds)


def test_criterion_08_graph_construction():
    passed, detail, seconds = timed(check_graph_construction)
    report("graph-construction", passed, detail, seconds)


def test_criterion_09_scene_detection():
    passed, detail, seconds = timed(check_scene_detection)
    report("scene-detection", passed, detail, seconds)


def test_criterion_10_retrieval_exactness():
    passed, detail, seconds = timed(check_retrieval_exactness, rng())
    report("retrieval-exactness", passed, detail, seconds)


def test_criterion_11_pipeline_determinism(config, workdir):
    start = time.perf_counter()
    corpus_dir = ensure_corpus(config, workdir)
    passed, detail = check_pipeline_determinism(config, corpus_dir, workdir)
    seconds = time.perf_counter() - start
    report("pipeline-determinism", passed, detail, seconds, budget=60.0)
