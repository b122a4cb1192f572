import os

import numpy as np
import pytest
from hypothesis import HealthCheck, settings

settings.register_profile("default", deadline=None, max_examples=60,
                          suppress_health_check=[HealthCheck.too_slow])
settings.register_profile("ci", deadline=None, max_examples=200)
settings.load_profile(os.environ.get("HYPOTHESIS_PROFILE", "default"))


@pytest.fixture
def rng():
    return np.random.default_rng(20240601)


@pytest.fixture(scope="session")
def tiny_corpus(tmp_path_factory):
    """24 rendered utterances, shared by the loader/model/training tests."""
    from wordprosody.synth import SynthSpec, generate_corpus

    root = tmp_path_factory.mktemp("tiny_corpus")
    generate_corpus(SynthSpec(n_utterances=24, seed=7), root)
    return root


@pytest.fixture(scope="session")
def tiny_utts(tiny_corpus):
    from wordprosody.corpus import load_corpus

    return load_corpus(tiny_corpus)
