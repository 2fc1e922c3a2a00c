import pytest

from vtenlp.augment import default_lexicon
from vtenlp.corpus import DVT_SCHEME, PE_SCHEME, SplitSpec, SynthSpec, generate_synthetic, split_corpus
from vtenlp.rules import demo_ruleset


@pytest.fixture(scope="session")
def pe_scheme():
    return PE_SCHEME


@pytest.fixture(scope="session")
def dvt_scheme():
    return DVT_SCHEME


@pytest.fixture(scope="session")
def lexicon():
    return default_lexicon()


@pytest.fixture(scope="session")
def pe_rules():
    return demo_ruleset()


@pytest.fixture(scope="session")
def small_pe_corpus():
    spec = SynthSpec(
        n_reports=120, class_proportions=(0.88, 0.12), mean_length_tokens=50, seed=3
    )
    return generate_synthetic(spec, PE_SCHEME)


@pytest.fixture(scope="session")
def small_pe_split(small_pe_corpus):
    return split_corpus(small_pe_corpus, SplitSpec(0.2, 0.1, seed=3))
