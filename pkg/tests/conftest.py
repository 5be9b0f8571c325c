import pytest

from opsig.ingest import OpcodeSequence
from opsig.opgraph import build_vocabulary, count_bigrams, merge_counts

from helpers import TABLE1_SEQ1, TABLE1_SEQ2


@pytest.fixture
def seq1() -> OpcodeSequence:
    return OpcodeSequence("seq1", TABLE1_SEQ1, "famA")


@pytest.fixture
def seq2() -> OpcodeSequence:
    return OpcodeSequence("seq2", TABLE1_SEQ2, "famB")


@pytest.fixture
def table1_vocab(seq1, seq2):
    """Unfiltered vocabulary over both example sequences."""
    return build_vocabulary(merge_counts([count_bigrams(seq1), count_bigrams(seq2)]), 1.0)
