"""Bigram counting, vocabulary filtering, opcode graph construction and scoring.

An opcode graph is a V x V matrix over a shared vocabulary whose entry (i, j)
is the probability that opcode j follows opcode i in a sample. The distance
between two graphs is the total absolute difference of their edge weights,
scaled by 1 / (2V) so that scores live on [0, 1]: each row is a point on the
probability simplex (or all zero), so one row pair contributes at most 2.
"""

from __future__ import annotations

import math
from collections import Counter
from dataclasses import dataclass
from functools import cached_property
from typing import Iterable

import numpy as np

from .errors import EmptyCorpusError, EmptySampleError, VocabularyMismatchError
from .ingest import OpcodeSequence

Bigram = tuple[str, str]

DEFAULT_RETAIN_FRACTION = 0.9


@dataclass(frozen=True)
class BigramCounts:
    """Occurrence counts of ordered opcode pairs for one or more samples."""

    counts: dict[Bigram, int]
    total: int

    def __post_init__(self) -> None:
        if self.total != sum(self.counts.values()):
            raise ValueError("total does not match the sum of bigram counts")
        if any(count < 1 for count in self.counts.values()):
            raise ValueError("bigram counts must be >= 1")


def count_bigrams(seq: OpcodeSequence) -> BigramCounts:
    """Count adjacent opcode pairs; a sequence of length L has L - 1 of them."""
    if not seq.opcodes:
        raise EmptySampleError(f"sample {seq.sample_id!r} has no opcodes")
    pairs = Counter(zip(seq.opcodes, seq.opcodes[1:]))
    return BigramCounts(dict(pairs), sum(pairs.values()))


def merge_counts(parts: Iterable[BigramCounts]) -> BigramCounts:
    """Key-wise sum of several bigram count maps."""
    merged: Counter[Bigram] = Counter()
    for part in parts:
        merged.update(part.counts)
    return BigramCounts(dict(merged), sum(merged.values()))


@dataclass(frozen=True)
class OpcodeVocabulary:
    """Filtered global opcode index shared by every graph in one run.

    ``retained_bigrams`` is the shortest prefix of bigrams, sorted by count
    descending (ties broken lexicographically), whose cumulative count covers
    ``retain_fraction`` of all bigram occurrences. ``opcodes`` are exactly the
    opcodes appearing in some retained bigram, in lexicographic order.
    """

    opcodes: tuple[str, ...]
    retained_bigrams: frozenset[Bigram]
    retain_fraction: float

    @property
    def size(self) -> int:
        return len(self.opcodes)

    @cached_property
    def index(self) -> dict[str, int]:
        return {op: i for i, op in enumerate(self.opcodes)}

    @cached_property
    def retained_mask(self) -> np.ndarray:
        mask = np.zeros((self.size, self.size), dtype=bool)
        for first, second in self.retained_bigrams:
            mask[self.index[first], self.index[second]] = True
        mask.setflags(write=False)
        return mask


def build_vocabulary(
    corpus_counts: BigramCounts, retain_fraction: float = DEFAULT_RETAIN_FRACTION
) -> OpcodeVocabulary:
    """Keep the top bigrams covering ``retain_fraction`` of all occurrences."""
    if not 0.0 < retain_fraction <= 1.0:
        raise ValueError(f"retain_fraction must be in (0, 1], got {retain_fraction}")
    if corpus_counts.total <= 0:
        raise EmptyCorpusError("cannot build a vocabulary from zero bigrams")
    ranked = sorted(corpus_counts.counts.items(), key=lambda item: (-item[1], item[0]))
    target = retain_fraction * corpus_counts.total
    # Guard against float spill, e.g. 0.9 * 10 -> 9.000000000000002.
    threshold = math.ceil(target - 1e-9 * max(1.0, target))
    retained = []
    cumulative = 0
    for bigram, count in ranked:
        retained.append(bigram)
        cumulative += count
        if cumulative >= threshold:
            break
    opcodes = sorted({op for pair in retained for op in pair})
    return OpcodeVocabulary(tuple(opcodes), frozenset(retained), retain_fraction)


@dataclass(frozen=True, eq=False)
class OpcodeGraph:
    """Row-normalized bigram transition matrix over a fixed vocabulary."""

    vocab: OpcodeVocabulary
    weights: np.ndarray

    def __post_init__(self) -> None:
        expected = (self.vocab.size, self.vocab.size)
        if self.weights.shape != expected:
            raise ValueError(f"weights shape {self.weights.shape} != {expected}")


def same_vocabulary(a: OpcodeGraph, b: OpcodeGraph) -> bool:
    return a.vocab is b.vocab or a.vocab == b.vocab


def build_graph(counts: BigramCounts, vocab: OpcodeVocabulary) -> tuple[OpcodeGraph, int]:
    """Build a graph from bigram counts over the retained vocabulary.

    Only retained bigrams contribute; each row is normalized by its own
    retained outgoing total, leaving rows with no retained bigram all zero.
    Returns the graph together with the number of occurrences dropped because
    their bigram is not retained.
    """
    size = vocab.size
    weights = np.zeros((size, size))
    index = vocab.index
    retained = vocab.retained_bigrams
    dropped = 0
    for bigram, count in counts.counts.items():
        if bigram in retained:
            weights[index[bigram[0]], index[bigram[1]]] = count
        else:
            dropped += count
    row_sums = weights.sum(axis=1, keepdims=True)
    np.divide(weights, row_sums, out=weights, where=row_sums > 0)
    weights.setflags(write=False)
    return OpcodeGraph(vocab, weights), dropped


def graph_for_sequence(seq: OpcodeSequence, vocab: OpcodeVocabulary) -> tuple[OpcodeGraph, int]:
    """Convenience: count bigrams and build the graph in one step."""
    return build_graph(count_bigrams(seq), vocab)


@dataclass(frozen=True)
class ScoreValue:
    """A graph comparison score, exposed both as distance and similarity."""

    distance: float
    similarity: float


def graph_distance(a: OpcodeGraph, b: OpcodeGraph) -> ScoreValue:
    """Scaled L1 distance between two graphs on the same vocabulary.

    distance = sum(|a - b|) / (2V), which is 0 exactly for identical graphs
    and at most 1; similarity is its complement.
    """
    if not same_vocabulary(a, b):
        raise VocabularyMismatchError("graphs use different vocabularies")
    distance = float(np.abs(a.weights - b.weights).sum()) / (2.0 * a.vocab.size)
    distance = min(max(distance, 0.0), 1.0)
    return ScoreValue(distance, 1.0 - distance)
