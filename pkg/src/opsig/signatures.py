"""Cluster-level opcode-graph signatures and the persisted signature database.

A signature is the graph built from the merged bigram counts of one group of
samples, as if they were a single sample. The database bundles all per-class
signatures with the shared vocabulary and is stored as a single versioned,
checksummed JSON document with deterministic byte layout.
"""

from __future__ import annotations

import hashlib
import json
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from pathlib import Path
from typing import Iterable, Mapping, Sequence

import numpy as np

from .clusterer import (
    DEFAULT_EPS_SCHEDULE,
    DEFAULT_MIN_PTS,
    compute_distance_matrix,
    multi_round_cluster,
)
from .errors import (
    ChecksumMismatchError,
    DatabaseFormatError,
    EmptyCorpusError,
    UnsupportedVersionError,
)
from .ingest import OpcodeSequence
from .opgraph import (
    DEFAULT_RETAIN_FRACTION,
    BigramCounts,
    OpcodeGraph,
    OpcodeVocabulary,
    build_graph,
    build_vocabulary,
    count_bigrams,
    merge_counts,
)

FORMAT_VERSION = 1
DB_SUFFIX = ".sigdb.json"
DEFAULT_SEED = 7
MONOLITHIC_TAG = "monolithic"


@dataclass(frozen=True, eq=False)
class Signature:
    """One cluster-level opcode graph with its provenance."""

    signature_id: str
    class_label: str
    graph: OpcodeGraph
    member_count: int
    round_tag: str

    def __post_init__(self) -> None:
        if self.member_count < 1:
            raise ValueError("member_count must be >= 1")

    def __eq__(self, other: object) -> bool:
        if not isinstance(other, Signature):
            return NotImplemented
        return (
            self.signature_id == other.signature_id
            and self.class_label == other.class_label
            and self.member_count == other.member_count
            and self.round_tag == other.round_tag
            and self.graph.vocab == other.graph.vocab
            and np.array_equal(self.graph.weights, other.graph.weights)
        )


def build_signature(
    member_counts: Sequence[BigramCounts],
    vocab: OpcodeVocabulary,
    class_label: str,
    round_tag: str = "r1",
    ordinal: int = 0,
) -> Signature:
    """Merge the members' bigram counts key-wise and build one graph from them."""
    if not member_counts:
        raise ValueError("a signature needs at least one member")
    merged = merge_counts(member_counts)
    graph, _ = build_graph(merged, vocab)
    signature_id = f"{class_label}/{round_tag}/{ordinal}"
    return Signature(signature_id, class_label, graph, len(member_counts), round_tag)


def _uniform_label(samples: Sequence[OpcodeSequence]) -> str:
    if not samples:
        raise ValueError("at least one sample is required")
    label = samples[0].label
    if label is None or any(s.label != label for s in samples):
        raise ValueError("samples must share one non-empty class label")
    return label


def _counts_for(
    samples: Sequence[OpcodeSequence],
    counts: Mapping[str, BigramCounts] | None,
) -> dict[str, BigramCounts]:
    if counts is None:
        return {s.sample_id: count_bigrams(s) for s in samples}
    return {s.sample_id: counts[s.sample_id] for s in samples}


def build_class_signatures(
    samples: Sequence[OpcodeSequence],
    vocab: OpcodeVocabulary,
    eps_schedule: Iterable[float] = DEFAULT_EPS_SCHEDULE,
    min_pts: int = DEFAULT_MIN_PTS,
    counts: Mapping[str, BigramCounts] | None = None,
) -> list[Signature]:
    """Cluster one class's samples and build a signature per group.

    Singleton leftovers yield singleton signatures, so every sample of the
    class is covered by exactly one signature.
    """
    label = _uniform_label(samples)
    class_counts = _counts_for(samples, counts)
    graphs = [(s.sample_id, build_graph(class_counts[s.sample_id], vocab)[0]) for s in samples]
    matrix = compute_distance_matrix(graphs)
    cluster_set = multi_round_cluster(matrix, eps_schedule, min_pts, family=label)
    signatures = []
    ordinals: dict[str, int] = {}
    for group in cluster_set.groups:
        ordinal = ordinals.get(group.round_tag, 0)
        ordinals[group.round_tag] = ordinal + 1
        member_counts = [class_counts[sid] for sid in group.member_ids]
        signatures.append(
            build_signature(member_counts, vocab, label, group.round_tag, ordinal)
        )
    return signatures


def build_monolithic_signature(
    samples: Sequence[OpcodeSequence],
    vocab: OpcodeVocabulary,
    counts: Mapping[str, BigramCounts] | None = None,
) -> Signature:
    """One signature from all samples of a class, bypassing clustering."""
    label = _uniform_label(samples)
    class_counts = _counts_for(samples, counts)
    return build_signature(
        [class_counts[s.sample_id] for s in samples], vocab, label, MONOLITHIC_TAG, 0
    )


@dataclass(frozen=True, eq=False)
class SignatureDatabase:
    """All per-class signatures plus the shared vocabulary and run metadata."""

    vocabulary: OpcodeVocabulary
    signatures: tuple[Signature, ...]
    metadata: dict[str, object]

    def __post_init__(self) -> None:
        object.__setattr__(
            self, "signatures", tuple(sorted(self.signatures, key=lambda s: s.signature_id))
        )
        ids = [s.signature_id for s in self.signatures]
        if len(ids) != len(set(ids)):
            raise ValueError("signature ids must be unique")
        for sig in self.signatures:
            if not (sig.graph.vocab is self.vocabulary or sig.graph.vocab == self.vocabulary):
                raise ValueError(
                    f"signature {sig.signature_id!r} uses a different vocabulary"
                )

    @property
    def class_labels(self) -> tuple[str, ...]:
        return tuple(sorted({s.class_label for s in self.signatures}))

    def by_class(self) -> dict[str, list[Signature]]:
        grouped: dict[str, list[Signature]] = {}
        for sig in self.signatures:
            grouped.setdefault(sig.class_label, []).append(sig)
        return grouped

    def __eq__(self, other: object) -> bool:
        if not isinstance(other, SignatureDatabase):
            return NotImplemented
        return (
            self.vocabulary == other.vocabulary
            and self.metadata == other.metadata
            and self.signatures == other.signatures
        )


def build_database(
    samples: Sequence[OpcodeSequence],
    retain_fraction: float = DEFAULT_RETAIN_FRACTION,
    eps_schedule: Iterable[float] = DEFAULT_EPS_SCHEDULE,
    min_pts: int = DEFAULT_MIN_PTS,
    seed: int = DEFAULT_SEED,
    parallelism: int | None = None,
    counts: Mapping[str, BigramCounts] | None = None,
    monolithic: bool = False,
) -> SignatureDatabase:
    """Train a database: shared vocabulary, then per-class signatures.

    The vocabulary is filtered once over the merged counts of every class
    (benign included); classes are processed independently, optionally on a
    thread pool, and assembled in sorted label order either way.
    """
    if not samples:
        raise EmptyCorpusError("cannot train on an empty corpus")
    by_label: dict[str, list[OpcodeSequence]] = {}
    for sample in samples:
        if sample.label is None:
            raise ValueError(f"training sample {sample.sample_id!r} has no class label")
        by_label.setdefault(sample.label, []).append(sample)
    all_counts = _counts_for(samples, counts)
    vocab = build_vocabulary(merge_counts(all_counts.values()), retain_fraction)
    eps_values = tuple(float(e) for e in eps_schedule)

    def signatures_for(label: str) -> list[Signature]:
        class_samples = by_label[label]
        if monolithic:
            return [build_monolithic_signature(class_samples, vocab, counts=all_counts)]
        return build_class_signatures(
            class_samples, vocab, eps_values, min_pts, counts=all_counts
        )

    labels = sorted(by_label)
    if parallelism is not None and parallelism > 1:
        with ThreadPoolExecutor(max_workers=parallelism) as pool:
            per_label = list(pool.map(signatures_for, labels))
    else:
        per_label = [signatures_for(label) for label in labels]
    signatures = tuple(sig for sigs in per_label for sig in sigs)
    metadata: dict[str, object] = {
        "retain_fraction": float(retain_fraction),
        "eps_schedule": [float(e) for e in eps_values],
        "min_pts": int(min_pts),
        "seed": int(seed),
        "signature_mode": MONOLITHIC_TAG if monolithic else "clustered",
    }
    return SignatureDatabase(vocab, signatures, metadata)


def _database_payload(db: SignatureDatabase) -> dict[str, object]:
    index = db.vocabulary.index
    retained = sorted([index[i], index[j]] for i, j in db.vocabulary.retained_bigrams)
    entries = []
    for sig in db.signatures:
        rows: dict[str, dict[str, float]] = {}
        nz_rows, nz_cols = np.nonzero(sig.graph.weights)
        for r, c in zip(nz_rows.tolist(), nz_cols.tolist()):
            rows.setdefault(str(r), {})[str(c)] = float(sig.graph.weights[r, c])
        entries.append(
            {
                "id": sig.signature_id,
                "label": sig.class_label,
                "member_count": sig.member_count,
                "round_tag": sig.round_tag,
                "rows": rows,
            }
        )
    return {
        "version": FORMAT_VERSION,
        "metadata": db.metadata,
        "vocabulary": {
            "opcodes": list(db.vocabulary.opcodes),
            "retain_fraction": db.vocabulary.retain_fraction,
            "retained_bigrams": retained,
        },
        "signatures": entries,
    }


def _canonical_text(payload: dict[str, object]) -> str:
    return json.dumps(payload, sort_keys=True, separators=(",", ":"))


def save_database(db: SignatureDatabase, path: str | Path) -> None:
    """Write the database as deterministic, checksummed JSON."""
    payload = _database_payload(db)
    checksum = hashlib.sha256(_canonical_text(payload).encode("utf-8")).hexdigest()
    document = dict(payload, checksum=checksum)
    Path(path).write_text(
        json.dumps(document, sort_keys=True, indent=2) + "\n", encoding="utf-8"
    )


def load_database(path: str | Path) -> SignatureDatabase:
    """Load a database file, verifying version and checksum."""
    raw = Path(path).read_text(encoding="utf-8")
    try:
        data = json.loads(raw)
    except json.JSONDecodeError as exc:
        raise DatabaseFormatError(f"{path}: not valid JSON: {exc}") from exc
    if not isinstance(data, dict):
        raise DatabaseFormatError(f"{path}: top-level document must be an object")
    if "version" not in data:
        raise DatabaseFormatError(f"{path}: missing version field")
    if data["version"] != FORMAT_VERSION:
        raise UnsupportedVersionError(
            f"{path}: unsupported database version {data['version']!r}"
        )
    checksum = data.get("checksum")
    if not isinstance(checksum, str):
        raise DatabaseFormatError(f"{path}: missing checksum field")
    payload = {key: value for key, value in data.items() if key != "checksum"}
    actual = hashlib.sha256(_canonical_text(payload).encode("utf-8")).hexdigest()
    if actual != checksum:
        raise ChecksumMismatchError(f"{path}: checksum mismatch")
    try:
        vocab_doc = data["vocabulary"]
        opcodes = tuple(str(op) for op in vocab_doc["opcodes"])
        retained = frozenset(
            (opcodes[int(i)], opcodes[int(j)]) for i, j in vocab_doc["retained_bigrams"]
        )
        vocab = OpcodeVocabulary(opcodes, retained, float(vocab_doc["retain_fraction"]))
        signatures = []
        for entry in data["signatures"]:
            weights = np.zeros((vocab.size, vocab.size))
            for row_key, row in entry["rows"].items():
                for col_key, weight in row.items():
                    weights[int(row_key), int(col_key)] = float(weight)
            weights.setflags(write=False)
            signatures.append(
                Signature(
                    str(entry["id"]),
                    str(entry["label"]),
                    OpcodeGraph(vocab, weights),
                    int(entry["member_count"]),
                    str(entry["round_tag"]),
                )
            )
        metadata = dict(data["metadata"])
    except (KeyError, TypeError, ValueError, IndexError, AttributeError) as exc:
        raise DatabaseFormatError(f"{path}: malformed database document: {exc}") from exc
    return SignatureDatabase(vocab, tuple(signatures), metadata)
