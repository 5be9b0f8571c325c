"""Cross-validation harness, confusion matrices and comparison experiments.

The protocol: shuffle and split every class (benign included) into k folds,
train vocabulary and signatures on each fold's k-1 training portions only,
classify the combined held-out portion, and aggregate confusion counts over
all folds. Multi-class counts attribute families; the binary view collapses
every malware family into one "malware" class.
"""

from __future__ import annotations

from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Mapping, Sequence

import numpy as np

from .classifier import classify_batch
from .clusterer import DEFAULT_EPS_SCHEDULE, DEFAULT_MIN_PTS
from .errors import EmptyCorpusError, FoldPlanError, OpsigError
from .ingest import BENIGN_LABEL, OpcodeSequence
from .opgraph import (
    DEFAULT_RETAIN_FRACTION,
    BigramCounts,
    OpcodeVocabulary,
    build_graph,
    count_bigrams,
    graph_distance,
)
from .signatures import DEFAULT_SEED, build_database, build_monolithic_signature

DEFAULT_K = 5

MALWARE_BUCKET = "malware"


@dataclass(frozen=True)
class EvalConfig:
    """Pipeline knobs shared by every fold of an experiment."""

    retain_fraction: float = DEFAULT_RETAIN_FRACTION
    eps_schedule: tuple[float, ...] = DEFAULT_EPS_SCHEDULE
    min_pts: int = DEFAULT_MIN_PTS
    parallelism: int | None = None
    monolithic: bool = False


@dataclass(frozen=True)
class FoldPlan:
    """Per-class fold assignment: label -> sample_id -> fold index."""

    k: int
    seed: int
    assignments: dict[str, dict[str, int]]

    def fold_of(self, sample: OpcodeSequence) -> int:
        return self.assignments[sample.label][sample.sample_id]


def stratified_kfold(
    corpus: Sequence[OpcodeSequence], k: int = DEFAULT_K, seed: int = DEFAULT_SEED
) -> FoldPlan:
    """Seeded per-class shuffle with round-robin fold assignment.

    Within each class the fold sizes differ by at most one.
    """
    if k < 2:
        raise ValueError("k must be >= 2")
    by_label: dict[str, list[str]] = {}
    seen: set[str] = set()
    for sample in corpus:
        if sample.label is None:
            raise FoldPlanError(f"sample {sample.sample_id!r} has no class label")
        if sample.sample_id in seen:
            raise FoldPlanError(f"duplicate sample id {sample.sample_id!r} in corpus")
        seen.add(sample.sample_id)
        by_label.setdefault(sample.label, []).append(sample.sample_id)
    if not by_label:
        raise EmptyCorpusError("corpus has no samples")
    rng = np.random.default_rng(seed)
    assignments: dict[str, dict[str, int]] = {}
    for label in sorted(by_label):
        ids = sorted(by_label[label])
        if len(ids) < k:
            raise FoldPlanError(f"class {label!r} has {len(ids)} samples, fewer than k={k}")
        order = rng.permutation(len(ids))
        assignments[label] = {ids[pos]: slot % k for slot, pos in enumerate(order)}
    return FoldPlan(k, seed, assignments)


@dataclass(frozen=True, eq=False)
class ConfusionMatrix:
    """Counts[true, predicted] over an ordered label list."""

    labels: tuple[str, ...]
    counts: np.ndarray

    def __post_init__(self) -> None:
        shape = (len(self.labels), len(self.labels))
        if self.counts.shape != shape:
            raise ValueError(f"counts shape {self.counts.shape} != {shape}")
        if (self.counts < 0).any():
            raise ValueError("confusion counts must be non-negative")

    def __eq__(self, other: object) -> bool:
        if not isinstance(other, ConfusionMatrix):
            return NotImplemented
        return self.labels == other.labels and np.array_equal(self.counts, other.counts)

    @property
    def total(self) -> int:
        return int(self.counts.sum())

    def tpr(self, label: str) -> float:
        row = self.labels.index(label)
        row_sum = int(self.counts[row].sum())
        if row_sum == 0:
            return 0.0
        return float(self.counts[row, row]) / row_sum

    def to_csv(self) -> str:
        lines = ["true/predicted," + ",".join(self.labels)]
        for row, label in enumerate(self.labels):
            lines.append(label + "," + ",".join(str(int(c)) for c in self.counts[row]))
        return "\n".join(lines) + "\n"


def binary_from_multiclass(matrix: ConfusionMatrix) -> ConfusionMatrix:
    """Collapse every malware family: detection counts regardless of family."""
    if BENIGN_LABEL not in matrix.labels:
        raise OpsigError(f"multi-class matrix has no {BENIGN_LABEL!r} class")
    benign = matrix.labels.index(BENIGN_LABEL)
    malware = [i for i in range(len(matrix.labels)) if i != benign]
    counts = np.zeros((2, 2), dtype=np.int64)
    counts[0, 0] = matrix.counts[np.ix_(malware, malware)].sum()
    counts[0, 1] = matrix.counts[malware, benign].sum()
    counts[1, 0] = matrix.counts[benign, malware].sum()
    counts[1, 1] = matrix.counts[benign, benign]
    return ConfusionMatrix((MALWARE_BUCKET, BENIGN_LABEL), counts)


@dataclass(frozen=True)
class MetricsReport:
    """Headline rates: per-class TPR, macro TPR, binary TPR and FPR."""

    per_class_tpr: dict[str, float]
    macro_tpr: float
    binary_tpr: float
    binary_fpr: float

    @classmethod
    def from_matrices(
        cls, multiclass: ConfusionMatrix, binary: ConfusionMatrix
    ) -> "MetricsReport":
        per_class = {label: multiclass.tpr(label) for label in multiclass.labels}
        macro = float(np.mean(list(per_class.values())))
        binary_tpr = binary.tpr(MALWARE_BUCKET)
        binary_fpr = 1.0 - binary.tpr(BENIGN_LABEL)
        return cls(per_class, macro, binary_tpr, binary_fpr)

    def to_csv(self) -> str:
        lines = ["metric,value"]
        lines.append(f"macro_tpr,{self.macro_tpr:.6f}")
        lines.append(f"binary_tpr,{self.binary_tpr:.6f}")
        lines.append(f"binary_fpr,{self.binary_fpr:.6f}")
        for label in sorted(self.per_class_tpr):
            lines.append(f"tpr_{label},{self.per_class_tpr[label]:.6f}")
        return "\n".join(lines) + "\n"


@dataclass(frozen=True, eq=False)
class CrossvalResult:
    multiclass: ConfusionMatrix
    binary: ConfusionMatrix
    metrics: MetricsReport
    k: int
    seed: int
    config: EvalConfig
    diagnostics: dict[str, object] = field(default_factory=dict)


def _corpus_counts(corpus: Sequence[OpcodeSequence]) -> dict[str, BigramCounts]:
    return {sample.sample_id: count_bigrams(sample) for sample in corpus}


def run_crossval(
    corpus: Sequence[OpcodeSequence],
    k: int = DEFAULT_K,
    seed: int = DEFAULT_SEED,
    config: EvalConfig | None = None,
) -> CrossvalResult:
    """Aggregated k-fold evaluation; every sample is tested exactly once."""
    config = config or EvalConfig()
    plan = stratified_kfold(corpus, k, seed)
    counts_by_id = _corpus_counts(corpus)
    labels = tuple(sorted({sample.label for sample in corpus}))
    position = {label: i for i, label in enumerate(labels)}
    counts = np.zeros((len(labels), len(labels)), dtype=np.int64)
    dropped_test = 0
    signatures_per_fold: list[int] = []
    for fold in range(k):
        try:
            train = [s for s in corpus if plan.fold_of(s) != fold]
            test = [s for s in corpus if plan.fold_of(s) == fold]
            db = build_database(
                train,
                retain_fraction=config.retain_fraction,
                eps_schedule=config.eps_schedule,
                min_pts=config.min_pts,
                seed=seed,
                parallelism=config.parallelism,
                counts=counts_by_id,
                monolithic=config.monolithic,
            )
            batch = []
            for sample in test:
                graph, dropped = build_graph(counts_by_id[sample.sample_id], db.vocabulary)
                dropped_test += dropped
                batch.append((sample.sample_id, graph))
            predictions = classify_batch(batch, db, config.parallelism)
            for sample, prediction in zip(test, predictions):
                if isinstance(prediction, OpsigError):
                    raise prediction
                counts[position[sample.label], position[prediction.predicted_label]] += 1
            signatures_per_fold.append(len(db.signatures))
        except OpsigError as err:
            raise OpsigError(f"fold {fold} failed: {err}") from err
    multiclass = ConfusionMatrix(labels, counts)
    binary = binary_from_multiclass(multiclass)
    metrics = MetricsReport.from_matrices(multiclass, binary)
    diagnostics = {
        "dropped_test_bigrams": int(dropped_test),
        "signatures_per_fold": signatures_per_fold,
    }
    return CrossvalResult(multiclass, binary, metrics, k, seed, config, diagnostics)


@dataclass(frozen=True, eq=False)
class SimilarityTable:
    """Pairwise class similarities from monolithic per-class signatures."""

    labels: tuple[str, ...]
    values: np.ndarray  # similarity = 1 - distance; diagonal is nan

    def to_csv(self) -> str:
        lines = ["family," + ",".join(self.labels)]
        for row, label in enumerate(self.labels):
            cells = [
                "-" if row == col else f"{self.values[row, col]:.3f}"
                for col in range(len(self.labels))
            ]
            lines.append(label + "," + ",".join(cells))
        return "\n".join(lines) + "\n"


def family_similarity_table(
    corpus: Sequence[OpcodeSequence],
    vocab: OpcodeVocabulary,
    counts: Mapping[str, BigramCounts] | None = None,
) -> SimilarityTable:
    """One monolithic signature per class, then all pairwise similarities."""
    by_label: dict[str, list[OpcodeSequence]] = {}
    for sample in corpus:
        if sample.label is None:
            raise ValueError(f"sample {sample.sample_id!r} has no class label")
        by_label.setdefault(sample.label, []).append(sample)
    if len(by_label) < 2:
        raise ValueError("similarity table needs at least two classes")
    labels = tuple(sorted(by_label))
    graphs = {
        label: build_monolithic_signature(by_label[label], vocab, counts=counts).graph
        for label in labels
    }
    values = np.full((len(labels), len(labels)), np.nan)
    for i, first in enumerate(labels):
        for j in range(i + 1, len(labels)):
            similarity = graph_distance(graphs[first], graphs[labels[j]]).similarity
            values[i, j] = similarity
            values[j, i] = similarity
    return SimilarityTable(labels, values)


@dataclass(frozen=True, eq=False)
class BaselineComparison:
    """Clustered-signature pipeline vs the single-signature baseline."""

    clustered: CrossvalResult
    monolithic: CrossvalResult
    macro_tpr_delta: float  # clustered minus monolithic


def baseline_comparison(
    corpus: Sequence[OpcodeSequence],
    k: int = DEFAULT_K,
    seed: int = DEFAULT_SEED,
    config: EvalConfig | None = None,
) -> BaselineComparison:
    """Evaluate identical folds twice: clustered and monolithic signatures."""
    config = config or EvalConfig()
    clustered = run_crossval(corpus, k, seed, replace(config, monolithic=False))
    monolithic = run_crossval(corpus, k, seed, replace(config, monolithic=True))
    delta = clustered.metrics.macro_tpr - monolithic.metrics.macro_tpr
    return BaselineComparison(clustered, monolithic, delta)


def render_summary(result: CrossvalResult, title: str = "crossval") -> str:
    """Human-readable, deterministic run summary."""
    config = result.config
    lines = [
        f"{title} summary",
        (
            f"k={result.k} seed={result.seed} retain={config.retain_fraction:g} "
            f"eps={','.join(f'{e:g}' for e in config.eps_schedule)} "
            f"min_pts={config.min_pts} "
            f"mode={'monolithic' if config.monolithic else 'clustered'}"
        ),
        f"test_samples={result.multiclass.total}",
        f"binary_tpr={result.metrics.binary_tpr:.4f} binary_fpr={result.metrics.binary_fpr:.4f}",
        f"macro_tpr={result.metrics.macro_tpr:.4f}",
    ]
    for label in result.multiclass.labels:
        lines.append(f"tpr[{label}]={result.metrics.per_class_tpr[label]:.4f}")
    lines.append(f"dropped_test_bigrams={result.diagnostics.get('dropped_test_bigrams', 0)}")
    return "\n".join(lines) + "\n"


def write_crossval_reports(
    result: CrossvalResult, outdir: str | Path, prefix: str = ""
) -> list[Path]:
    """Write confusion matrices, metrics and a text summary under ``outdir``."""
    outdir = Path(outdir)
    outdir.mkdir(parents=True, exist_ok=True)
    written = []
    for name, text in (
        ("multiclass_confusion.csv", result.multiclass.to_csv()),
        ("binary_confusion.csv", result.binary.to_csv()),
        ("metrics.csv", result.metrics.to_csv()),
        ("summary.txt", render_summary(result, title=prefix.rstrip("_") or "crossval")),
    ):
        path = outdir / f"{prefix}{name}"
        path.write_text(text, encoding="utf-8")
        written.append(path)
    return written
