"""Nearest-signature classification, single sample and batch."""

from __future__ import annotations

import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .errors import EmptyDatabaseError, OpsigError, VocabularyMismatchError
from .ingest import BENIGN_LABEL
from .opgraph import OpcodeGraph
from .signatures import SignatureDatabase

MALWARE_VERDICT = "malware"
BENIGN_VERDICT = BENIGN_LABEL


@dataclass(frozen=True)
class Prediction:
    """Outcome of matching one sample against every signature."""

    sample_id: str
    predicted_label: str
    best_signature_id: str
    best_distance: float
    ranking: tuple[tuple[str, float], ...]

    def to_row(self) -> str:
        return (
            f"{self.sample_id},{self.predicted_label},"
            f"{self.best_signature_id},{self.best_distance!r}"
        )

    def to_json_dict(self) -> dict[str, object]:
        return {
            "sample_id": self.sample_id,
            "predicted_label": self.predicted_label,
            "best_signature_id": self.best_signature_id,
            "best_distance": self.best_distance,
            "ranking": [
                {"signature_id": sid, "distance": dist} for sid, dist in self.ranking
            ],
        }


class _Scorer:
    """Signature matrices stacked once so batch scoring stays cheap."""

    def __init__(self, db: SignatureDatabase):
        if not db.signatures:
            raise EmptyDatabaseError("signature database has no signatures")
        self.vocabulary = db.vocabulary
        self.ids = tuple(sig.signature_id for sig in db.signatures)
        self.labels = {sig.signature_id: sig.class_label for sig in db.signatures}
        self.stack = np.stack([sig.graph.weights for sig in db.signatures])
        self.denom = 2.0 * db.vocabulary.size

    def score(self, graph: OpcodeGraph, sample_id: str) -> Prediction:
        if not (graph.vocab is self.vocabulary or graph.vocab == self.vocabulary):
            raise VocabularyMismatchError(
                f"sample {sample_id!r} was built on a different vocabulary"
            )
        distances = np.abs(self.stack - graph.weights).sum(axis=(1, 2)) / self.denom
        np.clip(distances, 0.0, 1.0, out=distances)
        ranking = tuple(
            sorted(zip(self.ids, distances.tolist()), key=lambda e: (e[1], e[0]))
        )
        best_id, best_distance = ranking[0]
        return Prediction(sample_id, self.labels[best_id], best_id, best_distance, ranking)


def classify(
    sample_graph: OpcodeGraph, db: SignatureDatabase, sample_id: str = "sample"
) -> Prediction:
    """Assign the class of the nearest signature.

    Exact distance ties are broken by lexicographic signature id, so results
    are deterministic.
    """
    return _Scorer(db).score(sample_graph, sample_id)


def classify_binary(
    sample_graph: OpcodeGraph, db: SignatureDatabase, sample_id: str = "sample"
) -> tuple[str, Prediction]:
    """Malware/benign verdict: benign iff the winning signature is benign."""
    if BENIGN_LABEL not in {sig.class_label for sig in db.signatures}:
        raise OpsigError(f"database has no {BENIGN_LABEL!r} class")
    prediction = classify(sample_graph, db, sample_id)
    verdict = (
        BENIGN_VERDICT if prediction.predicted_label == BENIGN_LABEL else MALWARE_VERDICT
    )
    return verdict, prediction


def classify_batch(
    samples: Sequence[tuple[str, OpcodeGraph]],
    db: SignatureDatabase,
    parallelism: int | None = None,
) -> list[Prediction | OpsigError]:
    """Classify many samples; output order matches input order.

    Per-sample domain errors are returned in place of a prediction instead of
    aborting the batch. Results do not depend on the parallelism degree.
    """
    if not samples:
        return []
    scorer = _Scorer(db)

    def work(item: tuple[str, OpcodeGraph]) -> Prediction | OpsigError:
        sample_id, graph = item
        try:
            return scorer.score(graph, sample_id)
        except OpsigError as err:
            return err

    workers = parallelism if parallelism is not None else (os.cpu_count() or 1)
    if workers <= 1:
        return [work(item) for item in samples]
    with ThreadPoolExecutor(max_workers=workers) as pool:
        return list(pool.map(work, samples))
