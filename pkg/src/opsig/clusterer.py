"""Per-family distance matrices and multi-round density clustering.

Sub-family discovery runs DBSCAN over a precomputed distance matrix once per
eps value of an ascending schedule: each round clusters only the points the
previous round left as noise, and whatever remains after the last round is
kept as singleton groups.
"""

from __future__ import annotations

from collections import deque
from dataclasses import dataclass
from typing import Iterable, Mapping, Sequence

import numpy as np

from .errors import UnknownSampleError, VocabularyMismatchError
from .opgraph import OpcodeGraph, same_vocabulary

NOISE = -1
DEFAULT_EPS_SCHEDULE = (0.01, 0.1)
DEFAULT_MIN_PTS = 3


@dataclass(frozen=True, eq=False)
class DistanceMatrix:
    """Symmetric pairwise distances for one family's samples."""

    sample_ids: tuple[str, ...]
    values: np.ndarray

    def __post_init__(self) -> None:
        n = len(self.sample_ids)
        if self.values.shape != (n, n):
            raise ValueError(f"values shape {self.values.shape} != ({n}, {n})")
        if n and not np.allclose(self.values, self.values.T, rtol=0.0, atol=1e-12):
            raise ValueError("distance matrix must be symmetric")
        if n and np.abs(np.diagonal(self.values)).max() > 1e-12:
            raise ValueError("distance matrix must have a zero diagonal")
        if n and (self.values.min() < -1e-12 or self.values.max() > 1.0 + 1e-12):
            raise ValueError("distance values must lie in [0, 1]")

    def __len__(self) -> int:
        return len(self.sample_ids)


def compute_distance_matrix(graphs: Sequence[tuple[str, OpcodeGraph]]) -> DistanceMatrix:
    """Pairwise graph distances, computed once per unordered pair and mirrored."""
    if not graphs:
        raise ValueError("at least one graph is required")
    ids = tuple(sample_id for sample_id, _ in graphs)
    first = graphs[0][1]
    for _, graph in graphs[1:]:
        if not same_vocabulary(first, graph):
            raise VocabularyMismatchError("all graphs must share one vocabulary")
    stack = np.stack([graph.weights for _, graph in graphs])
    n = len(graphs)
    values = np.zeros((n, n))
    denom = 2.0 * first.vocab.size
    for i in range(n - 1):
        row = np.abs(stack[i + 1 :] - stack[i]).sum(axis=(1, 2)) / denom
        values[i, i + 1 :] = row
        values[i + 1 :, i] = row
    np.clip(values, 0.0, 1.0, out=values)
    return DistanceMatrix(ids, values)


def submatrix(matrix: DistanceMatrix, keep_ids: Iterable[str]) -> DistanceMatrix:
    """Row/column restriction preserving the original order.

    Distances are pairwise-independent, so nothing is recomputed.
    """
    keep = set(keep_ids)
    known = set(matrix.sample_ids)
    missing = sorted(keep - known)
    if missing:
        raise UnknownSampleError(f"ids not in matrix: {missing}")
    indices = [i for i, sid in enumerate(matrix.sample_ids) if sid in keep]
    idx = np.array(indices, dtype=int)
    return DistanceMatrix(
        tuple(matrix.sample_ids[i] for i in indices),
        matrix.values[np.ix_(idx, idx)].copy(),
    )


def dbscan(matrix: DistanceMatrix, eps: float, min_pts: int) -> np.ndarray:
    """Density clustering over a precomputed distance matrix.

    A point is core iff at least ``min_pts`` points (itself included) lie
    within ``eps``. Returns one label per sample: cluster ids from 0, or
    NOISE. Cluster growth visits candidates in ascending index order, which
    pins down the otherwise ambiguous assignment of border points.
    """
    if eps <= 0.0:
        raise ValueError("eps must be positive")
    if min_pts < 1:
        raise ValueError("min_pts must be >= 1")
    dist = matrix.values
    n = len(matrix)
    neighbors = [np.flatnonzero(dist[i] <= eps) for i in range(n)]
    core = [len(nb) >= min_pts for nb in neighbors]
    labels = np.full(n, NOISE, dtype=np.int64)
    cluster = 0
    for start in range(n):
        if labels[start] != NOISE or not core[start]:
            continue
        labels[start] = cluster
        frontier = deque(neighbors[start])
        while frontier:
            point = int(frontier.popleft())
            if labels[point] != NOISE:
                continue
            labels[point] = cluster
            if core[point]:
                frontier.extend(neighbors[point])
        cluster += 1
    return labels


def validate_eps_schedule(values: Iterable[float]) -> tuple[float, ...]:
    """Check an eps schedule: each value in (0, 1], strictly increasing."""
    eps_values = tuple(float(v) for v in values)
    for value in eps_values:
        if not 0.0 < value <= 1.0:
            raise ValueError(f"eps values must lie in (0, 1], got {value}")
    if any(b <= a for a, b in zip(eps_values, eps_values[1:])):
        raise ValueError(f"eps values must be strictly increasing, got {eps_values}")
    return eps_values


@dataclass(frozen=True)
class Cluster:
    """One discovered group: an eps-round cluster or a leftover singleton."""

    member_ids: tuple[str, ...]
    round_index: int | None  # 1-based eps round, None for leftover singletons
    eps: float | None

    @property
    def is_singleton_leftover(self) -> bool:
        return self.round_index is None

    @property
    def round_tag(self) -> str:
        return "singleton" if self.round_index is None else f"r{self.round_index}"


@dataclass(frozen=True)
class ClusterSet:
    """All groups discovered for one family; groups partition its samples."""

    family: str
    groups: tuple[Cluster, ...]

    @property
    def sample_count(self) -> int:
        return sum(len(group.member_ids) for group in self.groups)

    @property
    def cluster_count(self) -> int:
        return sum(1 for group in self.groups if not group.is_singleton_leftover)

    @property
    def unclustered_count(self) -> int:
        return sum(len(g.member_ids) for g in self.groups if g.is_singleton_leftover)

    def membership(self) -> dict[str, int]:
        """Map each sample id to the index of its group."""
        return {
            sid: pos for pos, group in enumerate(self.groups) for sid in group.member_ids
        }


def multi_round_cluster(
    matrix: DistanceMatrix,
    schedule: Iterable[float],
    min_pts: int = DEFAULT_MIN_PTS,
    family: str = "",
) -> ClusterSet:
    """Run DBSCAN per eps round over the previous round's noise points.

    Round 1 clusters the full matrix; every later round clusters only what is
    still noise, on the restricted matrix. Samples left as noise after the
    final round become singleton groups.
    """
    eps_values = validate_eps_schedule(schedule)
    groups: list[Cluster] = []
    current = matrix
    for round_index, eps in enumerate(eps_values, start=1):
        if len(current) == 0:
            break
        labels = dbscan(current, eps, min_pts)
        for cluster_id in range(int(labels.max()) + 1):
            members = tuple(
                sid for sid, lab in zip(current.sample_ids, labels) if lab == cluster_id
            )
            groups.append(Cluster(members, round_index, eps))
        noise_ids = [sid for sid, lab in zip(current.sample_ids, labels) if lab == NOISE]
        current = submatrix(current, noise_ids)
    for sid in current.sample_ids:
        groups.append(Cluster((sid,), None, None))
    return ClusterSet(family, tuple(groups))


@dataclass(frozen=True)
class ClusterReportRow:
    eps_setting: str
    family: str
    samples: int
    clusters: int
    unclustered: int


def cluster_report(
    runs: Sequence[tuple[str, Sequence[ClusterSet]]]
) -> list[ClusterReportRow]:
    """One row per (eps setting, family): sample, cluster and unclustered counts."""
    rows = []
    for setting, cluster_sets in runs:
        for cluster_set in cluster_sets:
            rows.append(
                ClusterReportRow(
                    setting,
                    cluster_set.family,
                    cluster_set.sample_count,
                    cluster_set.cluster_count,
                    cluster_set.unclustered_count,
                )
            )
    return rows


def format_cluster_report(rows: Sequence[ClusterReportRow]) -> str:
    lines = ["eps_setting,family,samples,clusters,unclustered"]
    for row in rows:
        lines.append(
            f"{row.eps_setting},{row.family},{row.samples},{row.clusters},{row.unclustered}"
        )
    return "\n".join(lines) + "\n"


def eps_setting_comparison(
    matrices: Mapping[str, DistanceMatrix],
    schedule: Iterable[float],
    min_pts: int = DEFAULT_MIN_PTS,
) -> list[ClusterReportRow]:
    """Compare each single eps value against the full multi-round schedule."""
    eps_values = validate_eps_schedule(schedule)
    families = sorted(matrices)
    runs = []
    for eps in eps_values:
        cluster_sets = [
            multi_round_cluster(matrices[fam], (eps,), min_pts, family=fam)
            for fam in families
        ]
        runs.append((f"{eps:g}", cluster_sets))
    proposed = [
        multi_round_cluster(matrices[fam], eps_values, min_pts, family=fam)
        for fam in families
    ]
    runs.append(("proposed", proposed))
    return cluster_report(runs)
