"""DBSCAN over per-tract exposure-index triples.

Classic density-based clustering with Euclidean distance: points with at
least min_pts neighbors (self included) within eps are core points;
clusters are maximal density-connected sets; everything unreachable is
noise (-1). Points are scanned in geoid order and neighbor lists kept in
that order, which pins border-point assignment and makes the labeling
fully deterministic. Neighborhoods are brute force, which is cheap at
tract scale.
"""

from __future__ import annotations

from collections import deque
from dataclasses import dataclass

import numpy as np

from .model import HAZARD_TYPES, MeiTable

NOISE = -1


@dataclass(frozen=True, slots=True)
class ClusterConfig:
    eps: float = 0.1
    min_pts: int = 10

    def check(self) -> None:
        if self.eps <= 0:
            raise ValueError("eps must be positive")
        if self.min_pts < 1:
            raise ValueError("min_pts must be >= 1")


@dataclass(frozen=True, slots=True)
class ClusterSummaryRow:
    label: int
    count: int
    share: float
    mean_mei: dict[str, float]


@dataclass(frozen=True, slots=True)
class ClusterSummary:
    rows: list[ClusterSummaryRow]


@dataclass(frozen=True, slots=True)
class ClusterResult:
    labels: dict[str, int]
    summary: list[ClusterSummaryRow]


def _neighbor_lists(coords: np.ndarray, eps: float, block: int = 512) -> list[np.ndarray]:
    """Indices within eps of each point (self included), ascending order."""
    n = len(coords)
    eps2 = eps * eps
    neighbors: list[np.ndarray] = []
    for start in range(0, n, block):
        chunk = coords[start : start + block]
        d2 = ((chunk[:, None, :] - coords[None, :, :]) ** 2).sum(axis=2)
        for row in d2:
            neighbors.append(np.nonzero(row <= eps2)[0])
        del d2
    return neighbors


def dbscan(points: list[tuple[str, tuple[float, float, float]]], config: ClusterConfig) -> ClusterResult:
    """Cluster (geoid, exposure triple) points; returns labels and summary."""
    config.check()
    if not points:
        return ClusterResult(labels={}, summary=[])
    points = sorted(points, key=lambda p: p[0])
    geoids = [p[0] for p in points]
    coords = np.asarray([p[1] for p in points], dtype=float)
    n = len(points)
    neighbors = _neighbor_lists(coords, config.eps)
    core = [len(nb) >= config.min_pts for nb in neighbors]

    labels = [NOISE] * n
    cluster_id = 0
    for seed in range(n):
        if labels[seed] != NOISE or not core[seed]:
            continue
        labels[seed] = cluster_id
        queue = deque([seed])
        while queue:
            i = queue.popleft()
            if not core[i]:
                continue  # border points do not expand the cluster
            for j in neighbors[i]:
                if labels[j] == NOISE:
                    labels[j] = cluster_id
                    if core[j]:
                        queue.append(j)
        cluster_id += 1

    label_map = dict(zip(geoids, labels))
    summary = _summary_rows(label_map, {g: tuple(c) for g, c in zip(geoids, coords)})
    return ClusterResult(labels=label_map, summary=summary)


def _summary_rows(labels: dict[str, int], triples: dict[str, tuple]) -> list[ClusterSummaryRow]:
    n = len(labels)
    members: dict[int, list[str]] = {}
    for geoid, label in labels.items():
        members.setdefault(label, []).append(geoid)
    rows = []
    for label, geoids in members.items():
        means = {
            h: float(sum(triples[g][i] for g in geoids)) / len(geoids)
            for i, h in enumerate(HAZARD_TYPES)
        }
        rows.append(ClusterSummaryRow(label=label, count=len(geoids), share=len(geoids) / n, mean_mei=means))
    rows.sort(key=lambda r: (-r.count, r.label))
    return rows


def summarize(result: ClusterResult, table: MeiTable) -> ClusterSummary:
    """Per-cluster tract counts, shares, and mean index triples.

    Means are recomputed from the exposure table so the summary reflects
    exactly the rows that were clustered.
    """
    triples = {
        g: tuple(row.mei[h] for h in HAZARD_TYPES)
        for g, row in table.rows.items()
        if g in result.labels
    }
    return ClusterSummary(rows=_summary_rows(result.labels, triples))


def cluster_points(table: MeiTable) -> list[tuple[str, tuple[float, float, float]]]:
    """Extract the fully defined exposure triples eligible for clustering."""
    points = []
    for geoid in sorted(table.rows):
        row = table.rows[geoid]
        triple = tuple(row.mei[h] for h in HAZARD_TYPES)
        if all(v is not None for v in triple):
            points.append((geoid, triple))
    return points


def apply_labels(table: MeiTable, result: ClusterResult) -> MeiTable:
    """Return a table with cluster labels attached to clustered rows."""
    from dataclasses import replace

    rows = {}
    for geoid, row in table.rows.items():
        label = result.labels.get(geoid, NOISE)
        rows[geoid] = replace(row, cluster_label=label)
    return MeiTable(rows=rows)
