"""Clustering of agent-sequence populations.

Two algorithms serve the crossover-pairing experiments:

* classic average-link agglomerative clustering over a pairwise distance,
  merging the pair of clusters with the smallest mean inter-cluster distance
  until k remain (ties broken toward the lowest index pair, so runs are
  reproducible),
* a greedy single-pass assignment guided by the clustered-efficiency measure:
  duplicate genomes are grouped, groups are ordered by size, and each group
  joins whichever of the k clusters maximizes the population's E_c at that
  point. Duplicates always land together, mirroring how converged populations
  are mostly stacks of identical genomes.

Distances between sequences use the same id-aware attribute matching as
request fitness, made symmetric by taking the worse direction.
"""

from __future__ import annotations

from typing import Callable, Sequence

from ecosim.complexity import clustered_efficiency
from ecosim.core import UNMATCHED_PENALTY, AgentSequence


def directed_sequence_distance(a: AgentSequence, b: AgentSequence) -> float:
    """Sum over b's attribute tuples of the best same-id match in a."""
    values_by_id: dict[int, list[int]] = {}
    for agent in a.agents:
        for attr_id, value in agent.description:
            values_by_id.setdefault(attr_id, []).append(value)
    total = 0.0
    for agent in b.agents:
        for attr_id, value in agent.description:
            values = values_by_id.get(attr_id)
            if values is None:
                total += UNMATCHED_PENALTY
            else:
                total += min(abs(value - v) for v in values)
    return total


def sequence_distance(a: AgentSequence, b: AgentSequence) -> float:
    """Symmetrized: the worse of the two directed sums."""
    return max(directed_sequence_distance(a, b), directed_sequence_distance(b, a))


def average_link_clusters(
    n: int,
    k: int,
    distance: Callable[[int, int], float],
    weights: Sequence[int] | None = None,
) -> list[list[int]]:
    """Agglomerate n points down to k clusters of point indices.

    `distance(i, j)` is called once per unordered pair. `weights` lets a
    point stand for several identical items; the mean inter-cluster distance
    is weighted accordingly, which is exactly what clustering the expanded
    multiset would do (duplicates sit at distance 0 and merge first).
    """
    if k < 1:
        raise ValueError("k must be >= 1")
    if n < 1:
        raise ValueError("need at least one point")
    w = [1] * n if weights is None else [int(x) for x in weights]
    if len(w) != n or any(x <= 0 for x in w):
        raise ValueError("weights must be positive, one per point")
    d = [[0.0] * n for _ in range(n)]
    for i in range(n):
        for j in range(i + 1, n):
            d[i][j] = d[j][i] = float(distance(i, j))

    clusters: list[list[int]] = [[i] for i in range(n)]
    while len(clusters) > k:
        best = None
        for i in range(len(clusters)):
            for j in range(i + 1, len(clusters)):
                wsum = 0.0
                dsum = 0.0
                for p in clusters[i]:
                    for q in clusters[j]:
                        dsum += w[p] * w[q] * d[p][q]
                        wsum += w[p] * w[q]
                mean = dsum / wsum
                if best is None or mean < best[0]:
                    best = (mean, i, j)
        _, i, j = best
        clusters[i] = clusters[i] + clusters[j]
        del clusters[j]
    return clusters


def efficiency_guided_clusters(
    population: dict,
    k: int,
    alphabet_size: int,
) -> list[dict]:
    """Greedy efficiency-guided assignment of genome groups to clusters.

    `population` maps genotype (symbol tuple) to count. Groups are processed
    largest first (ties: lexicographically smaller genotype first) and each
    goes to the cluster whose tentative membership maximizes E_c, where a
    still-empty cluster contributes 0 to the mean. Probe ties go to the
    cluster currently holding fewer sequences (then to the lower index), so
    flat stretches of the score spread groups out instead of piling them
    into one cluster. Only the clusters that end up non-empty are returned,
    so the result can be shorter than k.
    """
    if k < 1:
        raise ValueError("k must be >= 1")
    groups = [(g, c) for g, c in population.items() if c > 0]
    if not groups:
        raise ValueError("population is empty")
    if k == 1:
        return [dict(groups)]
    groups.sort(key=lambda kv: (-kv[1], kv[0]))
    clusters: list[dict] = [{} for _ in range(k)]
    sizes = [0] * k
    for genotype, count in groups:
        best_idx = 0
        best_key = None
        for idx in range(k):
            clusters[idx][genotype] = count
            ec = clustered_efficiency(clusters, alphabet_size)
            del clusters[idx][genotype]
            key = (ec, -sizes[idx])
            if best_key is None or key > best_key:
                best_key = key
                best_idx = idx
        clusters[best_idx][genotype] = count
        sizes[best_idx] += count
    return [c for c in clusters if c]


def effective_cluster_count(clusters: Sequence) -> int:
    """How many clusters actually hold anything."""
    return sum(1 for c in clusters if len(c) > 0)
