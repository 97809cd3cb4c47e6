"""Population complexity measures for variable-length sequence populations.

A population is a multiset of symbol sequences (here: agent-id tuples). The
measures follow the information-theoretic recipe for evolving populations:

* per-site entropy, in base |D| where D is the alphabet the population draws
  its symbols from, computed over the sequences long enough to have that site,
* an effective length l_V: the deepest site still backed by a statistically
  meaningful sample (sample-size rule below),
* complexity C_V = l_V - sum of the first l_V site entropies,
* efficiency E = C_V / l_V, in [0, 1]: 1 for a fully converged population,
  0 for one indistinguishable from uniform noise.

When the population is known to consist of n_clusters independently converged
clusters, the sample-size requirement per site relaxes to |D| * l / n_clusters
(each cluster only needs to support its own share of the population), and the
clustered efficiency E_c averages per-cluster efficiencies.
"""

from __future__ import annotations

import math
from typing import Dict, Iterable, List, Sequence, Tuple

SymbolSequence = Tuple
Counts = List[Tuple[SymbolSequence, int]]


class DegeneratePopulation(ValueError):
    """Raised when no site meets the sample-size requirement (l_V = 0)."""


def _as_counts(population) -> Counts:
    """Accept either an iterable of sequences or a {sequence: count} mapping."""
    if isinstance(population, dict):
        items = population.items()
    else:
        tally: Dict[SymbolSequence, int] = {}
        for s in population:
            tally[tuple(s)] = tally.get(tuple(s), 0) + 1
        items = tally.items()
    out = []
    for s, c in items:
        if c < 0:
            raise ValueError("negative count")
        if c:
            out.append((tuple(s), int(c)))
    return out


def sample_size(population, ell: int) -> int:
    """Number of sequences (with multiplicity) of length >= ell."""
    if ell < 1:
        raise ValueError("ell must be >= 1")
    return sum(c for s, c in _as_counts(population) if len(s) >= ell)


def per_site_entropy(population, site: int, alphabet_size: int) -> float:
    """Entropy of the symbol distribution at a 1-based site, base |D|.

    Only sequences long enough to have the site participate. 0 * log 0 is 0.
    """
    if alphabet_size < 2:
        raise ValueError("alphabet_size must be >= 2")
    if site < 1:
        raise ValueError("site is 1-based")
    tally: Dict[object, int] = {}
    total = 0
    for s, c in _as_counts(population):
        if len(s) >= site:
            tally[s[site - 1]] = tally.get(s[site - 1], 0) + c
            total += c
    if total == 0:
        raise ValueError(f"no sequence reaches site {site}")
    log_base = math.log(alphabet_size)
    h = 0.0
    for count in tally.values():
        p = count / total
        h -= p * math.log(p) / log_base
    return h


def effective_length(population, alphabet_size: int, n_clusters: int = 1) -> int:
    """Largest l whose sample is big enough while l+1's is not.

    The requirement at depth l is sample_size(l) >= |D| * l / n_clusters
    together with sample_size(l+1) < |D| * l / n_clusters; the second half
    stops a thin tail of long sequences from dragging sites with no
    statistical support into the measure. Returns 0 when no l qualifies.
    """
    if alphabet_size < 2:
        raise ValueError("alphabet_size must be >= 2")
    if n_clusters < 1:
        raise ValueError("n_clusters must be >= 1")
    counts = _as_counts(population)
    if not counts:
        return 0
    max_len = max(len(s) for s, _ in counts)
    # cumulative "length >= l" tallies in one pass
    by_len = [0] * (max_len + 2)
    for s, c in counts:
        by_len[len(s)] += c
    ge = [0] * (max_len + 2)
    running = 0
    for length in range(max_len, 0, -1):
        running += by_len[length]
        ge[length] = running
    best = 0
    for ell in range(1, max_len + 1):
        need = alphabet_size * ell / n_clusters
        tail = ge[ell + 1] if ell + 1 <= max_len else 0
        if ge[ell] >= need and tail < need:
            best = ell
    return best


def complexity(population, alphabet_size: int, n_clusters: int = 1) -> float:
    """C_V = l_V - sum of the first l_V per-site entropies."""
    ell = effective_length(population, alphabet_size, n_clusters)
    if ell == 0:
        raise DegeneratePopulation(
            "no site meets the sample-size requirement; population too small "
            "or too thinly spread over lengths"
        )
    h_total = sum(
        per_site_entropy(population, i, alphabet_size) for i in range(1, ell + 1)
    )
    return ell - h_total


def efficiency(population, alphabet_size: int, n_clusters: int = 1) -> float:
    """E = C_V / l_V in [0, 1]."""
    ell = effective_length(population, alphabet_size, n_clusters)
    if ell == 0:
        raise DegeneratePopulation("effective length is 0")
    return complexity(population, alphabet_size, n_clusters) / ell


def clustered_efficiency(clusters: Iterable, alphabet_size: int) -> float:
    """E_c: mean per-cluster efficiency under the cluster-aware sample rule.

    ``clusters`` is a list of populations (any form _as_counts accepts).
    n_clusters is taken from the list length. An empty cluster, or one too
    small to support any site, contributes 0 rather than raising: greedy
    cluster assignment probes lopsided tentative partitions all the time and
    needs them comparable, not fatal.
    """
    clusters = list(clusters)
    if not clusters:
        raise ValueError("need at least one cluster")
    n = len(clusters)
    if n == 1:
        return efficiency(clusters[0], alphabet_size, 1)
    total = 0.0
    for cluster in clusters:
        try:
            total += efficiency(cluster, alphabet_size, n)
        except DegeneratePopulation:
            total += 0.0
    return total / n
