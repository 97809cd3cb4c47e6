"""Two optional accelerators layered on the base simulation.

Clustering catalyst: crossover pairs are drawn within clusters of the
current population instead of across all of it, so recombination mixes
like with like. Either clustering algorithm can drive it; the cluster
assignment is recomputed every generation from the population snapshot.

Targeted migration: pool agents interact pairwise, and mutually
recognized pairs share their migration records (which habitats their
lineages were executed at, and how often). An agent that has earned
targeted migrations (one per execution) spends them on copies to the most
promising habitat it has heard of but never visited. The random-destination
control keeps the counter bookkeeping and replaces the destination choice
with a uniform draw.
"""

from __future__ import annotations

from dataclasses import dataclass

from ecosim.clustering import (
    average_link_clusters,
    efficiency_guided_clusters,
    sequence_distance,
)
from ecosim.core import Agent, SeededRng
from ecosim.ecosystem import HabitatNetwork, place_copy
from ecosim.evolution import Population, random_pairing
from ecosim.recognition import make_recognizer

CATALYST_ALGORITHMS = ("average_link", "physical_complexity")
MIGRATION_MODES = ("targeted", "random_control")


@dataclass
class CatalystConfig:
    enabled: bool = True
    algorithm: str = "average_link"
    k: int = 2
    crossover_rate: float = 0.25

    def __post_init__(self) -> None:
        if self.algorithm not in CATALYST_ALGORITHMS:
            raise ValueError(f"unknown catalyst algorithm {self.algorithm!r}")
        if self.k < 1:
            raise ValueError("k must be >= 1")
        if not 0.0 <= self.crossover_rate <= 1.0:
            raise ValueError("crossover_rate must be in [0, 1]")


@dataclass
class TargetedMigrationConfig:
    enabled: bool = True
    recognizer: str = "distance"
    mode: str = "targeted"
    # cap on pairwise interactions per call; None interacts with the full pool
    interaction_cap: int | None = None

    def __post_init__(self) -> None:
        if self.mode not in MIGRATION_MODES:
            raise ValueError(f"unknown migration mode {self.mode!r}")
        if self.interaction_cap is not None and self.interaction_cap < 1:
            raise ValueError("interaction_cap must be positive")


def _cluster_index(pop: Population, cfg: CatalystConfig) -> dict:
    """Map every genotype key in the population to a cluster index."""
    counts = pop.genotype_counts()
    if cfg.algorithm == "physical_complexity":
        clusters = efficiency_guided_clusters(counts, cfg.k, len(pop.alphabet))
        return {key: i for i, cluster in enumerate(clusters) for key in cluster}
    keys = sorted(counts)
    genomes = [pop.genomes[k] for k in keys]
    index_clusters = average_link_clusters(
        len(keys),
        min(cfg.k, len(keys)),
        lambda i, j: sequence_distance(genomes[i], genomes[j]),
        weights=[counts[k] for k in keys],
    )
    return {keys[p]: i for i, cluster in enumerate(index_clusters) for p in cluster}


def catalyst_pairing(
    pop: Population,
    cfg: CatalystConfig,
    rng: SeededRng,
    n_pairs: int | None = None,
) -> list:
    """Draw crossover pairs that never straddle a cluster boundary.

    The victims are drawn exactly as the default strategy draws them; they
    are then regrouped by cluster and paired within their group, so with
    k=1 (or the catalyst disabled) the result is distribution-identical to
    unconstrained pairing. Odd leftovers per cluster are dropped, so the
    result can fall at most one pair per cluster short of `n_pairs`.
    """
    if n_pairs is None:
        n_pairs = int(cfg.crossover_rate * pop.size / 2)
    n_pairs = min(n_pairs, pop.size // 2)
    if n_pairs <= 0:
        return []
    if not cfg.enabled or cfg.k == 1:
        return random_pairing(pop, n_pairs, rng)
    cluster_of = _cluster_index(pop, cfg)
    victims = [key for pair in random_pairing(pop, n_pairs, rng) for key in pair]
    grouped: dict[int, list] = {}
    for key in victims:
        grouped.setdefault(cluster_of[key], []).append(key)
    pairs = []
    for idx in sorted(grouped):
        members = grouped[idx]
        pairs.extend(zip(members[0::2], members[1::2]))
    return pairs


def make_pairing_strategy(cfg: CatalystConfig):
    """Adapter for the evolution engine's `pairing` hook; None when disabled."""
    if not cfg.enabled:
        return None

    def strategy(pop, n_pairs, rng):
        return catalyst_pairing(pop, cfg, rng, n_pairs)

    return strategy


def targeted_migrate(
    net: HabitatNetwork,
    agent: Agent,
    at: int,
    cfg: TargetedMigrationConfig,
    rng: SeededRng,
    recognizers: dict | None = None,
) -> int | None:
    """Let one pool agent interact, share records, and maybe jump somewhere.

    Every pairwise interaction needs both sides to recognize the other
    (each judges with a recognizer built on its own description); matches
    merge migration records both ways. If the agent holds an unspent
    targeted migration, it is copied to the known-but-unvisited habitat
    with the highest reported execution count (ties to the lowest id) and
    the counter drops by one. Returns the destination, or None when nothing
    moved. `recognizers` is an optional {description: recognizer} cache so
    trained recognizers survive across calls.
    """
    habitat = net.habitat(at)
    entry = habitat.find(agent)
    if entry is None:
        raise ValueError(f"agent {agent.id!r} not in habitat {at} pool")
    if not cfg.enabled:
        return None

    cache = recognizers if recognizers is not None else {}

    def recognizer_for(description):
        rec = cache.get(description)
        if rec is None:
            rec = make_recognizer(cfg.recognizer, description, rng=rng)
            cache[description] = rec
        return rec

    peers = [
        e for e in habitat.pool if e.kind == "agent" and e.identity != entry.identity
    ]
    if cfg.interaction_cap is not None and len(peers) > cfg.interaction_cap:
        picked = rng.choice(len(peers), size=cfg.interaction_cap, replace=False)
        peers = [peers[i] for i in sorted(int(i) for i in picked)]
    own = entry.item.description
    mine = recognizer_for(own)
    for peer in peers:
        other = peer.item.description
        if mine.recognizes(other) and recognizer_for(other).recognizes(own):
            entry.merge_records(peer.records)
            peer.merge_records(entry.records)

    if entry.targeted_migrations <= 0:
        return None
    if cfg.mode == "random_control":
        others = sorted(h for h in net.habitats if h != at)
        if not others:
            return None
        dest = others[int(rng.integers(0, len(others)))]
    else:
        visited = set(entry.path)
        candidates = [
            (uses, h)
            for h, uses in entry.records.items()
            if h not in visited and h != at and h in net.habitats
        ]
        if not candidates:
            return None
        dest = min(candidates, key=lambda t: (-t[0], t[1]))[1]
    place_copy(net, entry, dest, event="targeted_migrate")
    entry.targeted_migrations -= 1
    return dest
