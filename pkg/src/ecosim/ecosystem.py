"""The habitat network: pools, migration, feedback, and request handling.

One habitat per user. Each habitat holds a pool of agents and stored
agent-sequences, and keeps directed, independently weighted connections to
other habitats. The simulation loop drives four kinds of events:

* deployment: a user drops a fresh agent into their habitat, which then
  migrates copies along outgoing connections,
* requests: a population is seeded from the pool, evolved, and the best
  sequence is registered, executed, migrated, and fed back into the
  connection weights,
* feedback: used routes are reinforced, useless ones decay and eventually
  close (the update is the standard reinforcement form p + a(1-p) / p(1-a)),
* escape and death: pool entries idle for too long move to a random
  neighbour a limited number of times, then are deleted.

Everything mutates a single `HabitatNetwork` owned by one simulation loop;
parallelism happens across whole runs, never inside one. Every pool change
is appended to `net.events` so a run can be audited or exported as JSON
lines afterwards.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from typing import Iterable, Sequence

from ecosim.core import Agent, AgentSequence, SeededRng, UserRequest
from ecosim.evolution import EvolutionParams, run_population, seed_population


class UnknownHabitat(KeyError):
    pass


class EmptyPool(ValueError):
    pass


@dataclass
class EcosystemParams:
    n_users: int = 100
    initial_agents_per_user: int = 5
    deploy_every_k_requests: int = 3
    k_init: int = 4
    p_init: float = 0.5
    hebbian_alpha: float = 0.1
    connection_floor: float = 0.05
    success_threshold: float = 0.9
    escape_budget: int = 3
    unused_threshold: int = 10
    evolution: EvolutionParams = field(default_factory=EvolutionParams)
    # seeding for per-request populations (see evolution.seed_population)
    seed_length_range: tuple[int, int] = (1, 4)

    def __post_init__(self) -> None:
        if self.n_users < 2:
            raise ValueError("need at least two users")
        if not 0.0 < self.hebbian_alpha < 1.0:
            raise ValueError("hebbian_alpha must be in (0, 1)")
        if not 0.0 < self.connection_floor < self.p_init <= 1.0:
            raise ValueError("need 0 < connection_floor < p_init <= 1")
        if not 0.0 < self.success_threshold <= 1.0:
            raise ValueError("success_threshold must be in (0, 1]")
        if self.k_init < 1:
            raise ValueError("k_init must be at least 1")
        if self.escape_budget < 0 or self.unused_threshold < 1:
            raise ValueError("escape_budget >= 0 and unused_threshold >= 1")


@dataclass
class PoolEntry:
    """One resident copy of an agent or stored sequence, plus its history.

    `path` is where this copy's lineage has lived (deployment habitat first);
    `records` maps habitat id to the largest execution count this lineage has
    seen or heard of there. Peer reports merge into `records` by per-habitat
    max, so repeated exchanges with the same peer are idempotent; `path` only
    ever grows through actual moves and is what "already visited" means.
    """

    item: Agent | AgentSequence
    path: list[int]
    escape_remaining: int
    records: dict[int, int] = field(default_factory=dict)
    uses: int = 0
    unused_requests: int = 0
    targeted_migrations: int = 0

    def __post_init__(self) -> None:
        for h in self.path:
            self.records.setdefault(h, 0)

    @property
    def identity(self):
        """Dedup key: agent id, or the ordered agent-id tuple of a sequence."""
        if isinstance(self.item, Agent):
            return ("agent", self.item.id)
        return ("sequence", self.item.key)

    @property
    def kind(self) -> str:
        return self.identity[0]

    def mark_used(self, habitat_id: int) -> None:
        self.uses += 1
        self.targeted_migrations += 1
        self.unused_requests = 0
        self.records[habitat_id] = self.records.get(habitat_id, 0) + 1

    def merge_records(self, reported: dict) -> None:
        for h, n in reported.items():
            if self.records.get(h, -1) < n:
                self.records[h] = n


@dataclass
class Habitat:
    id: int
    owner_user: int
    pool: list = field(default_factory=list)
    connections: dict = field(default_factory=dict)  # habitat id -> p in (0,1]
    request_count: int = 0

    def find(self, item: Agent | AgentSequence) -> PoolEntry | None:
        key = ("agent", item.id) if isinstance(item, Agent) else ("sequence", item.key)
        for entry in self.pool:
            if entry.identity == key:
                return entry
        return None

    def agents(self) -> list[Agent]:
        """Distinct agents available as population alphabet, in pool order."""
        seen = set()
        out = []
        for entry in self.pool:
            if entry.kind == "agent" and entry.item.id not in seen:
                seen.add(entry.item.id)
                out.append(entry.item)
        return out

    def sequences(self) -> list[AgentSequence]:
        seen = set()
        out = []
        for entry in self.pool:
            if entry.kind == "sequence" and entry.item.key not in seen:
                seen.add(entry.item.key)
                out.append(entry.item)
        return out


@dataclass
class HabitatNetwork:
    params: EcosystemParams
    habitats: dict
    rng: SeededRng
    clock: int = 0
    events: list = field(default_factory=list)

    def habitat(self, habitat_id: int) -> Habitat:
        try:
            return self.habitats[habitat_id]
        except KeyError:
            raise UnknownHabitat(habitat_id) from None

    def log(self, event: str, **fields) -> None:
        self.events.append({"t": self.clock, "event": event, **fields})


@dataclass
class ResponseRecord:
    habitat_id: int
    best: AgentSequence
    fitness: float
    generations: int
    deployment_due: bool
    migrated_to: list


def init_network(params: EcosystemParams, rng: SeededRng) -> HabitatNetwork:
    """Build the start network: one habitat per user, near-regular wiring.

    Habitats are processed in id order; each keeps picking partners until it
    has min(k_init, n-1), preferring partners that still need connections
    themselves. The result is a (nearly) k_init-regular undirected partner
    structure realized as directed edge pairs, all at probability p_init,
    so the mean in+out degree sits at about 2 * k_init and nobody starts
    isolated.
    """
    n = params.n_users
    net = HabitatNetwork(
        params=params,
        habitats={h: Habitat(id=h, owner_user=h) for h in range(n)},
        rng=rng,
    )
    want = min(params.k_init, n - 1)
    partners = {h: set() for h in range(n)}
    for h in range(n):
        while len(partners[h]) < want:
            needy = [
                j
                for j in range(n)
                if j != h and j not in partners[h] and len(partners[j]) < want
            ]
            cands = needy or [j for j in range(n) if j != h and j not in partners[h]]
            if not cands:
                break
            j = cands[int(rng.integers(0, len(cands)))]
            partners[h].add(j)
            partners[j].add(h)
    for h, peers in partners.items():
        for j in peers:
            net.habitats[h].connections[j] = params.p_init
    return net


def place_copy(
    net: HabitatNetwork, entry: PoolEntry, dest_id: int, event: str = "migrate"
) -> bool:
    """Copy a pool entry into `dest_id`; returns whether the pool grew.

    A same-identity resident absorbs the arrival instead (records merge by
    max), which keeps pools bounded under repeated migration. Sequence
    arrivals also drop off their constituent agents, deduplicated the same
    way, so the destination can use them as alphabet members later.
    """
    dest = net.habitat(dest_id)
    resident = dest.find(entry.item)
    if resident is not None:
        resident.merge_records(entry.records)
        grew = False
    else:
        copy = PoolEntry(
            item=entry.item,
            path=entry.path + [dest_id],
            escape_remaining=net.params.escape_budget,
            records=dict(entry.records),
        )
        dest.pool.append(copy)
        net.log(
            event,
            to=dest_id,
            kind=entry.kind,
            item=_item_label(entry.item),
            origin=entry.path[-1] if entry.path else None,
        )
        grew = True
    if isinstance(entry.item, AgentSequence):
        for agent in entry.item.agents:
            if dest.find(agent) is None:
                dest.pool.append(
                    PoolEntry(
                        item=agent,
                        path=entry.path + [dest_id],
                        escape_remaining=net.params.escape_budget,
                        records=dict(entry.records),
                    )
                )
                net.log(
                    event,
                    to=dest_id,
                    kind="agent",
                    item=agent.id,
                    origin=entry.path[-1] if entry.path else None,
                )
                grew = True
    return grew


def _item_label(item: Agent | AgentSequence):
    return item.id if isinstance(item, Agent) else list(item.key)


def deploy_agent(net: HabitatNetwork, habitat_id: int, agent: Agent) -> None:
    """Add a freshly created agent to its owner's pool, then migrate it."""
    habitat = net.habitat(habitat_id)
    entry = PoolEntry(
        item=agent, path=[habitat_id], escape_remaining=net.params.escape_budget
    )
    habitat.pool.append(entry)
    net.log("deploy", habitat=habitat_id, agent=agent.id)
    migrate(net, habitat_id, agent)


def migrate(
    net: HabitatNetwork,
    from_id: int,
    item: Agent | AgentSequence,
    rng: SeededRng | None = None,
) -> list:
    """Probabilistically copy `item` along every outgoing connection.

    Each connection admits the copy independently with its own probability;
    the original stays put. Returns the habitats whose draw succeeded (the
    copy may then be absorbed by a same-identity resident there).
    """
    rng = rng or net.rng
    habitat = net.habitat(from_id)
    entry = habitat.find(item)
    if entry is None:
        raise ValueError(f"item {_item_label(item)!r} not in habitat {from_id} pool")
    landed = []
    for dest_id, p in sorted(habitat.connections.items()):
        if rng.random() < p:
            landed.append(dest_id)
            place_copy(net, entry, dest_id, event="migrate")
    return landed


def hebbian_update(
    net: HabitatNetwork, origins: Iterable[int], at: int, success: bool
) -> None:
    """Reinforce or decay the connections that delivered used material.

    Success bumps each origin->at edge by alpha * (1 - p) (fixed point 1.0),
    creating missing edges at p_init; arriving material without a direct
    edge means the route was multi-hop, and the shortcut is worth keeping.
    Failure multiplies by (1 - alpha) and removes edges that fall below the
    floor. Failure never creates edges.
    """
    params = net.params
    net.habitat(at)
    for origin in sorted(set(origins)):
        if origin == at or origin not in net.habitats:
            continue
        conns = net.habitats[origin].connections
        if success:
            if at in conns:
                conns[at] += params.hebbian_alpha * (1.0 - conns[at])
            else:
                conns[at] = params.p_init
        elif at in conns:
            conns[at] *= 1.0 - params.hebbian_alpha
            if conns[at] < params.connection_floor:
                del conns[at]


def handle_request(
    net: HabitatNetwork,
    habitat_id: int,
    request: UserRequest,
    rng: SeededRng | None = None,
) -> ResponseRecord:
    """Answer one user request at `habitat_id`.

    Seeds a population from the pool (distinct agents as the alphabet,
    stored sequences injected as starting individuals), evolves it, then
    registers the best sequence back into the pool, credits every pool entry
    it used, migrates it outward, and feeds the result back into the
    connection weights. The returned record flags when the owner's
    every-k-requests deployment is due; performing that deployment is the
    caller's job, since only the caller knows what to deploy.
    """
    rng = rng or net.rng
    habitat = net.habitat(habitat_id)
    alphabet = habitat.agents()
    if not alphabet:
        raise EmptyPool(f"habitat {habitat_id} has no agents to evolve from")

    net.clock += 1
    habitat.request_count += 1

    pop = seed_population(
        request,
        alphabet,
        rng,
        net.params.evolution,
        injected=habitat.sequences(),
        length_range=net.params.seed_length_range,
    )
    result = run_population(pop, net.params.evolution)
    best, best_fitness = result.best, result.best_fitness

    registered = AgentSequence(best.agents, best.origin_habitats | {habitat_id})
    if habitat.find(registered) is None:
        habitat.pool.append(
            PoolEntry(
                item=registered,
                path=[habitat_id],
                escape_remaining=net.params.escape_budget,
            )
        )
        net.log("register", habitat=habitat_id, sequence=list(registered.key))

    used_ids = set(registered.key)
    origins = set(o for o in best.origin_habitats if o != habitat_id)
    for entry in habitat.pool:
        used = (entry.kind == "agent" and entry.item.id in used_ids) or (
            entry.kind == "sequence" and entry.item.key == registered.key
        )
        if used:
            entry.mark_used(habitat_id)
            if len(entry.path) >= 2:
                origins.add(entry.path[-2])
        else:
            entry.unused_requests += 1

    migrated_to = migrate(net, habitat_id, registered, rng)
    success = best_fitness >= net.params.success_threshold
    hebbian_update(net, origins, habitat_id, success)

    net.log(
        "request",
        habitat=habitat_id,
        fitness=best_fitness,
        generations=result.generations,
        success=success,
    )
    return ResponseRecord(
        habitat_id=habitat_id,
        best=registered,
        fitness=best_fitness,
        generations=result.generations,
        deployment_due=habitat.request_count % net.params.deploy_every_k_requests == 0,
        migrated_to=migrated_to,
    )


def decay_and_escape(net: HabitatNetwork, rng: SeededRng | None = None) -> None:
    """Move or delete pool entries that sat unused for too long.

    An entry idle for `unused_threshold` requests moves (not copies) to a
    uniformly random connected habitat and spends one escape; with no escapes
    left it dies. An isolated habitat gives it nowhere to go: the attempt
    still spends an escape and resets the idle counter, so stranded entries
    die after the same number of chances instead of idling forever.
    """
    rng = rng or net.rng
    params = net.params
    for habitat_id in sorted(net.habitats):
        habitat = net.habitats[habitat_id]
        keep = []
        for entry in habitat.pool:
            if entry.unused_requests < params.unused_threshold:
                keep.append(entry)
                continue
            if entry.escape_remaining <= 0:
                net.log(
                    "death",
                    habitat=habitat_id,
                    kind=entry.kind,
                    item=_item_label(entry.item),
                )
                continue
            entry.escape_remaining -= 1
            entry.unused_requests = 0
            dests = sorted(habitat.connections)
            if not dests:
                keep.append(entry)
                continue
            dest_id = dests[int(rng.integers(0, len(dests)))]
            entry.path.append(dest_id)
            entry.records.setdefault(dest_id, 0)
            net.habitats[dest_id].pool.append(entry)
            net.log(
                "escape",
                habitat=habitat_id,
                to=dest_id,
                kind=entry.kind,
                item=_item_label(entry.item),
            )
        habitat.pool = keep


def response_rate(trace: Sequence, window: int) -> float:
    """Mean response quality over the last `window` entries, as a percentage.

    Accepts ResponseRecords or bare fitness floats.
    """
    if not 0 < window <= len(trace):
        raise ValueError(f"window must be in [1, {len(trace)}], got {window}")
    tail = trace[-window:]
    values = [r.fitness if hasattr(r, "fitness") else float(r) for r in tail]
    return 100.0 * sum(values) / window


def pool_size(net: HabitatNetwork) -> int:
    return sum(len(h.pool) for h in net.habitats.values())


def mean_degree(net: HabitatNetwork) -> float:
    """Mean in-plus-out degree over habitats."""
    out = {h: len(hab.connections) for h, hab in net.habitats.items()}
    incoming = {h: 0 for h in net.habitats}
    for hab in net.habitats.values():
        for j in hab.connections:
            incoming[j] += 1
    return sum(out[h] + incoming[h] for h in net.habitats) / len(net.habitats)


def edge_probabilities(net: HabitatNetwork) -> dict:
    """{(from, to): probability} snapshot of every directed connection."""
    return {
        (h, j): p
        for h, hab in sorted(net.habitats.items())
        for j, p in sorted(hab.connections.items())
    }


def write_event_ledger(path, events: Sequence[dict]) -> None:
    """Export an event list as JSON lines, one record per line."""
    with open(path, "w", encoding="utf-8") as fh:
        for event in events:
            fh.write(json.dumps(event, separators=(",", ":")) + "\n")
