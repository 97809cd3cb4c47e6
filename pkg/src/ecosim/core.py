"""Core model types shared by every other module.

The simulated world is built from three things:

* agents: passive service stubs described by a small bag of
  ``(attribute_id, attribute_value)`` integer tuples,
* agent-sequences: ordered, repetition-allowed lists of agents that act as
  the evolving genomes,
* user requests: lists of attribute sets describing what a user wants.

Everything here is deterministic and side-effect free. Randomness is funneled
through :class:`SeededRng`, which derives independent substreams from a single
64-bit seed so that any run can be replayed bit for bit.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Iterable, Sequence

import numpy as np

ATTR_MIN = 1
ATTR_MAX = 100

# Cost charged per tuple that has no counterpart with the same attribute id.
# One attribute value can be off by at most ATTR_MAX - 1, so 100 dominates any
# matched pair and keeps "missing entirely" strictly worse than "present but
# wrong".
UNMATCHED_PENALTY = 100.0

AttributeTuple = tuple[int, int]
Description = tuple[AttributeTuple, ...]


def canonicalize(pairs: Iterable[Sequence[int]]) -> Description:
    """Validate and sort a description into its canonical form.

    Tuples sort by (attribute_id, attribute_value). Raises ValueError on
    anything that is not an integer pair inside [ATTR_MIN, ATTR_MAX].
    """
    out = []
    for pair in pairs:
        if len(pair) != 2:
            raise ValueError(f"attribute tuple must be a pair, got {pair!r}")
        a, v = pair
        if not (isinstance(a, (int, np.integer)) and isinstance(v, (int, np.integer))):
            raise ValueError(f"attribute tuple must hold integers, got {pair!r}")
        if not (ATTR_MIN <= a <= ATTR_MAX and ATTR_MIN <= v <= ATTR_MAX):
            raise ValueError(
                f"attribute tuple {pair!r} outside [{ATTR_MIN}, {ATTR_MAX}]"
            )
        out.append((int(a), int(v)))
    return tuple(sorted(out))


@dataclass(frozen=True)
class Agent:
    """An immutable service description.

    Habitat-level bookkeeping (usage counters, migration history) lives on the
    pool entries in :mod:`ecosim.ecosystem`, not here, so agents can be shared
    freely between populations and cached fitness keys stay tiny.
    """

    id: str
    description: Description

    def __post_init__(self) -> None:
        desc = canonicalize(self.description)
        if not 3 <= len(desc) <= 6:
            raise ValueError(
                f"agent description needs 3..6 attribute tuples, got {len(desc)}"
            )
        object.__setattr__(self, "description", desc)

    def __repr__(self) -> str:  # keep test failure output readable
        return f"Agent({self.id})"


@dataclass(frozen=True)
class AgentSequence:
    """An ordered, repetition-allowed sequence of agents (one genome)."""

    agents: tuple[Agent, ...]
    origin_habitats: frozenset[int] = frozenset()

    def __post_init__(self) -> None:
        if not isinstance(self.agents, tuple):
            object.__setattr__(self, "agents", tuple(self.agents))
        if len(self.agents) < 1:
            raise ValueError("agent sequence must hold at least one agent")

    @property
    def key(self) -> tuple[str, ...]:
        """Genotype identity: the ordered agent ids."""
        return tuple(a.id for a in self.agents)

    def __len__(self) -> int:
        return len(self.agents)


@dataclass(frozen=True)
class UserRequest:
    """A user request: an ordered list of attribute-set parts."""

    parts: tuple[frozenset, ...]

    def __post_init__(self) -> None:
        parts = []
        for part in self.parts:
            if len(part) == 0:
                raise ValueError("request part must not be empty")
            parts.append(frozenset(canonicalize(part)))
        object.__setattr__(self, "parts", tuple(parts))

    @property
    def attributes(self) -> tuple[AttributeTuple, ...]:
        """All attribute tuples across parts, flattened, sorted for stability."""
        flat = [t for part in self.parts for t in part]
        flat.sort()
        return tuple(flat)

    @property
    def key(self) -> tuple:
        """Hashable cache key. Distinct part layouts with equal flattened
        content score identically, so the flattened form is enough."""
        return self.attributes

    def __len__(self) -> int:
        return len(self.parts)


def fitness(sequence: AgentSequence, request: UserRequest) -> float:
    """Score a sequence against a request.

    Each flattened request attribute (id, r) is charged the smallest
    |r - value| over the sequence's tuples sharing that attribute id, or
    UNMATCHED_PENALTY when the id appears nowhere in the sequence. The score
    is 1 / (1 + total charge): always in (0, 1], and 1.0 exactly when every
    requested attribute is covered exactly.
    """
    values_by_id: dict[int, list[int]] = {}
    for agent in sequence.agents:
        for attr_id, value in agent.description:
            values_by_id.setdefault(attr_id, []).append(value)
    total = 0.0
    for attr_id, wanted in request.attributes:
        values = values_by_id.get(attr_id)
        if values is None:
            total += UNMATCHED_PENALTY
        else:
            total += min(abs(wanted - v) for v in values)
    return 1.0 / (1.0 + total)


def description_difference(a: Description, b: Description) -> float:
    """Normalized dissimilarity of two descriptions, in [0, 1].

    Both descriptions are walked in canonical order; tuples with equal
    attribute ids pair up greedily and contribute |value difference|, every
    unpaired tuple contributes UNMATCHED_PENALTY. The sum is normalized by
    2 * 100 * max(len(a), len(b)), so identical descriptions give 0.0 and
    attribute-disjoint equal-length descriptions give exactly 1.0.
    """
    a = canonicalize(a)
    b = canonicalize(b)
    if not a or not b:
        raise ValueError("descriptions must be non-empty")
    i = j = 0
    cost = 0.0
    while i < len(a) and j < len(b):
        id_a, val_a = a[i]
        id_b, val_b = b[j]
        if id_a == id_b:
            cost += abs(val_a - val_b)
            i += 1
            j += 1
        elif id_a < id_b:
            cost += UNMATCHED_PENALTY
            i += 1
        else:
            cost += UNMATCHED_PENALTY
            j += 1
    cost += UNMATCHED_PENALTY * ((len(a) - i) + (len(b) - j))
    return cost / (2.0 * UNMATCHED_PENALTY * max(len(a), len(b)))


_MASK64 = (1 << 64) - 1
_SPLITMIX_GAMMA = 0x9E3779B97F4A7C15


def _splitmix64(state: int) -> tuple[int, int]:
    """One SplitMix64 step: returns (hashed output, advanced state)."""
    state = (state + _SPLITMIX_GAMMA) & _MASK64
    z = state
    z = ((z ^ (z >> 30)) * 0xBF58476D1CE4E5B9) & _MASK64
    z = ((z ^ (z >> 27)) * 0x94D049BB133111EB) & _MASK64
    return (z ^ (z >> 31)) & _MASK64, state


def _fold(state: int, token: int) -> int:
    out, _ = _splitmix64(state ^ (token & _MASK64))
    return out


class SeededRng:
    """Deterministic random source with named substreams.

    A stream is identified by (seed, path), where path is a tuple of ints and
    strings such as ("run", 3, "habitat", 17). The PCG64 state backing a
    stream is derived by folding the path into the seed with SplitMix64, one
    token at a time (strings fold their UTF-8 bytes in 8-byte chunks, with a
    length token so "ab", "c" never collides with "a", "bc"). Substreams are
    therefore independent of the draw order in sibling streams, which keeps
    parallel and sequential execution byte-identical.
    """

    def __init__(self, seed: int, path: tuple = ()):
        if not 0 <= seed <= _MASK64:
            raise ValueError("seed must fit in 64 bits")
        self.seed = int(seed)
        self.path = tuple(path)
        state = _fold(0xE05EED, self.seed)
        for element in self.path:
            if isinstance(element, str):
                raw = element.encode("utf-8")
                state = _fold(state, 0x5752 ^ len(raw))
                for k in range(0, len(raw), 8):
                    state = _fold(state, int.from_bytes(raw[k : k + 8], "little"))
            elif isinstance(element, (int, np.integer)):
                state = _fold(state, 0x4952)
                state = _fold(state, int(element))
            else:
                raise TypeError(f"substream path element {element!r} not int or str")
        self.gen = np.random.Generator(np.random.PCG64(state))

    def substream(self, *path) -> "SeededRng":
        return SeededRng(self.seed, self.path + path)

    # Thin passthroughs for the handful of draw kinds the simulator uses.

    def integers(self, low, high=None, size=None):
        return self.gen.integers(low, high, size=size)

    def random(self, size=None):
        return self.gen.random(size)

    def choice(self, a, size=None, replace=True, p=None):
        return self.gen.choice(a, size=size, replace=replace, p=p)

    def shuffle(self, x) -> None:
        self.gen.shuffle(x)

    def permutation(self, x):
        return self.gen.permutation(x)

    def multinomial(self, n, pvals):
        return self.gen.multinomial(n, pvals)

    def multivariate_hypergeometric(self, colors, nsample):
        return self.gen.multivariate_hypergeometric(colors, nsample)

    def normal(self, loc=0.0, scale=1.0, size=None):
        return self.gen.normal(loc, scale, size)

    def uniform(self, low=0.0, high=1.0, size=None):
        return self.gen.uniform(low, high, size)

    def __repr__(self) -> str:
        return f"SeededRng(seed={self.seed}, path={self.path!r})"
