"""ecosim: a distributed evolutionary ecosystem simulator.

Habitats (one per user) exchange agents over a learning overlay network;
incoming user requests spin up short-lived genetic populations whose genomes
are sequences of agents. The analysis side measures complexity, stability,
diversity and clustering structure of the evolved populations.
"""

from ecosim.core import (
    Agent,
    AgentSequence,
    SeededRng,
    UserRequest,
    canonicalize,
    description_difference,
    fitness,
)

__all__ = [
    "Agent",
    "AgentSequence",
    "SeededRng",
    "UserRequest",
    "canonicalize",
    "description_difference",
    "fitness",
]

__version__ = "0.1.0"
