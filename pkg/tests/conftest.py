"""Shared builders for the test suite."""

from ecosim.core import Agent, AgentSequence, UserRequest


def mk_agent(aid: str, *pairs) -> Agent:
    return Agent(aid, tuple(pairs))


def mk_seq(*agents) -> AgentSequence:
    return AgentSequence(tuple(agents))


def cover_request(*descriptions) -> UserRequest:
    """A request with one part per given description (exact-cover target)."""
    return UserRequest(tuple(frozenset(d) for d in descriptions))


def role_agent(aid: str, first_id: int, value: int = 50) -> Agent:
    """Agent covering three consecutive attribute ids at a fixed value."""
    return Agent(aid, ((first_id, value), (first_id + 1, value), (first_id + 2, value)))
