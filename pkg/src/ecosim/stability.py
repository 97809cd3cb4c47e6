"""Macro-state stability analysis for evolving populations.

A population's exact genotype multiset changes almost every generation, so
stability is judged on macro-states instead: does the population hold at
least one individual at a given fitness level? Tracking those flags per
generation across many independent runs gives empirical occupation
probabilities, whose limit distribution is summarized by a normalized
entropy, the degree of instability. Zero means every run settles into the
same macro-state; values near one mean the limit is spread evenly.

The analysis itself is engine-agnostic: callers hand in fitness values per
generation (or a callable running one cell of a parameter sweep) and this
module does the bookkeeping.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field
from typing import Callable, Iterable, Mapping, Sequence

FITNESS_LEVEL_TOL = 1e-9


class NotADistribution(ValueError):
    """Probabilities were negative or did not sum to one."""


@dataclass(frozen=True)
class MacroState:
    """Membership test: at least one individual at `level` x max fitness."""

    name: str
    level: float
    tol: float = FITNESS_LEVEL_TOL

    def occupied(
        self, fitness_values: Iterable[float], global_max_fitness: float = 1.0
    ) -> bool:
        target = self.level * global_max_fitness
        return any(abs(f - target) <= self.tol for f in fitness_values)


DEFAULT_STATES = (MacroState("M_max", 1.0), MacroState("M_half", 0.5))


def classify_generation(
    fitness_values: Iterable[float],
    states: Sequence[MacroState] = DEFAULT_STATES,
    global_max_fitness: float = 1.0,
) -> dict[str, bool]:
    """Occupancy flags for one generation. Flags are not exclusive."""
    values = list(fitness_values)
    return {s.name: s.occupied(values, global_max_fitness) for s in states}


@dataclass
class OccupationTrace:
    """Per-generation occupancy flags for one run."""

    states: tuple[str, ...]
    rows: list[dict[str, bool]] = field(default_factory=list)

    def record(self, flags: Mapping[str, bool]) -> None:
        self.rows.append({name: bool(flags[name]) for name in self.states})

    @property
    def horizon(self) -> int:
        return len(self.rows)

    def category(self) -> str:
        """Exclusive end-state: first occupied state in order, else "other"."""
        if not self.rows:
            raise ValueError("empty trace")
        final = self.rows[-1]
        for name in self.states:
            if final[name]:
                return name
        return "other"


def occupation_probabilities(
    traces: Sequence[OccupationTrace],
) -> dict[str, list[float]]:
    """Fraction of runs occupying each state, per generation."""
    if not traces:
        raise ValueError("need at least one run")
    horizon = traces[0].horizon
    states = traces[0].states
    for t in traces:
        if t.horizon != horizon or t.states != states:
            raise ValueError("traces must share states and horizon")
    probs = {name: [0.0] * horizon for name in states}
    for t in traces:
        for g, row in enumerate(t.rows):
            for name in states:
                if row[name]:
                    probs[name][g] += 1.0
    n = float(len(traces))
    for name in states:
        probs[name] = [c / n for c in probs[name]]
    return probs


def limit_distribution(traces: Sequence[OccupationTrace]) -> dict[str, float]:
    """Exclusive end-state distribution {states..., "other"} over runs."""
    if not traces:
        raise ValueError("need at least one run")
    names = list(traces[0].states) + ["other"]
    counts = {name: 0 for name in names}
    for t in traces:
        counts[t.category()] += 1
    n = float(len(traces))
    return {name: counts[name] / n for name in names}


def degree_of_instability(
    p_hat: Mapping[str, float] | Sequence[float],
    n_states: int | None = None,
) -> float:
    """Entropy of the end-state distribution, base = number of states.

    0 when one state takes all the probability, 1 for the uniform spread.
    """
    probs = list(p_hat.values()) if isinstance(p_hat, Mapping) else list(p_hat)
    if any(p < 0 for p in probs):
        raise NotADistribution("negative probability")
    if abs(sum(probs) - 1.0) > 1e-9:
        raise NotADistribution(f"probabilities sum to {sum(probs)!r}, not 1")
    n = len(probs) if n_states is None else int(n_states)
    if n < 2:
        raise ValueError("need at least two states for a meaningful entropy")
    h = -sum(p * math.log(p) for p in probs if p > 0.0)
    return h / math.log(n)


def stability_grid(
    mutation_rates: Sequence[float],
    crossover_rates: Sequence[float],
    runs_per_cell: int,
    run_category: Callable[[float, float, int], str],
    categories: Sequence[str] = ("M_max", "M_half", "other"),
) -> list[list[float]]:
    """d_ins per (mutation, crossover) cell of a rate sweep.

    `run_category(mutation, crossover, run_index)` performs one full run and
    names the macro-state it ends in. Rows follow `mutation_rates`, columns
    `crossover_rates`.
    """
    if runs_per_cell < 30:
        raise ValueError("need at least 30 runs per cell")
    n = len(categories)
    grid: list[list[float]] = []
    for mutation in mutation_rates:
        row = []
        for crossover in crossover_rates:
            counts = dict.fromkeys(categories, 0)
            for run_index in range(runs_per_cell):
                name = run_category(mutation, crossover, run_index)
                if name not in counts:
                    raise ValueError(f"unknown category {name!r}")
                counts[name] += 1
            p = [counts[c] / runs_per_cell for c in categories]
            row.append(degree_of_instability(p, n))
        grid.append(row)
    return grid


def write_occupation_csv(
    path,
    probabilities: Mapping[str, Sequence[float]],
    states: Sequence[str] = ("M_max", "M_half"),
) -> None:
    """One row per generation: generation, then p for each named state."""
    horizon = len(probabilities[states[0]])
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["generation"] + [f"p_{name}" for name in states])
        for g in range(horizon):
            writer.writerow(
                [g] + [f"{probabilities[name][g]:.6f}" for name in states]
            )
