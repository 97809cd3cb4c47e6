"""Variable-length genetic engine over agent-sequence genomes.

The public operators (`select`, `crossover_pair`, `mutate_point`,
`effective_fitness`) are pure functions with the exact semantics the rest of
the package assumes:

* selection is fitness-proportional roulette with replacement and no elitism,
* crossover is one-point with the same cut index in both parents (so the two
  offspring swap tails and the total length is conserved),
* mutation applies exactly one point edit (insert / replace / delete) with a
  uniformly chosen kind, re-rolling delete on length-1 genomes,
* longer-than-average genomes have their fitness scaled by mean_len/len
  (parsimony pressure against bloat); everyone else keeps raw fitness.

`Population` + `step_generation` wrap those operators in a genotype-count
representation: the population is a multiset {genotype: count} and the
selection draw is a single multinomial over genotype classes, which is
distribution-identical to N independent roulette spins but costs O(K) for K
distinct genotypes instead of O(N). Operator victims are drawn without
replacement with one multivariate-hypergeometric draw per operator. On the
population sizes the dynamic-size rule produces (about 1.3 * |D| * mean
length), this is what makes thousand-generation, thousand-run experiments fit
a single core; equivalence with the per-individual form is unit-tested.

Population size is recomputed every generation as
max(min_population, ceil(pop_size_factor * |D| * mean_length)): growing
genomes earn a larger population, and the extra slots are filled by the same
selection draw (equivalently: cloned parents / random truncation).
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable, Iterable, Sequence

import numpy as np

from ecosim.core import Agent, AgentSequence, SeededRng, UserRequest, fitness

GenotypeKey = tuple  # ordered agent ids
PairingStrategy = Callable[["Population", int, SeededRng], list]


@dataclass
class EvolutionParams:
    crossover_rate: float = 0.10
    mutation_rate: float = 0.10
    pop_size_factor: float = 1.29
    min_population: int = 10
    max_generations: int = 1000
    # stop after this many generations without best-fitness improvement;
    # None runs to max_generations regardless (fixed-horizon experiments)
    stall_generations: int | None = 50

    def __post_init__(self) -> None:
        if not 0.0 <= self.crossover_rate <= 1.0:
            raise ValueError("crossover_rate must be in [0, 1]")
        if not 0.0 <= self.mutation_rate <= 1.0:
            raise ValueError("mutation_rate must be in [0, 1]")
        if self.pop_size_factor <= 0:
            raise ValueError("pop_size_factor must be positive")
        if self.min_population < 2:
            raise ValueError("min_population must be at least 2")


@dataclass
class FitnessReport:
    generation: int
    size: int
    max_fitness: float
    mean_fitness: float
    mean_length: float
    distinct_genotypes: int
    best: AgentSequence


@dataclass
class RunResult:
    best: AgentSequence
    best_fitness: float
    generations: int
    reason: str  # "optimum" | "stall" | "max_generations"
    trace: list


# ------------------------------------------------------------ pure operators


def select(
    individuals: Sequence[AgentSequence],
    fitnesses: Sequence[float],
    rng: SeededRng,
    n: int | None = None,
) -> list[AgentSequence]:
    """Roulette-wheel sampling with replacement, proportional to fitness.

    The best individual gets no deterministic copy; with one individual at
    fitness 0.9 among nine at 0.1 its expected share is exactly one half.
    """
    if len(individuals) != len(fitnesses) or not individuals:
        raise ValueError("need equally many individuals and fitnesses")
    w = np.asarray(fitnesses, dtype=float)
    if np.any(w < 0) or w.sum() <= 0:
        raise ValueError("fitnesses must be non-negative with positive sum")
    n = len(individuals) if n is None else n
    idx = rng.choice(len(individuals), size=n, p=w / w.sum())
    return [individuals[i] for i in idx]


def crossover_pair(
    a: AgentSequence, b: AgentSequence, rng: SeededRng
) -> tuple[AgentSequence, AgentSequence]:
    """One-point crossover with a shared cut index; length-1 parents pass through."""
    m = min(len(a), len(b))
    if m < 2:
        return a, b
    cut = int(rng.integers(1, m))
    origins = a.origin_habitats | b.origin_habitats
    child1 = AgentSequence(a.agents[:cut] + b.agents[cut:], origins)
    child2 = AgentSequence(b.agents[:cut] + a.agents[cut:], origins)
    return child1, child2


def mutate_point(
    seq: AgentSequence, alphabet: Sequence[Agent], rng: SeededRng
) -> AgentSequence:
    """One point mutation: insert, replace, or delete a single agent.

    The kind is uniform over the three; delete is excluded for length-1
    genomes (the re-rolled distribution is uniform over insert/replace).
    """
    if not alphabet:
        raise ValueError("alphabet must not be empty")
    kinds = ("insert", "replace", "delete") if len(seq) > 1 else ("insert", "replace")
    kind = kinds[int(rng.integers(0, len(kinds)))]
    agents = seq.agents
    if kind == "insert":
        locus = int(rng.integers(0, len(agents) + 1))
        extra = alphabet[int(rng.integers(0, len(alphabet)))]
        agents = agents[:locus] + (extra,) + agents[locus:]
    elif kind == "replace":
        locus = int(rng.integers(0, len(agents)))
        extra = alphabet[int(rng.integers(0, len(alphabet)))]
        agents = agents[:locus] + (extra,) + agents[locus + 1 :]
    else:
        locus = int(rng.integers(0, len(agents)))
        agents = agents[:locus] + agents[locus + 1 :]
    return AgentSequence(agents, seq.origin_habitats)


def effective_fitness(
    raw: np.ndarray, lengths: np.ndarray, mean_length: float
) -> np.ndarray:
    """Parsimony-adjusted fitness: scale by mean_len/len when len > mean_len."""
    raw = np.asarray(raw, dtype=float)
    lengths = np.asarray(lengths, dtype=float)
    scale = np.where(lengths > mean_length, mean_length / lengths, 1.0)
    return raw * scale


# ----------------------------------------------------------------- engine


@dataclass
class Population:
    request: UserRequest
    alphabet: tuple[Agent, ...]
    counts: dict
    genomes: dict
    rng: SeededRng
    generation: int = 0
    fitness_cache: dict = field(default_factory=dict)

    @property
    def size(self) -> int:
        return sum(self.counts.values())

    @property
    def individuals(self) -> list[AgentSequence]:
        """Materialized view, mostly for tests and measurements."""
        out = []
        for key, c in self.counts.items():
            out.extend([self.genomes[key]] * c)
        return out

    def genotype_counts(self) -> dict:
        """{agent-id tuple: count} snapshot for the complexity measures."""
        return {key: c for key, c in self.counts.items()}

    def fitness_of(self, key: GenotypeKey) -> float:
        f = self.fitness_cache.get(key)
        if f is None:
            f = fitness(self.genomes[key], self.request)
            self.fitness_cache[key] = f
        return f

    def _add(self, seq: AgentSequence, n: int = 1) -> None:
        key = seq.key
        if key not in self.genomes:
            self.genomes[key] = seq
        self.counts[key] = self.counts.get(key, 0) + n

    def _remove(self, key: GenotypeKey, n: int = 1) -> None:
        left = self.counts[key] - n
        if left < 0:
            raise ValueError(f"removing {n} of {key} but only {self.counts[key]} present")
        if left:
            self.counts[key] = left
        else:
            del self.counts[key]


def seed_population(
    request: UserRequest,
    alphabet: Sequence[Agent],
    rng: SeededRng,
    params: EvolutionParams,
    injected: Iterable = (),
    length_range: tuple[int, int] = (1, 4),
    fill: bool = True,
    fitness_cache: dict | None = None,
) -> Population:
    """Build a generation-0 population.

    `injected` holds seed genomes (AgentSequence, or (AgentSequence, count)
    pairs); with `fill` the rest of the dynamic target size is random genomes
    whose lengths draw uniformly from length_range.
    """
    alphabet = tuple(alphabet)
    if not alphabet:
        raise ValueError("alphabet must not be empty")
    pop = Population(
        request=request,
        alphabet=alphabet,
        counts={},
        genomes={},
        rng=rng,
        fitness_cache=fitness_cache if fitness_cache is not None else {},
    )
    for item in injected:
        if isinstance(item, AgentSequence):
            pop._add(item, 1)
        else:
            seq, n = item
            pop._add(seq, int(n))
    if fill:
        lo, hi = length_range
        if pop.size:
            hint = sum(len(pop.genomes[k]) * c for k, c in pop.counts.items()) / pop.size
        else:
            hint = (lo + hi) / 2.0
        target = max(
            params.min_population,
            math.ceil(params.pop_size_factor * len(alphabet) * hint),
        )
        missing = target - pop.size
        for _ in range(max(0, missing)):
            L = int(rng.integers(lo, hi + 1))
            picks = rng.integers(0, len(alphabet), size=L)
            pop._add(AgentSequence(tuple(alphabet[i] for i in picks)))
    if pop.size == 0:
        raise ValueError("seeded an empty population")
    return pop


def evaluate(pop: Population) -> FitnessReport:
    keys = list(pop.counts.keys())
    counts = np.array([pop.counts[k] for k in keys], dtype=np.int64)
    fits = np.array([pop.fitness_of(k) for k in keys])
    lens = np.array([len(k) for k in keys], dtype=float)
    n = int(counts.sum())
    best_idx = _best_index(keys, fits)
    return FitnessReport(
        generation=pop.generation,
        size=n,
        max_fitness=float(fits.max()),
        mean_fitness=float((fits * counts).sum() / n),
        mean_length=float((lens * counts).sum() / n),
        distinct_genotypes=len(keys),
        best=pop.genomes[keys[best_idx]],
    )


def _best_index(keys: list, fits: np.ndarray) -> int:
    """Max fitness, ties to the shortest genome, then lexicographic ids."""
    top = fits.max()
    contenders = [i for i in range(len(keys)) if fits[i] == top]
    return min(contenders, key=lambda i: (len(keys[i]), keys[i]))


def _draw_victims(pop: Population, keys: list, n: int) -> list:
    """Draw n distinct individuals (as genotype keys, with multiplicity)."""
    counts = np.array([pop.counts[k] for k in keys], dtype=np.int64)
    taken = pop.rng.multivariate_hypergeometric(counts, n)
    victims: list = []
    for k, t in zip(keys, taken):
        victims.extend([k] * int(t))
    pop.rng.shuffle(victims)
    return victims


def random_pairing(pop: Population, n_pairs: int, rng: SeededRng) -> list:
    """Default crossover pairing: uniform partners across the population."""
    victims = _draw_victims(pop, list(pop.counts.keys()), 2 * n_pairs)
    return [(victims[2 * i], victims[2 * i + 1]) for i in range(n_pairs)]


def step_generation(
    pop: Population,
    params: EvolutionParams,
    pairing: PairingStrategy | None = None,
) -> FitnessReport:
    """Advance one generation: evaluate, select, crossover, mutate.

    Returns the fitness report of the population as it stands after the step.
    """
    keys = list(pop.counts.keys())
    counts = np.array([pop.counts[k] for k in keys], dtype=np.int64)
    fits = np.array([pop.fitness_of(k) for k in keys])
    lens = np.array([len(k) for k in keys], dtype=float)
    n = int(counts.sum())
    mean_len = float((lens * counts).sum() / n)

    eff = effective_fitness(fits, lens, mean_len)
    weights = eff * counts
    target = max(
        params.min_population,
        math.ceil(params.pop_size_factor * len(pop.alphabet) * mean_len),
    )

    drawn = pop.rng.multinomial(target, weights / weights.sum())
    new_counts = {}
    for k, c in zip(keys, drawn):
        if c:
            new_counts[k] = int(c)
    pop.counts = new_counts

    n_pairs = int(params.crossover_rate * target / 2)
    if n_pairs:
        pairs = (pairing or random_pairing)(pop, n_pairs, pop.rng)
        if len(pairs) > n_pairs:
            raise ValueError("pairing strategy returned too many pairs")
        for ka, kb in pairs:
            pop._remove(ka)
            pop._remove(kb)
            child1, child2 = crossover_pair(pop.genomes[ka], pop.genomes[kb], pop.rng)
            pop._add(child1)
            pop._add(child2)

    n_mut = int(params.mutation_rate * target)
    if n_mut:
        victims = _draw_victims(pop, list(pop.counts.keys()), n_mut)
        for k in victims:
            pop._remove(k)
            pop._add(mutate_point(pop.genomes[k], pop.alphabet, pop.rng))

    # drop dead genome records so long runs do not accumulate garbage
    if len(pop.genomes) > 4 * len(pop.counts) + 64:
        pop.genomes = {k: pop.genomes[k] for k in pop.counts}

    pop.generation += 1
    return evaluate(pop)


def run_population(
    pop: Population,
    params: EvolutionParams,
    pairing: PairingStrategy | None = None,
    keep_trace: bool = False,
    on_generation: Callable[[Population, FitnessReport], None] | None = None,
    stop_at_optimum: bool = True,
) -> RunResult:
    """Run to optimum (fitness 1.0), stall, or the generation cap.

    With `stop_at_optimum=False` the run continues to the cap even after an
    exact cover appears, which is what trajectory studies need: the optimum
    can be lost again and the caller wants to see that happen.
    """
    report = evaluate(pop)
    trace = [report] if keep_trace else []
    if on_generation is not None:
        on_generation(pop, report)
    best = report.best
    best_fit = report.max_fitness
    since_improvement = 0
    while (
        not (stop_at_optimum and report.max_fitness >= 1.0)
        and pop.generation < params.max_generations
    ):
        report = step_generation(pop, params, pairing)
        if keep_trace:
            trace.append(report)
        if on_generation is not None:
            on_generation(pop, report)
        if report.max_fitness > best_fit:
            best_fit = report.max_fitness
            best = report.best
            since_improvement = 0
        else:
            since_improvement += 1
            if (
                params.stall_generations is not None
                and since_improvement >= params.stall_generations
            ):
                return RunResult(best, best_fit, pop.generation, "stall", trace)
    reason = (
        "optimum"
        if stop_at_optimum and report.max_fitness >= 1.0
        else "max_generations"
    )
    if report.max_fitness >= 1.0:
        best, best_fit = report.best, report.max_fitness
    return RunResult(best, best_fit, pop.generation, reason, trace)
