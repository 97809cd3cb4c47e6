import numpy as np
import pytest
from conftest import cover_request, mk_agent, mk_seq, role_agent

from ecosim.core import AgentSequence, SeededRng, UserRequest, fitness
from ecosim.evolution import (
    EvolutionParams,
    crossover_pair,
    effective_fitness,
    evaluate,
    mutate_point,
    run_population,
    seed_population,
    select,
    step_generation,
)


def small_alphabet():
    return [role_agent(f"r{i}", 1 + 3 * (i % 5), 10 + i) for i in range(5)]


# ---------------------------------------------------------------- selection


def test_select_expected_share_of_dominant_individual():
    # fitness 0.9 vs nine at 0.1: expected share 0.9 / 1.8 = 0.5
    rng = SeededRng(101).substream("select")
    a = mk_seq(role_agent("strong", 1))
    rest = [mk_seq(role_agent(f"weak{i}", 4)) for i in range(9)]
    individuals = [a] + rest
    fits = [0.9] + [0.1] * 9
    picks = select(individuals, fits, rng, n=20_000)
    share = sum(1 for s in picks if s is a) / len(picks)
    assert abs(share - 0.5) < 0.015


def test_select_validates_inputs():
    rng = SeededRng(0)
    s = mk_seq(role_agent("a", 1))
    with pytest.raises(ValueError):
        select([], [], rng)
    with pytest.raises(ValueError):
        select([s], [0.5, 0.5], rng)
    with pytest.raises(ValueError):
        select([s], [-1.0], rng)


# ---------------------------------------------------------------- crossover


def test_crossover_forced_cut_position():
    a, b, c = (role_agent(x, 1) for x in "abc")
    x, y = role_agent("x", 4), role_agent("y", 7)
    p1, p2 = mk_seq(a, b, c), mk_seq(x, y)
    # min length 2 -> the only legal cut is 1
    c1, c2 = crossover_pair(p1, p2, SeededRng(3).substream("x"))
    assert c1.key == ("a", "y")
    assert c2.key == ("x", "b", "c")


def test_crossover_length_one_parent_passes_through():
    p1 = mk_seq(role_agent("a", 1))
    p2 = mk_seq(role_agent("x", 4), role_agent("y", 7))
    c1, c2 = crossover_pair(p1, p2, SeededRng(4))
    assert c1 is p1 and c2 is p2


def test_crossover_conserves_length_multiset():
    rng = SeededRng(5).substream("cx")
    pool = [role_agent(f"g{i}", 1 + 3 * (i % 5)) for i in range(8)]
    for _ in range(300):
        la, lb = int(rng.integers(1, 7)), int(rng.integers(1, 7))
        pa = mk_seq(*(pool[int(rng.integers(0, 8))] for _ in range(la)))
        pb = mk_seq(*(pool[int(rng.integers(0, 8))] for _ in range(lb)))
        c1, c2 = crossover_pair(pa, pb, rng)
        assert sorted((len(c1), len(c2))) == sorted((la, lb))


def test_crossover_merges_origins():
    p1 = AgentSequence((role_agent("a", 1), role_agent("b", 4)), frozenset({1}))
    p2 = AgentSequence((role_agent("x", 7), role_agent("y", 10)), frozenset({2}))
    c1, c2 = crossover_pair(p1, p2, SeededRng(6))
    assert c1.origin_habitats == c2.origin_habitats == frozenset({1, 2})


# ----------------------------------------------------------------- mutation


def test_mutation_changes_length_by_at_most_one():
    rng = SeededRng(7).substream("mut")
    alphabet = small_alphabet()
    seq = mk_seq(*(alphabet[i % 5] for i in range(4)))
    seen = set()
    for _ in range(400):
        out = mutate_point(seq, alphabet, rng)
        seen.add(len(out))
        assert all(a in alphabet for a in out.agents)
    assert seen == {3, 4, 5}


def test_mutation_never_deletes_last_agent():
    rng = SeededRng(8).substream("mut1")
    alphabet = small_alphabet()
    seq = mk_seq(alphabet[0])
    lengths = {len(mutate_point(seq, alphabet, rng)) for _ in range(300)}
    assert lengths == {1, 2}


def test_mutation_preserves_origins():
    alphabet = small_alphabet()
    seq = AgentSequence((alphabet[0],), frozenset({9}))
    out = mutate_point(seq, alphabet, SeededRng(9))
    assert out.origin_habitats == frozenset({9})


# ------------------------------------------------------- parsimony pressure


def test_effective_fitness_penalizes_only_above_mean():
    raw = np.array([0.6, 0.6, 0.6])
    lengths = np.array([2.0, 4.0, 8.0])
    out = effective_fitness(raw, lengths, mean_length=4.0)
    assert out[0] == 0.6  # below mean: untouched
    assert out[1] == 0.6  # at mean: untouched
    assert out[2] == pytest.approx(0.6 * 4.0 / 8.0)


# ------------------------------------------------------------------- engine


def exact_two_agent_problem():
    a = role_agent("a", 1, 20)
    b = role_agent("b", 4, 60)
    junk = [role_agent(f"j{i}", 7 + 3 * i, 30 + i) for i in range(3)]
    request = cover_request(a.description, b.description)
    return [a, b] + junk, request


def test_seeded_population_hits_dynamic_size():
    alphabet, request = exact_two_agent_problem()
    rng = SeededRng(11).substream("seed")
    pop = seed_population(request, alphabet, rng, EvolutionParams(), length_range=(2, 2))
    # ceil(1.29 * 5 * 2) = 13
    assert pop.size == 13
    assert all(len(pop.genomes[k]) == 2 for k in pop.counts)


def test_step_resizes_to_current_mean_length():
    alphabet, request = exact_two_agent_problem()
    rng = SeededRng(12).substream("step")
    params = EvolutionParams(crossover_rate=0.0, mutation_rate=0.0)
    pop = seed_population(request, alphabet, rng, params, length_range=(3, 3))
    report = step_generation(pop, params)
    # selection cannot change lengths here, so target stays ceil(1.29*5*3)=20
    assert report.size == pop.size == 20
    assert report.generation == 1


def test_run_finds_exact_cover_and_stops():
    alphabet, request = exact_two_agent_problem()
    rng = SeededRng(13).substream("run")
    pop = seed_population(request, alphabet, rng, EvolutionParams())
    result = run_population(pop, EvolutionParams(), keep_trace=True)
    assert result.reason == "optimum"
    assert result.best_fitness == 1.0
    assert fitness(result.best, request) == 1.0
    assert {a.id for a in result.best.agents} >= {"a", "b"}
    # the average never beats the maximum
    for rep in result.trace:
        assert rep.mean_fitness <= rep.max_fitness + 1e-12


def test_run_stalls_when_request_is_unreachable():
    alphabet, _ = exact_two_agent_problem()
    # attribute id 97 appears in no agent: fitness is capped below 1
    request = UserRequest((frozenset({(97, 50)}),))
    rng = SeededRng(14).substream("stall")
    params = EvolutionParams(stall_generations=12, max_generations=400)
    pop = seed_population(request, alphabet, rng, params)
    result = run_population(pop, params)
    assert result.reason == "stall"
    assert result.best_fitness < 1.0


def test_run_respects_generation_cap_when_stall_disabled():
    alphabet, _ = exact_two_agent_problem()
    request = UserRequest((frozenset({(97, 50)}),))
    rng = SeededRng(15).substream("cap")
    params = EvolutionParams(stall_generations=None, max_generations=25)
    pop = seed_population(request, alphabet, rng, params)
    result = run_population(pop, params)
    assert result.reason == "max_generations"
    assert result.generations == 25


def test_best_tie_breaks_shortest_then_lexicographic():
    a = role_agent("a", 1, 20)
    b = role_agent("b", 4, 60)
    request = cover_request(a.description)
    rng = SeededRng(16)
    params = EvolutionParams()
    pop = seed_population(
        request,
        [a, b],
        rng,
        params,
        injected=[(mk_seq(a, a), 5), (mk_seq(a), 5), (mk_seq(a, b), 5)],
        fill=False,
    )
    report = evaluate(pop)
    assert report.max_fitness == 1.0
    assert report.best.key == ("a",)


def test_engine_is_deterministic_per_seed():
    alphabet, request = exact_two_agent_problem()

    def transcript(seed):
        rng = SeededRng(seed).substream("det")
        params = EvolutionParams(stall_generations=None, max_generations=40)
        pop = seed_population(request, alphabet, rng, params)
        result = run_population(pop, params, keep_trace=True)
        return [(r.size, r.max_fitness, r.mean_fitness, r.best.key) for r in result.trace]

    assert transcript(99) == transcript(99)
    assert transcript(99) != transcript(100)


def test_class_multinomial_matches_individual_roulette():
    # the engine's per-class multinomial must be distribution-identical to
    # N independent roulette spins; compare empirical class means
    rng1 = SeededRng(17).substream("m")
    rng2 = SeededRng(18).substream("c")
    p = np.array([0.5, 0.3, 0.2])
    n, reps = 50, 3000
    mult = np.zeros(3)
    spin = np.zeros(3)
    for _ in range(reps):
        mult += rng1.multinomial(n, p)
        picks = rng2.choice(3, size=n, p=p)
        spin += np.bincount(picks, minlength=3)
    np.testing.assert_allclose(mult / reps, spin / reps, atol=0.5)
