import math

import pytest
from hypothesis import given
from hypothesis import strategies as st

from ecosim.stability import (
    MacroState,
    NotADistribution,
    OccupationTrace,
    classify_generation,
    degree_of_instability,
    limit_distribution,
    occupation_probabilities,
    stability_grid,
    write_occupation_csv,
)

# ------------------------------------------------------------ classification


def test_max_fitness_individual_sets_only_the_top_state():
    flags = classify_generation([1.0, 0.3])
    assert flags == {"M_max": True, "M_half": False}


def test_half_fitness_individual_sets_only_the_half_state():
    flags = classify_generation([0.5, 0.2])
    assert flags == {"M_max": False, "M_half": True}


def test_everything_below_half_sets_neither():
    flags = classify_generation([0.49, 0.3, 0.1])
    assert flags == {"M_max": False, "M_half": False}


def test_flags_are_not_exclusive():
    flags = classify_generation([1.0, 0.5])
    assert flags == {"M_max": True, "M_half": True}


def test_level_membership_tolerance_boundary():
    assert classify_generation([0.5 + 5e-10])["M_half"]
    assert not classify_generation([0.5 + 5e-9])["M_half"]


def test_levels_scale_with_the_global_max():
    flags = classify_generation([0.4], global_max_fitness=0.8)
    assert flags == {"M_max": False, "M_half": True}
    assert classify_generation([0.8], global_max_fitness=0.8)["M_max"]


def test_custom_state_list():
    third = MacroState("M_third", 1.0 / 3.0)
    flags = classify_generation([1.0 / 3.0], [third])
    assert flags == {"M_third": True}


# ------------------------------------------------------------------- traces


def _trace(rows):
    t = OccupationTrace(states=("M_max", "M_half"))
    for m, h in rows:
        t.record({"M_max": m, "M_half": h})
    return t


def test_trace_category_prefers_states_in_order():
    assert _trace([(True, True)]).category() == "M_max"
    assert _trace([(False, True)]).category() == "M_half"
    assert _trace([(False, False)]).category() == "other"


def test_trace_category_uses_the_final_generation():
    t = _trace([(True, False), (False, False)])
    assert t.category() == "other"


def test_empty_trace_has_no_category():
    with pytest.raises(ValueError):
        OccupationTrace(states=("M_max",)).category()


def test_occupation_probabilities_are_run_fractions():
    runs = [
        _trace([(False, False), (True, False)]),
        _trace([(False, True), (True, False)]),
        _trace([(False, True), (False, False)]),
        _trace([(False, False), (True, False)]),
    ]
    probs = occupation_probabilities(runs)
    assert probs["M_max"] == [0.0, 0.75]
    assert probs["M_half"] == [0.5, 0.0]


def test_never_occupied_state_stays_flat_zero():
    runs = [_trace([(True, False)] * 5) for _ in range(3)]
    assert occupation_probabilities(runs)["M_half"] == [0.0] * 5


def test_occupation_probabilities_reject_ragged_runs():
    with pytest.raises(ValueError):
        occupation_probabilities([_trace([(True, False)]), _trace([])])
    with pytest.raises(ValueError):
        occupation_probabilities([])


def test_limit_distribution_counts_exclusive_end_states():
    runs = [
        _trace([(True, True)]),
        _trace([(True, False)]),
        _trace([(False, True)]),
        _trace([(False, False)]),
    ]
    assert limit_distribution(runs) == {
        "M_max": 0.5,
        "M_half": 0.25,
        "other": 0.25,
    }


# -------------------------------------------------------------------- d_ins


def test_single_certain_state_is_perfectly_stable():
    assert degree_of_instability({"M_max": 1.0, "M_half": 0.0, "other": 0.0}) == 0.0


def test_uniform_spread_is_maximally_unstable():
    assert degree_of_instability([1 / 3, 1 / 3, 1 / 3]) == pytest.approx(
        1.0, abs=1e-12
    )


def test_two_way_split_over_three_states():
    expected = math.log(2) / math.log(3)
    assert degree_of_instability([0.5, 0.5, 0.0]) == pytest.approx(
        expected, abs=1e-12
    )


def test_state_count_override_changes_the_base():
    assert degree_of_instability([0.5, 0.5], n_states=4) == pytest.approx(0.5)


def test_rejects_non_distributions():
    with pytest.raises(NotADistribution):
        degree_of_instability([0.5, 0.4])
    with pytest.raises(NotADistribution):
        degree_of_instability([1.2, -0.2, 0.0])


def test_instability_ignores_state_labels():
    p = [0.6, 0.3, 0.1]
    d = degree_of_instability(p)
    assert degree_of_instability([0.1, 0.6, 0.3]) == pytest.approx(d, abs=1e-15)
    assert degree_of_instability([0.3, 0.1, 0.6]) == pytest.approx(d, abs=1e-15)


@given(
    st.lists(st.floats(min_value=1e-6, max_value=1.0), min_size=2, max_size=6)
)
def test_instability_is_normalized(weights):
    total = sum(weights)
    p = [w / total for w in weights]
    d = degree_of_instability(p)
    assert 0.0 <= d <= 1.0 + 1e-12


# --------------------------------------------------------------------- grid


def test_grid_runs_every_cell_and_applies_the_entropy():
    def run_category(mutation, crossover, run_index):
        if mutation <= 0.5:
            return "M_max"
        return "M_half" if run_index % 2 == 0 else "other"

    grid = stability_grid([0.0, 1.0], [0.0, 0.5], 30, run_category)
    split = math.log(2) / math.log(3)
    assert grid[0] == [0.0, 0.0]
    assert grid[1] == [pytest.approx(split), pytest.approx(split)]


def test_grid_requires_enough_runs_and_known_categories():
    with pytest.raises(ValueError):
        stability_grid([0.0], [0.0], 29, lambda m, c, i: "M_max")
    with pytest.raises(ValueError):
        stability_grid([0.0], [0.0], 30, lambda m, c, i: "mystery")


# ---------------------------------------------------------------------- csv


def test_occupation_csv_layout(tmp_path):
    path = tmp_path / "occupancy.csv"
    write_occupation_csv(
        path, {"M_max": [0.0, 1.0], "M_half": [0.25, 0.0]}
    )
    lines = path.read_text().strip().splitlines()
    assert lines[0] == "generation,p_M_max,p_M_half"
    assert lines[1] == "0,0.000000,0.250000"
    assert lines[2] == "1,1.000000,0.000000"
