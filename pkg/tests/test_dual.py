from __future__ import annotations

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from twolevelcp.dual import (
    check_duality_distributional,
    host_flags_from_history,
    pathwise_animal_duality,
    pathwise_flea_duality,
    run_animal_dual,
    run_flea_dual,
)
from twolevelcp.events import MarkKind, Rates, generate_log, hand_log
from twolevelcp.lattice import Configuration, Window
from twolevelcp.oracle import exact_duality_sides
from twolevelcp.simulate import run_animals_only


def test_animal_dual_hand_fixture() -> None:
    w = Window.line(3)
    log = hand_log(
        w,
        Rates(1, 1, 1),
        [(MarkKind.ANIMAL_ARROW, 1.0, 0, 1), (MarkKind.ANIMAL_ARROW, 2.0, 1, 2), (MarkKind.ANIMAL_DEATH, 1.5, 0)],
        (0, 3),
    )
    dual = run_animal_dual(log, [2], 3.0, 3.0)
    assert dual.set_at(0.5) == {(2,)}
    assert dual.set_at(1.2) == {(1,), (2,)}
    assert dual.set_at(1.6) == {(1,), (2,)}
    # the death at 0 (real time 1.5) falls after the arrow out of 0, so the path survives
    assert dual.final == {(0,), (1,), (2,)}
    assert dual.to_csv().splitlines()[0] == "time,site,old_state,new_state,direction"


def test_flea_dual_needs_hosts() -> None:
    w = Window.line(2)
    marks = [(MarkKind.FLEA_ARROW, 1.0, 0, 1), (MarkKind.FLEA_DEATH, 0.5, 1)]
    log = hand_log(w, Rates(1, 1, 1), marks, (0, 2))
    hosted = run_animals_only(log, [0, 1], 0, 2)
    assert run_flea_dual(log, [1], 2.0, 2.0, hosted).final == {(0,), (1,)}
    half = run_animals_only(log, [1], 0, 2)
    # arrow ignored (source hostless); star at 1 ignored (1 hosted)
    assert run_flea_dual(log, [1], 2.0, 2.0, half).final == {(1,)}
    none = run_animals_only(log, [], 0, 2)
    assert run_flea_dual(log, [1], 2.0, 2.0, none).final == frozenset()


def test_host_flags_need_matching_history() -> None:
    w = Window.centered(1, 2)
    log = generate_log(w, (0, 2), Rates(1, 1, 1), 0)
    other = generate_log(w, (0, 2), Rates(1, 1, 1), 1)
    hist = run_animals_only(other, [0], 0, 2)
    with pytest.raises(ValueError):
        host_flags_from_history(log, hist, 0, 2)
    short = run_animals_only(log, [0], 0, 1)
    with pytest.raises(ValueError):
        host_flags_from_history(log, short, 0, 2)


def test_dual_range_checked() -> None:
    log = generate_log(Window.centered(1, 2), (0, 2), Rates(1, 1, 1), 0)
    with pytest.raises(ValueError):
        run_animal_dual(log, [0], 2.0, 3.0)


@settings(max_examples=60, deadline=None)
@given(seed=st.integers(0, 2**40), data=st.data())
def test_pathwise_flea_duality(seed: int, data) -> None:
    w = Window.centered(1, 3, truncation=data.draw(st.sampled_from([None, 2, 3])))
    T = data.draw(st.floats(0.1, 3.0))
    log = generate_log(w, (0, T), Rates(2.0, 2.0, 1.0), seed)
    sites = st.lists(st.integers(-3, 3), max_size=4)
    animals = Configuration.from_sets(w, data.draw(sites))
    fwd, bwd = pathwise_flea_duality(log, animals, data.draw(sites), data.draw(sites), T)
    assert fwd == bwd


@settings(max_examples=60, deadline=None)
@given(seed=st.integers(0, 2**40), data=st.data())
def test_pathwise_animal_duality(seed: int, data) -> None:
    w = Window.centered(2, 2, truncation=data.draw(st.sampled_from([None, 1, 2])))
    T = data.draw(st.floats(0.1, 2.0))
    log = generate_log(w, (0, T), Rates(1.5, 1.0, 1.0), seed)
    site = st.tuples(st.integers(-2, 2), st.integers(-2, 2))
    fwd, bwd = pathwise_animal_duality(log, data.draw(st.lists(site, max_size=5)), data.draw(st.lists(site, max_size=3)), T)
    assert fwd == bwd


def test_dual_mask_at_matches_reanchored_runs() -> None:
    w = Window.centered(1, 3)
    log = generate_log(w, (0, 3), Rates(2, 2, 1), 12)
    dual = run_animal_dual(log, [0], 3.0, 3.0)
    for s in (0.0, 0.4, 1.3, 2.9):
        assert np.array_equal(dual.mask_at(s), run_animal_dual(log, [0], 3.0, s).final_mask)


def test_exact_duality_sides_agree() -> None:
    w = Window.line(3)
    lhs, rhs = exact_duality_sides(w, Rates(1.5, 2.0, 0.7), [0], [1, 2], [2], 0.8)
    assert abs(lhs - rhs) < 1e-9
    assert 0 < lhs < 1


def test_distributional_duality_estimates_overlap() -> None:
    w = Window.centered(1, 3)
    lhs, rhs = check_duality_distributional(w, Rates(2, 2, 1), [0], [0, 1], [1], 1.0, 1500, 3)
    assert lhs.overlaps(rhs)
    assert lhs.reps == rhs.reps == 1500
    with pytest.raises(ValueError):
        check_duality_distributional(w.with_truncation(2), Rates(2, 2, 1), [0], [0], [0], 1.0, 10, 0)
