from __future__ import annotations

from pathlib import Path

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from twolevelcp.lattice import (
    Configuration,
    SiteState,
    Window,
    WindowMismatch,
    animal_set,
    dumps,
    flea_set,
    leq,
    loads,
    neighbor_counts,
)

GOLDEN = Path(__file__).parent / "golden"


def test_site_state_bits() -> None:
    assert [s.has_animal for s in SiteState] == [False, True, False, True]
    assert [s.has_fleas for s in SiteState] == [False, False, True, True]


def test_centered_window_geometry() -> None:
    w = Window.centered(2, 2)
    assert w.n_sites == 25
    assert w.shape == (5, 5)
    assert w.radius == 2
    for i in range(w.n_sites):
        assert w.index(w.site(i)) == i
    assert w.site(0) == (-2, -2)


def test_line_window_has_k_sites() -> None:
    w = Window.line(2)
    assert w.n_sites == 2
    assert [w.site(i) for i in range(2)] == [(0,), (1,)]
    assert w.neighbors.tolist() == [[1, -1], [-1, 0]]


def test_neighbors_are_unit_steps() -> None:
    w = Window.centered(2, 1)
    for i in range(w.n_sites):
        for j in w.neighbors[i]:
            if j >= 0:
                assert np.abs(w.coords[i] - w.coords[j]).sum() == 1
    centre = w.index((0, 0))
    assert sorted(w.neighbors[centre].tolist()) == sorted(w.index(s) for s in [(1, 0), (-1, 0), (0, 1), (0, -1)])


def test_truncation_blocks_births_from_boundary() -> None:
    w = Window.centered(1, 3, truncation=2)
    ok = {w.site(i)[0]: bool(w.birth_ok[i]) for i in range(w.n_sites)}
    assert ok == {-3: False, -2: False, -1: True, 0: True, 1: True, 2: False, 3: False}


def test_window_validation() -> None:
    with pytest.raises(ValueError):
        Window((1,), (3,))
    with pytest.raises(ValueError):
        Window.centered(1, 2, truncation=3)
    with pytest.raises(ValueError):
        Window.centered(1, 2, truncation=0)
    with pytest.raises(ValueError):
        Window.centered(1, 2).index((5,))


def test_configuration_from_sets_and_masks() -> None:
    w = Window.centered(1, 2)
    c = Configuration.from_sets(w, animals=[0, 1], fleas=[1, 2])
    assert c[(0,)] == SiteState.ANIMAL
    assert c[1] == SiteState.BOTH
    assert c[2] == SiteState.FLEAS
    assert animal_set(c) == {(0,), (1,)}
    assert flea_set(c) == {(1,), (2,)}
    with pytest.raises(AttributeError):
        c.states = None
    with pytest.raises(ValueError):
        c.states[0] = 1


def test_with_fleas_on_uses_host_presence() -> None:
    w = Window.centered(1, 1)
    c = Configuration.from_sets(w, animals=[0]).with_fleas_on([-1, 0])
    assert c.states.tolist() == [2, 3, 0]
    assert c.without_fleas().states.tolist() == [0, 1, 0]


def test_leq_partial_order() -> None:
    w = Window.centered(1, 1)
    a = Configuration(w, [1, 2, 0])
    b = Configuration(w, [3, 2, 1])
    assert leq(a, b)
    assert not leq(b, a)
    assert not leq(Configuration(w, [1, 0, 0]), Configuration(w, [2, 0, 0]))
    with pytest.raises(WindowMismatch):
        leq(a, Configuration.uniform(Window.centered(1, 2), 0))


def test_neighbor_counts() -> None:
    w = Window.centered(1, 2)
    c = Configuration(w, [0, 3, 1, 2, 3])
    assert neighbor_counts(c, 0) == (0, 0, 1, 1)
    assert neighbor_counts(c, -2) == (0, 0, 0, 1)


def test_configuration_golden_file() -> None:
    w = Window.centered(2, 1, 1)
    c = Configuration.from_sets(w, animals=[(0, 0), (1, 0), (-1, 1)], fleas=[(0, 0), (0, 1)])
    text = (GOLDEN / "config_2d.txt").read_text()
    assert dumps(c) == text
    assert loads(text) == c


def test_loads_rejects_missing_sites() -> None:
    text = "# dim=1 lo=-1 hi=1 truncation=none\n0:1\n"
    with pytest.raises(ValueError):
        loads(text)


@settings(max_examples=60, deadline=None)
@given(
    dim=st.integers(1, 2),
    radius=st.integers(0, 2),
    data=st.data(),
)
def test_dumps_loads_round_trip(dim: int, radius: int, data) -> None:
    w = Window.centered(dim, radius)
    states = data.draw(st.lists(st.integers(0, 3), min_size=w.n_sites, max_size=w.n_sites))
    c = Configuration(w, states)
    assert loads(dumps(c)) == c
