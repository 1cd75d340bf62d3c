from __future__ import annotations

import math

import numpy as np
import pytest
from scipy.linalg import expm
from scipy.stats import poisson

from twolevelcp.events import Rates
from twolevelcp.lattice import Configuration, Window
from twolevelcp.oracle import (
    animal_generator,
    build_generator,
    exact_hitting,
    total_variation,
    transient_distribution,
    uniformization_terms,
)


def test_single_site_generator_entries() -> None:
    gen = build_generator(Window.line(1), Rates(5.0, 7.0, 0.3))
    Q = gen.Q.toarray()
    expected = np.array([
        [0, 0, 0, 0],
        [1, -1, 0, 0],
        [0.3, 0, -0.3, 0],
        [0, 0, 1, -1],
    ])
    assert np.allclose(Q, expected)


def test_two_site_rates_follow_neighbours() -> None:
    w = Window.line(2)
    gen = build_generator(w, Rates(2.0, 3.0, 0.5))
    Q = gen.Q.toarray()
    code = lambda a, b: a + 4 * b  # noqa: E731
    assert Q[code(3, 1), code(3, 3)] == 3.0   # flea birth onto hosted neighbour
    assert Q[code(1, 0), code(1, 1)] == 2.0   # animal birth
    assert Q[code(3, 2), code(3, 3)] == 2.0   # hostless fleas regain a host
    assert Q[code(2, 1), code(2, 3)] == 0.0   # fleas need a host to spread
    assert np.allclose(Q.sum(axis=1), 0)


def test_truncation_respected_by_generator() -> None:
    w = Window.centered(1, 1, truncation=1)
    gen = build_generator(w, Rates(2.0, 2.0, 1.0))
    src = gen.code(Configuration(w, [1, 0, 0]))
    dst = gen.code(Configuration(w, [1, 1, 0]))
    assert gen.Q[src, dst] == 0.0


def test_uniformization_matches_expm() -> None:
    w = Window.line(3)
    gen = build_generator(w, Rates(1.3, 2.1, 0.6))
    init = Configuration(w, [3, 0, 1])
    p0 = np.zeros(gen.n_states)
    p0[gen.code(init)] = 1
    for t in (0.0, 0.5, 2.0):
        ref = p0 @ expm(gen.Q.toarray() * t)
        got = transient_distribution(gen, init, t)
        assert np.max(np.abs(ref - got)) < 1e-9
        assert abs(got.sum() - 1) < 1e-9


def test_single_site_closed_form() -> None:
    gen = build_generator(Window.line(1), Rates(1, 1, 1))
    p = transient_distribution(gen, 3, 1.0)
    e = math.exp(-1)
    assert np.allclose(p, [1 - 2 * e, 0, e, e], atol=1e-10)


def test_uniformization_terms_tail() -> None:
    for rt in (0.1, 3.0, 50.0):
        n = uniformization_terms(rt, 1e-10)
        assert poisson.sf(n, rt) < 1e-10 <= poisson.sf(n - 1, rt)


def test_exact_hitting_and_total_variation() -> None:
    w = Window.line(1)
    gen = build_generator(w, Rates(1, 1, 1))
    p = exact_hitting(gen, 3, 1.0, lambda c: c.flea_mask.any())
    assert abs(p - 2 * math.exp(-1)) < 1e-10
    assert total_variation([1, 0], [0, 1]) == 1.0


def test_animal_generator_is_contact_process() -> None:
    Q = animal_generator(Window.line(2), 2.0)
    assert np.allclose(Q.sum(axis=1), 0)
    assert Q[0b01, 0b11] == 2.0 and Q[0b11, 0b10] == 1.0 and Q[0, 0] == 0


def test_oracle_rejects_large_windows() -> None:
    with pytest.raises(ValueError):
        build_generator(Window.line(9), Rates(1, 1, 1))
    gen = build_generator(Window.line(1), Rates(1, 1, 1))
    with pytest.raises(ValueError):
        transient_distribution(gen, 3, -1.0)
