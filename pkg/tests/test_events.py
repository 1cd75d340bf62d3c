from __future__ import annotations

from pathlib import Path

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy import stats

from twolevelcp.events import MarkKind, Rates, generate_log, hand_log, marks_in, stream_table, thin_log
from twolevelcp.lattice import Window

GOLDEN = Path(__file__).parent / "golden"


def _rows(log, sel=None):
    sel = np.ones(len(log), bool) if sel is None else sel
    w = log.window
    return {
        (int(k), tuple(w.coords[s]), tuple(w.coords[d]), float(t))
        for k, s, d, t in zip(log.kind[sel], log.src[sel], log.dst[sel], log.time[sel])
    }


def test_rates_validation() -> None:
    with pytest.raises(ValueError):
        Rates(-1.0, 1.0, 1.0)
    with pytest.raises(ValueError):
        Rates(1.0, float("nan"), 1.0)
    assert Rates(2, 3, 4).by_kind().tolist() == [2.0, 1.0, 3.0, 4.0]


def test_stream_table_order_and_count() -> None:
    w = Window.centered(1, 2)
    st_ = stream_table(w)
    # 8 ordered neighbour pairs per arrow family, 5 sites per death family
    assert np.bincount(st_.kind).tolist() == [8, 5, 8, 5]
    keys = list(zip(st_.kind.tolist(), st_.src.tolist(), st_.dst.tolist()))
    assert keys == sorted(keys)


def test_same_seed_same_log_different_seed_differs() -> None:
    w = Window.centered(1, 3)
    r = Rates(1.5, 2.0, 0.5)
    a = generate_log(w, (0, 5), r, 11)
    b = generate_log(w, (0, 5), r, 11)
    c = generate_log(w, (0, 5), r, 12)
    assert np.array_equal(a.time, b.time) and np.array_equal(a.kind, b.kind)
    assert not np.array_equal(a.time[:10], c.time[:10])


def test_log_sorted_and_ids_are_positions() -> None:
    log = generate_log(Window.centered(2, 2), (-1.5, 2.5), Rates(1, 1, 1), 3)
    assert np.all(np.diff(log.time) >= 0)
    assert log.time.min() >= -1.5 and log.time.max() <= 2.5
    m = log.mark(7)
    assert m.id == 7 and m.time == log.time[7]
    with pytest.raises(ValueError):
        log.time[0] = 0.0


def test_time_window_extension_is_coherent() -> None:
    w = Window.centered(1, 3)
    r = Rates(2.0, 1.0, 1.0)
    small = generate_log(w, (0.3, 2.7), r, 99)
    big = generate_log(w, (-4.0, 6.0), r, 99)
    sel = (big.time >= 0.3) & (big.time <= 2.7)
    assert _rows(small) == _rows(big, sel)


def test_spatial_window_extension_keeps_interior_streams() -> None:
    r = Rates(2.0, 1.0, 1.0)
    small = generate_log(Window.centered(1, 2), (0, 3), r, 5)
    big = generate_log(Window.centered(1, 4), (0, 3), r, 5)
    w = big.window
    inside = (np.abs(w.coords[big.src, 0]) <= 2) & (np.abs(w.coords[big.dst, 0]) <= 2)
    assert _rows(small) == _rows(big, inside)


def test_log_csv_golden_file() -> None:
    log = generate_log(Window.centered(1, 1), (0.0, 1.0), Rates(1.0, 1.0, 1.0), 123)
    assert log.to_csv() == (GOLDEN / "log_r1_seed123.csv").read_text()


def test_counts_match_poisson_means() -> None:
    w = Window.centered(1, 5)
    r = Rates(2.0, 0.5, 3.0)
    span = 200.0
    log = generate_log(w, (0, span), r, 1)
    n_pairs = 20
    expected = {
        MarkKind.ANIMAL_ARROW: 2.0 * n_pairs * span,
        MarkKind.ANIMAL_DEATH: 1.0 * w.n_sites * span,
        MarkKind.FLEA_ARROW: 0.5 * n_pairs * span,
        MarkKind.FLEA_DEATH: 3.0 * w.n_sites * span,
    }
    for kind, mean in expected.items():
        assert abs(log.count(kind) - mean) < 5 * np.sqrt(mean), kind


def test_inter_arrival_times_are_exponential() -> None:
    w = Window.centered(1, 0)
    log = generate_log(w, (0, 3000.0), Rates(0.0, 0.0, 2.5), 8)
    t = log.time[log.kind == MarkKind.FLEA_DEATH]
    gaps = np.diff(t)
    res = stats.kstest(gaps, "expon", args=(0, 1 / 2.5))
    assert res.pvalue > 1e-3
    # counts in unit windows straddling epoch boundaries are Poisson(2.5)
    counts = np.histogram(t, bins=np.arange(0.5, 2999.5, 1.0))[0]
    assert abs(counts.mean() - 2.5) < 5 * np.sqrt(2.5 / counts.size)
    assert abs(counts.var() / counts.mean() - 1.0) < 0.1


def test_thinning_is_nested_and_idempotent() -> None:
    log = generate_log(Window.centered(1, 4), (0, 10), Rates(3.0, 4.0, 1.0), 21)
    lo = thin_log(log, mu_sub=1.0)
    hi = thin_log(log, mu_sub=2.5)
    assert _rows(lo) <= _rows(hi) <= _rows(log)
    assert _rows(thin_log(hi, mu_sub=1.0)) == _rows(lo)
    # other streams untouched
    fa = MarkKind.FLEA_ARROW
    assert _rows(lo, lo.kind != fa) == _rows(log, log.kind != fa)
    frac = lo.count(fa) / log.count(fa)
    assert abs(frac - 0.25) < 0.03
    lam = thin_log(log, lambda_sub=1.5)
    assert _rows(lam, lam.kind != MarkKind.ANIMAL_ARROW) == _rows(log, log.kind != MarkKind.ANIMAL_ARROW)
    assert lam.rates.lam == 1.5
    with pytest.raises(ValueError):
        thin_log(log, mu_sub=5.0)


def test_marks_in_closed_interval() -> None:
    w = Window.centered(1, 1)
    log = hand_log(
        w,
        Rates(1, 1, 1),
        [(MarkKind.ANIMAL_DEATH, 1.0, 0), (MarkKind.ANIMAL_DEATH, 2.0, 0), (MarkKind.FLEA_ARROW, 1.5, 0, 1)],
        (0, 3),
    )
    got = marks_in(log, MarkKind.ANIMAL_DEATH, 0, (1.0, 2.0))
    assert [m.time for m in got] == [1.0, 2.0]
    assert [m.y for m in marks_in(log, MarkKind.FLEA_ARROW, (0, 1), (0, 3))] == [(1,)]
    with pytest.raises(ValueError):
        marks_in(log, MarkKind.ANIMAL_DEATH, 0, (-1.0, 2.0))


def test_hand_log_rejects_non_neighbour_arrow() -> None:
    with pytest.raises(ValueError):
        hand_log(Window.centered(1, 2), Rates(1, 1, 1), [(MarkKind.ANIMAL_ARROW, 1.0, -2, 2)], (0, 3))


def test_empty_time_window_rejected() -> None:
    with pytest.raises(ValueError):
        generate_log(Window.centered(1, 1), (1.0, 1.0), Rates(1, 1, 1), 0)


@settings(max_examples=25, deadline=None)
@given(
    seed=st.integers(0, 2**63 - 1),
    a=st.floats(-3, 3),
    length=st.floats(0.1, 4),
    pad=st.floats(0, 3),
)
def test_restriction_property(seed: int, a: float, length: float, pad: float) -> None:
    w = Window.centered(1, 1)
    r = Rates(1.0, 2.0, 1.0)
    small = generate_log(w, (a, a + length), r, seed)
    big = generate_log(w, (a - pad, a + length + pad), r, seed)
    sel = (big.time >= a) & (big.time <= a + length)
    assert _rows(small) == _rows(big, sel)
