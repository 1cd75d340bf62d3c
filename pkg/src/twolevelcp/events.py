"""Graphical representation: keyed Poisson marks on a space-time window.

Four families of homogeneous Poisson streams are generated:

* animal birth arrows x -> y, one stream per ordered in-window neighbour pair, rate lambda;
* animal deaths, one stream per site, rate 1;
* flea birth arrows x -> y, one stream per ordered pair, rate mu;
* flea death marks (stars), one stream per site, rate delta.

Marks are stored unconditionally. Whether a flea arrow or a star actually
acts depends on the animal occupancy at its time, and is decided when the
mark is applied (forward) or traversed (dual).

Each stream is cut into unit-length epochs ``[e, e+1)``; the arrivals in an
epoch are exponential gaps drawn from the counter-based generator keyed by
(seed, stream hash, e, draw index). The stream hash depends on the site
coordinates and direction, not on the window, so enlarging either the time
window (in both directions) or the spatial window only adds marks.
"""
from __future__ import annotations

import csv
import io
import math
from dataclasses import dataclass
from enum import IntEnum
from functools import lru_cache
from typing import Iterator

import numpy as np
from numba import njit

from .lattice import Site, Window, as_site
from .rng import LAMBDA_THIN_SALT, THIN_SALT, combine, draw_key, epoch_key, hash_ints, mix64, unit_open


class MarkKind(IntEnum):
    ANIMAL_ARROW = 0
    ANIMAL_DEATH = 1
    FLEA_ARROW = 2
    FLEA_DEATH = 3

    @property
    def is_arrow(self) -> bool:
        return self in (MarkKind.ANIMAL_ARROW, MarkKind.FLEA_ARROW)


_CSV_KIND = {
    MarkKind.ANIMAL_ARROW: "AnimalArrow",
    MarkKind.ANIMAL_DEATH: "AnimalDeath",
    MarkKind.FLEA_ARROW: "FleaArrow",
    MarkKind.FLEA_DEATH: "FleaDeathMark",
}


@dataclass(frozen=True)
class Rates:
    """Per-edge birth rates and hostless flea death rate; animals die at rate 1."""

    lam: float
    mu: float
    delta: float

    def __post_init__(self) -> None:
        for name in ("lam", "mu", "delta"):
            v = float(getattr(self, name))
            if not math.isfinite(v) or v < 0:
                raise ValueError(f"rate {name}={v} must be finite and nonnegative")
            object.__setattr__(self, name, v)

    @property
    def animal_death(self) -> float:
        return 1.0

    def by_kind(self) -> np.ndarray:
        return np.array([self.lam, 1.0, self.mu, self.delta], dtype=np.float64)


@dataclass(frozen=True)
class Mark:
    kind: MarkKind
    time: float
    id: int
    x: Site
    y: Site | None = None


@dataclass(frozen=True)
class StreamTable:
    kind: np.ndarray
    src: np.ndarray
    dst: np.ndarray
    hash: np.ndarray


@lru_cache(maxsize=64)
def stream_table(window: Window) -> StreamTable:
    """All streams of ``window`` in (kind, src, dst) lexicographic order."""
    kinds, srcs, dsts, hashes = [], [], [], []
    nb = window.neighbors
    coords = window.coords.tolist()
    for kind in MarkKind:
        for i in range(window.n_sites):
            if kind.is_arrow:
                targets = sorted((int(j), dr) for dr, j in enumerate(nb[i]) if j >= 0)
                for j, dr in targets:
                    kinds.append(kind)
                    srcs.append(i)
                    dsts.append(j)
                    hashes.append(hash_ints(int(kind), *coords[i], dr))
            else:
                kinds.append(kind)
                srcs.append(i)
                dsts.append(i)
                hashes.append(hash_ints(int(kind), *coords[i], -1))
    return StreamTable(
        np.array(kinds, dtype=np.int8),
        np.array(srcs, dtype=np.int64),
        np.array(dsts, dtype=np.int64),
        np.array(hashes, dtype=np.uint64),
    )


@njit(cache=True, nogil=True)
def _grow(a, n):
    out = np.empty(n, dtype=a.dtype)
    out[: a.shape[0]] = a
    return out


@njit(cache=True, nogil=True)
def generate_marks(seed, s_kind, s_src, s_dst, s_hash, rate_by_kind, t_min, t_max):
    """Generate and time-sort all marks; returns (kind, time, src, dst, key)."""
    span = t_max - t_min
    expected = 0.0
    for i in range(s_kind.shape[0]):
        expected += rate_by_kind[s_kind[i]] * (span + 1.0)
    cap = int(expected + 8.0 * math.sqrt(expected) + 64.0)
    kind = np.empty(cap, dtype=np.int8)
    time = np.empty(cap, dtype=np.float64)
    src = np.empty(cap, dtype=np.int64)
    dst = np.empty(cap, dtype=np.int64)
    key = np.empty(cap, dtype=np.uint64)
    n = 0
    e0 = int(math.floor(t_min))
    e1 = int(math.floor(t_max))
    for i in range(s_kind.shape[0]):
        r = rate_by_kind[s_kind[i]]
        if r <= 0.0:
            continue
        sk = combine(seed, s_hash[i])
        for e in range(e0, e1 + 1):
            ek = epoch_key(sk, e)
            t = float(e)
            j = 0
            while True:
                dk = draw_key(ek, j)
                t += -math.log(unit_open(dk)) / r
                j += 1
                if t >= e + 1.0:
                    break
                if t < t_min or t > t_max:
                    continue
                if n == cap:
                    cap *= 2
                    kind = _grow(kind, cap)
                    time = _grow(time, cap)
                    src = _grow(src, cap)
                    dst = _grow(dst, cap)
                    key = _grow(key, cap)
                kind[n] = s_kind[i]
                time[n] = t
                src[n] = s_src[i]
                dst[n] = s_dst[i]
                key[n] = dk
                n += 1
    order = np.argsort(time[:n], kind="mergesort")
    return kind[:n][order], time[:n][order], src[:n][order], dst[:n][order], key[:n][order]


@njit(cache=True, nogil=True)
def thinning_coins(key, salt):
    out = np.empty(key.shape[0], dtype=np.float64)
    s = np.uint64(salt)
    for i in range(key.shape[0]):
        out[i] = unit_open(mix64(key[i] ^ s))
    return out


class EventLog:
    """Immutable, seed-deterministic set of marks on a space-time window.

    Marks are held column-wise and sorted by (time, kind, src, dst); a mark's
    id is its position in that order. ``base_rates`` are the rates the streams
    were generated with; ``rates`` can be lower after thinning.
    """

    def __init__(self, window, t_min, t_max, rates, seed, kind, time, src, dst, key, base_rates=None):
        self.window = window
        self.t_min = float(t_min)
        self.t_max = float(t_max)
        self.rates = rates
        self.base_rates = rates if base_rates is None else base_rates
        self.seed = int(seed)
        self.kind = kind
        self.time = time
        self.src = src
        self.dst = dst
        self.key = key
        for a in (kind, time, src, dst, key):
            a.flags.writeable = False

    def __len__(self) -> int:
        return int(self.time.shape[0])

    @property
    def time_window(self) -> tuple[float, float]:
        return self.t_min, self.t_max

    @property
    def ids(self) -> np.ndarray:
        return np.arange(len(self), dtype=np.int64)

    def mark(self, i: int) -> Mark:
        k = MarkKind(int(self.kind[i]))
        x = self.window.site(int(self.src[i]))
        y = self.window.site(int(self.dst[i])) if k.is_arrow else None
        return Mark(k, float(self.time[i]), int(i), x, y)

    @property
    def marks(self) -> Iterator[Mark]:
        return (self.mark(i) for i in range(len(self)))

    def count(self, kind: MarkKind) -> int:
        return int(np.count_nonzero(self.kind == kind))

    def index_range(self, a: float, b: float) -> tuple[int, int]:
        """Index range of marks with a < time <= b."""
        return int(np.searchsorted(self.time, a, side="right")), int(np.searchsorted(self.time, b, side="right"))

    def to_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["kind", "time", "x", "y", "id"])
        for m in self.marks:
            w.writerow([
                _CSV_KIND[m.kind],
                format(m.time, ".17g"),
                ";".join(map(str, m.x)),
                "" if m.y is None else ";".join(map(str, m.y)),
                m.id,
            ])
        return buf.getvalue()


def generate_log(window: Window, time_window: tuple[float, float], rates: Rates, seed: int) -> EventLog:
    t_min, t_max = (float(v) for v in time_window)
    if not t_min < t_max:
        raise ValueError(f"empty time window [{t_min}, {t_max}]")
    st = stream_table(window)
    arrays = generate_marks(np.uint64(seed & (2**64 - 1)), st.kind, st.src, st.dst, st.hash, rates.by_kind(), t_min, t_max)
    return EventLog(window, t_min, t_max, rates, seed, *arrays)


def thin_log(log: EventLog, mu_sub: float | None = None, lambda_sub: float | None = None) -> EventLog:
    """Retain each flea arrow (animal arrow) with probability mu_sub/mu (lambda_sub/lambda).

    Coins are a fixed function of each mark's key, so retained sets are
    nested in the sub-rate and thinning twice equals thinning once.
    """
    mu_sub = log.rates.mu if mu_sub is None else float(mu_sub)
    lambda_sub = log.rates.lam if lambda_sub is None else float(lambda_sub)
    if not 0 <= mu_sub <= log.rates.mu:
        raise ValueError(f"mu_sub={mu_sub} must lie in [0, {log.rates.mu}]")
    if not 0 <= lambda_sub <= log.rates.lam:
        raise ValueError(f"lambda_sub={lambda_sub} must lie in [0, {log.rates.lam}]")
    keep = np.ones(len(log), dtype=np.bool_)
    for kind, sub, base, salt in (
        (MarkKind.FLEA_ARROW, mu_sub, log.base_rates.mu, THIN_SALT),
        (MarkKind.ANIMAL_ARROW, lambda_sub, log.base_rates.lam, LAMBDA_THIN_SALT),
    ):
        sel = log.kind == kind
        if base == 0 or not sel.any():
            continue
        keep[sel] = thinning_coins(log.key[sel], salt) < sub / base
    rates = Rates(lambda_sub, mu_sub, log.rates.delta)
    return EventLog(
        log.window, log.t_min, log.t_max, rates, log.seed,
        log.kind[keep], log.time[keep], log.src[keep], log.dst[keep], log.key[keep],
        base_rates=log.base_rates,
    )


def marks_in(log: EventLog, kind: MarkKind, where, interval: tuple[float, float]) -> list[Mark]:
    """Marks of one stream with time in the closed interval, time-ascending.

    ``where`` is a site for death streams and an (x, y) pair for arrows.
    """
    a, b = (float(v) for v in interval)
    if a > b or a < log.t_min or b > log.t_max:
        raise ValueError(f"[{a}, {b}] is not inside the log window [{log.t_min}, {log.t_max}]")
    kind = MarkKind(kind)
    w = log.window
    if kind.is_arrow:
        x, y = where
        i, j = w.index(as_site(x, w.dim)), w.index(as_site(y, w.dim))
    else:
        i = j = w.index(as_site(where, w.dim))
    sel = (log.kind == kind) & (log.src == i) & (log.dst == j) & (log.time >= a) & (log.time <= b)
    return [log.mark(int(k)) for k in np.flatnonzero(sel)]


def hand_log(window: Window, rates: Rates, marks: list[tuple], time_window: tuple[float, float]) -> EventLog:
    """Build a log from explicit (kind, time, x[, y]) tuples; used for fixtures."""
    rows = []
    for m in marks:
        kind, t, x = MarkKind(m[0]), float(m[1]), m[2]
        y = m[3] if len(m) > 3 else x
        i, j = window.index(as_site(x, window.dim)), window.index(as_site(y, window.dim))
        if kind.is_arrow and j not in window.neighbors[i]:
            raise ValueError("arrow endpoints must be nearest neighbours")
        rows.append((t, int(kind), i, j))
    rows.sort()
    n = len(rows)
    kind = np.array([r[1] for r in rows], dtype=np.int8)
    time = np.array([r[0] for r in rows], dtype=np.float64)
    src = np.array([r[2] for r in rows], dtype=np.int64)
    dst = np.array([r[3] for r in rows], dtype=np.int64)
    key = np.arange(1, n + 1, dtype=np.uint64)
    return EventLog(window, time_window[0], time_window[1], rates, 0, kind, time, src, dst, key)
