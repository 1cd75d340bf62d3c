"""Reverse-time dual processes read off the same event log.

The animal dual from D anchored at T is the set of sites x such that an
animal active path runs from (x, T - s) to D x {T}. The flea dual is the
same construction on flea arrows and stars, where an arrow counts only if
both endpoints host animals and a star only if its site is hostless at that
moment; both facts are read from an explicit forward animal history.
"""
from __future__ import annotations

import csv
import io
from dataclasses import dataclass
from typing import Iterable

import numpy as np

from . import _kernels as K
from .events import EventLog, Rates, generate_log
from .lattice import ANIMAL, FLEAS, Configuration, Site, Window, as_site
from .rng import derive_seed
from .simulate import Trajectory, burn_in_animals, run_animals_only, run_forward
from .stats import EstimateWithCI


@dataclass(frozen=True, eq=False)
class DualTrajectory:
    """Dual set as a function of backward time s in [0, s_max].

    Changes are listed in increasing s (decreasing real time).
    """

    log: EventLog
    kind: str
    anchor: float
    s_max: float
    initial: frozenset
    change_mark: np.ndarray
    change_site: np.ndarray
    change_added: np.ndarray
    final_mask: np.ndarray

    @property
    def change_s(self) -> np.ndarray:
        return self.anchor - self.log.time[self.change_mark]

    def mask_at(self, s: float) -> np.ndarray:
        if not 0 <= s <= self.s_max:
            raise ValueError(f"s={s} outside [0, {self.s_max}]")
        w = self.log.window
        mask = np.zeros(w.n_sites, dtype=np.bool_)
        for site in self.initial:
            mask[w.index(site)] = True
        # marks strictly inside (anchor - s, anchor] have been traversed
        n = int(np.searchsorted(self.change_s, s, side="left"))
        for site, add in zip(self.change_site[:n], self.change_added[:n]):
            mask[site] = add
        return mask

    def set_at(self, s: float) -> frozenset[Site]:
        w = self.log.window
        return frozenset(w.site(i) for i in np.flatnonzero(self.mask_at(s)))

    @property
    def final(self) -> frozenset[Site]:
        w = self.log.window
        return frozenset(w.site(i) for i in np.flatnonzero(self.final_mask))

    def to_csv(self) -> str:
        buf = io.StringIO()
        wr = csv.writer(buf, lineterminator="\n")
        wr.writerow(["time", "site", "old_state", "new_state", "direction"])
        coords = self.log.window.coords
        for i, site, add in zip(self.change_mark, self.change_site, self.change_added):
            wr.writerow([format(float(self.log.time[i]), ".17g"), ";".join(map(str, coords[site])),
                         0 if add else 1, 1 if add else 0, "dual"])
        return buf.getvalue()


def _dual_range(log: EventLog, T: float, s_max: float) -> tuple[int, int]:
    if s_max < 0 or not (log.t_min <= T - s_max and T <= log.t_max):
        raise ValueError(f"[{T - s_max}, {T}] not inside log window [{log.t_min}, {log.t_max}]")
    return log.index_range(T - s_max, T)


def _mask(window: Window, sites: Iterable[Site | int]) -> tuple[np.ndarray, frozenset]:
    sites = frozenset(as_site(s, window.dim) for s in sites)
    mask = np.zeros(window.n_sites, dtype=np.bool_)
    for s in sites:
        if window.contains(s):
            mask[window.index(s)] = True
    return mask, frozenset(s for s in sites if window.contains(s))


def run_animal_dual(log: EventLog, D: Iterable[Site | int], T: float, s_max: float, *, truncate: bool = True) -> DualTrajectory:
    """Animal dual from D anchored at T, traversing marks in (T - s_max, T]."""
    i_lo, i_hi = _dual_range(log, T, s_max)
    member, init = _mask(log.window, D)
    birth_ok = log.window.birth_ok if truncate else np.ones(log.window.n_sites, np.bool_)
    _, ch_mark, ch_site, ch_add, _ = K.dual_marks(
        member, log.kind, log.src, log.dst, birth_ok, np.zeros(0, np.uint8), 0, i_lo, i_hi, False, True
    )
    return DualTrajectory(log, "animal-dual", float(T), float(s_max), init, ch_mark, ch_site, ch_add, member)


def host_flags_from_history(log: EventLog, history: Trajectory, a: float, b: float) -> tuple[np.ndarray, int, int]:
    """Per-mark host flags for marks in (a, b], read from an animal history."""
    if history.log is not log:
        raise ValueError("animal history was recorded on a different log")
    if history.t_start > a or history.horizon < b:
        raise ValueError(
            f"animal history covers [{history.t_start}, {history.horizon}], need [{a}, {b}]"
        )
    i_lo, i_hi = log.index_range(a, b)
    animals = (history.state_at(a).states & ANIMAL) != 0
    flags = K.host_flags(animals, history.change_mark, history.change_site, history.change_new,
                         log.kind, log.src, log.dst, i_lo, i_hi)
    return flags, i_lo, i_hi


def run_flea_dual(
    log: EventLog, D: Iterable[Site | int], T: float, s_max: float, animal_history: Trajectory, *, truncate: bool = True
) -> DualTrajectory:
    """Flea dual from D anchored at T, given the forward animal history."""
    _dual_range(log, T, s_max)
    flags, i_lo, i_hi = host_flags_from_history(log, animal_history, T - s_max, T)
    member, init = _mask(log.window, D)
    birth_ok = log.window.birth_ok if truncate else np.ones(log.window.n_sites, np.bool_)
    _, ch_mark, ch_site, ch_add, _ = K.dual_marks(
        member, log.kind, log.src, log.dst, birth_ok, flags, i_lo, i_lo, i_hi, True, True
    )
    return DualTrajectory(log, "flea-dual", float(T), float(s_max), init, ch_mark, ch_site, ch_add, member)


def pathwise_flea_duality(
    log: EventLog, animals0: Configuration, B0: Iterable[Site | int], D: Iterable[Site | int], T: float, t0: float = 0.0
) -> tuple[bool, bool]:
    """(B_T meets D, dual at s=T-t0 meets B0) on one log; both must agree."""
    w = log.window
    b_mask, _ = _mask(w, B0)
    states = (animals0.states & ANIMAL) | np.where(b_mask, FLEAS, 0).astype(np.uint8)
    traj = run_forward(log, Configuration(w, states), t0, T)
    d_mask, _ = _mask(w, D)
    forward = bool(np.any(traj.final.flea_mask & d_mask))
    dual = run_flea_dual(log, D, T, T - t0, traj)
    backward = bool(np.any(dual.final_mask & b_mask))
    return forward, backward


def pathwise_animal_duality(log: EventLog, A0: Iterable[Site | int], C: Iterable[Site | int], T: float, t0: float = 0.0) -> tuple[bool, bool]:
    """(A_T meets C, animal dual from C at s=T-t0 meets A0)."""
    w = log.window
    a_mask, a_sites = _mask(w, A0)
    traj = run_animals_only(log, a_sites, t0, T)
    c_mask, _ = _mask(w, C)
    forward = bool(np.any(traj.final.animal_mask & c_mask))
    dual = run_animal_dual(log, C, T, T - t0)
    return forward, bool(np.any(dual.final_mask & a_mask))


def check_duality_distributional(
    window: Window,
    rates: Rates,
    B: Iterable[Site | int],
    C: Iterable[Site | int],
    D: Iterable[Site | int],
    t: float,
    reps: int,
    seed: int,
    burn_in: float = 10.0,
    level: float = 0.95,
) -> tuple[EstimateWithCI, EstimateWithCI]:
    """Independent Monte Carlo estimates of both sides of the duality identity.

    lhs: P(A_t meets C, B_t meets D) with fleas started on B.
    rhs: P(animal dual from C reaches A_0, flea dual from D reaches B), both
    duals anchored at t and read back at time 0. Animals are burned in on the
    negative-time part of each log on both sides; the two sides use disjoint
    seed families.
    """
    if window.truncation is not None:
        raise ValueError("distributional duality check expects an untruncated window")
    b_mask, _ = _mask(window, B)
    c_mask, _ = _mask(window, C)
    d_mask, _ = _mask(window, D)
    D = [window.site(i) for i in np.flatnonzero(d_mask)]
    C = [window.site(i) for i in np.flatnonzero(c_mask)]
    lhs = rhs = 0
    for r in range(reps):
        log = generate_log(window, (-burn_in, max(t, 1e-12)), rates, derive_seed(seed, 0, r))
        animals = burn_in_animals(log)
        start = Configuration(window, animals.states | np.where(b_mask, FLEAS, 0).astype(np.uint8))
        if t > 0:
            final = run_forward(log, start, 0.0, t).final
        else:
            final = start
        lhs += bool(np.any(final.animal_mask & c_mask)) and bool(np.any(final.flea_mask & d_mask))

        log = generate_log(window, (-burn_in, max(t, 1e-12)), rates, derive_seed(seed, 1, r))
        hist = run_animals_only(log, [window.site(i) for i in range(window.n_sites)], log.t_min, t)
        a0 = (hist.state_at(0.0).states & ANIMAL) != 0
        if t > 0:
            a_dual = run_animal_dual(log, C, t, t).final_mask
            b_dual = run_flea_dual(log, D, t, t, hist).final_mask
        else:
            a_dual, b_dual = c_mask, d_mask
        rhs += bool(np.any(a_dual & a0)) and bool(np.any(b_dual & b_mask))
    return EstimateWithCI.from_counts(lhs, reps, level), EstimateWithCI.from_counts(rhs, reps, level)
