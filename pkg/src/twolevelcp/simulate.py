"""Forward evolution of the two-level process through an event log."""
from __future__ import annotations

import csv
import io
import json
import math
from dataclasses import dataclass
from typing import Iterable

import numpy as np
from numba import njit

from . import _kernels as K
from .events import EventLog, Mark, MarkKind, Rates, generate_log, generate_marks, stream_table
from .rng import replicate_seeds
from .lattice import ANIMAL, Configuration, Site, Window, WindowMismatch, leq


def apply_mark(c: Configuration, m: Mark) -> Configuration:
    """Apply a single mark to a configuration using the local update rule."""
    w = c.window
    x = w.index(m.x)
    y = w.index(m.y) if m.y is not None else x
    if m.kind.is_arrow and y not in w.neighbors[x]:
        raise ValueError("arrow endpoints must be nearest neighbours")
    state = c.states.copy()
    K.apply_one(state, int(m.kind), x, y, w.birth_ok)
    return Configuration(w, state)


@dataclass(frozen=True, eq=False)
class Trajectory:
    """Piecewise-constant forward record on (t_start, horizon].

    ``change_mark`` holds log indices of the marks that changed a site;
    extinction times are None when not observed within the run.
    """

    log: EventLog
    initial: Configuration
    t_start: float
    horizon: float
    change_mark: np.ndarray
    change_site: np.ndarray
    change_old: np.ndarray
    change_new: np.ndarray
    final: Configuration
    extinction_time_animals: float | None
    extinction_time_fleas: float | None
    truncated: bool = True

    @property
    def change_time(self) -> np.ndarray:
        return self.log.time[self.change_mark]

    @property
    def T1(self) -> float | None:
        return self.extinction_time_animals

    @property
    def T2(self) -> float | None:
        return self.extinction_time_fleas

    def state_at(self, t: float) -> Configuration:
        if not self.t_start <= t <= self.horizon:
            raise ValueError(f"t={t} outside [{self.t_start}, {self.horizon}]")
        state = self.initial.states.copy()
        n = int(np.searchsorted(self.change_time, t, side="right"))
        state[self.change_site[:n]] = self.change_new[:n]
        return Configuration(self.initial.window, state)

    def animal_events(self) -> list[tuple[float, int, int]]:
        """(time, site, new animal bit) for every change of the animal set."""
        old_a = self.change_old & ANIMAL
        new_a = self.change_new & ANIMAL
        sel = np.flatnonzero(old_a != new_a)
        t = self.change_time
        return [(float(t[p]), int(self.change_site[p]), int(new_a[p])) for p in sel]

    def occupancy_intervals(self, site: Site | int, bit: int = 2, t_end: float | None = None) -> list[tuple[float, float, bool]]:
        """Maximal intervals [a, b) on which ``site`` carries ``bit``.

        The last interval is closed (third element True) when it reaches
        ``t_end`` (default: the horizon).
        """
        t_end = self.horizon if t_end is None else t_end
        i = self.initial.window.index(site)
        sel = self.change_site == i
        times = self.change_time[sel]
        new = self.change_new[sel]
        out = []
        on = bool(self.initial.states[i] & bit)
        start = self.t_start
        for t, s in zip(times, new):
            if t > t_end:
                break
            now = bool(s & bit)
            if now and not on:
                start = float(t)
            elif on and not now:
                out.append((start, float(t), False))
            on = now
        if on:
            out.append((start, t_end, True))
        return out

    def to_csv(self, direction: str = "forward") -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["time", "site", "old_state", "new_state", "direction"])
        win = self.initial.window
        for t, s, o, n in zip(self.change_time, self.change_site, self.change_old, self.change_new):
            w.writerow([format(float(t), ".17g"), ";".join(map(str, win.coords[s])), int(o), int(n), direction])
        return buf.getvalue()

    def summary(self) -> dict:
        return {
            "T1": self.T1,
            "T2": self.T2,
            "final_animals": int(self.final.animal_mask.sum()),
            "final_fleas": int(self.final.flea_mask.sum()),
            "horizon": self.horizon,
            "n_changes": int(self.change_mark.shape[0]),
        }

    def summary_json(self) -> str:
        return json.dumps(self.summary(), sort_keys=True)


def _check_range(log: EventLog, t_start: float, t_end: float) -> None:
    if not (log.t_min <= t_start <= t_end <= log.t_max):
        raise ValueError(f"[{t_start}, {t_end}] not inside log window [{log.t_min}, {log.t_max}]")


def _birth_ok(window: Window, truncate: bool) -> np.ndarray:
    return window.birth_ok if truncate else np.ones(window.n_sites, dtype=np.bool_)


def run_forward(
    log: EventLog,
    init: Configuration,
    t_start: float | None = None,
    t_end: float | None = None,
    *,
    truncate: bool = True,
    fleas_on: bool = True,
) -> Trajectory:
    """Fold the local rule over the marks in (t_start, t_end] in time order.

    ``truncate=False`` ignores the window's birth truncation (used for
    burn-in before time 0).
    """
    t_start = log.t_min if t_start is None else float(t_start)
    t_end = log.t_max if t_end is None else float(t_end)
    _check_range(log, t_start, t_end)
    if init.window.lo != log.window.lo or init.window.hi != log.window.hi:
        raise WindowMismatch("initial configuration and log use different windows")
    state = init.states.copy()
    if not fleas_on:
        state &= ANIMAL
    i0, i1 = log.index_range(t_start, t_end)
    nc, ch_mark, ch_old, ch_new, t_a, t_b, _ = K.run_marks(
        state, log.kind, log.time, log.src, log.dst, _birth_ok(log.window, truncate),
        i0, i1, t_start, fleas_on, True, np.empty(0),
    )
    sites = K.changed_sites(ch_mark, ch_old, ch_new, log.kind, log.src, log.dst)
    initial = init if fleas_on else init.without_fleas()
    return Trajectory(
        log, initial, t_start, t_end, ch_mark, sites, ch_old, ch_new,
        Configuration(init.window, state),
        None if math.isnan(t_a) else float(t_a),
        None if math.isnan(t_b) else float(t_b),
        truncate,
    )


def run_animals_only(
    log: EventLog,
    init_animals: Configuration | Iterable[Site | int],
    t_start: float | None = None,
    t_end: float | None = None,
    *,
    truncate: bool = True,
) -> Trajectory:
    """Evolve the animals alone (animal arrows and deaths only)."""
    if not isinstance(init_animals, Configuration):
        init_animals = Configuration.from_sets(log.window, init_animals)
    return run_forward(log, init_animals, t_start, t_end, truncate=truncate, fleas_on=False)


def sample_upper_invariant_animals(window: Window, lam: float, burn_in: float, seed: int) -> Configuration:
    """Animals after running from all-occupied for ``burn_in`` time units.

    This approximates the upper invariant measure of the animal contact
    process; finite burn-in and finite window both bias it upward/downward
    respectively and neither is corrected.
    """
    if burn_in <= 0:
        raise ValueError("burn_in must be positive")
    log = generate_log(window, (-burn_in, 0.0), Rates(lam, 0.0, 0.0), seed)
    state = np.full(window.n_sites, ANIMAL, dtype=np.uint8)
    K.run_marks(state, log.kind, log.time, log.src, log.dst, np.ones(window.n_sites, np.bool_),
                0, len(log), -burn_in, False, False, np.empty(0))
    return Configuration(window, state)


def sample_upper_invariant_joint(window: Window, rates: Rates, burn_in: float, seed: int) -> Configuration:
    """Full process after ``burn_in`` from all sites in state 3."""
    if burn_in <= 0:
        raise ValueError("burn_in must be positive")
    log = generate_log(window, (-burn_in, 0.0), rates, seed)
    state = np.full(window.n_sites, 3, dtype=np.uint8)
    K.run_marks(state, log.kind, log.time, log.src, log.dst, np.ones(window.n_sites, np.bool_),
                0, len(log), -burn_in, True, False, np.empty(0))
    return Configuration(window, state)


def burn_in_animals(log: EventLog, t0: float = 0.0) -> Configuration:
    """Animals at time ``t0`` after running from all-occupied at ``log.t_min``.

    Uses the negative-time part of the same log, so the environment, the
    forward run and any dual run share one probability space. Burn-in ignores
    the window's birth truncation.
    """
    _check_range(log, log.t_min, t0)
    state = np.full(log.window.n_sites, ANIMAL, dtype=np.uint8)
    _, i1 = log.index_range(log.t_min, t0)
    K.run_marks(state, log.kind, log.time, log.src, log.dst, np.ones(log.window.n_sites, np.bool_),
                0, i1, log.t_min, False, False, np.empty(0))
    return Configuration(log.window, state)


def check_monotone_coupling(log: EventLog, init1: Configuration, init2: Configuration, horizon: float | None = None) -> bool:
    """Run both initial states on the same log; True iff the order holds after every mark."""
    if not leq(init1, init2):
        raise ValueError("check_monotone_coupling needs init1 <= init2")
    horizon = log.t_max if horizon is None else horizon
    _check_range(log, log.t_min, horizon)
    i0, i1 = log.index_range(log.t_min, horizon)
    # marks exactly at t_min are included too
    i0 = int(np.searchsorted(log.time, log.t_min, side="left"))
    s1 = init1.states.copy()
    s2 = init2.states.copy()
    return K.coupled_violation(s1, s2, log.kind, log.src, log.dst, log.window.birth_ok, i0, i1) < 0


@njit(cache=True, nogil=True)
def _state_counts(seed_keys, s_kind, s_src, s_dst, s_hash, rate_by_kind, init, birth_ok, snap_times):
    """Histogram of base-4 encoded states at each snapshot time over replicates."""
    n = init.shape[0]
    n_snap = snap_times.shape[0]
    counts = np.zeros((n_snap, 4 ** n), dtype=np.int64)
    t_end = snap_times[n_snap - 1]
    for r in range(seed_keys.shape[0]):
        kind, time, src, dst, key = generate_marks(seed_keys[r], s_kind, s_src, s_dst, s_hash, rate_by_kind, 0.0, t_end)
        state = init.copy()
        _, _, _, _, _, _, snaps = K.run_marks(state, kind, time, src, dst, birth_ok, 0, kind.shape[0], 0.0, True, False, snap_times)
        for q in range(n_snap):
            code = 0
            for s in range(n - 1, -1, -1):
                code = code * 4 + snaps[q, s]
            counts[q, code] += 1
    return counts


def state_code(states: np.ndarray) -> int:
    """Base-4 code with site 0 as the least significant digit."""
    return int(sum(int(s) * 4**i for i, s in enumerate(states)))


def empirical_distribution(
    window: Window, rates: Rates, init: Configuration, times: Iterable[float], reps: int, seed: int
) -> np.ndarray:
    """Empirical law of the configuration at each time, over ``reps`` seeded runs.

    Returns an array of shape (len(times), 4**n_sites), rows summing to 1;
    column index is :func:`state_code`.
    """
    if window.n_sites > 8:
        raise ValueError("empirical_distribution is meant for windows of at most 8 sites")
    times = np.asarray(sorted(float(t) for t in times), dtype=np.float64)
    keys = replicate_seeds(seed, reps)
    st = stream_table(window)
    counts = _state_counts(keys, st.kind, st.src, st.dst, st.hash, rates.by_kind(),
                           init.states.copy(), window.birth_ok, times)
    return counts / float(reps)
