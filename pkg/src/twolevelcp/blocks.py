"""Block-construction quantities on truncated runs.

Block events: starting from burned-in animals with fleas on the cube
[-n, n]^d, the truncated process (births only from sup-norm < 2n + L)
either contains a translated cube x + [-n, n]^d at time T + 1 for some
x in [0, L)^d (event A), or contains one at some time in [1, T + 1] with
x in {L + n} x [0, L)^(d-1) (event B).

Boundary counts: N(L, T) is the largest number of boundary space-time
points (sup-norm L, time in [0, T]) occupied by truncated fleas, with points
on the same site at least one time unit apart. Sites do not interact in the
constraint, so the count is a per-site greedy packing.
"""
from __future__ import annotations

import itertools
import math
from dataclasses import dataclass, field
from typing import Iterable, Sequence

import numpy as np
from numba import njit

from . import _kernels as K
from .events import EventLog, MarkKind, Rates, generate_log, thin_log
from .lattice import ANIMAL, FLEAS, Configuration, Site, Window
from .parallel import map_replicates
from .rng import derive_seed
from .simulate import Trajectory, burn_in_animals, run_forward
from .stats import EstimateWithCI, wilson_interval


@dataclass(frozen=True)
class BlockSpec:
    n: int
    L: int
    T: float
    epsilon: float = 0.1

    def __post_init__(self) -> None:
        if self.n < 0 or self.L < 1 or not self.T > 0:
            raise ValueError(f"inconsistent block spec n={self.n}, L={self.L}, T={self.T}")
        if not 0 < self.epsilon < 1:
            raise ValueError("epsilon must lie in (0, 1)")

    @property
    def truncation(self) -> int:
        return 2 * self.n + self.L

    def window(self, dim: int) -> Window:
        return Window.centered(dim, self.truncation, self.truncation)

    def centers_A(self, dim: int) -> list[Site]:
        return list(itertools.product(range(self.L), repeat=dim))

    def centers_B(self, dim: int) -> list[Site]:
        return [(self.L + self.n, *rest) for rest in itertools.product(range(self.L), repeat=dim - 1)]


@dataclass(frozen=True, eq=False)
class CubeIndex:
    """Site indices of candidate cubes, plus the site -> cube incidence in CSR form."""

    cubes: np.ndarray
    ptr: np.ndarray
    idx: np.ndarray

    @classmethod
    def build(cls, window: Window, centers: Sequence[Site], n: int) -> CubeIndex:
        offsets = list(itertools.product(range(-n, n + 1), repeat=window.dim))
        cubes = np.array(
            [[window.index(tuple(c + o for c, o in zip(x, off))) for off in offsets] for x in centers],
            dtype=np.int64,
        ).reshape(len(centers), len(offsets))
        per_site = [[] for _ in range(window.n_sites)]
        for ci, row in enumerate(cubes):
            for s in row:
                per_site[s].append(ci)
        ptr = np.zeros(window.n_sites + 1, dtype=np.int64)
        ptr[1:] = np.cumsum([len(v) for v in per_site])
        idx = np.array([c for v in per_site for c in v], dtype=np.int64)
        return cls(cubes, ptr, idx)

    def any_full(self, mask: np.ndarray) -> bool:
        if self.cubes.shape[0] == 0:
            return False
        return bool(np.any(np.all(mask[self.cubes], axis=1)))


@njit(cache=True, nogil=True, inline="always")
def _cube_full(mask, cubes, c):
    for s in cubes[c]:
        if not mask[s]:
            return False
    return True


@njit(cache=True, nogil=True, inline="always")
def _any_full(mask, cubes):
    for c in range(cubes.shape[0]):
        if _cube_full(mask, cubes, c):
            return True
    return False


@njit(cache=True, nogil=True)
def _forward_watch(state, kind, time, src, dst, birth_ok, i0, i1, t_watch, cubes, ptr, idx):
    """Forward replay; True if some watched cube is fully flea-occupied at a time in [t_watch, end]."""
    n = state.shape[0]
    fleas = np.zeros(n, dtype=np.bool_)
    hit = False
    watching = False
    for i in range(i0, i1):
        if not watching and time[i] > t_watch:
            watching = True
            for s in range(n):
                fleas[s] = (state[s] & 2) != 0
            hit = _any_full(fleas, cubes)
        c = K.apply_one(state, kind[i], src[i], dst[i], birth_ok)
        if watching and c >= 0:
            fleas[c] = (state[c] & 2) != 0
            if not hit and fleas[c]:
                for p in range(ptr[c], ptr[c + 1]):
                    if _cube_full(fleas, cubes, idx[p]):
                        hit = True
                        break
    if not watching:
        for s in range(n):
            fleas[s] = (state[s] & 2) != 0
        hit = _any_full(fleas, cubes)
    return hit


@njit(cache=True, nogil=True)
def _dual_watch(member, kind, time, src, dst, birth_ok, flags, flag_offset, i_lo, i_hi, t_watch, cubes, ptr, idx):
    """Flea-dual traversal; True if some watched cube is contained in the dual
    at a real time <= t_watch (backward time >= anchor - t_watch)."""
    hit = False
    watching = False
    for i in range(i_hi - 1, i_lo - 1, -1):
        if not watching and time[i] <= t_watch:
            watching = True
            hit = _any_full(member, cubes)
        k = kind[i]
        if k == K.FD:
            x = src[i]
            if member[x] and not (flags[i - flag_offset] & 1):
                member[x] = False
        elif k == K.FA:
            y = src[i]
            f = flags[i - flag_offset]
            if member[dst[i]] and not member[y] and birth_ok[y] and (f & 1) and (f & 2):
                member[y] = True
                if watching and not hit:
                    for p in range(ptr[y], ptr[y + 1]):
                        if _cube_full(member, cubes, idx[p]):
                            hit = True
                            break
    if not watching:
        hit = _any_full(member, cubes)
    return hit


def cube_start(log: EventLog, n: int) -> Configuration:
    """Burned-in animals at time 0 with fleas on every site of [-n, n]^d."""
    animals = burn_in_animals(log)
    return animals.with_fleas_on(log.window.cube(n))


def block_log(spec: BlockSpec, rates: Rates, dim: int, seed: int, burn_in: float = 10.0) -> EventLog:
    return generate_log(spec.window(dim), (-burn_in, spec.T + 1.0), rates, seed)


def block_events_on_log(spec: BlockSpec, log: EventLog, fleas: Iterable[Site] | None = None) -> tuple[bool, bool]:
    """(event A, event B) for one log on the block window."""
    w = log.window
    if w.truncation != spec.truncation:
        raise ValueError(f"log window truncation {w.truncation} != 2n+L = {spec.truncation}")
    animals = burn_in_animals(log)
    start = animals.with_fleas_on(w.cube(spec.n) if fleas is None else fleas)
    state = start.states.copy()
    i0, i1 = log.index_range(0.0, spec.T + 1.0)
    cb = _cube_index(w, spec, "B")
    ev_b = _forward_watch(state, log.kind, log.time, log.src, log.dst, w.birth_ok, i0, i1, 1.0, cb.cubes, cb.ptr, cb.idx)
    ev_a = _cube_index(w, spec, "A").any_full((state & FLEAS) != 0)
    return ev_a, bool(ev_b)


_CUBE_CACHE: dict = {}


def _cube_index(window: Window, spec: BlockSpec, which: str) -> CubeIndex:
    key = (window, spec.n, spec.L, which)
    if key not in _CUBE_CACHE:
        centers = spec.centers_A(window.dim) if which == "A" else spec.centers_B(window.dim)
        _CUBE_CACHE[key] = CubeIndex.build(window, centers, spec.n)
    return _CUBE_CACHE[key]


def block_events(spec: BlockSpec, rates: Rates, dim: int, seed: int, burn_in: float = 10.0) -> tuple[bool, bool]:
    return block_events_on_log(spec, block_log(spec, rates, dim, seed, burn_in))


def block_event_A(spec: BlockSpec, rates: Rates, dim: int, seed: int, burn_in: float = 10.0) -> bool:
    return block_events(spec, rates, dim, seed, burn_in)[0]


def block_event_B(spec: BlockSpec, rates: Rates, dim: int, seed: int, burn_in: float = 10.0) -> bool:
    return block_events(spec, rates, dim, seed, burn_in)[1]


def dual_block_events_on_log(spec: BlockSpec, log: EventLog, anchor: float, D: Iterable[Site] | None = None) -> tuple[bool, bool]:
    """Block events for the truncated flea dual anchored at ``anchor``.

    Animals are burned in (untruncated) up to anchor - T - 1 and evolve
    truncated from there, mirroring the forward construction.
    """
    from .dual import host_flags_from_history
    from .simulate import run_animals_only

    w = log.window
    start = anchor - spec.T - 1.0
    if log.t_min >= start or log.t_max < anchor:
        raise ValueError(
            f"log window [{log.t_min}, {log.t_max}] must cover burn-in before {start} and reach {anchor}"
        )
    animals = burn_in_animals(log, start)
    hist = run_animals_only(log, animals, start, anchor)
    flags, i_lo, i_hi = host_flags_from_history(log, hist, start, anchor)
    member = np.zeros(w.n_sites, dtype=np.bool_)
    for s in (w.cube(spec.n) if D is None else D):
        member[w.index(s)] = True
    cb = _cube_index(w, spec, "B")
    ev_b = _dual_watch(member, log.kind, log.time, log.src, log.dst, w.birth_ok, flags, i_lo, i_lo, i_hi,
                       anchor - 1.0, cb.cubes, cb.ptr, cb.idx)
    ev_a = _cube_index(w, spec, "A").any_full(member)
    return ev_a, bool(ev_b)


# ---------------------------------------------------------------------------
# boundary counts


@dataclass(frozen=True)
class BoundaryCount:
    value: int
    witness: tuple[tuple[Site, float], ...] = field(default=())


def max_unit_gap_points(intervals: Iterable[tuple[float, float, bool]]) -> list[float]:
    """Earliest-first packing of points with pairwise gaps >= 1.

    Intervals are (a, b, closed): [a, b) or [a, b] when ``closed``; they must
    be disjoint. Returns the chosen times.
    """
    pts: list[float] = []
    last = -math.inf
    for a, b, closed in sorted(intervals):
        t = float(max(a, last + 1.0))
        while t < b or (closed and t == b):
            pts.append(t)
            last = t
            t += 1.0
    return pts


def brute_force_max_points(intervals: Sequence[tuple[float, float, bool]], step: float) -> int:
    """Exhaustive maximum over all valid point sets on the grid ``step * Z``.

    Exact whenever interval endpoints lie on that grid.
    """
    cand = []
    for a, b, closed in intervals:
        k0 = math.ceil(a / step - 1e-9)
        k = k0
        while k * step < b - 1e-9 or (closed and abs(k * step - b) < 1e-9):
            cand.append(k * step)
            k += 1
    cand = sorted(set(round(c, 9) for c in cand))

    def search(i: int, last: float) -> int:
        best = 0
        for j in range(i, len(cand)):
            if cand[j] - last >= 1.0 - 1e-9:
                best = max(best, 1 + search(j + 1, cand[j]))
        return best

    return search(0, -math.inf)


def _boundary_sites(window: Window, L: int, plus: bool) -> list[Site]:
    out = []
    for i in range(window.n_sites):
        x = window.site(i)
        if plus:
            if x[0] == L and all(0 <= v <= L for v in x[1:]):
                out.append(x)
        elif max(abs(v) for v in x) == L:
            out.append(x)
    return out


def _clip(intervals, t0: float, t1: float):
    out = []
    for a, b, closed in intervals:
        a2, b2 = max(a, t0), min(b, t1)
        if a2 < b2 or (a2 == b2 and (closed or b > t1)):
            out.append((a2, b2, closed or b > t1 or b2 == t1 and closed))
    return out


def compute_N(traj: Trajectory, L: int, T: float, *, plus: bool = False) -> BoundaryCount:
    """N(L, T) (or N_+(L, T) with ``plus``) from a run truncated at L."""
    w = traj.initial.window
    if w.truncation != L or not traj.truncated:
        raise ValueError(f"trajectory truncation {w.truncation} does not match L={L}")
    if traj.t_start > 0 or traj.horizon < T:
        raise ValueError("trajectory must cover [0, T]")
    witness = []
    for x in _boundary_sites(w, L, plus):
        ivs = _clip(traj.occupancy_intervals(x, FLEAS, t_end=T), 0.0, T)
        witness.extend((x, t) for t in max_unit_gap_points(ivs))
    return BoundaryCount(len(witness), tuple(witness))


def compute_N_plus(traj: Trajectory, L: int, T: float) -> BoundaryCount:
    return compute_N(traj, L, T, plus=True)


# ---------------------------------------------------------------------------
# orthant inequality


@dataclass(frozen=True)
class OrthantReport:
    dim: int
    N: int
    lhs: EstimateWithCI
    rhs_point: float
    rhs_ci: tuple[float, float]
    flagged: bool

    def to_dict(self) -> dict:
        return {
            "dim": self.dim,
            "N": self.N,
            "lhs": self.lhs.to_dict(),
            "rhs": {"p": self.rhs_point, "ci": list(self.rhs_ci)},
            "flagged": self.flagged,
        }


def orthant_samples(
    n: int, L: int, T: float, rates: Rates, dim: int, reps: int, seed: int, burn_in: float = 10.0, threads: int = 1
) -> np.ndarray:
    """Per replicate (|B_T within [0, L]^d|, |B_T|) for the run truncated at L."""
    if not L >= n >= 1:
        raise ValueError("need L >= n >= 1")
    w = Window.centered(dim, L, L)
    orth = np.all(w.coords >= 0, axis=1)
    cube = w.cube(n)

    def one(r: int) -> tuple[int, int]:
        log = generate_log(w, (-burn_in, T), rates, derive_seed(seed, r))
        start = burn_in_animals(log).with_fleas_on(cube)
        state = start.states.copy()
        i0, i1 = log.index_range(0.0, T)
        K.run_marks(state, log.kind, log.time, log.src, log.dst, w.birth_ok, i0, i1, 0.0, True, False, np.empty(0))
        fleas = (state & FLEAS) != 0
        return int(np.count_nonzero(fleas & orth)), int(np.count_nonzero(fleas))

    return np.array(map_replicates(one, reps, threads), dtype=np.int64).reshape(reps, 2)


def orthant_report(samples: np.ndarray, dim: int, N: int, level: float = 0.99) -> OrthantReport:
    """One-sided test: flag only if lhs's lower bound exceeds rhs's upper bound."""
    reps = samples.shape[0]
    two_sided = 2 * level - 1
    k_l = int(np.count_nonzero(samples[:, 0] <= N))
    k_r = int(np.count_nonzero(samples[:, 1] <= 2**dim * N))
    lhs = EstimateWithCI.from_counts(k_l, reps, two_sided)
    lo_r, hi_r = wilson_interval(k_r, reps, two_sided)
    e = 2.0 ** (-dim)
    rhs = ((k_r / reps) ** e, (lo_r**e, hi_r**e))
    return OrthantReport(dim, N, lhs, float(rhs[0]), rhs[1], bool(lhs.ci_low > rhs[1][1]))


def test_orthant_inequality(
    n: int, L: int, T: float, N: int, reps: int, rates: Rates, dim: int, seed: int, burn_in: float = 10.0
) -> OrthantReport:
    return orthant_report(orthant_samples(n, L, T, rates, dim, reps, seed, burn_in), dim, N)


test_orthant_inequality.__test__ = False


# ---------------------------------------------------------------------------
# path diagnostics


@njit(cache=True, nogil=True)
def _witness(kind, time, src, dst, birth_ok, i_lo, i_hi, target, t_target, sources):
    """One animal active path from a source site at the start of the range to
    (target, t_target). Returns (reached, jump_times, jump_from, jump_to) with
    jumps in increasing time."""
    n = birth_ok.shape[0]
    cap = i_hi - i_lo + 1
    r_site = np.empty(cap, dtype=np.int64)
    r_time = np.empty(cap, dtype=np.float64)
    r_parent = np.empty(cap, dtype=np.int64)
    cur = np.full(n, -1, dtype=np.int64)
    r_site[0] = target
    r_time[0] = t_target
    r_parent[0] = -1
    cur[target] = 0
    nr = 1
    for i in range(i_hi - 1, i_lo - 1, -1):
        k = kind[i]
        if k == K.AD:
            cur[src[i]] = -1
        elif k == K.AA:
            x = dst[i]
            y = src[i]
            if cur[x] >= 0 and cur[y] < 0 and birth_ok[y]:
                r_site[nr] = y
                r_time[nr] = time[i]
                r_parent[nr] = cur[x]
                cur[y] = nr
                nr += 1
    start = -1
    for s in range(n):
        if sources[s] and cur[s] >= 0:
            start = s
            break
    if start < 0:
        return False, np.empty(0), np.empty(0, np.int64), np.empty(0, np.int64)
    m = 0
    r = cur[start]
    while r_parent[r] >= 0:
        m += 1
        r = r_parent[r]
    jt = np.empty(m, dtype=np.float64)
    jf = np.empty(m, dtype=np.int64)
    jto = np.empty(m, dtype=np.int64)
    r = cur[start]
    q = 0
    while r_parent[r] >= 0:
        jt[q] = r_time[r]
        jf[q] = r_site[r]
        jto[q] = r_site[r_parent[r]]
        r = r_parent[r]
        q += 1
    return True, jt, jf, jto


@dataclass(frozen=True)
class PathDiagnostics:
    jump_count: int
    min_birth_window: float
    per_target: tuple[tuple[Site, float, int, float], ...]
    unreachable: tuple[tuple[Site, float], ...]


def path_diagnostics(
    log: EventLog,
    animal_traj: Trajectory,
    targets: Iterable[tuple[Site, float]],
    sources: Iterable[Site] | None = None,
) -> PathDiagnostics:
    """Jump counts and birth windows along one witnessing animal path per target.

    Paths start at time ``animal_traj.t_start`` from ``sources`` (default:
    every site occupied by animals then) and end at each (site, time)
    target. After a jump a -> b at time u the birth window runs until the
    earliest of the next jump, a death at a or b, or the end of the path.
    Targets with no path are reported as unreachable and excluded.
    """
    w = log.window
    t0 = animal_traj.t_start
    init_a = animal_traj.initial.animal_mask
    src_mask = init_a.copy() if sources is None else np.zeros(w.n_sites, np.bool_)
    if sources is not None:
        for s in sources:
            i = w.index(s)
            src_mask[i] = init_a[i]
    birth_ok = w.birth_ok if animal_traj.truncated else np.ones(w.n_sites, np.bool_)
    deaths = {}
    sel = log.kind == MarkKind.ANIMAL_DEATH
    for i in np.unique(log.src[sel]):
        deaths[int(i)] = log.time[sel & (log.src == i)]

    def next_death(site: int, u: float) -> float:
        d = deaths.get(site)
        if d is None:
            return math.inf
        k = int(np.searchsorted(d, u, side="right"))
        return float(d[k]) if k < len(d) else math.inf

    total_jumps = 0
    min_window = math.inf
    per_target = []
    unreachable = []
    for site, t in targets:
        i_lo, i_hi = log.index_range(t0, t)
        ok, jt, jf, jto = _witness(log.kind, log.time, log.src, log.dst, birth_ok, i_lo, i_hi,
                                   w.index(site), float(t), src_mask)
        if not ok:
            unreachable.append((tuple(site), float(t)))
            continue
        windows = []
        for q in range(len(jt)):
            u = float(jt[q])
            end = float(jt[q + 1]) if q + 1 < len(jt) else float(t)
            end = min(end, next_death(int(jf[q]), u), next_death(int(jto[q]), u))
            windows.append(end - u)
        wmin = min(windows) if windows else math.inf
        total_jumps += len(jt)
        min_window = min(min_window, wmin)
        per_target.append((tuple(site), float(t), len(jt), wmin))
    return PathDiagnostics(total_jumps, min_window, tuple(per_target), tuple(unreachable))


def block_targets(spec: BlockSpec, traj: Trajectory) -> list[tuple[Site, float]]:
    """Targets for the animal paths behind event A: the first cube x + [-n, n]^d
    (x in [0, L)^d) fully occupied by animals at T + 1, or the best-covered one."""
    w = traj.initial.window
    t = spec.T + 1.0
    mask = traj.state_at(t).animal_mask
    cb = _cube_index(w, spec, "A")
    cover = mask[cb.cubes].sum(axis=1)
    c = int(np.argmax(cover))
    return [(w.site(int(s)), t) for s in cb.cubes[c]]


def threshold_heuristic(jumps: np.ndarray, windows: np.ndarray, epsilon: float) -> dict:
    """Quantile thresholds N0 (jumps, upper 1-eps) and w0 (window, lower eps)
    and the fraction of replicates meeting both."""
    jumps = np.asarray(jumps, dtype=float)
    windows = np.asarray(windows, dtype=float)
    n0 = float(np.quantile(jumps, 1 - epsilon, method="higher"))
    w0 = float(np.quantile(windows, epsilon, method="lower"))
    frac = float(np.mean((jumps <= n0) & (windows >= w0)))
    return {"N0": n0, "omega0": w0, "fraction": frac, "target": 1 - 2 * epsilon}


def estimate_blocks(
    spec: BlockSpec,
    rates: Rates,
    dim: int,
    reps: int,
    seed: int,
    burn_in: float = 10.0,
    threads: int = 1,
    diagnostics: bool = True,
) -> dict:
    """Monte Carlo estimates of both block events plus N-statistics and path diagnostics."""
    w = spec.window(dim)
    L_bdry = spec.truncation

    def one(r: int):
        log = block_log(spec, rates, dim, derive_seed(seed, r), burn_in)
        ev_a, ev_b = block_events_on_log(spec, log)
        start = cube_start(log, spec.n)
        traj = run_forward(log, start, 0.0, spec.T + 1.0)
        n_val = compute_N(traj, L_bdry, spec.T).value
        n_plus = compute_N(traj, L_bdry, spec.T, plus=True).value
        jumps, window_min = 0, math.inf
        if diagnostics:
            atraj = run_forward(log, start, 0.0, spec.T + 1.0, fleas_on=False)
            diag = path_diagnostics(log, atraj, block_targets(spec, atraj), w.cube(spec.n))
            jumps, window_min = diag.jump_count, diag.min_birth_window
        return ev_a, ev_b, n_val, n_plus, jumps, window_min

    rows = map_replicates(one, reps, threads)
    arr = np.array(rows, dtype=float).reshape(reps, 6)
    out = {
        "event_A": EstimateWithCI.from_counts(int(arr[:, 0].sum()), reps).to_dict(),
        "event_B": EstimateWithCI.from_counts(int(arr[:, 1].sum()), reps).to_dict(),
        "N_stats": {
            "boundary_L": L_bdry,
            "N_mean": float(arr[:, 2].mean()),
            "N_plus_mean": float(arr[:, 3].mean()),
            "N_quantiles": [float(q) for q in np.quantile(arr[:, 2], [0.5, 0.9, 0.99])],
        },
    }
    if diagnostics:
        windows = np.where(np.isinf(arr[:, 5]), np.finfo(float).max, arr[:, 5])
        out["diagnostics"] = threshold_heuristic(arr[:, 4], windows, spec.epsilon)
        out["diagnostics"]["jump_quantiles"] = [float(q) for q in np.quantile(arr[:, 4], [0.5, 0.9, 1 - spec.epsilon])]
    return out


def coupled_block_events(spec: BlockSpec, log: EventLog, mu_values: Sequence[float] = (), lambda_values: Sequence[float] = ()) -> dict:
    """Block events on thinned copies of one log (monotone coupling in mu and lambda)."""
    out = {}
    for mu in mu_values:
        out[("mu", float(mu))] = block_events_on_log(spec, thin_log(log, mu_sub=mu))
    for lam in lambda_values:
        out[("lambda", float(lam))] = block_events_on_log(spec, thin_log(log, lambda_sub=lam))
    return out
