"""Oriented site percolation on {(m, n): m + n even, n >= 0}.

Site (m, n) is open iff its keyed uniform is below p, so grids at different
p built from one seed are coupled: every site open at p is open at p' > p.
Row n is reached from row n - 1 through (m - 1, n - 1) and (m + 1, n - 1).
The origin is taken to be open.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from numba import njit

from .parallel import map_replicates
from .rng import combine, derive_seed, unit_open
from .stats import EstimateWithCI


@njit(cache=True, nogil=True)
def _site_uniform(seed, m, n):
    return unit_open(combine(combine(np.uint64(seed), np.uint64(n)), np.uint64(m + 0x40000000)))


@njit(cache=True, nogil=True)
def _grow(seed, p, n_max):
    """Reachable indicator per row, columns m = -n_max..n_max (offset n_max)."""
    width = 2 * n_max + 1
    reach = np.zeros((n_max + 1, width), dtype=np.bool_)
    reach[0, n_max] = True
    died_at = -1
    for n in range(1, n_max + 1):
        alive = False
        for m in range(-n, n + 1, 2):
            j = m + n_max
            from_left = j - 1 >= 0 and reach[n - 1, j - 1]
            from_right = j + 1 < width and reach[n - 1, j + 1]
            if (from_left or from_right) and _site_uniform(seed, m, n) < p:
                reach[n, j] = True
                alive = True
        if not alive:
            died_at = n
            break
    return reach, died_at


@dataclass(frozen=True, eq=False)
class OPGrid:
    p: float
    n_max: int
    seed: int
    reachable: np.ndarray  # (n_max + 1, 2 n_max + 1); column j is m = j - n_max
    died_at: int | None

    def is_open(self, m: int, n: int) -> bool:
        if (m + n) % 2 or n < 0:
            return False
        if n == 0 and m == 0:
            return True
        return bool(_site_uniform(np.uint64(self.seed), m, n) < self.p)

    def row(self, n: int) -> np.ndarray:
        """Reachable m values in row n (sorted)."""
        return np.flatnonzero(self.reachable[n]) - self.n_max

    def l(self, n: int) -> int | None:
        r = self.row(n)
        return int(r[0]) if r.size else None

    def r(self, n: int) -> int | None:
        r = self.row(n)
        return int(r[-1]) if r.size else None

    @property
    def survived(self) -> bool:
        return self.died_at is None


def percolate(p: float, n_max: int, seed: int) -> OPGrid:
    if not 0.0 <= p <= 1.0:
        raise ValueError("p must lie in [0, 1]")
    if n_max < 0:
        raise ValueError("n_max must be nonnegative")
    seed = int(seed) & 0xFFFFFFFFFFFFFFFF
    reach, died = _grow(np.uint64(seed), float(p), int(n_max))
    return OPGrid(float(p), int(n_max), seed, reach, None if died < 0 else int(died))


def l_n(grid: OPGrid, n: int) -> int | None:
    return grid.l(n)


def r_n(grid: OPGrid, n: int) -> int | None:
    return grid.r(n)


def density_between_edges(grid: OPGrid, n: int | None = None) -> float | np.ndarray:
    """Reached fraction of the correct-parity sites in [l_n, r_n].

    With ``n`` given returns that row's fraction and raises on a dead row;
    otherwise returns an array over rows with NaN for dead rows.
    """
    if n is not None:
        row = grid.row(n)
        if row.size == 0:
            raise ValueError(f"row {n} is empty: the cluster died at row {grid.died_at}")
        return row.size / ((row[-1] - row[0]) // 2 + 1)
    out = np.full(grid.n_max + 1, np.nan)
    for k in range(grid.n_max + 1):
        if grid.reachable[k].any():
            out[k] = density_between_edges(grid, k)
    return out


def dominate_check(block_p_lower: float, epsilon1: float) -> bool:
    if not (0.0 <= block_p_lower <= 1.0 and 0.0 <= epsilon1 <= 1.0):
        raise ValueError("arguments must lie in [0, 1]")
    return block_p_lower >= 1.0 - epsilon1


def survival_estimate(p: float, n_max: int, reps: int, seed: int, threads: int = 1) -> EstimateWithCI:
    alive = map_replicates(lambda r: percolate(p, n_max, derive_seed(seed, r)).survived, reps, threads)
    return EstimateWithCI.from_counts(int(sum(alive)), reps)


def threshold_sweep(
    epsilons=(0.2, 0.1, 0.05, 0.01), n_max: int = 200, reps: int = 1000, seed: int = 0, threads: int = 1
) -> list[dict]:
    """Empirical OP survival at p = 1 - eps for each comparison threshold eps."""
    return [
        {"epsilon1": float(e), "p": 1.0 - float(e), "survival": survival_estimate(1.0 - e, n_max, reps, seed, threads).to_dict()}
        for e in epsilons
    ]


def compare_rows(p: float, n_max: int, reps: int, seed: int, log_rows=None, threads: int = 1) -> list[dict]:
    """Per-seed summaries: death row, edges and density at each logged row."""
    log_rows = [n_max] if log_rows is None else list(log_rows)

    def one(r: int) -> dict:
        g = percolate(p, n_max, derive_seed(seed, r))
        rows = []
        for n in log_rows:
            alive = g.reachable[n].any()
            rows.append({
                "row": n,
                "l_n": g.l(n),
                "r_n": g.r(n),
                "density": float(density_between_edges(g, n)) if alive else None,
            })
        return {"rep": r, "died_at": g.died_at, "rows": rows}

    return map_replicates(one, reps, threads)
