"""Composite experiments: survival scans, dual block events, factorization test."""
from __future__ import annotations

import csv
import io
import json
import math
from dataclasses import dataclass, field
from typing import Iterable, Sequence

import numpy as np

from . import _kernels as K
from .blocks import BlockSpec, dual_block_events_on_log
from .dual import run_flea_dual
from .events import Rates, generate_log, thinning_coins
from .lattice import FLEAS, Configuration, Site, Window, as_site
from .parallel import map_replicates
from .rng import THIN_SALT, derive_seed
from .simulate import burn_in_animals, run_forward
from .stats import EstimateWithCI

DEFAULT_SPEED = 2.0


# ---------------------------------------------------------------------------
# survival scan


@dataclass(frozen=True)
class SurvivalCurve:
    mu_grid: tuple[float, ...]
    estimates: tuple[EstimateWithCI, ...]
    per_seed: np.ndarray = field(repr=False)  # (reps, len(mu_grid)) survival indicators

    @property
    def monotone_per_seed(self) -> bool:
        return bool(np.all(np.diff(self.per_seed.astype(np.int8), axis=1) >= 0))

    def crossing(self, level: float = 0.5) -> float | None:
        """First mu where the point estimates cross ``level`` (linear interpolation)."""
        p = [e.point for e in self.estimates]
        mu = self.mu_grid
        for i in range(len(p)):
            if p[i] >= level:
                if i == 0:
                    return mu[0]
                return mu[i - 1] + (level - p[i - 1]) * (mu[i] - mu[i - 1]) / (p[i] - p[i - 1])
        return None

    def to_dict(self) -> dict:
        return {
            "mu": list(self.mu_grid),
            "survival": [e.to_dict() for e in self.estimates],
            "mu_star": self.crossing(),
            "monotone_per_seed": self.monotone_per_seed,
        }


def survival_scan(
    mu_grid: Sequence[float],
    lam: float,
    delta: float,
    window: Window,
    horizon: float,
    reps: int,
    seed: int,
    cube: int = 0,
    burn_in: float = 10.0,
    threads: int = 1,
) -> SurvivalCurve:
    """P(fleas alive at ``horizon``) from fleas on [-cube, cube]^d, for each mu.

    One log per replicate is generated at max(mu_grid); the other values
    reuse it through thinning, so each replicate's curve is nondecreasing.
    """
    mus = tuple(sorted(float(m) for m in mu_grid))
    if not mus:
        raise ValueError("empty mu grid")
    if horizon <= 0:
        raise ValueError("horizon must be positive")
    top = Rates(lam, mus[-1], delta)
    birth_ok = window.birth_ok
    sites = window.cube(cube)

    def one(r: int) -> list[bool]:
        log = generate_log(window, (-burn_in, horizon), top, derive_seed(seed, r))
        start = burn_in_animals(log).with_fleas_on(sites).states
        # same coins as thin_log, applied in place instead of copying the log
        coins = thinning_coins(log.key, THIN_SALT)
        i0, i1 = log.index_range(0.0, horizon)
        out = []
        for mu in mus:
            keep = mu / top.mu if top.mu > 0 else 1.0
            n_b = K.run_thinned(start.copy(), log.kind, log.src, log.dst, birth_ok, coins, keep, i0, i1)
            out.append(n_b > 0)
        return out

    ind = np.array(map_replicates(one, reps, threads), dtype=np.bool_).reshape(reps, len(mus))
    ests = tuple(EstimateWithCI.from_counts(int(ind[:, j].sum()), reps) for j in range(len(mus)))
    return SurvivalCurve(mus, ests, ind)


# ---------------------------------------------------------------------------
# dual block events


def dual_block_estimate(
    spec: BlockSpec,
    rates: Rates,
    dim: int,
    anchor: float,
    reps: int,
    seed: int,
    D: Iterable[Site] | None = None,
    burn_in: float = 10.0,
    threads: int = 1,
) -> tuple[EstimateWithCI, EstimateWithCI]:
    """Block events A and B for the truncated flea dual anchored at ``anchor``.

    Each log covers [anchor - T - 1 - burn_in, anchor]; the animals are burned
    in over the first ``burn_in`` units and run truncated afterwards.
    """
    if burn_in <= 0:
        raise ValueError("burn_in must be positive")
    w = spec.window(dim)
    D = None if D is None else [as_site(s, dim) for s in D]
    t0 = anchor - spec.T - 1.0 - burn_in

    def one(r: int) -> tuple[bool, bool]:
        log = generate_log(w, (t0, anchor), rates, derive_seed(seed, r))
        return dual_block_events_on_log(spec, log, anchor, D)

    res = np.array(map_replicates(one, reps, threads), dtype=np.bool_).reshape(reps, 2)
    return (EstimateWithCI.from_counts(int(res[:, 0].sum()), reps),
            EstimateWithCI.from_counts(int(res[:, 1].sum()), reps))


# ---------------------------------------------------------------------------
# factorization test


def product_estimate(a: EstimateWithCI, b: EstimateWithCI) -> tuple[float, float, float, float]:
    """(point, low, high, half-width) for a product of two estimates.

    The interval multiplies the endpoint bounds; the half-width is the
    delta-method one from the two half-widths.
    """
    point = a.point * b.point
    hw = math.hypot(b.point * a.half_width, a.point * b.half_width)
    return point, a.ci_low * b.ci_low, a.ci_high * b.ci_high, hw


@dataclass(frozen=True)
class ConvergenceRow:
    t: float
    lhs: EstimateWithCI
    survive: EstimateWithCI
    hit_all: EstimateWithCI
    nonintersection: EstimateWithCI

    @property
    def rhs(self) -> float:
        return self.survive.point * self.hit_all.point

    @property
    def rhs_ci(self) -> tuple[float, float]:
        _, lo, hi, _ = product_estimate(self.survive, self.hit_all)
        return lo, hi

    @property
    def residual(self) -> float:
        return abs(self.lhs.point - self.rhs)

    @property
    def residual_half_width(self) -> float:
        return math.hypot(self.lhs.half_width, product_estimate(self.survive, self.hit_all)[3])


@dataclass(frozen=True)
class ConvergenceReport:
    config: dict
    rows: tuple[ConvergenceRow, ...]

    @property
    def t_grid(self) -> list[float]:
        return [r.t for r in self.rows]

    def decreasing(self, attr: str, slack: float = 2.0) -> bool:
        """Each step t_i -> t_{i+1} may rise by at most ``slack`` pooled half-widths."""
        for a, b in zip(self.rows, self.rows[1:]):
            if attr == "residual":
                va, vb, ha, hb = a.residual, b.residual, a.residual_half_width, b.residual_half_width
            else:
                ea, eb = getattr(a, attr), getattr(b, attr)
                va, vb, ha, hb = ea.point, eb.point, ea.half_width, eb.half_width
            if vb > va + slack * math.hypot(ha, hb):
                return False
        return True

    def to_dict(self) -> dict:
        return {
            "config": self.config,
            "rows": [
                {
                    "t": r.t,
                    "lhs": r.lhs.to_dict(),
                    "rhs": {"p": r.rhs, "ci": list(r.rhs_ci)},
                    "survive_half": r.survive.to_dict(),
                    "hit_from_all_half": r.hit_all.to_dict(),
                    "residual": r.residual,
                    "residual_half_width": r.residual_half_width,
                    "nonintersection": r.nonintersection.to_dict(),
                }
                for r in self.rows
            ],
        }

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2)

    def to_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["t", "lhs", "lhs_lo", "lhs_hi", "rhs", "rhs_lo", "rhs_hi", "residual",
                    "residual_hw", "nonintersection", "nonint_lo", "nonint_hi"])
        f = lambda v: format(float(v), ".17g")  # noqa: E731
        for r in self.rows:
            lo, hi = r.rhs_ci
            w.writerow([f(r.t), f(r.lhs.point), f(r.lhs.ci_low), f(r.lhs.ci_high), f(r.rhs), f(lo), f(hi),
                        f(r.residual), f(r.residual_half_width), f(r.nonintersection.point),
                        f(r.nonintersection.ci_low), f(r.nonintersection.ci_high)])
        return buf.getvalue()


def required_radius(B: Iterable[Site], D: Iterable[Site], t_max: float, speed: float = DEFAULT_SPEED) -> float:
    """diameter(B u D) / 2 + speed * t_max, with the sup-norm diameter."""
    pts = np.array([*B, *D], dtype=float)
    diam = float(np.max(np.abs(pts[:, None, :] - pts[None, :, :]).max(axis=2))) if len(pts) else 0.0
    return diam / 2 + speed * t_max


def _convergence_one(log, window, b_mask, d_mask, t):
    animals = burn_in_animals(log)
    start = Configuration(window, animals.states | np.where(b_mask, FLEAS, 0).astype(np.uint8))
    if t == 0:
        hit = bool(np.any(b_mask & d_mask))
        return hit, True, bool(np.any(d_mask)), False
    traj = run_forward(log, start, 0.0, t)
    lhs = bool(np.any(traj.final.flea_mask & d_mask))
    half = traj.state_at(t / 2).flea_mask
    survive = bool(np.any(half))
    everywhere = animals.states | FLEAS
    i0, i1 = log.index_range(0.0, t / 2)
    K.run_marks(everywhere, log.kind, log.time, log.src, log.dst, window.birth_ok, i0, i1, 0.0, True, False, np.empty(0))
    hit_all = bool(np.any(((everywhere & FLEAS) != 0) & d_mask))
    dual = run_flea_dual(log, [window.site(i) for i in np.flatnonzero(d_mask)], t, t / 2, traj).final_mask
    nonint = survive and bool(dual.any()) and not bool(np.any(dual & half))
    return lhs, survive, hit_all, nonint


def convergence_test(
    window: Window,
    rates: Rates,
    B: Iterable[Site | int],
    D: Iterable[Site | int],
    t_grid: Sequence[float],
    reps: int,
    seed: int,
    burn_in: float = 10.0,
    speed: float = DEFAULT_SPEED,
    threads: int = 1,
) -> ConvergenceReport:
    """Estimate lhs(t), both rhs(t) factors and the non-intersection event per t.

    Per replicate one log on [-burn_in, t] carries the animal burn-in, the
    forward run from B, the run from fleas everywhere and the flea dual from
    D anchored at t and read at t/2. Refuses to run if the window radius is
    below diameter(B u D)/2 + speed * max(t_grid).
    """
    dim = window.dim
    B = [as_site(s, dim) for s in B]
    D = [as_site(s, dim) for s in D]
    if not B or not D:
        raise ValueError("B and D must be nonempty")
    if window.truncation is not None:
        raise ValueError("convergence test expects an untruncated window")
    ts = [float(t) for t in t_grid]
    if not ts or min(ts) < 0:
        raise ValueError("t_grid must be nonempty and nonnegative")
    need = required_radius(B, D, max(ts), speed)
    if window.radius < need:
        raise ValueError(f"window radius {window.radius} below padding requirement {need:g} (speed {speed})")
    b_mask = np.zeros(window.n_sites, np.bool_)
    d_mask = np.zeros(window.n_sites, np.bool_)
    b_mask[window.indices(B)] = True
    d_mask[window.indices(D)] = True

    rows = []
    for j, t in enumerate(ts):
        def one(r: int, t=t, j=j):
            log = generate_log(window, (-burn_in, max(t, 1e-9)), rates, derive_seed(seed, j, r))
            return _convergence_one(log, window, b_mask, d_mask, t)

        res = np.array(map_replicates(one, reps, threads), dtype=np.bool_).reshape(reps, 4)
        est = [EstimateWithCI.from_counts(int(res[:, k].sum()), reps) for k in range(4)]
        rows.append(ConvergenceRow(t, *est))
    config = {
        "dim": dim, "lo": list(window.lo), "hi": list(window.hi),
        "lambda": rates.lam, "mu": rates.mu, "delta": rates.delta,
        "B": [list(s) for s in B], "D": [list(s) for s in D],
        "t_grid": ts, "reps": reps, "seed": seed, "burn_in": burn_in, "speed": speed,
    }
    return ConvergenceReport(config, tuple(rows))


def window_sensitivity(window: Window, rates: Rates, B, D, t: float, reps: int, seed: int, **kw) -> dict:
    """Rerun one t on the window and on its doubled-radius copy."""
    big = Window.centered(window.dim, 2 * window.radius)
    a = convergence_test(window, rates, B, D, [t], reps, seed, **kw).rows[0]
    b = convergence_test(big, rates, B, D, [t], reps, seed, **kw).rows[0]
    return {"radius": [window.radius, big.radius], "hit_from_all_half": [a.hit_all.to_dict(), b.hit_all.to_dict()]}
