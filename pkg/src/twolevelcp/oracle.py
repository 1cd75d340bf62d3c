"""Exact transient laws on tiny windows.

The generator is built straight from the rate table (not from the
graphical rules used by the simulator), so it is an independent check:

    0 -> 1, 2 -> 3  at rate lambda * (hosted neighbours)
    1 -> 0, 3 -> 2  at rate 1
    1 -> 3          at rate mu * (neighbours in state 3)
    2 -> 0          at rate delta

Only in-window neighbours allowed to give birth are counted. States are
encoded in base 4 with site 0 as the least significant digit.
"""
from __future__ import annotations

from dataclasses import dataclass
from typing import Callable, Iterable

import numpy as np
import scipy.sparse as sp
from scipy.integrate import solve_ivp
from scipy.linalg import expm
from scipy.stats import poisson

from .events import Rates
from .lattice import Configuration, Site, Window

MAX_STATES = 65536
UNIFORMIZATION_TOL = 1e-10


@dataclass(frozen=True, eq=False)
class GeneratorMatrix:
    window: Window
    rates: Rates
    Q: sp.csr_matrix
    digits: np.ndarray  # (4**k, k) site states of each encoded state

    @property
    def n_states(self) -> int:
        return self.Q.shape[0]

    def code(self, c: Configuration) -> int:
        return int(np.dot(c.states.astype(np.int64), 4 ** np.arange(c.states.shape[0])))

    def configuration(self, code: int) -> Configuration:
        return Configuration(self.window, self.digits[code])


def _digits(k: int) -> np.ndarray:
    codes = np.arange(4**k, dtype=np.int64)
    return ((codes[:, None] // 4 ** np.arange(k)) % 4).astype(np.uint8)


def build_generator(window: Window, rates: Rates) -> GeneratorMatrix:
    k = window.n_sites
    if 4**k > MAX_STATES:
        raise ValueError(f"window with {k} sites has 4^{k} states; at most {MAX_STATES} supported")
    digits = _digits(k)
    codes = np.arange(4**k, dtype=np.int64)
    animal = (digits & 1).astype(np.int64)
    full = (digits == 3).astype(np.int64)
    nb = window.neighbors
    ok = window.birth_ok
    rows, cols, vals = [], [], []

    def add(sel, rate, site, delta_digit):
        idx = codes[sel]
        r = np.broadcast_to(rate, sel.shape)[sel].astype(float)
        keep = r > 0
        rows.append(idx[keep])
        cols.append(idx[keep] + delta_digit * 4**site)
        vals.append(r[keep])

    for i in range(k):
        hosted = np.zeros(len(codes), dtype=np.int64)
        fleas_hosted = np.zeros(len(codes), dtype=np.int64)
        for j in nb[i]:
            if j >= 0 and ok[j]:
                hosted += animal[:, j]
                fleas_hosted += full[:, j]
        s = digits[:, i]
        add(s == 0, rates.lam * hosted, i, +1)
        add(s == 2, rates.lam * hosted, i, +1)
        add(s == 1, np.float64(rates.animal_death), i, -1)
        add(s == 3, np.float64(rates.animal_death), i, -1)
        add(s == 1, rates.mu * fleas_hosted, i, +2)
        add(s == 2, np.float64(rates.delta), i, -2)

    r = np.concatenate(rows) if rows else np.zeros(0, np.int64)
    c = np.concatenate(cols) if cols else np.zeros(0, np.int64)
    v = np.concatenate(vals) if vals else np.zeros(0)
    n = len(codes)
    off = sp.coo_matrix((v, (r, c)), shape=(n, n)).tocsr()
    diag = -np.asarray(off.sum(axis=1)).ravel()
    Q = (off + sp.diags(diag)).tocsr()
    return GeneratorMatrix(window, rates, Q, digits)


def _as_vector(gen: GeneratorMatrix, init) -> np.ndarray:
    if isinstance(init, Configuration):
        v = np.zeros(gen.n_states)
        v[gen.code(init)] = 1.0
        return v
    if np.isscalar(init):
        v = np.zeros(gen.n_states)
        v[int(init)] = 1.0
        return v
    v = np.asarray(init, dtype=float)
    if v.shape != (gen.n_states,):
        raise ValueError("initial law has the wrong length")
    return v


def uniformization_terms(rate_t: float, tol: float = UNIFORMIZATION_TOL) -> int:
    """Smallest N with P(Poisson(rate_t) > N) < tol."""
    n = int(np.ceil(rate_t + 10 * np.sqrt(rate_t) + 10))
    while poisson.sf(n, rate_t) >= tol:
        n *= 2
    lo, hi = 0, n
    while lo < hi:
        mid = (lo + hi) // 2
        if poisson.sf(mid, rate_t) < tol:
            hi = mid
        else:
            lo = mid + 1
    return lo


def transient_distribution(gen: GeneratorMatrix | sp.spmatrix, init, t: float, tol: float = UNIFORMIZATION_TOL) -> np.ndarray:
    """Row vector init * exp(Q t) by uniformization.

    With uniformization rate Lam = max exit rate, the series is truncated at
    the first N whose Poisson(Lam t) tail is below ``tol``; the dropped mass
    is at most ``tol`` in total variation.
    """
    if t < 0:
        raise ValueError("t must be nonnegative")
    Q = gen.Q if isinstance(gen, GeneratorMatrix) else sp.csr_matrix(gen)
    v = _as_vector(gen, init) if isinstance(gen, GeneratorMatrix) else np.asarray(init, dtype=float)
    lam = float(-Q.diagonal().min()) if Q.shape[0] else 0.0
    if t == 0 or lam == 0:
        return v.copy()
    P_T = (sp.identity(Q.shape[0], format="csr") + Q / lam).T.tocsr()
    N = uniformization_terms(lam * t, tol)
    weights = poisson.pmf(np.arange(N + 1), lam * t)
    acc = weights[0] * v
    term = v
    for n in range(1, N + 1):
        term = P_T @ term
        acc += weights[n] * term
    return acc


def exact_hitting(gen: GeneratorMatrix, init, t: float, predicate: Callable[[Configuration], bool]) -> float:
    dist = transient_distribution(gen, init, t)
    total = 0.0
    for code in np.flatnonzero(dist):
        if predicate(gen.configuration(int(code))):
            total += dist[code]
    return float(total)


def total_variation(p: np.ndarray, q: np.ndarray) -> float:
    return 0.5 * float(np.abs(np.asarray(p) - np.asarray(q)).sum())


def animal_generator(window: Window, lam: float) -> np.ndarray:
    """Dense generator of the animal contact process on subsets (bitmask over sites)."""
    k = window.n_sites
    n = 2**k
    Q = np.zeros((n, n))
    nb = window.neighbors
    ok = window.birth_ok
    for a in range(n):
        for x in range(k):
            if a >> x & 1:
                Q[a, a ^ (1 << x)] += 1.0
            else:
                births = sum(1 for j in nb[x] if j >= 0 and ok[j] and a >> j & 1)
                if births:
                    Q[a, a | (1 << x)] += lam * births
        Q[a, a] = -Q[a].sum()
    return Q


def _mask_bits(window: Window, sites: Iterable[Site | int]) -> int:
    m = 0
    for s in sites:
        m |= 1 << window.index(s)
    return m


def exact_duality_sides(
    window: Window,
    rates: Rates,
    B: Iterable[Site | int],
    C: Iterable[Site | int],
    D: Iterable[Site | int],
    t: float,
    animal_law: np.ndarray | None = None,
) -> tuple[float, float]:
    """Both sides of the duality identity computed exactly.

    lhs: P(A_t meets C, B_t meets D) for animals ~ ``animal_law`` (over
    bitmask subsets, default uniform) and fleas on B, via uniformization on
    the full generator.

    rhs: the flea dual from D is run backwards from t alongside the
    time-reversed animal chain, whose rates at real time u are
    p_u(b) q(b, a) / p_u(a). The joint (animals, dual set) process is Markov
    in reverse time; its law is integrated numerically and the mass with
    A_t meeting C and dual-at-0 meeting B is returned.
    """
    k = window.n_sites
    n_a = 2**k
    pi = np.full(n_a, 1.0 / n_a) if animal_law is None else np.asarray(animal_law, float)
    bB, bC, bD = (_mask_bits(window, S) for S in (B, C, D))

    gen = build_generator(window, rates)
    init = np.zeros(gen.n_states)
    for a in range(n_a):
        states = np.array([(a >> i & 1) | (2 if bB >> i & 1 else 0) for i in range(k)], dtype=np.int64)
        init[int(np.dot(states, 4 ** np.arange(k)))] += pi[a]
    dist = transient_distribution(gen, init, t, tol=1e-13)
    a_bits = (gen.digits & 1).astype(np.int64) @ (1 << np.arange(k))
    b_bits = ((gen.digits >> 1) & 1).astype(np.int64) @ (1 << np.arange(k))
    lhs = float(dist[((a_bits & bC) != 0) & ((b_bits & bD) != 0)].sum())

    QA = animal_generator(window, rates.lam)
    nb = window.neighbors
    ok = window.birth_ok
    # dual generator blocks, one per animal configuration
    dual_Q = np.zeros((n_a, n_a, n_a))
    for a in range(n_a):
        for S in range(n_a):
            for x in range(k):
                if not S >> x & 1:
                    continue
                if not a >> x & 1:
                    dual_Q[a, S, S ^ (1 << x)] += rates.delta
                    continue
                for y in nb[x]:
                    if y >= 0 and ok[y] and a >> y & 1 and not S >> y & 1:
                        dual_Q[a, S, S | (1 << y)] += rates.mu
            dual_Q[a, S, S] = -dual_Q[a, S].sum()

    def p_at(u: float) -> np.ndarray:
        return pi @ expm(QA * u)

    def rhs_fun(r, m):
        m = m.reshape(n_a, n_a)
        p = p_at(t - r)
        rev = QA.T * p[None, :] / p[:, None]  # rev[a, b] = p(b) QA[b, a] / p(a)
        np.fill_diagonal(rev, 0.0)
        np.fill_diagonal(rev, -rev.sum(axis=1))
        out = rev.T @ m
        out += np.einsum("as,ast->at", m, dual_Q)
        return out.ravel()

    m0 = np.zeros((n_a, n_a))
    p_t = p_at(t)
    for a in range(n_a):
        if a & bC:
            m0[a, bD] = p_t[a]
    if t == 0:
        mt = m0
    else:
        sol = solve_ivp(rhs_fun, (0.0, t), m0.ravel(), method="DOP853", rtol=1e-12, atol=1e-15)
        if not sol.success:
            raise RuntimeError(sol.message)
        mt = sol.y[:, -1].reshape(n_a, n_a)
    hit = np.array([(S & bB) != 0 for S in range(n_a)])
    rhs = float(mt[:, hit].sum())
    return lhs, rhs
