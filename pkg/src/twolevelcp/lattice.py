"""Finite lattice windows and four-state configurations.

Site states pack two bits: bit 0 is "animal present", bit 1 is "fleas
present", so 0 = empty, 1 = animal only, 2 = fleas only, 3 = both.

Sites outside a window are permanently empty and never send births. With a
truncation radius ``L`` set, sites with sup-norm >= L inside the window can
still be occupied but do not send births either.

Sites are linearized row-major (last axis fastest) over the box
``lo[0]..hi[0] x ... x lo[d-1]..hi[d-1]``; that order is fixed and is the
order used by serialization and by the oracle's base-4 state encoding.
"""
from __future__ import annotations

from dataclasses import dataclass
from enum import IntEnum
from functools import cached_property
from typing import Iterable, Mapping, Sequence

import numpy as np

Site = tuple[int, ...]

ANIMAL = 1
FLEAS = 2


class SiteState(IntEnum):
    EMPTY = 0
    ANIMAL = 1
    FLEAS = 2
    BOTH = 3

    @property
    def has_animal(self) -> bool:
        return bool(self & ANIMAL)

    @property
    def has_fleas(self) -> bool:
        return bool(self & FLEAS)


class WindowMismatch(ValueError):
    pass


@dataclass(frozen=True)
class Window:
    """Integer box containing the origin, plus an optional birth truncation.

    Use :meth:`centered` for the usual ``[-r, r]^d`` window; the raw
    constructor takes per-axis lower and upper bounds (needed e.g. for a
    two-site window ``{0, 1}``).
    """

    lo: tuple[int, ...]
    hi: tuple[int, ...]
    truncation: int | None = None

    def __post_init__(self) -> None:
        lo = tuple(int(v) for v in self.lo)
        hi = tuple(int(v) for v in self.hi)
        object.__setattr__(self, "lo", lo)
        object.__setattr__(self, "hi", hi)
        if not lo or len(lo) != len(hi):
            raise ValueError("lo and hi must be nonempty and of equal length")
        for a, b in zip(lo, hi):
            if not a <= 0 <= b:
                raise ValueError(f"window axis [{a}, {b}] must contain the origin")
        if self.truncation is not None:
            L = int(self.truncation)
            object.__setattr__(self, "truncation", L)
            if L < 1:
                raise ValueError("truncation radius must be a positive integer")
            if L > self.radius:
                raise ValueError(
                    f"truncation radius {L} exceeds window radius {self.radius}"
                )

    @classmethod
    def centered(cls, dim: int, radius: int | Sequence[int], truncation: int | None = None) -> Window:
        if dim < 1:
            raise ValueError("dimension must be positive")
        radii = (radius,) * dim if isinstance(radius, (int, np.integer)) else tuple(radius)
        if len(radii) != dim or any(r < 0 for r in radii):
            raise ValueError("need one nonnegative radius per axis")
        return cls(tuple(-r for r in radii), tuple(radii), truncation)

    @classmethod
    def line(cls, k: int) -> Window:
        """The k-site window {0, ..., k-1} in one dimension."""
        if k < 1:
            raise ValueError("k must be positive")
        return cls((0,), (k - 1,))

    def with_truncation(self, truncation: int | None) -> Window:
        return Window(self.lo, self.hi, truncation)

    @property
    def dim(self) -> int:
        return len(self.lo)

    @property
    def radius(self) -> int:
        """Smallest per-axis extent from the origin (max of both sides)."""
        return min(max(-a, b) for a, b in zip(self.lo, self.hi))

    @property
    def shape(self) -> tuple[int, ...]:
        return tuple(b - a + 1 for a, b in zip(self.lo, self.hi))

    @property
    def n_sites(self) -> int:
        return int(np.prod(self.shape))

    @cached_property
    def coords(self) -> np.ndarray:
        axes = [np.arange(a, b + 1) for a, b in zip(self.lo, self.hi)]
        grid = np.meshgrid(*axes, indexing="ij")
        out = np.stack([g.ravel() for g in grid], axis=1).astype(np.int64)
        out.flags.writeable = False
        return out

    @cached_property
    def _strides(self) -> tuple[int, ...]:
        strides = []
        acc = 1
        for n in reversed(self.shape):
            strides.append(acc)
            acc *= n
        return tuple(reversed(strides))

    def contains(self, site: Site) -> bool:
        return len(site) == self.dim and all(a <= x <= b for x, a, b in zip(site, self.lo, self.hi))

    def index(self, site: Site | int) -> int:
        site = as_site(site, self.dim)
        if not self.contains(site):
            raise ValueError(f"site {site} outside window")
        return sum((x - a) * s for x, a, s in zip(site, self.lo, self._strides))

    def site(self, i: int) -> Site:
        return tuple(int(v) for v in self.coords[i])

    def indices(self, sites: Iterable[Site | int]) -> np.ndarray:
        return np.array([self.index(s) for s in sites], dtype=np.int64)

    @cached_property
    def neighbors(self) -> np.ndarray:
        """(n_sites, 2d) neighbor indices; direction 2a is +e_a, 2a+1 is -e_a; -1 if outside."""
        n, d = self.n_sites, self.dim
        out = np.full((n, 2 * d), -1, dtype=np.int64)
        c = self.coords
        idx = np.arange(n)
        for a in range(d):
            s = self._strides[a]
            out[c[:, a] < self.hi[a], 2 * a] = idx[c[:, a] < self.hi[a]] + s
            out[c[:, a] > self.lo[a], 2 * a + 1] = idx[c[:, a] > self.lo[a]] - s
        out.flags.writeable = False
        return out

    @cached_property
    def sup_norm(self) -> np.ndarray:
        out = np.abs(self.coords).max(axis=1)
        out.flags.writeable = False
        return out

    @cached_property
    def birth_ok(self) -> np.ndarray:
        """Sites allowed to send births under this window's truncation."""
        if self.truncation is None:
            out = np.ones(self.n_sites, dtype=np.bool_)
        else:
            out = self.sup_norm < self.truncation
        out.flags.writeable = False
        return out

    def cube(self, n: int, center: Site | None = None) -> list[Site]:
        """Sites of (center + [-n, n]^d) inside the window."""
        center = (0,) * self.dim if center is None else center
        mask = np.all(np.abs(self.coords - np.asarray(center)) <= n, axis=1)
        return [self.site(i) for i in np.flatnonzero(mask)]


def as_site(site: Site | int, dim: int) -> Site:
    if isinstance(site, (int, np.integer)):
        site = (int(site),)
    site = tuple(int(v) for v in site)
    if len(site) != dim:
        raise ValueError(f"site {site} does not have dimension {dim}")
    return site


class Configuration:
    """Immutable total map from window sites to :class:`SiteState`."""

    __slots__ = ("window", "states")

    def __init__(self, window: Window, states: np.ndarray | Sequence[int]):
        arr = np.array(states, dtype=np.uint8).reshape(-1)
        if arr.shape[0] != window.n_sites:
            raise ValueError(f"expected {window.n_sites} states, got {arr.shape[0]}")
        if arr.size and arr.max() > 3:
            raise ValueError("site states must lie in {0, 1, 2, 3}")
        arr.flags.writeable = False
        object.__setattr__(self, "window", window)
        object.__setattr__(self, "states", arr)

    def __setattr__(self, name, value):
        raise AttributeError("Configuration is immutable")

    @classmethod
    def uniform(cls, window: Window, state: int) -> Configuration:
        return cls(window, np.full(window.n_sites, int(state), dtype=np.uint8))

    @classmethod
    def from_sets(cls, window: Window, animals: Iterable[Site | int] = (), fleas: Iterable[Site | int] = ()) -> Configuration:
        states = np.zeros(window.n_sites, dtype=np.uint8)
        for s in animals:
            states[window.index(s)] |= ANIMAL
        for s in fleas:
            states[window.index(s)] |= FLEAS
        return cls(window, states)

    @classmethod
    def from_mapping(cls, window: Window, mapping: Mapping[Site | int, int]) -> Configuration:
        states = np.zeros(window.n_sites, dtype=np.uint8)
        for s, v in mapping.items():
            states[window.index(s)] = int(v)
        return cls(window, states)

    def __getitem__(self, site: Site | int) -> SiteState:
        return SiteState(int(self.states[self.window.index(site)]))

    def __eq__(self, other: object) -> bool:
        if not isinstance(other, Configuration):
            return NotImplemented
        return self.window == other.window and np.array_equal(self.states, other.states)

    def __hash__(self) -> int:
        return hash((self.window, self.states.tobytes()))

    def __repr__(self) -> str:
        return f"Configuration({self.window!r}, {self.states.tolist()})"

    @property
    def animal_mask(self) -> np.ndarray:
        return (self.states & ANIMAL) != 0

    @property
    def flea_mask(self) -> np.ndarray:
        return (self.states & FLEAS) != 0

    def with_fleas_on(self, sites: Iterable[Site | int]) -> Configuration:
        """Copy with fleas added on ``sites`` (state 3 where hosted, 2 where not)."""
        states = self.states.copy()
        for s in sites:
            states[self.window.index(s)] |= FLEAS
        return Configuration(self.window, states)

    def without_fleas(self) -> Configuration:
        return Configuration(self.window, self.states & ANIMAL)


def animal_set(c: Configuration) -> frozenset[Site]:
    return frozenset(c.window.site(i) for i in np.flatnonzero(c.animal_mask))


def flea_set(c: Configuration) -> frozenset[Site]:
    return frozenset(c.window.site(i) for i in np.flatnonzero(c.flea_mask))


def leq(c1: Configuration, c2: Configuration) -> bool:
    """Partial order: A(c1) within A(c2) and B(c1) within B(c2)."""
    if c1.window != c2.window:
        raise WindowMismatch("configurations live on different windows")
    return not np.any(c1.states & ~c2.states & 3)


def neighbor_counts(c: Configuration, x: Site | int) -> tuple[int, int, int, int]:
    """(n0, n1, n2, n3) over in-window nearest neighbours of ``x``."""
    i = c.window.index(x)
    nb = c.window.neighbors[i]
    counts = np.bincount(c.states[nb[nb >= 0]], minlength=4)
    return tuple(int(v) for v in counts)


def dumps(c: Configuration) -> str:
    w = c.window
    trunc = "none" if w.truncation is None else str(w.truncation)
    lines = [
        f"# dim={w.dim} lo={','.join(map(str, w.lo))} hi={','.join(map(str, w.hi))} truncation={trunc}"
    ]
    for i, s in enumerate(c.states):
        lines.append(f"{','.join(map(str, w.coords[i]))}:{int(s)}")
    return "\n".join(lines) + "\n"


def loads(text: str) -> Configuration:
    lines = [ln for ln in text.splitlines() if ln.strip()]
    if not lines or not lines[0].startswith("#"):
        raise ValueError("missing configuration header")
    fields = dict(tok.split("=", 1) for tok in lines[0][1:].split())
    lo = tuple(int(v) for v in fields["lo"].split(","))
    hi = tuple(int(v) for v in fields["hi"].split(","))
    trunc = None if fields.get("truncation", "none") == "none" else int(fields["truncation"])
    window = Window(lo, hi, trunc)
    if int(fields["dim"]) != window.dim:
        raise ValueError("header dimension disagrees with bounds")
    mapping = {}
    for ln in lines[1:]:
        coord, state = ln.split(":")
        mapping[tuple(int(v) for v in coord.split(","))] = int(state)
    if len(mapping) != window.n_sites:
        raise ValueError("configuration must list every window site exactly once")
    return Configuration.from_mapping(window, mapping)
