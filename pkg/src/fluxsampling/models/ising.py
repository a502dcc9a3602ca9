"""Lattice-gas Ising model with a rectangular slit pore, single-spin-flip Metropolis.

The energy is ferromagnetic, ``E = -J sum_<ij> s_i s_j - h sum_i s_i`` in units of
``k_B T0``. The lattice is an ``L x L`` bulk with a ``w x L/2`` pore cut into the
wall beyond the last bulk row and centred along it. Wall cells carry no spin and contribute no
bonds. The bulk wraps around along the wall (columns) and is bounded by flat
walls in the other direction, so the pore is the only wedge-shaped site in the
system.

Lattices are stored as flat site arrays with a padded neighbour table, so the
same kernels handle the pore geometry and the small test blocks.
"""
from __future__ import annotations

import math
import struct
from dataclasses import dataclass

import numba as nb
import numpy as np

_HEADER = struct.Struct("<4sIIB")
_MAGIC = b"ISNG"


@dataclass(frozen=True)
class IsingPoreParams:
    L: int = 60
    w: int = 12
    J: float = 0.8
    h: float = 0.05
    bulk_periodic: bool = True

    def __post_init__(self):
        if not 0 < self.w <= self.L:
            raise ValueError(f"pore width w={self.w} must satisfy 0 < w <= L={self.L}")
        if self.L % 2:
            raise ValueError("L must be even (pore depth is L/2)")

    @property
    def pore_sites(self) -> int:
        return self.w * (self.L // 2)

    @property
    def n_sites(self) -> int:
        return self.L * self.L + self.pore_sites


class IsingState:
    """Spins plus cached integer sums ``[bond_sum, magnetization]``."""

    __slots__ = ("spins", "cache")

    def __init__(self, spins: np.ndarray, cache: np.ndarray):
        self.spins = spins
        self.cache = cache

    def copy(self) -> "IsingState":
        return IsingState(self.spins.copy(), self.cache.copy())

    @property
    def n_up(self) -> int:
        return int((self.cache[1] + self.spins.size) // 2)


class Lattice:
    """Active sites of a 2D grid with a padded nearest-neighbour table.

    ``wrap_rows`` selects the rows whose column index wraps around (a bool
    applies to every row). Duplicate neighbours from wrapping on very narrow
    grids are dropped, so each bond is counted once.
    """

    def __init__(self, mask: np.ndarray, wrap_rows=False):
        mask = np.asarray(mask, dtype=bool)
        rows, cols = mask.shape
        wrap = np.broadcast_to(np.asarray(wrap_rows, dtype=bool), (rows,))
        index = -np.ones(mask.shape, dtype=np.int64)
        coords = np.argwhere(mask)
        index[mask] = np.arange(len(coords))
        nbr = -np.ones((len(coords), 4), dtype=np.int32)
        for k, (r, c) in enumerate(coords):
            slot = 0
            for dr, dc in ((-1, 0), (1, 0), (0, -1), (0, 1)):
                rr, cc = r + dr, c + dc
                if dr == 0 and wrap[r]:
                    cc %= cols
                if 0 <= rr < rows and 0 <= cc < cols and mask[rr, cc]:
                    j = index[rr, cc]
                    if j != k and j not in nbr[k, :slot]:
                        nbr[k, slot] = j
                        slot += 1
        self.mask = mask
        self.index = index
        self.coords = coords
        self.nbr = nbr
        pairs = [(i, j) for i in range(len(coords)) for j in nbr[i] if j > i]
        self.bonds = np.array(pairs, dtype=np.int64).reshape(-1, 2)

    @property
    def n_sites(self) -> int:
        return len(self.coords)


def pore_mask(L: int, w: int) -> np.ndarray:
    """Grid of ``L + L/2`` rows: bulk rows first, then pore rows going into the wall."""
    depth = L // 2
    mask = np.zeros((L + depth, L), dtype=bool)
    mask[:L, :] = True
    c0 = (L - w) // 2
    mask[L:, c0:c0 + w] = True
    return mask


@nb.njit(cache=True, nogil=True)
def _sweep(spins, cache, nbr, acc, raw):
    n = spins.shape[0]
    bsum = cache[0]
    mag = cache[1]
    for a in range(n):
        r = raw[a]
        i = ((r & np.uint64(0xFFFFFFFF)) * np.uint64(n)) >> np.uint64(32)
        u = float(r >> np.uint64(32)) * 2.3283064365386963e-10
        s = spins[i]
        loc = 0
        for m in range(4):
            j = nbr[i, m]
            if j >= 0:
                loc += spins[j]
        if u < acc[(s + 1) >> 1, loc + 4]:
            spins[i] = -s
            bsum -= 2 * s * loc
            mag -= 2 * s
    cache[0] = bsum
    cache[1] = mag


@nb.njit(cache=True, nogil=True)
def _advance(spins, cache, nbr, acc, raw, lower, upper, trace):
    n = spins.shape[0]
    n_sweeps = raw.shape[0]
    for k in range(n_sweeps):
        _sweep(spins, cache, nbr, acc, raw[k])
        lam = (cache[1] + n) // 2
        trace[k] = lam
        if lam < lower or lam >= upper:
            return k + 1, True
    return n_sweeps, False


def acceptance_table(J: float, h: float) -> np.ndarray:
    """``acc[(s+1)/2, sum_nbr + 4] = min(1, exp(-dE))`` for flipping spin ``s``."""
    acc = np.ones((2, 9))
    for si, s in enumerate((-1, 1)):
        for loc in range(-4, 5):
            dE = 2.0 * s * (J * loc + h)
            acc[si, loc + 4] = min(1.0, math.exp(-dE))
    return acc


class IsingModel:
    """Single-spin-flip Metropolis kinetics; one step is one sweep of N attempts.

    The order parameter is the number of up spins.
    """

    name = "ising"
    block_steps = 4
    time_per_step = 1.0
    bin_width = 1.0
    integer_order_parameter = True

    def __init__(self, lattice: Lattice, J: float = 0.8, h: float = 0.05,
                 params: IsingPoreParams | None = None):
        self.lattice = lattice
        self.J = float(J)
        self.h = float(h)
        self.params = params
        self.acc = acceptance_table(self.J, self.h)
        self._nbr = lattice.nbr
        self.n_sites = lattice.n_sites

    @classmethod
    def pore(cls, params: IsingPoreParams | None = None) -> "IsingModel":
        p = params or IsingPoreParams()
        mask = pore_mask(p.L, p.w)
        wrap = np.arange(mask.shape[0]) < p.L if p.bulk_periodic else False
        return cls(Lattice(mask, wrap_rows=wrap), p.J, p.h, params=p)

    def make_state(self, spins) -> IsingState:
        spins = np.ascontiguousarray(spins, dtype=np.int8)
        if spins.shape != (self.n_sites,):
            raise ValueError(f"expected {self.n_sites} spins, got shape {spins.shape}")
        b = self.lattice.bonds
        bsum = int(np.sum(spins[b[:, 0]].astype(np.int64) * spins[b[:, 1]])) if len(b) else 0
        return IsingState(spins, np.array([bsum, int(spins.astype(np.int64).sum())], dtype=np.int64))

    def initial_state(self) -> IsingState:
        return self.make_state(-np.ones(self.n_sites, dtype=np.int8))

    def filled_pore_state(self) -> IsingState:
        """Pore all up, bulk all down."""
        spins = -np.ones(self.n_sites, dtype=np.int8)
        spins[self.pore_site_indices()] = 1
        return self.make_state(spins)

    def pore_site_indices(self) -> np.ndarray:
        if self.params is None:
            return np.empty(0, dtype=np.int64)
        L = self.params.L
        return np.nonzero(self.lattice.coords[:, 0] >= L)[0]

    def copy_state(self, state: IsingState) -> IsingState:
        return state.copy()

    def order_parameter(self, state: IsingState) -> float:
        return float((state.cache[1] + self.n_sites) // 2)

    def energy(self, state: IsingState) -> float:
        return -self.J * float(state.cache[0]) - self.h * float(state.cache[1])

    def draw_noise(self, gen, n_steps):
        return gen.bit_generator.random_raw(n_steps * self.n_sites).reshape(n_steps, self.n_sites)

    def advance(self, state, noise, lower, upper, trace):
        k, stopped = _advance(state.spins, state.cache, self._nbr, self.acc,
                              noise, float(lower), float(upper), trace)
        return k, stopped

    # -- serialization ---------------------------------------------------------
    def to_bytes(self, state: IsingState) -> bytes:
        """Row-major grid, one signed byte per cell (0 marks wall), after a header."""
        mask = self.lattice.mask
        grid = np.zeros(mask.shape, dtype=np.int8)
        grid[mask] = state.spins
        L = self.params.L if self.params else mask.shape[1]
        w = self.params.w if self.params else 0
        return _HEADER.pack(_MAGIC, L, w, 1 if self.params and self.params.bulk_periodic else 0) + grid.tobytes()

    def from_bytes(self, data: bytes) -> IsingState:
        magic, L, w, _ = _HEADER.unpack_from(data)
        if magic != _MAGIC:
            raise ValueError("not an Ising snapshot")
        mask = self.lattice.mask
        grid = np.frombuffer(data, dtype=np.int8, offset=_HEADER.size).reshape(mask.shape)
        return self.make_state(grid[mask].copy())


def ising_energy(spins, lattice: Lattice, J: float, h: float) -> float:
    """Full recomputation by explicit pair enumeration over the neighbour table."""
    spins = np.asarray(spins)
    pair_sum = 0
    for i in range(lattice.n_sites):
        for j in lattice.nbr[i]:
            if j > i:
                pair_sum += int(spins[i]) * int(spins[j])
    return -J * pair_sum - h * int(spins.sum())


def ising_order_param(state: IsingState) -> int:
    return state.n_up


def metropolis_sweep(model: IsingModel, state: IsingState, gen: np.random.Generator) -> IsingState:
    """One sweep of ``N`` single-flip attempts on a copy of ``state``."""
    out = state.copy()
    raw = gen.bit_generator.random_raw(model.n_sites)
    _sweep(out.spins, out.cache, model._nbr, model.acc, raw)
    return out
