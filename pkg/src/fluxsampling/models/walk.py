"""Birth-death chains on a line of integer sites.

These small chains have exactly solvable absorption probabilities and passage
times, which makes them the ground truth for the samplers. The state is a
one-element integer array holding the current site; the order parameter is the
site itself.
"""
from __future__ import annotations

import numba as nb
import numpy as np


@nb.njit(cache=True, nogil=True)
def _advance(state, noise, p_up, p_move, lo, lower, upper, trace):
    x = state[0]
    n = noise.shape[0]
    for k in range(n):
        i = x - lo
        u = noise[k]
        if u < p_up[i]:
            x += 1
        elif u < p_move[i]:
            x -= 1
        trace[k] = x
        if x < lower or x >= upper:
            state[0] = x
            return k + 1, True
    state[0] = x
    return n, False


class BirthDeathChain:
    """Each step moves up with ``p_up[x]``, down with ``p_down[x]``, else stays."""

    name = "birth_death"
    block_steps = 1024
    time_per_step = 1.0
    bin_width = 1.0
    integer_order_parameter = True

    def __init__(self, p_up, p_down, lo: int = 0, start: int | None = None):
        p_up = np.asarray(p_up, dtype=float)
        p_down = np.asarray(p_down, dtype=float)
        if p_up.shape != p_down.shape or p_up.ndim != 1:
            raise ValueError("p_up and p_down must be 1D arrays of equal length")
        if np.any(p_up < 0) or np.any(p_down < 0) or np.any(p_up + p_down > 1 + 1e-12):
            raise ValueError("move probabilities must be non-negative and sum to at most 1")
        if p_up[-1] != 0 or p_down[0] != 0:
            raise ValueError("the chain must reflect at both ends")
        self.p_up = p_up
        self.p_down = p_down
        self._p_move = p_up + p_down
        self.lo = int(lo)
        self.start = self.lo if start is None else int(start)

    @property
    def hi(self) -> int:
        return self.lo + len(self.p_up) - 1

    @property
    def sites(self) -> np.ndarray:
        return np.arange(self.lo, self.hi + 1)

    @classmethod
    def uniform(cls, n_sites: int, p_up: float, p_down: float | None = None, **kw):
        """Homogeneous walk on ``0 .. n_sites-1`` with reflecting ends."""
        if p_down is None:
            p_down = 1.0 - p_up
        up = np.full(n_sites, p_up)
        down = np.full(n_sites, p_down)
        up[-1] = 0.0
        down[0] = 0.0
        return cls(up, down, **kw)

    @classmethod
    def from_potential(cls, U, lo: int = 0, **kw):
        """Metropolis walk in potential ``U`` (units of kT): propose +-1 with 1/2 each."""
        U = np.asarray(U, dtype=float)
        up = np.zeros_like(U)
        down = np.zeros_like(U)
        up[:-1] = 0.5 * np.minimum(1.0, np.exp(-(U[1:] - U[:-1])))
        down[1:] = 0.5 * np.minimum(1.0, np.exp(-(U[:-1] - U[1:])))
        return cls(up, down, lo=lo, **kw)

    @classmethod
    def piecewise(cls, segments, lo: int = 0, **kw):
        """Concatenate homogeneous segments given as ``(n_sites, p_up)`` pairs.

        Down probability is ``1 - p_up`` except at the reflecting ends.
        """
        up = np.concatenate([np.full(n, p) for n, p in segments])
        down = 1.0 - up
        up[-1] = 0.0
        down[0] = 0.0
        return cls(up, down, lo=lo, **kw)

    def initial_state(self) -> np.ndarray:
        return np.array([self.start], dtype=np.int64)

    def state(self, site: int) -> np.ndarray:
        return np.array([site], dtype=np.int64)

    def copy_state(self, state):
        return state.copy()

    def order_parameter(self, state) -> float:
        return float(state[0])

    def draw_noise(self, gen, n_steps):
        return gen.random(n_steps)

    def advance(self, state, noise, lower, upper, trace):
        return _advance(state, noise, self.p_up, self._p_move, self.lo,
                        float(lower), float(upper), trace)

    def transition_matrix(self) -> np.ndarray:
        n = len(self.p_up)
        P = np.diag(1.0 - self._p_move)
        idx = np.arange(n)
        P[idx[:-1], idx[:-1] + 1] = self.p_up[:-1]
        P[idx[1:], idx[1:] - 1] = self.p_down[1:]
        return P
