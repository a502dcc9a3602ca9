"""Maier-Stein double well, integrated with Euler-Maruyama.

    dx = (x - u x^3 - beta x y^2) dt + sqrt(2 D dt) g1
    dy = -(1 + x^2) y dt            + sqrt(2 D dt) g2

For beta != 1 the drift is not a gradient field, so the A -> B transition is a
genuinely nonequilibrium rare event. The order parameter is ``x``.
"""
from __future__ import annotations

import math
from dataclasses import dataclass

import numba as nb
import numpy as np

from ..errors import DivergedState

DIVERGENCE_BOUND = 1e3


@dataclass(frozen=True)
class MaierSteinParams:
    u: float = 1.0
    beta: float = 2.0
    D: float = 0.01
    dt: float = 0.01

    def __post_init__(self):
        if self.D < 0:
            raise ValueError("D must be >= 0")
        if self.dt <= 0:
            raise ValueError("dt must be > 0")


@nb.njit(cache=True, nogil=True)
def _advance(state, noise, u, beta, dt, amp, lower, upper, trace):
    x = state[0]
    y = state[1]
    n = noise.shape[0]
    for k in range(n):
        x2 = x * x
        xn = x + (x - u * x2 * x - beta * x * y * y) * dt + amp * noise[k, 0]
        yn = y - (1.0 + x2) * y * dt + amp * noise[k, 1]
        x = xn
        y = yn
        trace[k] = x
        if not (abs(x) <= 1e3 and abs(y) <= 1e3):
            state[0] = x
            state[1] = y
            return -(k + 1), True
        if x < lower or x >= upper:
            state[0] = x
            state[1] = y
            return k + 1, True
    state[0] = x
    state[1] = y
    return n, False


class MaierStein:
    """State is a length-2 float array ``[x, y]``; one step is one Euler update."""

    name = "maier_stein"
    block_steps = 4096
    integer_order_parameter = False

    def __init__(self, params: MaierSteinParams | None = None, bin_width: float = 0.01,
                 start=(-1.0, 0.0)):
        self.params = params or MaierSteinParams()
        self.bin_width = bin_width
        self.start = tuple(start)
        self._amp = math.sqrt(2.0 * self.params.D * self.params.dt)

    @property
    def time_per_step(self) -> float:
        return self.params.dt

    def initial_state(self) -> np.ndarray:
        return np.array(self.start, dtype=float)

    def state(self, x: float, y: float) -> np.ndarray:
        return np.array([x, y], dtype=float)

    def copy_state(self, state):
        return state.copy()

    def order_parameter(self, state) -> float:
        return float(state[0])

    def draw_noise(self, gen, n_steps):
        return gen.standard_normal((n_steps, 2))

    def advance(self, state, noise, lower, upper, trace):
        p = self.params
        k, stopped = _advance(state, noise, p.u, p.beta, p.dt, self._amp,
                              float(lower), float(upper), trace)
        if k < 0:
            raise DivergedState(f"Maier-Stein state left |x|,|y| <= {DIVERGENCE_BOUND:g}: "
                                f"({state[0]:.3g}, {state[1]:.3g})")
        return k, stopped


def maier_stein_step(state, params: MaierSteinParams, g) -> np.ndarray:
    """One Euler-Maruyama step with explicit standard normals ``g = (g1, g2)``."""
    x, y = float(state[0]), float(state[1])
    amp = math.sqrt(2.0 * params.D * params.dt)
    xn = x + (x - params.u * x ** 3 - params.beta * x * y * y) * params.dt + amp * g[0]
    yn = y - (1.0 + x * x) * y * params.dt + amp * g[1]
    if not (abs(xn) <= DIVERGENCE_BOUND and abs(yn) <= DIVERGENCE_BOUND):
        raise DivergedState(f"({xn:.3g}, {yn:.3g})")
    return np.array([xn, yn])


def maier_stein_order_param(state) -> float:
    return float(state[0])
