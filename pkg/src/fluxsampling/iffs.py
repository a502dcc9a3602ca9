"""Iterative FFS: rerun plain FFS after moving interfaces toward equal probabilities.

Iteration 0 uses equally spaced interfaces. Each later iteration takes the
cumulative effort profile ``g(lambda_i) = -sum_{j<i} log P_j`` from the previous
run, interpolates it linearly between interfaces, and puts the same number of
interfaces at equal increments of ``g``. Every iteration resamples from scratch.
"""
from __future__ import annotations

import time
import warnings
from dataclasses import dataclass, field

import numpy as np

from .core import Model, RegionSpec, child_seed
from .errors import NonImprovingIteration
from .ffs import InterfaceSet, RateEstimate, TrialBudget, run_ffs
from .stats import dispersion

_ITERATION_KEY = 7


@dataclass
class IffsSchedule:
    interfaces: list = field(default_factory=list)
    rates: list = field(default_factory=list)
    wall_times: list = field(default_factory=list)
    wall_time: float = 0.0

    @property
    def iterations(self) -> int:
        return len(self.rates)

    @property
    def final(self) -> RateEstimate:
        return self.rates[-1]

    @property
    def k_AB(self) -> float:
        return self.rates[-1].k_AB

    @property
    def steps(self) -> int:
        return sum(r.steps for r in self.rates)


def relocate_interfaces(interfaces: InterfaceSet, probabilities, integer: bool = False) -> InterfaceSet:
    """Same endpoints and count, equal increments of cumulative ``-log P``."""
    lam = np.asarray(interfaces.lambdas, dtype=float)
    p = np.clip(np.asarray(probabilities, dtype=float), 1e-300, 1.0)
    if len(p) != len(lam) - 1:
        raise ValueError("need one probability per interface pair")
    g = np.concatenate([[0.0], np.cumsum(-np.log(p))])
    n = len(lam)
    if g[-1] <= 0.0:
        return interfaces
    # a plateau (P == 1) makes g flat; interp then picks its left end, which is fine
    new = np.interp(np.linspace(0.0, g[-1], n), g, lam)
    new[0], new[-1] = lam[0], lam[-1]
    if integer:
        new = np.round(new)
        for i in range(1, n - 1):
            new[i] = max(new[i], new[i - 1] + 1)
        for i in range(n - 2, 0, -1):
            new[i] = min(new[i], new[i + 1] - 1)
    else:
        span = lam[-1] - lam[0]
        tiny = 1e-9 * span
        for i in range(1, n):
            new[i] = max(new[i], new[i - 1] + tiny)
        new[-1] = lam[-1]
    return InterfaceSet(tuple(new))


def run_iffs(model: Model, regions: RegionSpec, n_interfaces: int, iterations: int,
             budget: TrialBudget, seed: int, T_steps: int, lambda_0: float,
             min_crossings: int = 0, workers: int = 1, start=None,
             strict: bool = True) -> IffsSchedule:
    """``iterations`` relocation rounds after the equal-spaced run (``iterations + 1`` FFS runs)."""
    if iterations < 1:
        raise ValueError("iterations must be >= 1")
    integer = model.integer_order_parameter
    iface = InterfaceSet.equal_spaced(lambda_0, regions.lambda_B, n_interfaces, integer)
    sched = IffsSchedule()
    t0 = time.perf_counter()
    prev_disp = None
    for it in range(iterations + 1):
        if it > 0:
            iface = relocate_interfaces(iface, sched.rates[-1].probabilities, integer)
        est = run_ffs(model, regions, iface, budget, child_seed(seed, _ITERATION_KEY, it), T_steps,
                      min_crossings=min_crossings, workers=workers, start=start, strict=strict)
        d = dispersion(est.probabilities)
        if prev_disp is not None and d > prev_disp:
            warnings.warn(f"iteration {it}: max/min P rose from {prev_disp:.3g} to {d:.3g}",
                          NonImprovingIteration, stacklevel=2)
        prev_disp = d
        sched.interfaces.append(iface)
        sched.rates.append(est)
        sched.wall_times.append(est.wall_time)
    sched.wall_time = time.perf_counter() - t0
    return sched
