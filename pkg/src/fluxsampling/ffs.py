"""Direct forward flux sampling over a fixed interface set.

The rate is the flux of effective crossings of the first interface times the
product of the conditional probabilities of reaching each next interface before
falling back into A::

    k_AB = phi_0 * prod_i P(lambda_{i+1} | lambda_i)
"""
from __future__ import annotations

import math
import time
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from .core import INF, Model, Outcome, RegionSpec, Walker, derive_stream, map_ordered
from .errors import DeadInterface, TrappedTrajectories, ZeroFlux
from .stats import binomial_se

# stage-id layout shared by every sampler; the trailing entry separates dynamics
# streams from start-configuration selection streams
BASIN = 0
INTERFACE = 1
LOCAL = 2
RELAX = 3
_DYNAMICS = 0
_SELECT = 1


@dataclass(frozen=True)
class InterfaceSet:
    lambdas: tuple

    def __post_init__(self):
        lam = np.asarray(self.lambdas, dtype=float)
        if lam.ndim != 1 or len(lam) < 1:
            raise ValueError("an interface set needs at least one level")
        if np.any(np.diff(lam) <= 0):
            raise ValueError(f"interfaces must be strictly increasing: {list(self.lambdas)}")
        object.__setattr__(self, "lambdas", tuple(float(x) for x in lam))

    def __len__(self):
        return len(self.lambdas)

    def __getitem__(self, i):
        return self.lambdas[i]

    def __iter__(self):
        return iter(self.lambdas)

    def validate(self, regions: RegionSpec) -> "InterfaceSet":
        if not self.lambdas[0] > regions.lambda_A:
            raise ValueError(f"lambda_0={self.lambdas[0]} must exceed lambda_A={regions.lambda_A}")
        if self.lambdas[-1] != regions.lambda_B:
            raise ValueError(f"last interface {self.lambdas[-1]} must equal lambda_B={regions.lambda_B}")
        return self

    @classmethod
    def equal_spaced(cls, lambda_0: float, lambda_B: float, n_interfaces: int,
                     integer: bool = False) -> "InterfaceSet":
        """``n_interfaces`` levels from ``lambda_0`` to ``lambda_B`` inclusive."""
        lam = np.linspace(lambda_0, lambda_B, n_interfaces)
        if integer:
            lam = np.unique(np.round(lam))
        return cls(tuple(lam))


@dataclass
class TrialBudget:
    """How many trials to fire from each interface, and how long each may run.

    ``mode="fixed"`` fires exactly ``n_trials``. ``mode="successes"`` keeps firing
    (in index order) until the ``n_successes``-th success and estimates P with the
    unbiased inverse-sampling estimator ``(r - 1) / (M - 1)``.
    """

    mode: str = "fixed"
    n_trials: int = 500
    n_successes: int = 100
    max_trials: int = 200_000
    max_steps: int = 10_000
    batch: int = 200

    def __post_init__(self):
        if self.mode not in ("fixed", "successes"):
            raise ValueError(f"unknown budget mode {self.mode!r}")
        if self.mode == "successes" and self.n_successes < 2:
            raise ValueError("inverse sampling needs n_successes >= 2")


@dataclass
class FluxEstimate:
    phi_0: float
    n_0: int
    T: float
    stored_configs: list = field(repr=False)
    lambda_0: float = float("nan")
    steps: int = 0

    def __post_init__(self):
        if self.n_0 != len(self.stored_configs):
            raise ValueError("n_0 must equal the number of stored configurations")


@dataclass
class InterfaceStats:
    lam_from: float
    lam_to: float
    n_success: int
    n_trials: int
    p: float
    se: float
    n_returned: int = 0
    n_undecided: int = 0
    steps: int = 0


@dataclass
class RateEstimate:
    phi_0: float
    probabilities: list
    k_AB: float
    log_k: float
    interfaces: InterfaceSet
    flux: FluxEstimate | None = field(default=None, repr=False)
    stats: list = field(default_factory=list)
    wall_time: float = 0.0
    steps: int = 0

    @property
    def standard_errors(self) -> list:
        return [s.se for s in self.stats]


def count_effective_crossings(lambdas: Sequence[float], lambda_0: float, lambda_A: float,
                              armed: bool = True) -> list[int]:
    """Indices ``t`` where ``lambdas[t]`` is an effective positive crossing of ``lambda_0``.

    A crossing only counts if the trajectory has been in A (``lam < lambda_A``)
    since the previous counted crossing. ``lambdas[0]`` is the starting value.
    """
    out = []
    prev = lambdas[0] if len(lambdas) else None
    armed = armed or (prev is not None and prev < lambda_A)
    for t in range(1, len(lambdas)):
        lam = lambdas[t]
        if armed and prev < lambda_0 <= lam:
            out.append(t)
            armed = False
        if lam < lambda_A:
            armed = True
        prev = lam
    return out


def _basin_pass(model: Model, start, regions: RegionSpec, lambda_0: float, walker: Walker,
                n_steps: int, armed: bool, configs: list) -> tuple[int, bool]:
    """Continue ``walker`` for ``n_steps`` steps, storing effective crossings of ``lambda_0``.

    Reaching B resets the walker to ``start`` so the long run keeps sampling A.
    """
    lam_A, lam_B = regions.lambda_A, regions.lambda_B
    left = n_steps
    while left > 0:
        if armed:
            n, stopped = walker.advance(left, -INF, lambda_0)
            left -= n
            if stopped:
                configs.append(walker.snapshot())
                armed = False
                if walker.lam >= lam_B:
                    walker.state = model.copy_state(start)
                    armed = walker.lam < lam_A
        else:
            n, stopped = walker.advance(left, lam_A, lam_B)
            left -= n
            if stopped:
                if walker.lam < lam_A:
                    armed = True
                else:
                    walker.state = model.copy_state(start)
                    armed = walker.lam < lam_A
    return n_steps, armed


def compute_basin_flux(model: Model, regions: RegionSpec, lambda_0: float, T_steps: int,
                       seed: int, stage=(BASIN,), start=None, min_crossings: int = 0,
                       max_steps: int | None = None) -> FluxEstimate:
    """Flux of effective crossings of ``lambda_0`` out of A from one long trajectory.

    Runs ``T_steps`` steps (extended in chunks of ``T_steps`` until at least
    ``min_crossings`` are stored, up to ``max_steps``). ``T`` is reported in model
    time units.
    """
    if T_steps < 1:
        raise ValueError("T must be positive")
    if not lambda_0 > regions.lambda_A:
        raise ValueError("lambda_0 must exceed lambda_A")
    start = model.initial_state() if start is None else start
    walker = Walker(model, start, derive_stream(seed, (*stage, _DYNAMICS), 0))
    configs: list = []
    armed = walker.lam < regions.lambda_A
    steps = 0
    cap = max_steps or 50 * T_steps
    while True:
        n, armed = _basin_pass(model, start, regions, lambda_0, walker, T_steps, armed, configs)
        steps += n
        if len(configs) >= max(min_crossings, 1) or steps >= cap:
            break
    if not configs:
        raise ZeroFlux(f"no effective crossing of lambda_0={lambda_0:g} in {steps} steps")
    T = steps * model.time_per_step
    return FluxEstimate(len(configs) / T, len(configs), T, configs, lambda_0, steps)


class _SelectionStream:
    """Uniform start-configuration choices, identical however they are requested."""

    def __init__(self, seed, stage, n_configs):
        self._gen = derive_stream(seed, (*stage, _SELECT), 0).generator()
        self._n = n_configs
        self._picks = np.empty(0, dtype=np.int64)

    def picks(self, upto: int) -> np.ndarray:
        if upto > len(self._picks):
            u = self._gen.random(max(upto - len(self._picks), 256))
            self._picks = np.concatenate([self._picks, (u * self._n).astype(np.int64)])
        return self._picks[:upto]


def fire_trial(model: Model, start, lambda_next: float, lambda_A: float, max_steps: int,
               seed: int, stage, index: int):
    walker = Walker(model, start, derive_stream(seed, (*stage, _DYNAMICS), index))
    result = walker.run_until(lambda_next, lambda_A, max_steps)
    return result.outcome, (walker.snapshot() if result.reached_upper else None), walker.steps


def estimate_conditional_probability(model: Model, configs_at_i: list, lambda_next: float,
                                     regions: RegionSpec, budget: TrialBudget, seed: int,
                                     stage, workers: int = 1, lam_from: float = float("nan"),
                                     strict: bool = True):
    """Fire trials from stored configurations until they reach ``lambda_next`` or fall into A.

    Returns ``(InterfaceStats, successful_configs)``. With ``strict`` a trial still
    undecided after ``budget.max_steps`` raises :class:`TrappedTrajectories`.
    """
    if not configs_at_i:
        raise ValueError("no configurations to start from")
    select = _SelectionStream(seed, stage, len(configs_at_i))
    outcomes: list = []
    successes: list = []
    steps = 0

    def one(j):
        return fire_trial(model, configs_at_i[picks[j]], lambda_next, regions.lambda_A,
                          budget.max_steps, seed, stage, j)

    if budget.mode == "fixed":
        picks = select.picks(budget.n_trials)
        results = map_ordered(one, range(budget.n_trials), workers)
    else:
        results = []
        n_succ = 0
        while n_succ < budget.n_successes and len(results) < budget.max_trials:
            lo = len(results)
            hi = min(lo + budget.batch, budget.max_trials)
            picks = select.picks(hi)
            batch = map_ordered(one, range(lo, hi), workers)
            for r in batch:
                results.append(r)
                if r[0] is Outcome.REACHED_UPPER:
                    n_succ += 1
                    if n_succ == budget.n_successes:
                        break
    for outcome, snap, n_steps in results:
        outcomes.append(outcome)
        steps += n_steps
        if snap is not None:
            successes.append(snap)
    M = len(outcomes)
    n = len(successes)
    n_und = sum(o is Outcome.UNDECIDED for o in outcomes)
    if strict and n_und:
        raise TrappedTrajectories(f"{n_und}/{M} trials from lambda={lam_from:g} undecided "
                                  f"after {budget.max_steps} steps (possible intermediate state)")
    if n == 0:
        raise DeadInterface(f"no trial from lambda={lam_from:g} reached {lambda_next:g} in {M} trials")
    p = inverse_sampling_estimate(n, M, budget)
    st = InterfaceStats(lam_from, lambda_next, n, M, p, binomial_se(n, M),
                        n_returned=sum(o is Outcome.RETURNED_TO_A for o in outcomes),
                        n_undecided=n_und, steps=steps)
    return st, successes


def inverse_sampling_estimate(n: int, M: int, budget: TrialBudget) -> float:
    if budget.mode == "successes" and n == budget.n_successes and M > 1:
        return (n - 1) / (M - 1)
    return n / M


def compute_rate(phi_0: float, probabilities: Sequence[float]) -> tuple[float, float]:
    """``(k_AB, log k_AB)``; the product is taken in order, the log sum guards underflow."""
    k = float(phi_0)
    log_k = math.log(phi_0) if phi_0 > 0 else -math.inf
    for p in probabilities:
        if not 0.0 <= p <= 1.0:
            raise ValueError(f"probability {p} outside [0, 1]")
        k *= p
        log_k += math.log(p) if p > 0 else -math.inf
    return k, log_k


def run_ffs(model: Model, regions: RegionSpec, interfaces: InterfaceSet, budget: TrialBudget,
            seed: int, T_steps: int, min_crossings: int = 0, workers: int = 1,
            start=None, strict: bool = True) -> RateEstimate:
    """Basin flux, then one conditional probability per interface pair."""
    interfaces.validate(regions)
    t0 = time.perf_counter()
    flux = compute_basin_flux(model, regions, interfaces[0], T_steps, seed,
                              start=start, min_crossings=min_crossings)
    configs = flux.stored_configs
    stats = []
    steps = flux.steps
    for i in range(len(interfaces) - 1):
        st, configs = estimate_conditional_probability(
            model, configs, interfaces[i + 1], regions, budget, seed, (INTERFACE, i),
            workers=workers, lam_from=interfaces[i], strict=strict)
        stats.append(st)
        steps += st.steps
    probs = [s.p for s in stats]
    k, log_k = compute_rate(flux.phi_0, probs)
    return RateEstimate(flux.phi_0, probs, k, log_k, interfaces, flux, stats,
                        time.perf_counter() - t0, steps)
