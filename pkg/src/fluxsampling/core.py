"""Model-agnostic plumbing: random streams, walkers, trajectory segments.

Samplers never look inside a model state. They only need four things from a
model: a way to copy a state, its order parameter, a block of random numbers
for some number of steps, and a compiled kernel that advances a state through
such a block while watching two absorbing thresholds.

A :class:`Walker` owns one state plus one random stream. Noise is drawn in
blocks that start small and double up to the model's ``block_steps`` (never more
than the pending request), so short trials do not pay for long buffers. Every
model draws its noise sequentially from the stream, so the block boundaries do
not change the path: stopping a walker and resuming it later gives the same
trajectory as running it in one go, and replaying from the start configuration
with the same stream reproduces it bit for bit.
"""
from __future__ import annotations

import enum
import functools
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Any, Callable, Iterable, Protocol, Sequence

import numpy as np

INF = float("inf")
MIN_BLOCK = 64


class Model(Protocol):
    """What a sampler needs from a dynamical system."""

    name: str
    block_steps: int
    time_per_step: float
    bin_width: float
    integer_order_parameter: bool

    def initial_state(self) -> Any: ...

    def copy_state(self, state: Any) -> Any: ...

    def order_parameter(self, state: Any) -> float: ...

    def draw_noise(self, gen: np.random.Generator, n_steps: int) -> np.ndarray: ...

    def advance(self, state: Any, noise: np.ndarray, lower: float, upper: float,
                trace: np.ndarray) -> tuple[int, bool]: ...


@dataclass(frozen=True)
class RegionSpec:
    """Basin A is ``lam < lambda_A``; basin B is ``lam >= lambda_B``."""

    lambda_A: float
    lambda_B: float

    def __post_init__(self):
        if not self.lambda_A < self.lambda_B:
            raise ValueError(f"lambda_A={self.lambda_A} must be below lambda_B={self.lambda_B}")


@dataclass(frozen=True)
class RandomStream:
    """Counter-style stream identity: the same triple always yields the same bits."""

    seed: int
    stage: tuple[int, ...]
    index: int

    def spawn_key(self) -> tuple[int, ...]:
        # the length prefix keeps (stage=(1, 2), index=3) apart from (stage=(1,), index=2) etc.
        return (len(self.stage), *self.stage, self.index)

    def generator(self) -> np.random.Generator:
        # Philox is counter based: the key picks (seed, stage), the high counter
        # word picks the trajectory, and the low words count draws
        key = np.array([self.seed, _stage_key(self.stage)], dtype=np.uint64)
        counter = np.array([0, 0, self.index, 0], dtype=np.uint64)
        return np.random.Generator(np.random.Philox(key=key, counter=counter))


@functools.lru_cache(maxsize=4096)
def _stage_key(stage: tuple) -> int:
    ss = np.random.SeedSequence(0x57A6E, spawn_key=(len(stage), *stage))
    return int(ss.generate_state(1, np.uint64)[0])


def derive_stream(master_seed: int, stage_id, trajectory_index: int) -> RandomStream:
    """Map ``(master_seed, stage_id, trajectory_index)`` injectively to a stream.

    ``stage_id`` is an int or a tuple of non-negative ints. The mapping is a pure
    function of its arguments, so it does not depend on worker count or call order.
    """
    if isinstance(stage_id, (int, np.integer)):
        stage = (int(stage_id),)
    else:
        stage = tuple(int(s) for s in stage_id)
    if any(s < 0 for s in stage) or trajectory_index < 0:
        raise ValueError("stage ids and trajectory indices must be non-negative")
    return RandomStream(int(master_seed) & 0xFFFFFFFFFFFFFFFF, stage, int(trajectory_index))


def child_seed(master_seed: int, *key: int) -> int:
    """A 64-bit seed derived from ``master_seed`` and a key path (repeats, iterations)."""
    ss = np.random.SeedSequence(int(master_seed) & 0xFFFFFFFFFFFFFFFF,
                                spawn_key=(0xC417D, len(key), *(int(k) for k in key)))
    return int(ss.generate_state(1, np.uint64)[0])


class Outcome(enum.Enum):
    REACHED_UPPER = "reached_upper"
    RETURNED_TO_A = "returned_to_A"
    UNDECIDED = "undecided"


@dataclass
class TrialOutcome:
    outcome: Outcome
    state: Any
    steps: int

    @property
    def reached_upper(self) -> bool:
        return self.outcome is Outcome.REACHED_UPPER


@dataclass
class TrajectorySegment:
    initial_state: Any
    lambdas: np.ndarray
    final_state: Any
    steps: int
    outcome: Outcome = Outcome.UNDECIDED
    stride: int = 1

    @property
    def step_index(self) -> np.ndarray:
        return np.arange(self.stride, self.steps + 1, self.stride)


class Walker:
    """One trajectory in progress: a private state copy and its random stream."""

    __slots__ = ("model", "state", "stream", "steps", "_gen", "_noise", "_pos", "_scratch", "_drawn")

    def __init__(self, model: Model, state, stream: RandomStream, copy: bool = True):
        self.model = model
        self.state = model.copy_state(state) if copy else state
        self.stream = stream
        self.steps = 0
        self._gen = stream.generator()
        self._noise = None
        self._pos = 0
        self._scratch = None
        self._drawn = 0

    @property
    def lam(self) -> float:
        return self.model.order_parameter(self.state)

    def snapshot(self):
        return self.model.copy_state(self.state)

    def _refill(self, pending: int):
        block = min(self.model.block_steps, max(MIN_BLOCK, self._drawn), pending)
        self._noise = self.model.draw_noise(self._gen, block)
        self._drawn += block
        self._pos = 0
        if self._scratch is None or len(self._scratch) < block:
            self._scratch = np.empty(self.model.block_steps)

    def advance(self, max_steps: int, lower: float = -INF, upper: float = INF,
                trace: np.ndarray | None = None) -> tuple[int, bool]:
        """Advance up to ``max_steps`` steps, stopping after the first step with
        ``lam < lower`` or ``lam >= upper``. Returns ``(steps_done, stopped)``.

        When ``trace`` is given, the order parameter after each step is written to
        ``trace[:steps_done]``.
        """
        done = 0
        model = self.model
        while done < max_steps:
            if self._noise is None or self._pos >= len(self._noise):
                self._refill(max_steps - done)
            n = min(max_steps - done, len(self._noise) - self._pos)
            out = trace[done:done + n] if trace is not None else self._scratch[:n]
            k, stopped = model.advance(self.state, self._noise[self._pos:self._pos + n],
                                       lower, upper, out)
            self._pos += k
            done += k
            if stopped:
                break
        else:
            stopped = False
        if self._noise is not None and self._pos >= len(self._noise):
            self._noise = None
        self.steps += done
        return done, stopped

    def run_until(self, upper: float, lower: float, max_steps: int) -> TrialOutcome:
        lam = self.lam
        if lam >= upper:
            return TrialOutcome(Outcome.REACHED_UPPER, self.state, 0)
        if lam < lower:
            return TrialOutcome(Outcome.RETURNED_TO_A, self.state, 0)
        n, stopped = self.advance(max_steps, lower, upper)
        if not stopped:
            return TrialOutcome(Outcome.UNDECIDED, self.state, n)
        kind = Outcome.REACHED_UPPER if self.lam >= upper else Outcome.RETURNED_TO_A
        return TrialOutcome(kind, self.state, n)


def propagate(model: Model, state, steps: int, rng: RandomStream, stride: int = 1) -> TrajectorySegment:
    """Apply exactly ``steps`` model updates to a copy of ``state``."""
    if steps < 1:
        raise ValueError("steps must be >= 1")
    if steps % stride:
        raise ValueError("stride must divide the step count")
    walker = Walker(model, state, rng)
    trace = np.empty(steps)
    walker.advance(steps, trace=trace)
    return TrajectorySegment(model.copy_state(state), trace[stride - 1::stride].copy(),
                             walker.state, steps, Outcome.UNDECIDED, stride)


def run_until(model: Model, state, upper: float, lower: float, max_steps: int,
              rng: RandomStream) -> TrialOutcome:
    """Run a copy of ``state`` until ``lam >= upper``, ``lam < lower`` or the budget ends."""
    return Walker(model, state, rng).run_until(upper, lower, max_steps)


def count_upward_crossings(lambdas: Sequence[float], level: float) -> int:
    """Adjacent pairs with ``lam_t < level <= lam_{t+1}``."""
    lam = np.asarray(lambdas, dtype=float)
    return int(np.count_nonzero((lam[:-1] < level) & (lam[1:] >= level)))


def map_ordered(fn: Callable, items: Iterable, workers: int = 1) -> list:
    """``list(map(fn, items))``, optionally on a thread pool; result order is input order."""
    if workers <= 1:
        return [fn(x) for x in items]
    with ThreadPoolExecutor(max_workers=workers) as pool:
        return list(pool.map(fn, items))


@dataclass
class StepCounter:
    """Total propagation steps spent by a sampler, for cost accounting."""

    steps: int = 0
    by_phase: dict = field(default_factory=dict)

    def add(self, phase: str, n: int):
        self.steps += n
        self.by_phase[phase] = self.by_phase.get(phase, 0) + n
