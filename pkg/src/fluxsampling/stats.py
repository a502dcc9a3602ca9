"""Histograms, cumulants, convergence checks, error bars and the barrier cost model."""
from __future__ import annotations

import io
import math
from dataclasses import dataclass, field

import numpy as np

from .errors import BinningMismatch, EmptyHistogram

REL_TOL = 1e-12


@dataclass
class Histogram:
    """Fixed-width bins starting at ``origin``; the bin count grows as needed.

    Values below ``origin`` are ignored, so a histogram anchored at an interface
    only ever sees the forward side of it.
    """

    origin: float
    width: float
    counts: np.ndarray = field(default_factory=lambda: np.zeros(0, dtype=np.int64))

    def __post_init__(self):
        if self.width <= 0:
            raise ValueError("bin width must be positive")
        self.counts = np.asarray(self.counts, dtype=np.int64)

    @property
    def total(self) -> int:
        return int(self.counts.sum())

    @property
    def n_bins(self) -> int:
        return len(self.counts)

    @property
    def edges(self) -> np.ndarray:
        return self.origin + self.width * np.arange(self.n_bins + 1)

    def add(self, values) -> int:
        """Bin ``values >= origin``; returns how many were binned."""
        v = np.asarray(values, dtype=float)
        v = v[v >= self.origin]
        if v.size == 0:
            return 0
        idx = np.floor((v - self.origin) / self.width + 1e-9).astype(np.int64)
        need = int(idx.max()) + 1
        if need > self.n_bins:
            self.counts = np.concatenate([self.counts, np.zeros(need - self.n_bins, dtype=np.int64)])
        self.counts += np.bincount(idx, minlength=self.n_bins)
        return int(v.size)

    def merge(self, other: "Histogram") -> "Histogram":
        if other.origin != self.origin or other.width != self.width:
            raise BinningMismatch("histograms have different binning")
        n = max(self.n_bins, other.n_bins)
        counts = np.zeros(n, dtype=np.int64)
        counts[:self.n_bins] += self.counts
        counts[:other.n_bins] += other.counts
        return Histogram(self.origin, self.width, counts)

    def copy(self) -> "Histogram":
        return Histogram(self.origin, self.width, self.counts.copy())

    def density(self) -> np.ndarray:
        total = self.total
        if total == 0:
            raise EmptyHistogram("histogram has no samples")
        return self.counts / (total * self.width)

    def mode(self) -> float:
        """Centre of the most populated bin (lowest one on ties)."""
        if self.total == 0:
            raise EmptyHistogram("histogram has no samples")
        k = int(np.argmax(self.counts))
        return self.origin + (k + 0.5) * self.width

    def to_table(self, header: str = "") -> str:
        """Column text: bin_left, count, density, cumulant."""
        buf = io.StringIO()
        if header:
            for line in header.splitlines():
                buf.write(f"# {line}\n")
        buf.write("bin_left\tcount\tdensity\tcumulant\n")
        if self.total:
            dens, cum = self.density(), cumulant(self)
            for left, c, d, cu in zip(self.edges[:-1], self.counts, dens, cum):
                buf.write(f"{left:.10g}\t{c}\t{d:.10g}\t{cu:.10g}\n")
        return buf.getvalue()

    @classmethod
    def from_table(cls, text: str) -> "Histogram":
        rows = [ln.split("\t") for ln in text.splitlines()
                if ln and not ln.startswith("#") and not ln.startswith("bin_left")]
        left = np.array([float(r[0]) for r in rows])
        counts = np.array([int(r[1]) for r in rows], dtype=np.int64)
        width = float(left[1] - left[0]) if len(left) > 1 else 1.0
        return cls(float(left[0]), width, counts)


def cumulant(h: Histogram) -> np.ndarray:
    """Normalized running sum; entry ``k`` is the mass below the right edge of bin ``k``."""
    total = h.total
    if total == 0:
        raise EmptyHistogram("histogram has no samples")
    c = np.cumsum(h.counts) / total
    c[-1] = 1.0
    return c


def pad_cumulant(c: np.ndarray, n_bins: int) -> np.ndarray:
    """Extend a cumulant table to ``n_bins`` entries; mass beyond the support is 1."""
    if len(c) >= n_bins:
        return c
    return np.concatenate([c, np.ones(n_bins - len(c))])


def converged(prev, curr, eps: float) -> bool:
    """True iff the sup-norm distance between two cumulant tables is below ``eps``."""
    prev = np.asarray(prev, dtype=float)
    curr = np.asarray(curr, dtype=float)
    if prev.shape != curr.shape:
        raise BinningMismatch(f"cumulant tables differ in shape: {prev.shape} vs {curr.shape}")
    if prev.size == 0:
        return True
    return float(np.max(np.abs(prev - curr))) < eps


def sup_distance(prev, curr) -> float:
    n = max(len(prev), len(curr))
    return float(np.max(np.abs(pad_cumulant(np.asarray(prev), n) - pad_cumulant(np.asarray(curr), n))))


def quantile_from_cumulant(origin: float, width: float, c: np.ndarray, q: float) -> float | None:
    """Smallest level where the piecewise-linear cumulant reaches ``q``; None if never."""
    hit = np.nonzero(c >= q)[0]
    if hit.size == 0:
        return None
    k = int(hit[0])
    lo = c[k - 1] if k > 0 else 0.0
    frac = (q - lo) / (c[k] - lo) if c[k] > lo else 1.0
    return origin + width * (k + frac)


def binomial_se(n_success: int, n_trials: int) -> float:
    if n_trials < 1 or not 0 <= n_success <= n_trials:
        raise ValueError("need 0 <= n_success <= n_trials and n_trials >= 1")
    p = n_success / n_trials
    return math.sqrt(p * (1.0 - p) / n_trials)


@dataclass
class CostProfile:
    barriers: np.ndarray
    cost: float


def cost_of_partition(grid, f, interfaces) -> CostProfile:
    """Barrier increments and total relative cost ``sum_i exp(df_i)`` of a partition.

    ``df_i`` is the largest rise of ``f`` above its value at ``interfaces[i]``
    anywhere on ``[interfaces[i], interfaces[i+1]]``; ``f`` is tabulated on the
    increasing ``grid`` and interpolated linearly at the interfaces.
    """
    grid = np.asarray(grid, dtype=float)
    f = np.asarray(f, dtype=float)
    lam = np.asarray(interfaces, dtype=float)
    if lam[0] < grid[0] or lam[-1] > grid[-1]:
        raise ValueError("the grid must cover every interface")
    f_at = np.interp(lam, grid, f)
    barriers = np.empty(len(lam) - 1)
    for i in range(len(lam) - 1):
        inside = (grid >= lam[i]) & (grid <= lam[i + 1])
        top = max(f_at[i + 1], f[inside].max()) if inside.any() else f_at[i + 1]
        barriers[i] = max(top, f_at[i]) - f_at[i]
    return CostProfile(barriers, float(np.sum(np.exp(barriers))))


def equal_barrier_partition(grid, f, n_segments: int) -> np.ndarray:
    """Interfaces splitting a nondecreasing ``f`` into equal rises."""
    grid = np.asarray(grid, dtype=float)
    f = np.asarray(f, dtype=float)
    if np.any(np.diff(f) < 0):
        raise ValueError("f must be nondecreasing")
    levels = np.linspace(f[0], f[-1], n_segments + 1)
    lam = np.interp(levels, f, grid)
    lam[0], lam[-1] = grid[0], grid[-1]
    return lam


@dataclass
class RepeatSummary:
    values: np.ndarray
    wall_times: np.ndarray
    label: str = ""

    @property
    def n(self) -> int:
        return len(self.values)

    @property
    def mean(self) -> float:
        return float(np.mean(self.values))

    @property
    def se(self) -> float:
        if self.n < 2:
            return float("nan")
        return float(np.std(self.values, ddof=1) / math.sqrt(self.n))

    @property
    def median_time(self) -> float:
        return float(np.median(self.wall_times))

    @property
    def mean_time(self) -> float:
        return float(np.mean(self.wall_times))


def summarize(values, wall_times=None, label: str = "") -> RepeatSummary:
    v = np.asarray(values, dtype=float)
    t = np.zeros_like(v) if wall_times is None else np.asarray(wall_times, dtype=float)
    return RepeatSummary(v, t, label)


def agree_within(a: RepeatSummary, b: RepeatSummary, n_sigma: float = 3.0) -> bool:
    """Means agree within ``n_sigma`` combined standard errors."""
    return abs(a.mean - b.mean) <= n_sigma * math.hypot(a.se, b.se)


def dispersion(p) -> float:
    """max/min ratio of a set of probabilities."""
    p = np.asarray(p, dtype=float)
    return float(p.max() / p.min())


def close(a: float, b: float, rel: float = REL_TOL) -> bool:
    return math.isclose(a, b, rel_tol=rel, abs_tol=0.0) or a == b
