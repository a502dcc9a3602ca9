"""Self-optimizing forward flux sampling.

Interfaces are not fixed in advance. From the configurations stored at the
current interface, short local trajectories of fixed length ``T1`` sample the
forward distribution of the order parameter; the next interface goes where its
cumulant reaches a fixed threshold (or, in ``p0`` mode, where the fraction of
trajectories whose running maximum gets that far drops to ``p0``). Equal
thresholds give roughly equal transition probabilities between neighbouring
interfaces, which is the condition that minimizes the summed cost
``sum_i exp(df_i)`` at fixed total barrier.

The same local trajectories are then continued, without restarting, until each
reaches the new interface, falls back into A, or exhausts an extended budget.
The last group, counted per interface, flags intermediate metastable states:
its fraction jumps from zero once the interfaces climb past a trap. When that
happens the trap is relaxed into, its density maximum becomes the new basin,
and sampling restarts from there. Stage rates add as waiting times.
"""
from __future__ import annotations

import logging
import math
import time
from dataclasses import dataclass, field

import numpy as np

from .core import INF, Model, Outcome, RegionSpec, Walker, derive_stream, map_ordered
from .errors import (DeadInterface, EscapedTrap, InsufficientReach, NoForwardProgress,
                     SamplingError, ZeroStageRate)
from .ffs import (BASIN, LOCAL, RELAX, FluxEstimate, InterfaceSet, InterfaceStats,
                  RateEstimate, TrialBudget, _basin_pass, _SelectionStream, _DYNAMICS,
                  compute_rate, inverse_sampling_estimate)
from .stats import Histogram, binomial_se, cumulant, quantile_from_cumulant, sup_distance

log = logging.getLogger(__name__)


@dataclass
class PlacementConfig:
    """How the next interface is found.

    ``mode`` is ``"cumulant"`` (threshold on the cumulant of the visit histogram)
    or ``"p0"`` (threshold on the first-crossing survival curve). Batches of
    ``batch`` local trajectories of ``T1`` steps are added until successive
    cumulants differ by less than ``eps`` in sup-norm.
    """

    mode: str = "cumulant"
    threshold: float = 0.92
    T1: int = 100
    batch: int = 100
    eps: float = 0.01
    max_batches: int = 50
    min_batches: int = 2
    bin_width: float | None = None
    basin_chunk: int = 100_000
    basin_max_chunks: int = 200
    min_basin_crossings: int = 100

    def __post_init__(self):
        if self.mode not in ("cumulant", "p0"):
            raise ValueError(f"unknown placement mode {self.mode!r}")
        if not 0.0 < self.threshold < 1.0:
            raise ValueError("threshold must lie in (0, 1)")
        if self.T1 < 1:
            raise ValueError("T1 must be >= 1")


@dataclass
class LocalDistribution:
    """Forward visits (every visit counts) and per-trajectory maxima from ``lam_i``."""

    lam_i: float
    hist: Histogram
    maxima: Histogram
    n_samples: int
    n_trajectories: int
    batches: int
    converged: bool
    cap: float | None = None

    @property
    def bin_width(self) -> float:
        return self.hist.width

    def cumulant(self) -> np.ndarray:
        """Normalized by every forward visit, including those at or beyond ``cap``."""
        if self.n_samples == 0:
            return np.zeros(0)
        return np.cumsum(self.hist.counts) / self.n_samples

    def survival_cumulant(self) -> np.ndarray:
        if self.n_trajectories == 0:
            return np.zeros(0)
        return np.cumsum(self.maxima.counts) / self.n_trajectories

    def support_max(self) -> float:
        nz = np.nonzero(self.hist.counts)[0]
        return self.lam_i + (nz[-1] + 1) * self.bin_width if nz.size else self.lam_i


@dataclass
class LocalTrajectory:
    """A local trajectory kept for reuse by the classification step."""

    start_index: int
    trace: np.ndarray
    walker: Walker


class _LocalSampler:
    """Accumulates local trajectories in batches and watches the cumulant converge."""

    def __init__(self, model, configs, lam_i, regions, placement, seed, stage, workers):
        self.model = model
        self.configs = configs
        self.lam_i = lam_i
        self.regions = regions
        self.placement = placement
        self.seed = seed
        self.stage = stage
        self.workers = workers
        width = placement.bin_width or model.bin_width
        self.hist = Histogram(lam_i, width)
        self.maxima = Histogram(lam_i, width)
        self.n_samples = 0
        self.trajectories: list[LocalTrajectory] = []
        self.select = _SelectionStream(seed, stage, len(configs))
        self.steps = 0

    def _one(self, j, pick):
        walker = Walker(self.model, self.configs[pick], derive_stream(self.seed, (*self.stage, _DYNAMICS), j))
        trace = np.empty(self.placement.T1)
        walker.advance(self.placement.T1, trace=trace)
        return LocalTrajectory(pick, trace, walker)

    def run_batch(self):
        lo = len(self.trajectories)
        hi = lo + self.placement.batch
        picks = self.select.picks(hi)
        batch = map_ordered(lambda j: self._one(j, picks[j]), range(lo, hi), self.workers)
        cap = self.regions.lambda_B
        traces = np.concatenate([lt.trace for lt in batch])
        fwd = traces[traces >= self.lam_i]
        self.n_samples += fwd.size
        self.hist.add(fwd[fwd < cap])
        if self.placement.mode == "p0":
            lam_A = self.regions.lambda_A
            for lt in batch:
                tr = lt.trace
                back = np.nonzero(tr < lam_A)[0]
                upto = tr[:back[0]] if back.size else tr
                top = max(float(upto.max()) if upto.size else -INF, self.lam_i)
                self.maxima.add([min(top, cap)])
        self.steps += self.placement.T1 * len(batch)
        self.trajectories.extend(batch)

    def table(self) -> np.ndarray:
        if self.placement.mode == "cumulant":
            return np.cumsum(self.hist.counts) / max(self.n_samples, 1)
        return np.cumsum(self.maxima.counts) / max(len(self.trajectories), 1)

    def distribution(self, batches, conv) -> LocalDistribution:
        return LocalDistribution(self.lam_i, self.hist.copy(), self.maxima.copy(), self.n_samples,
                                 len(self.trajectories), batches, conv, self.regions.lambda_B)


def sample_local_distribution(model: Model, configs_at_i: list, lam_i: float, regions: RegionSpec,
                              placement: PlacementConfig, seed: int, stage=(LOCAL, 0),
                              workers: int = 1, keep_trajectories: bool = False):
    """Batches of fixed-length local trajectories from ``configs_at_i`` until convergence.

    Returns the :class:`LocalDistribution`; with ``keep_trajectories`` also the
    list of :class:`LocalTrajectory` records for reuse.
    """
    if not configs_at_i:
        raise ValueError("no configurations at the interface")
    s = _LocalSampler(model, configs_at_i, lam_i, regions, placement, seed, stage, workers)
    prev = None
    conv = False
    b = 0
    for b in range(1, placement.max_batches + 1):
        s.run_batch()
        cur = s.table()
        if prev is not None and b >= placement.min_batches and cur.size and \
                sup_distance(prev, cur) < placement.eps:
            conv = True
            break
        prev = cur
    if s.hist.n_bins <= 1 and s.n_samples == s.hist.total:
        raise NoForwardProgress(f"no local trajectory from lambda={lam_i:g} advanced past one bin "
                                f"in {len(s.trajectories)} trajectories")
    if not conv:
        log.warning("local distribution at lambda=%g not converged after %d batches", lam_i, b)
    dist = s.distribution(b, conv)
    dist_steps = s.steps
    if keep_trajectories:
        return dist, s.trajectories, dist_steps
    return dist


def place_next_interface(dist: LocalDistribution, placement: PlacementConfig,
                         integer: bool = False) -> float:
    """Level where the cumulant (or the survival curve) hits the threshold.

    Returns ``dist.cap`` (lambda_B) when the threshold lies at or beyond it.
    """
    width = dist.bin_width
    if placement.mode == "cumulant":
        table, q = dist.cumulant(), placement.threshold
    else:
        table, q = dist.survival_cumulant(), 1.0 - placement.threshold
    lam = quantile_from_cumulant(dist.lam_i, width, table, q) if table.size else None
    if lam is None:
        if dist.cap is not None and dist.n_samples > dist.hist.total:
            return float(dist.cap)
        top = float(table[-1]) if table.size else 0.0
        raise InsufficientReach(f"cumulant from lambda={dist.lam_i:g} peaks at {top:.3g} < {q:g}; "
                                "T1 is probably too short")
    if integer:
        lam = float(math.ceil(lam - 1e-9))
        lam = max(lam, dist.lam_i + 1.0)
    elif lam <= dist.lam_i:
        lam = dist.lam_i + width
    if dist.cap is not None and lam >= dist.cap:
        return float(dist.cap)
    return float(lam)


@dataclass
class TrialCensus:
    """Outcome counts for the trials fired from one interface."""

    lam_from: float
    lam_to: float
    n_reached: int
    n_returned: int
    n_undecided: int
    M: int
    p: float = float("nan")

    def __post_init__(self):
        if self.n_reached + self.n_returned + self.n_undecided != self.M:
            raise ValueError("census does not add up to M")

    @property
    def undecided_fraction(self) -> float:
        return self.n_undecided / self.M if self.M else 0.0


def _classify_one(model, configs, lt: LocalTrajectory | None, pick, lam_next, lam_A, max_steps,
                  seed, stage, j):
    """Outcome of trial ``j``; reuses the cached local trajectory when there is one."""
    stream = derive_stream(seed, (*stage, _DYNAMICS), j)
    if lt is not None:
        tr = lt.trace
        up = np.nonzero(tr >= lam_next)[0]
        down = np.nonzero(tr < lam_A)[0]
        t_up = up[0] if up.size else None
        t_dn = down[0] if down.size else None
        if t_dn is not None and (t_up is None or t_dn < t_up):
            return Outcome.RETURNED_TO_A, None, 0
        if t_up is not None:
            # replay the same stream up to the first crossing
            replay = Walker(model, configs[lt.start_index], stream)
            replay.advance(int(t_up) + 1, -INF, lam_next)
            return Outcome.REACHED_UPPER, replay.state, int(t_up) + 1
        walker = lt.walker
        spent = walker.steps
        res = walker.run_until(lam_next, lam_A, max(max_steps - spent, 0))
        state = walker.state
        lt.walker = None
        return res.outcome, state, res.steps
    walker = Walker(model, configs[pick], stream)
    res = walker.run_until(lam_next, lam_A, max_steps)
    return res.outcome, walker.state, walker.steps


def classify_trials(model: Model, configs_at_i: list, lambda_next: float, regions: RegionSpec,
                    budget: TrialBudget, max_steps: int, seed: int, stage=(LOCAL, 0),
                    local: list | None = None, workers: int = 1, lam_from: float = float("nan")):
    """Run trials to ``lambda_next``, A, or ``max_steps`` total steps each.

    Trial ``j`` uses stream ``j`` of ``stage`` and the ``j``-th uniform start pick,
    exactly like local trajectory ``j``; cached local trajectories are therefore
    continued rather than restarted. Returns ``(census, successes, trapped)`` where
    ``trapped`` holds the final states of undecided trials.
    """
    local = local or []
    select = _SelectionStream(seed, stage, len(configs_at_i))
    results = []

    def one(j):
        lt = local[j] if j < len(local) else None
        return _classify_one(model, configs_at_i, lt, picks[j], lambda_next, regions.lambda_A,
                             max_steps, seed, stage, j)

    if budget.mode == "fixed":
        picks = select.picks(budget.n_trials)
        results = map_ordered(one, range(budget.n_trials), workers)
    else:
        n_succ = 0
        while n_succ < budget.n_successes and len(results) < budget.max_trials:
            lo = len(results)
            hi = min(lo + budget.batch, budget.max_trials)
            picks = select.picks(hi)
            for r in map_ordered(one, range(lo, hi), workers):
                results.append(r)
                if r[0] is Outcome.REACHED_UPPER:
                    n_succ += 1
                    if n_succ == budget.n_successes:
                        break
    successes = [s for o, s, _ in results if o is Outcome.REACHED_UPPER]
    trapped = [s for o, s, _ in results if o is Outcome.UNDECIDED]
    n_ret = sum(o is Outcome.RETURNED_TO_A for o, _, _ in results)
    M = len(results)
    census = TrialCensus(lam_from, lambda_next, len(successes), n_ret, len(trapped), M)
    census.p = inverse_sampling_estimate(len(successes), M, budget) if M else float("nan")
    steps = sum(n for _, _, n in results)
    return census, successes, trapped, steps


def detect_ims(census_history, threshold_fraction: float = 0.1):
    """First index whose undecided fraction reaches the threshold from below, else None."""
    prev = 0.0
    for i, c in enumerate(census_history):
        frac = c.undecided_fraction if isinstance(c, TrialCensus) else float(c)
        if frac >= threshold_fraction and prev < threshold_fraction:
            return i
        prev = frac
    return None


@dataclass
class ImsReport:
    trigger_index: int
    lambdas: list
    fractions: list
    lambda_ims: float
    density: Histogram
    representative: object = field(repr=False)
    relax_steps: int = 0
    stage: int = 0


def locate_ims(model: Model, trapped_config, regions: RegionSpec, seed: int, stage=(RELAX, 0),
               chunk: int = 5000, eps: float = 0.01, max_chunks: int = 100, min_chunks: int = 3,
               bin_width: float | None = None) -> ImsReport:
    """Relax from a trapped configuration and take the maximum of the visited density.

    The run is extended chunk by chunk until successive cumulants of the visit
    histogram differ by less than ``eps``. Reaching A or B raises
    :class:`EscapedTrap`.
    """
    width = bin_width or model.bin_width
    walker = Walker(model, trapped_config, derive_stream(seed, (*stage, _DYNAMICS), 0))
    origin = regions.lambda_A
    hist = Histogram(origin, width)
    trace = np.empty(chunk)
    prev = None
    for c in range(1, max_chunks + 1):
        n, stopped = walker.advance(chunk, regions.lambda_A, regions.lambda_B, trace=trace)
        if stopped:
            where = "A" if walker.lam < regions.lambda_A else "B"
            raise EscapedTrap(f"relaxation reached {where} after {walker.steps} steps")
        hist.add(trace[:n])
        cur = cumulant(hist)
        if prev is not None and c >= min_chunks and sup_distance(prev, cur) < eps:
            break
        prev = cur
    else:
        log.warning("IMS density not converged after %d chunks", max_chunks)
    k = int(np.argmax(hist.counts))
    lam_ims = hist.origin + k * width if model.integer_order_parameter else hist.origin + (k + 0.5) * width
    return ImsReport(-1, [], [], float(lam_ims), hist, walker.snapshot(), walker.steps)


def compose_staged_rates(stage_rates) -> float:
    """Sequential stages: waiting times add, ``1/k = sum_j 1/k_j``."""
    rates = [float(k) for k in stage_rates]
    if not rates:
        raise ValueError("no stage rates")
    if any(k <= 0 for k in rates):
        raise ZeroStageRate(f"stage rates must be positive: {rates}")
    return 1.0 / math.fsum(1.0 / k for k in rates)


@dataclass
class StageResult:
    regions: RegionSpec
    rate: RateEstimate
    censuses: list
    distributions: list = field(repr=False, default_factory=list)
    ims: ImsReport | None = None
    complete: bool = True
    escaped: list = field(default_factory=list)


@dataclass
class SoffsResult:
    stages: list
    ims_reports: list
    wall_time: float = 0.0
    steps: int = 0

    @property
    def stage_rates(self) -> list:
        return [s.rate.k_AB for s in self.stages]

    @property
    def k_AB(self) -> float:
        if len(self.stages) == 1:
            return self.stages[0].rate.k_AB
        return compose_staged_rates(self.stage_rates)

    @property
    def rate(self) -> RateEstimate:
        """Rate estimate of the final stage (the whole run when there is no IMS)."""
        return self.stages[-1].rate

    @property
    def interfaces(self) -> InterfaceSet:
        lam = [x for s in self.stages for x in s.rate.interfaces]
        return InterfaceSet(tuple(lam)) if all(np.diff(lam) > 0) else self.stages[-1].rate.interfaces

    @property
    def censuses(self) -> list:
        return [c for s in self.stages for c in s.censuses]


def basin_stage(model: Model, start, regions: RegionSpec, placement: PlacementConfig, seed: int,
                stage_no: int = 0):
    """Step (a): one long run from A places ``lambda_0`` and yields the flux.

    A first pass histograms forward visits ``lam >= lambda_A`` chunk by chunk
    until the cumulant settles and places ``lambda_0`` by the same rule as every
    other interface. A replay of the identical trajectory then stores the
    effective crossings of ``lambda_0``.
    """
    width = placement.bin_width or model.bin_width
    lam_A, lam_B = regions.lambda_A, regions.lambda_B
    stream = derive_stream(seed, (BASIN, stage_no, _DYNAMICS), 0)
    walker = Walker(model, start, stream)
    hist = Histogram(lam_A, width)
    maxima = Histogram(lam_A, width)
    n_fwd = 0
    n_exc = 0
    run_max = -INF
    in_exc = walker.lam >= lam_A
    chunk = placement.basin_chunk
    trace = np.empty(chunk)
    prev = None
    steps = 0
    conv = False
    for c in range(1, placement.basin_max_chunks + 1):
        done = 0
        while done < chunk:
            n, stopped = walker.advance(chunk - done, -INF, lam_B, trace=trace[done:])
            done += n
            if stopped:
                walker.state = model.copy_state(start)
        steps += chunk
        fwd = trace[trace >= lam_A]
        n_fwd += fwd.size
        hist.add(fwd[fwd < lam_B])
        # excursion maxima above lambda_A, only needed in p0 mode
        above = trace >= lam_A if placement.mode == "p0" else ()
        for lam, up in zip(trace, above):
            if up:
                run_max = max(run_max, lam)
                in_exc = True
            elif in_exc:
                maxima.add([min(run_max, lam_B)])
                n_exc += 1
                run_max = -INF
                in_exc = False
        if placement.mode == "cumulant":
            cur = np.cumsum(hist.counts) / max(n_fwd, 1)
        else:
            cur = np.cumsum(maxima.counts) / max(n_exc, 1)
        if prev is not None and c >= placement.min_batches and cur.size and \
                sup_distance(prev, cur) < placement.eps:
            conv = True
            break
        prev = cur
    if n_fwd == 0:
        raise NoForwardProgress(f"basin trajectory never reached lambda_A={lam_A:g} in {steps} steps")
    if not conv:
        log.warning("basin distribution not converged after %d steps", steps)
    dist = LocalDistribution(lam_A, hist, maxima, n_fwd, max(n_exc, 1), c, conv, lam_B)
    if placement.mode == "p0" and n_exc == 0:
        raise NoForwardProgress("no completed excursion above lambda_A")
    lam_0 = place_next_interface(dist, placement, model.integer_order_parameter)
    if lam_0 >= lam_B:
        raise InsufficientReach("lambda_0 landed on lambda_B; basin too shallow for staging")
    # replay with crossing capture
    replay = Walker(model, start, stream)
    configs: list = []
    armed = replay.lam < lam_A
    total, armed = _basin_pass(model, start, regions, lam_0, replay, steps, armed, configs)
    extra = 0
    while len(configs) < placement.min_basin_crossings and extra < placement.basin_max_chunks:
        n, armed = _basin_pass(model, start, regions, lam_0, replay, chunk, armed, configs)
        total += n
        extra += 1
    if not configs:
        from .errors import ZeroFlux
        raise ZeroFlux(f"no effective crossing of lambda_0={lam_0:g}")
    T = total * model.time_per_step
    flux = FluxEstimate(len(configs) / T, len(configs), T, configs, lam_0, total + steps)
    return flux, dist


def run_soffs(model: Model, regions: RegionSpec, placement: PlacementConfig | None = None,
              budget: TrialBudget | None = None, seed: int = 0, start=None, workers: int = 1,
              extended_factor: int = 20, ims_threshold: float = 0.1, detect: bool = True,
              max_stages: int = 4, relax_chunk: int | None = None, relax_eps: float = 0.01,
              max_interfaces: int = 500, stop_after_ims: bool = False) -> SoffsResult:
    """Place interfaces on the fly, sample exact probabilities, and stage through traps.

    With ``stop_after_ims`` the run ends after the first located IMS; that stage
    is returned with ``complete=False``.
    """
    placement = placement or PlacementConfig()
    budget = budget or TrialBudget()
    t0 = time.perf_counter()
    start = model.initial_state() if start is None else start
    stages: list[StageResult] = []
    reports: list[ImsReport] = []
    total_steps = 0
    integer = model.integer_order_parameter
    ext_steps = extended_factor * placement.T1
    relax_chunk = relax_chunk or 50 * placement.T1
    cur_regions = regions
    for stage_no in range(max_stages):
        ts = time.perf_counter()
        flux, dist0 = basin_stage(model, start, cur_regions, placement, seed, stage_no)
        log.info("stage %d: lambda_A=%g lambda_0=%g phi_0=%.4g (n_0=%d)", stage_no,
                 cur_regions.lambda_A, flux.lambda_0, flux.phi_0, flux.n_0)
        lams = [flux.lambda_0]
        configs = flux.stored_configs
        censuses: list[TrialCensus] = []
        stats: list[InterfaceStats] = []
        dists = [dist0]
        report = None
        escaped: list = []
        steps_stage = flux.steps
        while lams[-1] < cur_regions.lambda_B:
            i = len(lams) - 1
            if i >= max_interfaces:
                raise SamplingError(f"more than {max_interfaces} interfaces without reaching B")
            stage_id = (LOCAL, stage_no, i)
            dist, local, lsteps = sample_local_distribution(
                model, configs, lams[-1], cur_regions, placement, seed, stage_id, workers,
                keep_trajectories=True)
            lam_next = place_next_interface(dist, placement, integer)
            census, successes, trapped, csteps = classify_trials(
                model, configs, lam_next, cur_regions, budget, ext_steps, seed, stage_id,
                local=local, workers=workers, lam_from=lams[-1])
            del local
            steps_stage += lsteps + csteps
            log.info("stage %d interface %d: %g -> %g  reached %d returned %d undecided %d of %d",
                     stage_no, i, lams[-1], lam_next, census.n_reached, census.n_returned,
                     census.n_undecided, census.M)
            censuses.append(census)
            dists.append(dist)
            fr = [c.undecided_fraction for c in censuses]
            if detect and trapped and fr[-1] >= ims_threshold and \
                    (len(fr) == 1 or fr[-2] < ims_threshold):
                trig = len(censuses) - 1
                pick = derive_stream(seed, (RELAX, stage_no, 1), trig).generator().integers(len(trapped))
                try:
                    report = locate_ims(model, trapped[int(pick)], cur_regions, seed,
                                        (RELAX, stage_no, trig), chunk=relax_chunk, eps=relax_eps,
                                        bin_width=placement.bin_width)
                except EscapedTrap as exc:
                    # a transient slowdown, not a trap: keep going with plain FFS statistics
                    log.warning("stage %d interface %d: undecided fraction %.3g but %s",
                                stage_no, trig, fr[-1], exc)
                    escaped.append((trig, lams[-1], str(exc)))
                    report = None
                else:
                    report.trigger_index = trig
                    report.lambdas = [c.lam_from for c in censuses]
                    report.fractions = fr
                    report.stage = stage_no
                    steps_stage += report.relax_steps
                    log.info("stage %d: IMS triggered at interface %d, lambda_IMS=%g",
                             stage_no, trig, report.lambda_ims)
                    break
            if census.n_reached == 0:
                raise DeadInterface(f"stage {stage_no}: no trial from lambda={lams[-1]:g} "
                                    f"reached {lam_next:g} ({census})")
            stats.append(InterfaceStats(census.lam_from, lam_next, census.n_reached, census.M,
                                        census.p, binomial_se(census.n_reached, census.M),
                                        census.n_returned, census.n_undecided, csteps + lsteps))
            lams.append(lam_next)
            configs = successes
        probs = [s.p for s in stats]
        k, log_k = compute_rate(flux.phi_0, probs)
        iface = InterfaceSet(tuple(lams))
        total_steps += steps_stage
        rate = RateEstimate(flux.phi_0, probs, k, log_k, iface, flux, stats,
                            time.perf_counter() - ts, steps_stage)
        stages.append(StageResult(cur_regions, rate, censuses, dists, report, report is None, escaped))
        if report is None:
            break
        reports.append(report)
        if stop_after_ims:
            break
        lam_new = report.lambda_ims
        if lam_new >= cur_regions.lambda_B or lam_new <= cur_regions.lambda_A:
            raise SamplingError(f"IMS at {lam_new:g} outside the current stage")
        cur_regions = RegionSpec(lam_new, regions.lambda_B)
        start = report.representative
    else:
        raise SamplingError(f"gave up after {max_stages} stages")
    return SoffsResult(stages, reports, time.perf_counter() - t0, total_steps)
