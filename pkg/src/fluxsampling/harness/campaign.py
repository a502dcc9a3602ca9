"""Repeated-run campaigns: timing comparison, IMS scan, pore-width sweep, oracle suite."""
from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field

import numpy as np

from .. import oracles
from ..core import RegionSpec
from ..errors import SamplingError
from ..ffs import InterfaceSet, TrialBudget, run_ffs
from ..soffs import PlacementConfig, SoffsResult, run_soffs
from ..stats import agree_within, summarize
from .config import ISING_LAMBDA_B_MARGIN, ExperimentConfig
from .runners import (RunResult, build_model, ffs_interfaces, pilot_interfaces, repeat_seed,
                      run_one, run_soffs_from)

log = logging.getLogger(__name__)


@dataclass
class Campaign:
    results: dict                     # sampler -> [RunResult]
    summaries: dict                   # sampler -> RepeatSummary
    interfaces: InterfaceSet | None = None

    def ratio(self, num: str, den: str) -> float:
        return self.summaries[num].median_time / self.summaries[den].median_time


def run_repeats(cfg: ExperimentConfig, sampler: str, repeats: int | None = None,
                model=None, regions=None, interfaces=None) -> list[RunResult]:
    if model is None:
        model, regions = build_model(cfg)
    n = cfg.campaign["repeats"] if repeats is None else repeats
    out = []
    for r in range(n):
        res = run_one(cfg, sampler, repeat_seed(cfg.seed, r), model, regions, interfaces)
        log.info("%s repeat %d: k_AB=%.4g  t=%.2fs", sampler, r, res.k_AB, res.wall_time)
        out.append(res)
    return out


def timing_campaign(cfg: ExperimentConfig, samplers=None, repeats: int | None = None) -> Campaign:
    """Every sampler over the same repeat seeds; FFS/IFFS interfaces from a pilot SO-FFS run.

    Repeats are interleaved (SO-FFS, FFS, IFFS for seed 0, then seed 1, ...) so
    that slow drifts of the machine affect all samplers alike.
    """
    samplers = list(samplers or cfg.campaign["samplers"])
    n = cfg.campaign["repeats"] if repeats is None else repeats
    if n < 1:
        raise ValueError("repeats must be >= 1")
    model, regions = build_model(cfg)
    iface = None
    if any(s != "soffs" for s in samplers):
        iface = ffs_interfaces(cfg, model, regions, pilot_interfaces(cfg, model, regions))
        log.info("equal-spaced interfaces: %s", np.round(iface.lambdas, 4).tolist())
    results = {s: [] for s in samplers}
    for r in range(n):
        seed = repeat_seed(cfg.seed, r)
        for s in samplers:
            res = run_one(cfg, s, seed, model, regions, iface)
            log.info("repeat %d %s: k_AB=%.4g t=%.3fs", r, s, res.k_AB, res.wall_time)
            results[s].append(res)
    summaries = {s: summarize([x.k_AB for x in v], [x.wall_time for x in v], s)
                 for s, v in results.items()}
    return Campaign(results, summaries, iface)


def mutual_agreement(summaries: dict, n_sigma: float = 3.0) -> dict:
    names = list(summaries)
    return {(a, b): agree_within(summaries[a], summaries[b], n_sigma)
            for i, a in enumerate(names) for b in names[i + 1:]}


# -- IMS scan -------------------------------------------------------------------

@dataclass
class ImsScan:
    result: SoffsResult
    lambdas: list
    fractions: list
    report: object = None

    @property
    def found(self) -> bool:
        return self.report is not None

    def jump(self, low: float = 0.02, high: float = 0.1):
        """First interface ``i`` with ``fractions[i-1] < low`` and ``fractions[i] > high``."""
        for i in range(1, len(self.fractions)):
            if self.fractions[i - 1] < low and self.fractions[i] > high:
                return i, self.lambdas[i]
        return None


def ims_scan(cfg: ExperimentConfig, seed: int | None = None) -> ImsScan:
    """First SO-FFS stage only: the undecided-fraction series and the located IMS, if any."""
    model, regions = build_model(cfg)
    res = run_soffs_from(cfg, model, regions, cfg.seed if seed is None else seed, stop_after_ims=True)
    st = res.stages[0]
    lam = [c.lam_from for c in st.censuses]
    fr = [c.undecided_fraction for c in st.censuses]
    return ImsScan(res, lam, fr, st.ims)


# -- pore sweep -----------------------------------------------------------------

@dataclass
class SweepRow:
    """Per-width means over the repeats that produced two stages."""

    w: int
    k_in: float = float("nan")
    k_out: float = float("nan")
    k_AB: float = float("nan")
    lambda_ims: float = float("nan")
    n_stages: int = 0
    wall_time: float = float("nan")
    error: str = ""
    n_ok: int = 0
    runs: list = field(default_factory=list, repr=False)   # (k_in, k_out, k_AB) per good repeat


def _width_config(cfg: ExperimentConfig, w: int) -> ExperimentConfig:
    d = cfg.to_dict()
    d["model"]["w"] = int(w)
    # keep lambda_B at the same distance above the pore as the base config
    base = cfg.model["lambda_B"] - cfg.model["w"] * cfg.model["L"] // 2
    d["model"]["lambda_B"] = float(w * cfg.model["L"] // 2 + base)
    return ExperimentConfig.from_dict(d)


def split_rates(res: RunResult):
    """``(k_in, k_out)`` of a staged run; later stages are sequential steps out of the pore."""
    rates = [s.k_AB for s in res.stages]
    if len(rates) < 2:
        return None
    return rates[0], 1.0 / math.fsum(1.0 / k for k in rates[1:])


def pore_sweep(cfg: ExperimentConfig, widths=None, seed: int | None = None,
               repeats: int | None = None) -> list[SweepRow]:
    """Staged SO-FFS runs per width, averaged over repeats; errors are recorded per row, not raised.

    A repeat that finds no intermediate state (or fails) is left out of the
    means and noted in ``error``.
    """
    widths = list(widths if widths is not None else cfg.campaign["widths"])
    if not widths:
        raise ValueError("no widths given")
    n = cfg.campaign["repeats"] if repeats is None else repeats
    master = cfg.seed if seed is None else seed
    rows = []
    for w in widths:
        row = SweepRow(int(w))
        wc = _width_config(cfg, w)
        model, regions = build_model(wc)
        notes, lam, times, stages = [], [], [], []
        for r in range(n):
            try:
                res = run_one(wc, "soffs", repeat_seed(master, r), model, regions)
            except SamplingError as exc:
                notes.append(f"repeat {r}: {type(exc).__name__}: {exc}")
                continue
            times.append(res.wall_time)
            stages.append(len(res.stages))
            pair = split_rates(res)
            if pair is None:
                notes.append(f"repeat {r}: no intermediate state found")
                continue
            row.runs.append((pair[0], pair[1], res.k_AB))
            lam.append(res.ims[0].lambda_ims)
        if row.runs:
            k = np.array(row.runs)
            row.k_in, row.k_out = float(k[:, 0].mean()), float(k[:, 1].mean())
            row.k_AB = float(k[:, 2].mean())
            row.lambda_ims = float(np.mean(lam))
        row.n_ok = len(row.runs)
        row.n_stages = max(stages, default=0)
        row.wall_time = float(np.sum(times)) if times else float("nan")
        row.error = "; ".join(notes)
        log.info("pore sweep w=%d: %s", w, row)
        rows.append(row)
    return rows


def interior_maximum(values) -> bool:
    v = np.asarray(values, dtype=float)
    if len(v) < 3 or not np.all(np.isfinite(v)):
        return False
    k = int(np.argmax(v))
    return 0 < k < len(v) - 1


def strictly_monotone(values, increasing: bool) -> bool:
    d = np.diff(np.asarray(values, dtype=float))
    return bool(np.all(d > 0) if increasing else np.all(d < 0))


# -- oracle suite ---------------------------------------------------------------

@dataclass
class OracleCheck:
    name: str
    passed: bool
    detail: str = ""


@dataclass
class OracleReport:
    checks: list = field(default_factory=list)

    @property
    def passed(self) -> bool:
        return all(c.passed for c in self.checks)


def validate_oracle(seed: int = 0, repeats: int = 200, n_sites: int = 21, p_up: float = 0.4,
                    lambda_A: float = 1, lambda_B: float = 15) -> OracleReport:
    """FFS and SO-FFS on a biased walk against the exact absorbing-chain rate."""
    from ..models import BirthDeathChain
    from ..core import child_seed

    chain = BirthDeathChain.uniform(n_sites, p_up, 1.0 - p_up)
    regions = RegionSpec(lambda_A, lambda_B)
    k_exact = oracles.exact_rate(chain, lambda_B)
    report = OracleReport()
    budget = TrialBudget(n_trials=500)
    iface = InterfaceSet.equal_spaced(lambda_A + 2, lambda_B, 5, integer=True)
    ks = [run_ffs(chain, regions, iface, budget, child_seed(seed, 11, r), 20_000).k_AB
          for r in range(repeats)]
    s = summarize(ks)
    report.checks.append(OracleCheck(
        "ffs_rate_vs_exact", abs(s.mean - k_exact) <= 3 * s.se,
        f"mean={s.mean:.5g} se={s.se:.3g} exact={k_exact:.5g}"))
    pl = PlacementConfig(T1=100, basin_chunk=20_000)
    ks = [run_soffs(chain, regions, pl, budget, child_seed(seed, 12, r)).k_AB for r in range(repeats)]
    s = summarize(ks)
    report.checks.append(OracleCheck(
        "soffs_rate_vs_exact", abs(s.mean - k_exact) <= 3 * s.se,
        f"mean={s.mean:.5g} se={s.se:.3g} exact={k_exact:.5g}"))
    # individual interface probabilities against gambler's ruin
    est = run_ffs(chain, regions, iface, TrialBudget(n_trials=4000), child_seed(seed, 13, 0), 20_000)
    exact = oracles.exact_interface_probabilities(chain, iface, lambda_A)
    z = [(st.p - e) / max(math.sqrt(e * (1 - e) / st.n_trials), 1e-12)
         for st, e in zip(est.stats, exact)]
    report.checks.append(OracleCheck(
        "interface_probabilities_vs_gamblers_ruin", all(abs(x) <= 3.5 for x in z),
        "z=" + ",".join(f"{x:.2f}" for x in z)))
    phi_exact = oracles.exact_basin_flux(chain, iface[0], lambda_A, lambda_B)
    se_phi = math.sqrt(est.flux.n_0) / est.flux.T
    report.checks.append(OracleCheck(
        "basin_flux_vs_exact", abs(est.phi_0 - phi_exact) <= 4 * se_phi,
        f"phi={est.phi_0:.5g} exact={phi_exact:.5g}"))
    return report


def suggested_ising_lambda_B(L: int, w: int) -> float:
    return float(w * L // 2 + ISING_LAMBDA_B_MARGIN)
