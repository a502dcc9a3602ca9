"""Build models and samplers from a config and run one repeat of one sampler."""
from __future__ import annotations

import math
import time
from dataclasses import dataclass, field

from ..core import RegionSpec, child_seed
from ..ffs import InterfaceSet, RateEstimate, TrialBudget, run_ffs
from ..iffs import IffsSchedule, run_iffs
from ..models import BirthDeathChain, IsingModel, IsingPoreParams, MaierStein, MaierSteinParams
from ..soffs import PlacementConfig, SoffsResult, run_soffs
from ..errors import ConfigError
from .config import ExperimentConfig

REPEAT_KEY = 1
PILOT_KEY = 2


def build_model(cfg: ExperimentConfig):
    """``(model, RegionSpec)`` for the ``[model]`` section."""
    m = cfg.model
    name = m["name"]
    if name == "maier_stein":
        if len(m["start"]) != 2:
            raise ConfigError("model.start", "expected [x, y]")
        model = MaierStein(MaierSteinParams(m["u"], m["beta"], m["D"], m["dt"]),
                           bin_width=m["bin_width"], start=m["start"])
    elif name == "ising_pore":
        model = IsingModel.pore(IsingPoreParams(m["L"], m["w"], m["J"], m["h"], m["bulk_periodic"]))
    elif name == "walk":
        kind = m["kind"]
        if kind == "uniform":
            model = BirthDeathChain.uniform(m["n_sites"], m["p_up"], m["p_down"], start=m["start"])
        elif kind == "piecewise":
            if not m["segments"]:
                raise ConfigError("model.segments", "piecewise walk needs [[n_sites, p_up], ...]")
            model = BirthDeathChain.piecewise([tuple(s) for s in m["segments"]], start=m["start"])
        elif kind == "potential":
            if not m["potential"]:
                raise ConfigError("model.potential", "potential walk needs a list of values")
            model = BirthDeathChain.from_potential(m["potential"], start=m["start"])
        else:
            raise ConfigError("model.kind", f"unknown walk kind {kind!r}")
    else:  # pragma: no cover - from_dict already rejects this
        raise ConfigError("model.name", f"unknown model {name!r}")
    return model, RegionSpec(m["lambda_A"], m["lambda_B"])


def build_budget(cfg: ExperimentConfig) -> TrialBudget:
    s = cfg.sampler
    return TrialBudget(s["budget_mode"], s["n_trials"], s["n_successes"], s["max_trials"],
                       s["max_steps"], s["trial_batch"])


def build_placement(cfg: ExperimentConfig) -> PlacementConfig:
    s = cfg.sampler
    return PlacementConfig(s["placement_mode"], s["threshold"], s["T1"], s["local_batch"], s["eps"],
                           s["max_batches"], s["min_batches"], None, s["basin_chunk"],
                           s["basin_max_chunks"], s["min_basin_crossings"])


@dataclass
class RunResult:
    """One repeat of one sampler, flattened for reporting."""

    sampler: str
    seed: int
    k_AB: float
    wall_time: float
    steps: int
    stages: list = field(repr=False)            # RateEstimate per stage
    ims: list = field(default_factory=list, repr=False)
    raw: object = field(default=None, repr=False)

    @property
    def rate(self) -> RateEstimate:
        return self.stages[-1]

    @property
    def interfaces(self) -> InterfaceSet:
        return self.stages[-1].interfaces

    @property
    def log_k(self) -> float:
        return math.log(self.k_AB) if self.k_AB > 0 else -math.inf


def run_soffs_from(cfg, model, regions, seed, start=None, stop_after_ims=False) -> SoffsResult:
    s = cfg.sampler
    return run_soffs(model, regions, build_placement(cfg), build_budget(cfg), seed, start=start,
                     workers=s["workers"], extended_factor=s["extended_factor"],
                     ims_threshold=s["ims_threshold"], detect=s["detect_ims"],
                     max_stages=s["max_stages"], relax_chunk=s["relax_chunk"] or None,
                     relax_eps=s["relax_eps"], stop_after_ims=stop_after_ims)


def pilot_interfaces(cfg: ExperimentConfig, model, regions) -> tuple[int, float]:
    """Interface count and ``lambda_0`` for equal-spaced runs, from a pilot SO-FFS run.

    Explicit ``sampler.n_interfaces`` / ``sampler.lambda_0`` take precedence.
    """
    n = cfg.sampler["n_interfaces"]
    lam0 = cfg.sampler["lambda_0"]
    if n > 0 and not math.isnan(lam0):
        return n, lam0
    pilot = run_soffs_from(cfg, model, regions, child_seed(cfg.seed, PILOT_KEY))
    st = pilot.stages[-1].rate
    return (n if n > 0 else len(st.interfaces)), (lam0 if not math.isnan(lam0) else st.interfaces[0])


def ffs_interfaces(cfg: ExperimentConfig, model, regions, pilot=None) -> InterfaceSet:
    if cfg.sampler["interfaces"]:
        return InterfaceSet(tuple(cfg.sampler["interfaces"])).validate(regions)
    n, lam0 = pilot if pilot is not None else pilot_interfaces(cfg, model, regions)
    return InterfaceSet.equal_spaced(lam0, regions.lambda_B, n, model.integer_order_parameter)


def run_one(cfg: ExperimentConfig, sampler: str, seed: int, model=None, regions=None,
            interfaces: InterfaceSet | None = None) -> RunResult:
    """Time one sampler call (model construction excluded)."""
    if model is None:
        model, regions = build_model(cfg)
    s = cfg.sampler
    budget = build_budget(cfg)
    if sampler == "soffs":
        t0 = time.perf_counter()
        res = run_soffs_from(cfg, model, regions, seed)
        wall = time.perf_counter() - t0
        return RunResult("soffs", seed, res.k_AB, wall, res.steps,
                         [st.rate for st in res.stages], res.ims_reports, res)
    if interfaces is None:
        interfaces = ffs_interfaces(cfg, model, regions)
    if sampler == "ffs":
        t0 = time.perf_counter()
        est = run_ffs(model, regions, interfaces, budget, seed, s["T"],
                      min_crossings=s["min_crossings"], workers=s["workers"])
        wall = time.perf_counter() - t0
        return RunResult("ffs", seed, est.k_AB, wall, est.steps, [est], [], est)
    if sampler == "iffs":
        t0 = time.perf_counter()
        sched: IffsSchedule = run_iffs(model, regions, len(interfaces), s["iterations"], budget, seed,
                                       s["T"], interfaces[0], min_crossings=s["min_crossings"],
                                       workers=s["workers"])
        wall = time.perf_counter() - t0
        return RunResult("iffs", seed, sched.k_AB, wall, sched.steps, [sched.final], [], sched)
    raise ConfigError("sampler.name", f"unknown sampler {sampler!r}")


def repeat_seed(master: int, r: int) -> int:
    """Seed of repeat ``r``, a pure function of the master seed and ``r``."""
    return child_seed(master, REPEAT_KEY, r)
