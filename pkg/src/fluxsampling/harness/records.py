"""Plain-text artifacts. Every file opens with a header naming config hash and seed."""
from __future__ import annotations

import datetime as _dt
import math
from pathlib import Path

import numpy as np
import tomli_w

from .. import __version__
from ..stats import RepeatSummary
from .config import ExperimentConfig


def header_line(cfg: ExperimentConfig, kind: str) -> str:
    return f"# fluxsampling {__version__} {kind} config_hash={cfg.digest()} master_seed={cfg.seed}"


class OutputDir:
    """Single writer for one campaign's artifacts."""

    def __init__(self, cfg: ExperimentConfig, root=None):
        self.cfg = cfg
        self.root = Path(root if root is not None else cfg.campaign["out"])
        self.root.mkdir(parents=True, exist_ok=True)
        self.written: list[Path] = []

    def path(self, name: str) -> Path:
        return self.root / name

    def write_text(self, name: str, body: str, kind: str, comment: str = "#") -> Path:
        p = self.path(name)
        p.parent.mkdir(parents=True, exist_ok=True)
        head = header_line(self.cfg, kind)
        if comment != "#":
            head = comment + head[1:]
        p.write_text(head + "\n" + body)
        self.written.append(p)
        return p

    def write_table(self, name: str, columns: list[str], rows, kind: str) -> Path:
        lines = [",".join(columns)]
        for r in rows:
            lines.append(",".join(_fmt(v) for v in r))
        return self.write_text(name, "\n".join(lines) + "\n", kind)

    def write_histogram(self, name: str, hist, kind: str = "histogram", note: str = "") -> Path:
        body = hist.to_table(note) if note else hist.to_table()
        return self.write_text(name, body, kind)

    def write_bytes(self, name: str, data: bytes) -> Path:
        p = self.path(name)
        p.write_bytes(data)
        self.written.append(p)
        # binary snapshots get a sidecar header, they cannot carry one inline
        self.write_text(name + ".txt", f"snapshot {name}: {len(data)} bytes\n", "snapshot")
        return p


def _fmt(v) -> str:
    if isinstance(v, (float, np.floating)):
        if math.isnan(v):
            return "nan"
        return f"{float(v):.10g}"
    return str(v)


def interface_rows(rate) -> list:
    rows = []
    for i, st in enumerate(rate.stats):
        rows.append((i, st.lam_from, st.lam_to, st.n_success, st.n_trials, st.p, st.se,
                     st.n_returned, st.n_undecided, st.steps))
    return rows


INTERFACE_COLUMNS = ["i", "lambda_i", "lambda_next", "n_success", "n_trials", "p", "se",
                     "n_returned", "n_undecided", "steps"]
RATE_COLUMNS = ["sampler", "repeat", "seed", "stage", "k_AB", "log_k", "phi_0", "n_interfaces",
                "wall_time", "steps"]


def rate_rows(results_by_sampler: dict) -> list:
    rows = []
    for name, results in results_by_sampler.items():
        for rep, res in enumerate(results):
            for j, st in enumerate(res.stages):
                rows.append((name, rep, res.seed, j, st.k_AB, st.log_k, st.phi_0, len(st.interfaces),
                             res.wall_time, st.steps))
            if len(res.stages) > 1:
                rows.append((name, rep, res.seed, "total", res.k_AB, res.log_k, float("nan"),
                             sum(len(s.interfaces) for s in res.stages), res.wall_time, res.steps))
    return rows


def summary_rows(summaries: dict) -> list:
    return [(name, s.n, s.mean, s.se, s.median_time, s.mean_time) for name, s in summaries.items()]


SUMMARY_COLUMNS = ["sampler", "repeats", "mean_k_AB", "se_k_AB", "median_wall_time", "mean_wall_time"]


def run_record(cfg: ExperimentConfig, results_by_sampler: dict, summaries: dict | None = None,
               extra: dict | None = None) -> str:
    """TOML run record: config snapshot plus every repeat's estimates and seeds."""
    doc = {
        "library_version": __version__,
        "timestamp": _dt.datetime.now(_dt.timezone.utc).isoformat(timespec="seconds"),
        "config_hash": cfg.digest(),
        "master_seed": cfg.seed,
        "config": cfg.to_dict(),
        "runs": [],
    }
    for name, results in results_by_sampler.items():
        for rep, res in enumerate(results):
            run = {"sampler": name, "repeat": rep, "seed": res.seed, "k_AB": res.k_AB,
                   "wall_time": res.wall_time, "steps": res.steps, "stages": []}
            for st in res.stages:
                run["stages"].append({
                    "phi_0": st.phi_0, "k_AB": st.k_AB, "log_k": st.log_k,
                    "interfaces": list(st.interfaces.lambdas), "probabilities": list(st.probabilities),
                    "standard_errors": list(st.standard_errors),
                })
            run["ims"] = [{"trigger_index": r.trigger_index, "lambda_ims": r.lambda_ims,
                           "stage": r.stage, "fractions": list(r.fractions),
                           "lambdas": list(r.lambdas)} for r in res.ims]
            doc["runs"].append(run)
    if summaries:
        doc["summary"] = {name: {"repeats": s.n, "mean_k_AB": s.mean, "se_k_AB": s.se,
                                 "median_wall_time": s.median_time, "mean_wall_time": s.mean_time}
                          for name, s in summaries.items()}
    if extra:
        doc["extra"] = extra
    return tomli_w.dumps(_clean(doc))


def _clean(obj):
    # tomli_w cannot write numpy scalars or None
    if isinstance(obj, dict):
        return {k: _clean(v) for k, v in obj.items() if v is not None}
    if isinstance(obj, (list, tuple)):
        return [_clean(v) for v in obj]
    if isinstance(obj, np.integer):
        return int(obj)
    if isinstance(obj, np.floating):
        return float(obj)
    return obj


def format_summary(summaries: dict[str, RepeatSummary]) -> str:
    lines = [f"{'sampler':<8} {'n':>4} {'k_AB':>12} {'SE':>10} {'median t/s':>11} {'mean t/s':>9}"]
    for name, s in summaries.items():
        se = f"{s.se:10.3e}" if not math.isnan(s.se) else f"{'-':>10}"
        lines.append(f"{name:<8} {s.n:>4} {s.mean:12.4e} {se} {s.median_time:11.3f} {s.mean_time:9.3f}")
    return "\n".join(lines)
