"""Experiment configuration: three TOML sections, explicit defaults, stable hash.

A config file has ``[model]``, ``[sampler]`` and ``[campaign]`` tables. Every
key has a documented default (except the Ising ``lambda_B``, which must be
given), unknown keys are rejected, and the serialized form lists every value,
defaults included, so a saved config reproduces its run exactly.
"""
from __future__ import annotations

import copy
import hashlib
import sys
from dataclasses import dataclass, field
from pathlib import Path

import tomli_w

if sys.version_info >= (3, 11):
    import tomllib
else:
    import tomli as tomllib

from ..errors import ConfigError

REQUIRED = object()

MODEL_DEFAULTS = {
    "maier_stein": {
        "u": 1.0, "beta": 2.0, "D": 0.01, "dt": 0.01, "bin_width": 0.01,
        "start": [-1.0, 0.0], "lambda_A": -0.8, "lambda_B": 0.8,
    },
    "ising_pore": {
        "L": 60, "w": 12, "J": 0.8, "h": 0.05, "bulk_periodic": True,
        "lambda_A": 20.0, "lambda_B": REQUIRED,
    },
    "walk": {
        # kind: uniform (n_sites, p_up, p_down) | piecewise (segments) | potential (potential)
        "kind": "uniform", "n_sites": 21, "p_up": 0.4, "p_down": 0.6,
        "segments": [], "potential": [], "start": 0, "lambda_A": 1.0, "lambda_B": 15.0,
    },
}

# suggested Ising lambda_B: pore sites plus this many up spins of post-critical bulk growth
ISING_LAMBDA_B_MARGIN = 700

SAMPLER_DEFAULTS = {
    "name": "soffs",
    "workers": 1,
    # trial budget
    "budget_mode": "fixed", "n_trials": 500, "n_successes": 100, "max_trials": 200_000,
    "max_steps": 10_000, "trial_batch": 200,
    # plain FFS / IFFS
    "T": 100_000, "min_crossings": 100, "lambda_0": float("nan"), "n_interfaces": 0,
    "interfaces": [], "iterations": 3,
    # SO-FFS placement
    "placement_mode": "cumulant", "threshold": 0.92, "T1": 100, "local_batch": 100,
    "eps": 0.01, "max_batches": 50, "min_batches": 2, "basin_chunk": 100_000,
    "basin_max_chunks": 200, "min_basin_crossings": 100,
    # classification and IMS
    "extended_factor": 20, "ims_threshold": 0.1, "detect_ims": True, "max_stages": 4,
    "relax_chunk": 0, "relax_eps": 0.01,
}

CAMPAIGN_DEFAULTS = {
    "repeats": 1, "seed": 0, "out": "out", "samplers": ["soffs", "ffs", "iffs"],
    "widths": [], "figures": True,
}

SECTIONS = ("model", "sampler", "campaign")


def _check_type(key, value, default):
    if default is REQUIRED:
        if not isinstance(value, (int, float)) or isinstance(value, bool):
            raise ConfigError(key, f"expected a number, got {value!r}")
        return float(value)
    if isinstance(default, bool):
        if not isinstance(value, bool):
            raise ConfigError(key, f"expected true/false, got {value!r}")
        return value
    if isinstance(default, int):
        if isinstance(value, bool) or not isinstance(value, int):
            raise ConfigError(key, f"expected an integer, got {value!r}")
        return value
    if isinstance(default, float):
        if isinstance(value, bool) or not isinstance(value, (int, float)):
            raise ConfigError(key, f"expected a number, got {value!r}")
        return float(value)
    if isinstance(default, str):
        if not isinstance(value, str):
            raise ConfigError(key, f"expected a string, got {value!r}")
        return value
    if isinstance(default, list):
        if not isinstance(value, list):
            raise ConfigError(key, f"expected a list, got {value!r}")
        return value
    return value


def _fill(section: str, given: dict, defaults: dict) -> dict:
    out = {}
    for k, v in given.items():
        if k not in defaults:
            raise ConfigError(f"{section}.{k}", "unknown key")
        out[k] = _check_type(f"{section}.{k}", v, defaults[k])
    for k, d in defaults.items():
        if k not in out:
            if d is REQUIRED:
                raise ConfigError(f"{section}.{k}", "required for this model")
            out[k] = copy.deepcopy(d)
    return out


@dataclass
class ExperimentConfig:
    model: dict
    sampler: dict
    campaign: dict = field(default_factory=lambda: dict(CAMPAIGN_DEFAULTS))

    @property
    def model_name(self) -> str:
        return self.model["name"]

    @property
    def seed(self) -> int:
        return int(self.campaign["seed"])

    @classmethod
    def from_dict(cls, data: dict) -> "ExperimentConfig":
        for s in data:
            if s not in SECTIONS:
                raise ConfigError(s, "unknown section")
        if "model" not in data:
            raise ConfigError("model", "missing section")
        m = dict(data["model"])
        name = m.pop("name", None)
        if name is None:
            raise ConfigError("model.name", "missing")
        if name not in MODEL_DEFAULTS:
            raise ConfigError("model.name", f"unknown model {name!r}; choose from {sorted(MODEL_DEFAULTS)}")
        model = {"name": name, **_fill("model", m, MODEL_DEFAULTS[name])}
        sampler = _fill("sampler", dict(data.get("sampler", {})), SAMPLER_DEFAULTS)
        campaign = _fill("campaign", dict(data.get("campaign", {})), CAMPAIGN_DEFAULTS)
        cfg = cls(model, sampler, campaign)
        cfg.validate()
        return cfg

    def validate(self):
        s, c = self.sampler, self.campaign
        if s["name"] not in ("ffs", "soffs", "iffs"):
            raise ConfigError("sampler.name", f"unknown sampler {s['name']!r}")
        if s["budget_mode"] not in ("fixed", "successes"):
            raise ConfigError("sampler.budget_mode", "must be 'fixed' or 'successes'")
        if s["placement_mode"] not in ("cumulant", "p0"):
            raise ConfigError("sampler.placement_mode", "must be 'cumulant' or 'p0'")
        if not 0.0 < s["threshold"] < 1.0:
            raise ConfigError("sampler.threshold", "must lie in (0, 1)")
        for k in ("T1", "T", "n_trials", "local_batch", "workers", "max_steps", "iterations"):
            if s[k] < 1:
                raise ConfigError(f"sampler.{k}", "must be >= 1")
        if c["repeats"] < 1:
            raise ConfigError("campaign.repeats", "must be >= 1")
        if not 0 <= c["seed"] < 2 ** 64:
            raise ConfigError("campaign.seed", "must be an unsigned 64-bit integer")
        for x in c["samplers"]:
            if x not in ("ffs", "soffs", "iffs"):
                raise ConfigError("campaign.samplers", f"unknown sampler {x!r}")
        if not self.model["lambda_A"] < self.model["lambda_B"]:
            raise ConfigError("model.lambda_B", "must exceed model.lambda_A")
        if self.model_name == "ising_pore":
            L, w = self.model["L"], self.model["w"]
            if L < 2 or L % 2:
                raise ConfigError("model.L", "must be an even integer >= 2")
            if not 0 < w <= L:
                raise ConfigError("model.w", "must satisfy 0 < w <= L")
            for x in c["widths"]:
                if not isinstance(x, int) or not 0 < x <= L:
                    raise ConfigError("campaign.widths", f"width {x!r} invalid for L={L}")

    def to_dict(self) -> dict:
        return {"model": copy.deepcopy(self.model), "sampler": copy.deepcopy(self.sampler),
                "campaign": copy.deepcopy(self.campaign)}

    def dumps(self) -> str:
        return tomli_w.dumps(self.to_dict())

    @classmethod
    def loads(cls, text: str) -> "ExperimentConfig":
        try:
            data = tomllib.loads(text)
        except tomllib.TOMLDecodeError as exc:
            raise ConfigError("config", f"not valid TOML: {exc}") from None
        return cls.from_dict(data)

    @classmethod
    def load(cls, path) -> "ExperimentConfig":
        p = Path(path)
        if not p.exists():
            raise ConfigError("config", f"file not found: {p}")
        return cls.loads(p.read_text())

    def digest(self) -> str:
        """Short content hash of the fully expanded config."""
        return hashlib.sha256(self.dumps().encode()).hexdigest()[:16]

    def with_overrides(self, overrides) -> "ExperimentConfig":
        """Apply ``section.key=value`` strings; values are parsed as TOML literals."""
        data = self.to_dict()
        for item in overrides or ():
            if "=" not in item:
                raise ConfigError(item, "override must look like section.key=value")
            path, raw = item.split("=", 1)
            path = path.strip()
            if "." not in path:
                raise ConfigError(path, "override key must be section.key")
            section, key = path.split(".", 1)
            if section not in SECTIONS:
                raise ConfigError(section, "unknown section")
            data[section][key] = parse_value(raw.strip())
        if data["model"].get("name") != self.model_name:
            # switching model: keep only keys the new model knows about
            keep = MODEL_DEFAULTS.get(data["model"]["name"], {})
            data["model"] = {k: v for k, v in data["model"].items() if k == "name" or k in keep}
        return ExperimentConfig.from_dict(data)


def parse_value(raw: str):
    try:
        return tomllib.loads(f"v = {raw}")["v"]
    except tomllib.TOMLDecodeError:
        return raw


def default_config(model: str = "maier_stein", **model_params) -> ExperimentConfig:
    m = {"name": model, **model_params}
    if model == "ising_pore" and "lambda_B" not in m:
        L = m.get("L", 60)
        w = m.get("w", 12)
        m["lambda_B"] = float(w * L // 2 + ISING_LAMBDA_B_MARGIN)
    return ExperimentConfig.from_dict({"model": m})
