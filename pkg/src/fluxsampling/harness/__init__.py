"""Experiment harness: TOML configs, repeated campaigns, plain-text records and the CLI."""
from .campaign import (Campaign, ImsScan, SweepRow, ims_scan, mutual_agreement, pore_sweep,
                       run_repeats, timing_campaign, validate_oracle)
from .config import ExperimentConfig, default_config
from .runners import RunResult, build_model, repeat_seed, run_one

__all__ = ["Campaign", "ExperimentConfig", "ImsScan", "RunResult", "SweepRow", "build_model",
           "default_config", "ims_scan", "mutual_agreement", "pore_sweep", "repeat_seed",
           "run_one", "run_repeats", "timing_campaign", "validate_oracle"]
