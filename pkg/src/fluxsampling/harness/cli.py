"""Command line entry point: ``fluxsampling <subcommand> --config PATH [options]``."""
from __future__ import annotations

import argparse
import logging
import sys

from ..errors import ConfigError, SamplingError
from ..stats import summarize
from . import campaign as cmp
from . import records
from .config import ExperimentConfig, default_config

SUBCOMMANDS = ("run-ffs", "run-soffs", "run-iffs", "compare", "ims-scan", "pore-sweep",
               "validate-oracle")

log = logging.getLogger("fluxsampling")


def _u64(text: str) -> int:
    v = int(text, 0)
    if not 0 <= v < 2 ** 64:
        raise argparse.ArgumentTypeError("seed must be an unsigned 64-bit integer")
    return v


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="fluxsampling",
                                description="Forward flux sampling with self-optimized interfaces.")
    sub = p.add_subparsers(dest="command", required=True)
    for name in SUBCOMMANDS:
        sp = sub.add_parser(name)
        sp.add_argument("--config", metavar="PATH", required=name != "validate-oracle",
                        help="TOML file with [model], [sampler] and [campaign] sections")
        sp.add_argument("--seed", type=_u64, metavar="U64", help="master seed")
        sp.add_argument("--repeats", type=int, metavar="N")
        sp.add_argument("--out", metavar="DIR", help="output directory")
        sp.add_argument("--override", action="append", default=[], metavar="KEY=VALUE",
                        help="section.key=value, repeatable")
        sp.add_argument("--no-figures", action="store_true", help="skip PNG figures")
        sp.add_argument("-v", "--verbose", action="store_true")
    return p


def load_config(args) -> ExperimentConfig:
    if args.config:
        cfg = ExperimentConfig.load(args.config)
    else:
        cfg = default_config("walk")
    extra = list(args.override)
    if args.seed is not None:
        extra.append(f"campaign.seed={args.seed}")
    if args.repeats is not None:
        extra.append(f"campaign.repeats={args.repeats}")
    if args.out is not None:
        extra.append(f'campaign.out="{args.out}"')
    if args.no_figures:
        extra.append("campaign.figures=false")
    return cfg.with_overrides(extra) if extra else cfg


def _run_single(cfg: ExperimentConfig, sampler: str, out: records.OutputDir) -> int:
    rc = cfg.with_overrides([f'sampler.name="{sampler}"'])
    model, regions = cmp.build_model(rc)
    iface = None if sampler == "soffs" else cmp.ffs_interfaces(rc, model, regions)
    results = cmp.run_repeats(rc, sampler, model=model, regions=regions, interfaces=iface)
    summ = {sampler: summarize([r.k_AB for r in results], [r.wall_time for r in results], sampler)}
    _write_common(out, rc, {sampler: results}, summ)
    for rep, res in enumerate(results):
        for j, st in enumerate(res.stages):
            out.write_table(f"interfaces_{sampler}_r{rep}_s{j}.csv", records.INTERFACE_COLUMNS,
                            records.interface_rows(st), "interfaces")
        if sampler == "soffs":
            _write_soffs_details(out, res, rep)
    if rc.campaign["figures"]:
        from . import plotting
        out.written.append(plotting.plot_interfaces(results[0].rate, out.path(f"interfaces_{sampler}.png"),
                                                    sampler))
    print(records.format_summary(summ))
    return 0


def _write_soffs_details(out, res, rep):
    for j, stage in enumerate(res.raw.stages):
        out.write_table(f"census_r{rep}_s{j}.csv",
                        ["i", "lambda_i", "lambda_next", "n_reached", "n_returned", "n_undecided", "M"],
                        [(i, c.lam_from, c.lam_to, c.n_reached, c.n_returned, c.n_undecided, c.M)
                         for i, c in enumerate(stage.censuses)], "census")
        for i, d in enumerate(stage.distributions):
            if d.hist.total:
                out.write_histogram(f"hist_r{rep}_s{j}_i{i}.txt", d.hist,
                                    note=f"local visits from lambda={d.lam_i:g}, "
                                         f"{d.n_trajectories} trajectories")
        if stage.ims is not None:
            out.write_histogram(f"ims_density_r{rep}_s{j}.txt", stage.ims.density,
                                note=f"lambda_IMS={stage.ims.lambda_ims:g}")


def _write_common(out, cfg, results, summaries, extra=None):
    out.write_text("config.toml", cfg.dumps(), "config")
    out.write_text("run_record.toml", records.run_record(cfg, results, summaries, extra), "run_record")
    out.write_table("rates.csv", records.RATE_COLUMNS, records.rate_rows(results), "rates")
    out.write_table("summary.csv", records.SUMMARY_COLUMNS, records.summary_rows(summaries), "summary")


def _compare(cfg, out) -> int:
    c = cmp.timing_campaign(cfg)
    _write_common(out, cfg, c.results, c.summaries)
    if c.interfaces is not None:
        out.write_text("ffs_interfaces.txt", "\n".join(f"{x:.10g}" for x in c.interfaces) + "\n",
                       "interfaces")
    print(records.format_summary(c.summaries))
    if "ffs" in c.summaries:
        for other in c.summaries:
            if other != "ffs":
                print(f"median wall time ratio {other}/ffs: {c.ratio(other, 'ffs'):.3f}")
    for (a, b), ok in cmp.mutual_agreement(c.summaries).items():
        print(f"{a} vs {b} agree within 3 sigma: {ok}")
    if cfg.campaign["figures"]:
        from . import plotting
        out.written.append(plotting.plot_compare(c, out.path("compare.png")))
    return 0


def _ims_scan(cfg, out) -> int:
    scan = cmp.ims_scan(cfg)
    out.write_table("ims_fraction.csv", ["lambda_i", "undecided_fraction"],
                    list(zip(scan.lambdas, scan.fractions)), "ims_fraction")
    if scan.found:
        out.write_histogram("ims_density.txt", scan.report.density,
                            note=f"lambda_IMS={scan.report.lambda_ims:g}")
        model, _ = cmp.build_model(cfg)
        if hasattr(model, "to_bytes"):
            out.write_bytes("ims_state.bin", model.to_bytes(scan.report.representative))
        print(f"IMS triggered at interface {scan.report.trigger_index} "
              f"(lambda={scan.lambdas[scan.report.trigger_index]:g}); lambda_IMS={scan.report.lambda_ims:g}")
    else:
        print("no intermediate metastable state detected")
    if cfg.campaign["figures"]:
        from . import plotting
        out.written.append(plotting.plot_ims(scan, out.path("ims_scan.png")))
    return 0


def _pore_sweep(cfg, out) -> int:
    rows = cmp.pore_sweep(cfg)
    out.write_table("pore_sweep.csv", ["w", "k_in", "k_out", "k_AB", "lambda_ims", "n_ok", "n_stages",
                                       "wall_time", "error"],
                    [(r.w, r.k_in, r.k_out, r.k_AB, r.lambda_ims, r.n_ok, r.n_stages, r.wall_time,
                      r.error.replace(",", ";")) for r in rows], "pore_sweep")
    out.write_table("pore_sweep_runs.csv", ["w", "run", "k_in", "k_out", "k_AB"],
                    [(r.w, j, *k) for r in rows for j, k in enumerate(r.runs)], "pore_sweep_runs")
    for r in rows:
        print(f"w={r.w:3d}  k_in={r.k_in:.4g}  k_out={r.k_out:.4g}  k_AB={r.k_AB:.4g}  ({r.n_ok} runs)"
              + (f"  [{r.error}]" if r.error else ""))
    k_in, k_out, k_ab = ([getattr(r, a) for r in rows] for a in ("k_in", "k_out", "k_AB"))
    print(f"k_in decreasing: {cmp.strictly_monotone(k_in, increasing=False)}  "
          f"k_out increasing: {cmp.strictly_monotone(k_out, increasing=True)}  "
          f"k_AB interior maximum: {cmp.interior_maximum(k_ab)}")
    if cfg.campaign["figures"]:
        from . import plotting
        out.written.append(plotting.plot_sweep(rows, out.path("pore_sweep.png")))
    return 1 if any(r.n_ok == 0 for r in rows) else 0


def _validate(cfg, out) -> int:
    rep = cmp.validate_oracle(seed=cfg.seed, repeats=max(cfg.campaign["repeats"], 2))
    out.write_table("oracle.csv", ["check", "passed", "detail"],
                    [(c.name, c.passed, c.detail.replace(",", ";")) for c in rep.checks], "oracle")
    for c in rep.checks:
        print(f"{'PASS' if c.passed else 'FAIL'}  {c.name}  {c.detail}")
    return 0 if rep.passed else 1


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(asctime)s %(name)s %(message)s")
    logging.captureWarnings(True)
    try:
        cfg = load_config(args)
        out = records.OutputDir(cfg)
        cmd = args.command
        if cmd.startswith("run-"):
            status = _run_single(cfg, cmd[4:], out)
        elif cmd == "compare":
            status = _compare(cfg, out)
        elif cmd == "ims-scan":
            status = _ims_scan(cfg, out)
        elif cmd == "pore-sweep":
            status = _pore_sweep(cfg, out)
        else:
            status = _validate(cfg, out)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 2
    except SamplingError as exc:
        print(f"sampler error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return 1
    print(f"wrote {len(out.written)} files to {out.root}")
    return status


if __name__ == "__main__":  # pragma: no cover
    sys.exit(main())
