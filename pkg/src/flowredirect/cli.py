"""Command-line entry point: ``flowredirect run|validate <config.json>``."""
from __future__ import annotations

import argparse
import json
import logging
import os
import sys
from concurrent.futures import ProcessPoolExecutor
from contextlib import contextmanager
from dataclasses import asdict, replace
from pathlib import Path

from . import analysis, spectral
from .config import RunConfig, load_config
from .errors import ConfigError, FlowRedirectError, SkippedPreconditionFailed
from .graph import FAMILIES
from .simulate import final_size, simulate

log = logging.getLogger("flowredirect")


@contextmanager
def _mapper(threads: int):
    if threads <= 1:
        yield map
        return
    with ProcessPoolExecutor(max_workers=threads) as pool:
        yield pool.map


def _write_json(path: Path, obj) -> None:
    path.write_text(json.dumps(analysis.json_safe(obj), indent=2, sort_keys=True, allow_nan=False) + "\n")


def _simulate_only(cfg: RunConfig, out: Path) -> list[analysis.ResultRecord]:
    records = []
    spec, sim = cfg.graph_spec(), cfg.sim()
    for r in range(cfg.experiment.replicates):
        s = analysis.sample_protocol(spec, cfg.model.kind, 1.0, r, cfg.sampling())
        traj = simulate(s.graph, s.theta_ref, s.f, s.params, s.initial_condition(),
                        replace(sim, record_every=1 if cfg.output.trajectory else None))
        if cfg.output.trajectory and r == 0:
            traj.to_csv(out / cfg.output.trajectory)
        rep = final_size(traj)
        r0 = spectral.r0(s.graph, s.theta_ref, s.f, s.params, sim.tau)
        records.append(analysis.ResultRecord(f"{spec.family}-n{spec.size}-r{r}", spec.family, spec.size, "REF",
                                             sim.tau, 1.0, r0, rep.final_size, 1.0, rep.converged, r))
    return records


def _prop3(cfg: RunConfig) -> dict:
    reports = []
    for r in range(cfg.experiment.replicates):
        s = analysis.sample_protocol(cfg.graph_spec(), cfg.model.kind, 1.0, r, cfg.sampling())
        try:
            rep = analysis.verify_prop3(s, cfg.prop3(), cfg.sim()).to_dict()
        except SkippedPreconditionFailed as exc:
            r0 = spectral.r0(s.graph, s.theta_ref, s.f, s.params, cfg.sim().tau)
            rep = analysis.Prop3Report("SkippedPreconditionFailed", r0, reason=str(exc)).to_dict()
        rep["seed"] = r
        log.info("prop3 replicate %d: %s", r, rep["status"])
        reports.append(rep)
    return {"reports": reports, "config": asdict(cfg.prop3())}


def run(cfg: RunConfig, output_dir: Path, threads: int) -> None:
    output_dir.mkdir(parents=True, exist_ok=True)
    e, kind = cfg.experiment, cfg.model.kind
    common = dict(model_kind=kind, sampling=cfg.sampling(), sim=cfg.sim())
    opt_kw = dict(opt=cfg.opt(), losses=cfg.losses())
    if e.type == "prop3":
        _write_json(output_dir / cfg.output.report, _prop3(cfg))
        return
    extra = {}
    with _mapper(threads) as mapper:
        if e.type == "compare":
            records = analysis.compare_batch(cfg.graph_spec(), e.replicates, cfg.diffusion.tau, mapper=mapper,
                                             **common, **opt_kw)
        elif e.type == "tau_sweep":
            records = analysis.sweep_tau(cfg.graph_spec(), e.taus, e.replicates, mapper=mapper, **common, **opt_kw)
        elif e.type == "heterogeneity_sweep":
            records = analysis.sweep_heterogeneity(cfg.graph_spec(), e.xs, e.replicates, cfg.diffusion.tau,
                                                   mapper=mapper, **common, **opt_kw)
        elif e.type == "r0_sweep":
            specs = [cfg.graph_spec(f) for f in (e.families or FAMILIES)]
            sweep = analysis.sweep_r0_vs_final_size(specs, e.replicates, cfg.diffusion.tau, mapper=mapper, **common)
            records = [analysis.ResultRecord(f"{p.family}-n{cfg.graph.size}-r{p.seed}", p.family, cfg.graph.size,
                                             "REF", cfg.diffusion.tau, 1.0, p.r0, p.final_size, 1.0, p.converged,
                                             p.seed) for p in sweep.points]
            extra = {"slopes": sweep.slopes, "spearman": sweep.spearman()}
        else:
            records = _simulate_only(cfg, output_dir)
    analysis.emit_results(records, output_dir / cfg.output.csv, output_dir / cfg.output.summary)
    if extra:
        _write_json(output_dir / cfg.output.report, extra)


def _load(path: str) -> RunConfig:
    return load_config(path)


def cmd_validate(args) -> int:
    try:
        cfg = _load(args.config)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 2
    print(json.dumps(cfg.to_dict(), indent=2, sort_keys=True))
    return 0


def cmd_run(args) -> int:
    try:
        cfg = _load(args.config)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 2
    if args.threads is not None and args.threads < 1:
        print("config error: --threads must be >= 1", file=sys.stderr)
        return 2
    threads = args.threads or cfg.threads or os.cpu_count() or 1
    output_dir = Path(args.output_dir if args.output_dir else cfg.output.dir)
    try:
        run(cfg, output_dir, threads)
    except (FlowRedirectError, OSError) as exc:
        print(f"run failed: {exc}", file=sys.stderr)
        return 1
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="flowredirect", description=__doc__)
    sub = parser.add_subparsers(dest="command", required=True)
    p_run = sub.add_parser("run", help="run the experiment described by a config file")
    p_run.add_argument("config")
    p_run.add_argument("--output-dir", default=None)
    p_run.add_argument("--threads", type=int, default=None)
    p_run.set_defaults(func=cmd_run)
    p_val = sub.add_parser("validate", help="check a config and print it with defaults applied")
    p_val.add_argument("config")
    p_val.set_defaults(func=cmd_validate)
    return parser


def main(argv=None) -> int:
    logging.basicConfig(level=logging.INFO, stream=sys.stderr, format="%(levelname)s %(name)s: %(message)s")
    args = build_parser().parse_args(argv)
    return args.func(args)


if __name__ == "__main__":
    sys.exit(main())
