"""Batch front-end.

Subcommands:
  run        fit the adaptive mixture and write trace, mixture, marginal
             samples, summary, and figures
  oracle     draw an acceptance-rejection benchmark sample for a
             kernel-smoothed (gk_abc) config
  compare    per-coordinate KS distances and moment deltas between a run's
             marginal samples and a benchmark CSV
  synth-glmm generate a synthetic binary-panel data set from a glmm config

Every output is reproducible byte-for-byte from (config, seed); wall time is
therefore reported in a separate timing file rather than the summary.
"""

from __future__ import annotations

import argparse
import json
import sys
import time
from pathlib import Path

import numpy as np

from .config import (
    ConfigError,
    ExperimentConfig,
    GkAbcModelSpec,
    GlmmModelSpec,
    build_init,
    build_model,
    parse_config,
)
from .controller import run_adaptive
from .diagnostics import (
    ReferenceSample,
    abc_rejection,
    ks_distance,
    mixture_marginal_sample,
    read_reference_csv,
    write_reference_csv,
)
from .engine import ZeroTotalWeightError
from .mixture import MixtureParams
from .models.glmm import synthesize_glmm_data, write_glmm_csv
from .rng import STREAM_DATA, STREAM_ORACLE, STREAM_REPORT, StreamKey

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_RUNTIME = 3


def _json_line(record: dict) -> str:
    return json.dumps(record, separators=(",", ":"), allow_nan=True) + "\n"


def _write_trace(trace, path: Path) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        for record in trace.to_records():
            fh.write(_json_line(record))


def _write_marginals(params: MixtureParams, out_dir: Path, m: int,
                     key: StreamKey) -> list[Path]:
    paths = []
    for j in range(params.dim):
        values = mixture_marginal_sample(params, j, m, key.child(j).generator())
        path = out_dir / f"marginal_{j}.csv"
        with open(path, "w", encoding="utf-8", newline="") as fh:
            fh.write("coordinate,value\n")
            for v in values:
                fh.write(f"{j},{float(v)!r}\n")
        paths.append(path)
    return paths


def _read_marginal(path: Path) -> np.ndarray:
    values = []
    with open(path, encoding="utf-8") as fh:
        header = fh.readline().strip()
        if header != "coordinate,value":
            raise ValueError(f"{path}: expected header 'coordinate,value'")
        for line in fh:
            values.append(float(line.split(",", 1)[1]))
    return np.asarray(values)


def cmd_run(config_path: str, seed: int | None = None, threads: int = 1,
            quiet: bool = False, figures: bool = True) -> int:
    try:
        cfg = parse_config(config_path)
    except (ConfigError, OSError) as err:
        print(f"error: {err}", file=sys.stderr)
        return EXIT_CONFIG
    run_seed = cfg.seed if seed is None else seed
    key = StreamKey(run_seed)
    out_dir = Path(cfg.output_dir)
    out_dir.mkdir(parents=True, exist_ok=True)

    try:
        model = build_model(cfg, key.child(STREAM_DATA))
        init = build_init(cfg, model.dim)
    except (ConfigError, OSError, ValueError) as err:
        print(f"error: {err}", file=sys.stderr)
        return EXIT_CONFIG

    t0 = time.perf_counter()
    try:
        final, trace = run_adaptive(model, init, cfg.adaptive, key,
                                    n_threads=threads,
                                    defaults_used=cfg.defaulted_keys)
    except ZeroTotalWeightError as err:
        if err.trace is not None:
            _write_trace(err.trace, out_dir / "trace.jsonl")
        print(f"error: {err}", file=sys.stderr)
        return EXIT_RUNTIME
    wall = time.perf_counter() - t0

    _write_trace(trace, out_dir / "trace.jsonl")
    with open(out_dir / "final_mixture.json", "w", encoding="utf-8") as fh:
        json.dump(final.to_json_dict(), fh, indent=1)
        fh.write("\n")
    _write_marginals(final, out_dir, cfg.marginal_samples, key.child(STREAM_REPORT))

    last_window = [e for e in trace.events if e.kind == "window_stop"][-1]
    summary = {
        "T_tot": len(trace.objective),
        "final_D": final.n_components,
        "final_L": last_window.payload["L_cur"],
        "stop_reason": trace.stop_reason,
    }
    with open(out_dir / "summary.json", "w", encoding="utf-8") as fh:
        json.dump(summary, fh, indent=1)
        fh.write("\n")
    with open(out_dir / "timing.json", "w", encoding="utf-8") as fh:
        json.dump({"wall_time_seconds": wall}, fh)
        fh.write("\n")

    if figures:
        from . import report
        fig_dir = out_dir / "figures"
        fig_dir.mkdir(exist_ok=True)
        report.save_objective_figure(trace, fig_dir / "objective.png")
        report.save_marginal_figure(final, init, fig_dir / "marginals.png")

    if not quiet:
        print(f"run finished: T_tot={summary['T_tot']} final_D={summary['final_D']} "
              f"final_L={summary['final_L']:.6g} stop={summary['stop_reason']} "
              f"({wall:.1f}s) -> {out_dir}")
    return EXIT_OK


def cmd_oracle(config_path: str, seed: int | None = None, threads: int = 1,
               quiet: bool = False, figures: bool = True) -> int:
    try:
        cfg = parse_config(config_path)
    except (ConfigError, OSError) as err:
        print(f"error: {err}", file=sys.stderr)
        return EXIT_CONFIG
    if not isinstance(cfg.model, GkAbcModelSpec):
        print("error: the rejection benchmark needs a gk_abc model block",
              file=sys.stderr)
        return EXIT_CONFIG
    run_seed = cfg.seed if seed is None else seed
    key = StreamKey(run_seed)
    out_dir = Path(cfg.output_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    try:
        model = build_model(cfg, key.child(STREAM_DATA))
    except (ConfigError, OSError, ValueError) as err:
        print(f"error: {err}", file=sys.stderr)
        return EXIT_CONFIG

    target = cfg.oracle.target_accepted
    budget = cfg.oracle.max_proposals
    batch_size = 200_000
    accepted = []
    proposals = 0
    batch_index = 0
    while proposals < budget and sum(a.shape[0] for a in accepted) < target:
        m = min(batch_size, budget - proposals)
        try:
            sample = abc_rejection(model, m, key.child(STREAM_ORACLE, batch_index))
            accepted.append(sample.draws)
        except RuntimeError:
            pass  # a batch with zero acceptances is not fatal on its own
        proposals += m
        batch_index += 1
    all_draws = np.vstack(accepted) if accepted else np.empty((0, model.dim))
    rate = all_draws.shape[0] / proposals if proposals else 0.0
    draws = all_draws[:target]
    if draws.shape[0] == 0:
        print(f"error: zero acceptances in {proposals} proposals "
              f"(acceptance rate 0.0)", file=sys.stderr)
        return EXIT_RUNTIME

    sample = ReferenceSample(draws=draws, method="abc_rejection", acceptance_rate=rate)
    write_reference_csv(sample, out_dir / "oracle.csv")
    with open(out_dir / "oracle_summary.json", "w", encoding="utf-8") as fh:
        json.dump({"accepted": int(draws.shape[0]), "proposals": int(proposals),
                   "acceptance_rate": rate}, fh, indent=1)
        fh.write("\n")
    if figures:
        from . import report
        fig_dir = out_dir / "figures"
        fig_dir.mkdir(exist_ok=True)
        report.save_marginal_figure(model.prior, None,
                                    fig_dir / "oracle_marginals.png",
                                    reference=draws)
    if not quiet:
        print(f"oracle finished: accepted={draws.shape[0]} proposals={proposals} "
              f"rate={rate:.4f} -> {out_dir}")
    return EXIT_OK


def cmd_compare(run_dir: str, oracle_csv: str, quiet: bool = False,
                figures: bool = True) -> int:
    run = Path(run_dir)
    try:
        with open(run / "final_mixture.json", encoding="utf-8") as fh:
            final = MixtureParams.from_json_dict(json.load(fh))
        oracle = read_reference_csv(oracle_csv)
    except (OSError, ValueError, KeyError) as err:
        print(f"error: {err}", file=sys.stderr)
        return EXIT_CONFIG
    p = final.dim
    if oracle.ndim != 2 or oracle.shape[1] != p:
        print(f"error: benchmark draws have dimension "
              f"{oracle.shape[1] if oracle.ndim == 2 else 1}, run has {p}",
              file=sys.stderr)
        return EXIT_CONFIG
    ks = []
    mean_delta = []
    var_delta = []
    for j in range(p):
        marg_path = run / f"marginal_{j}.csv"
        if not marg_path.exists():
            print(f"error: missing {marg_path}", file=sys.stderr)
            return EXIT_CONFIG
        sample = _read_marginal(marg_path)
        ks.append(ks_distance(sample, oracle[:, j]))
        mean_delta.append(float(np.mean(sample) - np.mean(oracle[:, j])))
        var_delta.append(float(np.var(sample) - np.var(oracle[:, j])))
    result = {"coordinates": p, "ks": ks, "mean_delta": mean_delta,
              "var_delta": var_delta}
    with open(run / "compare.json", "w", encoding="utf-8") as fh:
        json.dump(result, fh, indent=1)
        fh.write("\n")
    if figures:
        from . import report
        fig_dir = run / "figures"
        fig_dir.mkdir(exist_ok=True)
        report.save_marginal_figure(final, None, fig_dir / "compare.png",
                                    reference=oracle)
    if not quiet:
        formatted = ", ".join(f"{v:.4f}" for v in ks)
        print(f"compare finished: ks=[{formatted}] -> {run / 'compare.json'}")
    return EXIT_OK


def cmd_synth_glmm(config_path: str, seed: int | None = None,
                   quiet: bool = False) -> int:
    try:
        cfg = parse_config(config_path)
    except (ConfigError, OSError) as err:
        print(f"error: {err}", file=sys.stderr)
        return EXIT_CONFIG
    m = cfg.model
    if not isinstance(m, GlmmModelSpec) or m.synth is None:
        print("error: synth-glmm needs a glmm model block with a synth table",
              file=sys.stderr)
        return EXIT_CONFIG
    if m.data_file is None:
        print("error: set model.data_file as the destination for the "
              "generated CSV", file=sys.stderr)
        return EXIT_CONFIG
    run_seed = cfg.seed if seed is None else seed
    key = StreamKey(run_seed)
    s = m.synth
    data = synthesize_glmm_data(s.n, s.T, s.true_beta, s.true_tau2,
                                key.child(STREAM_DATA).generator(),
                                s.smoking_rate)
    dest = Path(m.data_file)
    if dest.parent != Path(""):
        dest.parent.mkdir(parents=True, exist_ok=True)
    write_glmm_csv(data, dest)
    if not quiet:
        rows = data.n_individuals * data.n_timepoints
        print(f"synth-glmm finished: {rows} rows -> {dest}")
    return EXIT_OK


def main(argv=None) -> int:
    parser = argparse.ArgumentParser(
        prog="mpmc",
        description="Adaptive mixture population Monte Carlo for "
                    "likelihood-free inference")
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--seed", type=int, default=None,
                        help="override the config seed")
    common.add_argument("--threads", type=int, default=1,
                        help="worker threads for likelihood draws "
                             "(results do not depend on this)")
    common.add_argument("--quiet", action="store_true", help="suppress progress output")
    common.add_argument("--no-figures", action="store_true",
                        help="skip figure rendering")

    sub = parser.add_subparsers(dest="command", required=True)
    p_run = sub.add_parser("run", parents=[common], help="run the adaptive fit")
    p_run.add_argument("config")
    p_oracle = sub.add_parser("oracle", parents=[common],
                              help="draw the rejection benchmark")
    p_oracle.add_argument("config")
    p_cmp = sub.add_parser("compare", parents=[common],
                           help="compare a run against benchmark draws")
    p_cmp.add_argument("run_dir")
    p_cmp.add_argument("oracle_csv")
    p_synth = sub.add_parser("synth-glmm", parents=[common],
                             help="generate a synthetic panel data set")
    p_synth.add_argument("config")

    args = parser.parse_args(argv)
    if args.command == "run":
        return cmd_run(args.config, seed=args.seed, threads=args.threads,
                       quiet=args.quiet, figures=not args.no_figures)
    if args.command == "oracle":
        return cmd_oracle(args.config, seed=args.seed, threads=args.threads,
                          quiet=args.quiet, figures=not args.no_figures)
    if args.command == "compare":
        return cmd_compare(args.run_dir, args.oracle_csv, quiet=args.quiet,
                           figures=not args.no_figures)
    return cmd_synth_glmm(args.config, seed=args.seed, quiet=args.quiet)


def entry() -> None:
    sys.exit(main())
