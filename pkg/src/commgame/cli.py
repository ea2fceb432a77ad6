"""Command line entry point: train, eval, sweep, report.

Exit codes: 0 success, 2 configuration error, 3 numerical failure.
Precedence: flags override config fields, which override defaults; the
``COMMGAME_OUTPUT_ROOT`` environment variable re-roots relative output
directories. All outputs land under the resolved output directory.
"""

from __future__ import annotations

import argparse
import os
import sys
import time
from pathlib import Path

from .agents import load_checkpoint, load_into
from .config import load_config, with_overrides
from .errors import CommGameError, ConfigError, NumericsError, UnsupportedModeError
from .experiment import build_setup, evaluate_accuracy, noum, replicate, run_sweep
from .reporting import (
    LONG_COLUMNS,
    collect_reports,
    comparison_rows,
    write_csv,
    write_manifest,
    write_run_outputs,
    write_sweep_outputs,
)

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_NUMERIC = 3
ENV_OUTPUT_ROOT = "COMMGAME_OUTPUT_ROOT"


def _resolve_outdir(configured: str, flag_out: str | None) -> Path:
    out = Path(flag_out) if flag_out else Path(configured)
    root = os.environ.get(ENV_OUTPUT_ROOT)
    if root and not out.is_absolute():
        out = Path(root) / out
    return out


def _parse_int_list(text: str) -> list[int]:
    try:
        return [int(part) for part in text.split(",") if part.strip() != ""]
    except ValueError as exc:
        raise ConfigError(f"expected a comma-separated integer list, got {text!r}") from exc


def _log(message: str) -> None:
    print(message, file=sys.stderr, flush=True)


def cmd_train(args) -> int:
    cfg = load_config(args.config)
    cfg = with_overrides(
        cfg,
        seeds=_parse_int_list(args.seed) if args.seed else None,
        full_scale=args.full_scale,
    )
    outdir = _resolve_outdir(cfg.output_dir, args.out)
    started = time.perf_counter()
    report = replicate(cfg, checkpoint_dir=outdir / "checkpoints", log=_log if args.verbose else None)
    write_run_outputs(cfg, report, outdir)
    write_manifest(cfg, outdir, time.perf_counter() - started, kind="train")
    for entry in report.aggregate()["accuracy"]:
        print(f"n={entry['n']:>6}  accuracy {entry['mean']:.4f} +- {entry['std']:.4f}")
    for seed, message in report.failures.items():
        _log(f"seed {seed} failed: {message}")
    if report.failures:
        return EXIT_NUMERIC
    print(f"report written to {outdir / 'report.json'}")
    return EXIT_OK


def cmd_eval(args) -> int:
    cfg = load_config(args.config)
    if not Path(args.checkpoint).exists():
        raise ConfigError(f"checkpoint not found: {args.checkpoint}")
    loaded, meta = load_checkpoint(args.checkpoint)
    seed = int(args.seed) if args.seed else int(meta.get("seed", cfg.seeds[0]))
    setup = build_setup(cfg, seed)
    load_into(setup.params(), loaded)
    counts = _parse_int_list(args.candidates) if args.candidates else list(cfg.eval_candidates)
    accuracy, errors = evaluate_accuracy(setup, counts)
    try:
        messages = noum(setup)
        noum_text = str(messages)
    except UnsupportedModeError:
        messages = None
        noum_text = "n/a"
    print(f"{'n':>8}  {'accuracy':>10}")
    for n in counts:
        if n in accuracy:
            print(f"{n:>8}  {accuracy[n]:>10.4f}")
        else:
            print(f"{n:>8}  {'error':>10}  ({errors[n]})")
    print(f"NoUM over {len(setup.split.test)} test targets: {noum_text}")
    outdir = _resolve_outdir(str(Path(args.checkpoint).parent), args.out)
    outdir.mkdir(parents=True, exist_ok=True)
    chan = cfg.channel
    rows = [
        {
            "game": cfg.game,
            "mode": chan.mode,
            "architecture": chan.architecture,
            "alphabet": chan.alphabet_size,
            "word_length": chan.word_length,
            "message_length": chan.message_length,
            "regime": chan.quantize_regime,
            "seed": seed,
            "n": n,
            "accuracy": accuracy[n],
            "noum": messages,
            "best_epoch": None,
        }
        for n in counts
        if n in accuracy
    ]
    csv_path = outdir / f"eval_{Path(args.checkpoint).stem}.csv"
    write_csv(rows, LONG_COLUMNS, csv_path)
    print(f"csv written to {csv_path}")
    return EXIT_OK


def cmd_sweep(args) -> int:
    cfg = load_config(args.config)
    cfg = with_overrides(
        cfg,
        seeds=_parse_int_list(args.seed) if args.seed else None,
        full_scale=args.full_scale,
    )
    outdir = _resolve_outdir(cfg.output_dir, args.out)
    started = time.perf_counter()
    result = run_sweep(cfg, jobs=args.jobs, log=_log if args.verbose else None)
    write_sweep_outputs(cfg, result, outdir)
    write_manifest(cfg, outdir, time.perf_counter() - started, kind="sweep")
    failed = [c for c in result.cells if c.error]
    print(f"{len(result.cells) - len(failed)}/{len(result.cells)} cells completed")
    for cell in failed:
        _log(
            f"cell alphabet={cell.alphabet_size} word_length={cell.word_length} "
            f"regime={cell.regime} failed: {cell.error}"
        )
    print(f"sweep outputs written to {outdir}")
    return EXIT_OK


def cmd_report(args) -> int:
    reports = collect_reports(args.dir)
    rows, columns = comparison_rows(reports)
    outdir = _resolve_outdir(args.dir, args.out)
    csv_path = Path(outdir) / "comparison.csv"
    write_csv(rows, columns, csv_path)
    for row in rows:
        if row["stat"] == "avg":
            cells = "  ".join(
                f"{c.split('=')[1]}:{row[c]:.3f}" for c in columns if c.startswith("n=") and row[c] is not None
            )
            print(f"{row['comm_type']:>13} [{row['run']}]  {cells}")
    print(f"comparison written to {csv_path}")
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="commgame", description=__doc__)
    sub = parser.add_subparsers(dest="command", required=True)

    train = sub.add_parser("train", help="train and evaluate every configured seed")
    train.add_argument("--config", required=True, help="experiment config JSON")
    train.add_argument("--seed", help="override the config's seed list, e.g. 7 or 1,2,3")
    train.add_argument("--out", help="override the output directory")
    train.add_argument("--full-scale", action="store_true", help="use the 10^4-object world")
    train.add_argument("--verbose", action="store_true", help="log per-epoch progress")
    train.set_defaults(func=cmd_train)

    ev = sub.add_parser("eval", help="evaluate a checkpoint")
    ev.add_argument("checkpoint", help="checkpoint file written by train")
    ev.add_argument("--config", required=True, help="experiment config JSON")
    ev.add_argument("--candidates", help="comma-separated candidate counts")
    ev.add_argument("--seed", help="world/split seed (default: the checkpoint's)")
    ev.add_argument("--out", help="directory for the CSV (default: beside the checkpoint)")
    ev.set_defaults(func=cmd_eval)

    sweep = sub.add_parser("sweep", help="run the alphabet x word-length grid")
    sweep.add_argument("--config", required=True, help="sweep config JSON")
    sweep.add_argument("--jobs", type=int, default=1, help="parallel sweep cells")
    sweep.add_argument("--seed", help="override the config's seed list")
    sweep.add_argument("--out", help="override the output directory")
    sweep.add_argument("--full-scale", action="store_true", help="use the 10^4-object world")
    sweep.add_argument("--verbose", action="store_true", help="log per-cell progress")
    sweep.set_defaults(func=cmd_sweep)

    rep = sub.add_parser("report", help="aggregate run reports into one comparison CSV")
    rep.add_argument("dir", help="directory containing run reports")
    rep.add_argument("--out", help="directory for the comparison CSV (default: dir)")
    rep.set_defaults(func=cmd_report)
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except NumericsError as exc:
        print(f"numerical failure: {exc}", file=sys.stderr)
        return EXIT_NUMERIC
    except CommGameError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONFIG


if __name__ == "__main__":
    sys.exit(main())
