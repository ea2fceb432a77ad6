"""Report files: deterministic JSON, round-tripping CSVs, run manifests.

Reports are byte-deterministic for a given config and seed (sorted keys,
repr-exact floats, no timestamps); wall-clock details go to the manifest
file beside the report instead. Every CSV written here can be parsed back
to the exact row values that produced it.
"""

from __future__ import annotations

import csv
import json
import time
from pathlib import Path

from . import __version__
from .config import ExperimentConfig, config_to_dict
from .errors import ConfigError
from .experiment import MetricsReport, SweepResult

LONG_COLUMNS = [
    "game",
    "mode",
    "architecture",
    "alphabet",
    "word_length",
    "message_length",
    "regime",
    "seed",
    "n",
    "accuracy",
    "noum",
    "best_epoch",
]

_MODE_LABEL = {"continuous": "CN", "gumbel_softmax": "GS", "quantized": "QT"}
_ARCH_LABEL = {"instant": "Instant", "recurrent": "Recurrent"}


def dump_json(obj, path) -> None:
    Path(path).write_text(json.dumps(obj, indent=2, sort_keys=True) + "\n")


def load_json(path) -> dict:
    return json.loads(Path(path).read_text())


# ---------------------------------------------------------------------------
# typed CSV cells: int / float / str / None survive a write-read cycle


def _encode_cell(value) -> str:
    if value is None:
        return ""
    if isinstance(value, float):
        return repr(value)
    return str(value)


def _decode_cell(text: str):
    if text == "":
        return None
    try:
        return int(text)
    except ValueError:
        pass
    try:
        return float(text)
    except ValueError:
        return text


def write_csv(rows: list[dict], columns: list[str], path) -> None:
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(columns)
        for row in rows:
            writer.writerow([_encode_cell(row.get(c)) for c in columns])


def read_csv(path) -> list[dict]:
    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        columns = next(reader)
        return [dict(zip(columns, map(_decode_cell, row))) for row in reader]


# ---------------------------------------------------------------------------
# long-format results


def long_rows(report: MetricsReport) -> list[dict]:
    """One row per seed per candidate count."""
    cfg = report.config_echo
    chan = cfg["channel"]
    rows = []
    for seed in sorted(report.per_seed):
        outcome = report.per_seed[seed]
        for n in sorted(outcome.accuracy):
            rows.append(
                {
                    "game": cfg["game"],
                    "mode": chan["mode"],
                    "architecture": chan["architecture"],
                    "alphabet": chan["alphabet_size"],
                    "word_length": chan["word_length"],
                    "message_length": chan["message_length"],
                    "regime": chan["quantize_regime"],
                    "seed": seed,
                    "n": n,
                    "accuracy": outcome.accuracy[n],
                    "noum": outcome.noum,
                    "best_epoch": outcome.best_epoch,
                }
            )
    return rows


def write_long_csv(report: MetricsReport, path) -> None:
    write_csv(long_rows(report), LONG_COLUMNS, path)


# ---------------------------------------------------------------------------
# sweep outputs


def heatmap_rows(result: SweepResult, regime: str, metric: str) -> tuple[list[dict], list[str]]:
    """Matrix rows (one per alphabet size) for one regime's accuracy or NoUM."""
    alphabets = sorted({c.alphabet_size for c in result.cells if c.regime == regime})
    lengths = sorted({c.word_length for c in result.cells if c.regime == regime})
    value = {}
    for cell in result.cells:
        if cell.regime != regime:
            continue
        v = result.heat_value(cell) if metric == "accuracy" else result.heat_noum(cell)
        value[(cell.alphabet_size, cell.word_length)] = v
    columns = ["alphabet_size"] + [str(w) for w in lengths]
    rows = []
    for a in alphabets:
        row = {"alphabet_size": a}
        for w in lengths:
            row[str(w)] = value.get((a, w))
        rows.append(row)
    return rows, columns


def write_sweep_outputs(cfg: ExperimentConfig, result: SweepResult, outdir) -> None:
    outdir = Path(outdir)
    outdir.mkdir(parents=True, exist_ok=True)
    all_rows = []
    cell_index = []
    for cell in result.cells:
        entry = {
            "alphabet_size": cell.alphabet_size,
            "word_length": cell.word_length,
            "regime": cell.regime,
            "error": cell.error,
        }
        if cell.report is not None:
            name = f"a{cell.alphabet_size}_w{cell.word_length}_{cell.regime}"
            cell_dir = outdir / "cells" / name
            cell_dir.mkdir(parents=True, exist_ok=True)
            dump_json(cell.report.as_dict(), cell_dir / "report.json")
            entry["report"] = str(Path("cells") / name / "report.json")
            all_rows.extend(long_rows(cell.report))
        cell_index.append(entry)
    write_csv(all_rows, LONG_COLUMNS, outdir / "sweep_long.csv")
    for regime in dict.fromkeys(c.regime for c in result.cells):
        for metric in ("accuracy", "noum"):
            rows, columns = heatmap_rows(result, regime, metric)
            write_csv(rows, columns, outdir / f"heatmap_{metric}_{regime}.csv")
    dump_json({"cells": cell_index}, outdir / "sweep_report.json")


# ---------------------------------------------------------------------------
# run directory layout


def write_run_outputs(cfg: ExperimentConfig, report: MetricsReport, outdir) -> Path:
    outdir = Path(outdir)
    outdir.mkdir(parents=True, exist_ok=True)
    dump_json(report.as_dict(), outdir / "report.json")
    write_long_csv(report, outdir / "results_long.csv")
    return outdir


def write_manifest(cfg: ExperimentConfig, outdir, wall_time_s: float, kind: str) -> None:
    manifest = {
        "kind": kind,
        "config": config_to_dict(cfg),
        "code_version": __version__,
        "wall_time_seconds": wall_time_s,
        "finished_unix": time.time(),
    }
    dump_json(manifest, Path(outdir) / "manifest.json")


# ---------------------------------------------------------------------------
# cross-run comparison (the six-configuration table)


def comparison_rows(reports: list[tuple[str, MetricsReport]]) -> tuple[list[dict], list[str]]:
    """Aggregate many runs into avg/std rows per communication type.

    Runs are ordered CN, GS, QT and Instant before Recurrent, matching the
    usual presentation of the six configurations.
    """
    mode_order = {"continuous": 0, "gumbel_softmax": 1, "quantized": 2}
    arch_order = {"instant": 0, "recurrent": 1}

    def key(item):
        chan = item[1].config_echo["channel"]
        return (mode_order[chan["mode"]], arch_order[chan["architecture"]], item[0])

    reports = sorted(reports, key=key)
    counts: list[int] = []
    for _, report in reports:
        for entry in report.aggregate()["accuracy"]:
            if entry["n"] not in counts:
                counts.append(entry["n"])
    counts.sort()
    columns = [
        "comm_type",
        "run",
        "alphabet",
        "word_length",
        "message_length",
        "regime",
        "noum",
        "stat",
    ] + [f"n={n}" for n in counts]
    rows = []
    for name, report in reports:
        chan = report.config_echo["channel"]
        label = f"{_MODE_LABEL[chan['mode']]}-{_ARCH_LABEL[chan['architecture']]}"
        agg = report.aggregate()
        by_n = {e["n"]: e for e in agg["accuracy"]}
        noum = agg["noum"]
        for stat in ("avg", "std"):
            row = {
                "comm_type": label,
                "run": name,
                "alphabet": chan["alphabet_size"],
                "word_length": chan["word_length"],
                "message_length": chan["message_length"],
                "regime": chan["quantize_regime"],
                "noum": (noum["mean"] if stat == "avg" else noum["std"]) if noum else None,
                "stat": stat,
            }
            for n in counts:
                entry = by_n.get(n)
                row[f"n={n}"] = entry["mean" if stat == "avg" else "std"] if entry else None
            rows.append(row)
    return rows, columns


def collect_reports(directory) -> list[tuple[str, MetricsReport]]:
    directory = Path(directory)
    if not directory.is_dir():
        raise ConfigError(f"not a directory: {directory}")
    found = sorted(directory.rglob("report.json"))
    reports = []
    for path in found:
        data = load_json(path)
        if "per_seed" not in data:
            continue
        name = str(path.parent.relative_to(directory)) or "."
        reports.append((name, MetricsReport.from_dict(data)))
    if not reports:
        raise ConfigError(f"no run reports found under {directory}")
    return reports
