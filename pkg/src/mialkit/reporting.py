"""Result export: per-run summaries, averaged curves, win tables.

Every file starts with a provenance comment carrying the resolved config
hash and base seed, and all floats use shortest round-trip formatting so
reruns of the same config are byte-identical.
"""

from __future__ import annotations

import csv
import json
from pathlib import Path

import numpy as np

from .metrics import METRICS, SPLITS, ExperimentResult, SessionRecord, WinTable

_SPLIT_LABEL = {"train": "transductive", "test": "inductive"}


def provenance_line(config_hash: str, seed: int) -> str:
    return f"# provenance config_hash={config_hash} seed={seed}"


def _open_with_provenance(path: Path, provenance: str):
    fh = path.open("w", newline="", encoding="utf-8")
    fh.write(provenance + "\n")
    return fh


def write_naulc_csv(result: ExperimentResult, path: str | Path, provenance: str) -> None:
    """One row per (strategy, repetition, metric, split) with its curve area."""
    with _open_with_provenance(Path(path), provenance) as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(["dataset", "strategy", "repetition", "metric", "split", "naulc"])
        for rec in result.records:
            if rec.error is not None:
                continue
            for metric in METRICS:
                for split in SPLITS:
                    if (metric, split) in rec.curves:
                        writer.writerow([result.dataset, rec.strategy, rec.repetition,
                                         metric, split, repr(rec.naulc(metric, split))])


def write_curves_csv(result: ExperimentResult, path: str | Path, provenance: str) -> None:
    """Mean and standard deviation per query index, per strategy/metric/split.

    Repetitions may disagree on query counts (splits land different numbers
    of positive bags in training), so each row also reports how many runs
    reach that index.
    """
    with _open_with_provenance(Path(path), provenance) as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(["dataset", "strategy", "metric", "split", "query", "mean", "std", "runs"])
        for strategy in result.strategies:
            for metric in METRICS:
                for split in SPLITS:
                    curves = result.curve_values(strategy, metric, split)
                    if not curves:
                        continue
                    longest = max(c.size for c in curves)
                    for q in range(longest):
                        at_q = np.array([c[q] for c in curves if c.size > q])
                        writer.writerow([result.dataset, strategy, metric, split, q,
                                         repr(float(at_q.mean())), repr(float(at_q.std())),
                                         at_q.size])


def write_win_table_csv(table: WinTable, path: str | Path, provenance: str) -> None:
    with _open_with_provenance(Path(path), provenance) as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(["task_setting", "dataset", "strategy", "metric", "win"])
        problems = sorted({problem for problem, _, _ in table.cells})
        for split in SPLITS:
            for problem in problems:
                for strategy in table.strategies:
                    for metric in METRICS:
                        winners = table.cells[(problem, metric, split)]
                        writer.writerow([_SPLIT_LABEL[split], problem, strategy, metric,
                                         int(strategy in winners)])


def format_win_table(table: WinTable) -> str:
    """Aligned text table: task setting x dataset rows, strategy x metric columns."""
    problems = sorted({problem for problem, _, _ in table.cells})
    header = ["task setting", "dataset"]
    for strategy in table.strategies:
        for metric in METRICS:
            header.append(f"{strategy}:{metric}")
    rows = [header]
    for split in SPLITS:
        totals = {(s, m): 0 for s in table.strategies for m in METRICS}
        for problem in problems:
            row = [_SPLIT_LABEL[split], problem]
            for strategy in table.strategies:
                for metric in METRICS:
                    win = int(strategy in table.cells[(problem, metric, split)])
                    totals[(strategy, metric)] += win
                    row.append(str(win))
            rows.append(row)
        rows.append([_SPLIT_LABEL[split], "TOTAL"]
                    + [str(totals[(s, m)]) for s in table.strategies for m in METRICS])
    widths = [max(len(r[c]) for r in rows) for c in range(len(header))]
    lines = ["  ".join(cell.ljust(w) for cell, w in zip(row, widths)).rstrip() for row in rows]
    return "\n".join(lines) + "\n"


def write_wins_vs_fraction_csv(counts: dict[str, np.ndarray], fractions, path: str | Path,
                               provenance: str) -> None:
    fractions = list(fractions)
    with _open_with_provenance(Path(path), provenance) as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(["fraction"] + list(counts))
        for i, fraction in enumerate(fractions):
            writer.writerow([repr(float(fraction))] + [int(counts[s][i]) for s in counts])


def write_session_log(record: SessionRecord, audit, path: str | Path, provenance: str) -> None:
    """Newline-delimited JSON: one provenance record, then one record per query."""
    with Path(path).open("w", encoding="utf-8") as fh:
        fh.write(json.dumps({"provenance": provenance, "strategy": record.strategy,
                             "repetition": record.repetition, "error": record.error},
                            sort_keys=True) + "\n")
        for entry in audit:
            fh.write(json.dumps(entry, sort_keys=True) + "\n")


def dump_result_json(result: ExperimentResult, config_hash: str, path: str | Path) -> None:
    """Machine-readable dump consumed by the report command."""
    payload = {
        "dataset": result.dataset,
        "strategies": list(result.strategies),
        "repetitions": result.repetitions,
        "base_seed": result.base_seed,
        "config_hash": config_hash,
        "records": [
            {
                "strategy": rec.strategy,
                "repetition": rec.repetition,
                "error": rec.error,
                "query_log": list(rec.query_log),
                "curves": {f"{m}/{s}": list(v) for (m, s), v in rec.curves.items()},
            }
            for rec in result.records
        ],
    }
    Path(path).write_text(json.dumps(payload, sort_keys=True, indent=1) + "\n", encoding="utf-8")


def load_result_json(path: str | Path) -> tuple[ExperimentResult, str]:
    payload = json.loads(Path(path).read_text(encoding="utf-8"))
    records = []
    for rec in payload["records"]:
        curves = {}
        for key, values in rec["curves"].items():
            metric, split = key.split("/")
            curves[(metric, split)] = tuple(values)
        records.append(SessionRecord(
            strategy=rec["strategy"],
            repetition=rec["repetition"],
            curves=curves,
            query_log=tuple(rec["query_log"]),
            error=rec["error"],
        ))
    result = ExperimentResult(
        dataset=payload["dataset"],
        strategies=tuple(payload["strategies"]),
        repetitions=payload["repetitions"],
        base_seed=payload["base_seed"],
        records=records,
    )
    return result, payload["config_hash"]
