"""Delimited report files: one CSV of rows plus one JSON summary per
evaluation protocol, and the training-history CSV.

Writers are byte-deterministic for a fixed input: keys are sorted, floats
are rounded to 4 decimals here and nowhere upstream, and no file carries a
timestamp (that lives in the run manifest alone).
"""

from __future__ import annotations

import csv
import json
from pathlib import Path
from typing import Mapping, Sequence

from .evaluation import (
    DistributionReport,
    ExtrinsicReport,
    MrrReport,
    SsrcReport,
)
from .tuning import EpochRecord


def round4(value: float | None) -> float | None:
    return None if value is None else round(float(value), 4)


def _fmt(value) -> str:
    if value is None:
        return ""
    if isinstance(value, bool):
        return "true" if value else "false"
    if isinstance(value, float):
        return f"{value:.4f}"
    return str(value)


def write_csv(path, header: Sequence[str], rows: Sequence[Sequence]) -> None:
    with open(path, "w", encoding="utf-8", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(header)
        for row in rows:
            writer.writerow([_fmt(cell) for cell in row])


def read_csv(path) -> tuple[list[str], list[list[str]]]:
    with open(path, "r", encoding="utf-8", newline="") as fh:
        reader = csv.reader(fh)
        rows = list(reader)
    if not rows:
        raise ValueError(f"{path} is empty")
    return rows[0], rows[1:]


def write_json(path, payload: Mapping) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(payload, fh, indent=2, sort_keys=True, ensure_ascii=False)
        fh.write("\n")


def read_json(path) -> dict:
    with open(path, "r", encoding="utf-8") as fh:
        return json.load(fh)


# ---------------------------------------------------------------------------
# per-protocol writers; each returns the files it wrote


def write_mrr_report(out_dir, report: MrrReport, *, stem: str = "mrr") -> list[Path]:
    out_dir = Path(out_dir)
    csv_path = out_dir / f"{stem}.csv"
    write_csv(csv_path,
              ["instance_id", "step_index", "rank", "n_pairs", "sampled", "reciprocal"],
              [[e.instance_id, e.step_index, e.rank, e.n_pairs, e.sampled, e.reciprocal]
               for e in report.entries])
    json_path = out_dir / f"{stem}.json"
    write_json(json_path, {
        "protocol": "mrr",
        "conditioning": report.conditioning.value,
        "mrr": round4(report.mrr),
        "n_examples": report.n_examples,
        "skipped_small_pools": report.skipped_small_pools,
    })
    return [csv_path, json_path]


def write_distribution_report(out_dir, report: DistributionReport, *,
                              stem: str = "distributions") -> list[Path]:
    out_dir = Path(out_dir)
    csv_path = out_dir / f"{stem}.csv"
    rows = []
    for setting in sorted(report.values):
        for value in report.values[setting]:
            rows.append([setting, value])
    write_csv(csv_path, ["setting", "cosine"], rows)
    json_path = out_dir / f"{stem}.json"
    write_json(json_path, {
        "protocol": "distributions",
        "means": {name: round4(mean) for name, mean in report.means.items()},
        "counts": {name: len(vals) for name, vals in report.values.items()},
    })
    return [csv_path, json_path]


def write_extrinsic_report(out_dir, report: ExtrinsicReport, *,
                           stem: str = "extrinsic") -> list[Path]:
    out_dir = Path(out_dir)
    csv_path = out_dir / f"{stem}.csv"
    write_csv(csv_path,
              ["instance_id", "proved", "termination", "steps", "error"],
              [[o.instance_id, o.proved, o.termination, o.steps, o.error or ""]
               for o in report.outcomes])
    json_path = out_dir / f"{stem}.json"
    write_json(json_path, {
        "protocol": "extrinsic",
        "n_instances": report.n_instances,
        "solved_fraction": round4(report.solved_fraction),
        "mean_steps_solved": round4(report.mean_steps_solved),
        "n_failures": len(report.failures),
    })
    return [csv_path, json_path]


def write_ssrc_report(out_dir, report: SsrcReport, *,
                      stem: str = "contrast") -> list[Path]:
    out_dir = Path(out_dir)
    csv_path = out_dir / f"{stem}.csv"
    write_csv(csv_path,
              ["category", "perturbation", "n_examples", "mrr"],
              [[c.category.value, c.perturbation.value, len(c.reciprocals), c.mrr]
               for c in report.cells])
    json_path = out_dir / f"{stem}.json"
    write_json(json_path, {
        "protocol": "contrast",
        "overall": round4(report.overall),
        "per_category": {cat.value: round4(v)
                         for cat, v in report.per_category.items()},
        "per_perturbation": {p.value: round4(v)
                             for p, v in report.per_perturbation.items()},
    })
    return [csv_path, json_path]


def write_history(path, history: Sequence[EpochRecord]) -> None:
    write_csv(path, ["epoch", "loss", "dev_mrr"],
              [[h.epoch, h.loss, h.dev_mrr] for h in history])


def read_history(path) -> list[EpochRecord]:
    _, rows = read_csv(path)
    return [EpochRecord(int(epoch), float(loss), float(dev) if dev else None)
            for epoch, loss, dev in rows]
