"""Static figures rendered next to the delimited reports.

Every eval subcommand drops a PNG beside its CSV/JSON pair; the ``plot``
subcommand re-renders the same figures later from the report files alone,
so figures never require re-running an evaluation. Rendering is headless
(Agg) and avoids embedding timestamps in the image metadata.
"""

from __future__ import annotations

from pathlib import Path
from typing import Mapping, Sequence

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt  # noqa: E402  (backend must be pinned first)

from .reports import read_csv, read_json  # noqa: E402

_SETTING_ORDER = ("random", "partial", "gold", "model", "gold_to_model")
_SETTING_LABELS = {
    "random": "random pairs",
    "partial": "one gold premise",
    "gold": "gold pair",
    "model": "pair sum vs generated",
    "gold_to_model": "annotated vs generated",
}


def _save(fig, out_path) -> Path:
    out_path = Path(out_path)
    fig.tight_layout()
    fig.savefig(out_path, dpi=120, metadata={"Date": None})
    plt.close(fig)
    return out_path


def plot_distributions(values: Mapping[str, Sequence[float]], out_path) -> Path:
    """Overlaid cosine histograms, one per pair population."""
    fig, ax = plt.subplots(figsize=(7, 4.5))
    for setting in _SETTING_ORDER:
        population = list(values.get(setting, ()))
        if not population:
            continue
        ax.hist(population, bins=40, range=(-1.0, 1.0), density=True, alpha=0.55,
                label=_SETTING_LABELS.get(setting, setting))
    ax.set_xlabel("cosine(pair sum, deduction)")
    ax.set_ylabel("density")
    ax.legend(loc="upper left", fontsize=8)
    return _save(fig, out_path)


def plot_rank_histogram(ranks: Sequence[int], mrr: float, out_path) -> Path:
    fig, ax = plt.subplots(figsize=(6, 4))
    top = max(ranks) if ranks else 1
    ax.hist(list(ranks), bins=range(1, min(top, 50) + 2), color="#4878a8")
    ax.set_xlabel("rank of the annotated pair")
    ax.set_ylabel("steps")
    ax.set_title(f"MRR {mrr:.4f} over {len(ranks)} steps", fontsize=10)
    return _save(fig, out_path)


def plot_ssrc(per_category: Mapping[str, float], per_perturbation: Mapping[str, float],
              overall: float, out_path) -> Path:
    fig, (ax1, ax2) = plt.subplots(
        1, 2, figsize=(10, 4.5), gridspec_kw={"width_ratios": [3, 2]})
    cats = sorted(per_category)
    ax1.barh(range(len(cats)), [per_category[c] for c in cats], color="#4878a8")
    ax1.set_yticks(range(len(cats)))
    ax1.set_yticklabels(cats, fontsize=7)
    ax1.invert_yaxis()
    ax1.set_xlim(0, 1)
    ax1.set_xlabel("MRR")
    ax1.set_title(f"by category (overall {overall:.4f})", fontsize=9)
    perts = sorted(per_perturbation)
    ax2.barh(range(len(perts)), [per_perturbation[p] for p in perts], color="#a85048")
    ax2.set_yticks(range(len(perts)))
    ax2.set_yticklabels(perts, fontsize=8)
    ax2.invert_yaxis()
    ax2.set_xlim(0, 1)
    ax2.set_xlabel("MRR")
    ax2.set_title("by perturbation", fontsize=9)
    return _save(fig, out_path)


def plot_extrinsic(terminations: Mapping[str, int], solved_steps: Sequence[int],
                   out_path) -> Path:
    fig, (ax1, ax2) = plt.subplots(1, 2, figsize=(8, 4))
    names = sorted(terminations)
    ax1.bar(range(len(names)), [terminations[n] for n in names], color="#4878a8")
    ax1.set_xticks(range(len(names)))
    ax1.set_xticklabels(names, rotation=20, fontsize=8)
    ax1.set_ylabel("instances")
    ax1.set_title("terminations", fontsize=9)
    if solved_steps:
        top = max(solved_steps)
        ax2.hist(list(solved_steps), bins=range(1, top + 2), color="#48a878")
    ax2.set_xlabel("productive steps (solved runs)")
    ax2.set_ylabel("instances")
    ax2.set_title("steps to proof", fontsize=9)
    return _save(fig, out_path)


def plot_history(epochs: Sequence[int], losses: Sequence[float],
                 dev_mrrs: Sequence[float | None], out_path) -> Path:
    fig, ax = plt.subplots(figsize=(6.5, 4))
    ax.plot(epochs, losses, marker="o", color="#4878a8", label="train loss")
    ax.set_xlabel("epoch")
    ax.set_ylabel("loss")
    if any(v is not None for v in dev_mrrs):
        twin = ax.twinx()
        twin.plot(epochs, [v if v is not None else float("nan") for v in dev_mrrs],
                  marker="s", color="#a85048", label="dev MRR")
        twin.set_ylabel("dev MRR")
        twin.set_ylim(0, 1.05)
    ax.legend(loc="upper right", fontsize=8)
    return _save(fig, out_path)


# ---------------------------------------------------------------------------
# re-rendering from report files


def render_from_report(json_path, out_path=None) -> Path:
    """Rebuild the figure for one report summary and its sibling CSV."""
    json_path = Path(json_path)
    summary = read_json(json_path)
    protocol = summary.get("protocol")
    csv_path = json_path.with_suffix(".csv")
    out_path = Path(out_path) if out_path else json_path.with_suffix(".png")

    if protocol == "distributions":
        _, rows = read_csv(csv_path)
        values: dict[str, list[float]] = {}
        for setting, cell in rows:
            values.setdefault(setting, []).append(float(cell))
        return plot_distributions(values, out_path)
    if protocol == "mrr":
        _, rows = read_csv(csv_path)
        ranks = [int(row[2]) for row in rows]
        return plot_rank_histogram(ranks, float(summary["mrr"]), out_path)
    if protocol == "contrast":
        return plot_ssrc(summary["per_category"], summary["per_perturbation"],
                         float(summary["overall"]), out_path)
    if protocol == "extrinsic":
        _, rows = read_csv(csv_path)
        terminations: dict[str, int] = {}
        solved_steps = []
        for _id, proved, termination, steps, _err in rows:
            terminations[termination] = terminations.get(termination, 0) + 1
            if proved == "true":
                solved_steps.append(int(steps))
        return plot_extrinsic(terminations, solved_steps, out_path)
    raise ValueError(f"no renderer for protocol {protocol!r} in {json_path}")


def render_history_csv(csv_path, out_path=None) -> Path:
    csv_path = Path(csv_path)
    _, rows = read_csv(csv_path)
    epochs = [int(r[0]) for r in rows]
    losses = [float(r[1]) for r in rows]
    devs = [float(r[2]) if r[2] else None for r in rows]
    return plot_history(epochs, losses, devs,
                        out_path or csv_path.with_suffix(".png"))
