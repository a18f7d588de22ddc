"""Persistence of batch results: episode CSV, JSON mirrors and plot data."""
from __future__ import annotations

import csv
import json
from pathlib import Path
from typing import Optional

from scai.harness.stats import BatchSummary, label_convergence, summarize_rows

CSV_COLUMNS = (
    "sim_id", "epoch", "phase", "agent_kind", "role", "currency",
    "total_amount", "offered_share_pct", "decision", "directive_hash",
)
PLOT_COLUMNS = ("epoch", "series", "mean", "ci_low", "ci_high", "n")

EPISODES_CSV = "episodes.csv"
SIMULATIONS_JSON = "simulations.json"
SUMMARY_JSON = "summary.json"
PLOT_DATA_CSV = "plot_data.csv"
MANIFEST_JSON = "manifest.json"


def _fmt(value) -> str:
    # repr keeps floats exact and stable across runs
    if value is None:
        return ""
    if isinstance(value, float):
        return repr(value)
    return str(value)


def write_csv(results, path) -> int:
    """One row per recorded episode; returns the row count."""
    n = 0
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(CSV_COLUMNS)
        for res in results:
            for r in res.records:
                w.writerow([_fmt(getattr(r, c)) for c in CSV_COLUMNS])
                n += 1
    return n


def read_csv(path) -> list[dict]:
    rows = []
    with open(path, newline="", encoding="utf-8") as fh:
        reader = csv.DictReader(fh)
        if tuple(reader.fieldnames or ()) != CSV_COLUMNS:
            raise ValueError(f"{path}: unexpected columns {reader.fieldnames}")
        for row in reader:
            row["sim_id"] = int(row["sim_id"])
            row["epoch"] = int(row["epoch"])
            row["total_amount"] = int(row["total_amount"])
            row["offered_share_pct"] = float(row["offered_share_pct"])
            rows.append(row)
    return rows


def write_json(results, path) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        json.dump([r.to_dict() for r in results], fh, indent=1, sort_keys=True)
        fh.write("\n")


def read_json(path):
    from scai.harness.runner import SimulationResult

    with open(path, encoding="utf-8") as fh:
        return [SimulationResult.from_dict(d) for d in json.load(fh)]


def write_summary(summary: BatchSummary, path) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(summary.to_dict(), fh, indent=1, sort_keys=True)
        fh.write("\n")


def read_summary(path) -> BatchSummary:
    with open(path, encoding="utf-8") as fh:
        return BatchSummary.from_dict(json.load(fh))


def write_plot_data(summary: BatchSummary, path) -> None:
    """Per-epoch mean and CI for users and assistant, plus test-phase currencies."""
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(PLOT_COLUMNS)
        for name, s in (("users", summary.users), ("assistant", summary.assistant)):
            for i, epoch in enumerate(summary.epochs):
                w.writerow([epoch, name, _fmt(s.mean[i]), _fmt(s.ci_low[i]), _fmt(s.ci_high[i]), s.n[i]])
        for currency, t in summary.test.items():
            w.writerow(["test", f"test:{currency}", _fmt(t["mean"]), _fmt(t["ci_low"]), _fmt(t["ci_high"]), t["n"]])


def read_plot_data(path) -> list[dict]:
    def num(x):
        return float(x) if x != "" else None

    with open(path, newline="", encoding="utf-8") as fh:
        return [
            {**row, "mean": num(row["mean"]), "ci_low": num(row["ci_low"]),
             "ci_high": num(row["ci_high"]), "n": int(row["n"])}
            for row in csv.DictReader(fh)
        ]


def export_results(results, fmt: str, path) -> Path:
    """Write ``results`` as CSV rows or as a JSON list of simulation results."""
    if not results:
        raise ValueError("nothing to export")
    path = Path(path)
    if fmt == "csv":
        write_csv(results, path)
    elif fmt == "json":
        write_json(results, path)
    else:
        raise ValueError(f"unknown export format {fmt!r}")
    return path


def write_batch(out_dir, cfg, summary: BatchSummary, results) -> dict[str, Path]:
    """Write every artefact of a batch into ``out_dir``; returns name -> path."""
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    paths = {
        "csv": out / EPISODES_CSV,
        "json": out / SIMULATIONS_JSON,
        "summary": out / SUMMARY_JSON,
        "plot_data": out / PLOT_DATA_CSV,
        "manifest": out / MANIFEST_JSON,
    }
    write_csv(results, paths["csv"])
    write_json(results, paths["json"])
    write_summary(summary, paths["summary"])
    write_plot_data(summary, paths["plot_data"])
    manifest = {
        "scenario": cfg.to_dict(),
        "n_simulations": len(results),
        "n_completed": sum(r.completed for r in results),
        "failed": [r.sim_id for r in results if not r.completed],
    }
    with open(paths["manifest"], "w", encoding="utf-8") as fh:
        json.dump(manifest, fh, indent=1, sort_keys=True)
        fh.write("\n")
    return paths


def summarize_dir(in_dir, tolerance: Optional[float] = None) -> BatchSummary:
    """Recompute the batch summary from the persisted CSV.

    Converged-policy labels come from simulations.json since the CSV only
    carries directive hashes.
    """
    d = Path(in_dir)
    with open(d / MANIFEST_JSON, encoding="utf-8") as fh:
        manifest = json.load(fh)
    scenario = manifest["scenario"]
    if tolerance is None:
        tolerance = scenario.get("convergence_tolerance", 5.0)
    failed = set(manifest.get("failed", []))
    rows = [r for r in read_csv(d / EPISODES_CSV) if r["sim_id"] not in failed]
    done = [r for r in read_json(d / SIMULATIONS_JSON) if r.completed]
    return summarize_rows(
        rows,
        scenario["n_epochs"],
        manifest["n_simulations"],
        manifest["n_completed"],
        [r.converged_policy for r in done],
        [label_convergence(r, tolerance)[1] for r in done],
    )


def csv_row_count(n_sims: int, episodes_per_epoch: int, n_epochs: int, test_episodes: int = 0) -> int:
    return n_sims * (episodes_per_epoch * n_epochs + test_episodes)

