"""Per-epoch means, 95% confidence intervals and convergence labels."""
from __future__ import annotations

import math
from collections import Counter
from dataclasses import asdict, dataclass, field
from typing import Optional, Sequence

Z95 = 1.96


def mean_ci(values: Sequence[float]) -> tuple[Optional[float], Optional[float], Optional[float]]:
    """Mean and mean +/- 1.96 * SEM; the interval is absent below two values."""
    vals = [float(v) for v in values]
    n = len(vals)
    if n == 0:
        return None, None, None
    mean = math.fsum(vals) / n
    if n < 2:
        return mean, None, None
    var = math.fsum((v - mean) ** 2 for v in vals) / (n - 1)
    half = Z95 * math.sqrt(var) / math.sqrt(n)
    return mean, mean - half, mean + half


def label_convergence(result, tolerance: float = 5.0) -> tuple[bool, Optional[int]]:
    """First epoch from which the assistant stays within ``tolerance`` points of the users.

    Epochs are 1-based. An epoch where either series is missing breaks convergence.
    """
    assistant, users = result.assistant_series(), result.user_series()
    converged_from = None
    for epoch, (a, u) in enumerate(zip(assistant, users), start=1):
        close = a is not None and u is not None and abs(a - u) <= tolerance + 1e-9
        if close and converged_from is None:
            converged_from = epoch
        elif not close:
            converged_from = None
    return converged_from is not None, converged_from


@dataclass
class SeriesStats:
    mean: list[Optional[float]] = field(default_factory=list)
    ci_low: list[Optional[float]] = field(default_factory=list)
    ci_high: list[Optional[float]] = field(default_factory=list)
    n: list[int] = field(default_factory=list)

    @classmethod
    def from_columns(cls, columns: Sequence[Sequence[float]]) -> "SeriesStats":
        out = cls()
        for col in columns:
            m, lo, hi = mean_ci(col)
            out.mean.append(m)
            out.ci_low.append(lo)
            out.ci_high.append(hi)
            out.n.append(len(col))
        return out


@dataclass
class BatchSummary:
    n_simulations: int
    n_completed: int
    epochs: list[int]
    users: SeriesStats
    assistant: SeriesStats
    test: dict[str, dict] = field(default_factory=dict)
    converged_policies: list[str] = field(default_factory=list)
    convergence_epochs: list[Optional[int]] = field(default_factory=list)

    @property
    def n_failed(self) -> int:
        return self.n_simulations - self.n_completed

    @property
    def converged_distribution(self) -> dict[str, float]:
        counts = Counter(self.converged_policies)
        n = len(self.converged_policies)
        return {k: counts[k] / n for k in sorted(counts)} if n else {}

    def to_dict(self) -> dict:
        d = asdict(self)
        d["n_failed"] = self.n_failed
        d["converged_distribution"] = self.converged_distribution
        return d

    @classmethod
    def from_dict(cls, d: dict) -> "BatchSummary":
        return cls(
            n_simulations=d["n_simulations"],
            n_completed=d["n_completed"],
            epochs=list(d["epochs"]),
            users=SeriesStats(**d["users"]),
            assistant=SeriesStats(**d["assistant"]),
            test=dict(d.get("test", {})),
            converged_policies=list(d.get("converged_policies", [])),
            convergence_epochs=list(d.get("convergence_epochs", [])),
        )


def summarize_rows(rows: Sequence[dict], n_epochs: int, n_simulations: int, n_completed: int,
                   converged_policies=(), convergence_epochs=()) -> BatchSummary:
    """Aggregate episode rows (as in the CSV export) into a BatchSummary.

    Each simulation contributes its own per-epoch mean; the CI runs across simulations.
    """
    per_sim_user: dict[tuple[int, int], list[float]] = {}
    per_sim_asst: dict[tuple[int, int], list[float]] = {}
    per_sim_test: dict[tuple[str, int], list[float]] = {}
    for r in rows:
        sim, epoch, share = int(r["sim_id"]), int(r["epoch"]), float(r["offered_share_pct"])
        assistant_offer = r["agent_kind"] == "assistant" and r["role"] == "proposer"
        if r["phase"] == "test":
            if assistant_offer:
                per_sim_test.setdefault((r["currency"], sim), []).append(share)
            continue
        target = per_sim_asst if assistant_offer else per_sim_user
        target.setdefault((epoch, sim), []).append(share)

    def columns(per_sim):
        cols = []
        for epoch in range(1, n_epochs + 1):
            sims = sorted(s for (e, s) in per_sim if e == epoch)
            cols.append([math.fsum(per_sim[(epoch, s)]) / len(per_sim[(epoch, s)]) for s in sims])
        return cols

    test = {}
    for currency in sorted({c for c, _ in per_sim_test}):
        sims = sorted(s for c, s in per_sim_test if c == currency)
        col = [math.fsum(per_sim_test[(currency, s)]) / len(per_sim_test[(currency, s)]) for s in sims]
        m, lo, hi = mean_ci(col)
        test[currency] = {"mean": m, "ci_low": lo, "ci_high": hi, "n": len(col)}

    return BatchSummary(
        n_simulations=n_simulations,
        n_completed=n_completed,
        epochs=list(range(1, n_epochs + 1)),
        users=SeriesStats.from_columns(columns(per_sim_user)),
        assistant=SeriesStats.from_columns(columns(per_sim_asst)),
        test=test,
        converged_policies=list(converged_policies),
        convergence_epochs=list(convergence_epochs),
    )


def record_rows(results) -> list[dict]:
    rows = []
    for res in results:
        for r in res.records:
            rows.append({
                "sim_id": r.sim_id, "epoch": r.epoch, "phase": r.phase, "agent_kind": r.agent_kind,
                "role": r.role, "currency": r.currency, "total_amount": r.total_amount,
                "offered_share_pct": r.offered_share_pct, "decision": r.decision,
                "directive_hash": r.directive_hash,
            })
    return rows


def summarize(results, tolerance: float = 5.0) -> BatchSummary:
    """Summary over completed simulations; failed runs only count towards n_simulations."""
    done = [r for r in results if r.completed]
    n_epochs = max((r.n_epochs for r in results), default=0)
    return summarize_rows(
        record_rows(done),
        n_epochs,
        len(results),
        len(done),
        [r.converged_policy for r in done],
        [label_convergence(r, tolerance)[1] for r in done],
    )
