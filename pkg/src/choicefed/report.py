"""Run reports: canonical JSON, formatted text tables, delimited
trajectory output and rendered figures.

The text report mirrors the usual estimation-table layout (parameter
values with standard errors, null/final log-likelihood, rho square)
followed by a per-node latency table.  The `figures` path renders the
accepted log-likelihood trajectory, the temperature schedule and the
latency summary to PNG files next to the delimited output.
"""

from __future__ import annotations

import csv
import json
from dataclasses import asdict, dataclass
from pathlib import Path
from typing import Optional

from .annealing import AnnealResult, AnnealingSchedule, outer_level_count
from .model import FitStatistics
from .runtime import ChiefNode, LatencyRecord, WorkerNode

PARAM_NAMES = ("beta_asc", "beta_cost", "beta_time")


@dataclass
class RunReport:
    seed: int
    provenance: str
    transport: str
    encrypted: bool
    schedule: dict
    partition_sizes: list[int]
    worker_ids: list[str]
    beta: tuple[float, float, float]
    std_errors: Optional[tuple[float, float, float]]
    null_ll: float
    final_ll: float
    rho_square: float
    outer_levels: int
    evaluator_calls: int
    messages_per_worker: dict[str, int]       # data messages (both directions)
    bytes_per_worker: dict[str, int]          # wire bytes, both directions
    max_frame_bytes: dict[str, int]           # per message type
    latency: list[dict]                       # LatencyRecord rows
    ledger_path: str
    runtime_s: float

    def to_json(self) -> str:
        return json.dumps(asdict(self), indent=2, sort_keys=True)

    @classmethod
    def from_json(cls, text: str) -> "RunReport":
        obj = json.loads(text)
        obj["beta"] = tuple(obj["beta"])
        if obj["std_errors"] is not None:
            obj["std_errors"] = tuple(obj["std_errors"])
        return cls(**obj)

    def is_self_consistent(self, tol: float = 1e-12) -> bool:
        return abs(self.rho_square - (1.0 - self.final_ll / self.null_ll)) <= tol


def build_report(config, schedule: AnnealingSchedule, result: AnnealResult,
                 fit: FitStatistics, chief: ChiefNode,
                 workers: list[WorkerNode], partition_sizes: list[int],
                 provenance: str, ledger_path: str,
                 runtime_s: float) -> RunReport:
    messages = {}
    wire_bytes = {}
    max_frames: dict[str, int] = {}
    for w in workers:
        if w.channel is None:
            continue
        # one proposal in + one evaluation out per evaluator call
        messages[w.node_id] = 2 * w.proposals_handled
        wire_bytes[w.node_id] = w.channel.bytes_sent + w.channel.bytes_received
        for mtype, size in w.channel.max_frame_sent.items():
            max_frames[mtype] = max(max_frames.get(mtype, 0), size)
    for rw in chief.workers:
        for mtype, size in rw.channel.max_frame_sent.items():
            max_frames[mtype] = max(max_frames.get(mtype, 0), size)

    latency = [asdict(r) for r in chief.metrics.latency_records()]
    for w in workers:
        latency.extend(asdict(r) for r in w.metrics.latency_records())

    return RunReport(
        seed=config.seed,
        provenance=provenance,
        transport=config.transport,
        encrypted=not config.insecure,
        schedule=asdict(schedule),
        partition_sizes=list(partition_sizes),
        worker_ids=[w.node_id for w in workers],
        beta=result.beta.as_tuple(),
        std_errors=fit.std_errors,
        null_ll=fit.null_ll,
        final_ll=fit.final_ll,
        rho_square=fit.rho_square,
        outer_levels=outer_level_count(schedule),
        evaluator_calls=result.evaluator_calls,
        messages_per_worker=messages,
        bytes_per_worker=wire_bytes,
        max_frame_bytes=max_frames,
        latency=latency,
        ledger_path=ledger_path,
        runtime_s=runtime_s,
    )


def format_text(rep: RunReport) -> str:
    lines = []
    lines.append("Estimation results")
    lines.append("=" * 54)
    lines.append(f"{'Parameter':<12}{'Value':>14}{'Std. err.':>14}")
    se = rep.std_errors or ("n/a", "n/a", "n/a")
    for name, value, err in zip(PARAM_NAMES, rep.beta, se):
        err_s = f"{err:.6f}" if isinstance(err, float) else err
        lines.append(f"{name:<12}{value:>14.4f}{err_s:>14}")
    lines.append("-" * 54)
    lines.append(f"{'Null log-likelihood':<28}{rep.null_ll:>14.4f}")
    lines.append(f"{'Final log-likelihood':<28}{rep.final_ll:>14.4f}")
    lines.append(f"{'Rho square':<28}{rep.rho_square:>14.4f}")
    lines.append("")
    lines.append("Message latency (seconds)")
    lines.append("=" * 54)
    lines.append(f"{'Node':<12}{'Dir':<6}{'Count':>9}{'Mean':>12}{'Sigma':>12}")
    for row in rep.latency:
        lines.append(f"{row['node_id']:<12}{row['direction']:<6}"
                     f"{row['count']:>9}{row['mean_s']:>12.6f}"
                     f"{row['std_s']:>12.6f}")
    lines.append("")
    lines.append(f"Evaluator calls: {rep.evaluator_calls}"
                 f"  (temperature levels: {rep.outer_levels})")
    for wid in rep.worker_ids:
        if wid in rep.messages_per_worker:
            lines.append(f"{wid}: {rep.messages_per_worker[wid]} messages, "
                         f"{rep.bytes_per_worker[wid]} bytes on the wire")
    lines.append(f"Transport: {rep.transport}"
                 f" ({'encrypted' if rep.encrypted else 'PLAINTEXT'})"
                 f"  runtime: {rep.runtime_s:.1f}s")
    lines.append(f"Ledger: {rep.ledger_path}")
    return "\n".join(lines) + "\n"


def write_report(rep: RunReport, outdir: str | Path) -> None:
    outdir = Path(outdir)
    outdir.mkdir(parents=True, exist_ok=True)
    (outdir / "report.json").write_text(rep.to_json() + "\n", encoding="utf-8")
    (outdir / "report.txt").write_text(format_text(rep), encoding="utf-8")


TRAJECTORY_HEADER = ["round", "temp", "ll", "beta_asc", "beta_cost", "beta_time"]


def write_trajectory_csv(result: AnnealResult, path: str | Path) -> None:
    """Delimited accepted-state trajectory (initial state first)."""
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        writer.writerow(TRAJECTORY_HEADER)
        writer.writerow([0, "", repr(result.initial_ll),
                         *(repr(v) for v in result.initial_beta.as_tuple())])
        for rec in result.trajectory:
            if rec.accepted:
                writer.writerow([rec.round_no, repr(rec.temp), repr(rec.ll),
                                 *(repr(v) for v in rec.beta.as_tuple())])


def read_trajectory_csv(path: str | Path) -> list[dict]:
    rows = []
    with open(path, newline="", encoding="utf-8") as fh:
        reader = csv.DictReader(fh)
        for row in reader:
            rows.append({
                "round": int(row["round"]),
                "temp": float(row["temp"]) if row["temp"] else None,
                "ll": float(row["ll"]),
                "beta": (float(row["beta_asc"]), float(row["beta_cost"]),
                         float(row["beta_time"])),
            })
    return rows


def write_figures(rep: RunReport, trajectory: list[dict],
                  outdir: str | Path) -> list[Path]:
    """Render the run figures to PNG files; returns the paths written."""
    import matplotlib
    matplotlib.use("Agg")
    import matplotlib.pyplot as plt

    outdir = Path(outdir)
    outdir.mkdir(parents=True, exist_ok=True)
    written = []

    rounds = [r["round"] for r in trajectory]
    lls = [r["ll"] for r in trajectory]
    fig, ax = plt.subplots(figsize=(7, 4))
    ax.plot(rounds, lls, lw=1.0)
    ax.set_xlabel("proposal round")
    ax.set_ylabel("accepted log-likelihood")
    ax.set_title("Annealing trajectory")
    ax.axhline(rep.final_ll, color="gray", ls=":", lw=0.8)
    fig.tight_layout()
    path = outdir / "trajectory.png"
    fig.savefig(path, dpi=120)
    plt.close(fig)
    written.append(path)

    sched = rep.schedule
    temps = []
    t = sched["temp_initial"]
    while t > sched["temp_min"]:
        temps.append(t)
        t *= sched["alpha"]
    fig, ax = plt.subplots(figsize=(7, 4))
    ax.semilogy(range(len(temps)), temps)
    ax.set_xlabel("temperature level")
    ax.set_ylabel("temperature")
    ax.set_title("Cooling schedule")
    fig.tight_layout()
    path = outdir / "temperature.png"
    fig.savefig(path, dpi=120)
    plt.close(fig)
    written.append(path)

    rows = [r for r in rep.latency if r["count"] > 0]
    if rows:
        labels = [f"{r['node_id']}\n{r['direction']}" for r in rows]
        means = [r["mean_s"] for r in rows]
        errs = [r["std_s"] for r in rows]
        fig, ax = plt.subplots(figsize=(8, 4))
        ax.bar(range(len(rows)), means, yerr=errs, capsize=3)
        ax.set_xticks(range(len(rows)), labels, fontsize=8)
        ax.set_ylabel("latency (s)")
        ax.set_title("Per-node message latency")
        fig.tight_layout()
        path = outdir / "latency.png"
        fig.savefig(path, dpi=120)
        plt.close(fig)
        written.append(path)

    return written
