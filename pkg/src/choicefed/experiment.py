"""Experiment orchestration: wires data, nodes, transport and ledger into
full estimation runs, both distributed and centralized.

The centralized oracle runs the very same annealing loop against a local
evaluator over the pooled data; because the chief owns all randomness and
workers are pure evaluators, a distributed run over any partition must
reproduce the oracle trajectory for the same seed.
"""

from __future__ import annotations

import json
import random
import threading
from dataclasses import dataclass
from pathlib import Path
from time import perf_counter
from typing import Callable, Optional

from . import annealing, datagen, report as report_mod
from .annealing import AnnealingSchedule, AnnealResult
from .errors import (ConfigError, EmptyDatasetError, TermsRejectedError,
                     WorkerTimeoutError)
from .ledger import Ledger, TxType
from .model import BetaVector, Dataset, FitStatistics, std_errors
from .protocol import ContractTerms
from .runtime import (ChiefNode, WorkerNode, register_workers, worker_join)
from .transport import InProcEndpoint, TcpEndpoint, tcp_connect, tcp_listen


class LocalEvaluator:
    """Evaluate the pooled log-likelihood in-process."""

    def __init__(self, dataset: Dataset):
        if len(dataset) == 0:
            raise EmptyDatasetError("evaluator needs observations")
        self.dataset = dataset

    def evaluate(self, beta: BetaVector) -> float:
        from .model import log_likelihood
        return log_likelihood(beta, self.dataset)


def centralized_oracle(dataset: Dataset, schedule: AnnealingSchedule,
                       seed: int,
                       beta_initial: BetaVector = BetaVector.zero()
                       ) -> AnnealResult:
    """Non-distributed annealing run with the same RNG consumption
    contract as the distributed chief."""
    rng = random.Random(seed)
    return annealing.run(schedule, beta_initial, LocalEvaluator(dataset), rng)


class Cluster:
    """One chief plus W workers, over in-process pipes or loopback TCP.

    In-process mode runs everything on the calling thread: each chief
    endpoint gets a service hook that steps the matching worker whenever
    the chief blocks for a reply.  TCP mode runs each worker in its own
    thread serving a socket.
    """

    def __init__(self, chief: ChiefNode, workers: list[WorkerNode],
                 transport: str = "inproc", insecure: bool = False,
                 timeout_s: float = 30.0,
                 run_estimate_s: float = 3600.0,
                 tap: Optional[Callable[[bytes], None]] = None):
        self.chief = chief
        self.workers = workers
        self.transport = transport
        self.rejected: list[str] = []
        self._threads: list[threading.Thread] = []
        self._accepted: list[WorkerNode] = []

        if transport == "inproc":
            self._start_inproc(insecure, timeout_s, run_estimate_s, tap)
        elif transport == "tcp":
            self._start_tcp(insecure, timeout_s, run_estimate_s, tap)
        else:
            raise ConfigError(f"unknown transport {transport!r}")

    def _start_inproc(self, insecure, timeout_s, run_estimate_s, tap):
        pairs = [InProcEndpoint.pair(timeout_s) for _ in self.workers]
        joined: dict[str, object] = {}
        errors: dict[str, Exception] = {}

        def join_side(worker, endpoint):
            try:
                joined[worker.node_id] = worker_join(
                    endpoint, worker.node_id, worker.terms,
                    insecure=insecure, tap=tap)
            except TermsRejectedError as exc:
                errors[worker.node_id] = exc

        threads = [threading.Thread(target=join_side, args=(w, we))
                   for w, (_, we) in zip(self.workers, pairs)]
        for t in threads:
            t.start()
        register_workers(self.chief, [ce for ce, _ in pairs],
                         run_estimate_s, insecure=insecure, tap=tap)
        for t in threads:
            t.join()

        self._pairs = []
        for worker, (chief_end, worker_end) in zip(self.workers, pairs):
            if worker.node_id in errors:
                self.rejected.append(worker.node_id)
                continue
            worker.attach(joined[worker.node_id])
            chief_end.service_hook = worker.serve_one
            self._accepted.append(worker)
            self._pairs.append((worker, worker_end))

    def _start_tcp(self, insecure, timeout_s, run_estimate_s, tap):
        srv = tcp_listen()
        host, port = srv.getsockname()
        rejected_lock = threading.Lock()

        def worker_side(worker: WorkerNode):
            endpoint = tcp_connect(host, port, timeout_s)
            try:
                channel = worker_join(endpoint, worker.node_id, worker.terms,
                                      insecure=insecure, tap=tap)
            except TermsRejectedError:
                with rejected_lock:
                    self.rejected.append(worker.node_id)
                endpoint.close()
                return
            worker.attach(channel)
            try:
                worker.serve_forever()
            except WorkerTimeoutError:
                pass        # chief is gone; nothing left to serve

        self._threads = [threading.Thread(target=worker_side, args=(w,))
                         for w in self.workers]
        for t in self._threads:
            t.start()
        endpoints = []
        for _ in self.workers:
            sock, _addr = srv.accept()
            endpoints.append(TcpEndpoint(sock, timeout_s))
        srv.close()
        register_workers(self.chief, endpoints, run_estimate_s,
                         insecure=insecure, tap=tap)
        self._accepted = [w for w in self.workers
                          if w.node_id not in self.rejected]

    def shutdown(self) -> None:
        """Let workers consume any pending frames (ModelFinal) and stop."""
        if self.transport == "inproc":
            for worker, worker_end in getattr(self, "_pairs", []):
                while worker_end.inbox:
                    if not worker.serve_one():
                        break
        for t in self._threads:
            t.join(timeout=10)
        for w in self._accepted:
            if w.channel is not None:
                w.channel.close()


def chief_run(datasets: list[Dataset], schedule: AnnealingSchedule, seed: int,
              beta_initial: BetaVector = BetaVector.zero(),
              transport: str = "inproc", insecure: bool = False,
              ledger: Optional[Ledger] = None, timeout_s: float = 30.0,
              tap: Optional[Callable[[bytes], None]] = None,
              worker_terms: Optional[list[ContractTerms]] = None,
              ) -> tuple[AnnealResult, FitStatistics, Cluster]:
    """Full distributed estimation over one worker per dataset part."""
    chief = ChiefNode("chief", schedule, ledger=ledger)
    if ledger is not None:
        ledger.append(chief.node_id, "domain", TxType.DOMAIN_ANNOUNCE)
    workers = []
    for i, part in enumerate(datasets, start=1):
        terms = (worker_terms[i - 1] if worker_terms is not None
                 else ContractTerms(temporality_s=86400.0))
        workers.append(WorkerNode(f"worker-{i}", part, terms))
    cluster = Cluster(chief, workers, transport=transport, insecure=insecure,
                      timeout_s=timeout_s, tap=tap)
    try:
        chief.publish_survey(datagen.SCHEMA_ID)
        rng = random.Random(seed)
        result, fit = chief.estimate(beta_initial, rng)
    finally:
        cluster.shutdown()
    return result, fit, cluster


@dataclass
class ExperimentConfig:
    """Single canonical-JSON config; CLI flags override fields."""

    n: int = 246
    true_beta: tuple[float, float, float] = (0.35, -0.006, -0.001)
    data_path: Optional[str] = None          # read instead of generating
    data_seed: int = 1
    partition_seed: int = 2
    seed: int = 3                            # annealer RNG
    workers: int = 4
    partition_sizes: Optional[list[int]] = None
    fast: bool = False
    temp_initial: float = 1.0
    temp_min: Optional[float] = None
    alpha: float = 0.9
    inner_iterations: Optional[int] = None
    step_half_width: float = 0.01
    transport: str = "inproc"
    insecure: bool = False
    timeout_s: float = 30.0
    ledger_sample: int = 1
    outdir: str = "runs/latest"

    def schedule(self) -> AnnealingSchedule:
        base = AnnealingSchedule.fast() if self.fast else AnnealingSchedule()
        return AnnealingSchedule(
            temp_initial=self.temp_initial,
            temp_min=self.temp_min if self.temp_min is not None else base.temp_min,
            alpha=self.alpha,
            inner_iterations=(self.inner_iterations
                              if self.inner_iterations is not None
                              else base.inner_iterations),
            step_half_width=self.step_half_width)

    @classmethod
    def from_json(cls, path: str | Path) -> "ExperimentConfig":
        try:
            obj = json.loads(Path(path).read_text(encoding="utf-8"))
        except (OSError, json.JSONDecodeError) as exc:
            raise ConfigError(f"cannot read config {path}: {exc}") from exc
        known = {f for f in cls.__dataclass_fields__}
        unknown = set(obj) - known
        if unknown:
            raise ConfigError(f"unknown config fields: {sorted(unknown)}")
        if "true_beta" in obj:
            obj["true_beta"] = tuple(obj["true_beta"])
        return cls(**obj)


def run_experiment(config: ExperimentConfig) -> report_mod.RunReport:
    """Execute the full protocol and write report + ledger + trajectory."""
    outdir = Path(config.outdir)
    outdir.mkdir(parents=True, exist_ok=True)

    if config.data_path is not None:
        pooled = datagen.read_csv(config.data_path)
        provenance = config.data_path
    else:
        survey = datagen.gen_data(config.n, BetaVector(*config.true_beta),
                                  config.data_seed)
        pooled = survey.data
        provenance = f"synthetic(seed={config.data_seed})"

    sizes = config.partition_sizes or datagen.default_partition_sizes(
        len(pooled), config.workers)
    if sum(sizes) != len(pooled):
        raise ConfigError(
            f"partition sizes {sizes} do not sum to {len(pooled)} rows")
    parts = datagen.partition(pooled, sizes, config.partition_seed)

    schedule = config.schedule()
    ledger_path = outdir / "ledger.jsonl"
    if ledger_path.exists():
        ledger_path.unlink()

    t0 = perf_counter()
    with Ledger(ledger_path, sample=config.ledger_sample) as led:
        result, fit, cluster = chief_run(
            parts, schedule, config.seed,
            transport=config.transport, insecure=config.insecure,
            ledger=led, timeout_s=config.timeout_s)
    runtime_s = perf_counter() - t0

    # std errors need the pooled data; the chief itself never sees it, so
    # they are filled in here by the orchestrator that owns the dataset
    try:
        se = tuple(float(s) for s in std_errors(result.beta, pooled))
    except Exception:
        se = None
    fit = FitStatistics(fit.null_ll, fit.final_ll, fit.rho_square, se)

    rep = report_mod.build_report(
        config=config, schedule=schedule, result=result, fit=fit,
        chief=cluster.chief, workers=cluster.workers,
        partition_sizes=sizes, provenance=provenance,
        ledger_path=str(ledger_path), runtime_s=runtime_s)

    report_mod.write_report(rep, outdir)
    report_mod.write_trajectory_csv(result, outdir / "trajectory.csv")
    return rep
