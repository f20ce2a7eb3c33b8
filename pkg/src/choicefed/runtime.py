"""Chief and worker node processes for the distributed estimation.

The chief owns the annealing schedule and all randomness; its only data
inputs are Evaluation messages.  Workers hold their observations locally
and answer each BetaProposal with exactly one Evaluation carrying the
log-likelihood of their private data at the proposed parameters;
nothing else ever leaves a worker.

The optimization loop is single-threaded; each proposal is a synchronous
rendezvous (broadcast, then block for all W replies, summed in fixed
worker-registration order so the float sum is reproducible).
"""

from __future__ import annotations

import json
import random
import statistics
from dataclasses import dataclass
from time import perf_counter
from typing import Optional

from . import annealing
from .annealing import AnnealingSchedule, AnnealResult
from .errors import (ChannelClosedError, ProtocolError, RoundMismatchError,
                     TermsRejectedError, WorkerTimeoutError)
from .ledger import Ledger, TxType
from .model import BetaVector, Dataset, FitStatistics, log_likelihood
from .protocol import (ContractTerms, Endpoint, MsgType,
                       SecureChannel, handshake, terms_compatible)

_LEN_BYTES = 4

DEFAULT_TERMS = ContractTerms(temporality_s=86400.0)


@dataclass(frozen=True)
class LatencyRecord:
    node_id: str
    direction: str            # "send" or "get"
    count: int
    mean_s: float
    std_s: float              # population standard deviation


class NodeMetrics:
    """Per-node latency samples and traffic counters."""

    def __init__(self, node_id: str):
        self.node_id = node_id
        self.send_samples: list[float] = []
        self.get_samples: list[float] = []

    def record_send(self, dt: float) -> None:
        self.send_samples.append(dt)

    def record_get(self, dt: float) -> None:
        self.get_samples.append(dt)

    def _summarize(self, direction: str, samples: list[float]) -> LatencyRecord:
        if not samples:
            return LatencyRecord(self.node_id, direction, 0, 0.0, 0.0)
        return LatencyRecord(self.node_id, direction, len(samples),
                             statistics.fmean(samples),
                             statistics.pstdev(samples))

    def latency_records(self) -> list[LatencyRecord]:
        return [self._summarize("send", self.send_samples),
                self._summarize("get", self.get_samples)]


class WorkerNode:
    """Data holder: evaluates the log-likelihood of its private
    observations at whatever parameters the chief proposes."""

    def __init__(self, node_id: str, dataset: Dataset,
                 terms: ContractTerms = DEFAULT_TERMS):
        if len(dataset) == 0:
            raise ValueError("worker needs at least one observation")
        self.node_id = node_id
        self.dataset = dataset
        self.terms = terms
        self.channel: Optional[SecureChannel] = None
        self.metrics = NodeMetrics(node_id)
        self.proposals_handled = 0

    def attach(self, channel: SecureChannel) -> None:
        self.channel = channel
        channel.get_latency_sink = self.metrics.record_get

    def serve_one(self) -> bool:
        """Handle one inbound message; False once the run is over."""
        msg = self.channel.recv()
        if msg.msg_type is MsgType.BETA_PROPOSAL:
            self.proposals_handled += 1
            beta = BetaVector(*msg.payload["beta"])
            ll = log_likelihood(beta, self.dataset)
            t0 = perf_counter()
            self.channel.send(MsgType.EVALUATION,
                              {"ll": ll, "round": msg.payload["round"]})
            self.metrics.record_send(perf_counter() - t0)
            return True
        if msg.msg_type is MsgType.SURVEY_PUBLISH:
            return True
        if msg.msg_type is MsgType.MODEL_FINAL:
            return False
        raise ProtocolError(f"worker got unexpected {msg.msg_type.value}")

    def serve_forever(self) -> None:
        try:
            while self.serve_one():
                pass
        except ChannelClosedError:
            pass


@dataclass
class RegisteredWorker:
    worker_id: str
    channel: SecureChannel
    terms: ContractTerms


class ChiefNode:
    """Coordinator: never holds any observation; drives the annealer
    through a broadcast-and-sum evaluator over its registered workers."""

    def __init__(self, node_id: str, schedule: AnnealingSchedule,
                 ledger: Optional[Ledger] = None,
                 terms: ContractTerms = DEFAULT_TERMS):
        self.node_id = node_id
        self.schedule = schedule
        self.ledger = ledger
        self.terms = terms
        self.workers: list[RegisteredWorker] = []
        self.metrics = NodeMetrics(node_id)

    def _ledger_append(self, receiver: str, tx_type: TxType) -> None:
        if self.ledger is not None:
            self.ledger.append(self.node_id, receiver, tx_type)

    def register(self, channel: SecureChannel, terms: ContractTerms) -> None:
        channel.get_latency_sink = self.metrics.record_get
        self.workers.append(RegisteredWorker(channel.peer_id, channel, terms))
        self._ledger_append(channel.peer_id, TxType.CHANNEL_OPEN)

    def publish_survey(self, schema: str, incentive: str = "") -> None:
        self._ledger_append("domain", TxType.SURVEY_PUBLISH)
        for w in self.workers:
            w.channel.send(MsgType.SURVEY_PUBLISH,
                           {"schema": schema, "incentive": incentive})

    def estimate(self, beta_initial: BetaVector, rng: random.Random
                 ) -> tuple[AnnealResult, FitStatistics]:
        """Run the distributed annealing to completion.

        The initial evaluation doubles as the null likelihood when the
        start point is the zero vector (the default); otherwise one extra
        zero-parameter round is spent on it up front.
        """
        if not self.workers:
            raise ValueError("cannot estimate with zero registered workers")
        evaluator = _DistributedEvaluator(self)
        null_ll = None
        if beta_initial != BetaVector.zero():
            null_ll = evaluator.evaluate(BetaVector.zero())
        result = annealing.run(self.schedule, beta_initial, evaluator, rng)
        if null_ll is None:
            null_ll = result.initial_ll
        self.finish()
        from .model import rho_square
        fit = FitStatistics(null_ll, result.ll,
                            rho_square(null_ll, result.ll), None)
        return result, fit

    def finish(self) -> None:
        """Release the workers and publish the final model transaction."""
        for w in self.workers:
            try:
                w.channel.send(MsgType.MODEL_FINAL, {})
            except ChannelClosedError:
                pass
        self._ledger_append("domain", TxType.MODEL_PUBLISH)


class _DistributedEvaluator:
    """Broadcast beta to all workers, block for all replies, sum them."""

    def __init__(self, chief: ChiefNode):
        self.chief = chief
        self.calls = 0

    def evaluate(self, beta: BetaVector) -> float:
        chief = self.chief
        round_no = self.calls
        payload = {"beta": list(beta.as_tuple()), "round": round_no}
        t0 = perf_counter()
        for w in chief.workers:
            w.channel.send(MsgType.BETA_PROPOSAL, payload)
            if chief.ledger is not None:
                chief.ledger.append(chief.node_id, w.worker_id, TxType.BETA_SENT)
        # one send sample per broadcast: the chief pays W sequential unicasts
        chief.metrics.record_send(perf_counter() - t0)

        total = 0.0
        for w in chief.workers:
            try:
                msg = w.channel.recv()
            except WorkerTimeoutError as exc:
                raise WorkerTimeoutError(round_no, w.worker_id) from exc
            if msg.msg_type is not MsgType.EVALUATION:
                raise ProtocolError(
                    f"expected Evaluation, got {msg.msg_type.value}")
            if set(msg.payload) != {"ll", "round"}:
                raise ProtocolError("Evaluation payload must be {ll, round}")
            if msg.payload["round"] != round_no:
                raise RoundMismatchError(
                    f"round {msg.payload['round']} from {w.worker_id}, "
                    f"expected {round_no}")
            total += msg.payload["ll"]
            if chief.ledger is not None:
                chief.ledger.append(w.worker_id, chief.node_id,
                                    TxType.EVALUATION_SENT)
        self.calls += 1
        return total


# --- registration preamble (domain join, term matching, handshake) ---

def _send_plain(endpoint: Endpoint, obj: dict) -> None:
    body = json.dumps(obj, separators=(",", ":")).encode("utf-8")
    endpoint.send_frame(len(body).to_bytes(_LEN_BYTES, "big") + body)


def _recv_plain(endpoint: Endpoint) -> dict:
    frame = endpoint.recv_frame()
    return json.loads(frame[_LEN_BYTES:].decode("utf-8"))


def worker_join(endpoint: Endpoint, worker_id: str, terms: ContractTerms,
                insecure: bool = False, tap=None) -> SecureChannel:
    """Worker side of registration: announce terms, await the verdict,
    then complete the handshake as responder."""
    _send_plain(endpoint, {"join": worker_id, "terms": terms.to_payload()})
    verdict = _recv_plain(endpoint)
    if not verdict.get("accept"):
        raise TermsRejectedError(verdict.get("reason", "terms rejected"))
    return handshake(endpoint, worker_id, initiator=False,
                     insecure=insecure, tap=tap)


def register_workers(chief: ChiefNode, endpoints: list[Endpoint],
                     run_estimate_s: float, insecure: bool = False,
                     tap=None) -> tuple[list[str], list[str]]:
    """Chief side: process one join per endpoint.  Incompatible joiners
    are rejected without affecting the others.  Returns (registered
    worker ids, rejected worker ids)."""
    registered, rejected = [], []
    for endpoint in endpoints:
        join = _recv_plain(endpoint)
        worker_id = join["join"]
        terms = ContractTerms.from_payload(join["terms"])
        if not terms_compatible(chief.terms, terms, run_estimate_s):
            _send_plain(endpoint, {"accept": False,
                                   "reason": "contract terms contradict"})
            rejected.append(worker_id)
            continue
        _send_plain(endpoint, {"accept": True})
        channel = handshake(endpoint, chief.node_id, initiator=True,
                            insecure=insecure, tap=tap)
        chief.register(channel, terms)
        registered.append(worker_id)
    return registered, rejected
