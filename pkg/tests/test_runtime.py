import json
import math

import numpy as np
import pytest

from choicefed import datagen
from choicefed.annealing import AnnealingSchedule
from choicefed.errors import WorkerTimeoutError, RoundMismatchError
from choicefed.experiment import Cluster, centralized_oracle, chief_run
from choicefed.ledger import Ledger, TxType, counts_by_type, verify_chain
from choicefed.model import BetaVector, log_likelihood
from choicefed.protocol import ContractTerms, MsgType
from choicefed.runtime import ChiefNode, WorkerNode

TINY = AnnealingSchedule(temp_initial=1.0, temp_min=0.1, alpha=0.5,
                         inner_iterations=10)
PERMISSIVE = ContractTerms(temporality_s=86400.0)


@pytest.fixture(scope="module")
def survey():
    return datagen.gen_data(246, BetaVector(0.35, -0.006, -0.001), seed=1)


def assert_trajectories_match(a, b, ll_tol=0.0, beta_tol=0.0):
    sa, sb = a.accepted_states(), b.accepted_states()
    assert len(sa) == len(sb)
    for (ra, ba, la), (rb, bb, lb) in zip(sa, sb):
        assert ra == rb
        assert abs(la - lb) <= ll_tol
        for x, y in zip(ba.as_tuple(), bb.as_tuple()):
            assert abs(x - y) <= beta_tol


class TestEquivalence:
    def test_single_worker_reproduces_oracle_exactly(self, survey):
        oracle = centralized_oracle(survey.data, TINY, seed=11)
        result, fit, cluster = chief_run([survey.data], TINY, seed=11)
        assert_trajectories_match(oracle, result)
        assert result.beta == oracle.beta
        assert result.ll == oracle.ll

    def test_four_workers_match_pooled(self, survey):
        parts = datagen.partition(survey.data, [61, 61, 61, 63], seed=2)
        oracle = centralized_oracle(survey.data, TINY, seed=12)
        result, fit, cluster = chief_run(parts, TINY, seed=12)
        assert_trajectories_match(oracle, result, ll_tol=1e-9, beta_tol=1e-12)

    def test_tcp_transport_matches_inproc(self, survey):
        parts = datagen.partition(survey.data, [123, 123], seed=3)
        inproc, *_ = chief_run(parts, TINY, seed=13, transport="inproc")
        tcp, *_ = chief_run(parts, TINY, seed=13, transport="tcp")
        assert_trajectories_match(inproc, tcp)

    def test_fit_statistics_from_run(self, survey):
        result, fit, _ = chief_run([survey.data], TINY, seed=14)
        assert fit.null_ll == pytest.approx(-246 * math.log(2), rel=1e-12)
        assert fit.final_ll == result.ll
        assert fit.rho_square == 1.0 - fit.final_ll / fit.null_ll


class TestWorkerNode:
    def test_null_contribution_of_61_rows(self, survey):
        part = survey.data.subset(np.arange(61))
        assert log_likelihood(BetaVector.zero(), part) == pytest.approx(
            61 * math.log(0.5), rel=1e-12)

    def test_replies_echo_round_and_only_evaluations(self, survey):
        sent = []

        def tap(body):
            sent.append(json.loads(body.decode()))

        parts = datagen.partition(survey.data, [123, 123], seed=4)
        result, _, cluster = chief_run(parts, TINY, seed=15, tap=tap)
        worker_msgs = [m for m in sent if m["sender"].startswith("worker-")]
        assert worker_msgs
        assert all(m["type"] == "Evaluation" for m in worker_msgs)
        proposals = [m for m in sent
                     if m["sender"] == "chief" and m["type"] == "BetaProposal"]
        rounds = {m["payload"]["round"] for m in proposals}
        reply_rounds = {m["payload"]["round"] for m in worker_msgs}
        assert reply_rounds == rounds

    def test_rejects_empty_dataset(self):
        with pytest.raises(ValueError):
            WorkerNode("w", datagen.gen_data(1, BetaVector.zero(), 1).data.subset(
                np.array([], dtype=int)))


class TestRegistration:
    def test_four_compatible_registered_with_ledger_entries(self, survey, tmp_path):
        parts = datagen.partition(survey.data, [61, 61, 61, 63], seed=5)
        with Ledger(tmp_path / "l.jsonl") as led:
            result, _, cluster = chief_run(parts, TINY, seed=16, ledger=led)
        assert len(cluster.chief.workers) == 4
        counts = counts_by_type(tmp_path / "l.jsonl")
        assert counts["ChannelOpen"] == 4

    def test_private_worker_rejected_others_proceed(self, survey):
        parts = datagen.partition(survey.data, [61, 61, 61, 63], seed=6)
        terms = [PERMISSIVE, PERMISSIVE,
                 ContractTerms(temporality_s=86400.0, public_share=False),
                 PERMISSIVE]
        result, _, cluster = chief_run(parts, TINY, seed=17, worker_terms=terms)
        assert cluster.rejected == ["worker-3"]
        assert len(cluster.chief.workers) == 3
        # the chief now optimizes over the remaining 3 partitions
        pooled = datagen.Dataset(
            np.concatenate([parts[i].y for i in (0, 1, 3)]),
            np.concatenate([parts[i].dcost for i in (0, 1, 3)]),
            np.concatenate([parts[i].dtime for i in (0, 1, 3)]))
        oracle = centralized_oracle(pooled, TINY, seed=17)
        assert abs(result.ll - oracle.ll) <= 1e-9

    def test_short_temporality_rejected(self, survey):
        parts = datagen.partition(survey.data, [123, 123], seed=7)
        terms = [ContractTerms(temporality_s=1.0), PERMISSIVE]
        _, _, cluster = chief_run(parts, TINY, seed=18, worker_terms=terms)
        assert cluster.rejected == ["worker-1"]

    def test_zero_workers_fails(self):
        chief = ChiefNode("chief", TINY)
        import random
        with pytest.raises(ValueError):
            chief.estimate(BetaVector.zero(), random.Random(0))


class TestFailureModes:
    def test_round_mismatch_detected(self, survey):
        class SkewedWorker(WorkerNode):
            def serve_one(self):
                msg = self.channel.recv()
                if msg.msg_type is MsgType.BETA_PROPOSAL:
                    self.channel.send(MsgType.EVALUATION,
                                      {"ll": -1.0,
                                       "round": msg.payload["round"] + 1})
                    return True
                return msg.msg_type is not MsgType.MODEL_FINAL

        chief = ChiefNode("chief", TINY)
        worker = SkewedWorker("worker-1", survey.data)
        cluster = Cluster(chief, [worker], transport="inproc")
        import random
        with pytest.raises(RoundMismatchError):
            chief.estimate(BetaVector.zero(), random.Random(1))

    def test_worker_timeout_aborts(self, survey):
        class StallingWorker(WorkerNode):
            def serve_one(self):
                msg = self.channel.recv()
                return msg.msg_type is not MsgType.MODEL_FINAL  # never replies

        chief = ChiefNode("chief", TINY)
        worker = StallingWorker("worker-1", survey.data)
        cluster = Cluster(chief, [worker], transport="tcp", timeout_s=0.3)
        import random
        with pytest.raises(WorkerTimeoutError) as exc:
            chief.estimate(BetaVector.zero(), random.Random(2))
        assert exc.value.round_no == 0
        assert exc.value.worker_id == "worker-1"
        cluster.shutdown()


class TestMetricsAndLedger:
    def test_message_conservation_and_latency_shape(self, survey):
        parts = datagen.partition(survey.data, [61, 61, 61, 63], seed=8)
        result, _, cluster = chief_run(parts, TINY, seed=19)
        calls = result.evaluator_calls
        chief = cluster.chief
        assert len(chief.metrics.send_samples) == calls        # per broadcast
        assert len(chief.metrics.get_samples) == 4 * calls
        for w in cluster.workers:
            assert w.proposals_handled == calls
            assert len(w.metrics.send_samples) == calls
            # every inbound message is timed: proposals + survey + final
            assert len(w.metrics.get_samples) == calls + 2
            assert all(s > 0 and math.isfinite(s)
                       for s in w.metrics.send_samples)
        # sequential broadcast to 4 workers costs at least one unicast
        chief_send = chief.metrics.latency_records()[0]
        for w in cluster.workers:
            assert chief_send.mean_s >= w.metrics.latency_records()[0].mean_s

    def test_ledger_completeness_unsampled(self, survey, tmp_path):
        parts = datagen.partition(survey.data, [123, 123], seed=9)
        path = tmp_path / "l.jsonl"
        with Ledger(path) as led:
            result, _, cluster = chief_run(parts, TINY, seed=20, ledger=led)
        calls = result.evaluator_calls
        counts = counts_by_type(path)
        assert counts["BetaSent"] == 2 * calls
        assert counts["EvaluationSent"] == 2 * calls
        assert counts["ChannelOpen"] == 2
        assert counts["DomainAnnounce"] == 1
        assert counts["SurveyPublish"] == 1
        assert counts["ModelPublish"] == 1
        assert verify_chain(path) == (True, None)

    def test_ledger_never_contains_payload_values(self, survey, tmp_path):
        evaluations = []

        def tap(body):
            msg = json.loads(body.decode())
            if msg["type"] == "Evaluation":
                evaluations.append(msg["payload"]["ll"])

        parts = datagen.partition(survey.data, [123, 123], seed=10)
        path = tmp_path / "l.jsonl"
        with Ledger(path) as led:
            result, _, _ = chief_run(parts, TINY, seed=21, ledger=led, tap=tap)
        text = path.read_text()
        needles = set()
        for rec in result.trajectory:
            needles.update(repr(v) for v in rec.beta.as_tuple())
        needles.update(repr(v) for v in evaluations)
        for needle in needles:
            assert needle not in text

    def test_data_locality_no_observation_bytes_on_channels(self, survey):
        plaintexts = []
        parts = datagen.partition(survey.data, [123, 123], seed=11)
        chief_run(parts, TINY, seed=22,
                  tap=lambda b: plaintexts.append(b))
        blob = b"\n".join(plaintexts)
        raw = survey.data.raw
        for i in range(0, len(survey.data), 7):
            for value in raw[i]:
                assert repr(float(value)).encode() not in blob
