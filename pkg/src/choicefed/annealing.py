"""Simulated annealing engine with a geometric cooling schedule.

The engine is parameterized over an abstract likelihood evaluator so that
the identical loop drives both the local (centralized) optimizer and the
distributed chief.  All randomness is owned by the caller-supplied
generator and the loop consumes exactly four draws per proposal (three for
the step, one for the acceptance test), which is what makes a distributed
run bit-comparable to a centralized one.
"""

from __future__ import annotations

import math
import random
from dataclasses import dataclass, field
from typing import Protocol

from .errors import ChoicefedError, EvaluatorFailure
from .model import BetaVector

# exp() overflows just above this; larger arguments are saturated
_MAX_EXP_ARG = 709.0


@dataclass(frozen=True)
class AnnealingSchedule:
    temp_initial: float = 1.0
    temp_min: float = 1e-5
    alpha: float = 0.9
    inner_iterations: int = 1000
    step_half_width: float = 0.01

    def __post_init__(self):
        if not (0 < self.temp_min < self.temp_initial):
            raise ValueError("need 0 < temp_min < temp_initial")
        if not (0 < self.alpha < 1):
            raise ValueError("cooling factor must be in (0, 1)")
        if self.inner_iterations < 1:
            raise ValueError("inner_iterations must be >= 1")
        if self.step_half_width < 0:
            raise ValueError("step_half_width must be >= 0")

    @classmethod
    def fast(cls) -> "AnnealingSchedule":
        """Short profile for CI-scale runs."""
        return cls(inner_iterations=100, temp_min=1e-3)


class Evaluator(Protocol):
    def evaluate(self, beta: BetaVector) -> float: ...


@dataclass
class ProposalRecord:
    """One proposal of the annealing loop, kept for replay/equivalence checks."""
    __slots__ = ("round_no", "temp", "beta", "ll", "ap", "draw", "accepted")
    round_no: int
    temp: float
    beta: BetaVector
    ll: float
    ap: float
    draw: float
    accepted: bool


@dataclass
class AnnealResult:
    beta: BetaVector
    ll: float
    initial_beta: BetaVector
    initial_ll: float
    trajectory: list[ProposalRecord] = field(repr=False, default_factory=list)

    @property
    def evaluator_calls(self) -> int:
        return len(self.trajectory) + 1

    def accepted_states(self) -> list[tuple[int, BetaVector, float]]:
        """(round, beta, ll) at every accepted proposal, initial state first."""
        states = [(0, self.initial_beta, self.initial_ll)]
        states.extend(
            (r.round_no, r.beta, r.ll) for r in self.trajectory if r.accepted
        )
        return states


def outer_level_count(schedule: AnnealingSchedule) -> int:
    """Number of temperature levels the cooling loop will execute."""
    count = 0
    temp = schedule.temp_initial
    while temp > schedule.temp_min:
        count += 1
        temp *= schedule.alpha
    return count


def propose(beta: BetaVector, schedule: AnnealingSchedule,
            rng: random.Random) -> BetaVector:
    """Perturb every component by an independent uniform step.

    Consumes exactly three draws from the generator.
    """
    h = schedule.step_half_width
    eps = (rng.uniform(-h, h), rng.uniform(-h, h), rng.uniform(-h, h))
    return beta.perturbed(eps)


def acceptance_probability(ll_new: float, ll_old: float, temp: float) -> float:
    """exp((ll_new - ll_old)/temp), uncapped; may exceed 1 for improvements."""
    if temp <= 0:
        raise ValueError("temperature must be positive")
    arg = (ll_new - ll_old) / temp
    return math.exp(min(arg, _MAX_EXP_ARG))


def run(schedule: AnnealingSchedule, beta_initial: BetaVector,
        evaluator: Evaluator, rng: random.Random) -> AnnealResult:
    """Full annealing run: one initial evaluation, then
    outer_level_count * inner_iterations proposals.
    """
    def evaluate(beta: BetaVector, round_no: int) -> float:
        try:
            return evaluator.evaluate(beta)
        except ChoicefedError:
            # runtime errors (timeouts, round mismatches) already carry
            # their own context; pass them through unchanged
            raise
        except Exception as exc:
            raise EvaluatorFailure(round_no, exc) from exc

    beta = beta_initial
    ll = evaluate(beta, 0)
    result = AnnealResult(beta, ll, beta_initial, ll)
    traj = result.trajectory

    round_no = 0
    temp = schedule.temp_initial
    while temp > schedule.temp_min:
        for _ in range(schedule.inner_iterations):
            round_no += 1
            beta_new = propose(beta, schedule, rng)
            ll_new = evaluate(beta_new, round_no)
            ap = acceptance_probability(ll_new, ll, temp)
            draw = rng.random()
            accepted = ap > draw
            if accepted:
                beta, ll = beta_new, ll_new
            traj.append(ProposalRecord(round_no, temp, beta_new, ll_new,
                                       ap, draw, accepted))
        temp *= schedule.alpha

    result.beta = beta
    result.ll = ll
    return result
