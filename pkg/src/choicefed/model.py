"""Binary logit choice model: utilities, probabilities, log-likelihood,
derivatives and fit statistics.

Everything here is a pure function of its inputs; no state is shared, so
the functions are safe to call from any number of concurrent contexts.
The model covers the two-alternative (auto vs. train) case with a linear
utility difference in three parameters: an automobile-preference constant,
a cost coefficient and a travel-time coefficient.  The train alternative
is the fixed reference and carries no parameters of its own.
"""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass
from typing import Iterable, Sequence, Union

import numpy as np

from .errors import EmptyDatasetError, SingularInformationError

LN2 = math.log(2.0)


class Choice(enum.Enum):
    AUTO = "auto"
    TRAIN = "train"


@dataclass(frozen=True)
class Observation:
    """One respondent's stated choice plus the auto/train attributes."""

    choice: Choice
    cost_auto: float
    cost_train: float
    time_auto: float
    time_train: float

    def __post_init__(self):
        for name in ("cost_auto", "cost_train", "time_auto", "time_train"):
            v = getattr(self, name)
            if not math.isfinite(v):
                raise ValueError(f"{name} must be finite, got {v!r}")
            if v < 0:
                raise ValueError(f"{name} must be non-negative, got {v!r}")


@dataclass(frozen=True)
class BetaVector:
    """Parameter triple: preference constant, cost and time coefficients."""

    beta_asc: float
    beta_cost: float
    beta_time: float

    def __post_init__(self):
        for name in ("beta_asc", "beta_cost", "beta_time"):
            if not math.isfinite(getattr(self, name)):
                raise ValueError(f"{name} must be finite")

    @classmethod
    def zero(cls) -> "BetaVector":
        return cls(0.0, 0.0, 0.0)

    def as_tuple(self) -> tuple[float, float, float]:
        return (self.beta_asc, self.beta_cost, self.beta_time)

    def perturbed(self, eps: Sequence[float]) -> "BetaVector":
        """Component-wise addition with a same-arity perturbation."""
        if len(eps) != 3:
            raise ValueError("perturbation must have 3 components")
        return BetaVector(
            self.beta_asc + eps[0],
            self.beta_cost + eps[1],
            self.beta_time + eps[2],
        )


class Dataset:
    """Column-oriented observation container used by the numeric core.

    Stores the choice indicator y (1 = auto) and the auto-minus-train
    attribute differences, which is all the model ever needs.
    """

    def __init__(self, y: np.ndarray, dcost: np.ndarray, dtime: np.ndarray,
                 raw: np.ndarray | None = None):
        self.y = np.asarray(y, dtype=float)
        self.dcost = np.asarray(dcost, dtype=float)
        self.dtime = np.asarray(dtime, dtype=float)
        # raw columns (cost_auto, cost_train, time_auto, time_train), kept
        # for CSV round-trips; optional because only differences matter.
        self.raw = raw
        if not (len(self.y) == len(self.dcost) == len(self.dtime)):
            raise ValueError("column lengths differ")

    @classmethod
    def from_observations(cls, observations: Iterable[Observation]) -> "Dataset":
        obs = list(observations)
        y = np.array([1.0 if o.choice is Choice.AUTO else 0.0 for o in obs])
        raw = np.array(
            [[o.cost_auto, o.cost_train, o.time_auto, o.time_train] for o in obs]
        ).reshape(len(obs), 4)
        return cls(y, raw[:, 0] - raw[:, 1], raw[:, 2] - raw[:, 3], raw=raw)

    def observations(self) -> list[Observation]:
        if self.raw is None:
            raise ValueError("raw attribute columns not available")
        out = []
        for i in range(len(self)):
            out.append(Observation(
                Choice.AUTO if self.y[i] == 1.0 else Choice.TRAIN,
                *(float(v) for v in self.raw[i]),
            ))
        return out

    def subset(self, indices: np.ndarray) -> "Dataset":
        raw = self.raw[indices] if self.raw is not None else None
        return Dataset(self.y[indices], self.dcost[indices], self.dtime[indices], raw=raw)

    def design_matrix(self) -> np.ndarray:
        """Rows (1, Δcost, Δtime): the regressors of the utility difference."""
        return np.column_stack([np.ones(len(self)), self.dcost, self.dtime])

    def __len__(self) -> int:
        return len(self.y)


DataLike = Union[Dataset, Sequence[Observation]]


def _as_dataset(data: DataLike) -> Dataset:
    if isinstance(data, Dataset):
        return data
    return Dataset.from_observations(data)


def utility(beta: BetaVector, obs: Observation) -> float:
    """Utility difference of auto over train for one observation."""
    return (beta.beta_asc
            + beta.beta_cost * (obs.cost_auto - obs.cost_train)
            + beta.beta_time * (obs.time_auto - obs.time_train))


_BELOW_ONE = math.nextafter(1.0, 0.0)


def _sigmoid(v: float) -> float:
    # branch on sign so exp() never sees a large positive argument; the
    # clamp keeps the result in the open interval even where the float
    # quotient would round to 1.0 (v beyond ~37)
    if v >= 0:
        return min(1.0 / (1.0 + math.exp(-v)), _BELOW_ONE)
    e = math.exp(v)
    return e / (1.0 + e)


def prob_auto(beta: BetaVector, obs: Observation) -> float:
    """P(auto) under the binary logit; stable for |V| up to ~700."""
    return _sigmoid(utility(beta, obs))


def prob_train(beta: BetaVector, obs: Observation) -> float:
    return 1.0 - prob_auto(beta, obs)


def _utilities(beta: BetaVector, ds: Dataset) -> np.ndarray:
    return beta.beta_asc + beta.beta_cost * ds.dcost + beta.beta_time * ds.dtime


def log_likelihood(beta: BetaVector, data: DataLike) -> float:
    """Summed log-probability of the chosen alternatives.

    Computed as -logaddexp(0, ±V), which keeps every term finite for any
    utility magnitude a float can represent.
    """
    ds = _as_dataset(data)
    if len(ds) == 0:
        raise EmptyDatasetError("log_likelihood needs at least one observation")
    v = _utilities(beta, ds)
    sign = 1.0 - 2.0 * ds.y           # -1 for auto, +1 for train
    return float(-np.sum(np.logaddexp(0.0, sign * v)))


def null_log_likelihood(n: int) -> float:
    """Equal-shares log-likelihood of n binary observations: -n ln 2."""
    if n < 1:
        raise EmptyDatasetError("null log-likelihood needs n >= 1")
    return -n * LN2


def rho_square(null_ll: float, final_ll: float) -> float:
    """McFadden-style fit measure 1 - final/null."""
    if null_ll >= 0:
        raise ValueError(f"null log-likelihood must be negative, got {null_ll}")
    return 1.0 - final_ll / null_ll


def gradient(beta: BetaVector, data: DataLike) -> np.ndarray:
    """Score vector: sum of (y - P(auto)) times the regressor row."""
    ds = _as_dataset(data)
    if len(ds) == 0:
        raise EmptyDatasetError("gradient needs at least one observation")
    v = _utilities(beta, ds)
    p = 1.0 / (1.0 + np.exp(-np.clip(v, -700, 700)))
    resid = ds.y - p
    return ds.design_matrix().T @ resid


def information_matrix(beta: BetaVector, data: DataLike) -> np.ndarray:
    """Observed information: sum of P(1-P) x xᵀ over observations."""
    ds = _as_dataset(data)
    if len(ds) == 0:
        raise EmptyDatasetError("information matrix needs at least one observation")
    v = _utilities(beta, ds)
    p = 1.0 / (1.0 + np.exp(-np.clip(v, -700, 700)))
    w = p * (1.0 - p)
    x = ds.design_matrix()
    return x.T @ (w[:, None] * x)


def std_errors(beta: BetaVector, data: DataLike) -> np.ndarray:
    """Square roots of the diagonal of the inverse observed information."""
    info = information_matrix(beta, data)
    if not np.all(np.isfinite(info)) or np.linalg.cond(info) > 1e12:
        raise SingularInformationError("information matrix is rank-deficient")
    cov = np.linalg.inv(info)
    diag = np.diag(cov)
    if np.any(diag <= 0):
        raise SingularInformationError("inverse information has non-positive diagonal")
    return np.sqrt(diag)


@dataclass(frozen=True)
class FitStatistics:
    """Model fit summary in the shape of the usual estimation table."""

    null_ll: float
    final_ll: float
    rho_square: float
    std_errors: tuple[float, float, float] | None

    @classmethod
    def compute(cls, beta: BetaVector, data: DataLike, final_ll: float,
                null_ll: float | None = None) -> "FitStatistics":
        """Build statistics from data; null_ll may be supplied externally
        when reproducing a published table instead of recomputing."""
        ds = _as_dataset(data)
        if null_ll is None:
            null_ll = null_log_likelihood(len(ds))
        try:
            se = tuple(float(s) for s in std_errors(beta, ds))
        except SingularInformationError:
            se = None
        return cls(null_ll, final_ll, rho_square(null_ll, final_ll), se)
