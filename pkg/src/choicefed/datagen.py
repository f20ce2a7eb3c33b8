"""Synthetic survey generation, CSV serialization and partitioning.

The real stated-preference survey behind the auto/train case is not
publicly available, so experiments run on synthetic data with a known
ground-truth parameter vector.  Attributes are drawn uniformly from
configurable ranges and each choice is a coin flip with the logit
probability implied by the true parameters.
"""

from __future__ import annotations

import csv
import io
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .errors import SizeMismatchError
from .model import BetaVector, Choice, Dataset, Observation

CSV_HEADER = "choice,cost_auto,cost_train,time_auto,time_train"
SCHEMA_ID = "choicefed-sp-survey-v1"

DEFAULT_COST_RANGE = (20.0, 300.0)
DEFAULT_TIME_RANGE = (60.0, 600.0)


@dataclass(frozen=True)
class Provenance:
    """Where a dataset came from: synthetic seed + true beta, or a file."""
    source: str                       # "synthetic" or a file path
    seed: int | None = None
    true_beta: BetaVector | None = None


@dataclass
class SurveyDataset:
    data: Dataset
    schema_id: str = SCHEMA_ID
    provenance: Provenance = Provenance("unknown")

    def __len__(self) -> int:
        return len(self.data)


def gen_data(n: int, true_beta: BetaVector, seed: int,
             cost_range: tuple[float, float] = DEFAULT_COST_RANGE,
             time_range: tuple[float, float] = DEFAULT_TIME_RANGE
             ) -> SurveyDataset:
    """Draw n synthetic observations under the given true parameters."""
    if n < 1:
        raise ValueError("n must be >= 1")
    for lo, hi in (cost_range, time_range):
        if not (0 <= lo < hi):
            raise ValueError(f"invalid attribute range ({lo}, {hi})")
    rng = np.random.default_rng(seed)
    cost_auto = rng.uniform(*cost_range, size=n)
    cost_train = rng.uniform(*cost_range, size=n)
    time_auto = rng.uniform(*time_range, size=n)
    time_train = rng.uniform(*time_range, size=n)
    v = (true_beta.beta_asc
         + true_beta.beta_cost * (cost_auto - cost_train)
         + true_beta.beta_time * (time_auto - time_train))
    p_auto = 1.0 / (1.0 + np.exp(-np.clip(v, -700, 700)))
    y = (rng.random(n) < p_auto).astype(float)
    raw = np.column_stack([cost_auto, cost_train, time_auto, time_train])
    data = Dataset(y, cost_auto - cost_train, time_auto - time_train, raw=raw)
    return SurveyDataset(data, SCHEMA_ID, Provenance("synthetic", seed, true_beta))


def to_csv_text(dataset: Dataset) -> str:
    if dataset.raw is None:
        raise ValueError("dataset has no raw attribute columns")
    buf = io.StringIO()
    buf.write(CSV_HEADER + "\n")
    for i in range(len(dataset)):
        choice = "auto" if dataset.y[i] == 1.0 else "train"
        cells = ",".join(repr(float(v)) for v in dataset.raw[i])
        buf.write(f"{choice},{cells}\n")
    return buf.getvalue()


def write_csv(dataset: Dataset, path: str | Path) -> None:
    Path(path).write_text(to_csv_text(dataset), encoding="utf-8")


def read_csv(path: str | Path) -> Dataset:
    with open(path, newline="", encoding="utf-8") as fh:
        reader = csv.reader(fh)
        header = next(reader, None)
        if header != CSV_HEADER.split(","):
            raise ValueError(f"bad CSV header in {path}: {header}")
        observations = []
        for row in reader:
            if not row:
                continue
            choice = Choice(row[0])
            values = [float(c) for c in row[1:5]]
            observations.append(Observation(choice, *values))
    if not observations:
        raise ValueError(f"no observations in {path}")
    return Dataset.from_observations(observations)


def partition(dataset: Dataset, sizes: list[int], seed: int) -> list[Dataset]:
    """Seeded random permutation split into consecutive blocks."""
    if any(s < 1 for s in sizes):
        raise SizeMismatchError("every partition size must be >= 1")
    if sum(sizes) != len(dataset):
        raise SizeMismatchError(
            f"sizes sum to {sum(sizes)}, dataset has {len(dataset)} rows")
    perm = np.random.default_rng(seed).permutation(len(dataset))
    parts = []
    start = 0
    for s in sizes:
        parts.append(dataset.subset(perm[start:start + s]))
        start += s
    return parts


def default_partition_sizes(n: int, workers: int) -> list[int]:
    """n split as evenly as possible; the remainder goes to the last part."""
    base = n // workers
    sizes = [base] * workers
    sizes[-1] += n - base * workers
    return sizes
