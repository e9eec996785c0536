"""Synthetic biased-Bernoulli dataset: generation, fold splits, CSV persistence.

Each record has ``attr_count`` binary attributes.  The first
``noise_attr_count`` attributes are pure noise, Bernoulli(p) regardless of
class.  The remaining attributes carry the class signal: they are drawn
Bernoulli(p*(0.5+b)) for label +1 and Bernoulli(p*(0.5-b)) for label -1,
where ``b`` is the bias offset.  Labels alternate +1/-1 by record index, so
the dataset is exactly class-balanced and every even-length prefix is too.

On disk a dataset is a CSV with header ``a1,...,aK,label``, one record per
row, attribute values in {0,1} and label in {1,-1}.  The one-hot encoding
(+1 -> [0,1], -1 -> [1,0]) is applied in memory only.
"""

from __future__ import annotations

import os
from dataclasses import dataclass, field

import numpy as np

from .rng import RandomStream

_GEN_CHUNK_ROWS = 65536


class CsvFormatError(ValueError):
    """Malformed dataset CSV; message carries the offending file line number."""


def biased_success_probabilities(p: float, b: float) -> tuple[float, float]:
    """Success probabilities (for label +1, for label -1) of the biased
    attributes: ``p*(0.5+b)`` and ``p*(0.5-b)``.

    Kept as a standalone pure function so the bias interpretation can be
    swapped without touching the generator.
    """
    return p * (0.5 + b), p * (0.5 - b)


@dataclass(frozen=True)
class SyntheticSpec:
    """Parameters of the synthetic dataset."""

    n: int
    attr_count: int = 200
    noise_attr_count: int = 100
    p: float = 0.5
    b: float = 0.05

    def __post_init__(self):
        if self.n < 0 or self.n % 2 != 0:
            raise ValueError(f"n must be even and >= 0, got {self.n}")
        if not 0.0 <= self.p <= 1.0:
            raise ValueError(f"p must be in [0, 1], got {self.p}")
        if not 0.0 <= self.b <= 0.5:
            raise ValueError(f"bias offset b must be in [0, 0.5], got {self.b}")
        if not 0 <= self.noise_attr_count <= self.attr_count:
            raise ValueError(
                f"noise_attr_count must be in [0, attr_count], got "
                f"{self.noise_attr_count} with attr_count={self.attr_count}"
            )
        plus, minus = biased_success_probabilities(self.p, self.b)
        if not (0.0 <= plus <= 1.0 and 0.0 <= minus <= 1.0):
            raise ValueError(f"derived probabilities out of [0, 1]: {plus}, {minus}")


@dataclass(frozen=True)
class Record:
    """A single record: binary attribute vector plus its +1/-1 label."""

    attributes: np.ndarray
    label: int

    @property
    def one_hot(self) -> np.ndarray:
        return np.array([0.0, 1.0]) if self.label == 1 else np.array([1.0, 0.0])


@dataclass
class Dataset:
    """Columnar record store: attributes (n, attr_count) uint8, labels (n,)
    int8 in {-1, +1}."""

    attributes: np.ndarray
    labels: np.ndarray

    def __post_init__(self):
        if self.attributes.ndim != 2 or self.labels.ndim != 1:
            raise ValueError("attributes must be 2-d and labels 1-d")
        if self.attributes.shape[0] != self.labels.shape[0]:
            raise ValueError("attributes and labels disagree on record count")

    def __len__(self) -> int:
        return self.attributes.shape[0]

    def __eq__(self, other) -> bool:
        if not isinstance(other, Dataset):
            return NotImplemented
        return np.array_equal(self.attributes, other.attributes) and np.array_equal(
            self.labels, other.labels
        )

    @property
    def attr_count(self) -> int:
        return self.attributes.shape[1]

    def record(self, i: int) -> Record:
        return Record(self.attributes[i], int(self.labels[i]))

    def inputs(self) -> np.ndarray:
        """Attributes as float64, ready for the classifier."""
        return self.attributes.astype(np.float64)

    def one_hot_labels(self) -> np.ndarray:
        """(n, 2) float64 targets: +1 -> [0,1], -1 -> [1,0]."""
        out = np.zeros((len(self), 2))
        out[np.arange(len(self)), (self.labels == 1).astype(np.intp)] = 1.0
        return out


def generate(spec: SyntheticSpec, stream: RandomStream) -> Dataset:
    """Draw a dataset per ``spec`` from ``stream``.

    Uniforms are consumed row-major (record 0 attribute 0 first), in chunks of
    rows; the chunking does not affect the draw sequence.
    """
    plus, minus = biased_success_probabilities(spec.p, spec.b)
    labels = np.where(np.arange(spec.n) % 2 == 0, 1, -1).astype(np.int8)
    attributes = np.empty((spec.n, spec.attr_count), dtype=np.uint8)
    for start in range(0, spec.n, _GEN_CHUNK_ROWS):
        stop = min(start + _GEN_CHUNK_ROWS, spec.n)
        rows = stop - start
        probs = np.empty((rows, spec.attr_count))
        probs[:, : spec.noise_attr_count] = spec.p
        biased = np.where(labels[start:stop] == 1, plus, minus)
        probs[:, spec.noise_attr_count :] = biased[:, None]
        u = stream.uniforms(rows * spec.attr_count).reshape(rows, spec.attr_count)
        attributes[start:stop] = u < probs
    return Dataset(attributes, labels)


@dataclass
class FoldSet:
    """Disjoint index lists covering a dataset, each class-balanced."""

    folds: list = field(default_factory=list)

    def __len__(self) -> int:
        return len(self.folds)

    def __iter__(self):
        return iter(self.folds)


def split_folds(dataset: Dataset, k: int) -> FoldSet:
    """Partition ``dataset`` into ``k`` class-balanced folds.

    Deterministic in (dataset order, k): the j-th record of each class goes to
    fold ``j mod k``.  For alternating-label data this assigns record pairs
    (2t, 2t+1) round-robin.  Requires the fold size ``n/k`` to be even and the
    two classes to have equal counts, otherwise balance is impossible.
    """
    n = len(dataset)
    if k <= 0:
        raise ValueError(f"fold count must be positive, got {k}")
    if n % k != 0:
        raise ValueError(f"record count {n} not divisible by fold count {k}")
    if (n // k) % 2 != 0:
        raise ValueError(f"fold size {n // k} must be even for label balance")
    pos = np.flatnonzero(dataset.labels == 1)
    neg = np.flatnonzero(dataset.labels == -1)
    if len(pos) != len(neg):
        raise ValueError(
            f"class counts must be equal for balanced folds, got {len(pos)}/{len(neg)}"
        )
    folds = [np.sort(np.concatenate([pos[j::k], neg[j::k]])) for j in range(k)]
    return FoldSet(folds)


def _header(attr_count: int) -> str:
    return ",".join([f"a{i + 1}" for i in range(attr_count)] + ["label"])


def write_csv(dataset: Dataset, path: str | os.PathLike) -> None:
    """Write ``dataset`` to ``path``; exact inverse of :func:`read_csv`."""
    with open(path, "w", newline="") as fh:
        fh.write(_header(dataset.attr_count) + "\n")
        for i in range(len(dataset)):
            row = dataset.attributes[i]
            fh.write(",".join(map(str, row)) + f",{dataset.labels[i]}\n")


def read_csv(path: str | os.PathLike) -> Dataset:
    """Read a dataset written by :func:`write_csv`.

    Raises :class:`CsvFormatError` naming the file line of the first malformed
    row (wrong column count, non-bit attribute, or label outside {1,-1}).
    """
    with open(path, "r", newline="") as fh:
        header = fh.readline().rstrip("\n")
        if not header:
            raise CsvFormatError("line 1: missing header")
        columns = header.split(",")
        attr_count = len(columns) - 1
        if attr_count < 0 or columns != _header(attr_count).split(","):
            raise CsvFormatError(f"line 1: malformed header {header!r}")
        attr_rows: list[np.ndarray] = []
        labels: list[int] = []
        for line_no, line in enumerate(fh, start=2):
            fields = line.rstrip("\n").split(",")
            if len(fields) != attr_count + 1:
                raise CsvFormatError(
                    f"line {line_no}: expected {attr_count + 1} columns, "
                    f"got {len(fields)}"
                )
            if fields[-1] not in ("1", "-1"):
                raise CsvFormatError(
                    f"line {line_no}: label must be 1 or -1, got {fields[-1]!r}"
                )
            row = np.empty(attr_count, dtype=np.uint8)
            for j, value in enumerate(fields[:attr_count]):
                if value == "0":
                    row[j] = 0
                elif value == "1":
                    row[j] = 1
                else:
                    raise CsvFormatError(
                        f"line {line_no}: attribute a{j + 1} must be 0 or 1, "
                        f"got {value!r}"
                    )
            attr_rows.append(row)
            labels.append(int(fields[-1]))
    if attr_rows:
        attributes = np.vstack(attr_rows)
    else:
        attributes = np.empty((0, attr_count), dtype=np.uint8)
    return Dataset(attributes, np.asarray(labels, dtype=np.int8))
