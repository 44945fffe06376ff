"""Domain types and exact (non-private) operations for bucketized sparse vote sums.

The data model: every private record carries a sparse binary label vector
(``r`` ones over a label domain of size ``label_count``) and gets attached to
at most ``k`` buckets (query indices).  The quantity of interest is the
per-bucket sum of label vectors, an ``s x label_count`` count matrix.  All
privacy mechanisms in this package perturb that matrix; this module holds the
exact arithmetic they are measured against.
"""
from __future__ import annotations

import enum
import math
from dataclasses import dataclass, field, replace
from typing import Iterable, Sequence

import numpy as np


class PrivacyModel(enum.Enum):
    """Trust model under which the count matrix is privatized."""

    CENTRAL = "central"
    LOCAL = "local"
    SHUFFLE_MULTI = "shuffle-multi"
    SHUFFLE_SINGLE = "shuffle-single"


_PURE_DP_MODELS = (PrivacyModel.CENTRAL, PrivacyModel.LOCAL)


@dataclass(frozen=True)
class PrivacyParams:
    """Privacy budget plus the problem-shape parameters every bound needs.

    ``epsilon`` may be ``math.inf`` to express the noiseless limit.  Central
    and local models are pure DP and require ``delta == 0``; both shuffle
    models require ``delta > 0``.
    """

    epsilon: float
    model: PrivacyModel
    k: int
    r: int
    s: int
    label_count: int
    delta: float = 0.0

    def __post_init__(self):
        if not self.epsilon > 0:
            raise ValueError(f"epsilon must be positive, got {self.epsilon}")
        if not 0.0 <= self.delta < 1.0:
            raise ValueError(f"delta must lie in [0, 1), got {self.delta}")
        if self.model in _PURE_DP_MODELS and self.delta != 0.0:
            raise ValueError(f"{self.model.value} model is pure DP and requires delta = 0")
        if self.model not in _PURE_DP_MODELS and not self.delta > 0.0:
            raise ValueError(f"{self.model.value} model requires delta > 0")
        for name in ("k", "r", "s"):
            if getattr(self, name) < 1:
                raise ValueError(f"{name} must be a positive integer")
        if self.label_count < 2:
            raise ValueError("label_count must be at least 2")
        if self.r > self.label_count:
            raise ValueError("r cannot exceed label_count")

    @property
    def sensitivity(self) -> int:
        """Worst-case L1 change of the aggregate under a one-record swap."""
        return 2 * self.k * self.r

    @property
    def flat_domain_size(self) -> int:
        return self.s * self.label_count

    def per_iteration(self, iterations: int) -> "PrivacyParams":
        """Evenly split budget across ``iterations`` (sequential composition)."""
        if iterations < 1:
            raise ValueError("iterations must be >= 1")
        return replace(self, epsilon=self.epsilon / iterations)


@dataclass(frozen=True)
class AccuracySpec:
    """An oracle is (eta, beta)-accurate at a bucket when its max-norm error
    stays below ``eta`` with probability at least ``1 - beta``."""

    eta: float
    beta: float

    def __post_init__(self):
        if not self.eta > 0:
            raise ValueError("eta must be positive")
        if not 0.0 < self.beta < 1.0:
            raise ValueError("beta must lie in (0, 1)")


def label_vector(indices: Iterable[int], label_count: int) -> np.ndarray:
    """Build a multi-hot label vector with ones at ``indices``."""
    bits = np.zeros(label_count, dtype=np.uint8)
    idx = np.asarray(sorted(set(int(i) for i in indices)), dtype=np.int64)
    if idx.size == 0:
        raise ValueError("a label vector needs at least one class index")
    if idx.min() < 0 or idx.max() >= label_count:
        raise ValueError(f"label index out of range [0, {label_count})")
    bits[idx] = 1
    return bits


def validate_label_matrix(labels: np.ndarray, r: int | None = None) -> int:
    """Check a stacked (m, label_count) multi-hot matrix; return the shared
    cardinality r.  All rows must have the same number of ones."""
    labels = np.asarray(labels)
    if labels.ndim != 2:
        raise ValueError("labels must be a 2-D multi-hot matrix")
    if not np.isin(labels, (0, 1)).all():
        raise ValueError("label entries must be 0 or 1")
    cards = labels.sum(axis=1)
    if labels.shape[0] == 0:
        return r if r is not None else 1
    found = int(cards[0])
    if not (cards == found).all():
        raise ValueError("all records must share the same label cardinality")
    if found < 1:
        raise ValueError("label cardinality must be at least 1")
    if r is not None and found != r:
        raise ValueError(f"label cardinality {found} does not match declared r={r}")
    return found


@dataclass(frozen=True)
class Record:
    """One private datum: an embedding, a multi-hot label, an opaque id."""

    embedding: np.ndarray
    label: np.ndarray
    record_id: int | str = 0


@dataclass
class RecordSet:
    """Column-stacked private dataset.

    ``embeddings`` is (m, dim) float64, ``labels`` is (m, label_count)
    multi-hot with a uniform cardinality ``r`` across rows.
    """

    embeddings: np.ndarray
    labels: np.ndarray
    ids: np.ndarray = field(default=None)  # type: ignore[assignment]

    def __post_init__(self):
        self.embeddings = np.asarray(self.embeddings, dtype=np.float64)
        self.labels = np.asarray(self.labels, dtype=np.uint8)
        if self.embeddings.ndim != 2:
            raise ValueError("embeddings must be (m, dim)")
        if self.labels.shape[0] != self.embeddings.shape[0]:
            raise ValueError("embeddings and labels disagree on record count")
        validate_label_matrix(self.labels)
        if self.ids is None:
            self.ids = np.arange(self.embeddings.shape[0])
        else:
            self.ids = np.asarray(self.ids)
            if self.ids.shape[0] != self.embeddings.shape[0]:
                raise ValueError("ids length mismatch")

    @classmethod
    def from_records(cls, records: Sequence[Record]) -> "RecordSet":
        if not records:
            raise ValueError("cannot build a RecordSet from zero records")
        emb = np.stack([np.asarray(rec.embedding, dtype=np.float64) for rec in records])
        lab = np.stack([np.asarray(rec.label, dtype=np.uint8) for rec in records])
        ids = np.asarray([rec.record_id for rec in records])
        return cls(emb, lab, ids)

    @property
    def m(self) -> int:
        return self.embeddings.shape[0]

    @property
    def dim(self) -> int:
        return self.embeddings.shape[1]

    @property
    def label_count(self) -> int:
        return self.labels.shape[1]

    @property
    def r(self) -> int:
        return int(self.labels[0].sum()) if self.m else 1

    def subset(self, index: np.ndarray) -> "RecordSet":
        return RecordSet(self.embeddings[index], self.labels[index], self.ids[index])


@dataclass(frozen=True)
class QuerySet:
    """Query (bucket) embeddings with stable indices 0..s-1."""

    embeddings: np.ndarray

    def __post_init__(self):
        emb = np.asarray(self.embeddings, dtype=np.float64)
        if emb.ndim != 2 or emb.shape[0] < 1:
            raise ValueError("queries must be a nonempty (s, dim) array")
        object.__setattr__(self, "embeddings", emb)

    @property
    def s(self) -> int:
        return self.embeddings.shape[0]

    @property
    def dim(self) -> int:
        return self.embeddings.shape[1]


@dataclass(frozen=True)
class ConnectionMap:
    """Per-record bucket sets, stored as an (m, degree) index array.

    Rows are strictly increasing (no duplicate buckets per record) and
    ``degree <= min(k, s)``.
    """

    indices: np.ndarray
    s: int
    k: int

    def __post_init__(self):
        idx = np.asarray(self.indices, dtype=np.int64)
        if idx.ndim != 2:
            raise ValueError("connection indices must be (m, degree)")
        if idx.size:
            if idx.min() < 0 or idx.max() >= self.s:
                raise ValueError("bucket index out of range")
            if idx.shape[1] > 1 and not (np.diff(idx, axis=1) > 0).all():
                raise ValueError("each record's bucket set must be strictly increasing")
        if idx.shape[1] > min(self.k, self.s):
            raise ValueError("record degree exceeds min(k, s)")
        object.__setattr__(self, "indices", idx)

    @property
    def m(self) -> int:
        return self.indices.shape[0]

    @property
    def degree(self) -> int:
        return self.indices.shape[1]


@dataclass
class MechanismReport:
    """Outcome of one privatization pass over the count matrix."""

    model: str
    mechanism: str
    noisy_counts: np.ndarray
    hard: np.ndarray
    soft: np.ndarray
    degenerate_buckets: np.ndarray
    empirical_eta: float | None = None
    theoretical_eta: float | None = None
    eta_exceeded: bool | None = None


# ---------------------------------------------------------------------------
# exact operations


def exact_aggregate(answers: Sequence[np.ndarray], shape: tuple[int, int] | None = None) -> np.ndarray:
    """Elementwise sum of per-client count matrices.

    An empty list is allowed only with a declared ``shape`` and yields zeros.
    """
    answers = [np.asarray(a) for a in answers]
    if not answers:
        if shape is None:
            raise ValueError("empty answer list needs a declared (s, label_count) shape")
        return np.zeros(shape, dtype=np.int64)
    first = answers[0].shape
    if len(first) != 2:
        raise ValueError("answers must be 2-D count matrices")
    if shape is not None and first != tuple(shape):
        raise ValueError(f"answer shape {first} does not match declared {shape}")
    total = np.zeros(first, dtype=np.int64)
    for a in answers:
        if a.shape != first:
            raise ValueError(f"shape mismatch: {a.shape} vs {first}")
        total += a.astype(np.int64)
    return total


def hard_label(row: np.ndarray) -> int:
    """Argmax with ties broken by the smallest index."""
    row = np.asarray(row)
    if row.ndim != 1:
        raise ValueError("hard_label expects a single count row")
    return int(np.argmax(row))


def hard_labels(counts: np.ndarray) -> np.ndarray:
    return np.argmax(np.asarray(counts), axis=1)


def soft_label(row: np.ndarray) -> np.ndarray:
    """Normalize a count row to a probability vector.

    Negative (post-noise) entries are clamped to zero first; an all-zero row
    after clamping maps to the uniform distribution.
    """
    row = np.asarray(row, dtype=np.float64)
    clamped = np.maximum(row, 0.0)
    total = clamped.sum()
    if total == 0.0:
        return np.full(row.shape, 1.0 / row.size)
    return clamped / total


def soft_labels(counts: np.ndarray) -> np.ndarray:
    return np.vstack([soft_label(row) for row in np.asarray(counts)])


def degenerate_buckets(counts: np.ndarray) -> np.ndarray:
    """Bucket indices whose rows are all-zero after clamping negatives."""
    clamped = np.maximum(np.asarray(counts, dtype=np.float64), 0.0)
    return np.flatnonzero(clamped.sum(axis=1) == 0.0)


def count_gap(row: np.ndarray, true_label: int) -> float:
    """Margin of the true label's count over the best competing label."""
    row = np.asarray(row, dtype=np.float64)
    if row.size < 2:
        raise ValueError("count_gap needs at least two labels")
    if not 0 <= true_label < row.size:
        raise ValueError("true_label out of range")
    others = np.delete(row, true_label)
    return float(row[true_label] - others.max())


def max_abs_error(exact: np.ndarray, noisy: np.ndarray) -> float:
    exact = np.asarray(exact, dtype=np.float64)
    noisy = np.asarray(noisy, dtype=np.float64)
    if exact.shape != noisy.shape:
        raise ValueError("matched shapes required")
    return float(np.abs(noisy - exact).max())


def empirical_accuracy(trials: Sequence[tuple[np.ndarray, np.ndarray]], eta: float) -> float:
    """Fraction of trials whose max-entry deviation reaches ``eta``.

    This is the empirical failure rate to compare against a target beta.
    """
    if not trials:
        raise ValueError("empirical_accuracy needs at least one trial")
    failures = sum(1 for exact, noisy in trials if max_abs_error(exact, noisy) >= eta)
    return failures / len(trials)


def per_bucket_failure_rates(trials: Sequence[tuple[np.ndarray, np.ndarray]], eta: float) -> np.ndarray:
    """Failure rate of each bucket separately.

    The max-over-buckets rate (``empirical_accuracy``) is reported alongside
    this because the accuracy target is stated per bucket.
    """
    if not trials:
        raise ValueError("per_bucket_failure_rates needs at least one trial")
    s = np.asarray(trials[0][0]).shape[0]
    fails = np.zeros(s, dtype=np.int64)
    for exact, noisy in trials:
        exact = np.asarray(exact, dtype=np.float64)
        noisy = np.asarray(noisy, dtype=np.float64)
        if exact.shape != noisy.shape or exact.shape[0] != s:
            raise ValueError("matched shapes required")
        dev = np.abs(noisy - exact).max(axis=1)
        fails += dev >= eta
    return fails / len(trials)
