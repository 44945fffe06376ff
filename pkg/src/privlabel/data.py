"""Synthetic Gaussian-mixture data and the embeddings CSV format.

CSV layout: header ``id,label,e1..e{dim}``; the label column is empty in
public files, a class index like ``3`` for single-label records, and a
``|``-separated index list like ``3|7`` for multi-label records.  Floats are
written with 17 significant digits so a round trip is lossless.
"""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from . import seeds as seeds_mod
from .core import RecordSet, label_vector


@dataclass(frozen=True)
class SyntheticSpec:
    """Gaussian mixture shape: class count, samples, dimension, separation."""

    classes: int
    per_class: int
    dim: int
    separation: float
    std: float
    pub_per_class: int
    multilabel_r: int = 1

    def __post_init__(self):
        if self.classes < 2:
            raise ValueError("need at least two classes")
        if self.per_class < 1 or self.pub_per_class < 0:
            raise ValueError("sample counts must be positive")
        if self.dim < 1:
            raise ValueError("dim must be positive")
        if self.std <= 0 or self.separation < 0:
            raise ValueError("std must be positive and separation nonnegative")
        if not 1 <= self.multilabel_r <= self.classes:
            raise ValueError("multilabel_r must lie in [1, classes]")

    @property
    def separability(self) -> float:
        """Recorded distance-to-noise ratio of the mixture."""
        return self.separation / self.std


@dataclass
class PublicSet:
    embeddings: np.ndarray
    true_labels: np.ndarray | None = None

    @property
    def n(self) -> int:
        return self.embeddings.shape[0]


def class_means(spec: SyntheticSpec) -> np.ndarray:
    """Deterministic class means with pairwise distance >= separation.

    Scaled one-hot axes when the dimension allows, otherwise points on a
    circle in the first two dimensions.
    """
    if spec.dim >= spec.classes:
        means = np.zeros((spec.classes, spec.dim))
        for c in range(spec.classes):
            # one-hot axes are sqrt(2) apart, so rescale to hit `separation`
            means[c, c] = spec.separation / math.sqrt(2.0)
        return means
    if spec.dim < 2:
        raise ValueError("dim must be >= 2 when classes exceed the dimension")
    radius = spec.separation / (2.0 * math.sin(math.pi / spec.classes))
    means = np.zeros((spec.classes, spec.dim))
    angles = 2.0 * math.pi * np.arange(spec.classes) / spec.classes
    means[:, 0] = radius * np.cos(angles)
    means[:, 1] = radius * np.sin(angles)
    return means


def _label_set(base_class: int, spec: SyntheticSpec) -> list[int]:
    return [(base_class + j) % spec.classes for j in range(spec.multilabel_r)]


def generate_synthetic(spec: SyntheticSpec, seed: int) -> tuple[RecordSet, PublicSet]:
    """Private records plus a disjoint public split from the same mixture.

    The public split keeps its ground-truth classes for scoring only; they
    are never fed to any mechanism.
    """
    rng = seeds_mod.generator(seed, "synthetic")
    means = class_means(spec)
    emb_rows, label_rows = [], []
    for c in range(spec.classes):
        classes = _label_set(c, spec)
        center = means[classes].mean(axis=0)
        emb_rows.append(center + spec.std * rng.standard_normal((spec.per_class, spec.dim)))
        bits = label_vector(classes, spec.classes)
        label_rows.append(np.tile(bits, (spec.per_class, 1)))
    records = RecordSet(np.concatenate(emb_rows), np.concatenate(label_rows))

    pub_emb, pub_truth = [], []
    for c in range(spec.classes):
        classes = _label_set(c, spec)
        center = means[classes].mean(axis=0)
        pub_emb.append(center + spec.std * rng.standard_normal((spec.pub_per_class, spec.dim)))
        pub_truth.append(np.full(spec.pub_per_class, c, dtype=np.int64))
    public = PublicSet(np.concatenate(pub_emb), np.concatenate(pub_truth))
    return records, public


# ---------------------------------------------------------------------------
# CSV round trip


def _format_label(bits: np.ndarray) -> str:
    return "|".join(str(i) for i in np.flatnonzero(bits))


def _parse_label(text: str, label_count: int, line_no: int) -> np.ndarray:
    try:
        indices = [int(part) for part in text.split("|")]
    except ValueError as exc:
        raise ValueError(f"line {line_no}: malformed label {text!r}") from exc
    if any(i < 0 or i >= label_count for i in indices):
        raise ValueError(f"line {line_no}: label index out of range [0, {label_count})")
    return label_vector(indices, label_count)


def write_records_csv(path, records: RecordSet, label_count: int | None = None) -> None:
    label_count = label_count or records.label_count
    with open(path, "w", encoding="utf-8") as fh:
        fh.write("id,label," + ",".join(f"e{i + 1}" for i in range(records.dim)) + "\n")
        for rid, bits, emb in zip(records.ids, records.labels, records.embeddings):
            coords = ",".join(f"{x:.17g}" for x in emb)
            fh.write(f"{rid},{_format_label(bits)},{coords}\n")


def write_public_csv(path, embeddings: np.ndarray, labels: np.ndarray | None = None) -> None:
    """Public files leave the label column empty; pass ``labels`` to write a
    ground-truth companion file instead."""
    embeddings = np.asarray(embeddings, dtype=np.float64)
    with open(path, "w", encoding="utf-8") as fh:
        fh.write("id,label," + ",".join(f"e{i + 1}" for i in range(embeddings.shape[1])) + "\n")
        for i, emb in enumerate(embeddings):
            coords = ",".join(f"{x:.17g}" for x in emb)
            tag = "" if labels is None else str(int(labels[i]))
            fh.write(f"{i},{tag},{coords}\n")


def load_embeddings_csv(path, label_count: int | None = None):
    """Parse a dataset file; labeled rows give a RecordSet, an all-empty label
    column gives a PublicSet.  Errors carry the offending line number."""
    with open(path, "r", encoding="utf-8") as fh:
        header = fh.readline().rstrip("\n")
        cols = header.split(",")
        if len(cols) < 3 or cols[0] != "id" or cols[1] != "label":
            raise ValueError(f"line 1: header must be id,label,e1..e{{dim}}, got {header!r}")
        expected = ["id", "label"] + [f"e{i + 1}" for i in range(len(cols) - 2)]
        if cols != expected:
            raise ValueError(f"line 1: malformed embedding columns in {header!r}")
        dim = len(cols) - 2
        ids, raw_labels, rows = [], [], []
        for line_no, line in enumerate(fh, start=2):
            line = line.rstrip("\n")
            if not line:
                continue
            parts = line.split(",")
            if len(parts) != dim + 2:
                raise ValueError(f"line {line_no}: expected {dim + 2} columns, got {len(parts)}")
            try:
                rows.append([float(x) for x in parts[2:]])
            except ValueError as exc:
                raise ValueError(f"line {line_no}: non-numeric embedding entry") from exc
            ids.append(parts[0])
            raw_labels.append((line_no, parts[1]))
    if not rows:
        raise ValueError("file holds no data rows")
    embeddings = np.asarray(rows, dtype=np.float64)
    labeled = [text != "" for _, text in raw_labels]
    if not any(labeled):
        return PublicSet(embeddings, None)
    if not all(labeled):
        missing = next(line_no for (line_no, text), flag in zip(raw_labels, labeled) if not flag)
        raise ValueError(f"line {missing}: missing label in a labeled file")
    if label_count is None:
        label_count = 1 + max(
            max(int(p) for p in text.split("|")) for _, text in raw_labels
        )
        label_count = max(label_count, 2)
    labels = np.stack(
        [_parse_label(text, label_count, line_no) for line_no, text in raw_labels]
    )
    return RecordSet(embeddings, labels, np.asarray(ids))
