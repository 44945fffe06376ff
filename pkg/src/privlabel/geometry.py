"""Embedding-space geometry: query selection, reverse k-NN connection, local
vote matrices, and connection-quality scores.

Reverse k-NN attaches every record to its k nearest queries, which caps each
record's contribution to the aggregate (the forward rule would let one record
touch every query).  Query selection uses k-means++ seeded Lloyd iterations on
the public embeddings; later rounds switch to smallest-margin uncertainty
sampling.
"""
from __future__ import annotations

import enum
import itertools

import numpy as np

from .core import ConnectionMap, QuerySet, RecordSet


class Metric(enum.Enum):
    EUCLIDEAN = "euclidean"
    COSINE = "cosine"


class ConnectionObjective(enum.Enum):
    ARITHMETIC_MEAN = "arithmetic-mean"
    MAX_MIN = "max-min"
    HARMONIC_MEAN = "harmonic-mean"


def pairwise_distances(points: np.ndarray, queries: np.ndarray, metric: Metric = Metric.EUCLIDEAN) -> np.ndarray:
    """(m, s) distance matrix between row vectors of the two arrays."""
    x = np.asarray(points, dtype=np.float64)
    q = np.asarray(queries, dtype=np.float64)
    if x.ndim != 2 or q.ndim != 2 or x.shape[1] != q.shape[1]:
        raise ValueError("points and queries must be 2-D with a shared dimension")
    if metric is Metric.EUCLIDEAN:
        sq = (x * x).sum(axis=1)[:, None] + (q * q).sum(axis=1)[None, :] - 2.0 * (x @ q.T)
        return np.sqrt(np.maximum(sq, 0.0))
    xn = np.linalg.norm(x, axis=1)
    qn = np.linalg.norm(q, axis=1)
    if (xn == 0).any() or (qn == 0).any():
        raise ValueError("cosine distance requires nonzero vectors")
    cos = (x @ q.T) / np.outer(xn, qn)
    return 1.0 - np.clip(cos, -1.0, 1.0)


def similarity_from_distance(dist: np.ndarray) -> np.ndarray:
    """Positive, monotone-decreasing similarity used by connection scores."""
    return 1.0 / (1.0 + np.asarray(dist, dtype=np.float64))


# ---------------------------------------------------------------------------
# query selection


def _kmeans_plus_plus_init(points: np.ndarray, s: int, rng: np.random.Generator) -> np.ndarray:
    n = points.shape[0]
    centers = np.empty((s, points.shape[1]))
    first = int(rng.integers(n))
    centers[0] = points[first]
    closest_sq = ((points - centers[0]) ** 2).sum(axis=1)
    for j in range(1, s):
        total = closest_sq.sum()
        if total == 0.0:
            # all remaining mass collapsed onto chosen centers; pick uniformly
            pick = int(rng.integers(n))
        else:
            pick = int(rng.choice(n, p=closest_sq / total))
        centers[j] = points[pick]
        closest_sq = np.minimum(closest_sq, ((points - centers[j]) ** 2).sum(axis=1))
    return centers


def kmeans(
    points: np.ndarray,
    s: int,
    rng: np.random.Generator,
    max_iter: int = 100,
    tol: float = 1e-6,
) -> tuple[np.ndarray, np.ndarray]:
    """Lloyd iterations from a k-means++ seeding.

    Returns (centers, assignment).  Deterministic given the generator state;
    assignment ties go to the smallest center index.  An emptied cluster is
    reseeded at the point farthest from its current center.
    """
    points = np.asarray(points, dtype=np.float64)
    if points.ndim != 2:
        raise ValueError("points must be (n, dim)")
    n = points.shape[0]
    if not 1 <= s <= n:
        raise ValueError(f"cluster count s={s} must lie in [1, {n}]")
    centers = _kmeans_plus_plus_init(points, s, rng)
    assignment = np.zeros(n, dtype=np.int64)
    for _ in range(max_iter):
        dists = pairwise_distances(points, centers)
        assignment = np.argmin(dists, axis=1)
        new_centers = centers.copy()
        for j in range(s):
            members = assignment == j
            if members.any():
                new_centers[j] = points[members].mean(axis=0)
            else:
                far = int(np.argmax(dists[np.arange(n), assignment]))
                new_centers[j] = points[far]
                assignment[far] = j
        shift = np.linalg.norm(new_centers - centers, axis=1).max()
        centers = new_centers
        if shift < tol:
            break
    assignment = np.argmin(pairwise_distances(points, centers), axis=1)
    return centers, assignment


def select_queries_cluster(
    pub_embeddings: np.ndarray, s: int, rng: np.random.Generator
) -> tuple[QuerySet, np.ndarray]:
    """Cluster the public pool into s groups; the centers become queries."""
    centers, assignment = kmeans(pub_embeddings, s, rng)
    return QuerySet(centers), assignment


def margins(soft: np.ndarray) -> np.ndarray:
    """Top-1 minus top-2 probability per row; small margin = high uncertainty."""
    soft = np.asarray(soft, dtype=np.float64)
    if soft.shape[1] < 2:
        raise ValueError("margins need at least two classes")
    part = np.sort(soft, axis=1)
    return part[:, -1] - part[:, -2]


def select_queries_uncertainty(
    soft: np.ndarray, s: int, exclude: np.ndarray | None = None
) -> np.ndarray:
    """Indices of the s least-confident samples (smallest margin, ties by index).

    Samples listed in ``exclude`` are never selected; if fewer than s eligible
    samples remain, all of them are returned.
    """
    gap = margins(soft)
    eligible = np.ones(gap.shape[0], dtype=bool)
    if exclude is not None and len(exclude):
        eligible[np.asarray(exclude, dtype=np.int64)] = False
    candidates = np.flatnonzero(eligible)
    if candidates.size <= s:
        return candidates
    order = np.lexsort((candidates, gap[candidates]))
    return np.sort(candidates[order[:s]])


# ---------------------------------------------------------------------------
# connection and local answers


def reverse_knn_connect(
    embeddings: np.ndarray | RecordSet,
    queries: QuerySet,
    k: int,
    metric: Metric = Metric.EUCLIDEAN,
) -> ConnectionMap:
    """Connect each record to its min(k, s) nearest queries.

    Distance ties resolve toward the smaller query index (stable sort), so the
    map is deterministic.
    """
    if k < 1:
        raise ValueError("k must be >= 1")
    if isinstance(embeddings, RecordSet):
        embeddings = embeddings.embeddings
    embeddings = np.asarray(embeddings, dtype=np.float64)
    s = queries.s
    degree = min(k, s)
    if embeddings.shape[0] == 0:
        return ConnectionMap(np.zeros((0, degree), dtype=np.int64), s=s, k=k)
    dists = pairwise_distances(embeddings, queries.embeddings, metric)
    order = np.argsort(dists, axis=1, kind="stable")
    chosen = np.sort(order[:, :degree], axis=1)
    return ConnectionMap(chosen, s=s, k=k)


def local_answer(labels: np.ndarray, connections: ConnectionMap, label_count: int | None = None) -> np.ndarray:
    """Count matrix of one client: counts[l] = sum of labels of records connected to bucket l."""
    labels = np.asarray(labels)
    if labels.ndim != 2:
        raise ValueError("labels must be a (m, label_count) multi-hot matrix")
    if label_count is not None and labels.shape[1] != label_count:
        raise ValueError("label_count mismatch")
    if labels.shape[0] != connections.m:
        raise ValueError("connections must cover exactly this client's records")
    if labels.size and not np.isin(labels, (0, 1)).all():
        raise ValueError("label entries must be 0 or 1")
    counts = np.zeros((connections.s, labels.shape[1]), dtype=np.int64)
    lab64 = labels.astype(np.int64)
    for col in range(connections.degree):
        np.add.at(counts, connections.indices[:, col], lab64)
    return counts


def connection_scores(
    embeddings: np.ndarray,
    queries: QuerySet,
    connections: ConnectionMap,
    metric: Metric = Metric.EUCLIDEAN,
) -> np.ndarray:
    """Per-query sum of similarities of its connected records (0 if none)."""
    embeddings = np.asarray(embeddings, dtype=np.float64)
    scores = np.zeros(queries.s)
    if connections.m == 0:
        return scores
    dists = pairwise_distances(embeddings, queries.embeddings, metric)
    sims = similarity_from_distance(dists)
    for col in range(connections.degree):
        idx = connections.indices[:, col]
        np.add.at(scores, idx, sims[np.arange(connections.m), idx])
    return scores


def objective_value(scores: np.ndarray, objective: ConnectionObjective) -> float:
    """Aggregate per-query scores into a single connection-quality number.

    The harmonic mean is defined as 0 whenever any query scores 0.
    """
    scores = np.asarray(scores, dtype=np.float64)
    if objective is ConnectionObjective.ARITHMETIC_MEAN:
        return float(scores.mean())
    if objective is ConnectionObjective.MAX_MIN:
        return float(scores.min())
    if (scores <= 0).any():
        return 0.0
    return float(scores.size / (1.0 / scores).sum())


def brute_force_best_connection(
    embeddings: np.ndarray,
    queries: QuerySet,
    k: int,
    objective: ConnectionObjective,
    metric: Metric = Metric.EUCLIDEAN,
    max_candidates: int = 200_000,
) -> ConnectionMap:
    """Exhaustive search over every max-degree-k connection set (tiny instances).

    Candidate sets give each record exactly min(k, s) buckets; enumeration is
    lexicographic over sorted bucket tuples, and the first maximum wins, so the
    result is deterministic.
    """
    embeddings = np.asarray(embeddings, dtype=np.float64)
    m = embeddings.shape[0]
    s = queries.s
    degree = min(k, s)
    if s > 4 or m > 6:
        raise ValueError("brute force is guarded to s <= 4 and m <= 6")
    combos = list(itertools.combinations(range(s), degree))
    if len(combos) ** m > max_candidates:
        raise ValueError("instance too large for exhaustive search")
    dists = pairwise_distances(embeddings, queries.embeddings, metric)
    sims = similarity_from_distance(dists)
    # per-record score contribution of each candidate bucket set
    contrib = np.zeros((m, len(combos), s))
    for j in range(m):
        for ci, combo in enumerate(combos):
            contrib[j, ci, list(combo)] = sims[j, list(combo)]
    total = contrib[0]
    for j in range(1, m):
        total = (total[:, None, :] + contrib[j][None, :, :]).reshape(-1, s)
    if objective is ConnectionObjective.ARITHMETIC_MEAN:
        values = total.mean(axis=1)
    elif objective is ConnectionObjective.MAX_MIN:
        values = total.min(axis=1)
    else:
        inverted = 1.0 / np.maximum(total, 1e-300)
        values = np.where((total <= 0).any(axis=1), 0.0, s / inverted.sum(axis=1))
    best = int(np.argmax(values))
    picks = []
    for j in reversed(range(m)):
        best, choice = divmod(best, len(combos))
        picks.append(combos[choice])
    picks.reverse()
    return ConnectionMap(np.asarray(picks, dtype=np.int64), s=s, k=k)


# ---------------------------------------------------------------------------
# label propagation


def propagate_labels(assignment: np.ndarray, query_labels: np.ndarray) -> np.ndarray:
    """Give every public sample the label of its cluster center."""
    assignment = np.asarray(assignment, dtype=np.int64)
    query_labels = np.asarray(query_labels)
    if assignment.size and (assignment.min() < 0 or assignment.max() >= query_labels.shape[0]):
        raise ValueError("assignment refers to an unknown cluster")
    return query_labels[assignment]


def propagation_accuracy(propagated: np.ndarray, true_labels: np.ndarray) -> float:
    """Fraction of public samples receiving their true label."""
    propagated = np.asarray(propagated)
    true_labels = np.asarray(true_labels)
    if propagated.shape != true_labels.shape:
        raise ValueError("shape mismatch")
    if propagated.size == 0:
        raise ValueError("no samples to score")
    return float((propagated == true_labels).mean())
