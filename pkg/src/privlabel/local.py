"""Local randomizers over a single record's vote matrix.

Every client holds one record (clients with several records sample one), whose
vote matrix is a binary s x label_count matrix with k*r ones.  Four encoders
are provided, each with a matching unbiased estimator and max-error bound:

* randomized response -- per-bit flipping at budget eps/(2kr) per bit;
* local Laplace -- per-entry Laplace(2kr/eps) noise;
* collision -- the flattened support is hashed into a length-l filter and a
  single exponentially tilted cell index is released;
* subset release (GSE) -- a size-l subset of the flattened domain is released,
  tilted by e^eps whenever it overlaps the true support enough.

Two composite oracles trade budget differently for the low-privacy regime:
``separation`` spends eps/2 on the bucket set and eps/2 on the label vector,
``concatenation`` spends the whole budget on their concatenation.  Both
rebuild matrix entries as products of indicator estimates.  The separation
product is unbiased (independent reports); the concatenation product shares
one report between its factors and is biased at jointly-nonzero entries,
which only the average MSE forgives -- see ``concatenation_entry_mse``.
"""
from __future__ import annotations

import enum
import itertools
import json
import math
import struct
from dataclasses import dataclass
from typing import Callable, Iterable, Sequence

import numpy as np

from .core import PrivacyParams

_U64 = np.uint64
_FULL = np.uint64(0xFFFFFFFFFFFFFFFF)


# ---------------------------------------------------------------------------
# keyed mixing hash


def _mix64(x: np.ndarray) -> np.ndarray:
    """splitmix64 finalizer; a cheap keyed map from 64-bit keys to 64 bits."""
    with np.errstate(over="ignore"):
        x = (x + _U64(0x9E3779B97F4A7C15)) & _FULL
        x = (x ^ (x >> _U64(30))) * _U64(0xBF58476D1CE4E5B9) & _FULL
        x = (x ^ (x >> _U64(27))) * _U64(0x94D049BB133111EB) & _FULL
        return x ^ (x >> _U64(31))


def bucket_hash(hash_seed: int | np.ndarray, values: np.ndarray, filter_length: int) -> np.ndarray:
    """Hash domain indices into [0, filter_length) under the given seed(s).

    Broadcasts: a scalar seed with a vector of values, or a seed column with a
    value row, yielding a (n_seeds, n_values) matrix.  Seeds and values are
    mixed separately (cheap, pre-broadcast) and combined with a single
    multiply/xorshift pass so the broadcast matrix is touched few times.
    """
    seeds = np.asarray(hash_seed, dtype=_U64)
    vals = np.asarray(values, dtype=_U64)
    with np.errstate(over="ignore"):
        x = np.bitwise_xor(_mix64(seeds), _mix64(vals + _U64(1)))
        x *= _U64(0xD6E8FEB86659FD93)
        x ^= x >> _U64(29)
        return (x % _U64(filter_length)).astype(np.int64)


def flatten_support(bucket_indices: np.ndarray, label_indices: np.ndarray, label_count: int) -> np.ndarray:
    """Row-major flat indices bucket * label_count + label of a record's votes."""
    buckets = np.asarray(bucket_indices, dtype=np.int64)
    labels = np.asarray(label_indices, dtype=np.int64)
    return (buckets[:, None] * label_count + labels[None, :]).ravel()


@dataclass(frozen=True)
class FlatSparseVector:
    """One record's vote matrix flattened row-major to a support set.

    Domain size is s * label_count; the support has exactly degree * r
    distinct indices.
    """

    domain_size: int
    support: np.ndarray

    def __post_init__(self):
        support = np.unique(np.asarray(self.support, dtype=np.int64))
        if support.size != np.asarray(self.support).size:
            raise ValueError("support indices must be distinct")
        if support.size == 0:
            raise ValueError("support cannot be empty")
        if support.min() < 0 or support.max() >= self.domain_size:
            raise ValueError("support index out of domain range")
        object.__setattr__(self, "support", support)

    @classmethod
    def from_votes(
        cls, bucket_indices: np.ndarray, label_indices: np.ndarray, s: int, label_count: int
    ) -> "FlatSparseVector":
        return cls(
            domain_size=s * label_count,
            support=flatten_support(bucket_indices, label_indices, label_count),
        )

    @property
    def cardinality(self) -> int:
        return self.support.size

    def to_matrix(self, s: int, label_count: int) -> np.ndarray:
        if s * label_count != self.domain_size:
            raise ValueError("shape does not match the flattened domain")
        flat = np.zeros(self.domain_size, dtype=np.uint8)
        flat[self.support] = 1
        return flat.reshape(s, label_count)


# ---------------------------------------------------------------------------
# randomized response


def rr_flip_probability(epsilon: float, k: int, r: int) -> float:
    """Per-bit flip probability 1 / (e^(eps/(2kr)) + 1)."""
    if not epsilon > 0:
        raise ValueError("epsilon must be positive")
    try:
        return 1.0 / (math.exp(epsilon / (2.0 * k * r)) + 1.0)
    except OverflowError:
        return 0.0


def rr_encode(answer: np.ndarray, params: PrivacyParams, rng: np.random.Generator) -> np.ndarray:
    """Flip every bit of a one-record vote matrix independently."""
    answer = np.asarray(answer)
    if not np.isin(answer, (0, 1)).all():
        raise ValueError("randomized response expects a binary vote matrix")
    p = rr_flip_probability(params.epsilon, params.k, params.r)
    flips = rng.random(answer.shape) < p
    return (answer.astype(np.uint8) ^ flips.astype(np.uint8)).astype(np.uint8)


def rr_encode_batch(answers: np.ndarray, params: PrivacyParams, rng: np.random.Generator) -> np.ndarray:
    """Vectorized ``rr_encode`` over an (n, s, label_count) stack."""
    answers = np.asarray(answers)
    if not np.isin(answers, (0, 1)).all():
        raise ValueError("randomized response expects binary vote matrices")
    p = rr_flip_probability(params.epsilon, params.k, params.r)
    flips = rng.random(answers.shape) < p
    return (answers.astype(np.uint8) ^ flips.astype(np.uint8)).astype(np.uint8)


def rr_estimate(bit_sums: np.ndarray, params: PrivacyParams, n: int) -> np.ndarray:
    """Unbiased count estimate (sums - n*p) / (1 - 2p) from observed bit sums."""
    if n < 1:
        raise ValueError("n must be at least 1")
    p = rr_flip_probability(params.epsilon, params.k, params.r)
    denom = 1.0 - 2.0 * p
    if denom == 0.0:
        raise ValueError("epsilon = 0 leaves the response uninformative")
    return (np.asarray(bit_sums, dtype=np.float64) - n * p) / denom


def rr_accuracy_bound(params: PrivacyParams, n: int, beta: float) -> float:
    """Max-error bound of randomized response over n single-record clients.

    The exponent is capped at 700 to stay in float range; beyond that the
    bound is a vanishing e^(-eps'/2) tail anyway.
    """
    _check_beta(beta)
    e = math.exp(min(params.epsilon / (2.0 * params.k * params.r), 700.0))
    return (e + 1.0) / (e - 1.0) * math.sqrt(
        3.0 * n * math.log(params.label_count / beta) / (e + 1.0)
    )


# ---------------------------------------------------------------------------
# local Laplace


def local_laplace_encode(answer: np.ndarray, params: PrivacyParams, rng: np.random.Generator) -> np.ndarray:
    """Per-entry Laplace(2kr/eps) noise on one client's vote matrix."""
    from .central import sample_laplace  # local import avoids a module cycle

    answer = np.asarray(answer, dtype=np.float64)
    if math.isinf(params.epsilon):
        return answer.copy()
    scale = params.sensitivity / params.epsilon
    return answer + sample_laplace(scale, rng, size=answer.shape)


def local_laplace_estimate(reports: Sequence[np.ndarray]) -> np.ndarray:
    """Sum of noisy client matrices; already unbiased for the true aggregate."""
    reports = list(reports)
    if not reports:
        raise ValueError("need at least one report")
    return np.sum(np.stack(reports), axis=0)


def local_laplace_accuracy_bound(params: PrivacyParams, n: int, beta: float) -> float:
    """Sub-exponential tail bound: the gaussian-like branch and the pure tail
    branch, whichever dominates."""
    _check_beta(beta)
    load = math.log(params.label_count / beta)
    kr = params.k * params.r
    quad = math.sqrt(8.0 * load * kr * kr * n * n / (params.epsilon ** 2))
    tail = 4.0 * load * kr / params.epsilon
    return max(quad, tail)


# ---------------------------------------------------------------------------
# collision mechanism


def default_filter_length(support_size: int, epsilon: float) -> int:
    """Filter length 2c - 1 + c*e^eps, rounded to the nearest integer >= 2."""
    raw = 2.0 * support_size - 1.0 + support_size * math.exp(min(epsilon, 700.0))
    if raw >= 2.0 ** 62:
        raise ValueError(f"epsilon = {epsilon} implies an impractically long filter")
    return max(2, int(math.floor(raw + 0.5)))


@dataclass(frozen=True)
class CollisionParams:
    """Shape of one collision report: domain d, support size c, budget, filter length."""

    domain_size: int
    support_size: int
    epsilon: float
    filter_length: int

    def __post_init__(self):
        if self.domain_size < 1 or self.support_size < 1:
            raise ValueError("domain and support sizes must be positive")
        if self.support_size > self.domain_size:
            raise ValueError("support cannot exceed the domain")
        if self.epsilon < 0:
            raise ValueError("epsilon cannot be negative")
        if self.filter_length < 2:
            raise ValueError("filter length must be at least 2")
        # encoding tolerates epsilon = 0 (uniform output); estimation requires
        # a positive denominator and checks it where it is used

    @classmethod
    def for_budget(
        cls, domain_size: int, support_size: int, epsilon: float, filter_length: int | None = None
    ) -> "CollisionParams":
        if filter_length is None:
            filter_length = default_filter_length(support_size, epsilon)
        return cls(domain_size, support_size, epsilon, filter_length)

    @property
    def omega(self) -> float:
        return self.support_size * math.exp(self.epsilon) + self.filter_length - self.support_size

    @property
    def hit_probability(self) -> float:
        return math.exp(self.epsilon) / self.omega

    @property
    def estimator_denominator(self) -> float:
        return self.hit_probability - 1.0 / self.filter_length


@dataclass(frozen=True)
class CollisionReport:
    hash_seed: int
    cell: int


def collision_cell_pmf(support: np.ndarray, params: CollisionParams, hash_seed: int) -> np.ndarray:
    """Exact output distribution over filter cells for a fixed hash seed.

    If the support happens to cover every cell, the exponential branch is
    renormalized to uniform; this keeps the distribution valid and cannot
    increase the privacy ratio.
    """
    support = _check_support(support, params)
    hashed = bucket_hash(hash_seed, support, params.filter_length)
    distinct = np.unique(hashed)
    l, omega = params.filter_length, params.omega
    pmf = np.empty(l, dtype=np.float64)
    if distinct.size == l:
        pmf[:] = 1.0 / l
        return pmf
    pmf[:] = (omega - math.exp(params.epsilon) * distinct.size) / ((l - distinct.size) * omega)
    pmf[distinct] = params.hit_probability
    return pmf


def collision_encode(support: np.ndarray, params: CollisionParams, rng: np.random.Generator) -> CollisionReport:
    """One private report: a fresh hash seed plus one tilted filter cell."""
    support = _check_support(support, params)
    seed = int(rng.integers(0, 2 ** 63))
    pmf = collision_cell_pmf(support, params, seed)
    cell = int(rng.choice(params.filter_length, p=pmf))
    return CollisionReport(hash_seed=seed, cell=cell)


def collision_encode_batch(
    support: np.ndarray, params: CollisionParams, rng: np.random.Generator, n_reports: int
) -> tuple[np.ndarray, np.ndarray]:
    """(seeds, cells) for many independent reports.

    ``support`` may be one index vector shared by every report or an
    (n_reports, c) array giving each report its own support.
    """
    support = np.asarray(support, dtype=np.int64)
    if support.ndim == 1:
        support = _check_support(support, params)[None, :]
    else:
        if support.shape != (n_reports, params.support_size):
            raise ValueError("per-report supports must be (n_reports, c)")
        if support.min() < 0 or support.max() >= params.domain_size:
            raise ValueError("support index out of domain range")
        if support.shape[1] > 1 and not (np.diff(np.sort(support, axis=1), axis=1) > 0).all():
            raise ValueError("support indices must be distinct within each report")
    l = params.filter_length
    e_eps = math.exp(params.epsilon)
    seeds = rng.integers(0, 2 ** 63, size=n_reports, dtype=np.uint64)
    hashed = np.sort(bucket_hash(seeds[:, None], support, l), axis=1)
    is_new = np.ones_like(hashed, dtype=bool)
    if hashed.shape[1] > 1:
        is_new[:, 1:] = np.diff(hashed, axis=1) > 0
    kappa = is_new.sum(axis=1)
    hit_mass = kappa * e_eps / params.omega
    # a fully covered filter renormalizes to uniform over the hit cells
    pick_hit = (rng.random(n_reports) < np.minimum(hit_mass, 1.0)) | (kappa == l)
    u = rng.random(n_reports)
    cells = np.empty(n_reports, dtype=np.int64)

    # hit branch: j-th distinct hashed value
    j = np.floor(u * kappa).astype(np.int64)
    rank = np.cumsum(is_new, axis=1) - 1
    for col in range(hashed.shape[1]):
        take = pick_hit & is_new[:, col] & (rank[:, col] == j)
        cells[take] = hashed[take, col]

    # miss branch: j-th cell skipping the distinct hashed values in order
    miss = ~pick_hit
    z = np.floor(u[miss] * (l - kappa[miss])).astype(np.int64)
    sorted_hits = np.where(is_new[miss], hashed[miss], np.iinfo(np.int64).max)
    sorted_hits = np.sort(sorted_hits, axis=1)
    for col in range(sorted_hits.shape[1]):
        z += z >= sorted_hits[:, col]
    cells[miss] = z
    return seeds, cells


def collision_indicator_estimates(
    seeds: np.ndarray, cells: np.ndarray, params: CollisionParams, chunk: int = 1 << 22
) -> np.ndarray:
    """Summed unbiased indicator estimates for every domain index.

    Each report contributes (1[H(v) = z] - 1/l) / (e^eps/Omega - 1/l) at every
    coordinate v; the sum over reports estimates the support counts.
    """
    seeds = np.asarray(seeds, dtype=np.uint64)
    cells = np.asarray(cells, dtype=np.int64)
    d, l = params.domain_size, params.filter_length
    denom = params.estimator_denominator
    if denom <= 0:
        raise ValueError("mis-sized filter: e^eps/Omega must exceed 1/l for estimation")
    coords = np.arange(d, dtype=np.int64)
    hits = np.zeros(d, dtype=np.int64)
    rows_per_chunk = max(1, chunk // max(d, 1))
    for start in range(0, seeds.size, rows_per_chunk):
        stop = min(start + rows_per_chunk, seeds.size)
        h = bucket_hash(seeds[start:stop, None], coords[None, :], l)
        hits += (h == cells[start:stop, None]).sum(axis=0)
    n = seeds.size
    return (hits - n / l) / denom


def collision_estimate(
    reports: Sequence[CollisionReport], params: CollisionParams, shape: tuple[int, int] | None = None
) -> np.ndarray:
    """Aggregate count estimate from collision reports, optionally reshaped to
    an (s, label_count) matrix."""
    if not reports:
        raise ValueError("need at least one report")
    seeds = np.asarray([rep.hash_seed for rep in reports], dtype=np.uint64)
    cells = np.asarray([rep.cell for rep in reports], dtype=np.int64)
    flat = collision_indicator_estimates(seeds, cells, params)
    if shape is not None:
        if shape[0] * shape[1] != params.domain_size:
            raise ValueError("shape does not match the flattened domain")
        return flat.reshape(shape)
    return flat


def collision_accuracy_bound(params: CollisionParams, n: int, label_count: int, beta: float) -> float:
    """Max-error bound of the collision mechanism over n clients.

    Evaluated at the parameters' actual filter length; requires the tilt to
    dominate the collision rate (true for the default filter length).
    """
    _check_beta(beta)
    kr = params.support_size
    e = math.exp(min(params.epsilon, 300.0))
    denominator = kr * (e * e - 1.0) - (e - 1.0)
    if denominator <= 0:
        raise ValueError("bound undefined: kr*(e^2eps - 1) must exceed e^eps - 1")
    prefactor = (kr * e + 2.0 * kr - 1.0) * (2.0 * kr * e + kr - 1.0) / denominator
    return prefactor * math.sqrt(2.0 * n * math.log(label_count / beta) / params.filter_length)


def collision_indicator_moments(params: CollisionParams, in_support: bool) -> tuple[float, float]:
    """(mean, second moment) of one report's indicator estimate at a coordinate."""
    w = 1.0 / params.filter_length
    mu = params.hit_probability if in_support else w
    denom = params.estimator_denominator
    mean = (mu - w) / denom
    second = (mu * (1.0 - w) ** 2 + (1.0 - mu) * w * w) / (denom * denom)
    return mean, second


# ---------------------------------------------------------------------------
# subset-release (GSE) mechanism


def _comb(n: int, k: int) -> int:
    if k < 0 or n < 0 or k > n:
        return 0
    return math.comb(n, k)


@dataclass(frozen=True)
class GseParams:
    """Subset-release shape: domain d, support c, budget, output size l, and
    the overlap threshold at which the exponential tilt kicks in."""

    domain_size: int
    support_size: int
    epsilon: float
    output_size: int
    alpha_min: int = 1

    def __post_init__(self):
        if self.output_size > self.domain_size:
            raise ValueError("output size cannot exceed the domain")
        if self.output_size < 1 or self.support_size < 1:
            raise ValueError("output and support sizes must be positive")
        if not 1 <= self.alpha_min <= min(self.support_size, self.output_size):
            raise ValueError("alpha_min must lie in [1, min(c, l)]")
        if self.epsilon < 0:
            raise ValueError("epsilon cannot be negative")

    def _weighted_sum(self, choose_support: Callable[[int], int], choose_rest: Callable[[int], int]) -> float:
        tilt = math.exp(self.epsilon)
        high = sum(
            choose_support(i) * choose_rest(i)
            for i in range(self.alpha_min, self.support_size + 1)
        )
        low = sum(choose_support(i) * choose_rest(i) for i in range(0, self.alpha_min))
        return tilt * high + low

    @property
    def omega(self) -> float:
        d, c, l = self.domain_size, self.support_size, self.output_size
        return self._weighted_sum(lambda i: _comb(c, i), lambda i: _comb(d - c, l - i))

    @property
    def p_true(self) -> float:
        """P[v in Z] for a support member v."""
        d, c, l = self.domain_size, self.support_size, self.output_size
        return self._weighted_sum(lambda i: _comb(c - 1, i - 1), lambda i: _comb(d - c, l - i)) / self.omega

    @property
    def p_false(self) -> float:
        """P[v in Z] for a non-member v."""
        d, c, l = self.domain_size, self.support_size, self.output_size
        return self._weighted_sum(lambda i: _comb(c, i), lambda i: _comb(d - c - 1, l - i - 1)) / self.omega

    @property
    def estimator_denominator(self) -> float:
        return self.p_true - self.p_false


def gse_subset_log_weight(overlap: int, params: GseParams) -> float:
    return params.epsilon if overlap >= params.alpha_min else 0.0


def gse_subset_probability(subset: Iterable[int], support: np.ndarray, params: GseParams) -> float:
    """Exact probability of one size-l output subset."""
    subset = frozenset(int(v) for v in subset)
    if len(subset) != params.output_size:
        return 0.0
    overlap = len(subset & set(int(v) for v in support))
    return math.exp(gse_subset_log_weight(overlap, params)) / params.omega


def _overlap_pmf(params: GseParams) -> np.ndarray:
    d, c, l = params.domain_size, params.support_size, params.output_size
    tilt = math.exp(params.epsilon)
    weights = np.array(
        [
            (tilt if i >= params.alpha_min else 1.0) * _comb(c, i) * _comb(d - c, l - i)
            for i in range(0, min(c, l) + 1)
        ]
    )
    return weights / weights.sum()


def gse_encode(support: np.ndarray, params: GseParams, rng: np.random.Generator) -> np.ndarray:
    """Sample one output subset: draw the overlap size, then uniform members."""
    support = _check_gse_support(support, params)
    pmf = _overlap_pmf(params)
    overlap = int(rng.choice(pmf.size, p=pmf))
    comp = np.setdiff1d(np.arange(params.domain_size), support, assume_unique=False)
    inside = rng.choice(support, size=overlap, replace=False) if overlap else np.empty(0, dtype=np.int64)
    outside_count = params.output_size - overlap
    outside = rng.choice(comp, size=outside_count, replace=False) if outside_count else np.empty(0, dtype=np.int64)
    return np.sort(np.concatenate([inside, outside]).astype(np.int64))


def gse_encode_batch(
    support: np.ndarray, params: GseParams, rng: np.random.Generator, n_reports: int
) -> np.ndarray:
    """(n_reports, d) boolean membership matrix of sampled output subsets."""
    support = _check_gse_support(support, params)
    d = params.domain_size
    comp = np.setdiff1d(np.arange(d), support)
    pmf = _overlap_pmf(params)
    overlaps = rng.choice(pmf.size, size=n_reports, p=pmf)
    member = np.zeros((n_reports, d), dtype=bool)
    # rank columns of a random matrix: the first i entries of each row's
    # argsort are a uniform size-i subset
    in_rank = np.argsort(rng.random((n_reports, support.size)), axis=1)
    out_rank = np.argsort(rng.random((n_reports, comp.size)), axis=1)
    take_in = in_rank < overlaps[:, None]
    take_out = out_rank < (params.output_size - overlaps)[:, None]
    member[:, support] = take_in
    if comp.size:
        member[:, comp] = take_out
    return member


def gse_estimate(memberships: np.ndarray, params: GseParams) -> np.ndarray:
    """Summed unbiased indicator estimates from an (n, d) membership stack."""
    member = np.asarray(memberships)
    if member.ndim == 1:
        member = member[None, :]
    denom = params.estimator_denominator
    if denom <= 0:
        raise ValueError("p_true must exceed p_false for estimation")
    n = member.shape[0]
    return (member.sum(axis=0) - n * params.p_false) / denom


def gse_members_to_matrix(subsets: Sequence[np.ndarray], domain_size: int) -> np.ndarray:
    member = np.zeros((len(subsets), domain_size), dtype=bool)
    for i, sub in enumerate(subsets):
        member[i, np.asarray(sub, dtype=np.int64)] = True
    return member


# ---------------------------------------------------------------------------
# separation / concatenation composites


def separation_params(s: int, label_count: int, k: int, r: int, epsilon: float) -> tuple[CollisionParams, CollisionParams]:
    half = epsilon / 2.0
    return (
        CollisionParams.for_budget(s, k, half),
        CollisionParams.for_budget(label_count, r, half),
    )


def separation_encode(
    bucket_indices: np.ndarray,
    label_indices: np.ndarray,
    params_pair: tuple[CollisionParams, CollisionParams],
    rng: np.random.Generator,
) -> tuple[CollisionReport, CollisionReport]:
    """Two reports under an even budget split: bucket set apart from labels."""
    bucket_params, label_params = params_pair
    return (
        collision_encode(np.asarray(bucket_indices), bucket_params, rng),
        collision_encode(np.asarray(label_indices), label_params, rng),
    )


def separation_estimate(
    report_pairs: Sequence[tuple[CollisionReport, CollisionReport]],
    params_pair: tuple[CollisionParams, CollisionParams],
) -> np.ndarray:
    """Sum over clients of outer(bucket estimate, label estimate).

    The two factors come from independent reports, so each product is an
    unbiased estimate of the client's vote matrix.
    """
    bucket_params, label_params = params_pair
    total = np.zeros((bucket_params.domain_size, label_params.domain_size))
    for bucket_rep, label_rep in report_pairs:
        t_hat = collision_indicator_estimates(
            np.array([bucket_rep.hash_seed], dtype=np.uint64),
            np.array([bucket_rep.cell]),
            bucket_params,
        )
        y_hat = collision_indicator_estimates(
            np.array([label_rep.hash_seed], dtype=np.uint64),
            np.array([label_rep.cell]),
            label_params,
        )
        total += np.outer(t_hat, y_hat)
    return total


def concatenation_params(s: int, label_count: int, k: int, r: int, epsilon: float) -> CollisionParams:
    return CollisionParams.for_budget(s + label_count, k + r, epsilon)


def concatenation_encode(
    bucket_indices: np.ndarray,
    label_indices: np.ndarray,
    s: int,
    params: CollisionParams,
    rng: np.random.Generator,
) -> CollisionReport:
    """One report over the concatenated (buckets then labels) domain."""
    support = np.concatenate(
        [np.asarray(bucket_indices, dtype=np.int64), s + np.asarray(label_indices, dtype=np.int64)]
    )
    return collision_encode(support, params, rng)


def concatenation_estimate(
    reports: Sequence[CollisionReport], s: int, label_count: int, params: CollisionParams
) -> np.ndarray:
    """Sum over clients of outer(bucket part, label part) of one report's
    indicator estimates.

    Both factors share the report, so entries where bucket and label are both
    truly present carry a systematic offset of -1/(l * (e^eps/Omega - 1/l));
    zero entries are estimated without bias.
    """
    total = np.zeros((s, label_count))
    for rep in reports:
        est = collision_indicator_estimates(
            np.array([rep.hash_seed], dtype=np.uint64), np.array([rep.cell]), params
        )
        total += np.outer(est[:s], est[s:])
    return total


def separation_entry_mse(
    params_pair: tuple[CollisionParams, CollisionParams], in_bucket: bool, in_label: bool
) -> float:
    """Exact per-entry MSE of the separation product at a given truth."""
    bucket_params, label_params = params_pair
    _, m2_t = collision_indicator_moments(bucket_params, in_bucket)
    _, m2_y = collision_indicator_moments(label_params, in_label)
    truth = float(in_bucket and in_label)
    return m2_t * m2_y - truth * truth


def concatenation_entry_mse(params: CollisionParams, in_bucket: bool, in_label: bool) -> float:
    """Exact per-entry MSE of the shared-report product at a given truth.

    Joint law of the two hit indicators: both hit only when the two
    coordinates hash to the same cell (probability 1/l) and that cell is
    released.
    """
    l = params.filter_length
    p = params.hit_probability
    w = 1.0 / l
    denom = params.estimator_denominator
    q1 = (1.0 - p) / (l - 1)

    hit = ((1.0 - w) / denom) ** 2
    cross = -w * (1.0 - w) / (denom * denom)
    both_miss = (w / denom) ** 2

    if in_bucket and in_label:
        p_hh, p_x, p_y = w * p, (1.0 - w) * p, (1.0 - w) * p
    elif in_bucket:
        p_hh, p_x, p_y = w * p, (1.0 - w) * p, (1.0 - w) * q1
    elif in_label:
        p_hh, p_x, p_y = w * p, (1.0 - w) * q1, (1.0 - w) * p
    else:
        p_hh, p_x, p_y = w * w, w * (1.0 - w), w * (1.0 - w)
    p_none = 1.0 - p_hh - p_x - p_y

    mean = p_hh * hit + (p_x + p_y) * cross + p_none * both_miss
    second = p_hh * hit ** 2 + (p_x + p_y) * cross ** 2 + p_none * both_miss ** 2
    truth = float(in_bucket and in_label)
    return second - 2.0 * truth * mean + truth * truth


def collision_average_mse(params: CollisionParams) -> float:
    """Exact average per-entry MSE of the flat collision estimator (n = 1)."""
    d, c = params.domain_size, params.support_size
    _, m2_one = collision_indicator_moments(params, True)
    _, m2_zero = collision_indicator_moments(params, False)
    mse_one = m2_one - 1.0  # unbiased at mean 1
    return ((d - c) * m2_zero + c * mse_one) / d


# ---------------------------------------------------------------------------
# exhaustive local-DP verification


def verify_local_dp(
    inputs: Sequence[object],
    pmf: Callable[[object], np.ndarray],
    max_triples: int = 1_000_000,
) -> float:
    """Max log-probability ratio over all input pairs and outputs.

    Only discrete mechanisms with enumerable outputs are accepted; the pmf of
    every input must be over a shared output indexing.  Outputs impossible
    under both inputs are skipped; an output possible under exactly one input
    makes the ratio infinite.
    """
    pmfs = [np.asarray(pmf(x), dtype=np.float64) for x in inputs]
    if not pmfs:
        raise ValueError("no inputs to verify")
    n_out = pmfs[0].size
    if len(pmfs) * len(pmfs) * n_out > max_triples:
        raise ValueError("instance too large for exhaustive verification")
    for vec in pmfs:
        if vec.size != n_out:
            raise ValueError("all inputs must share one output space")
        if not math.isclose(float(vec.sum()), 1.0, abs_tol=1e-9):
            raise ValueError("pmf does not sum to 1")
    worst = 0.0
    for a in pmfs:
        for b in pmfs:
            both = (a > 0) & (b > 0)
            if ((a > 0) != (b > 0)).any():
                return math.inf
            if both.any():
                worst = max(worst, float(np.log(a[both] / b[both]).max()))
    return worst


def mechanism_pmfs(name: str, **kwargs):
    """Factory of (inputs, pmf) pairs for the exhaustive verifier.

    Continuous mechanisms have no pmf and are rejected; their privacy is spot
    checked through density ratios instead.
    """
    if name in ("laplace", "local-laplace"):
        raise ValueError(
            f"{name} is continuous; use density-ratio spot checks instead of enumeration"
        )
    if name == "rr-bit":
        return rr_bit_pmfs(kwargs["epsilon"])
    if name == "rr-matrix":
        return rr_matrix_pmfs(kwargs["params"])
    if name == "collision":
        return collision_pmfs(kwargs["params"], kwargs["hash_seed"])
    if name == "gse":
        return gse_pmfs(kwargs["params"])
    raise ValueError(f"unknown mechanism {name!r}")


def rr_bit_pmfs(epsilon: float) -> tuple[list[int], Callable[[int], np.ndarray]]:
    """Single-bit randomized response as (inputs, pmf) for the verifier."""
    p = 1.0 / (math.exp(epsilon) + 1.0)

    def pmf(bit: int) -> np.ndarray:
        return np.array([1.0 - p, p]) if bit == 0 else np.array([p, 1.0 - p])

    return [0, 1], pmf


def rr_matrix_pmfs(params: PrivacyParams) -> tuple[list[tuple], Callable[[tuple], np.ndarray]]:
    """Whole-matrix randomized response on a tiny shape.

    Inputs are all valid one-record vote matrices; outputs all binary
    matrices.  Guarded to shapes with at most 12 cells.
    """
    s, y, k, r = params.s, params.label_count, params.k, params.r
    cells = s * y
    if cells > 12:
        raise ValueError("matrix-level verification is guarded to <= 12 cells")
    p = rr_flip_probability(params.epsilon, params.k, params.r)
    degree = min(k, s)
    inputs = []
    for buckets in itertools.combinations(range(s), degree):
        for labels in itertools.combinations(range(y), r):
            matrix = np.zeros((s, y), dtype=np.uint8)
            for b in buckets:
                matrix[b, list(labels)] = 1
            inputs.append(tuple(matrix.ravel().tolist()))
    outputs = list(itertools.product((0, 1), repeat=cells))

    def pmf(flat_input: tuple) -> np.ndarray:
        inp = np.asarray(flat_input)
        probs = np.empty(len(outputs))
        for i, out in enumerate(outputs):
            flips = int(np.sum(inp != np.asarray(out)))
            probs[i] = (p ** flips) * ((1.0 - p) ** (cells - flips))
        return probs

    return inputs, pmf


def collision_pmfs(params: CollisionParams, hash_seed: int) -> tuple[list[tuple], Callable[[tuple], np.ndarray]]:
    """All size-c supports against the cell distribution, for one fixed hash."""
    inputs = list(itertools.combinations(range(params.domain_size), params.support_size))

    def pmf(support: tuple) -> np.ndarray:
        return collision_cell_pmf(np.asarray(support), params, hash_seed)

    return inputs, pmf


def gse_pmfs(params: GseParams) -> tuple[list[tuple], Callable[[tuple], np.ndarray]]:
    """All size-c supports against the subset distribution."""
    inputs = list(itertools.combinations(range(params.domain_size), params.support_size))
    outputs = list(itertools.combinations(range(params.domain_size), params.output_size))

    def pmf(support: tuple) -> np.ndarray:
        sup = np.asarray(support)
        return np.array([gse_subset_probability(z, sup, params) for z in outputs])

    return inputs, pmf


# ---------------------------------------------------------------------------
# private report wire format


class MechanismId(enum.IntEnum):
    RR = 1
    LOCAL_LAPLACE = 2
    COLLISION = 3
    GSE = 4


@dataclass(frozen=True)
class RrReport:
    bits: np.ndarray


@dataclass(frozen=True)
class LocalLaplaceReport:
    values: np.ndarray


@dataclass(frozen=True)
class GseReport:
    members: tuple[int, ...]


def encode_report(report) -> bytes:
    """Length-prefixed binary form: mechanism id, hash seed (collision only),
    then a u32-length payload."""
    if isinstance(report, RrReport):
        bits = np.asarray(report.bits, dtype=np.uint8)
        payload = struct.pack("<HH", *bits.shape) + bits.tobytes()
        head = struct.pack("<B", MechanismId.RR)
    elif isinstance(report, LocalLaplaceReport):
        vals = np.asarray(report.values, dtype="<f8")
        payload = struct.pack("<HH", *vals.shape) + vals.tobytes()
        head = struct.pack("<B", MechanismId.LOCAL_LAPLACE)
    elif isinstance(report, CollisionReport):
        payload = struct.pack("<I", report.cell)
        head = struct.pack("<BQ", MechanismId.COLLISION, report.hash_seed)
    elif isinstance(report, GseReport):
        payload = struct.pack("<I", len(report.members)) + struct.pack(
            f"<{len(report.members)}I", *report.members
        )
        head = struct.pack("<B", MechanismId.GSE)
    else:
        raise ValueError(f"unknown report type {type(report).__name__}")
    return head + struct.pack("<I", len(payload)) + payload


def decode_report(data: bytes):
    mech = data[0]
    offset = 1
    if mech == MechanismId.COLLISION:
        (seed,) = struct.unpack_from("<Q", data, offset)
        offset += 8
    (length,) = struct.unpack_from("<I", data, offset)
    offset += 4
    payload = data[offset : offset + length]
    if len(payload) != length:
        raise ValueError("truncated report payload")
    if mech == MechanismId.RR:
        rows, cols = struct.unpack_from("<HH", payload)
        bits = np.frombuffer(payload[4:], dtype=np.uint8).reshape(rows, cols)
        return RrReport(bits.copy())
    if mech == MechanismId.LOCAL_LAPLACE:
        rows, cols = struct.unpack_from("<HH", payload)
        vals = np.frombuffer(payload[4:], dtype="<f8").reshape(rows, cols)
        return LocalLaplaceReport(vals.copy())
    if mech == MechanismId.COLLISION:
        (cell,) = struct.unpack_from("<I", payload)
        return CollisionReport(hash_seed=seed, cell=cell)
    if mech == MechanismId.GSE:
        (count,) = struct.unpack_from("<I", payload)
        members = struct.unpack_from(f"<{count}I", payload, 4)
        return GseReport(members=tuple(members))
    raise ValueError(f"unknown mechanism id {mech}")


def report_to_json(report) -> str:
    if isinstance(report, RrReport):
        body = {"mechanism_id": int(MechanismId.RR), "payload": np.asarray(report.bits).tolist()}
    elif isinstance(report, LocalLaplaceReport):
        body = {"mechanism_id": int(MechanismId.LOCAL_LAPLACE), "payload": np.asarray(report.values).tolist()}
    elif isinstance(report, CollisionReport):
        body = {
            "mechanism_id": int(MechanismId.COLLISION),
            "hash_seed": int(report.hash_seed),
            "payload": int(report.cell),
        }
    elif isinstance(report, GseReport):
        body = {"mechanism_id": int(MechanismId.GSE), "payload": list(report.members)}
    else:
        raise ValueError(f"unknown report type {type(report).__name__}")
    return json.dumps(body, sort_keys=True)


def report_from_json(text: str):
    body = json.loads(text)
    mech = body["mechanism_id"]
    if mech == MechanismId.RR:
        return RrReport(np.asarray(body["payload"], dtype=np.uint8))
    if mech == MechanismId.LOCAL_LAPLACE:
        return LocalLaplaceReport(np.asarray(body["payload"], dtype=np.float64))
    if mech == MechanismId.COLLISION:
        return CollisionReport(hash_seed=int(body["hash_seed"]), cell=int(body["payload"]))
    if mech == MechanismId.GSE:
        return GseReport(members=tuple(int(v) for v in body["payload"]))
    raise ValueError(f"unknown mechanism id {mech}")


# ---------------------------------------------------------------------------
# shared checks


def _check_beta(beta: float) -> None:
    if not 0.0 < beta < 1.0:
        raise ValueError("beta must lie in (0, 1)")


def _check_support(support: np.ndarray, params: CollisionParams) -> np.ndarray:
    support = np.unique(np.asarray(support, dtype=np.int64))
    if support.size != params.support_size:
        raise ValueError(
            f"support has {support.size} distinct indices, expected {params.support_size}"
        )
    if support.min() < 0 or support.max() >= params.domain_size:
        raise ValueError("support index out of domain range")
    return support


def _check_gse_support(support: np.ndarray, params: GseParams) -> np.ndarray:
    support = np.unique(np.asarray(support, dtype=np.int64))
    if support.size != params.support_size:
        raise ValueError(
            f"support has {support.size} distinct indices, expected {params.support_size}"
        )
    if support.min() < 0 or support.max() >= params.domain_size:
        raise ValueError("support index out of domain range")
    return support
