"""End-to-end federation simulator.

One run: select queries from the public pool (clustering first, uncertainty
afterwards), connect every private record to its nearest queries, build vote
matrices, privatize under the configured trust model, derive labels, and fit
a nearest-centroid proxy in place of a neural student.  The pre-noise
aggregate depends only on the record multiset, never on how records are
split across clients.
"""
from __future__ import annotations

import enum
from dataclasses import dataclass, field

import numpy as np

from . import central as central_mod
from . import local as local_mod
from . import shuffle as shuffle_mod
from . import seeds as seeds_mod
from .core import (
    ConnectionMap,
    MechanismReport,
    PrivacyModel,
    PrivacyParams,
    QuerySet,
    RecordSet,
    degenerate_buckets,
    exact_aggregate,
    hard_labels,
    max_abs_error,
    soft_labels,
)
from .geometry import (
    Metric,
    local_answer,
    propagate_labels,
    propagation_accuracy,
    reverse_knn_connect,
    select_queries_cluster,
    select_queries_uncertainty,
)


class PartitionScheme(enum.Enum):
    IID = "iid"
    DIRICHLET = "dirichlet"
    SINGLE_RECORD = "single-record"


@dataclass(frozen=True)
class Partition:
    """Assignment of each private record to a client id."""

    client_of: np.ndarray
    n_clients: int
    scheme: PartitionScheme

    def __post_init__(self):
        ids = np.asarray(self.client_of, dtype=np.int64)
        if ids.size and (ids.min() < 0 or ids.max() >= self.n_clients):
            raise ValueError("client id out of range")
        object.__setattr__(self, "client_of", ids)

    @property
    def m(self) -> int:
        return self.client_of.shape[0]


def partition_records(
    records: RecordSet,
    scheme: PartitionScheme,
    n_clients: int,
    rng: np.random.Generator,
    dirichlet_alpha: float = 0.5,
) -> Partition:
    """Split records across clients: uniform, Dirichlet-skewed by class, or
    one record per client."""
    if n_clients < 1:
        raise ValueError("n_clients must be at least 1")
    m = records.m
    if scheme is PartitionScheme.SINGLE_RECORD:
        if n_clients > m:
            raise ValueError(f"{n_clients} clients but only {m} records")
        if n_clients != m:
            raise ValueError("single-record partitioning requires n_clients == record count")
        return Partition(np.arange(m), n_clients, scheme)
    if scheme is PartitionScheme.IID:
        return Partition(rng.integers(0, n_clients, size=m), n_clients, scheme)
    if dirichlet_alpha <= 0:
        raise ValueError("dirichlet alpha must be positive")
    primary = np.argmax(records.labels, axis=1)
    client_of = np.empty(m, dtype=np.int64)
    for cls in np.unique(primary):
        members = np.flatnonzero(primary == cls)
        members = members[rng.permutation(members.size)]
        props = rng.dirichlet(np.full(n_clients, dirichlet_alpha))
        cuts = np.floor(np.cumsum(props)[:-1] * members.size).astype(np.int64)
        for cid, chunk in enumerate(np.split(members, cuts)):
            client_of[chunk] = cid
    return Partition(client_of, n_clients, scheme)


@dataclass
class BudgetLedger:
    """Per-record spend: cumulative epsilon and queries touched per iteration."""

    epsilon_spent: np.ndarray
    queries_touched: np.ndarray
    per_iteration_epsilon: list = field(default_factory=list)
    per_iteration_degree: list = field(default_factory=list)

    @classmethod
    def empty(cls, m: int) -> "BudgetLedger":
        return cls(np.zeros(m), np.zeros(m, dtype=np.int64))

    def charge(self, epsilon: float, degree: int) -> None:
        self.epsilon_spent += epsilon
        self.queries_touched += degree
        self.per_iteration_epsilon.append(epsilon)
        self.per_iteration_degree.append(degree)


def account_budget(ledger: BudgetLedger, k: int, s: int) -> dict:
    """Summarize spend and contrast with the forward-k-NN worst case.

    A record under the reverse rule touches at most k queries per iteration;
    under forward k-NN the same record could be claimed by all s queries.
    """
    iterations = len(ledger.per_iteration_epsilon)
    max_touched = int(ledger.queries_touched.max()) if ledger.queries_touched.size else 0
    return {
        "iterations": iterations,
        "total_epsilon": float(sum(ledger.per_iteration_epsilon)),
        "max_record_epsilon": float(ledger.epsilon_spent.max()) if ledger.epsilon_spent.size else 0.0,
        "max_queries_touched": max_touched,
        "touch_bound": k * iterations,
        "forward_knn_worst_case": s * iterations,
    }


@dataclass
class ProxyStudent:
    """Nearest-centroid stand-in for the student model.

    Fitted from labeled queries; predicts the class of the closest centroid
    and emits softmax(-distance) soft labels at temperature 1.  Classes never
    seen among the labels get probability zero.
    """

    centroids: np.ndarray
    classes: np.ndarray
    label_count: int

    @classmethod
    def fit(cls, embeddings: np.ndarray, labels: np.ndarray, label_count: int) -> "ProxyStudent":
        embeddings = np.asarray(embeddings, dtype=np.float64)
        labels = np.asarray(labels, dtype=np.int64)
        classes = np.unique(labels)
        centroids = np.stack([embeddings[labels == c].mean(axis=0) for c in classes])
        return cls(centroids, classes, label_count)

    @classmethod
    def fit_soft(cls, embeddings: np.ndarray, soft: np.ndarray, label_count: int) -> "ProxyStudent":
        """Soft-label fit: each class centroid is the probability-weighted mean."""
        embeddings = np.asarray(embeddings, dtype=np.float64)
        soft = np.asarray(soft, dtype=np.float64)
        mass = soft.sum(axis=0)
        classes = np.flatnonzero(mass > 0)
        centroids = (soft[:, classes].T @ embeddings) / mass[classes, None]
        return cls(centroids, classes, label_count)

    def _distances(self, x: np.ndarray) -> np.ndarray:
        from .geometry import pairwise_distances

        return pairwise_distances(np.asarray(x, dtype=np.float64), self.centroids)

    def predict(self, x: np.ndarray) -> np.ndarray:
        return self.classes[np.argmin(self._distances(x), axis=1)]

    def soft(self, x: np.ndarray) -> np.ndarray:
        dists = self._distances(x)
        logits = -(dists - dists.min(axis=1, keepdims=True))
        weights = np.exp(logits)
        probs = np.zeros((x.shape[0], self.label_count))
        probs[:, self.classes] = weights / weights.sum(axis=1, keepdims=True)
        return probs


@dataclass
class IterationOutcome:
    query_embeddings: np.ndarray
    query_indices: np.ndarray | None
    exact: np.ndarray
    report: MechanismReport


@dataclass
class SimulationResult:
    iterations: list
    public_hard_labels: np.ndarray | None
    acc_pl: float | None
    proxy_accuracy: float | None
    ledger: BudgetLedger
    max_error: float
    partition: Partition
    cluster_assignment: np.ndarray | None = None


def _client_answers(
    labels: np.ndarray, connections: ConnectionMap, partition: Partition, label_count: int
) -> np.ndarray:
    """(n_clients, s, label_count) exact vote matrices per client."""
    answers = np.zeros((partition.n_clients, connections.s, label_count), dtype=np.int64)
    lab64 = labels.astype(np.int64)
    for col in range(connections.degree):
        np.add.at(answers, (partition.client_of, connections.indices[:, col]), lab64)
    return answers


def _one_record_per_client(
    partition: Partition, rng: np.random.Generator
) -> tuple[np.ndarray, np.ndarray]:
    """(client ids with records, one uniformly chosen record index per such client)."""
    perm = rng.permutation(partition.m)
    clients, first = np.unique(partition.client_of[perm], return_index=True)
    return clients, perm[first]


def _single_record_answers(
    records: RecordSet, connections: ConnectionMap, chosen: np.ndarray
) -> np.ndarray:
    """(n, s, label_count) binary vote matrices of the chosen records."""
    n = chosen.size
    answers = np.zeros((n, connections.s, records.label_count), dtype=np.uint8)
    rows = np.arange(n)
    for col in range(connections.degree):
        answers[rows, connections.indices[chosen, col], :] |= records.labels[chosen]
    return answers


def _privatize(
    exact: np.ndarray,
    records: RecordSet,
    connections: ConnectionMap,
    partition: Partition,
    params: PrivacyParams,
    mechanism: str,
    beta: float,
    rng: np.random.Generator,
) -> tuple[np.ndarray, str, float | None]:
    """Dispatch the configured privacy model; returns (noisy, name, eta bound)."""
    s, y = params.s, params.label_count
    if params.model is PrivacyModel.CENTRAL:
        noisy = central_mod.central_laplace_mechanism(exact, params, rng)
        return noisy, "laplace", central_mod.laplace_accuracy_bound(params, beta)

    if params.model is PrivacyModel.SHUFFLE_MULTI:
        answers = _client_answers(records.labels, connections, partition, y)
        noisy = shuffle_mod.multi_message_pipeline(list(answers), params, rng)
        return noisy, "distributed-laplace", shuffle_mod.multi_message_accuracy_bound(params, beta)

    clients, chosen = _one_record_per_client(partition, rng)
    n = clients.size
    if params.model is PrivacyModel.SHUFFLE_SINGLE:
        answers = _single_record_answers(records, connections, chosen)
        noisy, eps0 = shuffle_mod.single_message_pipeline(answers, params, rng, mechanism=mechanism)
        local_params = PrivacyParams(eps0, PrivacyModel.LOCAL, params.k, params.r, s, y)
        if mechanism == "rr":
            eta = local_mod.rr_accuracy_bound(local_params, n, beta)
        else:
            cparams = local_mod.CollisionParams.for_budget(s * y, params.k * params.r, eps0)
            eta = local_mod.collision_accuracy_bound(cparams, n, y, beta)
        return noisy, f"shuffled-{mechanism}", eta

    # local model
    if mechanism == "rr":
        answers = _single_record_answers(records, connections, chosen)
        encoded = local_mod.rr_encode_batch(answers, params, rng)
        noisy = local_mod.rr_estimate(encoded.sum(axis=0), params, n)
        return noisy, "rr", local_mod.rr_accuracy_bound(params, n, beta)
    if mechanism == "laplace":
        answers = _single_record_answers(records, connections, chosen).astype(np.float64)
        scale = params.sensitivity / params.epsilon
        noisy = (answers + central_mod.sample_laplace(scale, rng, size=answers.shape)).sum(axis=0)
        return noisy, "local-laplace", local_mod.local_laplace_accuracy_bound(params, n, beta)
    if mechanism == "collision":
        degree = connections.degree
        supports = np.stack(
            [
                local_mod.flatten_support(
                    connections.indices[j], np.flatnonzero(records.labels[j]), y
                )
                for j in chosen
            ]
        )
        cparams = local_mod.CollisionParams.for_budget(s * y, degree * records.r, params.epsilon)
        seeds, cells = local_mod.collision_encode_batch(supports, cparams, rng, n)
        noisy = local_mod.collision_indicator_estimates(seeds, cells, cparams).reshape(s, y)
        return noisy, "collision", local_mod.collision_accuracy_bound(cparams, n, y, beta)
    if mechanism == "gse":
        degree = connections.degree
        c = degree * records.r
        d = s * y
        output_size = min(local_mod.default_filter_length(c, params.epsilon), d - 1)
        gparams = local_mod.GseParams(d, c, params.epsilon, output_size)
        member = np.zeros((n, s * y), dtype=bool)
        for row, j in enumerate(chosen):
            support = local_mod.flatten_support(
                connections.indices[j], np.flatnonzero(records.labels[j]), y
            )
            member[row] = local_mod.gse_members_to_matrix([local_mod.gse_encode(support, gparams, rng)], s * y)[0]
        noisy = local_mod.gse_estimate(member, gparams).reshape(s, y)
        return noisy, "gse", None
    raise ValueError(f"unknown local mechanism {mechanism!r}")


def _default_mechanism(model: PrivacyModel) -> str:
    if model is PrivacyModel.CENTRAL:
        return "laplace"
    if model is PrivacyModel.SHUFFLE_MULTI:
        return "distributed-laplace"
    return "rr"


def run_algorithm1(
    records: RecordSet,
    pub_embeddings: np.ndarray,
    params: PrivacyParams,
    T: int,
    s: int,
    k: int,
    master_seed: int,
    *,
    pub_true_labels: np.ndarray | None = None,
    partition: Partition | None = None,
    partition_scheme: PartitionScheme = PartitionScheme.SINGLE_RECORD,
    n_clients: int | None = None,
    dirichlet_alpha: float = 0.5,
    metric: Metric = Metric.EUCLIDEAN,
    mechanism: str = "auto",
    label_mode: str = "hard",
    beta: float = 0.05,
) -> SimulationResult:
    """Full labeling loop under any privacy model.

    Iteration 1 clusters the public pool and labels the centers; iterations
    2..T pick the proxy student's least-confident unlabeled samples.  The
    per-iteration budget is epsilon/T (sequential composition).
    """
    pub_embeddings = np.asarray(pub_embeddings, dtype=np.float64)
    if T < 1:
        raise ValueError("T must be at least 1")
    if params.s != s or params.k != k:
        raise ValueError("params.s/params.k must match the requested s/k")
    if params.label_count != records.label_count:
        raise ValueError("params.label_count must match the records")
    if params.r != records.r:
        raise ValueError("params.r must match the record label cardinality")
    if s > pub_embeddings.shape[0]:
        raise ValueError("cannot select more queries than public samples")
    if label_mode not in ("hard", "soft"):
        raise ValueError("label_mode must be 'hard' or 'soft'")
    if mechanism == "auto":
        mechanism = _default_mechanism(params.model)

    if partition is None:
        if partition_scheme is PartitionScheme.SINGLE_RECORD:
            n_clients = records.m
        elif n_clients is None:
            raise ValueError("n_clients required for this partition scheme")
        partition = partition_records(
            records,
            partition_scheme,
            n_clients,
            seeds_mod.generator(master_seed, "partition"),
            dirichlet_alpha,
        )
    if partition.m != records.m:
        raise ValueError("partition does not cover the records")

    ledger = BudgetLedger.empty(records.m)
    iter_params = params.per_iteration(T)
    iterations: list[IterationOutcome] = []
    cluster_assignment = None
    labeled_embeddings: list[np.ndarray] = []
    labeled_targets: list[np.ndarray] = []
    directly_labeled: dict[int, int] = {}
    student = None
    iter1_hard = None

    for t in range(1, T + 1):
        if t == 1:
            queries, cluster_assignment = select_queries_cluster(
                pub_embeddings, s, seeds_mod.generator(master_seed, "queries", t)
            )
            query_indices = None
        else:
            exclude = np.asarray(sorted(directly_labeled), dtype=np.int64)
            query_indices = select_queries_uncertainty(student.soft(pub_embeddings), s, exclude)
            if query_indices.size == 0:
                break
            queries = QuerySet(pub_embeddings[query_indices])

        connections = reverse_knn_connect(records.embeddings, queries, k, metric)
        exact = local_answer(records.labels, connections, records.label_count)
        ledger.charge(iter_params.epsilon, connections.degree)

        noisy, mech_name, eta_bound = _privatize(
            exact,
            records,
            connections,
            partition,
            iter_params,
            mechanism,
            beta,
            seeds_mod.generator(master_seed, "mechanism", t),
        )
        err = max_abs_error(exact, noisy)
        report = MechanismReport(
            model=params.model.value,
            mechanism=mech_name,
            noisy_counts=noisy,
            hard=hard_labels(noisy),
            soft=soft_labels(noisy),
            degenerate_buckets=degenerate_buckets(noisy),
            empirical_eta=err,
            theoretical_eta=eta_bound,
            eta_exceeded=None if eta_bound is None else bool(err >= eta_bound),
        )
        iterations.append(IterationOutcome(queries.embeddings, query_indices, exact, report))

        if t == 1:
            iter1_hard = report.hard
        else:
            for pub_idx, lab in zip(query_indices, report.hard):
                directly_labeled[int(pub_idx)] = int(lab)
        labeled_embeddings.append(queries.embeddings)
        labeled_targets.append(report.hard if label_mode == "hard" else report.soft)
        stacked = np.concatenate(labeled_embeddings)
        targets = np.concatenate(labeled_targets)
        if label_mode == "hard":
            student = ProxyStudent.fit(stacked, targets, records.label_count)
        else:
            student = ProxyStudent.fit_soft(stacked, targets, records.label_count)

    public_hard = propagate_labels(cluster_assignment, iter1_hard)
    for pub_idx, lab in directly_labeled.items():
        public_hard[pub_idx] = lab

    acc_pl = None
    proxy_acc = None
    if pub_true_labels is not None:
        truth = np.asarray(pub_true_labels)
        acc_pl = propagation_accuracy(public_hard, truth)
        proxy_acc = float((student.predict(pub_embeddings) == truth).mean())

    return SimulationResult(
        iterations=iterations,
        public_hard_labels=public_hard,
        acc_pl=acc_pl,
        proxy_accuracy=proxy_acc,
        ledger=ledger,
        max_error=iterations[-1].report.empirical_eta,
        partition=partition,
        cluster_assignment=cluster_assignment,
    )


@dataclass(frozen=True)
class InvarianceResult:
    applicable: bool
    pre_noise_equal: bool | None
    noisy_identical: bool | None
    reason: str


def verify_partition_invariance(
    records: RecordSet,
    queries: QuerySet,
    k: int,
    schemes: list,
    n_clients: int,
    master_seed: int,
    params: PrivacyParams | None = None,
    dirichlet_alpha: float = 0.1,
) -> InvarianceResult:
    """Check that the pre-noise aggregate ignores how records split across
    clients, and that aggregate-stage noise with a fixed seed is bit-identical.

    Local models add noise per client, so the check does not apply there and
    says so instead of failing.
    """
    if params is not None and params.model in (PrivacyModel.LOCAL, PrivacyModel.SHUFFLE_SINGLE):
        return InvarianceResult(False, None, None, "per-client noise depends on the partition")
    connections = reverse_knn_connect(records.embeddings, queries, k)
    aggregates = []
    for i, scheme in enumerate(schemes):
        n = records.m if scheme is PartitionScheme.SINGLE_RECORD else n_clients
        part = partition_records(
            records, scheme, n, seeds_mod.generator(master_seed, "partition", i), dirichlet_alpha
        )
        answers = _client_answers(records.labels, connections, part, records.label_count)
        aggregates.append(exact_aggregate(list(answers)))
    equal = all(np.array_equal(aggregates[0], agg) for agg in aggregates[1:])
    noisy_identical = None
    if params is not None and params.model is PrivacyModel.CENTRAL:
        noisy = [
            central_mod.central_laplace_mechanism(
                agg, params, seeds_mod.generator(master_seed, "noise")
            )
            for agg in aggregates
        ]
        noisy_identical = all(np.array_equal(noisy[0], z) for z in noisy[1:])
    return InvarianceResult(True, equal, noisy_identical, "")
