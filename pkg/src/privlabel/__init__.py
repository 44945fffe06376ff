"""Record-level differentially private labeling via reverse k-NN vote sums."""

from .core import (
    AccuracySpec,
    ConnectionMap,
    MechanismReport,
    PrivacyModel,
    PrivacyParams,
    QuerySet,
    Record,
    RecordSet,
    count_gap,
    empirical_accuracy,
    exact_aggregate,
    hard_label,
    label_vector,
    soft_label,
)
from .geometry import (
    ConnectionObjective,
    Metric,
    brute_force_best_connection,
    local_answer,
    objective_value,
    propagate_labels,
    reverse_knn_connect,
    select_queries_cluster,
    select_queries_uncertainty,
)
from .central import (
    LaplaceNoiseSpec,
    central_laplace_mechanism,
    laplace_accuracy_bound,
    sample_laplace,
)
from .local import (
    CollisionParams,
    FlatSparseVector,
    GseParams,
    collision_accuracy_bound,
    collision_encode,
    collision_estimate,
    gse_encode,
    gse_estimate,
    local_laplace_accuracy_bound,
    rr_accuracy_bound,
    rr_encode,
    rr_estimate,
    verify_local_dp,
)
from .shuffle import (
    AmplificationParams,
    amplify_forward,
    amplify_invert,
    multi_message_decode,
    multi_message_encode,
    multi_message_pipeline,
    shuffle_messages,
    single_message_pipeline,
)
from .simulate import Partition, PartitionScheme, ProxyStudent, run_algorithm1

__version__ = "0.1.0"
