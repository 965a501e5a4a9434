"""Robust minimax training of one model over multiple domains.

The package trains model parameters by stochastic gradient descent while an
adversarial distribution over domains performs ascent (multiplicative
updates, regularized projected ascent, or exact oracle jumps), together with
the step-size schedules, simplex and optimal-transport machinery, worst-case
evaluation metrics and a CLI for reproducible experiments.
"""

from .errors import (
    ConfigurationError,
    ContractViolationError,
    DivergenceError,
    InvalidInputError,
    RobustDomainsError,
    SolverFailureError,
    SupportMismatchError,
    UnsupportedModelError,
)
from .simplex import (
    SimplexDistribution,
    kl_divergence,
    multiplicative_update,
    project_to_simplex,
)
from .regularizers import (
    RegularizerSpec,
    SinkhornSolution,
    entropic_transport_value,
    reg_gradient,
    reg_value,
    sinkhorn_solve,
    uniform_cost_matrix,
)
from .schedules import (
    ProblemConstants,
    ScheduleSpec,
    optimal_shrink_c,
    oracle_model_step,
    regret_bound,
    resolve_schedule,
)
from .domains import (
    DomainBatch,
    DomainSampler,
    MultiDomainDataset,
    batch_loss_vector,
    dataset_from_arrays,
    empirical_loss_vector,
    load_manifest,
    make_noisy_blob_domains,
    sample_batch,
    write_dataset,
)
from .models import (
    MLPClassifier,
    ModelParameters,
    ParameterLayout,
    SoftmaxClassifier,
    build_model,
    load_checkpoint,
    save_checkpoint,
    weighted_gradient,
)
from .trainer import (
    TrainerConfig,
    TrainingTrace,
    estimate_constants,
    train,
    train_alg1,
    train_alg2,
    train_oracle_p,
)
from .evaluation import (
    EvaluationReport,
    build_report,
    duality_gap,
    per_domain_metrics,
    realized_regret,
    worst_case_metrics,
    write_series_csv,
    write_summary_csv,
    write_timing_csv,
    write_trace_csv,
)

__version__ = "0.1.0"

__all__ = [
    "ConfigurationError",
    "ContractViolationError",
    "DivergenceError",
    "InvalidInputError",
    "RobustDomainsError",
    "SolverFailureError",
    "SupportMismatchError",
    "UnsupportedModelError",
    "SimplexDistribution",
    "kl_divergence",
    "multiplicative_update",
    "project_to_simplex",
    "RegularizerSpec",
    "SinkhornSolution",
    "entropic_transport_value",
    "reg_gradient",
    "reg_value",
    "sinkhorn_solve",
    "uniform_cost_matrix",
    "ProblemConstants",
    "ScheduleSpec",
    "optimal_shrink_c",
    "oracle_model_step",
    "regret_bound",
    "resolve_schedule",
    "DomainBatch",
    "DomainSampler",
    "MultiDomainDataset",
    "batch_loss_vector",
    "dataset_from_arrays",
    "empirical_loss_vector",
    "load_manifest",
    "make_noisy_blob_domains",
    "sample_batch",
    "write_dataset",
    "MLPClassifier",
    "ModelParameters",
    "ParameterLayout",
    "SoftmaxClassifier",
    "build_model",
    "load_checkpoint",
    "save_checkpoint",
    "weighted_gradient",
    "TrainerConfig",
    "TrainingTrace",
    "estimate_constants",
    "train",
    "train_alg1",
    "train_alg2",
    "train_oracle_p",
    "EvaluationReport",
    "build_report",
    "duality_gap",
    "per_domain_metrics",
    "realized_regret",
    "worst_case_metrics",
    "write_series_csv",
    "write_summary_csv",
    "write_timing_csv",
    "write_trace_csv",
    "__version__",
]
