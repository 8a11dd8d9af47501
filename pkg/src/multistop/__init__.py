"""Multiple-stopping decision problems over partially observed Markov chains.

Build a model (`Model`, `load_model`), filter beliefs (`update`), solve for
the optimal value on a belief grid (`solve`), verify the structural
assumptions behind threshold optimality (`check_assumptions`), tune linear
threshold or softmax policies by stochastic search (`train_multistart`),
simulate and compare policies (`evaluate`), and estimate chain parameters
from engagement logs (`fit_poisson_hmm`, `bic_scan`).
"""

from ._validation import ValidationError
from .dp import (
    CONTINUE,
    STOP,
    BeliefGrid,
    ConvergenceError,
    ValueTable,
    finite_stop_bound,
    horizon_for_tolerance,
    solve,
    stopping_sets,
)
from .filtering import ZeroLikelihoodError, sample_step, update, update_all
from .ingest import (
    CountSeries,
    EventLog,
    FitResult,
    best_fit,
    bic_scan,
    bin_events,
    fit_poisson_hmm,
)
from .model import (
    ExplicitObservations,
    Model,
    PoissonObservations,
    discretize_observations,
    load_model,
    model_from_dict,
    model_to_dict,
    save_model,
)
from .policy import (
    PeriodicPolicy,
    Policy,
    RepeatedSingleStopPolicy,
    SoftmaxParams,
    SoftmaxPolicy,
    TablePolicy,
    ThresholdParams,
    ThresholdPolicy,
    heuristic_policy,
    linear_threshold_action,
    load_policy,
    periodic_policy,
    save_policy,
    softmax_action,
    softmax_probabilities,
    theta_from_phi,
)
from .sim import (
    EvalReport,
    Trajectory,
    default_horizon,
    evaluate,
    run_linear,
    run_policy,
    run_softmax,
    simulate_softmax_batch,
    simulate_threshold_batch,
)
from .spsa import SpsaConfig, SpsaResult, train, train_multistart
from .structure import (
    AssumptionReport,
    OrderingVerdict,
    check_assumptions,
    copositive_leq,
    fosd_geq,
    is_tp2,
    mlr_geq,
    nested_sets,
    policy_monotone_on_lines,
)

__version__ = "0.1.0"

__all__ = [
    "AssumptionReport",
    "BeliefGrid",
    "CONTINUE",
    "ConvergenceError",
    "CountSeries",
    "EvalReport",
    "EventLog",
    "ExplicitObservations",
    "FitResult",
    "Model",
    "OrderingVerdict",
    "PeriodicPolicy",
    "PoissonObservations",
    "Policy",
    "RepeatedSingleStopPolicy",
    "STOP",
    "SoftmaxParams",
    "SoftmaxPolicy",
    "SpsaConfig",
    "SpsaResult",
    "TablePolicy",
    "ThresholdParams",
    "ThresholdPolicy",
    "Trajectory",
    "ValidationError",
    "ValueTable",
    "ZeroLikelihoodError",
    "best_fit",
    "bic_scan",
    "bin_events",
    "check_assumptions",
    "copositive_leq",
    "default_horizon",
    "discretize_observations",
    "evaluate",
    "finite_stop_bound",
    "fit_poisson_hmm",
    "fosd_geq",
    "heuristic_policy",
    "horizon_for_tolerance",
    "is_tp2",
    "linear_threshold_action",
    "load_model",
    "load_policy",
    "mlr_geq",
    "model_from_dict",
    "model_to_dict",
    "nested_sets",
    "periodic_policy",
    "policy_monotone_on_lines",
    "run_linear",
    "run_policy",
    "run_softmax",
    "sample_step",
    "save_model",
    "save_policy",
    "simulate_softmax_batch",
    "simulate_threshold_batch",
    "softmax_action",
    "softmax_probabilities",
    "solve",
    "stopping_sets",
    "theta_from_phi",
    "train",
    "train_multistart",
    "update",
    "update_all",
]
