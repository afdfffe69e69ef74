"""Path integrated gradients, adaptive Greedy PIG, and subset-selection evaluation."""

from .attribution import (
    MinibatchSchedule,
    OracleError,
    build_minibatch_schedule,
    greedy_pig,
    greedy_pig_groups,
    integrated_gradients,
    sequential_gradient,
)
from .core import (
    AlgoConfig,
    AttributionResult,
    DifferentiableObjective,
    DimensionError,
    DomainError,
    PathSpec,
    RoundRecord,
    SelectionState,
    interpolate,
    line_point,
    mask_from_selection,
    rank_indices,
)
from .evaluation import (
    QualityCurve,
    attribution_quality,
    brute_force_best_subset,
    curve_and_auc,
    greedy_subset,
    marginal_gains,
    pig_marginal_bound_check,
    pointing_accuracy,
)
from .graph import (
    SparseGraph,
    baseline_edge_selector,
    compression_curve,
    gnn_edge_objective,
    normalize_adjacency,
    symmetrize_gradient,
)
from .models import (
    LinRegProblem,
    SoftmaxNet,
    TabularDataset,
    TinyGCN,
    grad_check,
    linreg_objective,
    linreg_solve,
    load_model,
    mlp_backward,
    mlp_forward,
    save_model,
    train_model,
)
from .objectives import (
    SetFunctionView,
    eval_set,
    kl_objective,
    posthoc_objective,
    topclass_objective,
)
from .synthetic import (
    PlantedTabularSpec,
    ReplicationSpec,
    closed_form_pig_linreg,
    make_correlated_linreg,
    make_planted_tabular,
    make_sbm_graph,
    replicate_features,
)

__version__ = "0.1.0"
