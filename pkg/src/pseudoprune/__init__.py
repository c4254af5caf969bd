"""pseudoprune: label-efficient dataset pruning on pseudo-labeled pools."""

from pseudoprune.config import ConfigError, PipelineConfig, build_config, load_config
from pseudoprune.labeling import (
    LabelBudget,
    QualityReport,
    cluster_label,
    draw_budget,
    quality,
    self_train,
)
from pseudoprune.scoring import (
    METRICS,
    DimensionMismatchError,
    ScoreTable,
    aum,
    dual,
    el2n,
    forgetting,
)
from pseudoprune.selection import (
    METHODS,
    SelectionPlan,
    beta_select,
    bottom_k_select,
    coreset_size,
    double_end_select,
    random_select,
    top_k_select,
)
from pseudoprune.synth import SyntheticTask, TaskParams, evaluate, generate, train_toy
from pseudoprune.trajectory import (
    BadMagicError,
    InvariantError,
    LabelPool,
    TrajectoryError,
    TrajectoryLog,
    TruncatedLogError,
    VersionMismatchError,
    read_log,
    read_log_with_pool,
    slice_epochs,
    write_log,
)
from pseudoprune.tuning import tune_cutoff, tune_dual

__all__ = [
    "METHODS",
    "METRICS",
    "BadMagicError",
    "ConfigError",
    "DimensionMismatchError",
    "InvariantError",
    "LabelBudget",
    "LabelPool",
    "PipelineConfig",
    "QualityReport",
    "ScoreTable",
    "SelectionPlan",
    "SyntheticTask",
    "TaskParams",
    "TrajectoryError",
    "TrajectoryLog",
    "TruncatedLogError",
    "VersionMismatchError",
    "aum",
    "beta_select",
    "bottom_k_select",
    "build_config",
    "cluster_label",
    "coreset_size",
    "double_end_select",
    "draw_budget",
    "dual",
    "el2n",
    "evaluate",
    "forgetting",
    "generate",
    "load_config",
    "quality",
    "random_select",
    "read_log",
    "read_log_with_pool",
    "self_train",
    "slice_epochs",
    "top_k_select",
    "train_toy",
    "tune_cutoff",
    "tune_dual",
    "write_log",
]

__version__ = "0.1.0"
