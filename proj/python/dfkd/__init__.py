"""Data-free recovery of pruned classifiers.

Global L1 unstructured pruning, BatchNorm-statistics image synthesis, and
temperature-scaled knowledge distillation, backed by the C++ core.
"""

from dfkd._core import (  # noqa: F401
    ConfigError,
    ContractError,
    DataError,
    DomainError,
    FormatError,
    MaskSet,
    Model,
    ShapeError,
    apply_mask,
    compute_mask,
    distill,
    entropy_loss,
    evaluate,
    generate_shapes,
    global_l1_threshold,
    kd_loss,
    load_checkpoint,
    make_tinynet,
    run_pipeline,
    save_checkpoint,
    set_num_threads,
    softmax,
    sparsity_report,
    synthesize,
    train_classifier,
    tv_loss,
)

__all__ = [
    "ConfigError",
    "ContractError",
    "DataError",
    "DomainError",
    "FormatError",
    "MaskSet",
    "Model",
    "ShapeError",
    "apply_mask",
    "compute_mask",
    "distill",
    "entropy_loss",
    "evaluate",
    "generate_shapes",
    "global_l1_threshold",
    "kd_loss",
    "load_checkpoint",
    "make_tinynet",
    "run_pipeline",
    "save_checkpoint",
    "set_num_threads",
    "softmax",
    "sparsity_report",
    "synthesize",
    "train_classifier",
    "tv_loss",
]
