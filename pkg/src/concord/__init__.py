"""Consistency-regularized point cloud completion at desk scale.

Core pieces: Chamfer-family metrics over an exact nearest-neighbor index,
the multi-view consistency training objective with analytic gradients,
viewpoint occlusion splitting, adversarial toy-dataset mining, and a small
trainable completion network with its full training recipe.
"""

from .geometry import (
    MetricBundle,
    NeighborIndex,
    PointCloud,
    as_cloud,
    build_index,
    chamfer_l1,
    chamfer_l2,
    density_aware_cd,
    f1_at_threshold,
    metric_bundle,
    nearest,
    nearest_many,
)
from .losses import (
    CompletionSample,
    LossWeights,
    completed_view,
    loss_and_gradient,
    loss_gradient,
    reconstruction_loss,
    self_guided_consistency,
    target_guided_consistency,
    total_loss,
)
from .model import (
    EpochRecord,
    ModelParams,
    OptimizerState,
    TrainConfig,
    adamw_step,
    backward,
    cosine_lr,
    forward,
    init_optimizer,
    init_params,
    load_checkpoint,
    save_checkpoint,
    train,
)
from .toyset import (
    MiningResult,
    ShapeSpec,
    ToyParams,
    canonical_split,
    default_shape_specs,
    generate_one_to_many_corpus,
    generate_shape_corpus,
    mine_adversarial_subset,
    sample_uniform_subset,
    underside_split,
)
from .views import (
    ViewSpec,
    normalize_cloud,
    resample,
    sample_view_set,
    split_by_viewpoint,
)

__version__ = "0.1.0"

__all__ = [
    "MetricBundle", "NeighborIndex", "PointCloud", "as_cloud", "build_index",
    "chamfer_l1", "chamfer_l2", "density_aware_cd", "f1_at_threshold",
    "metric_bundle", "nearest", "nearest_many",
    "CompletionSample", "LossWeights", "completed_view", "loss_and_gradient",
    "loss_gradient", "reconstruction_loss", "self_guided_consistency",
    "target_guided_consistency", "total_loss",
    "EpochRecord", "ModelParams", "OptimizerState", "TrainConfig",
    "adamw_step", "backward", "cosine_lr", "forward", "init_optimizer",
    "init_params", "load_checkpoint", "save_checkpoint", "train",
    "MiningResult", "ShapeSpec", "ToyParams", "canonical_split",
    "default_shape_specs", "generate_one_to_many_corpus", "generate_shape_corpus",
    "mine_adversarial_subset", "sample_uniform_subset", "underside_split",
    "ViewSpec", "normalize_cloud", "resample", "sample_view_set",
    "split_by_viewpoint",
    "__version__",
]
