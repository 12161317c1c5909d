"""Balanced contrastive losses, their bounds and gradients, and a hypersphere
embedding harness for studying the geometry they induce on long-tailed data."""

from .embedding import (
    PrototypeSet,
    RawConfiguration,
    UnitConfiguration,
    normalize,
    sphere_project_gradient,
)
from .longtail import Batch, LongTailSpec, class_counts, init_embeddings, sample_batch
from .losses import (
    ClassifierWeights,
    LossBreakdown,
    LossParams,
    averaged_loss_L1,
    averaged_loss_L2,
    bcl_instance_loss,
    class_batch_loss,
    combined_loss,
    lc_cross_entropy,
    prototype_loss_L3,
    scl_instance_loss,
)
from .bounds import check_equality_conditions, theorem1_bound, theorem2_bound, theorem3_bound
from .grads import bcl_gradient, finite_difference, scl_gradient
from .simplex import SimplexSpec, build_regular_simplex, measure
from .harness import TrainConfig, compare_geometries, make_problem, train

__version__ = "0.1.0"
