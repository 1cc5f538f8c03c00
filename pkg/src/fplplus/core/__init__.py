from fplplus.core.losses import soft_dice_loss, weighted_dice_loss
from fplplus.core.metrics import assd, dice_score, surface_voxels
from fplplus.core.types import (
    DomainTag,
    LabelMap,
    ProbabilityMap,
    ShapeError,
    Volume3D,
    WeightMap,
)

__all__ = [
    "DomainTag",
    "LabelMap",
    "ProbabilityMap",
    "ShapeError",
    "Volume3D",
    "WeightMap",
    "assd",
    "dice_score",
    "soft_dice_loss",
    "surface_voxels",
    "weighted_dice_loss",
]
