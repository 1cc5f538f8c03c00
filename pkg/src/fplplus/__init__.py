"""Cross-modality domain adaptation for 3D segmentation with filtered pseudo labels.

The pipeline runs in four stages:

1. cross-domain data augmentation with cycle-consistent translators (:mod:`fplplus.translate`)
2. a dual-batch-norm pseudo label generator (:mod:`fplplus.dualnorm`, :mod:`fplplus.pseudolabel`)
3. uncertainty and consensus based pseudo label weighting (:mod:`fplplus.pseudolabel`)
4. joint training of the final segmentor (:mod:`fplplus.jointtrain`)

:mod:`fplplus.data` provides the volume file format, preprocessing and a synthetic
two-domain phantom generator; :mod:`fplplus.core` holds value types, losses and metrics.
"""

from fplplus.core.types import (
    DomainTag,
    LabelMap,
    ProbabilityMap,
    Volume3D,
    WeightMap,
)

__version__ = "0.1.0"

__all__ = [
    "DomainTag",
    "LabelMap",
    "ProbabilityMap",
    "Volume3D",
    "WeightMap",
    "__version__",
]
