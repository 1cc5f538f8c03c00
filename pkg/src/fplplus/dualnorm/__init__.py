from fplplus.dualnorm.layers import DualBatchNorm, MCDropout
from fplplus.dualnorm.network import (
    DEFAULT_OVERLAP,
    DualDomainSegNet,
    SegNetConfig,
    mc_dropout_predict,
    predict_proba,
    segnet_forward,
    window_starts,
)

__all__ = [
    "DEFAULT_OVERLAP",
    "DualBatchNorm",
    "DualDomainSegNet",
    "MCDropout",
    "SegNetConfig",
    "mc_dropout_predict",
    "predict_proba",
    "segnet_forward",
    "window_starts",
]
