from fplplus.dualnorm.network import DEFAULT_OVERLAP, window_starts
from fplplus.jointtrain.segmentor import (
    infer,
    infer_proba,
    init_segmentor_from_generator,
    train_final_segmentor,
)

__all__ = [
    "DEFAULT_OVERLAP",
    "infer",
    "infer_proba",
    "init_segmentor_from_generator",
    "train_final_segmentor",
    "window_starts",
]
