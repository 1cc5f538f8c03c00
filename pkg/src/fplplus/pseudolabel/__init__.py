from fplplus.pseudolabel.filtering import (
    image_uncertainty,
    image_uncertainty_raw,
    image_weights,
    label_agreement,
    mean_probability,
    normalized_entropy,
    uncertain_region_size,
    variance_map,
)
from fplplus.pseudolabel.generator import train_generator
from fplplus.pseudolabel.records import (
    FilterConfig,
    PseudoLabelRecord,
    build_records,
    consensus_map,
    load_record,
    load_records,
    save_record,
    save_records,
)

__all__ = [
    "FilterConfig",
    "PseudoLabelRecord",
    "build_records",
    "consensus_map",
    "image_uncertainty",
    "image_uncertainty_raw",
    "image_weights",
    "label_agreement",
    "load_record",
    "load_records",
    "mean_probability",
    "normalized_entropy",
    "save_record",
    "save_records",
    "train_generator",
    "uncertain_region_size",
    "variance_map",
]
