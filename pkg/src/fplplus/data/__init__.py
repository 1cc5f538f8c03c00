from fplplus.data.io import (
    DatasetIndex,
    IndexRecord,
    TruncatedVolumeError,
    UnsupportedEncodingError,
    VolumeFormatError,
    read_header,
    read_labels,
    read_volume,
    write_labels,
    write_volume,
)
from fplplus.data.preprocess import crop_to_roi, label_bbox, trim_slices, uncrop, znorm
from fplplus.data.sampling import pad_to, patch_corner, sample_patch
from fplplus.data.synthetic import Appearance, SyntheticSpec, generate_synthetic, synth_case

__all__ = [
    "Appearance",
    "DatasetIndex",
    "IndexRecord",
    "SyntheticSpec",
    "TruncatedVolumeError",
    "UnsupportedEncodingError",
    "VolumeFormatError",
    "crop_to_roi",
    "generate_synthetic",
    "label_bbox",
    "pad_to",
    "patch_corner",
    "read_header",
    "read_labels",
    "read_volume",
    "sample_patch",
    "synth_case",
    "trim_slices",
    "uncrop",
    "write_labels",
    "write_volume",
    "znorm",
]
