"""Value types carried between pipeline stages.

All arrays are stored in ``(z, y, x)`` order, z being the slowest axis.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from enum import Enum

import numpy as np

Spacing = tuple[float, float, float]


class ShapeError(ValueError):
    """Raised when array dimensions or channel counts disagree."""


class DomainTag(str, Enum):
    SOURCE = "source"
    TARGET = "target"

    @classmethod
    def parse(cls, value: "DomainTag | str") -> "DomainTag":
        if isinstance(value, cls):
            return value
        aliases = {"s": cls.SOURCE, "source": cls.SOURCE, "t": cls.TARGET, "target": cls.TARGET}
        try:
            return aliases[str(value).lower()]
        except KeyError:
            raise ValueError(f"unknown domain {value!r}; expected 'source' or 'target'") from None


def _check_spacing(spacing) -> Spacing:
    sp = tuple(float(s) for s in spacing)
    if len(sp) != 3 or not all(s > 0 and np.isfinite(s) for s in sp):
        raise ValueError(f"spacing must be three positive numbers, got {spacing!r}")
    return sp  # type: ignore[return-value]


@dataclass(frozen=True)
class Volume3D:
    """A scalar image volume with physical voxel spacing in millimetres."""

    data: np.ndarray
    spacing: Spacing = (1.0, 1.0, 1.0)

    def __post_init__(self):
        data = np.ascontiguousarray(self.data, dtype=np.float32)
        if data.ndim != 3 or min(data.shape) < 1:
            raise ShapeError(f"volume data must be a non-empty 3D array, got shape {data.shape}")
        object.__setattr__(self, "data", data)
        object.__setattr__(self, "spacing", _check_spacing(self.spacing))

    @property
    def dims(self) -> tuple[int, int, int]:
        return tuple(self.data.shape)  # type: ignore[return-value]

    def is_finite(self) -> bool:
        return bool(np.isfinite(self.data).all())

    def with_data(self, data: np.ndarray) -> "Volume3D":
        return Volume3D(data, self.spacing)


@dataclass(frozen=True)
class LabelMap:
    """Integer class labels in ``[0, num_classes)``."""

    labels: np.ndarray
    num_classes: int = 2
    spacing: Spacing = (1.0, 1.0, 1.0)

    def __post_init__(self):
        if self.num_classes < 2 or self.num_classes > 256:
            raise ValueError(f"num_classes must be in [2, 256], got {self.num_classes}")
        labels = np.asarray(self.labels)
        if labels.ndim != 3 or min(labels.shape) < 1:
            raise ShapeError(f"label data must be a non-empty 3D array, got shape {labels.shape}")
        if labels.size and (labels.min() < 0 or labels.max() >= self.num_classes):
            raise ValueError(
                f"labels must lie in [0, {self.num_classes}), got range "
                f"[{labels.min()}, {labels.max()}]"
            )
        object.__setattr__(self, "labels", np.ascontiguousarray(labels, dtype=np.uint8))
        object.__setattr__(self, "spacing", _check_spacing(self.spacing))

    @property
    def dims(self) -> tuple[int, int, int]:
        return tuple(self.labels.shape)  # type: ignore[return-value]

    def mask(self, class_index: int) -> np.ndarray:
        if not 0 <= class_index < self.num_classes:
            raise ValueError(f"class_index {class_index} outside [0, {self.num_classes})")
        return self.labels == class_index

    def one_hot(self) -> np.ndarray:
        """Return a ``(C, D, H, W)`` float32 one-hot encoding."""
        return (np.arange(self.num_classes)[:, None, None, None] == self.labels[None]).astype(np.float32)


@dataclass(frozen=True)
class ProbabilityMap:
    """Per-class probabilities with shape ``(C, D, H, W)``."""

    probs: np.ndarray
    atol: float = field(default=1e-5, repr=False, compare=False)

    def __post_init__(self):
        probs = np.asarray(self.probs)
        if probs.ndim != 4 or probs.shape[0] < 2:
            raise ShapeError(f"probabilities must have shape (C>=2, D, H, W), got {probs.shape}")
        if not np.isfinite(probs).all():
            raise ValueError("probabilities contain NaN or Inf")
        if probs.min() < -self.atol or probs.max() > 1 + self.atol:
            raise ValueError("probabilities must lie in [0, 1]")
        if np.abs(probs.sum(axis=0) - 1.0).max() > self.atol:
            raise ValueError("per-voxel class probabilities must sum to 1")
        object.__setattr__(self, "probs", probs)

    @property
    def num_classes(self) -> int:
        return int(self.probs.shape[0])

    @property
    def dims(self) -> tuple[int, int, int]:
        return tuple(self.probs.shape[1:])  # type: ignore[return-value]

    def argmax(self, spacing: Spacing = (1.0, 1.0, 1.0)) -> LabelMap:
        return LabelMap(np.argmax(self.probs, axis=0), self.num_classes, spacing)


@dataclass(frozen=True)
class WeightMap:
    """Non-negative finite per-voxel weights."""

    values: np.ndarray

    def __post_init__(self):
        values = np.asarray(self.values)
        if values.ndim != 3:
            raise ShapeError(f"weight map must be 3D, got shape {values.shape}")
        if not np.isfinite(values).all() or (values < 0).any():
            raise ValueError("weights must be finite and non-negative")
        object.__setattr__(self, "values", values)

    @property
    def dims(self) -> tuple[int, int, int]:
        return tuple(self.values.shape)  # type: ignore[return-value]
