"""Cropping, intensity normalization and slice trimming."""

from __future__ import annotations

import numpy as np

from fplplus.core.types import LabelMap, Volume3D

Box = tuple[tuple[int, int], tuple[int, int], tuple[int, int]]

STD_EPS = 1e-8


def label_bbox(masks) -> Box:
    """Half-open bounding box covering the foreground of every mask in ``masks``.

    Used to find the largest lesion range over a training set.
    """
    lo = np.full(3, np.iinfo(np.int64).max)
    hi = np.full(3, -1)
    for m in masks:
        m = m.labels > 0 if isinstance(m, LabelMap) else np.asarray(m) > 0
        idx = np.argwhere(m)
        if len(idx):
            lo = np.minimum(lo, idx.min(axis=0))
            hi = np.maximum(hi, idx.max(axis=0) + 1)
    if (hi < 0).any():
        raise ValueError("no foreground voxels in any mask")
    return tuple((int(a), int(b)) for a, b in zip(lo, hi))  # type: ignore[return-value]


def crop_to_roi(volume: Volume3D, bbox: Box, margin: int = 8) -> tuple[Volume3D, tuple[int, int, int]]:
    """Crop ``volume`` to ``bbox`` grown by ``margin`` voxels, clamped to the volume.

    ``bbox`` is half-open per axis, ``((z0, z1), (y0, y1), (x0, x1))``. Returns the
    cropped copy and its offset in the input, which :func:`uncrop` uses to re-embed it.
    """
    if margin < 0:
        raise ValueError("margin must be non-negative")
    slices, offset = [], []
    for axis, ((lo, hi), size) in enumerate(zip(bbox, volume.dims)):
        if hi <= lo:
            raise ValueError(f"empty bounding box along axis {axis}: [{lo}, {hi})")
        a, b = max(0, lo - margin), min(size, hi + margin)
        if b <= a:
            raise ValueError(f"bounding box along axis {axis} lies outside the volume")
        slices.append(slice(a, b))
        offset.append(a)
    return volume.with_data(volume.data[tuple(slices)].copy()), tuple(offset)  # type: ignore[return-value]


def uncrop(patch: np.ndarray, offset, dims, fill=0) -> np.ndarray:
    """Place ``patch`` back into an array of shape ``dims`` at ``offset``."""
    out = np.full(dims, fill, dtype=patch.dtype)
    out[tuple(slice(o, o + n) for o, n in zip(offset, patch.shape))] = patch
    return out


def znorm(volume: Volume3D) -> Volume3D:
    """Zero-mean, unit-std intensities over the whole volume; constant input maps to zeros."""
    if not volume.is_finite():
        raise ValueError("volume contains NaN or Inf")
    x = volume.data.astype(np.float64)
    std = x.std()
    out = (x - x.mean()) / max(std, STD_EPS)
    return volume.with_data(out.astype(np.float32))


def trim_slices(volume: Volume3D, n_front: int, n_back: int) -> Volume3D:
    """Drop ``n_front`` leading and ``n_back`` trailing axial slices."""
    depth = volume.dims[0]
    if n_front < 0 or n_back < 0:
        raise ValueError("slice counts must be non-negative")
    if depth <= n_front + n_back:
        raise ValueError(f"cannot trim {n_front}+{n_back} slices from a volume of depth {depth}")
    return volume.with_data(volume.data[n_front : depth - n_back].copy())
