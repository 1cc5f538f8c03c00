"""Random patch sampling with foreground oversampling."""

from __future__ import annotations

import numpy as np

from fplplus.core.types import LabelMap, Volume3D

FOREGROUND_PROB = 0.5


def pad_to(array: np.ndarray, min_dims) -> tuple[np.ndarray, list[tuple[int, int]]]:
    """Reflect-pad the trailing three axes of ``array`` up to ``min_dims``.

    Returns the padded array and the ``(before, after)`` pad per spatial axis.
    """
    lead = array.ndim - 3
    pads = []
    for size, want in zip(array.shape[lead:], min_dims):
        extra = max(0, int(want) - size)
        pads.append((extra // 2, extra - extra // 2))
    if not any(a or b for a, b in pads):
        return array, pads
    mode = "reflect" if min(array.shape[lead:]) > 1 else "edge"
    return np.pad(array, [(0, 0)] * lead + pads, mode=mode), pads


def patch_corner(dims, patch_dims, rng: np.random.Generator, fg_mask=None, fg_prob: float = FOREGROUND_PROB):
    """Draw a patch corner uniformly; with probability ``fg_prob`` force a foreground voxel inside.

    The coin is flipped on every call so the RNG stream does not depend on the labels.
    """
    dims = np.asarray(dims)
    patch = np.asarray(patch_dims)
    if (patch > dims).any():
        raise ValueError(f"patch {tuple(patch)} larger than volume {tuple(dims)}")
    force = rng.random() < fg_prob
    corner = np.array([rng.integers(0, d - p + 1) for d, p in zip(dims, patch)])
    if force and fg_mask is not None:
        fg = np.flatnonzero(fg_mask)
        if fg.size:
            center = np.array(np.unravel_index(fg[rng.integers(fg.size)], tuple(dims)))
            lo = np.maximum(0, center - patch + 1)
            hi = np.minimum(center, dims - patch)
            corner = np.array([rng.integers(a, b + 1) for a, b in zip(lo, hi)])
    return tuple(int(c) for c in corner)


def crop_patch(array: np.ndarray, corner, patch_dims) -> np.ndarray:
    lead = (slice(None),) * (array.ndim - 3)
    return array[lead + tuple(slice(c, c + p) for c, p in zip(corner, patch_dims))]


def sample_patch(
    volume: Volume3D,
    labels: LabelMap | None,
    patch_dims,
    rng: np.random.Generator,
    fg_prob: float = FOREGROUND_PROB,
) -> tuple[Volume3D, LabelMap | None]:
    data, _ = pad_to(volume.data, patch_dims)
    lab = None
    if labels is not None:
        if labels.dims != volume.dims:
            raise ValueError(f"label dims {labels.dims} != volume dims {volume.dims}")
        lab, _ = pad_to(labels.labels, patch_dims)
    fg = lab > 0 if lab is not None else None
    corner = patch_corner(data.shape, patch_dims, rng, fg, fg_prob)
    patch = volume.with_data(crop_patch(data, corner, patch_dims).copy())
    if lab is None:
        return patch, None
    return patch, LabelMap(crop_patch(lab, corner, patch_dims).copy(), labels.num_classes, labels.spacing)
