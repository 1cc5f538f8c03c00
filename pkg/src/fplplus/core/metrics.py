"""Overlap and surface-distance metrics for label maps."""

from __future__ import annotations

import numpy as np
from scipy import ndimage
from scipy.spatial import cKDTree

from fplplus.core.types import LabelMap, ShapeError

# 6-connected structuring element: a voxel is on the surface if any face neighbour is outside
_FACE_NEIGHBOURS = ndimage.generate_binary_structure(3, 1)


def _masks(pred, gt, class_index: int) -> tuple[np.ndarray, np.ndarray]:
    p = pred.mask(class_index) if isinstance(pred, LabelMap) else np.asarray(pred) == class_index
    g = gt.mask(class_index) if isinstance(gt, LabelMap) else np.asarray(gt) == class_index
    if p.shape != g.shape:
        raise ShapeError(f"prediction dims {p.shape} != ground truth dims {g.shape}")
    return p, g


def dice_score(pred, gt, class_index: int = 1) -> float:
    """Dice overlap of one class. Two empty masks score 1.0."""
    p, g = _masks(pred, gt, class_index)
    total = int(p.sum()) + int(g.sum())
    if total == 0:
        return 1.0
    return 2.0 * int(np.logical_and(p, g).sum()) / total


def surface_voxels(mask: np.ndarray) -> np.ndarray:
    """Foreground voxels with at least one face neighbour outside the mask.

    Voxels on the volume boundary count as touching the outside.
    """
    mask = np.asarray(mask, dtype=bool)
    interior = ndimage.binary_erosion(mask, structure=_FACE_NEIGHBOURS, border_value=0)
    return mask & ~interior


def bbox_diagonal_mm(mask: np.ndarray, spacing) -> float:
    idx = np.argwhere(mask)
    extent = (idx.max(axis=0) - idx.min(axis=0)) * np.asarray(spacing, dtype=np.float64)
    return float(np.sqrt((extent**2).sum()))


def _mean_nearest(from_pts: np.ndarray, to_pts: np.ndarray) -> float:
    dist, _ = cKDTree(to_pts).query(from_pts, k=1)
    return float(np.mean(dist))


def assd(pred, gt, class_index: int = 1, spacing=None) -> float:
    """Average symmetric surface distance in millimetres.

    If exactly one mask is empty, the bounding-box diagonal of the other mask is
    returned so cohort averages stay finite. Two empty masks give 0.0.
    ``spacing`` defaults to the ground-truth label map's spacing.
    """
    if spacing is None:
        spacing = gt.spacing if isinstance(gt, LabelMap) else (1.0, 1.0, 1.0)
    spacing = np.asarray(spacing, dtype=np.float64)
    if spacing.shape != (3,) or (spacing <= 0).any():
        raise ValueError(f"spacing must be three positive values, got {spacing}")
    p, g = _masks(pred, gt, class_index)
    p_any, g_any = bool(p.any()), bool(g.any())
    if not p_any and not g_any:
        return 0.0
    if p_any != g_any:
        return bbox_diagonal_mm(p if p_any else g, spacing)
    sp = np.argwhere(surface_voxels(p)) * spacing
    sg = np.argwhere(surface_voxels(g)) * spacing
    return (_mean_nearest(sp, sg) + _mean_nearest(sg, sp)) / 2.0
