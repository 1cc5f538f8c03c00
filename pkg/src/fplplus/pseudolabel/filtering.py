"""Image-level and pixel-level reliability weights for pseudo labels.

Per case, ``K`` Monte Carlo dropout probability maps give a mean map and a voxel
variance map. The summed variance ``v`` is divided by the number ``eta`` of
high-entropy voxels to give a size-aware uncertainty ``u``; across the cohort ``u``
is rescaled to an image weight ``w`` in ``[0, 1]``. A consensus map ``M`` marks
voxels where the target-branch prediction agrees with the prediction on the
back-translated image, and ``A = M * w`` weights the pseudo label voxelwise.
"""

from __future__ import annotations

import numpy as np

from fplplus.core.types import ShapeError


def _stack(mc_maps) -> np.ndarray:
    maps = [np.asarray(m, dtype=np.float64) for m in mc_maps]
    if len(maps) < 2:
        raise ValueError("need at least 2 Monte Carlo maps")
    shape = maps[0].shape
    for m in maps[1:]:
        if m.shape != shape:
            raise ShapeError(f"inconsistent MC map shapes {shape} and {m.shape}")
    if len(shape) < 2 or shape[0] < 2:
        raise ShapeError(f"MC maps must be (C>=2, *spatial), got {shape}")
    return np.stack(maps)


def mean_probability(mc_maps) -> np.ndarray:
    return _stack(mc_maps).mean(axis=0)


def variance_map(mc_maps) -> np.ndarray:
    """Population variance of the foreground probability over the MC samples.

    With more than one foreground class, the per-class variances are averaged.
    """
    return _stack(mc_maps)[:, 1:].var(axis=0).mean(axis=0)


def normalized_entropy(pbar: np.ndarray) -> np.ndarray:
    """Voxelwise entropy in nats divided by ``ln C``, so it lies in ``[0, 1]``."""
    p = np.asarray(pbar, dtype=np.float64)
    safe = np.where(p > 0, p, 1.0)
    return -(p * np.log(safe)).sum(axis=0) / np.log(p.shape[0])


def image_uncertainty_raw(variance: np.ndarray) -> float:
    return float(np.sum(variance, dtype=np.float64))


def uncertain_region_size(pbar: np.ndarray, e: float = 0.2) -> int:
    """Number of voxels whose normalized entropy strictly exceeds ``e``."""
    if not 0 <= e < 1:
        raise ValueError(f"entropy threshold must be in [0, 1), got {e}")
    return int((normalized_entropy(pbar) > e).sum())


def image_uncertainty(v, eta) -> np.ndarray:
    """Size-aware uncertainty of every case in a cohort.

    ``u = v / eta`` where ``eta > 0``; cases without uncertain voxels receive the
    cohort maximum of those ratios. If no case has ``eta > 0`` every ``u`` is 0.
    """
    v = np.asarray(v, dtype=np.float64)
    eta = np.asarray(eta)
    if v.shape != eta.shape:
        raise ShapeError("v and eta must have one entry per case")
    has = eta > 0
    if not has.any():
        return np.zeros_like(v)
    ratio = np.zeros_like(v)
    ratio[has] = v[has] / eta[has]
    u_star = ratio[has].max()
    return np.where(has, ratio, u_star)


def image_weights(u) -> np.ndarray:
    """Rescale cohort uncertainties to weights: ``(u* - u) / (u* - u_min)``.

    ``u*`` is the cohort maximum. A cohort with no spread gets weight 1 everywhere.
    """
    u = np.asarray(u, dtype=np.float64)
    u_star, u_min = u.max(), u.min()
    if u_star == u_min:
        return np.ones_like(u)
    return (u_star - u) / (u_star - u_min)


def label_agreement(labels_a, labels_b) -> np.ndarray:
    """1.0 where the two label maps agree, 0.0 where they differ."""
    a = getattr(labels_a, "labels", labels_a)
    b = getattr(labels_b, "labels", labels_b)
    a, b = np.asarray(a), np.asarray(b)
    if a.shape != b.shape:
        raise ShapeError(f"label maps differ in shape: {a.shape} vs {b.shape}")
    return (a == b).astype(np.float32)
