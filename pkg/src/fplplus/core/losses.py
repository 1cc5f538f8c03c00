"""Soft Dice losses for dense segmentation.

Both losses take batched tensors of shape ``(N, C, *spatial)`` where channel 0 is
background. The Dice ratio is computed per sample and per foreground class, averaged
over foreground classes, and the resulting per-sample losses are averaged over the
batch. NumPy arrays and :class:`~fplplus.core.types.ProbabilityMap` values are
treated as a single ``(C, *spatial)`` sample.
"""

from __future__ import annotations

import numpy as np
import torch

from fplplus.core.types import ProbabilityMap, ShapeError, WeightMap

DICE_EPS = 1e-5


def _as_batch(x, name: str) -> torch.Tensor:
    # arrays and value types are single samples; tensors are already batched
    if isinstance(x, ProbabilityMap):
        x = x.probs
    elif isinstance(x, WeightMap):
        x = x.values
    if isinstance(x, np.ndarray):
        return torch.from_numpy(np.ascontiguousarray(x))[None]
    if not torch.is_tensor(x):
        raise TypeError(f"{name} must be a tensor, array or ProbabilityMap")
    return x


def _prepare(pred, target):
    pred = _as_batch(pred, "pred")
    target = _as_batch(target, "target")
    if pred.shape != target.shape:
        raise ShapeError(f"pred shape {tuple(pred.shape)} != target shape {tuple(target.shape)}")
    if pred.ndim < 3 or pred.shape[1] < 2:
        raise ShapeError(f"expected (N, C>=2, *spatial), got {tuple(pred.shape)}")
    return pred, target.to(pred.dtype)


def soft_dice_loss(pred, target_onehot, eps: float = DICE_EPS) -> torch.Tensor:
    """``1 - mean_fg (2 sum p g + eps) / (sum p + sum g + eps)``, averaged over the batch."""
    pred, target = _prepare(pred, target_onehot)
    dims = tuple(range(2, pred.ndim))
    p, g = pred[:, 1:], target[:, 1:]
    inter = (p * g).sum(dim=dims)
    denom = p.sum(dim=dims) + g.sum(dim=dims)
    ratio = (2.0 * inter + eps) / (denom + eps)
    return 1.0 - ratio.mean(dim=1).mean()


def weighted_dice_loss(pred, pseudo_onehot, weight, eps: float = DICE_EPS) -> torch.Tensor:
    """Dice loss where each voxel's contribution is scaled by ``weight``.

    ``weight`` has shape ``(N, *spatial)`` (``(*spatial)`` for an array) and
    is shared by all foreground classes. The ratio is not divided by the voxel count,
    so a perfect prediction gives a loss near zero regardless of volume size. An
    all-zero weight map yields exactly 1.
    """
    pred, target = _prepare(pred, pseudo_onehot)
    weight = _as_batch(weight, "weight").to(pred.dtype)
    if weight.shape != (pred.shape[0], *pred.shape[2:]):
        raise ShapeError(f"weight shape {tuple(weight.shape)} does not match pred {tuple(pred.shape)}")
    for name, t in (("pred", pred), ("target", target), ("weight", weight)):
        if torch.isnan(t).any():
            raise ValueError(f"{name} contains NaN")
    dims = tuple(range(2, pred.ndim))
    a = weight[:, None]
    p, g = pred[:, 1:], target[:, 1:]
    numer = (2.0 * a * p * g).sum(dim=dims)
    denom = (a * (p + g)).sum(dim=dims) + eps
    return 1.0 - (numer / denom).mean(dim=1).mean()
