"""Patch-based optimization loop shared by the generator and the final segmentor."""

from __future__ import annotations

import logging
import math
from dataclasses import asdict, dataclass
from typing import Callable

import numpy as np
import torch

from fplplus.core.training import LossGuard, torch_seed
from fplplus.core.types import DomainTag
from fplplus.data.sampling import FOREGROUND_PROB, crop_patch, pad_to, patch_corner

log = logging.getLogger(__name__)


@dataclass(frozen=True)
class TrainConfig:
    epochs: int = 40
    lr: float = 1e-3
    beta1: float = 0.9
    batch_size: int = 4
    patch_dims: tuple[int, int, int] = (16, 16, 16)
    steps_per_epoch: int | None = None
    fg_prob: float = FOREGROUND_PROB
    seed: int = 0

    def to_json(self) -> dict:
        return asdict(self)


class PatchStream:
    """Random patch batches from one domain's cases.

    ``images`` are 3D arrays, ``labels`` integer arrays of the same dims and
    ``weights`` (optional) per-voxel float arrays cropped at the same corner.
    """

    def __init__(self, images, labels, domain: DomainTag | str, num_classes: int = 2, weights=None):
        if not images:
            raise ValueError("a patch stream needs at least one case")
        if len(labels) != len(images) or (weights is not None and len(weights) != len(images)):
            raise ValueError("images, labels and weights must have the same length")
        self.images = [np.asarray(a, dtype=np.float32) for a in images]
        self.labels = [np.asarray(a) for a in labels]
        self.weights = None if weights is None else [np.asarray(a, dtype=np.float32) for a in weights]
        self.domain = DomainTag.parse(domain)
        self.num_classes = num_classes

    def __len__(self) -> int:
        return len(self.images)

    def batch(self, rng: np.random.Generator, batch_size: int, patch_dims, fg_prob: float = FOREGROUND_PROB):
        xs, ys, ws = [], [], []
        for _ in range(batch_size):
            i = int(rng.integers(len(self.images)))
            img, _ = pad_to(self.images[i], patch_dims)
            lab, _ = pad_to(self.labels[i], patch_dims)
            corner = patch_corner(img.shape, patch_dims, rng, lab > 0, fg_prob)
            xs.append(crop_patch(img, corner, patch_dims))
            ys.append(crop_patch(lab, corner, patch_dims))
            if self.weights is not None:
                w, _ = pad_to(self.weights[i], patch_dims)
                ws.append(crop_patch(w, corner, patch_dims))
        x = torch.from_numpy(np.stack(xs)[:, None].copy())
        lab = torch.from_numpy(np.stack(ys).astype(np.int64))
        onehot = torch.nn.functional.one_hot(lab, self.num_classes).permute(0, 4, 1, 2, 3).float()
        w = torch.from_numpy(np.stack(ws).copy()) if ws else None
        return x, onehot, w


StepFn = Callable[[np.random.Generator], dict[str, torch.Tensor]]


def run_training(net: torch.nn.Module, config: TrainConfig, step_fn: StepFn, steps_per_epoch: int, stage: str, progress=None) -> list[dict]:
    """Minimize the sum of the loss terms returned by ``step_fn`` with Adam.

    Returns per-epoch means of every term and of their sum (``total``).
    """
    if config.epochs < 1:
        raise ValueError("epochs must be >= 1")
    rng = np.random.default_rng(config.seed)
    guard = LossGuard(stage)
    history: list[dict] = []
    params = [p for p in net.parameters() if p.requires_grad]
    opt = torch.optim.Adam(params, lr=config.lr, betas=(config.beta1, 0.999))
    net.train()
    with torch_seed(config.seed):
        for epoch in range(1, config.epochs + 1):
            sums: dict[str, float] = {}
            for step in range(steps_per_epoch):
                terms = step_fn(rng)
                total = sum(terms.values())
                values = {k: float(v.item()) for k, v in terms.items()}
                values["total"] = float(total.item())
                guard.check(epoch, step, **values)
                opt.zero_grad(set_to_none=True)
                total.backward()
                opt.step()
                for k, v in values.items():
                    sums[k] = sums.get(k, 0.0) + v
            record = {"epoch": epoch, **{k: v / steps_per_epoch for k, v in sums.items()}}
            history.append(record)
            log.info("%s epoch %d/%d %s", stage, epoch, config.epochs, record)
            if progress is not None:
                progress(record)
    net.eval()
    return history


def default_steps(config: TrainConfig, *streams: PatchStream) -> int:
    return config.steps_per_epoch or math.ceil(max(len(s) for s in streams) / config.batch_size)
