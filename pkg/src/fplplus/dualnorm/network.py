"""Encoder-decoder segmentation network whose normalization is routed by domain."""

from __future__ import annotations

import math
from dataclasses import asdict, dataclass

import numpy as np
import torch
import torch.nn as nn
import torch.nn.functional as F

from fplplus.core.types import DomainTag, ProbabilityMap, ShapeError, Volume3D
from fplplus.data.sampling import pad_to
from fplplus.dualnorm.layers import DualBatchNorm, MCDropout

# per-axis (z, y, x) overlap of neighbouring sliding windows
DEFAULT_OVERLAP = (0.5, 0.25, 0.25)


@dataclass(frozen=True)
class SegNetConfig:
    """Architecture of :class:`DualDomainSegNet`.

    The first ``flat_levels`` resolution levels use in-plane ``1x3x3`` kernels and
    the deeper ones full ``3x3x3`` kernels. Dropout is applied in the two deepest
    encoder blocks and the two deepest decoder blocks.
    """

    in_channels: int = 1
    num_classes: int = 2
    base_width: int = 8
    levels: int = 4
    flat_levels: int = 2
    dropout: float = 0.3
    momentum: float = 0.1
    eps: float = 1e-5

    @property
    def downsample_factor(self) -> int:
        return 2 ** (self.levels - 1)

    def to_json(self) -> dict:
        return asdict(self)


class ConvBlock(nn.Module):
    def __init__(self, cin: int, cout: int, flat: bool, dropout: float, momentum: float, eps: float):
        super().__init__()
        k, pad = ((1, 3, 3), (0, 1, 1)) if flat else (3, 1)
        # replicate padding: zero padding of z-normalized patches draws a false bright rim
        # that patch-trained nets learn to rely on, and it breaks tiled vs whole agreement
        self.conv1 = nn.Conv3d(cin, cout, k, padding=pad, bias=False, padding_mode="replicate")
        self.bn1 = DualBatchNorm(cout, momentum, eps)
        self.conv2 = nn.Conv3d(cout, cout, k, padding=pad, bias=False, padding_mode="replicate")
        self.bn2 = DualBatchNorm(cout, momentum, eps)
        self.drop = MCDropout(dropout) if dropout > 0 else None

    def forward(self, x, domain):
        x = F.leaky_relu(self.bn1(self.conv1(x), domain), 0.01)
        if self.drop is not None:
            x = self.drop(x)
        return F.leaky_relu(self.bn2(self.conv2(x), domain), 0.01)


class DualDomainSegNet(nn.Module):
    """U-Net style network with shared convolutions and per-domain batch norm.

    ``forward(x, domain)`` returns logits of shape ``(N, C, D, H, W)``; every
    normalization site uses the statistics of ``domain``.
    """

    def __init__(self, config: SegNetConfig = SegNetConfig()):
        super().__init__()
        if config.levels < 2:
            raise ValueError("need at least two resolution levels")
        self.config = config
        widths = [config.base_width * 2**i for i in range(config.levels)]
        deep = {config.levels - 1, config.levels - 2}
        self.encoders = nn.ModuleList()
        for i, w in enumerate(widths):
            cin = config.in_channels if i == 0 else widths[i - 1]
            p = config.dropout if i in deep else 0.0
            self.encoders.append(ConvBlock(cin, w, i < config.flat_levels, p, config.momentum, config.eps))
        self.ups = nn.ModuleList()
        self.decoders = nn.ModuleList()
        dec_deep = {config.levels - 2, config.levels - 3}
        for i in reversed(range(config.levels - 1)):
            self.ups.append(nn.ConvTranspose3d(widths[i + 1], widths[i], 2, stride=2))
            p = config.dropout if i in dec_deep else 0.0
            self.decoders.append(ConvBlock(2 * widths[i], widths[i], i < config.flat_levels, p, config.momentum, config.eps))
        self.head = nn.Conv3d(widths[0], config.num_classes, 1)

    def check_input(self, x: torch.Tensor) -> None:
        f = self.config.downsample_factor
        for axis, name in zip(range(2, 5), "zyx"):
            if x.shape[axis] % f:
                raise ShapeError(f"input size {x.shape[axis]} along axis {name} is not divisible by {f}")

    def forward(self, x: torch.Tensor, domain: DomainTag | str) -> torch.Tensor:
        domain = DomainTag.parse(domain)
        self.check_input(x)
        skips = []
        for i, enc in enumerate(self.encoders):
            if i:
                x = F.max_pool3d(x, 2)
            x = enc(x, domain)
            skips.append(x)
        x = skips.pop()
        for up, dec in zip(self.ups, self.decoders):
            x = dec(torch.cat([up(x), skips.pop()], dim=1), domain)
        return self.head(x)

    # -- parameter partition -------------------------------------------------

    def bn_layers(self) -> dict[str, DualBatchNorm]:
        return {name: m for name, m in self.named_modules() if isinstance(m, DualBatchNorm)}

    def parameter_groups(self) -> dict[str, list[str]]:
        """Split parameter names into shared ``theta`` and per-domain ``bn_s``/``bn_t``."""
        groups: dict[str, list[str]] = {"theta": [], "bn_s": [], "bn_t": []}
        for name, _ in self.named_parameters():
            leaf = name.rsplit(".", 1)[-1]
            if leaf in ("gamma_s", "beta_s"):
                groups["bn_s"].append(name)
            elif leaf in ("gamma_t", "beta_t"):
                groups["bn_t"].append(name)
            else:
                groups["theta"].append(name)
        return groups

    def set_mc_dropout(self, active: bool) -> None:
        for m in self.modules():
            if isinstance(m, MCDropout):
                m.sampling = active


def _to_input(x, dtype) -> torch.Tensor:
    if isinstance(x, Volume3D):
        x = x.data
    if isinstance(x, np.ndarray):
        x = torch.from_numpy(np.ascontiguousarray(x))
    if x.ndim == 3:
        x = x[None, None]
    return x.to(dtype)


def _param_dtype(net: nn.Module) -> torch.dtype:
    return next(net.parameters()).dtype


def _forward_volume(net: DualDomainSegNet, xt: torch.Tensor, domain) -> torch.Tensor:
    # reflect-pad to a multiple of the downsampling factor, crop the output back
    f = net.config.downsample_factor
    dims = tuple(xt.shape[2:])
    target = [n + (-n) % f for n in dims]
    if list(dims) == target:
        return torch.softmax(net(xt, domain), dim=1)[0]
    arr, pads = pad_to(xt[0, 0].numpy(), target)
    padded = torch.from_numpy(np.ascontiguousarray(arr))[None, None]
    probs = torch.softmax(net(padded, domain), dim=1)[0]
    return probs[(slice(None),) + tuple(slice(a, a + n) for (a, _), n in zip(pads, dims))]


def window_starts(size: int, patch: int, overlap: float) -> list[int]:
    if patch >= size:
        return [0]
    stride = max(1, int(math.floor(patch * (1.0 - overlap))))
    starts = list(range(0, size - patch + 1, stride))
    if starts[-1] != size - patch:
        starts.append(size - patch)
    return starts


def _forward_tiled(net: DualDomainSegNet, xt: torch.Tensor, domain, patch_dims, overlap) -> torch.Tensor:
    # all windows go through the net as one batch; overlaps are averaged uniformly
    dims = tuple(xt.shape[2:])
    data, pads = pad_to(xt[0, 0].numpy(), patch_dims)
    full = data.shape
    grids = [window_starts(n, p, o) for n, p, o in zip(full, patch_dims, overlap)]
    windows = [
        tuple(slice(a, a + p) for a, p in zip(corner, patch_dims))
        for corner in ((z, y, x) for z in grids[0] for y in grids[1] for x in grids[2])
    ]
    batch = torch.from_numpy(np.stack([data[sl] for sl in windows]))[:, None].to(xt.dtype)
    probs = torch.softmax(net(batch, domain), dim=1).double()
    acc = torch.zeros((probs.shape[1], *full), dtype=torch.float64)
    count = torch.zeros(full, dtype=torch.float64)
    for sl, p in zip(windows, probs):
        acc[(slice(None),) + sl] += p
        count[sl] += 1
    out = acc / count
    return out[(slice(None),) + tuple(slice(a, a + n) for (a, _), n in zip(pads, dims))]


def _forward(net, xt, domain, patch_dims, overlap) -> torch.Tensor:
    if patch_dims is None:
        return _forward_volume(net, xt, domain)
    return _forward_tiled(net, xt, domain, tuple(patch_dims), overlap)


@torch.no_grad()
def predict_proba(net: DualDomainSegNet, x, domain: DomainTag | str, patch_dims=None, overlap=DEFAULT_OVERLAP) -> np.ndarray:
    """Deterministic eval-mode softmax for one volume; returns ``(C, D, H, W)``.

    Without ``patch_dims`` the whole volume is one forward pass; inputs whose size is
    not a multiple of the downsampling factor are reflect-padded and the output
    cropped back. With ``patch_dims`` the volume is covered by sliding windows of
    that size, which matches how patch-trained networks see their inputs.
    """
    was_training = net.training
    net.eval()
    try:
        return _forward(net, _to_input(x, _param_dtype(net)), domain, patch_dims, overlap).numpy()
    finally:
        net.train(was_training)


def segnet_forward(net: DualDomainSegNet, x, domain: DomainTag | str, mode: str = "eval") -> ProbabilityMap:
    """Softmax probabilities for a single patch or volume.

    ``mode`` is ``"eval"`` (running statistics, dropout off) or ``"train"`` (batch
    statistics of this input, running statistics updated, dropout on).
    """
    if mode not in ("train", "eval"):
        raise ValueError(f"mode must be 'train' or 'eval', got {mode!r}")
    xt = _to_input(x, _param_dtype(net))
    net.check_input(xt)
    if mode == "eval":
        return ProbabilityMap(predict_proba(net, xt, domain).astype(np.float64))
    net.train()
    with torch.no_grad():
        probs = torch.softmax(net(xt, domain), dim=1)
    return ProbabilityMap(probs[0].numpy().astype(np.float64))


@torch.no_grad()
def mc_dropout_predict(
    net: DualDomainSegNet, x, domain: DomainTag | str, K: int = 5, seed: int = 0, patch_dims=None, overlap=DEFAULT_OVERLAP
) -> list[np.ndarray]:
    """``K`` stochastic forward passes with dropout active and batch norm frozen.

    Returns a list of ``(C, D, H, W)`` probability arrays. Reproducible for a fixed
    ``seed``; the global torch RNG state is left untouched. ``patch_dims`` and
    ``overlap`` select sliding-window inference as in :func:`predict_proba`.
    """
    if K < 2:
        raise ValueError("MC dropout needs K >= 2 passes")
    was_training = net.training
    net.eval()
    net.set_mc_dropout(True)
    try:
        xt = _to_input(x, _param_dtype(net))
        with torch.random.fork_rng(devices=[]):
            torch.manual_seed(seed)
            return [_forward(net, xt, domain, patch_dims, overlap).numpy() for _ in range(K)]
    finally:
        net.set_mc_dropout(False)
        net.train(was_training)
