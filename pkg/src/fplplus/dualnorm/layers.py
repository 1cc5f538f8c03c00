"""Batch normalization with separate statistics and affine parameters per domain."""

from __future__ import annotations

import torch
import torch.nn as nn

from fplplus.core.types import DomainTag

DOMAINS = (DomainTag.SOURCE, DomainTag.TARGET)
_SUFFIX = {DomainTag.SOURCE: "s", DomainTag.TARGET: "t"}


class DualBatchNorm(nn.Module):
    """Per-domain batch norm over channel axis 1 of ``(N, C, *spatial)`` features.

    Each domain ``d`` owns ``gamma_d``, ``beta_d`` and running ``mean_d``/``var_d``.
    In training mode the current batch is normalized with its own (biased) statistics
    and only the routed domain's running statistics are updated::

        running <- (1 - momentum) * running + momentum * batch_stat

    In eval mode the routed domain's running statistics are used.
    """

    def __init__(self, num_features: int, momentum: float = 0.1, eps: float = 1e-5):
        super().__init__()
        if eps <= 0:
            raise ValueError("eps must be positive")
        self.num_features = num_features
        self.momentum = momentum
        self.eps = eps
        for d in DOMAINS:
            s = _SUFFIX[d]
            self.register_parameter(f"gamma_{s}", nn.Parameter(torch.ones(num_features)))
            self.register_parameter(f"beta_{s}", nn.Parameter(torch.zeros(num_features)))
            self.register_buffer(f"mean_{s}", torch.zeros(num_features))
            self.register_buffer(f"var_{s}", torch.ones(num_features))

    def branch(self, domain: DomainTag | str) -> tuple[torch.Tensor, torch.Tensor, torch.Tensor, torch.Tensor]:
        s = _SUFFIX[DomainTag.parse(domain)]
        return getattr(self, f"gamma_{s}"), getattr(self, f"beta_{s}"), getattr(self, f"mean_{s}"), getattr(self, f"var_{s}")

    def forward(self, z: torch.Tensor, domain: DomainTag | str) -> torch.Tensor:
        gamma, beta, running_mean, running_var = self.branch(domain)
        if z.ndim < 2 or z.shape[1] != self.num_features:
            raise ValueError(f"expected (N, {self.num_features}, ...) features, got {tuple(z.shape)}")
        shape = (1, -1) + (1,) * (z.ndim - 2)
        if self.training:
            if z.shape[0] < 2:
                raise ValueError("training-mode batch norm needs a batch of at least 2 samples")
            dims = (0,) + tuple(range(2, z.ndim))
            # centre on one sample per channel first so a constant batch normalizes to exactly 0
            ref = z[(0, slice(None)) + (0,) * (z.ndim - 2)].detach()
            shifted = z - ref.view(shape)
            offset = shifted.mean(dim=dims)
            var = shifted.var(dim=dims, unbiased=False)
            with torch.no_grad():
                running_mean.mul_(1 - self.momentum).add_(self.momentum * (ref + offset))
                running_var.mul_(1 - self.momentum).add_(self.momentum * var)
            centred = shifted - offset.view(shape)
        else:
            centred = z - running_mean.view(shape)
            var = running_var
        z_hat = centred / torch.sqrt(var.view(shape) + self.eps)
        return gamma.view(shape) * z_hat + beta.view(shape)

    def extra_repr(self) -> str:
        return f"{self.num_features}, momentum={self.momentum}, eps={self.eps}"


class MCDropout(nn.Module):
    """Dropout that can stay active while the rest of the network is in eval mode."""

    def __init__(self, p: float):
        super().__init__()
        if not 0 <= p < 1:
            raise ValueError("dropout rate must be in [0, 1)")
        self.p = p
        self.sampling = False

    def forward(self, x: torch.Tensor) -> torch.Tensor:
        active = (self.training or self.sampling) and self.p > 0
        return nn.functional.dropout(x, self.p, training=active)

    def extra_repr(self) -> str:
        return f"p={self.p}"
