"""Adversarial and cycle-consistency objectives."""

from __future__ import annotations

import torch

PROB_CLAMP = 1e-6
GAN_MODES = ("log", "lsgan")


def _clamp(p: torch.Tensor) -> torch.Tensor:
    return p.clamp(PROB_CLAMP, 1.0 - PROB_CLAMP)


def gan_objective(d_real: torch.Tensor, d_fake: torch.Tensor) -> torch.Tensor:
    """``E[log D(real)] + E[log(1 - D(fake))]``, the quantity the discriminator maximizes."""
    return torch.log(_clamp(d_real)).mean() + torch.log(1.0 - _clamp(d_fake)).mean()


def discriminator_loss(d_real: torch.Tensor, d_fake: torch.Tensor, mode: str = "log") -> torch.Tensor:
    if mode == "log":
        return -gan_objective(d_real, d_fake)
    if mode == "lsgan":
        return 0.5 * (((d_real - 1.0) ** 2).mean() + (d_fake**2).mean())
    raise ValueError(f"unknown GAN mode {mode!r}; expected one of {GAN_MODES}")


def generator_loss(d_fake: torch.Tensor, mode: str = "log") -> torch.Tensor:
    """Non-saturating generator term ``-E[log D(fake)]`` (or its least-squares analogue)."""
    if mode == "log":
        return -torch.log(_clamp(d_fake)).mean()
    if mode == "lsgan":
        return ((d_fake - 1.0) ** 2).mean()
    raise ValueError(f"unknown GAN mode {mode!r}; expected one of {GAN_MODES}")


def adversarial_loss(disc, real: torch.Tensor, fake: torch.Tensor) -> torch.Tensor:
    """Evaluate the GAN objective of ``disc`` (a callable returning probabilities)."""
    if len(real) == 0 or len(fake) == 0:
        raise ValueError("adversarial loss needs non-empty real and fake batches")
    return gan_objective(disc(real), disc(fake))


def cycle_loss(T_s, T_t, source_batch: torch.Tensor, target_batch: torch.Tensor) -> torch.Tensor:
    """Mean absolute reconstruction error of both translation cycles, summed."""
    if len(source_batch) == 0 or len(target_batch) == 0:
        raise ValueError("cycle loss needs non-empty batches")
    rec_s = T_s(T_t(source_batch))
    rec_t = T_t(T_s(target_batch))
    return (rec_s - source_batch).abs().mean() + (rec_t - target_batch).abs().mean()
