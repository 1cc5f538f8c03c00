"""Helpers shared by the training loops."""

from __future__ import annotations

import contextlib
import math

import torch


class TrainingDivergedError(RuntimeError):
    """A loss became NaN or infinite."""

    def __init__(self, stage: str, epoch: int, step: int, losses: dict, last_finite: dict | None):
        self.stage, self.epoch, self.step = stage, epoch, step
        self.losses, self.last_finite = losses, last_finite
        super().__init__(
            f"[{stage}] non-finite loss at epoch {epoch}, step {step}: {losses}; "
            f"last finite losses: {last_finite}"
        )


class LossGuard:
    """Tracks the last finite loss values and raises on the first non-finite one."""

    def __init__(self, stage: str):
        self.stage = stage
        self.last_finite: dict | None = None

    def check(self, epoch: int, step: int, **losses: float) -> None:
        if all(math.isfinite(v) for v in losses.values()):
            self.last_finite = dict(losses, epoch=epoch, step=step)
            return
        raise TrainingDivergedError(self.stage, epoch, step, losses, self.last_finite)


@contextlib.contextmanager
def torch_seed(seed: int):
    """Seed torch's CPU generator for the duration of the block, restoring it afterwards."""
    with torch.random.fork_rng(devices=[]):
        torch.manual_seed(seed)
        yield
