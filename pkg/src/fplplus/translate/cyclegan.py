"""Unpaired slice-wise translator training and volume translation."""

from __future__ import annotations

import copy
import logging
import math
from dataclasses import asdict, dataclass, field
from pathlib import Path

import numpy as np
import torch

from fplplus.core.checkpoint import load_into, load_state, save_state
from fplplus.core.training import LossGuard, torch_seed
from fplplus.core.types import Volume3D
from fplplus.translate.losses import discriminator_loss, generator_loss
from fplplus.translate.networks import DiscriminatorConfig, DiscriminatorNet, TranslatorConfig, TranslatorNet

log = logging.getLogger(__name__)

COMPONENTS = ("T_s", "T_t", "T_at", "D_s", "D_t")


@dataclass(frozen=True)
class CycleGANConfig:
    epochs: int = 15
    lambda_cyc: float = 10.0
    lr: float = 2e-4
    beta1: float = 0.5
    batch_size: int = 8
    steps_per_epoch: int | None = None
    gan_mode: str = "log"
    translator: TranslatorConfig = TranslatorConfig()
    discriminator: DiscriminatorConfig = DiscriminatorConfig()
    seed: int = 0

    def to_json(self) -> dict:
        return asdict(self)


def auxiliary_epoch(epochs: int) -> int:
    """Epoch whose translator snapshot becomes the auxiliary translator: ceil(2E/3)."""
    return math.ceil(2 * epochs / 3)


@dataclass
class TranslatorSet:
    T_s: TranslatorNet
    T_t: TranslatorNet
    T_at: TranslatorNet
    D_s: DiscriminatorNet
    D_t: DiscriminatorNet
    epoch: int
    aux_epoch: int
    history: list[dict] = field(default_factory=list)

    def __post_init__(self):
        if self.aux_epoch >= self.epoch:
            raise ValueError(f"auxiliary epoch {self.aux_epoch} must precede the final epoch {self.epoch}")
        if self.T_at.config != self.T_t.config:
            raise ValueError("auxiliary translator must share the target translator's architecture")

    def component_epoch(self, name: str) -> int:
        return self.aux_epoch if name == "T_at" else self.epoch

    def save(self, directory) -> Path:
        directory = Path(directory)
        for name in COMPONENTS:
            net = getattr(self, name)
            save_state(
                net.state_dict(),
                directory / name,
                {"component": name, "epoch": self.component_epoch(name), "arch": net.config.to_json()},
            )
        return directory

    @classmethod
    def load(cls, directory) -> "TranslatorSet":
        directory = Path(directory)
        nets, epochs = {}, {}
        for name in COMPONENTS:
            state, meta = load_state(directory / name)
            if meta["component"] != name:
                raise ValueError(f"{directory / name}: manifest names component {meta['component']!r}")
            if name.startswith("T"):
                net = TranslatorNet(TranslatorConfig(**meta["arch"]))
            else:
                net = DiscriminatorNet(DiscriminatorConfig(**meta["arch"]))
            load_into(net, state)
            net.eval()
            nets[name], epochs[name] = net, meta["epoch"]
        return cls(**nets, epoch=epochs["T_t"], aux_epoch=epochs["T_at"])

    @staticmethod
    def exists(directory) -> bool:
        directory = Path(directory)
        return all((directory / f"{n}.json").exists() and (directory / f"{n}.bin").exists() for n in COMPONENTS)


def _as_slices(x) -> torch.Tensor:
    x = torch.as_tensor(np.ascontiguousarray(x), dtype=torch.float32)
    if x.ndim == 3:
        x = x[:, None]
    if x.ndim != 4 or x.shape[1] != 1 or len(x) == 0:
        raise ValueError(f"expected a non-empty (N, H, W) or (N, 1, H, W) slice stack, got {tuple(x.shape)}")
    return x


def volume_slices(volumes) -> np.ndarray:
    """Stack the axial slices of several volumes into an ``(N, H, W)`` pool."""
    return np.concatenate([(v.data if isinstance(v, Volume3D) else np.asarray(v)) for v in volumes], axis=0)


def train_cyclegan(source_slices, target_slices, config: CycleGANConfig = CycleGANConfig(), progress=None) -> TranslatorSet:
    """Train both translators and discriminators on unpaired slice pools.

    Each step updates the translators on ``L_gan^t + L_gan^s + lambda_cyc * L_cyc``
    and then both discriminators. Batches are drawn uniformly from each pool. The
    target translator after epoch ``ceil(2E/3)`` is kept as the auxiliary translator.
    """
    if config.epochs < 3:
        raise ValueError(f"translator training needs at least 3 epochs, got {config.epochs}")
    xs_all, xt_all = _as_slices(source_slices), _as_slices(target_slices)
    steps = config.steps_per_epoch or math.ceil(max(len(xs_all), len(xt_all)) / config.batch_size)
    aux_at = auxiliary_epoch(config.epochs)
    rng = np.random.default_rng(config.seed)
    guard = LossGuard("translate")
    history: list[dict] = []

    with torch_seed(config.seed):
        T_s, T_t = TranslatorNet(config.translator), TranslatorNet(config.translator)
        D_s, D_t = DiscriminatorNet(config.discriminator), DiscriminatorNet(config.discriminator)
        betas = (config.beta1, 0.999)
        opt_g = torch.optim.Adam([*T_s.parameters(), *T_t.parameters()], lr=config.lr, betas=betas)
        opt_d = torch.optim.Adam([*D_s.parameters(), *D_t.parameters()], lr=config.lr, betas=betas)
        T_at = None
        for epoch in range(1, config.epochs + 1):
            sums = {"gan_t": 0.0, "gan_s": 0.0, "cyc": 0.0, "disc": 0.0}
            for step in range(steps):
                xs = xs_all[rng.integers(0, len(xs_all), config.batch_size)]
                xt = xt_all[rng.integers(0, len(xt_all), config.batch_size)]

                fake_t, fake_s = T_t(xs), T_s(xt)
                gan_t = generator_loss(D_t(fake_t), config.gan_mode)
                gan_s = generator_loss(D_s(fake_s), config.gan_mode)
                cyc = (T_s(fake_t) - xs).abs().mean() + (T_t(fake_s) - xt).abs().mean()
                g_loss = gan_t + gan_s + config.lambda_cyc * cyc
                opt_g.zero_grad(set_to_none=True)
                g_loss.backward()
                opt_g.step()

                d_loss = discriminator_loss(D_t(xt), D_t(fake_t.detach()), config.gan_mode) + discriminator_loss(
                    D_s(xs), D_s(fake_s.detach()), config.gan_mode
                )
                opt_d.zero_grad(set_to_none=True)
                d_loss.backward()
                opt_d.step()

                values = {"gan_t": gan_t.item(), "gan_s": gan_s.item(), "cyc": cyc.item(), "disc": d_loss.item()}
                guard.check(epoch, step, **values)
                for k, v in values.items():
                    sums[k] += v
            record = {"epoch": epoch, **{k: v / steps for k, v in sums.items()}}
            history.append(record)
            log.info("translate epoch %d/%d %s", epoch, config.epochs, record)
            if progress is not None:
                progress(record)
            if epoch == aux_at:
                T_at = copy.deepcopy(T_t)

    for net in (T_s, T_t, T_at, D_s, D_t):
        net.eval()
    return TranslatorSet(T_s, T_t, T_at, D_s, D_t, epoch=config.epochs, aux_epoch=aux_at, history=history)


@torch.no_grad()
def translate_volume(translator, volume: Volume3D, batch_size: int = 64) -> Volume3D:
    """Apply a slice translator to every axial slice independently and restack.

    ``translator`` is any callable mapping ``(N, 1, H, W)`` tensors to the same shape.
    """
    if isinstance(translator, torch.nn.Module):
        translator.eval()
    x = torch.from_numpy(volume.data)[:, None]
    out = [translator(x[i : i + batch_size]) for i in range(0, len(x), batch_size)]
    data = torch.cat(out)[:, 0].numpy()
    if data.shape != volume.dims:
        raise RuntimeError(f"translator changed slice dims from {volume.dims} to {data.shape}")
    return volume.with_data(data)

