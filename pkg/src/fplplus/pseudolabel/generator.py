"""Training of the dual-domain pseudo label generator."""

from __future__ import annotations

import torch

from fplplus.core.losses import soft_dice_loss
from fplplus.core.training import torch_seed
from fplplus.dualnorm.network import DualDomainSegNet, SegNetConfig
from fplplus.dualnorm.trainer import PatchStream, TrainConfig, default_steps, run_training


def _stream(cases, domain, num_classes: int) -> PatchStream:
    return PatchStream([c.volume.data for c in cases], [c.labels.labels for c in cases], domain, num_classes)


def train_generator(
    ss_cases,
    st_cases,
    config: TrainConfig = TrainConfig(),
    net_config: SegNetConfig = SegNetConfig(),
    net: DualDomainSegNet | None = None,
    progress=None,
) -> tuple[DualDomainSegNet, list[dict]]:
    """Fit the generator on source-style and target-style augmented cases.

    Every step draws one batch from each set; the source-style batch is routed
    through the source batch norm and the target-style batch through the target one,
    and the two Dice losses are summed with equal weight. Either set may be empty,
    in which case that domain's branch is never touched. Returns the trained network
    and per-epoch loss history (``dice_s``, ``dice_t``, ``total``).
    """
    if not ss_cases and not st_cases:
        raise ValueError("generator training needs at least one non-empty training set")
    for c in [*ss_cases, *st_cases]:
        if c.labels is None:
            raise ValueError(f"case {c.case_id!r} is unlabeled")
    if net is None:
        with torch_seed(config.seed):
            net = DualDomainSegNet(net_config)
    C = net.config.num_classes
    streams = {}
    if ss_cases:
        streams["dice_s"] = _stream(ss_cases, "source", C)
    if st_cases:
        streams["dice_t"] = _stream(st_cases, "target", C)

    def step(rng) -> dict[str, torch.Tensor]:
        terms = {}
        for name, stream in streams.items():
            x, y, _ = stream.batch(rng, config.batch_size, config.patch_dims, config.fg_prob)
            probs = torch.softmax(net(x, stream.domain), dim=1)
            terms[name] = soft_dice_loss(probs, y)
        return terms

    steps = default_steps(config, *streams.values())
    history = run_training(net, config, step, steps, "train-generator", progress)
    return net, history
