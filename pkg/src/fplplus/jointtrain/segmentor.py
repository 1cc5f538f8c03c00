"""Final segmentor: initialization from the generator, joint training and inference."""

from __future__ import annotations

import copy
from pathlib import Path

import numpy as np
import torch

from fplplus.core.losses import soft_dice_loss, weighted_dice_loss
from fplplus.core.types import DomainTag, LabelMap, Volume3D
from fplplus.dualnorm.checkpoint import (
    IncompatibleCheckpointError,
    compare_manifests,
    load_segnet,
    manifest_for,
)
from fplplus.dualnorm.network import DEFAULT_OVERLAP, DualDomainSegNet, SegNetConfig, predict_proba
from fplplus.dualnorm.trainer import PatchStream, TrainConfig, default_steps, run_training

def init_segmentor_from_generator(generator, expected: SegNetConfig | None = None) -> DualDomainSegNet:
    """Copy every parameter and running statistic of ``generator`` into a new network.

    ``generator`` is a network or a checkpoint path. When ``expected`` is given, the
    generator's manifest must match a network built from it.
    """
    G = load_segnet(generator) if isinstance(generator, (str, Path)) else generator
    if expected is not None:
        diffs = compare_manifests(manifest_for(G), manifest_for(DualDomainSegNet(expected)))
        if diffs:
            raise IncompatibleCheckpointError(diffs)
    S = copy.deepcopy(G)
    S.eval()
    return S


def train_final_segmentor(
    source_cases,
    target_cases,
    records,
    S: DualDomainSegNet,
    config: TrainConfig = TrainConfig(epochs=20),
    use_source: bool = True,
    use_weights: bool = True,
    progress=None,
) -> tuple[DualDomainSegNet, list[dict]]:
    """Train ``S`` on labeled source cases and weighted pseudo-labeled target cases.

    ``source_cases`` holds ``(volume, labels)`` pairs, ``target_cases`` holds
    ``(case_id, volume)`` pairs and ``records`` maps case ids to pseudo label records.
    Each step sums the source Dice loss (source branch) and the weighted Dice loss on
    a target batch (target branch), the weight patch being the crop of the case's
    ``A`` map. ``use_source=False`` drops the source term and ``use_weights=False``
    replaces ``A`` by ones; both exist for ablations. ``S`` is trained in place.
    """
    C = S.config.num_classes
    missing = [cid for cid, _ in target_cases if cid not in records]
    if missing:
        raise ValueError(f"no pseudo label record for target cases {missing}")
    if not target_cases:
        raise ValueError("joint training needs target cases")
    recs = [records[cid] for cid, _ in target_cases]
    weights = [r.weight if use_weights else np.ones(r.pseudo_label.dims, np.float32) for r in recs]
    target = PatchStream([v.data for _, v in target_cases], [r.pseudo_label.labels for r in recs], "target", C, weights)
    streams = [target]
    source = None
    if use_source:
        source = PatchStream([v.data for v, _ in source_cases], [lab.labels for _, lab in source_cases], "source", C)
        streams.append(source)

    def step(rng) -> dict[str, torch.Tensor]:
        terms = {}
        if source is not None:
            x, y, _ = source.batch(rng, config.batch_size, config.patch_dims, config.fg_prob)
            terms["dice_s"] = soft_dice_loss(torch.softmax(S(x, DomainTag.SOURCE), dim=1), y)
        x, y, a = target.batch(rng, config.batch_size, config.patch_dims, config.fg_prob)
        terms["wdice_t"] = weighted_dice_loss(torch.softmax(S(x, DomainTag.TARGET), dim=1), y, a)
        return terms

    history = run_training(S, config, step, default_steps(config, *streams), "train-segmentor", progress)
    return S, history


def infer_proba(S: DualDomainSegNet, volume: Volume3D, patch_dims, domain=DomainTag.TARGET, overlap=DEFAULT_OVERLAP) -> np.ndarray:
    """Sliding-window softmax with uniform averaging where windows overlap."""
    return predict_proba(S, volume, domain, patch_dims, overlap)


def infer(S: DualDomainSegNet, volume: Volume3D, patch_dims, domain=DomainTag.TARGET, overlap=DEFAULT_OVERLAP) -> LabelMap:
    """Label a whole volume with the target-domain branch of ``S``."""
    probs = infer_proba(S, volume, patch_dims, domain, overlap)
    return LabelMap(np.argmax(probs, axis=0), S.config.num_classes, volume.spacing)
