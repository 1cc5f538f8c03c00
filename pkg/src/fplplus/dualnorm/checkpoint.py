"""Segmentation network checkpoints.

The manifest records the architecture, class count, the names of every dual-BN
site and, per tensor, whether it belongs to the shared parameters ``theta``, to one
domain's affine parameters (``bn_s``/``bn_t``) or to one domain's running
statistics (``stats_s``/``stats_t``).
"""

from __future__ import annotations

from pathlib import Path

from fplplus.core.checkpoint import load_into, load_state, read_manifest, save_state
from fplplus.dualnorm.network import DualDomainSegNet, SegNetConfig

ARCH_NAME = "dual-bn-unet3d"


class IncompatibleCheckpointError(ValueError):
    def __init__(self, differences: dict):
        self.differences = differences
        detail = "; ".join(f"{k}: {a!r} != {b!r}" for k, (a, b) in differences.items())
        super().__init__(f"incompatible segmentation checkpoints ({detail})")


def tensor_groups(net: DualDomainSegNet) -> dict[str, str]:
    groups = {}
    for group, names in net.parameter_groups().items():
        for n in names:
            groups[n] = group
    for name, _ in net.named_buffers():
        leaf = name.rsplit(".", 1)[-1]
        groups[name] = "stats_s" if leaf.endswith("_s") else "stats_t"
    return groups


def manifest_for(net: DualDomainSegNet) -> dict:
    return {
        "arch": {"name": ARCH_NAME, **net.config.to_json()},
        "num_classes": net.config.num_classes,
        "bn_sites": sorted(net.bn_layers()),
        "groups": tensor_groups(net),
    }


def save_segnet(net: DualDomainSegNet, path, **extra) -> Path:
    return save_state(net.state_dict(), path, {**manifest_for(net), **extra})


def load_segnet(path) -> DualDomainSegNet:
    state, meta = load_state(path)
    arch = dict(meta["arch"])
    if arch.pop("name", ARCH_NAME) != ARCH_NAME:
        raise IncompatibleCheckpointError({"arch.name": (meta["arch"].get("name"), ARCH_NAME)})
    net = DualDomainSegNet(SegNetConfig(**arch))
    load_into(net, state)
    net.eval()
    return net


def compare_manifests(a: dict, b: dict) -> dict:
    """Fields that differ between two segmentation manifests."""
    diffs = {}
    for key in ("arch", "num_classes", "bn_sites", "groups"):
        if a.get(key) != b.get(key):
            diffs[key] = (a.get(key), b.get(key))
    return diffs


__all__ = [
    "IncompatibleCheckpointError",
    "compare_manifests",
    "load_segnet",
    "manifest_for",
    "read_manifest",
    "save_segnet",
]
