"""Pseudo label records: generation, cohort weighting and persistence."""

from __future__ import annotations

import json
import zlib
from dataclasses import asdict, dataclass
from pathlib import Path

import numpy as np

from fplplus.core.types import LabelMap, Volume3D
from fplplus.data.io import read_labels, read_volume, write_labels, write_volume
from fplplus.dualnorm.network import DualDomainSegNet, mc_dropout_predict, predict_proba
from fplplus.pseudolabel import filtering
from fplplus.translate.cyclegan import translate_volume

RECORD_SUFFIX = ".plrec"


@dataclass(frozen=True)
class FilterConfig:
    K: int = 5
    e: float = 0.2
    # sliding-window size for every generator pass; None means whole-volume passes
    patch_dims: tuple[int, int, int] | None = None

    def __post_init__(self):
        if self.K < 2:
            raise ValueError("K must be >= 2")
        if not 0 <= self.e < 1:
            raise ValueError("e must lie in [0, 1)")
        if self.patch_dims is not None:
            object.__setattr__(self, "patch_dims", tuple(int(n) for n in self.patch_dims))

    def to_json(self) -> dict:
        return asdict(self)


@dataclass(frozen=True)
class PseudoLabelRecord:
    case_id: str
    pseudo_label: LabelMap
    pbar: np.ndarray
    variance: np.ndarray
    entropy: np.ndarray
    v: float
    eta: int
    u: float
    w: float
    consensus: np.ndarray
    K: int
    e: float

    @property
    def weight(self) -> np.ndarray:
        """Combined voxel weight ``A = M * w``."""
        return (self.consensus * np.float32(self.w)).astype(np.float32)


@dataclass(frozen=True)
class _CaseStats:
    case_id: str
    pseudo_label: LabelMap
    pbar: np.ndarray
    variance: np.ndarray
    entropy: np.ndarray
    v: float
    eta: int
    consensus: np.ndarray


def consensus_map(G: DualDomainSegNet, T_s, volume: Volume3D, target_labels: LabelMap | None = None, patch_dims=None) -> np.ndarray:
    """Agreement of the target-branch prediction on ``volume`` with the source-branch
    prediction on its translation to the source style. Both passes are deterministic."""
    if target_labels is None:
        target_labels = np.argmax(predict_proba(G, volume, "target", patch_dims), axis=0)
    translated = translate_volume(T_s, volume)
    if translated.dims != volume.dims:
        raise RuntimeError(f"translation changed dims from {volume.dims} to {translated.dims}")
    back = np.argmax(predict_proba(G, translated, "source", patch_dims), axis=0)
    return filtering.label_agreement(target_labels, back)


def case_seed(seed: int, case_id: str) -> int:
    return int(np.random.SeedSequence([seed, zlib.crc32(case_id.encode())]).generate_state(1)[0])


def _case_stats(case_id: str, volume: Volume3D, G: DualDomainSegNet, T_s, cfg: FilterConfig, seed: int) -> _CaseStats:
    maps = mc_dropout_predict(G, volume, "target", cfg.K, seed=case_seed(seed, case_id), patch_dims=cfg.patch_dims)
    pbar = filtering.mean_probability(maps)
    labels = LabelMap(np.argmax(pbar, axis=0), pbar.shape[0], volume.spacing)
    variance = filtering.variance_map(maps)
    entropy = filtering.normalized_entropy(pbar)
    return _CaseStats(
        case_id=case_id,
        pseudo_label=labels,
        pbar=pbar.astype(np.float32),
        variance=variance,
        entropy=entropy,
        v=filtering.image_uncertainty_raw(variance),
        eta=int((entropy > cfg.e).sum()),
        consensus=consensus_map(G, T_s, volume, patch_dims=cfg.patch_dims),
    )


def build_records(target_cases, G: DualDomainSegNet, T_s, cfg: FilterConfig = FilterConfig(), seed: int = 0) -> list[PseudoLabelRecord]:
    """Pseudo labels and reliability weights for the whole target training cohort.

    ``target_cases`` is a sequence of ``(case_id, volume)``. The cohort-level
    normalization of the uncertainty needs every case, so all cases are processed
    before any weight is assigned.
    """
    stats = []
    for cid, volume in target_cases:
        try:
            stats.append(_case_stats(cid, volume, G, T_s, cfg, seed))
        except Exception as exc:
            raise RuntimeError(f"pseudo label generation failed for case {cid!r}: {exc}") from exc
    if not stats:
        raise ValueError("no target cases given")
    u = filtering.image_uncertainty([s.v for s in stats], [s.eta for s in stats])
    w = filtering.image_weights(u)
    return [
        PseudoLabelRecord(
            case_id=s.case_id,
            pseudo_label=s.pseudo_label,
            pbar=s.pbar,
            variance=s.variance,
            entropy=s.entropy,
            v=s.v,
            eta=s.eta,
            u=float(ui),
            w=float(wi),
            consensus=s.consensus,
            K=cfg.K,
            e=cfg.e,
        )
        for s, ui, wi in zip(stats, u, w)
    ]


def save_record(record: PseudoLabelRecord, directory) -> Path:
    """Persist ``record`` as ``<directory>/<case_id>.plrec/``.

    ``pbar`` holds the total foreground probability; with more than
    two classes each class ``k`` is also stored as ``pbar_c<k>``.
    """
    path = Path(directory) / f"{record.case_id}{RECORD_SUFFIX}"
    spacing = record.pseudo_label.spacing
    write_labels(record.pseudo_label, path / "pseudo_label")
    write_volume(Volume3D(record.pbar[1:].sum(axis=0), spacing), path / "pbar")
    C = record.pbar.shape[0]
    if C > 2:
        for k in range(C):
            write_volume(Volume3D(record.pbar[k], spacing), path / f"pbar_c{k}")
    write_volume(Volume3D(record.weight, spacing), path / "A")
    write_labels(LabelMap(record.consensus.astype(np.uint8), 2, spacing), path / "consensus")
    write_volume(Volume3D(record.variance, spacing), path / "variance")
    meta = {
        "case_id": record.case_id,
        "v": record.v,
        "eta": record.eta,
        "u": record.u,
        "w": record.w,
        "K": record.K,
        "e": record.e,
        "num_classes": int(C),
    }
    (path / "meta.json").write_text(json.dumps(meta, indent=1))
    return path


def load_record(path) -> PseudoLabelRecord:
    path = Path(path)
    meta = json.loads((path / "meta.json").read_text())
    C = meta["num_classes"]
    labels = read_labels(path / "pseudo_label", C)
    if C > 2:
        pbar = np.stack([read_volume(path / f"pbar_c{k}").data for k in range(C)])
    else:
        fg = read_volume(path / "pbar").data
        pbar = np.stack([1.0 - fg, fg]).astype(np.float32)
    variance = read_volume(path / "variance").data
    consensus = read_labels(path / "consensus", 2).labels.astype(np.float32)
    return PseudoLabelRecord(
        case_id=meta["case_id"],
        pseudo_label=labels,
        pbar=pbar,
        variance=variance,
        entropy=filtering.normalized_entropy(pbar),
        v=meta["v"],
        eta=meta["eta"],
        u=meta["u"],
        w=meta["w"],
        consensus=consensus,
        K=meta["K"],
        e=meta["e"],
    )


def save_records(records, directory) -> list[Path]:
    return [save_record(r, directory) for r in records]


def load_records(directory) -> dict[str, PseudoLabelRecord]:
    return {r.case_id: r for r in (load_record(p) for p in sorted(Path(directory).glob(f"*{RECORD_SUFFIX}")))}
