"""Synthetic two-domain lesion phantoms.

Every case is an ellipsoidal "head" with smooth tissue texture, a dark elongated
structure (a ventricle stand-in) and one or more ellipsoidal lesions. The source
domain shows bright lesions on mid-grey tissue; the target domain squeezes the
lesion almost to tissue level, lifts the ventricle, warps intensities with a gamma
curve and adds stronger Gaussian noise. Source and target cases are drawn independently, so the two
cohorts are unpaired.

Generation is deterministic in ``(seed, domain, split, case number)``.
"""

from __future__ import annotations

import json
from dataclasses import asdict, dataclass, field
from pathlib import Path

import numpy as np
from scipy import ndimage

from fplplus.core.types import DomainTag, LabelMap, Volume3D
from fplplus.data.io import DatasetIndex, IndexRecord, write_labels, write_volume

MIN_DIM = 16
_SPLIT_CODE = {"train": 0, "val": 1, "test": 2}
_DOMAIN_CODE = {DomainTag.SOURCE: 0, DomainTag.TARGET: 1}


@dataclass(frozen=True)
class Appearance:
    """Intensity model of one domain, all values before gamma and noise."""

    background: float
    tissue: float
    lesion: float
    ventricle: float
    gamma: float = 1.0
    noise_sigma: float = 0.02
    texture: float = 0.05


SOURCE_APPEARANCE = Appearance(background=0.0, tissue=0.4, lesion=0.9, ventricle=0.15, gamma=1.0, noise_sigma=0.02)
TARGET_APPEARANCE = Appearance(background=0.05, tissue=0.5, lesion=0.58, ventricle=0.3, gamma=1.4, noise_sigma=0.05)


@dataclass(frozen=True)
class SyntheticSpec:
    num_train: int = 32
    num_val: int = 0
    num_test: int = 8
    dims: tuple[int, int, int] = (32, 32, 32)
    spacing: tuple[float, float, float] = (1.0, 1.0, 1.0)
    lesion_count: tuple[int, int] = (1, 2)
    lesion_radius: tuple[float, float] = (3.0, 5.0)
    source: Appearance = SOURCE_APPEARANCE
    target: Appearance = TARGET_APPEARANCE
    seed: int = 0

    def validate(self) -> None:
        if min(self.dims) < MIN_DIM:
            raise ValueError(f"every dimension must be >= {MIN_DIM}, got {self.dims}")
        lo, hi = self.lesion_count
        if lo < 0 or hi < lo:
            raise ValueError(f"invalid lesion count range {self.lesion_count}")
        rlo, rhi = self.lesion_radius
        if rlo <= 0 or rhi < rlo:
            raise ValueError(f"invalid lesion radius range {self.lesion_radius}")
        # lesions must fit inside the head ellipsoid with room to move
        if hi > 0 and 2 * rhi + 2 > 0.6 * min(self.dims):
            raise ValueError(f"lesion radius {rhi} too large for volume dims {self.dims}")
        if self.num_train < 0 or self.num_val < 0 or self.num_test < 0:
            raise ValueError("case counts must be non-negative")

    def appearance(self, domain: DomainTag) -> Appearance:
        return self.source if domain is DomainTag.SOURCE else self.target

    def to_json(self) -> dict:
        return asdict(self)

    @classmethod
    def from_json(cls, raw: dict) -> "SyntheticSpec":
        raw = dict(raw)
        for key in ("source", "target"):
            if isinstance(raw.get(key), dict):
                raw[key] = Appearance(**raw[key])
        for key in ("dims", "spacing", "lesion_count", "lesion_radius"):
            if key in raw:
                raw[key] = tuple(raw[key])
        return cls(**raw)


def _ellipsoid(grid, center, radii, rotation=None) -> np.ndarray:
    d = np.stack([g - c for g, c in zip(grid, center)], axis=-1)
    if rotation is not None:
        d = d @ rotation
    return ((d / np.asarray(radii)) ** 2).sum(axis=-1) <= 1.0


def _random_rotation(rng: np.random.Generator) -> np.ndarray:
    q, r = np.linalg.qr(rng.normal(size=(3, 3)))
    return q * np.sign(np.diag(r))


@dataclass
class Phantom:
    """Geometry of one case, shared by both intensity models."""

    head: np.ndarray
    ventricle: np.ndarray
    lesions: np.ndarray
    texture: np.ndarray = field(repr=False)


def make_phantom(spec: SyntheticSpec, rng: np.random.Generator) -> Phantom:
    dims = np.asarray(spec.dims, dtype=float)
    grid = np.meshgrid(*[np.arange(n, dtype=float) for n in spec.dims], indexing="ij")
    centre = (dims - 1) / 2 + rng.uniform(-1.5, 1.5, size=3)
    head_radii = dims * rng.uniform(0.40, 0.46, size=3)
    head = _ellipsoid(grid, centre, head_radii)

    v_radii = np.array([0.12, 0.06, 0.22]) * dims * rng.uniform(0.8, 1.2, size=3)
    v_centre = centre + rng.uniform(-0.06, 0.06, size=3) * dims
    ventricle = _ellipsoid(grid, v_centre, v_radii, _random_rotation(rng)) & head

    lesions = np.zeros(spec.dims, dtype=bool)
    n_lesions = int(rng.integers(spec.lesion_count[0], spec.lesion_count[1] + 1))
    rlo, rhi = spec.lesion_radius
    for _ in range(n_lesions):
        radii = rng.uniform(rlo, rhi, size=3)
        blob = None
        for _attempt in range(50):
            # uniform position inside the shrunken head, away from the ventricle
            c = centre + rng.uniform(-1, 1, size=3) * np.maximum(head_radii - radii.max() - 1, 1)
            if not _ellipsoid([np.array(x) for x in c], centre, head_radii - radii.max()):
                continue
            candidate = _ellipsoid(grid, c, radii, _random_rotation(rng)) & head
            if not (candidate & ventricle).any():
                blob = candidate
                break
        if blob is not None:
            lesions |= blob

    texture = ndimage.gaussian_filter(rng.normal(size=spec.dims), sigma=3.0)
    texture /= max(np.abs(texture).max(), 1e-8)
    return Phantom(head, ventricle, lesions, texture)


def render(phantom: Phantom, look: Appearance, rng: np.random.Generator) -> np.ndarray:
    img = np.full(phantom.head.shape, look.background, dtype=np.float64)
    img[phantom.head] = look.tissue
    img += look.texture * phantom.texture * phantom.head
    img[phantom.ventricle] = look.ventricle
    img[phantom.lesions] = look.lesion
    img = ndimage.gaussian_filter(img, sigma=0.7)
    img = np.clip(img, 0.0, 1.0) ** look.gamma
    img += rng.normal(scale=look.noise_sigma, size=img.shape)
    return img.astype(np.float32)


def synth_case(spec: SyntheticSpec, domain: DomainTag | str, split: str, number: int) -> tuple[Volume3D, LabelMap]:
    domain = DomainTag.parse(domain)
    seq = np.random.SeedSequence([spec.seed, _DOMAIN_CODE[domain], _SPLIT_CODE[split], number])
    rng = np.random.default_rng(seq)
    phantom = make_phantom(spec, rng)
    image = render(phantom, spec.appearance(domain), rng)
    return Volume3D(image, spec.spacing), LabelMap(phantom.lesions.astype(np.uint8), 2, spec.spacing)


def case_id(domain: DomainTag, split: str, number: int) -> str:
    prefix = "src" if domain is DomainTag.SOURCE else "tgt"
    return f"{prefix}_{split}_{number:03d}"


def generate_synthetic(spec: SyntheticSpec, root) -> DatasetIndex:
    """Write a synthetic dataset under ``root`` and return its index.

    Layout: ``images/``, ``labels/`` (labels referenced by the index), and
    ``oracle/`` holding ground truth for target training cases. Those oracle labels
    are never listed in ``index.json``; ``oracle.json`` maps case ids to them for
    analysis only.
    """
    spec.validate()
    root = Path(root)
    records: list[IndexRecord] = []
    oracle: dict[str, str] = {}
    plan = [
        (DomainTag.SOURCE, "train", spec.num_train),
        (DomainTag.TARGET, "train", spec.num_train),
        (DomainTag.TARGET, "val", spec.num_val),
        (DomainTag.TARGET, "test", spec.num_test),
    ]
    for domain, split, count in plan:
        for i in range(count):
            cid = case_id(domain, split, i)
            volume, labels = synth_case(spec, domain, split, i)
            vol_rel = f"images/{cid}"
            write_volume(volume, root / vol_rel)
            hidden = domain is DomainTag.TARGET and split == "train"
            lab_rel = f"{'oracle' if hidden else 'labels'}/{cid}"
            write_labels(labels, root / lab_rel)
            if hidden:
                oracle[cid] = lab_rel
            records.append(IndexRecord(cid, vol_rel, None if hidden else lab_rel, domain, split))
    index = DatasetIndex(records, root)
    index.save(root / "index.json")
    (root / "oracle.json").write_text(json.dumps(oracle, indent=1))
    (root / "synthetic_spec.json").write_text(json.dumps(spec.to_json(), indent=1))
    return index
