"""Cross-domain data augmentation of the labeled source cohort."""

from __future__ import annotations

import json
from dataclasses import dataclass
from pathlib import Path

from fplplus.core.types import DomainTag, LabelMap, Volume3D
from fplplus.data.io import read_labels, read_volume, write_labels, write_volume
from fplplus.translate.cyclegan import TranslatorSet, translate_volume

# provenance suffix -> domain of the augmented image
PROVENANCE = {
    "": DomainTag.SOURCE,
    "_sp": DomainTag.SOURCE,
    "_spp": DomainTag.SOURCE,
    "_s2t": DomainTag.TARGET,
    "_s2at": DomainTag.TARGET,
}


@dataclass(frozen=True)
class AugmentedCase:
    origin: str
    provenance: str
    volume: Volume3D
    labels: LabelMap

    @property
    def case_id(self) -> str:
        return self.origin + self.provenance

    @property
    def domain(self) -> DomainTag:
        return PROVENANCE[self.provenance]


def cdda_augment(cases, tset: TranslatorSet) -> tuple[list[AugmentedCase], list[AugmentedCase]]:
    """Expand labeled source cases into source-style and target-style training sets.

    ``cases`` is an iterable of ``(case_id, volume, labels)``. For each case the
    source-style set receives the original, ``T_s(T_t(x))`` and ``T_s(T_at(x))``; the
    target-style set receives ``T_t(x)`` and ``T_at(x)``. All five share the
    original label map object.
    """
    ss: list[AugmentedCase] = []
    st: list[AugmentedCase] = []
    for cid, volume, labels in cases:
        if labels is None:
            raise ValueError(f"source case {cid!r} has no label; augmentation needs labeled cases")
        s2t = translate_volume(tset.T_t, volume)
        s2at = translate_volume(tset.T_at, volume)
        ss.append(AugmentedCase(cid, "", volume, labels))
        ss.append(AugmentedCase(cid, "_sp", translate_volume(tset.T_s, s2t), labels))
        ss.append(AugmentedCase(cid, "_spp", translate_volume(tset.T_s, s2at), labels))
        st.append(AugmentedCase(cid, "_s2t", s2t, labels))
        st.append(AugmentedCase(cid, "_s2at", s2at, labels))
    return ss, st


def write_augmented(ss: list[AugmentedCase], st: list[AugmentedCase], root) -> Path:
    """Write both augmented sets plus ``augmented.json`` listing every record.

    Each origin's label map is written once and referenced by all its records.
    """
    root = Path(root)
    records = []
    labels_written: set[str] = set()
    for group, cases in (("ss", ss), ("st", st)):
        for case in cases:
            vol_rel = f"{group}/{case.case_id}"
            lab_rel = f"labels/{case.origin}"
            write_volume(case.volume, root / vol_rel)
            if case.origin not in labels_written:
                write_labels(case.labels, root / lab_rel)
                labels_written.add(case.origin)
            records.append(
                {
                    "case_id": case.case_id,
                    "volume": vol_rel,
                    "label": lab_rel,
                    "domain": case.domain.value,
                    "split": "train",
                    "origin": case.origin,
                    "provenance": case.provenance,
                    "set": group,
                }
            )
    path = root / "augmented.json"
    path.write_text(json.dumps(records, indent=1))
    return path


def read_augmented(path, num_classes: int = 2) -> tuple[list[AugmentedCase], list[AugmentedCase]]:
    path = Path(path)
    root = path.parent
    ss: list[AugmentedCase] = []
    st: list[AugmentedCase] = []
    label_cache: dict[str, LabelMap] = {}
    for rec in json.loads(path.read_text()):
        if rec["label"] not in label_cache:
            label_cache[rec["label"]] = read_labels(root / rec["label"], num_classes)
        case = AugmentedCase(rec["origin"], rec["provenance"], read_volume(root / rec["volume"]), label_cache[rec["label"]])
        (ss if rec["set"] == "ss" else st).append(case)
    return ss, st
