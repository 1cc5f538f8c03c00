"""Volume files and dataset indices.

A volume is stored as two files sharing a stem::

    <stem>.json   {"dims": [D, H, W], "spacing": [sz, sy, sx], "dtype": "float32" | "uint8",
                   "order": "zyx", "endian": "little"}
    <stem>.raw    payload, z slowest, little-endian, no padding

Label maps use ``"uint8"``. A dataset index is a JSON array of records with keys
``case_id``, ``volume``, ``label`` (nullable), ``domain`` and ``split``; paths are
stems relative to the index file.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from fplplus.core.types import DomainTag, LabelMap, Volume3D

HEADER_KEYS = {"dims", "spacing", "dtype", "order", "endian"}
_DTYPES = {"float32": np.dtype("<f4"), "uint8": np.dtype("u1")}
SPLITS = ("train", "val", "test")


class VolumeFormatError(ValueError):
    """Malformed volume header."""

    def __init__(self, message: str, offset: int | None = None):
        self.offset = offset
        if offset is not None:
            message = f"{message} (at byte offset {offset})"
        super().__init__(message)


class TruncatedVolumeError(VolumeFormatError):
    pass


class UnsupportedEncodingError(VolumeFormatError):
    pass


def _stem(path) -> Path:
    path = Path(path)
    if path.suffix in (".json", ".raw"):
        path = path.with_suffix("")
    return path


def _write(stem: Path, array: np.ndarray, spacing, dtype: str) -> None:
    stem.parent.mkdir(parents=True, exist_ok=True)
    header = {
        "dims": [int(n) for n in array.shape],
        "spacing": [float(s) for s in spacing],
        "dtype": dtype,
        "order": "zyx",
        "endian": "little",
    }
    payload = np.ascontiguousarray(array, dtype=_DTYPES[dtype]).tobytes(order="C")
    stem.with_suffix(".raw").write_bytes(payload)
    stem.with_suffix(".json").write_text(json.dumps(header))


def write_volume(volume: Volume3D, path) -> Path:
    """Write ``volume`` to ``<stem>.json`` + ``<stem>.raw`` and return the stem."""
    stem = _stem(path)
    _write(stem, volume.data, volume.spacing, "float32")
    return stem


def write_labels(labels: LabelMap, path) -> Path:
    stem = _stem(path)
    _write(stem, labels.labels, labels.spacing, "uint8")
    return stem


def read_header(path) -> dict:
    stem = _stem(path)
    text = stem.with_suffix(".json").read_bytes().decode("utf-8")
    try:
        header = json.loads(text)
    except json.JSONDecodeError as exc:
        raise VolumeFormatError(f"cannot parse header {stem}.json: {exc.msg}", len(text[: exc.pos].encode())) from None
    if not isinstance(header, dict) or set(header) != HEADER_KEYS:
        got = sorted(header) if isinstance(header, dict) else type(header).__name__
        raise VolumeFormatError(f"header keys must be {sorted(HEADER_KEYS)}, got {got}", 0)
    if header["endian"] != "little":
        raise UnsupportedEncodingError(f"only little-endian payloads are supported, got {header['endian']!r}")
    if header["order"] != "zyx":
        raise UnsupportedEncodingError(f"only 'zyx' order is supported, got {header['order']!r}")
    if header["dtype"] not in _DTYPES:
        raise UnsupportedEncodingError(f"unsupported dtype {header['dtype']!r}")
    dims = header["dims"]
    if len(dims) != 3 or not all(isinstance(n, int) and n >= 1 for n in dims):
        raise VolumeFormatError(f"dims must be three positive integers, got {dims!r}", text.find('"dims"'))
    return header


def _read(path, expected_dtype: str | None) -> tuple[np.ndarray, dict]:
    stem = _stem(path)
    header = read_header(stem)
    if expected_dtype is not None and header["dtype"] != expected_dtype:
        raise UnsupportedEncodingError(f"{stem}: expected dtype {expected_dtype!r}, got {header['dtype']!r}")
    dtype = _DTYPES[header["dtype"]]
    payload = stem.with_suffix(".raw").read_bytes()
    expected = int(np.prod(header["dims"])) * dtype.itemsize
    if len(payload) != expected:
        raise TruncatedVolumeError(
            f"{stem}.raw holds {len(payload)} bytes but header dims {header['dims']} need {expected}",
            min(len(payload), expected),
        )
    array = np.frombuffer(payload, dtype=dtype).reshape(header["dims"])
    return array.astype(dtype.newbyteorder("="), copy=True), header


def read_volume(path) -> Volume3D:
    array, header = _read(path, "float32")
    return Volume3D(array, tuple(header["spacing"]))


def read_labels(path, num_classes: int = 2) -> LabelMap:
    array, header = _read(path, "uint8")
    return LabelMap(array, num_classes, tuple(header["spacing"]))


@dataclass(frozen=True)
class IndexRecord:
    case_id: str
    volume: str
    label: str | None
    domain: DomainTag
    split: str

    def __post_init__(self):
        object.__setattr__(self, "domain", DomainTag.parse(self.domain))

    def to_json(self) -> dict:
        return {
            "case_id": self.case_id,
            "volume": self.volume,
            "label": self.label,
            "domain": self.domain.value,
            "split": self.split,
        }


@dataclass
class DatasetIndex:
    """Records of a two-domain dataset; paths are relative to ``root``."""

    records: list[IndexRecord] = field(default_factory=list)
    root: Path = Path(".")

    def validate(self) -> None:
        seen: dict[str, set[str]] = {s: set() for s in SPLITS}
        for rec in self.records:
            if rec.split not in SPLITS:
                raise ValueError(f"{rec.case_id}: unknown split {rec.split!r}")
            if rec.case_id in seen[rec.split]:
                raise ValueError(f"duplicate case_id {rec.case_id!r} in split {rec.split!r}")
            seen[rec.split].add(rec.case_id)
            if rec.split == "train" and rec.domain is DomainTag.SOURCE and rec.label is None:
                raise ValueError(f"source training case {rec.case_id!r} has no label")
            if rec.split == "train" and rec.domain is DomainTag.TARGET and rec.label is not None:
                raise ValueError(f"target training case {rec.case_id!r} must not carry a label")

    def select(self, domain: DomainTag | str, split: str) -> list[IndexRecord]:
        domain = DomainTag.parse(domain)
        return [r for r in self.records if r.domain is domain and r.split == split]

    def path(self, relative: str) -> Path:
        return self.root / relative

    def load_volume(self, rec: IndexRecord) -> Volume3D:
        return read_volume(self.path(rec.volume))

    def load_labels(self, rec: IndexRecord, num_classes: int = 2) -> LabelMap:
        if rec.label is None:
            raise ValueError(f"case {rec.case_id!r} has no label")
        return read_labels(self.path(rec.label), num_classes)

    def save(self, path) -> Path:
        path = Path(path)
        self.validate()
        path.parent.mkdir(parents=True, exist_ok=True)
        path.write_text(json.dumps([r.to_json() for r in self.records], indent=1))
        return path

    @classmethod
    def load(cls, path) -> "DatasetIndex":
        path = Path(path)
        raw = json.loads(path.read_text())
        records = [
            IndexRecord(r["case_id"], r["volume"], r["label"], DomainTag.parse(r["domain"]), r["split"])
            for r in raw
        ]
        index = cls(records, path.parent)
        index.validate()
        return index
