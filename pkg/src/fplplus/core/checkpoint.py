"""Flat binary tensor blobs with a JSON manifest.

``<stem>.bin`` is the concatenation of every tensor in ``state_dict`` order as
little-endian float32; ``<stem>.json`` carries the caller's manifest plus
``param_names`` and ``param_shapes`` describing the blob layout.
"""

from __future__ import annotations

import json
from pathlib import Path

import numpy as np
import torch


def _stem(path) -> Path:
    path = Path(path)
    return path.with_suffix("") if path.suffix in (".json", ".bin") else path


def save_state(state: dict[str, torch.Tensor], path, manifest: dict) -> Path:
    stem = _stem(path)
    stem.parent.mkdir(parents=True, exist_ok=True)
    names = list(state)
    arrays = [state[n].detach().cpu().numpy().astype("<f4") for n in names]
    blob = b"".join(np.ascontiguousarray(a).tobytes() for a in arrays)
    meta = dict(manifest)
    meta["param_names"] = names
    meta["param_shapes"] = [list(a.shape) for a in arrays]
    stem.with_suffix(".bin").write_bytes(blob)
    stem.with_suffix(".json").write_text(json.dumps(meta, indent=1))
    return stem


def read_manifest(path) -> dict:
    return json.loads(_stem(path).with_suffix(".json").read_text())


def load_state(path) -> tuple[dict[str, torch.Tensor], dict]:
    stem = _stem(path)
    meta = read_manifest(stem)
    flat = np.frombuffer(stem.with_suffix(".bin").read_bytes(), dtype="<f4")
    total = sum(int(np.prod(s)) for s in meta["param_shapes"])
    if flat.size != total:
        raise ValueError(f"{stem}.bin holds {flat.size} values, manifest describes {total}")
    state, pos = {}, 0
    for name, shape in zip(meta["param_names"], meta["param_shapes"]):
        n = int(np.prod(shape))
        state[name] = torch.from_numpy(flat[pos : pos + n].astype(np.float32).reshape(shape))
        pos += n
    return state, meta


def load_into(module: torch.nn.Module, state: dict[str, torch.Tensor]) -> None:
    own = module.state_dict()
    converted = {k: v.to(own[k].dtype) if k in own else v for k, v in state.items()}
    module.load_state_dict(converted, strict=True)
