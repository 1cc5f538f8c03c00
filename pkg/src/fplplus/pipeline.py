"""Stage runners operating on a work directory.

Layout under the work directory::

    data/        synthetic dataset (index.json, images/, labels/, oracle/)
    translate/   checkpoints/ (T_s, T_t, T_at, D_s, D_t) and augmented/
    generator/   G checkpoint
    records/     <case_id>.plrec/ pseudo label records
    segmentor/   S checkpoint
    infer/       predicted label maps and per-case metric JSON
    eval/        metrics.csv, summary.json, dice.png

Every stage writes ``<stage>/stage.json`` with its config hash, seed, dataset hash,
wall time, loss history and the SHA-256 of every artifact it produced.
"""

from __future__ import annotations

import csv
import hashlib
import json
import logging
import shutil
import time
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from fplplus.config import PipelineConfig, file_digest, stage_seed
from fplplus.core.metrics import assd, dice_score
from fplplus.core.training import TrainingDivergedError, torch_seed
from fplplus.core.types import DomainTag, LabelMap, Volume3D
from fplplus.data.io import DatasetIndex, read_labels, write_labels
from fplplus.data.preprocess import crop_to_roi, label_bbox, trim_slices, znorm
from fplplus.data.synthetic import SyntheticSpec, generate_synthetic
from fplplus.dualnorm.checkpoint import load_segnet, save_segnet
from fplplus.dualnorm.network import DualDomainSegNet, SegNetConfig
from fplplus.dualnorm.trainer import TrainConfig
from fplplus.jointtrain.segmentor import infer, init_segmentor_from_generator, train_final_segmentor
from fplplus.pseudolabel.generator import train_generator
from fplplus.pseudolabel.records import FilterConfig, build_records, load_records, save_records
from fplplus.translate.cdda import cdda_augment, read_augmented, write_augmented
from fplplus.translate.cyclegan import CycleGANConfig, TranslatorSet, train_cyclegan, volume_slices
from fplplus.translate.networks import DiscriminatorConfig, TranslatorConfig

log = logging.getLogger(__name__)

STAGES = ("synth", "translate", "train-generator", "build-records", "train-segmentor", "infer", "eval")
# config sections each stage's artifacts depend on
STAGE_SECTIONS = {
    "synth": ("synth",),
    "translate": ("synth", "preprocess", "translate"),
    "train-generator": ("synth", "preprocess", "translate", "net", "generator"),
    "build-records": ("synth", "preprocess", "translate", "net", "generator", "records"),
    "train-segmentor": ("synth", "preprocess", "translate", "net", "generator", "records", "segmentor"),
    "infer": ("synth", "preprocess", "translate", "net", "generator", "records", "segmentor", "infer"),
    "eval": ("synth", "preprocess", "translate", "net", "generator", "records", "segmentor", "infer"),
}
STAGE_DIRS = {
    "synth": "data",
    "translate": "translate",
    "train-generator": "generator",
    "build-records": "records",
    "train-segmentor": "segmentor",
    "infer": "infer",
    "eval": "eval",
}


class MissingStageError(RuntimeError):
    def __init__(self, stage: str, missing: Path):
        self.stage = stage
        super().__init__(f"missing output of stage '{stage}': {missing} (run `fplplus {stage}` first)")


class StageError(RuntimeError):
    pass


@dataclass
class Workspace:
    root: Path

    def __post_init__(self):
        self.root = Path(self.root)

    def dir(self, stage: str) -> Path:
        return self.root / STAGE_DIRS[stage]

    @property
    def index_path(self) -> Path:
        return self.dir("synth") / "index.json"

    def stage_log(self, stage: str) -> Path:
        return self.dir(stage) / "stage.json"

    def read_log(self, stage: str) -> dict | None:
        p = self.stage_log(stage)
        return json.loads(p.read_text()) if p.exists() else None

    def require(self, stage: str, path: Path) -> Path:
        if not path.exists():
            raise MissingStageError(stage, path)
        return path


def artifact_hashes(directory: Path) -> dict[str, str]:
    out = {}
    for p in sorted(directory.rglob("*")):
        if p.is_file() and p.name != "stage.json":
            out[str(p.relative_to(directory))] = hashlib.sha256(p.read_bytes()).hexdigest()
    return out


def dataset_hash(ws: Workspace) -> str:
    index = DatasetIndex.load(ws.require("synth", ws.index_path))
    paths = [ws.index_path]
    for rec in index.records:
        for rel in (rec.volume, rec.label):
            if rel is not None:
                paths += [index.path(rel).with_suffix(".json"), index.path(rel).with_suffix(".raw")]
    return file_digest(paths)


def _write_log(ws: Workspace, stage: str, cfg: PipelineConfig, started: float, history=None, **extra) -> dict:
    entry = {
        "stage": stage,
        "status": "complete",
        "config_hash": cfg.stage_hash(*STAGE_SECTIONS[stage]),
        "seed": stage_seed(cfg.seed, stage),
        "root_seed": cfg.seed,
        "dataset_hash": dataset_hash(ws),
        "wall_time_s": round(time.time() - started, 3),
        "history": history or [],
        **extra,
    }
    entry["artifacts"] = artifact_hashes(ws.dir(stage))
    ws.stage_log(stage).write_text(json.dumps(entry, indent=1))
    return entry


def _resumable(ws: Workspace, stage: str, cfg: PipelineConfig) -> dict | None:
    """The stage log if the stage completed with this config and its artifacts are intact."""
    entry = ws.read_log(stage)
    if not entry or entry.get("status") != "complete":
        return None
    if entry.get("config_hash") != cfg.stage_hash(*STAGE_SECTIONS[stage]):
        return None
    if artifact_hashes(ws.dir(stage)) != entry.get("artifacts"):
        return None
    return entry


def _prepare_dir(ws: Workspace, stage: str, force: bool) -> Path:
    d = ws.dir(stage)
    if d.exists() and any(d.iterdir()):
        if not force:
            raise StageError(f"output directory {d} is not empty; pass --force to overwrite or --resume to reuse")
        shutil.rmtree(d)
    d.mkdir(parents=True, exist_ok=True)
    return d


# -- data loading ----------------------------------------------------------------


def load_index(ws: Workspace) -> DatasetIndex:
    return DatasetIndex.load(ws.require("synth", ws.index_path))


def _roi(ws: Workspace, cfg: PipelineConfig, index: DatasetIndex):
    if cfg.preprocess.crop_margin < 0:
        return None
    masks = [index.load_labels(r, cfg.net.num_classes) for r in index.select("source", "train")]
    return label_bbox(masks)


def preprocess_volume(volume: Volume3D, cfg: PipelineConfig, roi=None) -> Volume3D:
    p = cfg.preprocess
    if p.trim_front or p.trim_back:
        volume = trim_slices(volume, p.trim_front, p.trim_back)
    if roi is not None:
        volume, _ = crop_to_roi(volume, roi, p.crop_margin)
    return znorm(volume) if p.znorm else volume


def preprocess_labels(labels: LabelMap, cfg: PipelineConfig, roi=None) -> LabelMap:
    p = cfg.preprocess
    data = labels.labels
    if p.trim_front or p.trim_back:
        data = data[p.trim_front : data.shape[0] - p.trim_back]
    if roi is not None:
        cropped, _ = crop_to_roi(Volume3D(data.astype(np.float32), labels.spacing), roi, p.crop_margin)
        data = cropped.data
    return LabelMap(data.astype(np.uint8), labels.num_classes, labels.spacing)


def load_cases(ws: Workspace, cfg: PipelineConfig, domain: str, split: str, with_labels: bool = True):
    """Preprocessed ``(case_id, volume, labels-or-None)`` triples of one domain and split."""
    index = load_index(ws)
    roi = _roi(ws, cfg, index)
    out = []
    for rec in index.select(domain, split):
        volume = preprocess_volume(index.load_volume(rec), cfg, roi)
        labels = None
        if with_labels and rec.label is not None:
            labels = preprocess_labels(index.load_labels(rec, cfg.net.num_classes), cfg, roi)
        out.append((rec.case_id, volume, labels))
    return out


# -- stages ----------------------------------------------------------------------


def net_config(cfg: PipelineConfig) -> SegNetConfig:
    n = cfg.net
    return SegNetConfig(
        num_classes=n.num_classes,
        base_width=n.base_width,
        levels=n.levels,
        flat_levels=n.flat_levels,
        dropout=n.dropout,
        momentum=n.momentum,
        eps=n.eps,
    )


def generator_train_config(cfg: PipelineConfig, seed: int) -> TrainConfig:
    g = cfg.generator
    return TrainConfig(g.epochs, g.lr, g.beta1, g.batch_size, g.patch_dims, g.steps_per_epoch or None, seed=seed)


def segmentor_train_config(cfg: PipelineConfig, seed: int) -> TrainConfig:
    s = cfg.segmentor
    return TrainConfig(cfg.segmentor_epochs, s.lr, s.beta1, s.batch_size, s.patch_dims, s.steps_per_epoch or None, seed=seed)


def run_synth(cfg: PipelineConfig, ws: Workspace, resume=False, force=False) -> dict:
    if resume and (entry := _resumable(ws, "synth", cfg)):
        return {**entry, "skipped": True}
    started = time.time()
    out = _prepare_dir(ws, "synth", force)
    s = cfg.synth
    spec = SyntheticSpec(
        num_train=s.num_train,
        num_val=s.num_val,
        num_test=s.num_test,
        dims=s.dims,
        lesion_count=s.lesion_count,
        lesion_radius=s.lesion_radius,
        seed=stage_seed(cfg.seed, "synth"),
    )
    index = generate_synthetic(spec, out)
    return _write_log(ws, "synth", cfg, started, num_records=len(index.records))


def _translator_config(cfg: PipelineConfig, seed: int) -> CycleGANConfig:
    t = cfg.translate
    return CycleGANConfig(
        epochs=t.epochs,
        lambda_cyc=t.lambda_cyc,
        lr=t.lr,
        beta1=t.beta1,
        batch_size=t.batch_size,
        steps_per_epoch=t.steps_per_epoch or None,
        gan_mode=t.gan_mode,
        translator=TranslatorConfig(width=t.width, n_res=t.n_res),
        discriminator=DiscriminatorConfig(width=t.disc_width),
        seed=seed,
    )


def run_translate(cfg: PipelineConfig, ws: Workspace, resume=False, force=False, progress=None) -> dict:
    if resume and (entry := _resumable(ws, "translate", cfg)):
        return {**entry, "skipped": True}
    load_index(ws)
    started = time.time()
    ckpt = ws.dir("translate") / "checkpoints"
    source = load_cases(ws, cfg, "source", "train")
    previous = ws.read_log("translate") or {}
    if resume and TranslatorSet.exists(ckpt) and previous.get("config_hash") == cfg.stage_hash(*STAGE_SECTIONS["translate"]):
        tset = TranslatorSet.load(ckpt)
        history = previous.get("history", [])
        shutil.rmtree(ws.dir("translate") / "augmented", ignore_errors=True)
    else:
        if cfg.translate.epochs < 3:
            raise ValueError(f"translator training needs at least 3 epochs, got {cfg.translate.epochs}")
        _prepare_dir(ws, "translate", force)
        target = load_cases(ws, cfg, "target", "train", with_labels=False)
        try:
            tset = train_cyclegan(
                volume_slices([v for _, v, _ in source]),
                volume_slices([v for _, v, _ in target]),
                _translator_config(cfg, stage_seed(cfg.seed, "translate")),
                progress,
            )
        except TrainingDivergedError as exc:
            raise StageError(f"[translate] {exc}") from exc
        tset.save(ckpt)
        history = tset.history
    ss, st = cdda_augment(source, tset)
    write_augmented(ss, st, ws.dir("translate") / "augmented")
    return _write_log(ws, "translate", cfg, started, history, n_ss=len(ss), n_st=len(st), aux_epoch=tset.aux_epoch)


def run_train_generator(cfg: PipelineConfig, ws: Workspace, resume=False, force=False, progress=None) -> dict:
    if resume and (entry := _resumable(ws, "train-generator", cfg)):
        return {**entry, "skipped": True}
    aug = ws.require("translate", ws.dir("translate") / "augmented" / "augmented.json")
    started = time.time()
    out = _prepare_dir(ws, "train-generator", force)
    ss, st = read_augmented(aug, cfg.net.num_classes)
    seed = stage_seed(cfg.seed, "train-generator")
    try:
        G, history = train_generator(ss, st, generator_train_config(cfg, seed), net_config(cfg), progress=progress)
    except TrainingDivergedError as exc:
        raise StageError(str(exc)) from exc
    save_segnet(G, out / "G", role="generator")
    return _write_log(ws, "train-generator", cfg, started, history)


def run_build_records(cfg: PipelineConfig, ws: Workspace, resume=False, force=False) -> dict:
    if resume and (entry := _resumable(ws, "build-records", cfg)):
        return {**entry, "skipped": True}
    g_path = ws.require("train-generator", ws.dir("train-generator") / "G.json")
    ws.require("translate", ws.dir("translate") / "checkpoints" / "T_s.json")
    started = time.time()
    G = load_segnet(g_path)
    tset = TranslatorSet.load(ws.dir("translate") / "checkpoints")
    out = _prepare_dir(ws, "build-records", force)
    target = load_cases(ws, cfg, "target", "train", with_labels=False)
    records = build_records(
        [(cid, v) for cid, v, _ in target],
        G,
        tset.T_s,
        FilterConfig(cfg.records.K, cfg.records.e, cfg.generator.patch_dims),
        seed=stage_seed(cfg.seed, "build-records"),
    )
    save_records(records, out)
    summary = [{"case_id": r.case_id, "v": r.v, "eta": r.eta, "u": r.u, "w": r.w} for r in records]
    return _write_log(ws, "build-records", cfg, started, cohort=summary)


def run_train_segmentor(cfg: PipelineConfig, ws: Workspace, resume=False, force=False, progress=None) -> dict:
    if resume and (entry := _resumable(ws, "train-segmentor", cfg)):
        return {**entry, "skipped": True}
    g_path = ws.require("train-generator", ws.dir("train-generator") / "G.json")
    rec_log = ws.require("build-records", ws.stage_log("build-records"))
    del rec_log
    started = time.time()
    records = load_records(ws.dir("build-records"))
    seed = stage_seed(cfg.seed, "train-segmentor")
    if cfg.segmentor.init_from_generator:
        S = init_segmentor_from_generator(g_path, net_config(cfg))
    else:
        with torch_seed(seed):
            S = DualDomainSegNet(net_config(cfg))
    out = _prepare_dir(ws, "train-segmentor", force)
    source = [(v, lab) for _, v, lab in load_cases(ws, cfg, "source", "train")]
    target = [(cid, v) for cid, v, _ in load_cases(ws, cfg, "target", "train", with_labels=False)]
    try:
        S, history = train_final_segmentor(source, target, records, S, segmentor_train_config(cfg, seed), progress=progress)
    except TrainingDivergedError as exc:
        raise StageError(str(exc)) from exc
    save_segnet(S, out / "S", role="segmentor")
    return _write_log(ws, "train-segmentor", cfg, started, history)


def case_metrics(pred: LabelMap, gt: LabelMap) -> list[dict]:
    return [
        {"class": c, "dice": dice_score(pred, gt, c), "assd_mm": assd(pred, gt, c, gt.spacing)}
        for c in range(1, gt.num_classes)
    ]


def run_infer(cfg: PipelineConfig, ws: Workspace, resume=False, force=False, segmentor: DualDomainSegNet | None = None) -> dict:
    if resume and (entry := _resumable(ws, "infer", cfg)):
        return {**entry, "skipped": True}
    if segmentor is None:
        segmentor = load_segnet(ws.require("train-segmentor", ws.dir("train-segmentor") / "S.json"))
    started = time.time()
    out = _prepare_dir(ws, "infer", force)
    cases = load_cases(ws, cfg, "target", cfg.infer.split)
    for cid, volume, gt in cases:
        pred = infer(segmentor, volume, cfg.infer.patch_dims, DomainTag.TARGET, cfg.infer.overlap)
        write_labels(pred, out / cid)
        entry = {"case_id": cid}
        if gt is not None:
            m = case_metrics(pred, gt)
            entry["dice"] = float(np.mean([r["dice"] for r in m]))
            entry["assd_mm"] = float(np.mean([r["assd_mm"] for r in m]))
        (out / f"{cid}.metrics.json").write_text(json.dumps(entry, indent=1))
    return _write_log(ws, "infer", cfg, started, cases=[c for c, _, _ in cases])


def run_eval(cfg: PipelineConfig, ws: Workspace, resume=False, force=False) -> dict:
    if resume and (entry := _resumable(ws, "eval", cfg)):
        return {**entry, "skipped": True}
    infer_log = ws.read_log("infer")
    if infer_log is None:
        raise MissingStageError("infer", ws.stage_log("infer"))
    current = dataset_hash(ws)
    if infer_log["dataset_hash"] != current:
        raise StageError("predictions were produced from a different dataset (dataset hash mismatch); rerun infer")
    started = time.time()
    out = _prepare_dir(ws, "eval", force)
    index = load_index(ws)
    roi = _roi(ws, cfg, index)
    rows = []
    for rec in index.select("target", cfg.infer.split):
        if rec.label is None:
            continue
        pred = read_labels(ws.require("infer", ws.dir("infer") / f"{rec.case_id}.json"), cfg.net.num_classes)
        gt = preprocess_labels(index.load_labels(rec, cfg.net.num_classes), cfg, roi)
        rows += [{"case_id": rec.case_id, **m} for m in case_metrics(pred, gt)]
    summary = write_metrics(rows, out)
    return _write_log(ws, "eval", cfg, started, summary=summary)


def write_metrics(rows: list[dict], out: Path, title: str = "target test cases") -> dict:
    """Write per-case rows plus per-class cohort means to ``metrics.csv`` and a plot."""
    classes = sorted({r["class"] for r in rows})
    means = []
    for c in classes:
        sel = [r for r in rows if r["class"] == c]
        means.append(
            {
                "case_id": "mean",
                "class": c,
                "dice": float(np.mean([r["dice"] for r in sel])),
                "assd_mm": float(np.mean([r["assd_mm"] for r in sel])),
            }
        )
    with open(out / "metrics.csv", "w", newline="") as fh:
        writer = csv.DictWriter(fh, fieldnames=["case_id", "class", "dice", "assd_mm"], lineterminator="\n")
        writer.writeheader()
        for r in rows + means:
            writer.writerow({**r, "dice": f"{r['dice']:.6f}", "assd_mm": f"{r['assd_mm']:.6f}"})
    summary = {"n_cases": len({r["case_id"] for r in rows}), "means": means}
    (out / "summary.json").write_text(json.dumps(summary, indent=1))
    plot_metrics(rows, out / "dice.png", title)
    return summary


def plot_metrics(rows: list[dict], path: Path, title: str) -> None:
    import matplotlib

    matplotlib.use("Agg")
    import matplotlib.pyplot as plt

    fig, axes = plt.subplots(1, 2, figsize=(8, 3.2))
    for ax, key, label in ((axes[0], "dice", "Dice"), (axes[1], "assd_mm", "ASSD (mm)")):
        values = [r[key] for r in rows]
        ax.boxplot(values) if values else None
        ax.scatter(np.ones(len(values)), values, s=10, alpha=0.6)
        ax.set_ylabel(label)
        ax.set_xticks([])
    fig.suptitle(title)
    fig.tight_layout()
    # fixed metadata keeps the PNG bytes reproducible
    fig.savefig(path, dpi=80, metadata={"Software": None})
    plt.close(fig)


RUNNERS = {
    "synth": run_synth,
    "translate": run_translate,
    "train-generator": run_train_generator,
    "build-records": run_build_records,
    "train-segmentor": run_train_segmentor,
    "infer": run_infer,
    "eval": run_eval,
}


def run_all(cfg: PipelineConfig, workdir, resume=False, force=False) -> dict[str, dict]:
    ws = Workspace(workdir)
    return {name: RUNNERS[name](cfg, ws, resume=resume, force=force) for name in STAGES}
