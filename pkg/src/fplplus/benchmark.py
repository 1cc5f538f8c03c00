"""Synthetic benchmark: the full pipeline against two reference trainings.

``w/o-DA``
    A network trained on the original labeled source cases only and applied to the
    target test cases through its source branch.
``unfiltered``
    The final segmentor initialized from the generator and trained on target pseudo
    labels alone, with every voxel weight set to one and no source term.
``FPL+``
    The segmentor produced by the pipeline.

All three are scored on the held-out target test split by mean foreground Dice.
"""

from __future__ import annotations

import json
import time
from pathlib import Path

import numpy as np

from fplplus.config import PipelineConfig, stage_seed
from fplplus.core.types import DomainTag
from fplplus.dualnorm.checkpoint import load_segnet, save_segnet
from fplplus.jointtrain.segmentor import infer, init_segmentor_from_generator, train_final_segmentor
from fplplus.pipeline import (
    STAGES,
    RUNNERS,
    Workspace,
    case_metrics,
    generator_train_config,
    load_cases,
    net_config,
    segmentor_train_config,
    write_metrics,
)
from fplplus.pseudolabel.generator import train_generator
from fplplus.pseudolabel.records import load_records
from fplplus.translate.cdda import AugmentedCase


def score(net, cases, cfg: PipelineConfig, domain) -> tuple[float, list[dict]]:
    rows = []
    for cid, volume, gt in cases:
        pred = infer(net, volume, cfg.infer.patch_dims, domain, cfg.infer.overlap)
        rows += [{"case_id": cid, **m} for m in case_metrics(pred, gt)]
    return float(np.mean([r["dice"] for r in rows])), rows


def train_without_adaptation(cfg: PipelineConfig, ws: Workspace):
    source = [AugmentedCase(cid, "", v, lab) for cid, v, lab in load_cases(ws, cfg, "source", "train")]
    seed = stage_seed(cfg.seed, "baseline-wo-da")
    net, history = train_generator(source, [], generator_train_config(cfg, seed), net_config(cfg))
    return net, history


def train_unfiltered(cfg: PipelineConfig, ws: Workspace):
    S = init_segmentor_from_generator(ws.dir("train-generator") / "G.json", net_config(cfg))
    target = [(cid, v) for cid, v, _ in load_cases(ws, cfg, "target", "train", with_labels=False)]
    seed = stage_seed(cfg.seed, "baseline-unfiltered")
    return train_final_segmentor(
        [],
        target,
        load_records(ws.dir("build-records")),
        S,
        segmentor_train_config(cfg, seed),
        use_source=False,
        use_weights=False,
    )


def run_benchmark(cfg: PipelineConfig, workdir, resume: bool = True, progress=print) -> dict:
    """Run every pipeline stage and both references; return mean Dice per method.

    The report is also written to ``<workdir>/benchmark/report.json``.
    """
    ws = Workspace(workdir)
    timings = {}
    for name in STAGES:
        t0 = time.time()
        RUNNERS[name](cfg, ws, resume=resume, force=not resume)
        timings[name] = round(time.time() - t0, 1)
        progress(f"{name}: {timings[name]}s")
    out = Path(workdir) / "benchmark"
    out.mkdir(parents=True, exist_ok=True)
    test = load_cases(ws, cfg, "target", cfg.infer.split)

    results = {}
    t0 = time.time()
    wo, _ = train_without_adaptation(cfg, ws)
    save_segnet(wo, out / "wo_da", role="baseline")
    results["w/o-DA"], rows_wo = score(wo, test, cfg, DomainTag.SOURCE)
    timings["w/o-DA"] = round(time.time() - t0, 1)
    progress(f"w/o-DA: {results['w/o-DA']:.4f}")

    t0 = time.time()
    unf, _ = train_unfiltered(cfg, ws)
    save_segnet(unf, out / "unfiltered", role="baseline")
    results["unfiltered"], rows_unf = score(unf, test, cfg, DomainTag.TARGET)
    timings["unfiltered"] = round(time.time() - t0, 1)
    progress(f"unfiltered: {results['unfiltered']:.4f}")

    G = load_segnet(ws.dir("train-generator") / "G.json")
    results["G"], _ = score(G, test, cfg, DomainTag.TARGET)
    S = load_segnet(ws.dir("train-segmentor") / "S.json")
    results["FPL+"], rows_fpl = score(S, test, cfg, DomainTag.TARGET)
    progress(f"G: {results['G']:.4f}  FPL+: {results['FPL+']:.4f}")

    for name, rows in (("wo_da", rows_wo), ("unfiltered", rows_unf), ("fplplus", rows_fpl)):
        d = out / name
        d.mkdir(exist_ok=True)
        write_metrics(rows, d, title=name)
    report = {"mean_dice": results, "timings_s": timings, "seed": cfg.seed, "config": cfg.to_dict()}
    (out / "report.json").write_text(json.dumps(report, indent=1))
    return report
