"""
Running the pipeline
====================

The stages write into one work directory and each leaves a ``stage.json`` with its
config hash, seed, dataset hash, wall time and loss history. The same stages are
available on the command line::

    fplplus --workdir work --print-config > fplplus.toml
    fplplus --config fplplus.toml --workdir work synth
    fplplus --config fplplus.toml --workdir work translate
    fplplus --config fplplus.toml --workdir work train-generator
    fplplus --config fplplus.toml --workdir work build-records
    fplplus --config fplplus.toml --workdir work train-segmentor
    fplplus --config fplplus.toml --workdir work infer
    fplplus --config fplplus.toml --workdir work eval

This script runs a scaled-down configuration through the Python API.
"""

import json
import sys
from pathlib import Path

from fplplus.config import PipelineConfig
from fplplus.pipeline import STAGES, RUNNERS, Workspace

small = PipelineConfig.from_dict(
    {
        "seed": 1,
        "stage": {
            "synth": {"num_train": 4, "num_test": 2},
            "translate": {"epochs": 3, "steps_per_epoch": 4, "width": 8, "n_res": 2, "disc_width": 8},
            "generator": {"epochs": 4, "steps_per_epoch": 5},
            "segmentor": {"epochs": 2, "steps_per_epoch": 5},
        },
    }
)
work = Path(sys.argv[1]) if len(sys.argv) > 1 else Path(__file__).with_name("_output") / "pipeline"
ws = Workspace(work)
for name in STAGES:
    entry = RUNNERS[name](small, ws, resume=True)
    status = "skipped" if entry.get("skipped") else f"{entry['wall_time_s']:.1f}s"
    print(f"{name:16s} {status}")

print((work / "eval" / "metrics.csv").read_text())
print(json.dumps(ws.read_log("train-generator")["history"][-1], indent=1))

# %%
# The synthetic benchmark adds two reference trainings and compares all three on
# the target test split: ``python -c "from fplplus.benchmark import run_benchmark;
# from fplplus.config import PipelineConfig; run_benchmark(PipelineConfig(), 'bench')"``
