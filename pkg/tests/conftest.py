import pytest
import torch

from fplplus.config import PipelineConfig

torch.set_num_threads(1)

TINY_CONFIG = {
    "seed": 3,
    "stage": {
        "synth": {"num_train": 2, "num_test": 2, "dims": [16, 16, 16], "lesion_radius": [2.0, 3.0]},
        "translate": {"epochs": 3, "batch_size": 2, "steps_per_epoch": 2, "width": 4, "n_res": 1, "disc_width": 4},
        "net": {"base_width": 4, "levels": 3, "flat_levels": 1},
        "generator": {"epochs": 2, "batch_size": 2, "patch_dims": [8, 8, 8], "steps_per_epoch": 2},
        "records": {"K": 2},
        "segmentor": {"epochs": 1, "batch_size": 2, "patch_dims": [8, 8, 8], "steps_per_epoch": 2},
        "infer": {"patch_dims": [8, 8, 8]},
    },
}


@pytest.fixture
def tiny_config() -> PipelineConfig:
    return PipelineConfig.from_dict(TINY_CONFIG)


@pytest.fixture(scope="session")
def tiny_run(tmp_path_factory):
    """A complete pipeline run on the tiny config, shared by read-only tests."""
    from fplplus.pipeline import run_all

    cfg = PipelineConfig.from_dict(TINY_CONFIG)
    root = tmp_path_factory.mktemp("tiny_run")
    logs = run_all(cfg, root)
    return cfg, root, logs
