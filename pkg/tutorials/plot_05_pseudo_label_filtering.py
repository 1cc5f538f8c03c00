"""
Uncertainty-weighted pseudo labels
==================================

For each unlabeled target case the generator runs K stochastic dropout passes. The
summed foreground variance ``v`` divided by the number ``eta`` of high-entropy
voxels gives a size-aware uncertainty ``u``. Across the cohort ``u`` becomes an
image weight ``w`` and a consensus map ``M`` marks voxels where the target branch
agrees with the source branch applied to the translated image. ``A = M * w``.
"""

from fplplus.data import SyntheticSpec, synth_case, znorm
from fplplus.dualnorm import SegNetConfig
from fplplus.dualnorm.trainer import TrainConfig
from fplplus.pseudolabel import FilterConfig, build_records, image_uncertainty, image_weights
from fplplus.pseudolabel.generator import train_generator
from fplplus.translate import AugmentedCase

# cohort arithmetic on hand-picked numbers; the third case has no uncertain voxels
v = [4.0, 1.0, 0.5]
eta = [100, 10, 0]
u = image_uncertainty(v, eta)
print("u", u, "w", image_weights(u))

# %%
# Records for a few target cases. A generator trained for a few seconds (250 steps) on source
# cases only (fed to both branches) and an identity translator keep this fast; the
# pipeline uses the CDDA-trained generator and T_s. Every pass is tiled with the
# training patch size, as in the pipeline. A net this young is rarely confident
# enough for normalized entropy below 0.2 (p > 0.97), so eta spans almost the whole
# volume here; with the benchmark generator it is a few percent of the voxels.

spec = SyntheticSpec()
source = [AugmentedCase(f"s{i}", "", znorm(v), lab) for i in range(8) for v, lab in [synth_case(spec, "source", "train", i)]]
G, _ = train_generator(source, source, TrainConfig(epochs=10, steps_per_epoch=25, seed=0), SegNetConfig(base_width=4))
targets = [(f"t{i}", znorm(synth_case(spec, "target", "train", i)[0])) for i in range(6)]
records = build_records(targets, G, lambda x: x, FilterConfig(K=5, e=0.2, patch_dims=(16, 16, 16)), seed=0)
for r in records:
    print(f"{r.case_id}: v={r.v:.2f} eta={r.eta} u={r.u:.5f} w={r.w:.3f} "
          f"agreement={r.consensus.mean():.3f} mean A={r.weight.mean():.3f}")
