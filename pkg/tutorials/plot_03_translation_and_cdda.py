"""
Slice translation and cross-domain augmentation
===============================================

A 2D CycleGAN maps axial slices between the two domains. The translator snapshot
taken at two thirds of training is kept as an auxiliary translator, and both are
used to turn every labeled source case into five training images sharing its label.
This script trains a deliberately small translator for a few epochs.
"""

import numpy as np

from fplplus.data import SyntheticSpec, synth_case, znorm
from fplplus.translate import (
    CycleGANConfig,
    DiscriminatorConfig,
    TranslatorConfig,
    auxiliary_epoch,
    cdda_augment,
    train_cyclegan,
    translate_volume,
    volume_slices,
)

spec = SyntheticSpec()
source = [(f"s{i}", *[znorm(v) if j == 0 else v for j, v in enumerate(synth_case(spec, "source", "train", i))]) for i in range(4)]
target = [znorm(synth_case(spec, "target", "train", i)[0]) for i in range(4)]

config = CycleGANConfig(
    epochs=3,
    steps_per_epoch=8,
    batch_size=4,
    translator=TranslatorConfig(width=8, n_res=2),
    discriminator=DiscriminatorConfig(width=8),
)
print("auxiliary snapshot after epoch", auxiliary_epoch(config.epochs))
tset = train_cyclegan(volume_slices([v for _, v, _ in source]), volume_slices(target), config, progress=print)

# %%
# Translation works slice by slice and keeps the volume shape.

fake_target = translate_volume(tset.T_t, source[0][1])
print(source[0][1].dims, "->", fake_target.dims)

# %%
# CDDA: three source-style and two target-style images per labeled case.

ss, st = cdda_augment(source, tset)
print(len(ss), "source-style:", sorted({c.provenance or "(original)" for c in ss}))
print(len(st), "target-style:", sorted({c.provenance for c in st}))
assert all(c.labels is source[int(c.origin[1:])][2] for c in ss + st)
print("mean |T_s(T_t(x)) - x|:", float(np.abs(ss[1].volume.data - ss[0].volume.data).mean()))
