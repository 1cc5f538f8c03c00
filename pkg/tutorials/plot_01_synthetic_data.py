"""
Synthetic two-domain phantoms
=============================

Every case is a head-like ellipsoid holding a ventricle and one or two lesions.
The geometry is drawn once per case and rendered with one of two intensity models,
so the source and target domains differ only in appearance.
"""

from pathlib import Path

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt
import numpy as np

from fplplus.data import SyntheticSpec, synth_case, znorm
from fplplus.data.synthetic import make_phantom, render

OUT = Path(__file__).with_name("_output")
OUT.mkdir(exist_ok=True)

spec = SyntheticSpec()
print(spec.source)
print(spec.target)

# one case per domain; labels come with both, but target training labels are never used
src, src_lab = synth_case(spec, "source", "train", 0)
tgt, tgt_lab = synth_case(spec, "target", "train", 0)
print("dims", src.dims, "foreground fraction", src_lab.labels.mean().round(4))

# %%
# The same geometry under both appearances shows what the adaptation has to undo:
# in the target domain the lesion is only slightly brighter than tissue.

rng = np.random.default_rng(0)
phantom = make_phantom(spec, rng)
pair = [znorm(src.with_data(render(phantom, look, rng))).data for look in (spec.source, spec.target)]

z = int(np.argmax(phantom.lesions.sum(axis=(1, 2))))
fig, axes = plt.subplots(1, 3, figsize=(9, 3))
for ax, img, title in zip(axes, pair + [phantom.lesions.astype(float)], ["source", "target", "lesion"]):
    ax.imshow(img[z], cmap="gray")
    ax.set_title(title)
    ax.axis("off")
fig.savefig(OUT / "phantom.png", dpi=80)

# %%
# Intensity statistics per tissue class after z-normalization.

for name, img in zip(["source", "target"], pair):
    stats = {
        "lesion": img[phantom.lesions].mean(),
        "ventricle": img[phantom.ventricle].mean(),
        "tissue": img[phantom.head & ~phantom.lesions & ~phantom.ventricle].mean(),
    }
    print(name, {k: round(float(v), 2) for k, v in stats.items()})
