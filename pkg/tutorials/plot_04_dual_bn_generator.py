"""
Dual batch normalization and the pseudo label generator
=======================================================

The generator shares every convolution between the two domains but keeps one set
of batch-norm statistics and affine parameters per domain. Training draws one
source-style and one target-style batch per step and routes each through its own
normalization branch.
"""

import torch

from fplplus.dualnorm import DualBatchNorm, SegNetConfig, predict_proba
from fplplus.dualnorm.trainer import TrainConfig
from fplplus.pseudolabel import train_generator
from fplplus.translate import AugmentedCase
from fplplus.data import SyntheticSpec, synth_case, znorm

# routing: only the branch that sees data updates its running statistics
bn = DualBatchNorm(1).train()
for _ in range(10):
    bn(torch.randn(8, 1, 4) * 2 + 3, "source")
print("source mean/var", bn.mean_s.item(), bn.var_s.item())
print("target mean/var", bn.mean_t.item(), bn.var_t.item())

# %%
# The running mean after k identical batches follows mu * (1 - (1 - alpha)^k).

alpha, mu = 0.1, 3.0
bn = DualBatchNorm(1, momentum=alpha).train()
for k in range(1, 6):
    bn(torch.tensor([mu - 1.0, mu + 1.0]).view(2, 1, 1), "target")
    print(k, round(bn.mean_t.item(), 6), round(mu * (1 - (1 - alpha) ** k), 6))

# %%
# A short generator run. Real pipelines feed the CDDA sets; here the source cases
# stand in for both sets so the script runs in seconds.

spec = SyntheticSpec()
cases = []
for i in range(6):
    vol, lab = synth_case(spec, "source", "train", i)
    cases.append(AugmentedCase(f"s{i}", "", znorm(vol), lab))
net_cfg = SegNetConfig(base_width=4)
G, history = train_generator(cases[:3], [AugmentedCase(c.origin, "_s2t", c.volume, c.labels) for c in cases[3:]],
                             TrainConfig(epochs=3, steps_per_epoch=5), net_cfg, progress=print)

probs = predict_proba(G, cases[0].volume, "source")
print("whole-volume probabilities", probs.shape, "foreground voxels", int((probs.argmax(0) == 1).sum()))
print("parameter groups", {k: len(v) for k, v in G.parameter_groups().items()})
