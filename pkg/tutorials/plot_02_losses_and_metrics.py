"""
Dice losses, Dice score and surface distance
============================================

The soft Dice loss trains the generator; its weighted form trains the final
segmentor on pseudo labels. Evaluation uses the hard Dice score and the average
symmetric surface distance (ASSD) in millimetres.
"""

import numpy as np
import torch

from fplplus.core import LabelMap, assd, dice_score, soft_dice_loss, weighted_dice_loss

# two voxels, foreground probabilities 0.8 and 0.2, truth (1, 0)
p = np.array([[0.2, 0.8], [0.8, 0.2]]).reshape(2, 1, 1, 2)
g = np.array([[0.0, 1.0], [1.0, 0.0]]).reshape(2, 1, 1, 2)
print("soft Dice loss", float(soft_dice_loss(p, g)))  # 1 - 1.6/2.0

# %%
# Voxel weights gate the pseudo label. All-zero weights give a loss of exactly 1;
# uniform weights cancel and give the ordinary soft Dice.

rng = np.random.default_rng(0)
logits = rng.normal(size=(2, 16, 16, 16))
probs = np.exp(logits) / np.exp(logits).sum(axis=0)
pseudo = LabelMap((logits[1] > logits[0]).astype(np.uint8)).one_hot().astype(np.float64)
for name, A in [("zeros", np.zeros((16, 16, 16))), ("ones", np.ones((16, 16, 16))), ("3 x ones", 3 * np.ones((16, 16, 16)))]:
    print(f"weighted Dice, A = {name}:", float(weighted_dice_loss(probs, pseudo, A)))
print("soft Dice                :", float(soft_dice_loss(probs, pseudo)))

# batched tensors work the same way and carry gradients
x = torch.from_numpy(probs)[None].requires_grad_(True)
weighted_dice_loss(x, torch.from_numpy(pseudo)[None], torch.ones(1, 16, 16, 16, dtype=torch.float64)).backward()
print("gradient norm", float(x.grad.norm()))

# %%
# Two spheres offset by two voxels along x with anisotropic spacing.

grid = np.indices((20, 20, 20))
a = ((grid - 10) ** 2).sum(axis=0) <= 25
b = ((grid - np.array([10, 10, 12]).reshape(3, 1, 1, 1)) ** 2).sum(axis=0) <= 25
pred, gt = LabelMap(a.astype(np.uint8), spacing=(2.0, 1.0, 0.5)), LabelMap(b.astype(np.uint8), spacing=(2.0, 1.0, 0.5))
print("Dice", round(dice_score(pred, gt), 4), "ASSD (mm)", round(assd(pred, gt), 4))

# degenerate cases: both empty gives Dice 1 and ASSD 0; one empty falls back to the bounding-box diagonal
empty = LabelMap(np.zeros((20, 20, 20), np.uint8))
print(dice_score(empty, empty), assd(empty, empty), round(assd(pred, empty), 3))
