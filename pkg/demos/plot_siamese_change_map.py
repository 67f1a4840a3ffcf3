"""
Self-supervised change map from a siamese 3D network
====================================================

Co-located patches from the two dates are treated as two views of the same
thing. The network learns to make their embeddings agree, so wherever the
backbone features still disagree after training is a candidate change.

Training here is shortened (20 epochs on the tiny architecture) so the
script runs in well under a minute on one core; the acceptance suite uses
100 epochs.
"""

import time

from hacd.evaluation import auc_score
from hacd.hsio import radiometric_align
from hacd.mtcnet import ArchConfig, TrainConfig, infer_loss_map, train
from hacd.scene import SceneSpec, generate_scene

t1, t2, mask = generate_scene(SceneSpec(seed=7))
t2 = radiometric_align(t1, t2)

arch = ArchConfig.tiny()
print(arch)

start = time.perf_counter()
model, history = train(t1, t2, arch, TrainConfig(epochs=20, batch_size=32, patch_size=arch.patch_size, seed=7))
print(f"trained in {time.perf_counter() - start:.0f}s")
for epoch in range(0, len(history), 5):
    print(f"epoch {epoch + 1:3d}  loss {history[epoch]:+.4f}")
print(f"final      loss {history[-1]:+.4f}")

###############################################################################
# Per-pixel feature disagreement
# ------------------------------
# The whole image goes through the backbone at once (tiled when large) and
# the distance between the two dates' features is scored against the mask.

change = infer_loss_map(model, t1, t2)
print("change map", change.shape, "AUC", round(auc_score(change, mask), 4))
