"""Score a synthetic dataset and watch the joint distribution reject noise.

Density (mean distance to the 10 nearest neighbors) finds sparse samples;
consistency (cosine between an image embedding and its label's text
embedding) finds semantically sound ones.  Their product prioritizes
sparse-but-correct samples and pushes mislabeled ones to the bottom.
"""

import numpy as np

from densaug import HnswIndex, SyntheticSpec, synth_dataset
from densaug.scoring import (
    consistency_scores,
    density_scores,
    joint_scores,
    min_max_normalize,
    select,
)

spec = SyntheticSpec(n=1000, noise_ratio=0.2, seed=1)
features, labels, image_embs, text_embs = synth_dataset(spec)

index = HnswIndex(dim=features.d, m=8, ef_construction=64, seed=1)
for i in range(features.n):
    index.insert(i, features.vectors[i])

rho = density_scores(index, features, knn_k=10, ef_search=64)
p_rho = min_max_normalize(rho)
con = consistency_scores(image_embs, text_embs, labels)
p_con = min_max_normalize(con)
p_sel = joint_scores(p_rho, p_con)

flipped = labels.noise_mask
print(f"mean consistency: clean {con[~flipped].mean():.3f}, flipped {con[flipped].mean():.3f}")

budget = 200
for name, scores in [("density-only", p_rho), ("joint", p_sel)]:
    chosen = select(scores, budget)
    noise_rate = flipped[chosen].mean()
    print(f"{name:13s}: selected {budget}, flipped fraction {noise_rate:.3f}")

top = select(p_sel, 5)
print("top joint scores:", [(i, round(float(p_sel[i]), 3)) for i in top])
