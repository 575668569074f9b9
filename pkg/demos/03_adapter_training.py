"""Fine-tune the linear adapters with symmetric InfoNCE on synthetic pairs.

The text embeddings live in a rotated copy of the image space; the adapters
(identity-initialized single linear layers over the frozen embeddings)
learn to undo the rotation.  Training uses the from-scratch Adam optimizer
with the 0.1 milestone decay schedule.
"""

import numpy as np

from densaug import AdapterTrainConfig, train_adapters
from densaug.core import EmbeddingTable, rng_for

rng = rng_for(2, 1)
n, d = 512, 16
base = rng.normal(size=(n, d))
rotation, _ = np.linalg.qr(rng.normal(size=(d, d)))
image_embs = EmbeddingTable((base + 0.05 * rng.normal(size=(n, d))).astype(np.float32), "image")
text_embs = EmbeddingTable(
    (base @ rotation.T + 0.05 * rng.normal(size=(n, d))).astype(np.float32), "text"
)

cfg = AdapterTrainConfig(epochs=30, batch_size=128, lr=1e-2, temperature=0.07, seed=2)
image_adapter, text_adapter, history = train_adapters(image_embs, text_embs, cfg)

print("epoch  mean InfoNCE loss")
for epoch, loss in enumerate(history):
    marker = " <- lr decays" if epoch in cfg.milestones() else ""
    print(f"{epoch:5d}  {loss:.6f}{marker}")

# the two adapters should now map paired points to aligned directions
adapted_img = image_adapter.forward(base)
adapted_txt = text_adapter.forward(base @ rotation.T)
cos = np.einsum("ij,ij->i", adapted_img, adapted_txt) / (
    np.linalg.norm(adapted_img, axis=1) * np.linalg.norm(adapted_txt, axis=1)
)
print(f"\nmean cosine of adapted pairs: {cos.mean():.4f} (identity adapters would give "
      f"{np.einsum('ij,ij->i', base, base @ rotation.T).mean() / (base ** 2).sum(axis=1).mean():.4f})")
