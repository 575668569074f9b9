"""Apply every augmentation op to one test image and write a PPM gallery.

Each selected sample receives exactly one transformation: a uniformly
drawn op, magnitude, and (where applicable) sign.  This script applies
each op at a mid-range magnitude instead, so the whole space is visible
at a glance, then shows a few policy draws and the five corruptions.
"""

from pathlib import Path

import numpy as np

from densaug import AUG_OPS, Image, apply_op, corrupt, trivial_augment
from densaug.augment import write_ppm
from densaug.core import rng_for
from densaug.corruptions import CORRUPTION_KINDS

out_dir = Path("demo_output/gallery")
out_dir.mkdir(parents=True, exist_ok=True)

# a colorful synthetic target: diagonal gradient plus circles
h = w = 96
ys, xs = np.mgrid[0:h, 0:w]
px = np.zeros((h, w, 3), np.uint8)
px[..., 0] = (xs * 255 / w).astype(np.uint8)
px[..., 1] = (ys * 255 / h).astype(np.uint8)
ring = ((xs - w / 2) ** 2 + (ys - h / 2) ** 2) ** 0.5
px[..., 2] = np.where((ring > 20) & (ring < 32), 255, 40).astype(np.uint8)
image = Image(px)
write_ppm(image, out_dir / "00_original.ppm")

for op in AUG_OPS:
    if op.magnitude_based:
        lo, hi = op.range
        magnitude = lo + 0.6 * (hi - lo)  # 60% along the sweep direction
        if op.integer:
            magnitude = int(round(magnitude))
    else:
        magnitude = None
    out = apply_op(image, op, magnitude, 1)
    write_ppm(out, out_dir / f"op_{op.name}.ppm")
    shown = "-" if magnitude is None else f"{magnitude:.2f}"
    print(f"{op.name:13s} magnitude={shown}")

print("\nthree policy draws:")
for seed in range(3):
    out, applied = trivial_augment(image, rng_for(seed, 40))
    write_ppm(out, out_dir / f"policy_{seed}_{applied.op}.ppm")
    print(f"  seed {seed}: {applied.op} magnitude={applied.magnitude} sign={applied.sign:+d}")

print("\ncorruptions at severity 0.6:")
for kind in CORRUPTION_KINDS:
    out = corrupt(image, kind, 0.6, rng_for(9, 41))
    write_ppm(out, out_dir / f"corrupt_{kind}.ppm")
    print(f"  {kind}")

print(f"\ngallery written to {out_dir}/")
