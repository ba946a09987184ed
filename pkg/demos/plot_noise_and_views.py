"""
Fractal noise and augmented views
=================================

Seeded multi-octave value noise, and the random views the loss sees each
iteration: resize, crop, perspective, flip and pixel noise.
"""

from pathlib import Path

import torch

from promptpainter import AugmentConfig, NoiseConfig, add_noise, augment_batch, fractal_noise
from promptpainter.image import save_png

out = Path("demo-out/noise")
out.mkdir(parents=True, exist_ok=True)

# Octaves trade smoothness for detail; the field always stays in [-1, 1].
for octaves in (1, 3, 6):
    field = fractal_noise(128, 128, NoiseConfig(octaves=octaves, base_frequency=4), seed=0)
    print(f"octaves={octaves}: min {float(field.min()):+.3f} max {float(field.max()):+.3f}")
    save_png((field + 1) / 2, out / f"noise_octaves{octaves}.png")

# A flat grey image has no texture for the encoder; noise gives it some.
grey = torch.full((128, 128, 3), 0.5, dtype=torch.float64)
save_png(add_noise(grey, NoiseConfig(amplitude=0.1), seed=1), out / "grey_plus_noise.png")

# Eight views of one image, all from a single seed.
yy, xx = torch.meshgrid(torch.linspace(0, 1, 96), torch.linspace(0, 1, 96), indexing="ij")
image = torch.stack([xx, yy, 0.5 * (1 - xx * yy)], dim=-1).double()
views = augment_batch(image, AugmentConfig(crop_size=64), n=8, seed=42)
for i, view in enumerate(views):
    save_png(view, out / f"view{i}.png")
print(f"wrote {len(views)} views of shape {tuple(views[0].shape)} to {out}")
