"""
Coarse-to-fine levels and super-resolution
==========================================

Run a three-level schedule with a text style, then upscale with the Lanczos
baseline. Each level starts from the previous latent, re-encoded at the new size.

Views are cropped at the encoder's input size at every level, so a finer level
scores smaller patches of the picture. Its loss starts higher and is not
comparable with the coarser levels' numbers.
"""

from pathlib import Path

from promptpainter import (
    AugmentConfig,
    LanczosUpscaler,
    LevelConfig,
    RunConfig,
    StyleParam,
    ToyEncoder,
    ToyGenerator,
    run_hierarchy,
)
from promptpainter.image import save_png

out = Path("demo-out/hierarchy")
out.mkdir(parents=True, exist_ok=True)

cfg = RunConfig(
    styles=[StyleParam.text("ochre cliffs over a cold sea")],
    levels=[LevelConfig(32, 60, 0.2), LevelConfig(64, 30, 0.05), LevelConfig(128, 15, 0.02)],
    augment=AugmentConfig(n_views=8),
    seed=3,
)
result = run_hierarchy(cfg, ToyEncoder(), ToyGenerator(), upscaler=LanczosUpscaler(2))

for i, level in enumerate(cfg.levels):
    records = result.trace.for_level(i)
    tail = sum(r.total for r in records[-5:]) / 5
    print(f"level {i} ({level.resolution}px): first {records[0].total:.4f}, mean of last five {tail:.4f}")
print("before super-resolution:", tuple(result.pre_superres.shape))
print("final:", tuple(result.image.shape))

save_png(result.pre_superres, out / "pre_superres.png")
save_png(result.image, out / "final.png")
