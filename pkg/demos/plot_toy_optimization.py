"""
Optimizing a latent toward an image style
=========================================

With the toy encoder and generator, pull a random latent toward the embedding
of a target image and watch the loss fall.
"""

from pathlib import Path

from promptpainter import (
    AugmentConfig,
    LevelConfig,
    RunConfig,
    StyleParam,
    ToyEncoder,
    ToyGenerator,
    decode,
    embed_image,
    random_latent,
    run_level,
)
from promptpainter.image import save_png

out = Path("demo-out/toy")
out.mkdir(parents=True, exist_ok=True)
encoder, generator = ToyEncoder(), ToyGenerator()

# A target the toy decoder can actually reach.
target = decode(generator, random_latent(generator, 32, seed=123))
styles = [(embed_image(encoder, target), 1.0)]

augment = AugmentConfig(n_views=4, resize_range=(1, 1), perspective_scale=0, flip_probability=0,
                        gaussian_sigma=0.02)
cfg = RunConfig(styles=[StyleParam.text("unused")], levels=[LevelConfig(32, 200, 1.0)],
                augment=augment, optimizer="plain_gradient_descent", seed=1)
start = random_latent(generator, 32, seed=1)
latent, records = run_level(start, cfg.levels[0], 0, styles, encoder, generator, cfg)

for r in records[::25] + [records[-1]]:
    print(f"iter {r.iteration:3d}  loss {r.total:.5f}")
print(f"final / initial = {records[-1].total / records[0].total:.4f}")

save_png(target, out / "target.png")
save_png(decode(generator, start), out / "start.png")
save_png(decode(generator, latent), out / "result.png")
