"""The optimization loop: initialize the latent, step it, and schedule resolutions coarse to fine.

One step runs four phases on the learnable latent ``t``:

1. decode ``t`` to an image, add fractal noise, draw augmented views;
2. embed every view with the joint encoder;
3. score the views against the precomputed style embeddings;
4. backpropagate to ``t`` and let the optimizer update it.
"""

from __future__ import annotations

import contextlib
import logging
import time
from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np
import torch

from .augmentation import AugmentConfig, NoiseConfig, add_noise, augment_batch
from .embedding import Encoder, StyleSet, embed_images, project_style_set
from .errors import ConfigError, NumericalAbort
from .generator import Generator, LatentTensor, decode, encode, latent_transfer, random_latent
from .image import load_png, resize
from .loss import LossValue, batch_loss
from .superres import Upscaler, upscale

log = logging.getLogger(__name__)

STAGES = ("decode", "augment", "embed", "backprop", "update")
OPTIMIZERS = ("plain_gradient_descent", "adaptive_moments")


@dataclass(frozen=True)
class LevelConfig:
    resolution: int
    iterations: int
    learning_rate: float

    def __post_init__(self):
        if int(self.resolution) != self.resolution or self.resolution < 8:
            raise ConfigError(f"resolution must be an integer >= 8, got {self.resolution!r}", "levels")
        if int(self.iterations) != self.iterations or self.iterations < 1:
            raise ConfigError(f"iterations must be an integer >= 1, got {self.iterations!r}", "levels")
        if not self.learning_rate >= 0:
            raise ConfigError(f"learning_rate must be >= 0, got {self.learning_rate!r}", "levels")


def default_levels(size: int = 1024) -> tuple[LevelConfig, ...]:
    """256 px x 300 iterations, 512 px x 200, then ``size`` x 100; levels not below ``size`` are dropped."""
    levels = [LevelConfig(r, n, 0.1) for r, n in ((256, 300), (512, 200)) if r < size]
    levels.append(LevelConfig(size, 100, 0.1))
    return tuple(levels)


@dataclass(frozen=True)
class RunConfig:
    styles: StyleSet
    levels: tuple[LevelConfig, ...] = field(default_factory=default_levels)
    augment: AugmentConfig = AugmentConfig()
    noise: NoiseConfig = NoiseConfig()
    optimizer: str = "adaptive_moments"
    seed: int = 0
    content: str | None = None

    def __post_init__(self):
        if not isinstance(self.styles, StyleSet):
            object.__setattr__(self, "styles", StyleSet(tuple(self.styles)))
        object.__setattr__(self, "levels", tuple(self.levels))
        if not self.levels:
            raise ConfigError("at least one level is required", "levels")
        res = [lv.resolution for lv in self.levels]
        if any(b <= a for a, b in zip(res, res[1:])):
            raise ConfigError(f"resolutions must be strictly increasing, got {res}", "levels")
        if self.optimizer not in OPTIMIZERS:
            raise ConfigError(f"must be one of {OPTIMIZERS}, got {self.optimizer!r}", "optimizer")
        if int(self.seed) != self.seed or self.seed < 0:
            raise ConfigError(f"must be a non-negative integer, got {self.seed!r}", "seed")


@dataclass
class StepRecord:
    level: int
    iteration: int
    total: float
    per_style: list[float]
    timings: dict[str, float]
    timestamp: float
    view_embeddings: torch.Tensor | None = None


@dataclass
class LossTrace:
    records: list[StepRecord] = field(default_factory=list)

    def __len__(self):
        return len(self.records)

    def for_level(self, level: int) -> list[StepRecord]:
        return [r for r in self.records if r.level == level]

    def totals(self) -> list[float]:
        return [r.total for r in self.records]


@dataclass
class RunResult:
    image: torch.Tensor
    trace: LossTrace
    latent: LatentTensor
    pre_superres: torch.Tensor


def derive_seed(*keys: int) -> int:
    """Stable 32-bit seed from a tuple of non-negative integers."""
    return int(np.random.SeedSequence([int(k) for k in keys]).generate_state(1)[0])


class _StageClock:
    def __init__(self):
        self.ms = {name: 0.0 for name in STAGES}

    @contextlib.contextmanager
    def __call__(self, stage):
        start = time.perf_counter()
        try:
            yield
        finally:
            self.ms[stage] += (time.perf_counter() - start) * 1e3


def make_optimizer(kind: str, params, learning_rate: float) -> torch.optim.Optimizer:
    if kind == "plain_gradient_descent":
        return torch.optim.SGD(params, lr=learning_rate)
    if kind == "adaptive_moments":
        return torch.optim.Adam(params, lr=learning_rate)
    raise ConfigError(f"unknown optimizer {kind!r}", "optimizer")


def prepare_for_views(img: torch.Tensor, augment: AugmentConfig) -> torch.Tensor:
    """Bilinearly enlarge ``img`` if a worst-case downscale would fall below the crop size."""
    need = augment.min_source_size()
    h, w = img.shape[:2]
    if min(h, w) >= need:
        return img
    scale = need / min(h, w)
    return resize(img, max(need, round(h * scale)), max(need, round(w * scale)))


def objective(
    t: LatentTensor,
    styles_emb: Sequence,
    encoder: Encoder,
    generator: Generator,
    augment: AugmentConfig,
    noise: NoiseConfig,
    seed: int,
    clock: _StageClock | None = None,
):
    """Phases 1 to 3 for a fixed ``seed``: returns ``(loss, view_embeddings, decoded_image)``.

    With the seed fixed every random draw is frozen, so the loss is a
    deterministic differentiable function of ``t.values``.
    """
    clock = clock or _StageClock()
    augment = augment.with_crop_size(encoder.input_resolution)
    with clock("decode"):
        img = decode(generator, t)
    with clock("augment"):
        noisy = add_noise(img, noise, derive_seed(seed, 0))
        views = augment_batch(prepare_for_views(noisy, augment), augment, augment.n_views, derive_seed(seed, 1))
        batch = torch.stack(views).permute(0, 3, 1, 2)
    with clock("embed"):
        embs = embed_images(encoder, batch)
        loss = batch_loss(embs, styles_emb)
    return loss, embs, img


def step(
    t: LatentTensor,
    styles_emb: Sequence,
    encoder: Encoder,
    generator: Generator,
    optimizer: torch.optim.Optimizer,
    augment: AugmentConfig,
    noise: NoiseConfig,
    iteration_seed: int,
    *,
    level: int = 0,
    iteration: int = 0,
    started: float | None = None,
    debug: bool = False,
):
    """One optimization step; ``t.values`` must be the leaf the optimizer updates.

    Returns ``(t, record, decoded_image)``. The recorded loss is the one the
    gradient was taken of. Raises :class:`NumericalAbort` on a non-finite loss.
    """
    started = time.perf_counter() if started is None else started
    clock = _StageClock()
    optimizer.zero_grad(set_to_none=True)
    loss, embs, img = objective(t, styles_emb, encoder, generator, augment, noise, iteration_seed, clock)
    total, per_style = loss.as_floats()
    record = StepRecord(
        level=level,
        iteration=iteration,
        total=total,
        per_style=per_style,
        timings=clock.ms,
        timestamp=time.perf_counter() - started,
        view_embeddings=embs.detach().clone() if debug else None,
    )
    if not np.isfinite(total) or not np.all(np.isfinite(per_style)):
        raise NumericalAbort(f"non-finite loss at level {level}, iteration {iteration}: {total}", record)
    with clock("backprop"):
        loss.total.backward()
    with clock("update"):
        optimizer.step()
    record.timestamp = time.perf_counter() - started
    return t, record, img.detach()


def init_latent(cfg: RunConfig, gen: Generator) -> LatentTensor:
    res = cfg.levels[0].resolution
    if cfg.content is None:
        return random_latent(gen, res, cfg.seed)
    try:
        content = load_png(cfg.content, dtype=gen.dtype)
    except OSError as exc:
        raise OSError(f"cannot read content image {cfg.content!r}: {exc}") from exc
    return encode(gen, resize(content, res, res).clamp(0.0, 1.0))


SnapshotFn = Callable[[int, int, torch.Tensor], None]


def run_level(
    t: LatentTensor,
    level: LevelConfig,
    level_index: int,
    styles_emb: Sequence,
    encoder: Encoder,
    generator: Generator,
    cfg: RunConfig,
    *,
    started: float | None = None,
    snapshot: SnapshotFn | None = None,
    debug: bool = False,
    trace: LossTrace | None = None,
) -> tuple[LatentTensor, list[StepRecord]]:
    """Run ``level.iterations`` steps; iteration ``i`` uses seed ``derive_seed(cfg.seed, level_index, i)``.

    ``snapshot(level_index, i, image)`` receives the image decoded in phase 1.
    Records are also appended to ``trace`` as they are produced, so a
    partial trace survives a numerical abort.
    """
    started = time.perf_counter() if started is None else started
    generator.check_size(level.resolution, level.resolution)
    t = LatentTensor(t.values.detach().clone().requires_grad_(True), t.size)
    optimizer = make_optimizer(cfg.optimizer, [t.values], level.learning_rate)
    records = []
    for i in range(level.iterations):
        t, record, img = step(
            t, styles_emb, encoder, generator, optimizer, cfg.augment, cfg.noise,
            derive_seed(cfg.seed, level_index, i),
            level=level_index, iteration=i, started=started, debug=debug,
        )
        records.append(record)
        if trace is not None:
            trace.records.append(record)
        if snapshot is not None:
            snapshot(level_index, i, img)
    log.debug("level %d (%dpx): loss %.6f -> %.6f", level_index, level.resolution,
              records[0].total, records[-1].total)
    return LatentTensor(t.values.detach(), t.size), records


def run_hierarchy(
    cfg: RunConfig,
    encoder: Encoder,
    generator: Generator,
    upscaler: Upscaler | None = None,
    *,
    snapshot: SnapshotFn | None = None,
    debug: bool = False,
) -> RunResult:
    """Initialize, optimize each level, transfer the latent upward, decode and optionally upscale."""
    started = time.perf_counter()
    styles_emb = project_style_set(encoder, cfg.styles, dtype=generator.dtype)
    t = init_latent(cfg, generator)
    trace = LossTrace()
    try:
        for index, level in enumerate(cfg.levels):
            if index > 0:
                t = latent_transfer(generator, t, level.resolution)
            t, _ = run_level(
                t, level, index, styles_emb, encoder, generator, cfg,
                started=started, snapshot=snapshot, debug=debug, trace=trace,
            )
    except NumericalAbort as exc:
        exc.trace = trace
        raise
    with torch.no_grad():
        image = decode(generator, t)
    final = upscale(upscaler, image) if upscaler is not None else image
    return RunResult(image=final, trace=trace, latent=t, pre_superres=image)
