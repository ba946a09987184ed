"""Fractal value noise and the differentiable random augmentation chain.

All randomness is drawn from ``numpy.random.default_rng(seed)`` so every
function here is a pure function of its arguments. The geometric parameters
of a view are drawn up front in a fixed order, which keeps the draws of one
stage independent of whether another stage is switched off.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, replace

import numpy as np
import torch
import torch.nn.functional as F

from .errors import ConfigError, DomainError
from .image import MIN_SIZE, check_image, resize


@dataclass(frozen=True)
class NoiseConfig:
    octaves: int = 4
    persistence: float = 0.5
    base_frequency: int = 4
    amplitude: float = 0.1

    def __post_init__(self):
        if int(self.octaves) != self.octaves or self.octaves < 1:
            raise ConfigError("must be an integer >= 1", "noise.octaves")
        if not 0 < self.persistence <= 1:
            raise ConfigError("must lie in (0, 1]", "noise.persistence")
        if int(self.base_frequency) != self.base_frequency or self.base_frequency < 1:
            raise ConfigError("must be an integer >= 1", "noise.base_frequency")
        if not 0 <= self.amplitude <= 0.5:
            raise ConfigError("must lie in [0, 0.5]", "noise.amplitude")


@dataclass(frozen=True)
class AugmentConfig:
    """Parameters of the augmentation chain.

    ``crop_size=None`` means "use the encoder's input resolution"; the
    pipeline fills it in with :meth:`with_crop_size`.
    """

    n_views: int = 8
    resize_range: tuple[float, float] = (0.8, 1.2)
    crop_size: int | None = None
    perspective_scale: float = 0.2
    flip_probability: float = 0.5
    gaussian_sigma: float = 0.02

    def __post_init__(self):
        object.__setattr__(self, "resize_range", tuple(float(x) for x in self.resize_range))
        if int(self.n_views) != self.n_views or self.n_views < 1:
            raise ConfigError("must be an integer >= 1", "augment.n_views")
        if len(self.resize_range) != 2:
            raise ConfigError("must be a [low, high] pair", "augment.resize_range")
        low, high = self.resize_range
        if not 0 < low <= high:
            raise ConfigError("must satisfy 0 < low <= high", "augment.resize_range")
        if self.crop_size is not None and (int(self.crop_size) != self.crop_size or self.crop_size < MIN_SIZE):
            raise ConfigError(f"must be an integer >= {MIN_SIZE}", "augment.crop_size")
        if not 0 <= self.perspective_scale < 1:
            raise ConfigError("must lie in [0, 1)", "augment.perspective_scale")
        if not 0 <= self.flip_probability <= 1:
            raise ConfigError("must lie in [0, 1]", "augment.flip_probability")
        if not self.gaussian_sigma >= 0:
            raise ConfigError("must be >= 0", "augment.gaussian_sigma")

    def with_crop_size(self, size: int) -> "AugmentConfig":
        return self if self.crop_size is not None else replace(self, crop_size=size)

    def min_source_size(self) -> int:
        """Smallest square input that survives the worst-case downscale."""
        return math.ceil(self.crop_size / self.resize_range[0])


def _value_layer(height: int, width: int, cells: int, rng: np.random.Generator) -> np.ndarray:
    lattice = rng.uniform(-1.0, 1.0, size=(cells + 1, cells + 1))
    # Pixel centres mapped onto [0, cells] lattice coordinates.
    y = (np.arange(height) + 0.5) * cells / height
    x = (np.arange(width) + 0.5) * cells / width
    y0 = np.minimum(np.floor(y).astype(int), cells - 1)
    x0 = np.minimum(np.floor(x).astype(int), cells - 1)
    fy = (y - y0)[:, None]
    fx = (x - x0)[None, :]
    v00 = lattice[y0][:, x0]
    v01 = lattice[y0][:, x0 + 1]
    v10 = lattice[y0 + 1][:, x0]
    v11 = lattice[y0 + 1][:, x0 + 1]
    top = v00 * (1 - fx) + v01 * fx
    bottom = v10 * (1 - fx) + v11 * fx
    return top * (1 - fy) + bottom * fy


def fractal_noise(height: int, width: int, cfg: NoiseConfig = NoiseConfig(), seed: int = 0) -> torch.Tensor:
    """Multi-octave value noise in [-1, 1], returned as an H x W x 3 float64 tensor.

    Octave ``o`` has ``base_frequency * 2**o`` lattice cells per edge and
    weight ``persistence**o``; the weighted sum is divided by the total weight,
    so the field stays inside the range of a single layer. The same field is
    used for all three channels.
    """
    if height < MIN_SIZE or width < MIN_SIZE:
        raise DomainError(f"noise field must be at least {MIN_SIZE}x{MIN_SIZE}, got {height}x{width}")
    rng = np.random.default_rng(seed)
    total = np.zeros((height, width))
    norm = 0.0
    for o in range(cfg.octaves):
        weight = cfg.persistence**o
        total += weight * _value_layer(height, width, cfg.base_frequency * 2**o, rng)
        norm += weight
    field = np.clip(total / norm, -1.0, 1.0)
    return torch.from_numpy(np.repeat(field[:, :, None], 3, axis=2))


def add_noise(img: torch.Tensor, cfg: NoiseConfig = NoiseConfig(), seed: int = 0) -> torch.Tensor:
    """``clamp(img + amplitude * fractal_noise, 0, 1)``; gradient 1 where unclamped."""
    check_image(img, check_range=False)
    if cfg.amplitude == 0:
        return img
    noise = fractal_noise(img.shape[0], img.shape[1], cfg, seed).to(img.dtype)
    return (img + cfg.amplitude * noise).clamp(0.0, 1.0)


def _homography(src: np.ndarray, dst: np.ndarray) -> np.ndarray:
    """3x3 matrix mapping the four ``dst`` points onto the ``src`` points."""
    rows, rhs = [], []
    for (x, y), (u, v) in zip(dst, src):
        rows.append([x, y, 1, 0, 0, 0, -u * x, -u * y])
        rows.append([0, 0, 0, x, y, 1, -v * x, -v * y])
        rhs.extend([u, v])
    h = np.linalg.solve(np.array(rows), np.array(rhs))
    return np.append(h, 1.0).reshape(3, 3)


def _perspective(img: torch.Tensor, offsets: np.ndarray) -> torch.Tensor:
    size = img.shape[0]
    corners = np.array([[0, 0], [size, 0], [size, size], [0, size]], dtype=np.float64)
    mat = _homography(corners + offsets, corners)
    centres = np.arange(size) + 0.5
    xs, ys = np.meshgrid(centres, centres)
    pts = np.stack([xs, ys, np.ones_like(xs)], axis=-1) @ mat.T
    src = pts[..., :2] / pts[..., 2:]
    grid = torch.from_numpy(2.0 * src / size - 1.0).to(img.dtype)[None]
    out = F.grid_sample(
        img.permute(2, 0, 1)[None], grid, mode="bilinear", padding_mode="border", align_corners=False
    )
    return out[0].permute(1, 2, 0)


def random_view(img: torch.Tensor, cfg: AugmentConfig, seed: int) -> torch.Tensor:
    """One augmented crop_size x crop_size view of ``img``.

    Stages, in order: independent per-axis bilinear resize, uniform random
    crop, random perspective warp (each corner moves by at most
    ``perspective_scale * crop_size``; edge-clamped bilinear sampling),
    horizontal flip, additive Gaussian noise, clamp to [0, 1].
    """
    check_image(img, check_range=False)
    if cfg.crop_size is None:
        raise DomainError("augment.crop_size is unset; call AugmentConfig.with_crop_size first")
    crop = cfg.crop_size
    rng = np.random.default_rng(seed)
    scale_y, scale_x = rng.uniform(*cfg.resize_range, size=2)
    u_top, u_left = rng.random(2)
    shift = cfg.perspective_scale * crop / 2.0
    offsets = rng.uniform(-1.0, 1.0, size=(4, 2)) * shift
    flip = rng.random() < cfg.flip_probability
    noise = rng.standard_normal((crop, crop, 3))

    h, w = img.shape[:2]
    new_h, new_w = round(h * scale_y), round(w * scale_x)
    if min(new_h, new_w) < crop:
        raise DomainError(
            f"image {h}x{w} resized to {new_h}x{new_w} is smaller than crop_size {crop}"
        )
    out = resize(img, new_h, new_w)
    top = min(int(u_top * (new_h - crop + 1)), new_h - crop)
    left = min(int(u_left * (new_w - crop + 1)), new_w - crop)
    out = out[top : top + crop, left : left + crop]
    if cfg.perspective_scale > 0:
        out = _perspective(out, offsets)
    if flip:
        out = torch.flip(out, dims=[1])
    if cfg.gaussian_sigma > 0:
        out = out + cfg.gaussian_sigma * torch.from_numpy(noise).to(out.dtype)
    return out.clamp(0.0, 1.0)


def augment_batch(img: torch.Tensor, cfg: AugmentConfig, n: int | None = None, seed: int = 0) -> list[torch.Tensor]:
    """``n`` views (default ``cfg.n_views``); view ``i`` uses seed ``seed + i``."""
    n = cfg.n_views if n is None else n
    if n < 1:
        raise DomainError(f"number of views must be >= 1, got {n}")
    return [random_view(img, cfg, seed + i) for i in range(n)]
