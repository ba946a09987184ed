"""Latent generator interface, a deterministic toy generator and level-to-level latent transfer."""

from __future__ import annotations

import contextlib
import threading
from dataclasses import dataclass

import torch
import torch.nn.functional as F

from .errors import DomainError
from .image import check_image, resize, to_nchw, from_nchw


@dataclass
class LatentTensor:
    """The learnable tensor plus the (height, width) of the image it decodes to."""

    values: torch.Tensor
    size: tuple[int, int]

    @property
    def resolution(self) -> int:
        h, w = self.size
        if h != w:
            raise DomainError(f"latent decodes to a non-square {h}x{w} image")
        return h

    @property
    def shape(self) -> tuple[int, ...]:
        return tuple(self.values.shape)


class Generator:
    """Abstract latent generator: ``encode`` images, ``decode`` latents.

    Subclasses set ``stride`` and ``latent_channels`` (or override
    :meth:`latent_shape_for`) and implement ``_encode``/``_decode``/``_sample``
    on plain tensors. ``decode`` must be differentiable when
    ``differentiable`` is true.
    """

    stride = 1
    latent_channels = 1
    differentiable = True
    reentrant = True
    dtype = torch.float64

    def __init__(self, identity: str):
        self.identity = identity
        self._lock = threading.Lock()

    def latent_shape_for(self, height: int, width: int | None = None) -> tuple[int, int, int]:
        width = height if width is None else width
        self.check_size(height, width)
        return (self.latent_channels, height // self.stride, width // self.stride)

    def check_size(self, height: int, width: int) -> None:
        if height < 8 or width < 8:
            raise DomainError(f"resolution {height}x{width} below the 8-pixel minimum")
        if height % self.stride or width % self.stride:
            raise DomainError(
                f"image size {height}x{width} is not divisible by the generator stride {self.stride}"
            )

    def guard(self):
        return contextlib.nullcontext() if self.reentrant else self._lock

    def _encode(self, batch: torch.Tensor) -> torch.Tensor:
        raise NotImplementedError

    def _decode(self, latent: torch.Tensor, size: tuple[int, int]) -> torch.Tensor:
        raise NotImplementedError

    def _sample(self, shape: tuple[int, ...], seed: int) -> torch.Tensor:
        raise NotImplementedError

    def __repr__(self):
        return f"{type(self).__name__}({self.identity!r}, stride={self.stride})"


class ToyGenerator(Generator):
    """Closed-form, weight-free generator.

    encode: 4x4 average pool, then a seeded 3 -> 8 channel linear map ``E``.
    decode: the 8 -> 3 map ``G = 4 * pinv(E)`` with bias -2, bilinear x4
    upsampling, then the logistic function. The round trip is therefore
    ``sigmoid(4 * upsample(pool(img)) - 2)``, close to the identity around
    mid-grey and strictly inside (0, 1). A zero latent decodes to the constant
    ``sigmoid(-2)``. Random latents are standard normal.
    """

    stride = 4
    latent_channels = 8
    bias = -2.0

    def __init__(self, seed: int = 0):
        super().__init__("toy-generator")
        self.seed = seed
        gen = torch.Generator().manual_seed(seed)
        self.enc_map = torch.randn(self.latent_channels, 3, generator=gen, dtype=torch.float64)
        self.dec_map = 4.0 * torch.linalg.pinv(self.enc_map)

    def _encode(self, batch):
        pooled = F.avg_pool2d(batch, self.stride)
        return torch.einsum("kc,nchw->nkhw", self.enc_map.to(batch.dtype), pooled)

    def _decode(self, latent, size):
        rgb = torch.einsum("ck,nkhw->nchw", self.dec_map.to(latent.dtype), latent) + self.bias
        rgb = F.interpolate(rgb, size=size, mode="bilinear", align_corners=False)
        return torch.sigmoid(rgb)

    def _sample(self, shape, seed):
        gen = torch.Generator().manual_seed(seed)
        return torch.randn(shape, generator=gen, dtype=self.dtype)


def encode(gen: Generator, img: torch.Tensor) -> LatentTensor:
    check_image(img)
    h, w = img.shape[:2]
    gen.check_size(h, w)
    with gen.guard():
        values = gen._encode(to_nchw(img))[0]
    return LatentTensor(values, (h, w))


def decode(gen: Generator, t: LatentTensor) -> torch.Tensor:
    expected = gen.latent_shape_for(*t.size)
    if tuple(t.values.shape) != expected:
        raise DomainError(f"latent shape {tuple(t.values.shape)} does not match expected {expected}")
    with gen.guard():
        out = gen._decode(t.values[None], t.size)
    return from_nchw(out)


def random_latent(gen: Generator, resolution: int, seed: int) -> LatentTensor:
    shape = gen.latent_shape_for(resolution)
    with gen.guard():
        values = gen._sample(shape, seed)
    return LatentTensor(values, (resolution, resolution))


def latent_transfer(gen: Generator, t: LatentTensor, new_resolution: int) -> LatentTensor:
    """Hand a latent to a larger level: decode, bilinear resize, re-encode."""
    if new_resolution <= max(t.size):
        raise DomainError(
            f"latent transfer must upscale: {t.size[0]}x{t.size[1]} -> {new_resolution}x{new_resolution}"
        )
    gen.check_size(new_resolution, new_resolution)
    with torch.no_grad():
        img = decode(gen, LatentTensor(t.values.detach(), t.size))
        img = resize(img, new_resolution, new_resolution).clamp(0.0, 1.0)
        return encode(gen, img)
