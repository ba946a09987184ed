"""Image buffers: H x W x 3 float tensors with values in [0, 1].

Everything downstream keeps images as ``torch.Tensor`` so the optimization
loop can backpropagate through them. PNG files are 8 bits per channel and are
mapped to floats by ``value / 255``.
"""

from __future__ import annotations

from pathlib import Path

import numpy as np
import torch
import torch.nn.functional as F
from PIL import Image

from .errors import DomainError

MIN_SIZE = 8


def as_image(pixels, dtype=torch.float64) -> torch.Tensor:
    """Convert an array-like H x W x 3 in [0, 1] to a validated tensor."""
    if not isinstance(pixels, torch.Tensor):
        pixels = torch.as_tensor(np.asarray(pixels), dtype=dtype)
    check_image(pixels)
    return pixels


def check_image(img: torch.Tensor, *, check_range: bool = True) -> None:
    if img.ndim != 3 or img.shape[-1] != 3:
        raise DomainError(f"expected an H x W x 3 image, got shape {tuple(img.shape)}")
    h, w = img.shape[:2]
    if h < MIN_SIZE or w < MIN_SIZE:
        raise DomainError(f"image must be at least {MIN_SIZE}x{MIN_SIZE}, got {h}x{w}")
    if check_range:
        with torch.no_grad():
            if not torch.isfinite(img).all():
                raise DomainError("image contains non-finite values")
            if img.min() < 0 or img.max() > 1:
                raise DomainError("image values must lie in [0, 1]")


def to_nchw(img: torch.Tensor) -> torch.Tensor:
    return img.permute(2, 0, 1).unsqueeze(0)


def from_nchw(batch: torch.Tensor) -> torch.Tensor:
    return batch.squeeze(0).permute(1, 2, 0)


def resize(img: torch.Tensor, height: int, width: int) -> torch.Tensor:
    """Bilinear resize of an H x W x 3 image; differentiable in the pixels."""
    if img.shape[0] == height and img.shape[1] == width:
        return img
    out = F.interpolate(to_nchw(img), size=(height, width), mode="bilinear", align_corners=False)
    return from_nchw(out)


def resize_batch(batch: torch.Tensor, size: int) -> torch.Tensor:
    """Bilinear resize of an N x 3 x H x W batch to N x 3 x size x size."""
    if batch.shape[-2:] == (size, size):
        return batch
    return F.interpolate(batch, size=(size, size), mode="bilinear", align_corners=False)


def load_png(path, dtype=torch.float64) -> torch.Tensor:
    with Image.open(path) as im:
        arr = np.asarray(im.convert("RGB"), dtype=np.float64) / 255.0
    return torch.as_tensor(arr, dtype=dtype)


def to_uint8(img: torch.Tensor) -> np.ndarray:
    arr = img.detach().cpu().numpy().astype(np.float64)
    return np.round(np.clip(arr, 0.0, 1.0) * 255.0).astype(np.uint8)


def save_png(img: torch.Tensor, path) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    # Fixed encoder settings keep the byte stream reproducible.
    Image.fromarray(to_uint8(img)).save(path, format="PNG", optimize=False, compress_level=6)
    return path
