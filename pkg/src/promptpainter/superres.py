"""Pluggable super-resolution stage with a deterministic Lanczos-3 baseline."""

from __future__ import annotations

import numpy as np
import torch

from .errors import ConfigError
from .image import check_image


class Upscaler:
    """Base class for upscalers. ``factor`` must be 2 or 4."""

    deterministic = True

    def __init__(self, identity: str, factor: int = 2):
        if factor not in (2, 4):
            raise ConfigError(f"must be 2 or 4, got {factor!r}", "superres.factor")
        self.identity = identity
        self.factor = factor

    def _upscale(self, img: torch.Tensor) -> torch.Tensor:
        raise NotImplementedError

    def __repr__(self):
        return f"{type(self).__name__}(factor={self.factor})"


def lanczos_kernel(x: np.ndarray, a: int = 3) -> np.ndarray:
    x = np.asarray(x, dtype=np.float64)
    return np.where(np.abs(x) < a, np.sinc(x) * np.sinc(x / a), 0.0)


def lanczos_matrix(n_in: int, n_out: int, a: int = 3) -> np.ndarray:
    """Row-normalized n_out x n_in resampling matrix with edge-clamped taps.

    Output sample ``j`` sits at input coordinate ``(j + 0.5) * n_in / n_out - 0.5``
    (pixel-centre alignment).
    """
    scale = n_in / n_out
    mat = np.zeros((n_out, n_in))
    for j in range(n_out):
        centre = (j + 0.5) * scale - 0.5
        base = int(np.floor(centre))
        taps = np.arange(base - a + 1, base + a + 1)
        weights = lanczos_kernel(centre - taps, a)
        np.add.at(mat[j], np.clip(taps, 0, n_in - 1), weights)
    return mat / mat.sum(axis=1, keepdims=True)


class LanczosUpscaler(Upscaler):
    def __init__(self, factor: int = 2):
        super().__init__("lanczos", factor)

    def _upscale(self, img):
        arr = img.detach().cpu().numpy().astype(np.float64)
        h, w = arr.shape[:2]
        rows = lanczos_matrix(h, h * self.factor)
        cols = lanczos_matrix(w, w * self.factor)
        out = np.einsum("ij,jkc,lk->ilc", rows, arr, cols)
        return torch.from_numpy(out).to(img.dtype)


UPSCALERS = {"lanczos": LanczosUpscaler}


def get_upscaler(identity: str, factor: int = 2) -> Upscaler:
    try:
        cls = UPSCALERS[identity]
    except KeyError:
        raise ConfigError(f"unknown upscaler {identity!r}; known: {sorted(UPSCALERS)}", "superres.adapter") from None
    return cls(factor)


def upscale(u: Upscaler, img: torch.Tensor) -> torch.Tensor:
    """Upscale by ``u.factor``; ringing is clamped back into [0, 1]."""
    check_image(img)
    out = u._upscale(img)
    return out.clamp(0.0, 1.0)
