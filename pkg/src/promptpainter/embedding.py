"""Joint image-text encoder interface, normalization and style-set projection."""

from __future__ import annotations

import contextlib
import hashlib
import os
import threading
from dataclasses import dataclass
from typing import Sequence

import torch

from .errors import BackendError, DomainError
from .image import check_image, load_png, resize_batch, to_nchw


def normalize(v, dim: int = -1) -> torch.Tensor:
    """Scale ``v`` to unit L2 norm along ``dim``.

    Arrays that are not tensors are converted to float64. Gradients flow
    through the division, so this is safe to use inside the optimization loop.
    """
    if not isinstance(v, torch.Tensor):
        v = torch.as_tensor(v, dtype=torch.float64)
    if v.ndim == 0:
        raise DomainError("cannot normalize a scalar")
    norm = torch.linalg.vector_norm(v, dim=dim, keepdim=True)
    with torch.no_grad():
        if not torch.isfinite(v).all():
            raise DomainError("vector contains non-finite values")
        if (norm == 0).any():
            raise DomainError("cannot normalize zero vector")
    return v / norm


@dataclass(frozen=True)
class StyleParam:
    """One element of the style set: a text prompt or a style image."""

    kind: str
    payload: str
    weight: float = 1.0

    def __post_init__(self):
        if self.kind not in ("text", "image"):
            raise DomainError(f"style kind must be 'text' or 'image', got {self.kind!r}")
        if not isinstance(self.payload, str) or not self.payload:
            raise DomainError(f"{self.kind} style payload must be a non-empty string")
        if not self.weight > 0:
            raise DomainError(f"style weight must be positive, got {self.weight}")
        if self.kind == "image" and not (os.path.isfile(self.payload) and os.access(self.payload, os.R_OK)):
            raise DomainError(f"style image {self.payload!r} is not a readable file")

    @classmethod
    def text(cls, prompt: str, weight: float = 1.0) -> "StyleParam":
        return cls("text", prompt, weight)

    @classmethod
    def image(cls, path, weight: float = 1.0) -> "StyleParam":
        return cls("image", os.fspath(path), weight)


@dataclass(frozen=True)
class StyleSet:
    params: tuple[StyleParam, ...]

    def __post_init__(self):
        object.__setattr__(self, "params", tuple(self.params))
        if not self.params:
            raise DomainError("style set must contain at least one style parameter")

    def __len__(self):
        return len(self.params)

    def __iter__(self):
        return iter(self.params)


class Encoder:
    """Abstract joint image-text encoder.

    Subclasses implement :meth:`encode_text` and :meth:`encode_images` and
    return *unnormalized* vectors; the module-level ``embed_*`` functions
    handle resampling, normalization and locking. ``encode_images`` receives an
    N x 3 x R x R batch at ``input_resolution`` and must be differentiable
    with respect to it.
    """

    reentrant = True

    def __init__(self, identity: str, dim: int, input_resolution: int):
        if dim <= 0:
            raise DomainError(f"encoder dim must be positive, got {dim}")
        if input_resolution <= 0:
            raise DomainError(f"encoder input_resolution must be positive, got {input_resolution}")
        self.identity = identity
        self.dim = dim
        self.input_resolution = input_resolution
        self._lock = threading.Lock()
        self._style_cache: dict = {}

    def encode_text(self, text: str) -> torch.Tensor:
        raise NotImplementedError

    def encode_images(self, batch: torch.Tensor) -> torch.Tensor:
        raise NotImplementedError

    def guard(self):
        """Context manager serializing calls for non-reentrant backends."""
        return contextlib.nullcontext() if self.reentrant else self._lock

    def clear_cache(self) -> None:
        self._style_cache.clear()

    def __repr__(self):
        return f"{type(self).__name__}({self.identity!r}, dim={self.dim}, input_resolution={self.input_resolution})"


class ToyEncoder(Encoder):
    """Deterministic, weight-free encoder for tests and demos.

    Images are bilinearly resampled to 32x32, flattened in H, W, C order,
    multiplied by a seeded Gaussian projection to 16 dimensions and squashed
    with ``tanh``. Texts hash (SHA-256, salted with the seed) to a seeded
    Gaussian vector. ``calls`` counts backend invocations.
    """

    def __init__(self, dim: int = 16, input_resolution: int = 32, seed: int = 0):
        super().__init__("toy-encoder", dim, input_resolution)
        self.seed = seed
        n_in = 3 * input_resolution * input_resolution
        gen = torch.Generator().manual_seed(seed)
        self.projection = torch.randn(dim, n_in, generator=gen, dtype=torch.float64) / n_in**0.5
        self.calls = 0

    def encode_text(self, text: str) -> torch.Tensor:
        self.calls += 1
        digest = hashlib.sha256(f"{self.seed}:{text}".encode("utf-8")).digest()
        gen = torch.Generator().manual_seed(int.from_bytes(digest[:8], "little"))
        return torch.randn(self.dim, generator=gen, dtype=torch.float64)

    def encode_images(self, batch: torch.Tensor) -> torch.Tensor:
        self.calls += 1
        flat = batch.permute(0, 2, 3, 1).reshape(batch.shape[0], -1)
        return torch.tanh(flat @ self.projection.to(batch.dtype).T)


def embed_text(enc: Encoder, text: str) -> torch.Tensor:
    if not isinstance(text, str) or not text:
        raise DomainError("cannot embed empty text")
    try:
        with enc.guard():
            raw = enc.encode_text(text)
    except (DomainError, BackendError):
        raise
    except Exception as exc:
        raise BackendError(f"encoder {enc.identity!r} failed on text: {exc}") from exc
    return normalize(raw.reshape(-1))


def embed_images(enc: Encoder, batch: torch.Tensor) -> torch.Tensor:
    """Embed an N x 3 x H x W batch; returns N x dim unit vectors."""
    if batch.ndim != 4 or batch.shape[1] != 3:
        raise DomainError(f"expected an N x 3 x H x W batch, got shape {tuple(batch.shape)}")
    batch = resize_batch(batch, enc.input_resolution)
    try:
        with enc.guard():
            raw = enc.encode_images(batch)
    except (DomainError, BackendError):
        raise
    except Exception as exc:
        raise BackendError(f"encoder {enc.identity!r} failed on images: {exc}") from exc
    return normalize(raw, dim=-1)


def embed_image(enc: Encoder, img: torch.Tensor) -> torch.Tensor:
    """Embed one H x W x 3 image, differentiably in its pixels."""
    if img.ndim != 3 or img.shape[-1] != 3:
        raise DomainError(f"expected 3 channels (H x W x 3), got shape {tuple(img.shape)}")
    check_image(img)
    return embed_images(enc, to_nchw(img))[0]


def _cache_key(styles: StyleSet):
    key = []
    for p in styles:
        stamp = os.stat(p.payload).st_mtime_ns if p.kind == "image" else None
        key.append((p.kind, p.payload, stamp))
    return tuple(key)


def project_style_set(enc: Encoder, styles: StyleSet | Sequence[StyleParam], dtype=torch.float64) -> list[tuple[torch.Tensor, float]]:
    """Embed every style parameter once; repeated calls hit the encoder's cache."""
    if not isinstance(styles, StyleSet):
        styles = StyleSet(tuple(styles))
    key = (_cache_key(styles), dtype)
    cached = enc._style_cache.get(key)
    if cached is None:
        embeddings = []
        for i, p in enumerate(styles):
            try:
                if p.kind == "text":
                    emb = embed_text(enc, p.payload)
                else:
                    emb = embed_image(enc, load_png(p.payload, dtype=dtype))
            except (DomainError, BackendError) as exc:
                raise type(exc)(f"style parameter {i} ({p.kind} {p.payload!r}): {exc}") from exc
            embeddings.append(emb.detach().to(dtype))
        cached = tuple(embeddings)
        enc._style_cache[key] = cached
    return [(e, p.weight) for e, p in zip(cached, styles)]
