"""Spherical distance loss between image and style embeddings.

For unit vectors u, v at geodesic angle theta the chord length is
``|u - v| = 2 sin(theta / 2)``, so ``arcsin(|u - v| / 2) ** 2 == (theta / 2) ** 2``.
The style loss is ``2 / sum(w) * sum_i w_i * arcsin(|f - s_i| / 2) ** 2``, which
with unit weights is twice the mean squared half-angle over the style set.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence

import torch

from .errors import DomainError

# Cap for the arcsin derivative at the antipodal point, where it is unbounded.
ARG_CAP = 1.0 - 1e-7
UNIT_TOLERANCE = 1e-3


class _ClampedArcsin(torch.autograd.Function):
    @staticmethod
    def forward(ctx, x):
        ctx.save_for_backward(x)
        return torch.asin(x.clamp(0.0, 1.0))

    @staticmethod
    def backward(ctx, grad):
        (x,) = ctx.saved_tensors
        x = x.clamp(max=ARG_CAP)
        return grad / torch.sqrt(1.0 - x * x)


def clamped_arcsin(x: torch.Tensor) -> torch.Tensor:
    """``arcsin(clamp(x, 0, 1))`` with the derivative capped below x = 1."""
    return _ClampedArcsin.apply(x)


@dataclass(frozen=True)
class LossValue:
    """Loss total plus the raw squared half-angle for each style.

    Both fields are tensors; ``total`` keeps its autograd graph when the
    inputs required grad.
    """

    total: torch.Tensor
    per_style: torch.Tensor

    def __float__(self):
        return float(self.total.detach())

    def as_floats(self) -> tuple[float, list[float]]:
        return float(self.total.detach()), [float(x) for x in self.per_style.detach()]


def _as_vectors(v) -> torch.Tensor:
    if not isinstance(v, torch.Tensor):
        v = torch.as_tensor(v, dtype=torch.float64)
    return v


def _check_unit(v: torch.Tensor, name: str) -> None:
    with torch.no_grad():
        norms = torch.linalg.vector_norm(v, dim=-1)
        if not torch.isfinite(norms).all():
            raise DomainError(f"{name} contains non-finite values")
        if (norms - 1).abs().max() > UNIT_TOLERANCE:
            raise DomainError(f"{name} must be unit-norm (norm {float(norms.flatten()[0]):.6g})")


def chord_term(f, s) -> torch.Tensor:
    """Squared arcsin of half the chord between unit vectors ``f`` and ``s``."""
    f, s = _as_vectors(f), _as_vectors(s)
    _check_unit(f, "f")
    _check_unit(s, "s")
    # |f - s|^2 + |f + s|^2 = 4 on the sphere; dividing by it instead of 2 cancels
    # the norm rounding that arcsin would amplify to ~1e-8 near antipodal pairs.
    minus = torch.linalg.vector_norm(f - s, dim=-1)
    plus = torch.linalg.vector_norm(f + s, dim=-1)
    half_chord = minus / torch.sqrt(minus * minus + plus * plus)
    return clamped_arcsin(half_chord) ** 2


def _unpack_styles(styles, like: torch.Tensor) -> tuple[torch.Tensor, torch.Tensor]:
    if len(styles) == 0:
        raise DomainError("style list must not be empty")
    embs, weights = [], []
    for item in styles:
        if isinstance(item, tuple):
            emb, w = item
        else:
            emb, w = item, 1.0
        embs.append(_as_vectors(emb).to(like.dtype))
        weights.append(float(w))
    if any(not w > 0 for w in weights):
        raise DomainError("style weights must be positive")
    mat = torch.stack(embs)
    _check_unit(mat, "style embedding")
    return mat, torch.tensor(weights, dtype=like.dtype)


def _combine(per_style: torch.Tensor, weights: torch.Tensor) -> torch.Tensor:
    return 2.0 / weights.sum() * (weights * per_style).sum(dim=-1)


def style_loss(f, styles: Sequence) -> LossValue:
    """Loss of one image embedding against a weighted style list.

    ``styles`` holds ``(embedding, weight)`` pairs or bare embeddings (weight 1).
    """
    f = _as_vectors(f)
    _check_unit(f, "f")
    mat, weights = _unpack_styles(styles, f)
    per_style = clamped_arcsin(torch.linalg.vector_norm(f[None, :] - mat, dim=-1) / 2) ** 2
    return LossValue(_combine(per_style, weights), per_style)


def batch_loss(views, styles: Sequence) -> LossValue:
    """Mean of :func:`style_loss` over the embeddings of several augmented views."""
    if isinstance(views, torch.Tensor):
        if views.ndim == 1:
            views = views[None, :]
    else:
        views = list(views)
        if not views:
            raise DomainError("views must not be empty")
        views = torch.stack([_as_vectors(v) for v in views])
    if views.shape[0] == 0:
        raise DomainError("views must not be empty")
    _check_unit(views, "view embedding")
    mat, weights = _unpack_styles(styles, views)
    chords = torch.linalg.vector_norm(views[:, None, :] - mat[None, :, :], dim=-1) / 2
    per_view = clamped_arcsin(chords) ** 2
    per_style = per_view.mean(dim=0)
    return LossValue(_combine(per_view, weights).mean(), per_style)
