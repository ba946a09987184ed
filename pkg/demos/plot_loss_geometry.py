"""
Loss geometry on the unit sphere
================================

The style loss is a squared half-angle. Sweep a vector around a great circle
and compare the loss with the angle it makes with a fixed style embedding.
"""

import math

import torch

from promptpainter import chord_term, normalize, style_loss

s = normalize(torch.tensor([1.0, 0.0, 0.0], dtype=torch.float64))
q = torch.tensor([0.0, 1.0, 0.0], dtype=torch.float64)

print(f"{'theta':>8} {'chord_term':>12} {'(theta/2)^2':>12}")
for k in range(9):
    theta = k * math.pi / 8
    f = math.cos(theta) * s + math.sin(theta) * q
    print(f"{theta:8.4f} {float(chord_term(f, s)):12.8f} {(theta / 2) ** 2:12.8f}")

# Two styles with weights: the total is a weighted mean of the terms, times two.
f = normalize(torch.tensor([1.0, 1.0, 0.0], dtype=torch.float64))
loss = style_loss(f, [(s, 1.0), (normalize(q), 3.0)])
print("per style:", [round(float(x), 6) for x in loss.per_style])
print("total:    ", round(float(loss), 6), " (both at 45 degrees: 2 * (pi/8)^2 =", round(2 * (math.pi / 8) ** 2, 6), ")")

# Along the sphere the gradient norm is theta / 2. The arcsin derivative is
# capped at argument 1 - 1e-7, so within about 1e-3 rad of the antipode the
# gradient shrinks instead of blowing up, and it is zero exactly there.
for gap in (1e-1, 1e-2, 1e-4, 1e-7):
    theta = math.pi - gap
    f = (math.cos(theta) * s + math.sin(theta) * q).requires_grad_(True)
    chord_term(f, s).backward()
    print(f"pi - {gap:g}: |grad| = {float(f.grad.norm()):.6f}  (theta/2 = {theta / 2:.6f})")
