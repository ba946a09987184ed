import numpy as np
import pytest
import torch

from promptpainter import StyleParam, ToyEncoder, ToyGenerator
from promptpainter.image import save_png


def central_difference(fn, x: torch.Tensor, indices, h: float = 1e-6) -> np.ndarray:
    """d fn / d x[idx] by central differences, for each flat index in ``indices``."""
    out = []
    flat = x.detach().clone().reshape(-1)
    for idx in indices:
        plus, minus = flat.clone(), flat.clone()
        plus[idx] += h
        minus[idx] -= h
        out.append((float(fn(plus.reshape(x.shape))) - float(fn(minus.reshape(x.shape)))) / (2 * h))
    return np.array(out)


def autograd_at(fn, x: torch.Tensor, indices) -> np.ndarray:
    leaf = x.detach().clone().requires_grad_(True)
    (grad,) = torch.autograd.grad(fn(leaf), leaf)
    return grad.reshape(-1)[list(indices)].numpy()


def relative_error(analytic, numeric) -> float:
    analytic, numeric = np.asarray(analytic), np.asarray(numeric)
    return float(np.linalg.norm(analytic - numeric) / max(np.linalg.norm(numeric), 1e-12))


def smooth_image(height=32, width=32, seed=7) -> torch.Tensor:
    rng = np.random.default_rng(seed)
    yy, xx = np.mgrid[0:height, 0:width]
    yy, xx = yy / height, xx / width
    img = np.stack(
        [
            0.5 + 0.3 * np.sin(2 * np.pi * (xx + rng.random())),
            0.5 + 0.3 * np.cos(2 * np.pi * (yy + rng.random())),
            0.4 + 0.4 * xx * yy,
        ],
        axis=-1,
    )
    return torch.tensor(img)


@pytest.fixture
def encoder():
    return ToyEncoder()


@pytest.fixture
def generator():
    return ToyGenerator()


@pytest.fixture
def image():
    return smooth_image()


@pytest.fixture
def png_path(tmp_path):
    def write(img=None, name="img.png"):
        return str(save_png(smooth_image() if img is None else img, tmp_path / name))
    return write


@pytest.fixture
def text_style():
    return StyleParam.text("a lighthouse at dusk")


def pytest_terminal_summary(terminalreporter):
    import sys

    module = sys.modules.get("test_acceptance")
    if module is None or not module.RESULTS:
        return
    terminalreporter.section("acceptance criteria")
    for line in module.RESULTS:
        terminalreporter.write_line(line)
