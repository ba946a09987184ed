import numpy as np
import pytest
import torch
from scipy.interpolate import RegularGridInterpolator

from conftest import autograd_at, central_difference, relative_error, smooth_image
from promptpainter import (
    AugmentConfig,
    ConfigError,
    DomainError,
    NoiseConfig,
    add_noise,
    augment_batch,
    fractal_noise,
    random_view,
)
from promptpainter.augmentation import _homography

IDENTITY = AugmentConfig(
    n_views=1, resize_range=(1, 1), crop_size=32, perspective_scale=0, flip_probability=0, gaussian_sigma=0
)


def reference_layer(height, width, cells, lattice):
    """Bilinear value noise via scipy, sampling pixel centres on a [0, cells] lattice."""
    axis = np.arange(cells + 1, dtype=np.float64)
    interp = RegularGridInterpolator((axis, axis), lattice, method="linear")
    y = (np.arange(height) + 0.5) * cells / height
    x = (np.arange(width) + 0.5) * cells / width
    yy, xx = np.meshgrid(y, x, indexing="ij")
    return interp(np.stack([yy, xx], axis=-1))


class TestFractalNoise:
    def test_single_octave_is_base_layer(self):
        cfg = NoiseConfig(octaves=1, base_frequency=4)
        lattice = np.random.default_rng(11).uniform(-1, 1, size=(5, 5))
        expected = reference_layer(40, 24, 4, lattice)
        field = fractal_noise(40, 24, cfg, seed=11)
        assert field.shape == (40, 24, 3)
        assert np.allclose(field[..., 0].numpy(), expected, atol=1e-12)
        assert torch.equal(field[..., 0], field[..., 2])

    def test_octave_sum(self):
        cfg = NoiseConfig(octaves=3, persistence=0.5, base_frequency=2)
        rng = np.random.default_rng(5)
        layers = [reference_layer(32, 32, 2 * 2**o, rng.uniform(-1, 1, size=(2 * 2**o + 1,) * 2)) for o in range(3)]
        expected = (layers[0] + 0.5 * layers[1] + 0.25 * layers[2]) / 1.75
        assert np.allclose(fractal_noise(32, 32, cfg, seed=5)[..., 1].numpy(), expected, atol=1e-12)

    def test_deterministic(self):
        assert torch.equal(fractal_noise(32, 32, seed=3), fractal_noise(32, 32, seed=3))
        assert not torch.equal(fractal_noise(32, 32, seed=3), fractal_noise(32, 32, seed=4))

    @pytest.mark.parametrize("cfg", [NoiseConfig(), NoiseConfig(octaves=6, persistence=1.0, base_frequency=1)])
    def test_bounded_over_100_seeds(self, cfg):
        for seed in range(100):
            field = fractal_noise(24, 40, cfg, seed)
            assert field.min() >= -1 and field.max() <= 1

    def test_degenerate(self):
        with pytest.raises(DomainError):
            fractal_noise(4, 32)

    def test_config_validation(self):
        with pytest.raises(ConfigError, match="octaves"):
            NoiseConfig(octaves=0)
        with pytest.raises(ConfigError, match="amplitude"):
            NoiseConfig(amplitude=0.6)
        with pytest.raises(ConfigError, match="persistence"):
            NoiseConfig(persistence=0)


class TestAddNoise:
    def test_zero_amplitude(self, image):
        assert torch.equal(add_noise(image, NoiseConfig(amplitude=0), 1), image)

    def test_range(self):
        img = torch.from_numpy(np.random.default_rng(0).random((32, 32, 3)))
        out = add_noise(img, NoiseConfig(amplitude=0.5), 2)
        assert out.min() >= 0 and out.max() <= 1

    def test_constant_bound(self):
        out = add_noise(torch.full((32, 32, 3), 0.5, dtype=torch.float64), NoiseConfig(amplitude=0.1), 9)
        assert out.min() >= 0.4 and out.max() <= 0.6

    def test_gradient_is_one_inside(self, image):
        x = image.clone().requires_grad_(True)
        add_noise(x, NoiseConfig(amplitude=0.05), 0).sum().backward()
        assert torch.equal(x.grad, torch.ones_like(x))


class TestRandomView:
    def test_identity(self, image):
        assert torch.equal(random_view(image, IDENTITY, 123), image)

    def test_flip(self, image):
        cfg = AugmentConfig(resize_range=(1, 1), crop_size=32, perspective_scale=0, flip_probability=1, gaussian_sigma=0)
        out = random_view(image, cfg, 0)
        assert torch.equal(out, image.flip(1))
        assert torch.equal(random_view(out, cfg, 0), image)

    def test_deterministic(self, image):
        cfg = AugmentConfig(crop_size=24)
        assert torch.equal(random_view(image, cfg, 5), random_view(image, cfg, 5))

    @pytest.mark.parametrize("seed", range(10))
    def test_shape_and_range(self, seed):
        img = torch.from_numpy(np.random.default_rng(seed).random((48, 40, 3)))
        cfg = AugmentConfig(crop_size=24, gaussian_sigma=0.5)
        out = random_view(img, cfg, seed)
        assert out.shape == (24, 24, 3)
        assert out.min() >= 0 and out.max() <= 1

    def test_crop_is_a_window(self, image):
        cfg = AugmentConfig(resize_range=(1, 1), crop_size=16, perspective_scale=0, flip_probability=0, gaussian_sigma=0)
        out = random_view(image, cfg, 4).numpy()
        arr = image.numpy()
        hits = [
            (i, j) for i in range(17) for j in range(17) if np.array_equal(arr[i : i + 16, j : j + 16], out)
        ]
        assert len(hits) == 1

    def test_perspective_keeps_constants(self):
        img = torch.full((32, 32, 3), 0.3, dtype=torch.float64)
        cfg = AugmentConfig(resize_range=(1, 1), crop_size=32, perspective_scale=0.9, flip_probability=0, gaussian_sigma=0)
        assert torch.allclose(random_view(img, cfg, 1), img, atol=1e-12)

    def test_too_small(self, image):
        with pytest.raises(DomainError, match="smaller than crop_size"):
            random_view(image, AugmentConfig(resize_range=(0.5, 0.5), crop_size=32), 0)

    def test_crop_size_required(self, image):
        with pytest.raises(DomainError):
            random_view(image, AugmentConfig(), 0)

    def test_gradient(self):
        img = smooth_image(40, 40)
        cfg = AugmentConfig(crop_size=32, gaussian_sigma=0)
        pixels = np.random.default_rng(0).choice(img.numel(), size=20, replace=False)

        def fn(x):
            return random_view(x, cfg, 17).mean()

        rel = relative_error(autograd_at(fn, img, pixels), central_difference(fn, img, pixels))
        assert rel < 1e-3


def test_homography_maps_corners():
    dst = np.array([[0, 0], [10, 0], [10, 10], [0, 10]], dtype=np.float64)
    src = dst + np.array([[1, -0.5], [0.3, 0.2], [-1, 1], [0.5, 0.5]])
    mat = _homography(src, dst)
    pts = np.c_[dst, np.ones(4)] @ mat.T
    assert np.allclose(pts[:, :2] / pts[:, 2:], src)


class TestAugmentBatch:
    def test_singleton(self, image):
        cfg = AugmentConfig(crop_size=24)
        (view,) = augment_batch(image, cfg, 1, 9)
        assert torch.equal(view, random_view(image, cfg, 9))

    def test_shapes_and_seeds(self, image):
        cfg = AugmentConfig(crop_size=24)
        views = augment_batch(image, cfg, 8, 100)
        assert len(views) == 8
        assert all(v.shape == (24, 24, 3) for v in views)
        assert torch.equal(views[3], random_view(image, cfg, 103))

    def test_views_differ(self, image):
        views = augment_batch(image, AugmentConfig(crop_size=24), 8, 0)
        for i in range(8):
            for j in range(i + 1, 8):
                assert not torch.equal(views[i], views[j])

    def test_default_count(self, image):
        assert len(augment_batch(image, AugmentConfig(crop_size=24), seed=0)) == 8

    def test_invalid_count(self, image):
        with pytest.raises(DomainError):
            augment_batch(image, AugmentConfig(crop_size=24), 0, 0)


def test_augment_config_validation():
    with pytest.raises(ConfigError, match="resize_range"):
        AugmentConfig(resize_range=(1.2, 0.8))
    with pytest.raises(ConfigError, match="flip_probability"):
        AugmentConfig(flip_probability=1.5)
    with pytest.raises(ConfigError, match="perspective_scale"):
        AugmentConfig(perspective_scale=1.0)
    with pytest.raises(ConfigError, match="n_views"):
        AugmentConfig(n_views=0)
    assert AugmentConfig().with_crop_size(32).crop_size == 32
    assert AugmentConfig(crop_size=16).with_crop_size(32).crop_size == 16
