import threading

import numpy as np
import pytest
import torch

from conftest import autograd_at, central_difference, relative_error, smooth_image
from promptpainter import (
    BackendError,
    DomainError,
    Encoder,
    StyleParam,
    StyleSet,
    embed_image,
    embed_text,
    normalize,
    project_style_set,
)

# normalize(tanh(P @ 0.5 * ones)) for the seed-0 toy projection, computed in numpy.
CONSTANT_HALF_EMBEDDING = [
    -0.068407467711, -0.383618581536, -0.353174423863, -0.160615817847,
    -0.307439246304, 0.026451717132, -0.109684666581, 0.134992937392,
    -0.114693276692, 0.302503802703, -0.380473165398, 0.458362081284,
    -0.304922477316, 0.055553773512, -0.072441159446, -0.106418038378,
]


def test_normalize_examples():
    assert normalize([1, 0, 0, 0]).tolist() == [1.0, 0.0, 0.0, 0.0]
    assert normalize([3, 4]).tolist() == pytest.approx([0.6, 0.8], abs=1e-15)
    with pytest.raises(DomainError, match="cannot normalize zero vector"):
        normalize([0, 0])


def test_normalize_rejects_non_finite():
    with pytest.raises(DomainError):
        normalize([1.0, float("nan")])


def test_normalize_rows():
    out = normalize(torch.tensor([[3.0, 4.0], [0.0, 2.0]], dtype=torch.float64))
    assert torch.linalg.vector_norm(out, dim=-1).tolist() == pytest.approx([1.0, 1.0])


class TestEmbedText:
    def test_deterministic(self, encoder):
        assert torch.equal(embed_text(encoder, "oil painting"), embed_text(encoder, "oil painting"))

    def test_distinct(self, encoder):
        assert not torch.equal(embed_text(encoder, "a"), embed_text(encoder, "b"))

    def test_unit_norm(self, encoder):
        for text in ("a", "City of the future | Geometric art", "ünïcode"):
            v = embed_text(encoder, text)
            assert v.shape == (16,)
            assert float(torch.linalg.vector_norm(v)) == pytest.approx(1.0, abs=1e-6)

    def test_pipe_syntax_is_not_split(self, encoder):
        whole = embed_text(encoder, "harbor | low poly")
        assert not torch.equal(whole, embed_text(encoder, "harbor"))

    def test_empty(self, encoder):
        with pytest.raises(DomainError):
            embed_text(encoder, "")

    def test_backend_failure_is_wrapped(self):
        class Broken(Encoder):
            def __init__(self):
                super().__init__("broken", 4, 8)

            def encode_text(self, text):
                raise RuntimeError("weights missing")

        with pytest.raises(BackendError, match="weights missing"):
            embed_text(Broken(), "x")


class TestEmbedImage:
    def test_constant_image_golden(self, encoder):
        img = torch.full((32, 32, 3), 0.5, dtype=torch.float64)
        assert embed_image(encoder, img).tolist() == pytest.approx(CONSTANT_HALF_EMBEDDING, abs=1e-10)

    def test_constant_image_any_size(self, encoder):
        # Bilinear resampling of a constant is the same constant.
        img = torch.full((48, 64, 3), 0.5, dtype=torch.float64)
        assert embed_image(encoder, img).tolist() == pytest.approx(CONSTANT_HALF_EMBEDDING, abs=1e-10)

    def test_deterministic(self, encoder, image):
        assert torch.equal(embed_image(encoder, image), embed_image(encoder, image.clone()))

    @pytest.mark.parametrize("seed", range(5))
    def test_unit_norm(self, encoder, seed):
        img = torch.from_numpy(np.random.default_rng(seed).random((40, 24, 3)))
        assert float(torch.linalg.vector_norm(embed_image(encoder, img))) == pytest.approx(1.0, abs=1e-6)

    def test_wrong_channels(self, encoder):
        with pytest.raises(DomainError):
            embed_image(encoder, torch.zeros(32, 32, 4, dtype=torch.float64))
        with pytest.raises(DomainError):
            embed_image(encoder, torch.zeros(32, 32, dtype=torch.float64))

    def test_gradient_matches_finite_differences(self, encoder):
        img = smooth_image(32, 32)
        rng = np.random.default_rng(0)
        pixels = rng.choice(img.numel(), size=12, replace=False)
        for component in (0, 7, 15):
            def fn(x):
                return embed_image(encoder, x)[component]

            rel = relative_error(autograd_at(fn, img, pixels), central_difference(fn, img, pixels))
            assert rel < 1e-4

    def test_gradient_through_resampling(self, encoder):
        img = smooth_image(48, 40)
        pixels = np.random.default_rng(1).choice(img.numel(), size=12, replace=False)

        def fn(x):
            return embed_image(encoder, x)[3]

        assert relative_error(autograd_at(fn, img, pixels), central_difference(fn, img, pixels)) < 1e-4


class TestProjectStyleSet:
    def test_text_and_image(self, encoder, png_path):
        styles = StyleSet((StyleParam.text("storm"), StyleParam.image(png_path())))
        out = project_style_set(encoder, styles)
        assert len(out) == 2
        for emb, weight in out:
            assert weight == 1.0
            assert float(torch.linalg.vector_norm(emb)) == pytest.approx(1.0, abs=1e-6)

    def test_order_and_weights_preserved(self, encoder):
        styles = StyleSet((StyleParam.text("b", 2.0), StyleParam.text("a", 0.5)))
        out = project_style_set(encoder, styles)
        assert [w for _, w in out] == [2.0, 0.5]
        assert torch.equal(out[0][0], embed_text(encoder, "b"))

    def test_repeated_param(self, encoder):
        out = project_style_set(encoder, [StyleParam.text("x"), StyleParam.text("x")])
        assert torch.equal(out[0][0], out[1][0])

    def test_cached(self, encoder, png_path):
        styles = StyleSet((StyleParam.text("storm"), StyleParam.image(png_path())))
        first = project_style_set(encoder, styles)
        assert encoder.calls <= len(styles)
        calls = encoder.calls
        second = project_style_set(encoder, styles)
        assert encoder.calls == calls
        assert all(torch.equal(a, b) for (a, _), (b, _) in zip(first, second))

    def test_error_names_index(self, encoder, tmp_path):
        bad = tmp_path / "tiny.png"
        from promptpainter.image import save_png

        save_png(torch.zeros(4, 4, 3), bad)
        with pytest.raises(DomainError, match="style parameter 1"):
            project_style_set(encoder, [StyleParam.text("ok"), StyleParam.image(bad)])

    def test_empty(self, encoder):
        with pytest.raises(DomainError):
            project_style_set(encoder, [])


class TestStyleParam:
    def test_validation(self, tmp_path):
        with pytest.raises(DomainError):
            StyleParam.text("")
        with pytest.raises(DomainError):
            StyleParam.text("x", weight=0)
        with pytest.raises(DomainError):
            StyleParam.image(tmp_path / "missing.png")
        with pytest.raises(DomainError):
            StyleParam("audio", "x")

    def test_style_set_non_empty(self):
        with pytest.raises(DomainError):
            StyleSet(())


def test_non_reentrant_encoder_serializes_calls(image):
    class Tracking(Encoder):
        reentrant = False

        def __init__(self):
            super().__init__("tracking", 4, 8)
            self.active = 0
            self.max_active = 0
            self._count_lock = threading.Lock()

        def encode_images(self, batch):
            with self._count_lock:
                self.active += 1
                self.max_active = max(self.max_active, self.active)
            threading.Event().wait(0.01)
            with self._count_lock:
                self.active -= 1
            return batch.reshape(batch.shape[0], -1)[:, :4] + 1

    enc = Tracking()
    threads = [threading.Thread(target=embed_image, args=(enc, image)) for _ in range(4)]
    for t in threads:
        t.start()
    for t in threads:
        t.join()
    assert enc.max_active == 1
