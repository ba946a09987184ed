"""Adapter registry binding encoder/generator ids to implementations.

Built-in ids:

* ``toy-encoder`` / ``toy-generator``: closed-form, no weights.
* ``hf-clip``: a CLIP checkpoint directory in Hugging Face ``transformers``
  format (``config.json`` plus weights; tokenizer files are only needed for
  text prompts).
* ``taming-vqgan``: a taming-transformers VQGAN checkpoint (``*.ckpt``) with
  its ``*.yaml`` config next to it. Needs the ``taming`` and ``omegaconf``
  packages.

Weight paths come from the spec, else from ``PROMPTPAINTER_ENCODER_PATH`` /
``PROMPTPAINTER_GENERATOR_PATH``.
"""

from __future__ import annotations

import os
from dataclasses import dataclass
from pathlib import Path
from typing import Callable

import torch

from .embedding import Encoder, ToyEncoder
from .errors import BackendError, ConfigError
from .generator import Generator, ToyGenerator

ENV_VARS = {"encoder": "PROMPTPAINTER_ENCODER_PATH", "generator": "PROMPTPAINTER_GENERATOR_PATH"}

CLIP_MEAN = (0.48145466, 0.4578275, 0.40821073)
CLIP_STD = (0.26862954, 0.26130258, 0.27577711)


@dataclass(frozen=True)
class AdapterSpec:
    id: str
    weights_path: str | None = None
    device: str = "cpu"
    reentrant: bool | None = None
    differentiable: bool | None = None

    def __post_init__(self):
        if self.device not in ("cpu", "accelerator"):
            raise ConfigError(f"must be 'cpu' or 'accelerator', got {self.device!r}", "device")

    def torch_device(self) -> torch.device:
        if self.device == "cpu":
            return torch.device("cpu")
        if not torch.cuda.is_available():
            raise BackendError("device 'accelerator' requested but no CUDA device is available")
        return torch.device("cuda")


def _resolve_weights(spec: AdapterSpec, role: str) -> Path:
    path = spec.weights_path or os.environ.get(ENV_VARS[role])
    if not path:
        raise BackendError(f"{role} adapter {spec.id!r} needs weights: set {role}.weights_path or {ENV_VARS[role]}")
    path = Path(path)
    if not path.exists():
        raise BackendError(f"{role} weights not found: {path}")
    return path


class HFClipEncoder(Encoder):
    """CLIP through ``transformers.CLIPModel``; frozen, float32 internally."""

    reentrant = False

    def __init__(self, path: Path, device: torch.device):
        try:
            from transformers import CLIPModel
        except ImportError as exc:
            raise BackendError("hf-clip adapter needs the 'transformers' package") from exc
        try:
            model = CLIPModel.from_pretrained(str(path))
        except Exception as exc:
            raise BackendError(f"cannot load CLIP weights from {path}: {exc}") from exc
        self.model = model.eval().to(device).requires_grad_(False)
        self.device = device
        self.path = path
        self._tokenizer = None
        cfg = model.config
        super().__init__(f"hf-clip:{path.name}", cfg.projection_dim, cfg.vision_config.image_size)
        self.mean = torch.tensor(CLIP_MEAN, device=device).view(1, 3, 1, 1)
        self.std = torch.tensor(CLIP_STD, device=device).view(1, 3, 1, 1)

    @property
    def tokenizer(self):
        if self._tokenizer is None:
            from transformers import AutoTokenizer

            try:
                self._tokenizer = AutoTokenizer.from_pretrained(str(self.path))
            except Exception as exc:
                raise BackendError(f"no tokenizer files under {self.path}: {exc}") from exc
        return self._tokenizer

    @staticmethod
    def _features(out):
        return out if isinstance(out, torch.Tensor) else out.pooler_output

    def encode_text(self, text):
        tokens = self.tokenizer([text], padding=True, truncation=True, return_tensors="pt").to(self.device)
        with torch.no_grad():
            feats = self._features(self.model.get_text_features(**tokens))
        return feats[0].to("cpu", torch.float64)

    def encode_images(self, batch):
        x = batch.to(self.device, torch.float32)
        feats = self._features(self.model.get_image_features(pixel_values=(x - self.mean) / self.std))
        return feats.to(batch.device, batch.dtype)


class _ReplaceGrad(torch.autograd.Function):
    @staticmethod
    def forward(ctx, x_forward, x_backward):
        return x_forward

    @staticmethod
    def backward(ctx, grad):
        return None, grad


class TamingVQGAN(Generator):
    """VQGAN from taming-transformers.

    The learnable latent is the continuous pre-quantization tensor; ``decode``
    snaps it to the codebook with a straight-through gradient.
    """

    reentrant = False
    dtype = torch.float32

    def __init__(self, path: Path, device: torch.device):
        super().__init__(f"taming-vqgan:{path.stem}")
        try:
            from omegaconf import OmegaConf
            from taming.models.vqgan import VQModel
        except ImportError as exc:
            raise BackendError("taming-vqgan adapter needs the 'taming' and 'omegaconf' packages") from exc
        config_path = path.with_suffix(".yaml")
        if not config_path.exists():
            raise BackendError(f"VQGAN config not found next to checkpoint: {config_path}")
        try:
            params = OmegaConf.load(config_path).model.params
            model = VQModel(**params)
            state = torch.load(path, map_location="cpu", weights_only=False)
            model.load_state_dict(state.get("state_dict", state), strict=False)
        except Exception as exc:
            raise BackendError(f"cannot load VQGAN from {path}: {exc}") from exc
        del model.loss
        self.model = model.eval().to(device).requires_grad_(False)
        self.device = device
        self.stride = 2 ** (len(params.ddconfig.ch_mult) - 1)
        self.latent_channels = params.embed_dim

    def _encode(self, batch):
        x = batch.to(self.device, self.dtype) * 2 - 1
        with torch.no_grad():
            z = self.model.quant_conv(self.model.encoder(x))
        return z.to("cpu")

    def _quantize(self, z):
        codebook = self.model.quantize.embedding.weight
        flat = z.movedim(1, -1)
        d = flat.pow(2).sum(-1, keepdim=True) + codebook.pow(2).sum(1) - 2 * flat @ codebook.T
        quant = codebook[d.argmin(-1)].movedim(-1, 1)
        return _ReplaceGrad.apply(quant, z)

    def _decode(self, latent, size):
        z = self._quantize(latent.to(self.device, self.dtype))
        out = self.model.decode(z).add(1).div(2)
        # Straight-through clamp keeps gradients alive outside [0, 1].
        return _ReplaceGrad.apply(out.clamp(0, 1), out).to("cpu")

    def _sample(self, shape, seed):
        gen = torch.Generator().manual_seed(seed)
        codebook = self.model.quantize.embedding.weight.to("cpu")
        idx = torch.randint(codebook.shape[0], shape[1:], generator=gen)
        return codebook[idx].movedim(-1, 0).to(self.dtype).contiguous()


Factory = Callable[[AdapterSpec], object]

ENCODERS: dict[str, Factory] = {
    "toy-encoder": lambda spec: ToyEncoder(),
    "hf-clip": lambda spec: HFClipEncoder(_resolve_weights(spec, "encoder"), spec.torch_device()),
}
GENERATORS: dict[str, Factory] = {
    "toy-generator": lambda spec: ToyGenerator(),
    "taming-vqgan": lambda spec: TamingVQGAN(_resolve_weights(spec, "generator"), spec.torch_device()),
}


def register_encoder(identity: str, factory: Factory) -> None:
    ENCODERS[identity] = factory


def register_generator(identity: str, factory: Factory) -> None:
    GENERATORS[identity] = factory


def _check_capabilities(handle, spec: AdapterSpec, role: str):
    if spec.differentiable is not None and spec.differentiable and not getattr(handle, "differentiable", True):
        raise ConfigError(f"adapter {spec.id!r} is not differentiable", f"{role}.differentiable")
    if role == "generator" and not handle.differentiable:
        raise ConfigError(f"generator {spec.id!r} cannot be optimized: not differentiable", "generator")
    if spec.reentrant is not None and spec.reentrant and not handle.reentrant:
        raise ConfigError(f"adapter {spec.id!r} is not reentrant", f"{role}.reentrant")
    if spec.reentrant is False:
        handle.reentrant = False
    return handle


def load_encoder(spec: AdapterSpec | str) -> Encoder:
    spec = AdapterSpec(spec) if isinstance(spec, str) else spec
    if spec.id not in ENCODERS:
        raise ConfigError(f"unknown encoder {spec.id!r}; known: {sorted(ENCODERS)}", "encoder")
    return _check_capabilities(ENCODERS[spec.id](spec), spec, "encoder")


def load_generator(spec: AdapterSpec | str) -> Generator:
    spec = AdapterSpec(spec) if isinstance(spec, str) else spec
    if spec.id not in GENERATORS:
        raise ConfigError(f"unknown generator {spec.id!r}; known: {sorted(GENERATORS)}", "generator")
    return _check_capabilities(GENERATORS[spec.id](spec), spec, "generator")


def load_adapter(spec: AdapterSpec | str) -> Encoder | Generator:
    """Load whichever role ``spec.id`` is registered under."""
    identity = spec if isinstance(spec, str) else spec.id
    if identity in ENCODERS:
        return load_encoder(spec)
    if identity in GENERATORS:
        return load_generator(spec)
    raise ConfigError(f"unknown adapter {identity!r}", "adapter")
