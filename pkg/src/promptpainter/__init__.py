"""Stylize images by optimizing a generator latent against joint image-text embeddings."""

from .augmentation import AugmentConfig, NoiseConfig, add_noise, augment_batch, fractal_noise, random_view
from .embedding import Encoder, StyleParam, StyleSet, ToyEncoder, embed_image, embed_text, normalize, project_style_set
from .errors import BackendError, ConfigError, DomainError, NumericalAbort
from .generator import Generator, LatentTensor, ToyGenerator, decode, encode, latent_transfer, random_latent
from .loss import LossValue, batch_loss, chord_term, style_loss
from .pipeline import LevelConfig, RunConfig, init_latent, run_hierarchy, run_level, step
from .superres import LanczosUpscaler, get_upscaler, upscale

__version__ = "0.1.0"
