"""JSON run configuration: key schema, defaults, validation and flag overrides.

Top-level keys (all optional except that at least one style is needed)::

    seed                int, default 0
    content             path to a PNG content image, default null (random start)
    styles              list of {"kind": "text"|"image", "payload": str, "weight": float}
    size                final resolution, default 1024; used when "levels" is absent
    levels              list of {"resolution", "iterations", "learning_rate"}
    optimizer           "adaptive_moments" (default) | "plain_gradient_descent"
    augment             {"n_views", "resize_range", "crop_size", "perspective_scale",
                         "flip_probability", "gaussian_sigma"}
    noise               {"octaves", "persistence", "base_frequency", "amplitude"}
    encoder             {"id", "weights_path", "device"}, default id "toy-encoder"
    generator           {"id", "weights_path", "device"}, default id "toy-generator"
    superres            {"adapter": "lanczos"|"none", "factor": 2|4}
    output_dir          default "promptpainter-out"
    save_intermediates  bool, default false

Unknown keys are rejected at every level.
"""

from __future__ import annotations

import dataclasses
import json
import os
from dataclasses import dataclass
from pathlib import Path
from typing import Any

from .adapters import AdapterSpec
from .augmentation import AugmentConfig, NoiseConfig
from .embedding import StyleParam, StyleSet
from .errors import ConfigError, DomainError
from .pipeline import LevelConfig, RunConfig, default_levels

TOP_LEVEL_KEYS = {
    "seed", "content", "styles", "size", "levels", "optimizer", "augment", "noise",
    "encoder", "generator", "superres", "output_dir", "save_intermediates",
}
ADAPTER_KEYS = {"id", "weights_path", "device"}
SUPERRES_KEYS = {"adapter", "factor"}
STYLE_KEYS = {"kind", "payload", "weight"}
LEVEL_KEYS = {"resolution", "iterations", "learning_rate"}

DEFAULT_SIZE = 1024
DEFAULT_OUTPUT_DIR = "promptpainter-out"


@dataclass(frozen=True)
class SuperresSettings:
    adapter: str | None = "lanczos"
    factor: int = 2


@dataclass(frozen=True)
class Settings:
    """Everything one CLI invocation needs: the run itself plus backends and outputs."""

    run: RunConfig
    size: int = DEFAULT_SIZE
    encoder: AdapterSpec = AdapterSpec("toy-encoder")
    generator: AdapterSpec = AdapterSpec("toy-generator")
    superres: SuperresSettings = SuperresSettings()
    output_dir: str = DEFAULT_OUTPUT_DIR
    save_intermediates: bool = False

    def to_dict(self) -> dict:
        """JSON-ready snapshot that :func:`parse_config` accepts unchanged."""
        run = self.run
        return {
            "seed": run.seed,
            "content": run.content,
            "styles": [dataclasses.asdict(p) for p in run.styles],
            "size": self.size,
            "levels": [dataclasses.asdict(lv) for lv in run.levels],
            "optimizer": run.optimizer,
            "augment": {**dataclasses.asdict(run.augment), "resize_range": list(run.augment.resize_range)},
            "noise": dataclasses.asdict(run.noise),
            "encoder": _adapter_dict(self.encoder),
            "generator": _adapter_dict(self.generator),
            "superres": {"adapter": self.superres.adapter or "none", "factor": self.superres.factor},
            "output_dir": self.output_dir,
            "save_intermediates": self.save_intermediates,
        }


def _adapter_dict(spec: AdapterSpec) -> dict:
    return {"id": spec.id, "weights_path": spec.weights_path, "device": spec.device}


def _check_keys(obj: Any, allowed: set[str], where: str) -> dict:
    if not isinstance(obj, dict):
        raise ConfigError(f"expected an object, got {type(obj).__name__}", where)
    unknown = sorted(set(obj) - allowed)
    if unknown:
        raise ConfigError(f"unknown key(s) {unknown}; allowed: {sorted(allowed)}", where)
    return obj


def load_config_file(path) -> dict:
    path = Path(path)
    try:
        text = path.read_text(encoding="utf-8")
    except OSError as exc:
        raise ConfigError(f"cannot read config file {path}: {exc.strerror or exc}", "config") from exc
    try:
        data = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ConfigError(f"{path}: line {exc.lineno} column {exc.colno}: {exc.msg}", "config") from exc
    return _check_keys(data, TOP_LEVEL_KEYS, "config")


def parse_levels(spec: str) -> list[dict]:
    """Parse ``"resolution:iterations:learning_rate,..."``."""
    levels = []
    for chunk in spec.split(","):
        parts = chunk.strip().split(":")
        if len(parts) != 3:
            raise ConfigError(f"expected resolution:iterations:lr, got {chunk!r}", "levels")
        try:
            levels.append({"resolution": int(parts[0]), "iterations": int(parts[1]), "learning_rate": float(parts[2])})
        except ValueError:
            raise ConfigError(f"non-numeric level spec {chunk!r}", "levels") from None
    return levels


def _styles_from_flags(texts, images, weights) -> list[dict]:
    entries = [{"kind": "text", "payload": t} for t in texts or ()]
    entries += [{"kind": "image", "payload": p} for p in images or ()]
    if weights:
        if len(weights) != len(entries):
            raise ConfigError(
                f"got {len(weights)} weights for {len(entries)} styles (texts first, then images)", "styles"
            )
        for entry, w in zip(entries, weights):
            entry["weight"] = w
    return entries


def _build(cls, values: dict, field: str):
    try:
        return cls(**values)
    except TypeError as exc:
        raise ConfigError(str(exc), field) from None


def parse_config(path=None, overrides: dict | None = None) -> Settings:
    """Build validated :class:`Settings` from an optional JSON file and flag overrides.

    ``overrides`` uses the top-level config keys plus the flag-only keys
    ``texts``, ``style_images``, ``style_weights`` and ``superres_factor``; ``None`` values are
    ignored and flags win over file values.
    """
    data = load_config_file(path) if path is not None else {}
    overrides = {k: v for k, v in (overrides or {}).items() if v is not None}

    flag_styles = _styles_from_flags(
        overrides.pop("texts", None), overrides.pop("style_images", None), overrides.pop("style_weights", None)
    )
    if flag_styles:
        overrides["styles"] = flag_styles
    if isinstance(overrides.get("levels"), str):
        overrides["levels"] = parse_levels(overrides["levels"])
    _check_keys(overrides, TOP_LEVEL_KEYS | {"superres_factor"}, "flags")
    for key in ("encoder", "generator", "superres"):
        if isinstance(overrides.get(key), str):
            sub = dict(data.get(key) or {})
            sub["adapter" if key == "superres" else "id"] = overrides.pop(key)
            overrides[key] = sub
    factor = overrides.pop("superres_factor", None)
    if factor is not None:
        overrides["superres"] = {**dict(overrides.get("superres") or data.get("superres") or {}), "factor": factor}
    data = {**data, **overrides}

    styles_raw = data.get("styles") or []
    if not isinstance(styles_raw, list):
        raise ConfigError("must be a list", "styles")
    try:
        styles = StyleSet(tuple(
            _build(StyleParam, _check_keys(s, STYLE_KEYS, f"styles[{i}]"), f"styles[{i}]")
            for i, s in enumerate(styles_raw)
        ))
    except DomainError as exc:
        raise ConfigError(str(exc), "styles") from None

    size = data.get("size", DEFAULT_SIZE)
    if not isinstance(size, int) or isinstance(size, bool) or size < 8:
        raise ConfigError(f"must be an integer >= 8, got {size!r}", "size")
    if "levels" in data:
        if not isinstance(data["levels"], list):
            raise ConfigError("must be a list", "levels")
        levels = tuple(
            _build(LevelConfig, _check_keys(lv, LEVEL_KEYS, f"levels[{i}]"), "levels")
            for i, lv in enumerate(data["levels"])
        )
        if levels and "size" not in data:
            size = levels[-1].resolution
    else:
        levels = default_levels(size)

    content = data.get("content")
    if content is not None:
        if not isinstance(content, str) or not os.path.isfile(content) or not os.access(content, os.R_OK):
            raise ConfigError(f"content image {content!r} is not a readable file", "content")

    augment_raw = dict(data.get("augment") or {})
    _check_keys(augment_raw, {f.name for f in dataclasses.fields(AugmentConfig)}, "augment")
    noise_raw = dict(data.get("noise") or {})
    _check_keys(noise_raw, {f.name for f in dataclasses.fields(NoiseConfig)}, "noise")

    seed = data.get("seed", 0)
    if not isinstance(seed, int) or isinstance(seed, bool):
        raise ConfigError(f"must be an integer, got {seed!r}", "seed")

    run = RunConfig(
        styles=styles,
        levels=levels,
        augment=_build(AugmentConfig, augment_raw, "augment"),
        noise=_build(NoiseConfig, noise_raw, "noise"),
        optimizer=data.get("optimizer", "adaptive_moments"),
        seed=seed,
        content=content,
    )

    adapters = {}
    for role, default in (("encoder", "toy-encoder"), ("generator", "toy-generator")):
        raw = _check_keys(dict(data.get(role) or {}), ADAPTER_KEYS, role)
        adapters[role] = _build(AdapterSpec, {"id": default, **raw}, role)

    sr_raw = _check_keys(dict(data.get("superres") or {}), SUPERRES_KEYS, "superres")
    adapter = sr_raw.get("adapter", "lanczos")
    factor = sr_raw.get("factor", 2)
    if factor not in (2, 4):
        raise ConfigError(f"must be 2 or 4, got {factor!r}", "superres.factor")
    superres = SuperresSettings(None if adapter in (None, "none") else adapter, factor)

    save = data.get("save_intermediates", False)
    if not isinstance(save, bool):
        raise ConfigError(f"must be true or false, got {save!r}", "save_intermediates")

    return Settings(
        run=run,
        size=size,
        encoder=adapters["encoder"],
        generator=adapters["generator"],
        superres=superres,
        output_dir=str(data.get("output_dir", DEFAULT_OUTPUT_DIR)),
        save_intermediates=save,
    )
