"""Run manifest and benchmark report: the JSON records a run leaves behind."""

from __future__ import annotations

import json
import statistics
from dataclasses import asdict, dataclass, field
from pathlib import Path

from .pipeline import STAGES, LossTrace, RunConfig, derive_seed

SCHEMA_VERSION = 1


@dataclass
class RunManifest:
    schema_version: int
    config: dict
    seeds: dict
    levels: list[dict]
    stage_timings: dict
    outputs: dict
    backends: dict
    status: str = "completed"
    error: str | None = None

    def to_json(self) -> str:
        return json.dumps(asdict(self), indent=2, sort_keys=True, allow_nan=False)

    @classmethod
    def from_json(cls, text: str) -> "RunManifest":
        data = json.loads(text)
        if "schema_version" not in data:
            raise ValueError("manifest has no schema_version")
        return cls(**data)

    def write(self, path) -> Path:
        path = Path(path)
        path.parent.mkdir(parents=True, exist_ok=True)
        path.write_text(self.to_json() + "\n", encoding="utf-8")
        return path

    @classmethod
    def read(cls, path) -> "RunManifest":
        return cls.from_json(Path(path).read_text(encoding="utf-8"))

    def loss_trace(self) -> list[tuple[int, int, float, list[float]]]:
        """(level, iteration, total, per_style) for every record; timing-free, for comparisons."""
        return [
            (lv["index"], r["iteration"], r["total"], r["per_style"])
            for lv in self.levels
            for r in lv["records"]
        ]


def _stage_summary(records) -> dict:
    out = {}
    for stage in STAGES:
        values = [r.timings[stage] for r in records]
        out[stage] = {
            "total_ms": float(sum(values)),
            "mean_ms": float(statistics.fmean(values)) if values else 0.0,
            "median_ms": float(statistics.median(values)) if values else 0.0,
        }
    return out


def level_sections(cfg: RunConfig, trace: LossTrace) -> list[dict]:
    sections = []
    for index, level in enumerate(cfg.levels):
        records = trace.for_level(index)
        sections.append({
            "index": index,
            "resolution": level.resolution,
            "iterations": level.iterations,
            "learning_rate": level.learning_rate,
            "records": [
                {
                    "iteration": r.iteration,
                    "total": r.total,
                    "per_style": list(r.per_style),
                    "timings_ms": dict(r.timings),
                    "timestamp_s": r.timestamp,
                }
                for r in records
            ],
        })
    return sections


def build_manifest(settings_dict: dict, cfg: RunConfig, trace: LossTrace, outputs: dict, backends: dict,
                   status: str = "completed", error: str | None = None) -> RunManifest:
    seeds = {
        "run": cfg.seed,
        "rule": "iteration seed = derive_seed(run, level, iteration)",
        "levels": [[derive_seed(cfg.seed, i, k) for k in range(lv.iterations)] for i, lv in enumerate(cfg.levels)],
    }
    return RunManifest(
        schema_version=SCHEMA_VERSION,
        config=settings_dict,
        seeds=seeds,
        levels=level_sections(cfg, trace),
        stage_timings=_stage_summary(trace.records),
        outputs=outputs,
        backends=backends,
        status=status,
        error=error,
    )


@dataclass
class BenchReport:
    iterations: int
    total_wall_ms: float
    stages: dict
    levels: list[dict]
    backends: dict
    schema_version: int = SCHEMA_VERSION
    note: str = field(default=(
        "Wall-clock timings of this machine and these backends only. Absolute "
        "speed is hardware- and model-specific; no speed target is asserted."
    ))

    def write(self, path) -> Path:
        path = Path(path)
        path.parent.mkdir(parents=True, exist_ok=True)
        path.write_text(json.dumps(asdict(self), indent=2, sort_keys=True) + "\n", encoding="utf-8")
        return path


def build_bench(cfg: RunConfig, trace: LossTrace, total_wall_ms: float, backends: dict) -> BenchReport:
    levels = []
    previous_end = 0.0
    for index, level in enumerate(cfg.levels):
        records = trace.for_level(index)
        end = records[-1].timestamp if records else previous_end
        levels.append({
            "index": index,
            "resolution": level.resolution,
            "iterations": len(records),
            "wall_ms": (end - previous_end) * 1e3,
            "stages": _stage_summary(records),
        })
        previous_end = end
    return BenchReport(
        iterations=len(trace),
        total_wall_ms=total_wall_ms,
        stages=_stage_summary(trace.records),
        levels=levels,
        backends=backends,
    )
