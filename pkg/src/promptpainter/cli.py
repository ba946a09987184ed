"""Command-line front end.

    promptpainter run   --text "a watercolor harbor" --size 512 --output-dir out
    promptpainter bench --text "x" --levels 32:10:0.1 --output-dir bench-out

Exit codes: 0 success, 2 configuration error, 3 backend or I/O error,
4 numerical abort (non-finite loss), 1 anything unexpected.
"""

from __future__ import annotations

import argparse
import logging
import sys
import time
from pathlib import Path

from .adapters import load_encoder, load_generator
from .config import Settings, parse_config
from .errors import BackendError, ConfigError, DomainError, NumericalAbort
from .image import save_png
from .manifest import build_bench, build_manifest
from .pipeline import LossTrace, run_hierarchy
from .superres import get_upscaler

log = logging.getLogger("promptpainter")

EXIT_OK = 0
EXIT_UNEXPECTED = 1
EXIT_CONFIG = 2
EXIT_BACKEND = 3
EXIT_NUMERICAL = 4


def _add_common(p: argparse.ArgumentParser) -> None:
    p.add_argument("--config", help="JSON config file; flags override its values")
    p.add_argument("--content", help="content image (PNG); omit to start from a random latent")
    p.add_argument("--text", action="append", dest="texts", metavar="PROMPT", help="style text (repeatable)")
    p.add_argument("--style-image", action="append", dest="style_images", metavar="PATH",
                   help="style image (repeatable)")
    p.add_argument("--style-weight", action="append", dest="style_weights", type=float, metavar="W",
                   help="one weight per style, texts first then images (repeatable)")
    p.add_argument("--size", type=int, help="final resolution when --levels is not given (default 1024)")
    p.add_argument("--levels", metavar="R:ITERS:LR,...", help='hierarchy, e.g. "256:300:0.1,512:200:0.1"')
    p.add_argument("--seed", type=int)
    p.add_argument("--optimizer", choices=["adaptive_moments", "plain_gradient_descent"])
    p.add_argument("--output-dir")
    p.add_argument("--save-intermediates", action="store_true", default=None,
                   help="write snapshots/level{L}_iter{I}.png for every iteration")
    p.add_argument("--encoder", help="encoder adapter id (default toy-encoder)")
    p.add_argument("--generator", help="generator adapter id (default toy-generator)")
    p.add_argument("--superres", help='upscaler id, or "none" (default lanczos)')
    p.add_argument("--superres-factor", type=int, choices=[2, 4])
    p.add_argument("-v", "--verbose", action="store_true")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="promptpainter", description="Text- and image-guided latent stylization.")
    sub = parser.add_subparsers(dest="command", required=True)
    run = sub.add_parser("run", help="stylize and write output.png + manifest.json")
    _add_common(run)
    run.add_argument("--bench", action="store_true", help="also write bench.json")
    bench = sub.add_parser("bench", help="run with timing instrumentation and write bench.json")
    _add_common(bench)
    return parser


def settings_from_args(args: argparse.Namespace) -> Settings:
    overrides = {
        "content": args.content,
        "texts": args.texts,
        "style_images": args.style_images,
        "style_weights": args.style_weights,
        "size": args.size,
        "levels": args.levels,
        "seed": args.seed,
        "optimizer": args.optimizer,
        "output_dir": args.output_dir,
        "save_intermediates": args.save_intermediates,
        "encoder": args.encoder,
        "generator": args.generator,
        "superres": args.superres,
        "superres_factor": args.superres_factor,
    }
    return parse_config(args.config, overrides)


def execute(settings: Settings, *, bench: bool = False) -> int:
    """Run one stylization from validated settings; errors propagate as exceptions."""
    out_dir = Path(settings.output_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    encoder = load_encoder(settings.encoder)
    generator = load_generator(settings.generator)
    upscaler = None
    if settings.superres.adapter is not None:
        upscaler = get_upscaler(settings.superres.adapter, settings.superres.factor)
    backends = {
        "encoder": encoder.identity,
        "generator": generator.identity,
        "superres": upscaler.identity if upscaler else None,
    }

    snapshots: list[str] = []
    snapshot = None
    if settings.save_intermediates:
        def snapshot(level, iteration, img):
            rel = f"snapshots/level{level}_iter{iteration}.png"
            save_png(img, out_dir / rel)
            snapshots.append(rel)

    cfg = settings.run
    config_snapshot = settings.to_dict()
    started = time.perf_counter()
    try:
        result = run_hierarchy(cfg, encoder, generator, upscaler, snapshot=snapshot)
    except NumericalAbort as exc:
        trace = exc.trace or LossTrace()
        outputs = {"manifest": "manifest.json", "snapshots": snapshots}
        build_manifest(config_snapshot, cfg, trace, outputs, backends, status="aborted", error=str(exc)).write(
            out_dir / "manifest.json"
        )
        raise
    wall_ms = (time.perf_counter() - started) * 1e3

    save_png(result.image, out_dir / "output.png")
    outputs = {
        "image": "output.png",
        "manifest": "manifest.json",
        "snapshots": snapshots,
        "pre_superres_size": list(result.pre_superres.shape[:2]),
        "final_size": list(result.image.shape[:2]),
    }
    if bench:
        outputs["bench"] = "bench.json"
        build_bench(cfg, result.trace, wall_ms, backends).write(out_dir / "bench.json")
    build_manifest(config_snapshot, cfg, result.trace, outputs, backends).write(out_dir / "manifest.json")
    log.info("wrote %s (%d iterations, final loss %.6f)", out_dir / "output.png",
             len(result.trace), result.trace.records[-1].total)
    return EXIT_OK


def run_command(args: argparse.Namespace) -> int:
    return _guarded(args, bench=getattr(args, "bench", False))


def bench_command(args: argparse.Namespace) -> int:
    return _guarded(args, bench=True)


def _guarded(args: argparse.Namespace, *, bench: bool) -> int:
    try:
        settings = settings_from_args(args)
        return execute(settings, bench=bench)
    except (ConfigError, DomainError) as exc:
        log.error("configuration error: %s", exc)
        return EXIT_CONFIG
    except (BackendError, OSError) as exc:
        log.error("backend error: %s", exc)
        return EXIT_BACKEND
    except NumericalAbort as exc:
        log.error("numerical abort: %s", exc)
        return EXIT_NUMERICAL
    except Exception:
        log.exception("unexpected failure")
        return EXIT_UNEXPECTED


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(
        level=logging.DEBUG if args.verbose else logging.INFO,
        format="%(levelname)s %(name)s: %(message)s",
        stream=sys.stderr,
    )
    if args.command == "bench":
        return bench_command(args)
    return run_command(args)


if __name__ == "__main__":
    sys.exit(main())
