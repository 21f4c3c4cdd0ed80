"""Command-line entry point.

Exit codes: 0 success, 2 configuration error, 3 scorer failure, 4 I/O failure.
"""

from __future__ import annotations

import argparse
import sys
from dataclasses import replace

from .fitness import ScorerError
from .genome import SceneFileError
from .render import RenderSettings, side_cameras
from .runner import ConfigError, load_run_config, rerender, run

EXIT_CONFIG = 2
EXIT_SCORER = 3
EXIT_IO = 4


def _build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="trievolve",
        description="Evolve semi-transparent 3D triangle scenes toward text "
        "prompts or reference images.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p_run = sub.add_parser("run", help="execute a full evolution run")
    p_run.add_argument("config", help="run configuration (JSON)")
    p_run.add_argument("--resume", metavar="CHECKPOINT", help="resume from a checkpoint file")
    p_run.add_argument("--output-dir", help="override the configured output directory")
    p_run.add_argument("--seed", type=int, help="override optimizer and render seeds")
    p_run.add_argument("--workers", type=int, help="override evaluation worker count")

    p_rr = sub.add_parser("rerender", help="re-render a saved scene file")
    p_rr.add_argument("scene", help="scene JSON written by a run")
    p_rr.add_argument("--output-dir", required=True)
    p_rr.add_argument("--config", help="take cameras and render settings from this run config")
    p_rr.add_argument("--spp", type=int, help="samples per pixel override")
    p_rr.add_argument("--width", type=int, help="film width override")
    p_rr.add_argument("--height", type=int, help="film height override")
    p_rr.add_argument("--seed", type=int, help="render seed override")
    p_rr.add_argument("--turntable", type=int, default=0, metavar="K",
                      help="also render K orbit frames")
    return parser


def _cmd_run(args: argparse.Namespace) -> int:
    overrides: dict = {}
    if args.output_dir:
        overrides["output_dir"] = args.output_dir
    if args.seed is not None:
        overrides["seed"] = args.seed
    if args.workers is not None:
        overrides["workers"] = args.workers
    config = load_run_config(args.config, overrides)
    summary = run(config, resume_checkpoint=args.resume)
    print(
        f"done: best_fitness={summary.best_fitness:.6g} "
        f"generations={summary.generations} evaluations={summary.evaluations} "
        f"wall_time={summary.wall_time_s:.1f}s output={summary.output_dir}"
    )
    return 0


def _cmd_rerender(args: argparse.Namespace) -> int:
    if args.config:
        run_config = load_run_config(args.config)
        views = list(run_config.views)
        settings = run_config.render_settings
        if args.width or args.height:
            views = [
                replace(v, camera=v.camera.with_film(
                    args.width or v.camera.width, args.height or v.camera.height
                ))
                for v in views
            ]
    else:
        views = side_cameras(width=args.width or 224, height=args.height or 224)
        settings = RenderSettings()
    if args.spp:
        settings = replace(settings, samples_per_pixel=args.spp)
    if args.seed is not None:
        settings = replace(settings, seed=args.seed)
    written = rerender(
        args.scene, views, settings, args.output_dir, turntable_frames=args.turntable
    )
    print("\n".join(written))
    return 0


def main(argv: list[str] | None = None) -> int:
    args = _build_parser().parse_args(argv)
    try:
        if args.command == "run":
            return _cmd_run(args)
        return _cmd_rerender(args)
    except (ConfigError, SceneFileError) as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except ScorerError as exc:
        print(f"scorer failure: {exc}", file=sys.stderr)
        return EXIT_SCORER
    except OSError as exc:
        print(f"i/o failure: {exc}", file=sys.stderr)
        return EXIT_IO


if __name__ == "__main__":
    sys.exit(main())
