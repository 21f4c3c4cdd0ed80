"""Run orchestration: config parsing, the ask/evaluate/tell loop,
checkpointing, resuming, and artifact export."""

from __future__ import annotations

import json
import os
import pickle
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Optional, Sequence

import numpy as np

from .cmaes import CmaEs
from .fitness import (
    EmbeddingClient,
    EmbeddingScorer,
    ReferenceImage,
    SceneEvaluator,
    Scorer,
    ScorerError,
    TargetImageScorer,
    TextPrompt,
    ViewSpec,
    view_seed,
)
from .genome import GenomeConfig, Scene, TransparencyMode, decode, load_scene, save_scene
from .render import (
    Camera,
    RenderSettings,
    SceneGeometry,
    load_png,
    orbit_camera,
    render,
    save_png,
)

CHECKPOINT_FORMAT = "trievolve-checkpoint-v1"


class ConfigError(ValueError):
    """Run configuration is invalid; the message names the offending field."""


@dataclass(frozen=True)
class ExportConfig:
    film_pngs: bool = True
    scene_json: bool = True
    turntable_frames: int = 0


@dataclass(frozen=True)
class RunConfig:
    genome: GenomeConfig
    views: tuple[ViewSpec, ...]
    scorer: Scorer
    population_size: int
    generations: int
    sigma0: float
    cma_seed: int
    render_settings: RenderSettings
    output_dir: str
    checkpoint_every: int = 50
    workers: int = 0  # 0 -> hardware parallelism
    export: ExportConfig = field(default_factory=ExportConfig)

    def __post_init__(self) -> None:
        if self.generations < 1:
            raise ConfigError("cma.generations must be >= 1")
        if self.population_size < 2:
            raise ConfigError("cma.population_size must be >= 2")
        if not self.views:
            raise ConfigError("at least one view is required")
        if self.checkpoint_every < 1:
            raise ConfigError("checkpoint_every must be >= 1")


@dataclass
class RunSummary:
    best_fitness: float
    generations: int
    evaluations: int
    wall_time_s: float
    output_dir: str


# ----------------------------------------------------------------------
# Config file parsing
# ----------------------------------------------------------------------

def _expect(doc: dict, key: str, where: str):
    if key not in doc:
        raise ConfigError(f"{where}: missing required field '{key}'")
    return doc[key]


def _camera_from_dict(doc: dict, where: str) -> Camera:
    if not isinstance(doc, dict):
        raise ConfigError(f"{where}: expected an object")
    try:
        return Camera(
            position=tuple(_expect(doc, "position", where)),
            look_at=tuple(doc.get("look_at", (0.5, 0.5, 0.5))),
            up=tuple(doc.get("up", (0.0, 1.0, 0.0))),
            vertical_fov=float(doc.get("vertical_fov", 45.0)),
            width=int(doc.get("width", 224)),
            height=int(doc.get("height", 224)),
        )
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"{where}: {exc}") from exc


def _view_from_dict(doc: dict, where: str, base_dir: Path) -> ViewSpec:
    if not isinstance(doc, dict):
        raise ConfigError(f"{where}: expected an object")
    camera = _camera_from_dict(_expect(doc, "camera", where), f"{where}.camera")
    has_prompt = "prompt" in doc
    has_ref = "reference_png" in doc
    if has_prompt == has_ref:
        raise ConfigError(f"{where}: exactly one of 'prompt' or 'reference_png' required")
    if has_prompt:
        if not isinstance(doc["prompt"], str) or not doc["prompt"]:
            raise ConfigError(f"{where}.prompt: expected a non-empty string")
        target = TextPrompt(doc["prompt"])
    else:
        ref_path = base_dir / doc["reference_png"]
        if not ref_path.exists():
            raise ConfigError(f"{where}.reference_png: file not found: {ref_path}")
        target = ReferenceImage(load_png(str(ref_path)))
    return ViewSpec(camera=camera, target=target)


def _transparency_from(doc: object, where: str) -> TransparencyMode:
    if doc == "learnable" or doc is None:
        return TransparencyMode.learnable()
    if isinstance(doc, dict) and set(doc) == {"fixed"}:
        try:
            return TransparencyMode.fixed(float(doc["fixed"]))
        except (TypeError, ValueError) as exc:
            raise ConfigError(f"{where}: {exc}") from exc
    raise ConfigError(f"{where}: expected \"learnable\" or {{\"fixed\": alpha}}, got {doc!r}")


def _scorer_from(doc: dict, where: str) -> Scorer:
    if not isinstance(doc, dict):
        raise ConfigError(f"{where}: expected an object")
    kind = _expect(doc, "type", where)
    if kind == "target_image":
        return TargetImageScorer()
    if kind == "embedding":
        url = _expect(doc, "service_url", where)
        if not isinstance(url, str) or not url:
            raise ConfigError(f"{where}.service_url: expected a non-empty string")
        return EmbeddingScorer(EmbeddingClient(url))
    raise ConfigError(f"{where}.type: expected 'embedding' or 'target_image', got {kind!r}")


def load_run_config(path: str, overrides: dict | None = None) -> RunConfig:
    """Parse a run config file; ``overrides`` may replace output_dir,
    seed (applied to both optimizer and renderer) and workers."""
    config_path = Path(path)
    try:
        with open(config_path, "r", encoding="utf-8") as fh:
            doc = json.load(fh)
    except OSError as exc:
        raise ConfigError(f"cannot read config file: {exc}") from exc
    except json.JSONDecodeError as exc:
        raise ConfigError(f"{path}: invalid JSON at line {exc.lineno}: {exc.msg}") from exc
    return run_config_from_dict(doc, base_dir=config_path.parent, overrides=overrides)


def run_config_from_dict(
    doc: dict, base_dir: Path | None = None, overrides: dict | None = None
) -> RunConfig:
    if not isinstance(doc, dict):
        raise ConfigError("top level: expected an object")
    base_dir = base_dir or Path(".")
    overrides = overrides or {}

    genome_doc = _expect(doc, "genome", "top level")
    try:
        genome = GenomeConfig(
            triangle_count=int(_expect(genome_doc, "triangle_count", "genome")),
            transparency=_transparency_from(
                genome_doc.get("transparency", "learnable"), "genome.transparency"
            ),
        )
    except ValueError as exc:
        raise ConfigError(f"genome: {exc}") from exc

    views_doc = _expect(doc, "views", "top level")
    if not isinstance(views_doc, list) or not views_doc:
        raise ConfigError("views: expected a non-empty list")
    views = tuple(
        _view_from_dict(v, f"views[{i}]", base_dir) for i, v in enumerate(views_doc)
    )

    scorer = _scorer_from(_expect(doc, "scorer", "top level"), "scorer")

    cma_doc = _expect(doc, "cma", "top level")
    seed_override = overrides.get("seed")
    cma_seed = int(seed_override if seed_override is not None else cma_doc.get("seed", 0))

    render_doc = doc.get("render", {})
    try:
        render_settings = RenderSettings(
            samples_per_pixel=int(render_doc.get("samples_per_pixel", 8)),
            max_depth=int(render_doc.get("max_depth", 8)),
            environment=tuple(render_doc.get("environment", (1.0, 1.0, 1.0))),
            seed=int(
                seed_override if seed_override is not None else render_doc.get("seed", 0)
            ),
        )
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"render: {exc}") from exc

    export_doc = doc.get("export", {})
    export = ExportConfig(
        film_pngs=bool(export_doc.get("film_pngs", True)),
        scene_json=bool(export_doc.get("scene_json", True)),
        turntable_frames=int(export_doc.get("turntable_frames", 0)),
    )
    if export.turntable_frames < 0:
        raise ConfigError("export.turntable_frames must be >= 0")

    output_dir = overrides.get("output_dir") or doc.get("output_dir")
    if not output_dir:
        raise ConfigError("top level: missing required field 'output_dir'")

    try:
        return RunConfig(
            genome=genome,
            views=views,
            scorer=scorer,
            population_size=int(_expect(cma_doc, "population_size", "cma")),
            generations=int(_expect(cma_doc, "generations", "cma")),
            sigma0=float(cma_doc.get("sigma0", 1.0)),
            cma_seed=cma_seed,
            render_settings=render_settings,
            output_dir=str(output_dir),
            checkpoint_every=int(doc.get("checkpoint_every", 50)),
            workers=int(overrides.get("workers", doc.get("workers", 0)) or 0),
            export=export,
        )
    except ConfigError:
        raise
    except (TypeError, ValueError) as exc:
        raise ConfigError(str(exc)) from exc


def run_config_to_dict(config: RunConfig) -> dict:
    """Effective configuration as a JSON document (written beside artifacts)."""
    views = []
    for view in config.views:
        cam = view.camera
        entry: dict = {
            "camera": {
                "position": list(cam.position),
                "look_at": list(cam.look_at),
                "up": list(cam.up),
                "vertical_fov": cam.vertical_fov,
                "width": cam.width,
                "height": cam.height,
            }
        }
        if isinstance(view.target, TextPrompt):
            entry["prompt"] = view.target.text
        else:
            entry["reference_sha256"] = view.target.digest
        views.append(entry)
    transparency = (
        "learnable"
        if not config.genome.transparency.is_fixed
        else {"fixed": config.genome.transparency.fixed_alpha}
    )
    scorer: dict = (
        {"type": "target_image"}
        if isinstance(config.scorer, TargetImageScorer)
        else {"type": "embedding", "service_url": config.scorer.client.base_url}
    )
    return {
        "genome": {
            "triangle_count": config.genome.triangle_count,
            "transparency": transparency,
        },
        "views": views,
        "scorer": scorer,
        "cma": {
            "population_size": config.population_size,
            "generations": config.generations,
            "sigma0": config.sigma0,
            "seed": config.cma_seed,
        },
        "render": {
            "samples_per_pixel": config.render_settings.samples_per_pixel,
            "max_depth": config.render_settings.max_depth,
            "environment": list(config.render_settings.environment),
            "seed": config.render_settings.seed,
        },
        "output_dir": config.output_dir,
        "checkpoint_every": config.checkpoint_every,
        "workers": config.workers,
        "export": {
            "film_pngs": config.export.film_pngs,
            "scene_json": config.export.scene_json,
            "turntable_frames": config.export.turntable_frames,
        },
    }


# ----------------------------------------------------------------------
# Parallel evaluation
# ----------------------------------------------------------------------

_WORKER_EVALUATOR: Optional[SceneEvaluator] = None


def _worker_init(payload: bytes) -> None:
    global _WORKER_EVALUATOR
    _WORKER_EVALUATOR = pickle.loads(payload)


def _worker_eval(genome: np.ndarray) -> float:
    assert _WORKER_EVALUATOR is not None
    return _WORKER_EVALUATOR(genome)


class EvaluationPool:
    """Fans candidate evaluations out to worker processes.

    Results are keyed by submission order, so fitness vectors are identical
    whatever the completion order; workers == 1 evaluates inline.
    """

    def __init__(self, evaluator: SceneEvaluator, workers: int = 0):
        self.evaluator = evaluator
        self.workers = workers if workers > 0 else (os.cpu_count() or 1)
        self._pool: Optional[ProcessPoolExecutor] = None
        if self.workers > 1:
            self._pool = ProcessPoolExecutor(
                max_workers=self.workers,
                initializer=_worker_init,
                initargs=(pickle.dumps(evaluator),),
            )

    def map(self, candidates: np.ndarray) -> list[float]:
        if self._pool is None:
            return [self.evaluator(x) for x in candidates]
        return list(self._pool.map(_worker_eval, candidates))

    def close(self) -> None:
        if self._pool is not None:
            self._pool.shutdown()
            self._pool = None

    def __enter__(self) -> "EvaluationPool":
        return self

    def __exit__(self, *exc) -> None:
        self.close()


# ----------------------------------------------------------------------
# Checkpoints
# ----------------------------------------------------------------------

def _write_checkpoint(path: Path, es: CmaEs, config: RunConfig, evaluations: int) -> None:
    doc = {
        "format": CHECKPOINT_FORMAT,
        "generation": es.generation,
        "evaluations": evaluations,
        "genome": {
            "triangle_count": config.genome.triangle_count,
            "fixed_alpha": config.genome.transparency.fixed_alpha,
        },
        "cma": es.to_dict(),
    }
    tmp = path.with_suffix(".tmp")
    with open(tmp, "w", encoding="utf-8") as fh:
        json.dump(doc, fh)
    tmp.replace(path)


def load_checkpoint(path: str, config: RunConfig) -> tuple[CmaEs, int]:
    """Restore optimizer state; returns (state, evaluations so far)."""
    try:
        with open(path, "r", encoding="utf-8") as fh:
            doc = json.load(fh)
    except OSError as exc:
        raise ConfigError(f"cannot read checkpoint: {exc}") from exc
    except json.JSONDecodeError as exc:
        raise ConfigError(f"{path}: invalid JSON: {exc.msg}") from exc
    if doc.get("format") != CHECKPOINT_FORMAT:
        raise ConfigError(f"{path}: not a {CHECKPOINT_FORMAT} file")
    try:
        genome_doc = doc["genome"]
        if genome_doc["triangle_count"] != config.genome.triangle_count or \
                genome_doc["fixed_alpha"] != config.genome.transparency.fixed_alpha:
            raise ConfigError(f"{path}: checkpoint genome does not match the config")
        es = CmaEs.from_dict(doc["cma"])
    except (KeyError, TypeError) as exc:
        raise ConfigError(f"{path}: checkpoint is missing fields: {exc}") from exc
    if es.config.population_size != config.population_size:
        raise ConfigError(
            f"{path}: checkpoint population {es.config.population_size} "
            f"!= config population {config.population_size}"
        )
    if es.config.dimension != config.genome.dimension:
        raise ConfigError(
            f"{path}: checkpoint dimension {es.config.dimension} "
            f"!= genome dimension {config.genome.dimension}"
        )
    return es, int(doc.get("evaluations", es.generation * config.population_size))


def _export_best(out: Path, config: RunConfig, scene: Scene, tag: str) -> None:
    if config.export.scene_json:
        save_scene(scene, str(out / f"scene_{tag}.json"))
    if config.export.film_pngs:
        geometry = SceneGeometry(scene)
        for i, view in enumerate(config.views):
            settings = replace(
                config.render_settings,
                seed=view_seed(config.render_settings.seed, view),
            )
            film = render(geometry, view.camera, settings)
            save_png(film, str(out / f"view{i}_{tag}.png"))


# ----------------------------------------------------------------------
# The run loop
# ----------------------------------------------------------------------

def run(config: RunConfig, resume_checkpoint: Optional[str] = None) -> RunSummary:
    """Execute the configured evolution; fully reproducible from the config.

    Writes a trajectory line per generation, a checkpoint (optimizer state,
    best scene, per-view films) every ``checkpoint_every`` generations and at
    the end, and optional turntable frames of the final best scene. On a
    scorer failure the current state is checkpointed before the error
    propagates. A resumed run continues the exact trajectory.
    """
    started = time.perf_counter()
    out = Path(config.output_dir)
    out.mkdir(parents=True, exist_ok=True)
    probe = out / ".write_probe"
    probe.write_text("")  # unwritable output fails loudly before any work
    probe.unlink()

    config.scorer.prepare(config.views)

    with open(out / "config.json", "w", encoding="utf-8") as fh:
        json.dump(run_config_to_dict(config), fh, indent=2)
        fh.write("\n")

    if resume_checkpoint is not None:
        es, evaluations = load_checkpoint(resume_checkpoint, config)
        if es.generation > config.generations:
            raise ConfigError(
                f"checkpoint is at generation {es.generation}, beyond the "
                f"configured {config.generations}"
            )
    else:
        try:
            es = CmaEs(
                mean0=np.zeros(config.genome.dimension),
                sigma0=config.sigma0,
                population_size=config.population_size,
                seed=config.cma_seed,
            )
        except ValueError as exc:
            raise ConfigError(f"cma: {exc}") from exc
        evaluations = 0

    evaluator = SceneEvaluator(
        config.genome, config.views, config.scorer, config.render_settings
    )

    def checkpoint(tag_generation: int) -> None:
        _write_checkpoint(
            out / f"checkpoint_{tag_generation}.json", es, config, evaluations
        )
        if es.best_x is not None:
            scene = decode(es.best_x, config.genome)
            _export_best(out, config, scene, str(tag_generation))

    trajectory_mode = "a" if resume_checkpoint is not None else "w"
    with EvaluationPool(evaluator, config.workers) as pool, \
            open(out / "trajectory.log", trajectory_mode, encoding="utf-8") as trajectory:
        try:
            for generation in range(es.generation + 1, config.generations + 1):
                candidates = es.ask()
                fitnesses = pool.map(candidates)
                es.tell(candidates, fitnesses)
                evaluations += len(fitnesses)
                min_eig, max_eig = es.eigenvalue_range
                trajectory.write(
                    f"{generation},{es.best_f!r},{float(np.median(fitnesses))!r},"
                    f"{es.sigma!r},{min_eig!r},{max_eig!r}\n"
                )
                trajectory.flush()
                if generation % config.checkpoint_every == 0 and generation != config.generations:
                    checkpoint(generation)
        except ScorerError:
            checkpoint(es.generation)
            raise

    checkpoint(config.generations)

    if config.export.turntable_frames > 0 and es.best_x is not None:
        scene = decode(es.best_x, config.genome)
        geometry = SceneGeometry(scene)
        cam0 = config.views[0].camera
        frames = config.export.turntable_frames
        for k in range(frames):
            cam = orbit_camera(
                azimuth_deg=360.0 * k / frames,
                width=cam0.width,
                height=cam0.height,
            )
            settings = replace(config.render_settings, seed=config.render_settings.seed + k)
            save_png(render(geometry, cam, settings), str(out / f"turntable_{k}.png"))

    return RunSummary(
        best_fitness=es.best_f,
        generations=es.generation,
        evaluations=evaluations,
        wall_time_s=time.perf_counter() - started,
        output_dir=str(out),
    )


def rerender(
    scene_path: str,
    views: Sequence[ViewSpec] | Sequence[Camera],
    settings: RenderSettings,
    output_dir: str,
    turntable_frames: int = 0,
) -> list[str]:
    """Re-render a saved scene at the requested quality; returns PNG paths.

    Views rendered with the same settings as the originating run reproduce
    its checkpoint films bit for bit.
    """
    scene = load_scene(scene_path)
    geometry = SceneGeometry(scene)
    out = Path(output_dir)
    out.mkdir(parents=True, exist_ok=True)
    written: list[str] = []
    for i, view in enumerate(views):
        if isinstance(view, Camera):
            camera, seed = view, settings.seed
        else:
            camera, seed = view.camera, view_seed(settings.seed, view)
        film = render(geometry, camera, replace(settings, seed=seed))
        path = out / f"view{i}.png"
        save_png(film, str(path))
        written.append(str(path))
    cam0 = views[0].camera if isinstance(views[0], ViewSpec) else views[0]
    for k in range(turntable_frames):
        cam = orbit_camera(
            azimuth_deg=360.0 * k / turntable_frames,
            width=cam0.width,
            height=cam0.height,
        )
        path = out / f"turntable_{k}.png"
        save_png(render(geometry, cam, replace(settings, seed=settings.seed + k)), str(path))
        written.append(str(path))
    return written
