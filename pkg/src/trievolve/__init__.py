"""trievolve: evolves semi-transparent 3D triangle scenes whose ray-traced
renders match text prompts or reference images."""

__version__ = "0.1.0"

from .cmaes import CmaConfig, CmaEs
from .fitness import (
    EmbeddingClient,
    EmbeddingScorer,
    FitnessReport,
    ReferenceImage,
    TargetImageScorer,
    TextPrompt,
    ViewSpec,
    cosine_distance,
    evaluate,
    reference_for_camera,
)
from .genome import (
    GenomeConfig,
    Scene,
    TransparencyMode,
    Triangle,
    decode,
    encode,
    genome_dim,
    load_scene,
    save_scene,
)
from .render import Camera, Film, RenderSettings, render, side_cameras, tonemap
from .runner import RunConfig, RunSummary, load_run_config, rerender, run

__all__ = [
    "Camera",
    "CmaConfig",
    "CmaEs",
    "EmbeddingClient",
    "EmbeddingScorer",
    "Film",
    "FitnessReport",
    "GenomeConfig",
    "ReferenceImage",
    "RenderSettings",
    "RunConfig",
    "RunSummary",
    "Scene",
    "TargetImageScorer",
    "TextPrompt",
    "TransparencyMode",
    "Triangle",
    "ViewSpec",
    "cosine_distance",
    "decode",
    "encode",
    "evaluate",
    "genome_dim",
    "load_run_config",
    "load_scene",
    "reference_for_camera",
    "render",
    "rerender",
    "run",
    "save_scene",
    "side_cameras",
    "tonemap",
    "__version__",
]
