"""Parameter encoding for triangle scenes.

Each triangle carries 13 scene values: three vertices inside the unit cube
(9 coordinates), an RGB color and an alpha that weights diffuse against
glass.  The search space is unconstrained: every gene is squashed through a
logistic sigmoid into [0, 1], so any finite real vector decodes to a valid
scene and the optimizer never sees a boundary.

Gene block layout, per triangle, in order:

    x1 y1 z1  x2 y2 z2  x3 y3 z3  R G B  [A]

The trailing alpha gene is dropped when the scene uses a fixed transparency,
giving 12 genes per triangle instead of 13.
"""

from __future__ import annotations

import json
import warnings
from dataclasses import dataclass
from typing import Optional

import numpy as np

Vec3 = tuple[float, float, float]

# encode() clamps components this far inside (0,1) when logit is undefined
_LOGIT_CLAMP = 1e-9


class EncodingError(ValueError):
    """Genome does not match its configuration (bad length or non-finite genes)."""


class EncodeClampWarning(UserWarning):
    """A scene component sat exactly on 0 or 1 and was clamped before logit."""


@dataclass(frozen=True)
class TransparencyMode:
    """Learnable per-triangle alpha, or one fixed constant for the whole scene."""

    fixed_alpha: Optional[float] = None

    def __post_init__(self) -> None:
        if self.fixed_alpha is not None and not 0.0 <= self.fixed_alpha <= 1.0:
            raise ValueError(f"fixed alpha must lie in [0, 1], got {self.fixed_alpha}")

    @classmethod
    def learnable(cls) -> "TransparencyMode":
        return cls(None)

    @classmethod
    def fixed(cls, alpha: float) -> "TransparencyMode":
        return cls(float(alpha))

    @property
    def is_fixed(self) -> bool:
        return self.fixed_alpha is not None

    @property
    def genes_per_triangle(self) -> int:
        return 12 if self.is_fixed else 13


@dataclass(frozen=True)
class GenomeConfig:
    triangle_count: int
    transparency: TransparencyMode = TransparencyMode(None)

    def __post_init__(self) -> None:
        if self.triangle_count < 1:
            raise ValueError(f"triangle_count must be >= 1, got {self.triangle_count}")

    @property
    def dimension(self) -> int:
        return self.triangle_count * self.transparency.genes_per_triangle


@dataclass(frozen=True)
class Triangle:
    v1: Vec3
    v2: Vec3
    v3: Vec3
    color: Vec3
    alpha: float

    def components(self) -> tuple[float, ...]:
        """The 13 scene values in gene-block order."""
        return (*self.v1, *self.v2, *self.v3, *self.color, self.alpha)


@dataclass(frozen=True)
class Scene:
    triangles: tuple[Triangle, ...]

    def __len__(self) -> int:
        return len(self.triangles)


def genome_dim(config: GenomeConfig) -> int:
    """Number of genes a scene of ``config.triangle_count`` triangles needs."""
    return config.dimension


def sigmoid(x: np.ndarray) -> np.ndarray:
    """Numerically stable logistic function, elementwise."""
    x = np.asarray(x, dtype=np.float64)
    out = np.empty_like(x)
    pos = x >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-x[pos]))
    ex = np.exp(x[~pos])
    out[~pos] = ex / (1.0 + ex)
    return out


def logit(p: np.ndarray) -> np.ndarray:
    p = np.asarray(p, dtype=np.float64)
    return np.log(p) - np.log1p(-p)


def decode(genome: np.ndarray, config: GenomeConfig) -> Scene:
    """Map an unconstrained gene vector to a valid scene.

    Every gene is squashed through the logistic sigmoid, so all vertex
    coordinates, colors and alphas land in [0, 1] regardless of the input.
    With fixed transparency the alpha gene is absent and every triangle
    receives the configured constant.
    """
    values = np.asarray(genome, dtype=np.float64).ravel()
    if values.size != config.dimension:
        raise EncodingError(
            f"genome has {values.size} genes, config requires {config.dimension}"
        )
    if not np.all(np.isfinite(values)):
        raise EncodingError("genome contains non-finite genes")

    gpt = config.transparency.genes_per_triangle
    blocks = sigmoid(values).reshape(config.triangle_count, gpt)
    fixed = config.transparency.fixed_alpha

    triangles = []
    for row in blocks:
        alpha = fixed if fixed is not None else float(row[12])
        triangles.append(
            Triangle(
                v1=(float(row[0]), float(row[1]), float(row[2])),
                v2=(float(row[3]), float(row[4]), float(row[5])),
                v3=(float(row[6]), float(row[7]), float(row[8])),
                color=(float(row[9]), float(row[10]), float(row[11])),
                alpha=alpha,
            )
        )
    return Scene(tuple(triangles))


def encode(scene: Scene, config: GenomeConfig) -> np.ndarray:
    """Inverse of :func:`decode` for scenes strictly inside (0, 1).

    Components exactly at 0 or 1 have no finite logit; they are clamped to
    [1e-9, 1 - 1e-9] and an :class:`EncodeClampWarning` is emitted.
    """
    if len(scene) != config.triangle_count:
        raise EncodingError(
            f"scene has {len(scene)} triangles, config requires {config.triangle_count}"
        )
    gpt = config.transparency.genes_per_triangle
    comps = np.array(
        [tri.components()[:gpt] for tri in scene.triangles], dtype=np.float64
    )
    if np.any(comps <= 0.0) or np.any(comps >= 1.0):
        warnings.warn(
            "scene components at the [0,1] boundary were clamped before logit",
            EncodeClampWarning,
            stacklevel=2,
        )
        comps = np.clip(comps, _LOGIT_CLAMP, 1.0 - _LOGIT_CLAMP)
    return logit(comps).ravel()


# ----------------------------------------------------------------------
# Scene files
# ----------------------------------------------------------------------

class SceneFileError(ValueError):
    """Scene document is malformed; the message names the offending field."""


def scene_to_dict(scene: Scene) -> dict:
    return {
        "triangles": [
            {
                "v1": list(t.v1),
                "v2": list(t.v2),
                "v3": list(t.v3),
                "color": list(t.color),
                "alpha": t.alpha,
            }
            for t in scene.triangles
        ]
    }


def _unit_value(raw: object, where: str) -> float:
    if not isinstance(raw, (int, float)) or isinstance(raw, bool):
        raise SceneFileError(f"{where}: expected a number, got {raw!r}")
    val = float(raw)
    if not np.isfinite(val) or not 0.0 <= val <= 1.0:
        raise SceneFileError(f"{where}: expected a value in [0, 1], got {raw!r}")
    return val


def _unit_vec3(raw: object, where: str) -> Vec3:
    if not isinstance(raw, (list, tuple)) or len(raw) != 3:
        raise SceneFileError(f"{where}: expected a list of 3 numbers, got {raw!r}")
    return tuple(_unit_value(v, f"{where}[{i}]") for i, v in enumerate(raw))


def scene_from_dict(doc: object) -> Scene:
    if not isinstance(doc, dict) or "triangles" not in doc:
        raise SceneFileError("top level: expected an object with a 'triangles' field")
    raw_tris = doc["triangles"]
    if not isinstance(raw_tris, list):
        raise SceneFileError("triangles: expected a list")
    triangles = []
    for i, raw in enumerate(raw_tris):
        where = f"triangles[{i}]"
        if not isinstance(raw, dict):
            raise SceneFileError(f"{where}: expected an object")
        missing = {"v1", "v2", "v3", "color", "alpha"} - raw.keys()
        if missing:
            raise SceneFileError(f"{where}: missing fields {sorted(missing)}")
        triangles.append(
            Triangle(
                v1=_unit_vec3(raw["v1"], f"{where}.v1"),
                v2=_unit_vec3(raw["v2"], f"{where}.v2"),
                v3=_unit_vec3(raw["v3"], f"{where}.v3"),
                color=_unit_vec3(raw["color"], f"{where}.color"),
                alpha=_unit_value(raw["alpha"], f"{where}.alpha"),
            )
        )
    return Scene(tuple(triangles))


def save_scene(scene: Scene, path: str) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(scene_to_dict(scene), fh, indent=2)
        fh.write("\n")


def load_scene(path: str) -> Scene:
    with open(path, "r", encoding="utf-8") as fh:
        try:
            doc = json.load(fh)
        except json.JSONDecodeError as exc:
            raise SceneFileError(f"{path}: invalid JSON at line {exc.lineno}: {exc.msg}") from exc
    return scene_from_dict(doc)
