"""Scene fitness: render every view, score each film, average the distances.

Two interchangeable scorers: the embedding scorer talks to an image/text
encoder service over HTTP and measures cosine distance in its latent
space; the target-image scorer compares tonemapped pixels against
reference images and needs nothing outside this process, which keeps the
whole evolution loop testable offline.
"""

from __future__ import annotations

import base64
import hashlib
import json
import threading
import time
from dataclasses import dataclass, replace
from typing import Sequence, Union

import numpy as np
import requests

from .genome import GenomeConfig, decode
from .render import Camera, Film, RenderSettings, SceneGeometry, png_bytes, render, tonemap


class ScorerError(RuntimeError):
    """The scorer cannot produce a distance (service down, bad target, ...)."""


class ProtocolError(ScorerError):
    """The embedding service answered with a malformed or invalid response."""


# ----------------------------------------------------------------------
# Views and targets
# ----------------------------------------------------------------------

@dataclass(frozen=True)
class TextPrompt:
    text: str

    def __post_init__(self) -> None:
        if not self.text:
            raise ValueError("text prompt must be non-empty")


class ReferenceImage:
    """A target image in tonemapped 8-bit RGB."""

    def __init__(self, image: np.ndarray):
        image = np.asarray(image)
        if image.dtype != np.uint8 or image.ndim != 3 or image.shape[2] != 3:
            raise ValueError("reference image must be (H, W, 3) uint8")
        self.image = image
        self.digest = hashlib.sha256(image.tobytes()).hexdigest()

    @classmethod
    def from_film(cls, film: Film) -> "ReferenceImage":
        return cls(tonemap(film))

    def __eq__(self, other: object) -> bool:
        return isinstance(other, ReferenceImage) and self.digest == other.digest

    def __hash__(self) -> int:
        return hash(self.digest)


Target = Union[TextPrompt, ReferenceImage]


@dataclass(frozen=True)
class ViewSpec:
    camera: Camera
    target: Target


def camera_descriptor(camera: Camera) -> str:
    """Stable textual identity of a camera."""
    return json.dumps(
        {
            "position": list(camera.position),
            "look_at": list(camera.look_at),
            "up": list(camera.up),
            "vertical_fov": camera.vertical_fov,
            "width": camera.width,
            "height": camera.height,
        },
        sort_keys=True,
    )


def view_seed(base_seed: int, view: Union[ViewSpec, Camera]) -> int:
    """Render seed for one view.

    Keyed by the camera's content, never by list position, so permuting the
    view list permutes per-view results without changing them. Views sharing
    a camera share a seed (their films are identical anyway), and a target
    may be produced by rendering with this seed before the view exists.
    """
    camera = view.camera if isinstance(view, ViewSpec) else view
    material = f"{base_seed}|{camera_descriptor(camera)}".encode()
    return int.from_bytes(hashlib.sha256(material).digest()[:8], "big")


# ----------------------------------------------------------------------
# Distances
# ----------------------------------------------------------------------

def reference_for_camera(scene, camera: Camera, settings: RenderSettings) -> ReferenceImage:
    """Render a scene into a reference target for this camera.

    Uses the seed the evaluator derives for the camera, so a genome that
    decodes to ``scene`` scores exactly zero against the result.
    """
    film = render(scene, camera, replace(settings, seed=view_seed(settings.seed, camera)))
    return ReferenceImage.from_film(film)


def cosine_distance(a: np.ndarray, b: np.ndarray) -> float:
    """1 minus the inner product of two unit vectors; in [0, 2]."""
    a = np.asarray(a, dtype=np.float64).ravel()
    b = np.asarray(b, dtype=np.float64).ravel()
    if a.size != b.size:
        raise ValueError(f"dimension mismatch: {a.size} vs {b.size}")
    return float(1.0 - np.dot(a, b))


def target_image_score(film: Film, reference: Film) -> float:
    """Mean squared error over tonemapped pixels, normalized to [0, 1]."""
    if (film.width, film.height) != (reference.width, reference.height):
        raise ValueError(
            f"film {film.width}x{film.height} does not match "
            f"reference {reference.width}x{reference.height}"
        )
    return _mse_bytes(tonemap(film), tonemap(reference))


def _mse_bytes(a: np.ndarray, b: np.ndarray) -> float:
    if a.shape != b.shape:
        raise ValueError(f"image shape mismatch: {a.shape} vs {b.shape}")
    diff = (a.astype(np.float64) - b.astype(np.float64)) / 255.0
    return float(np.mean(diff * diff))


def as_unit_embedding(values: Sequence[float]) -> np.ndarray:
    vec = np.asarray(values, dtype=np.float64).ravel()
    if vec.size == 0 or not np.all(np.isfinite(vec)):
        raise ProtocolError("embedding must be a non-empty finite vector")
    norm = float(np.linalg.norm(vec))
    if abs(norm - 1.0) > 1e-6:
        raise ProtocolError(f"embedding norm {norm} deviates from 1 by more than 1e-6")
    return vec


# ----------------------------------------------------------------------
# Embedding service client
# ----------------------------------------------------------------------

class EmbeddingClient:
    """HTTP client for the embedding service (JSON bodies, UTF-8).

    Transient transport failures (connection errors, timeouts, 5xx) are
    retried up to ``max_retries`` times with exponential backoff; 4xx and
    malformed responses raise :class:`ProtocolError` immediately.
    """

    def __init__(
        self,
        base_url: str,
        timeout: float = 60.0,
        max_retries: int = 3,
        backoff: float = 0.5,
    ):
        self.base_url = base_url.rstrip("/")
        self.timeout = timeout
        self.max_retries = max_retries
        self.backoff = backoff

    def health(self) -> dict:
        doc = self._request("GET", "/health", None)
        if "dim" not in doc or "model" not in doc:
            raise ProtocolError(f"health response missing fields: {doc}")
        return doc

    def embed_image(self, png: bytes) -> np.ndarray:
        doc = self._request(
            "POST", "/embed_image", {"png_base64": base64.b64encode(png).decode("ascii")}
        )
        return self._embedding_from(doc)

    def embed_text(self, text: str) -> np.ndarray:
        doc = self._request("POST", "/embed_text", {"text": text})
        return self._embedding_from(doc)

    @staticmethod
    def _embedding_from(doc: dict) -> np.ndarray:
        if "embedding" not in doc:
            raise ProtocolError(f"response missing 'embedding': {list(doc)}")
        vec = as_unit_embedding(doc["embedding"])
        if "dim" in doc and doc["dim"] != vec.size:
            raise ProtocolError(f"declared dim {doc['dim']} != vector length {vec.size}")
        return vec

    def _request(self, method: str, path: str, body: dict | None) -> dict:
        url = self.base_url + path
        last_error: Exception | None = None
        for attempt in range(self.max_retries + 1):
            if attempt:
                time.sleep(self.backoff * 2 ** (attempt - 1))
            try:
                if method == "GET":
                    resp = requests.get(url, timeout=self.timeout)
                else:
                    resp = requests.post(url, json=body, timeout=self.timeout)
            except requests.RequestException as exc:
                last_error = exc
                continue
            if resp.status_code >= 500 or resp.status_code == 503:
                last_error = ScorerError(f"{url} -> {resp.status_code}")
                continue
            if resp.status_code != 200:
                raise ProtocolError(f"{url} -> {resp.status_code}: {resp.text[:200]}")
            try:
                return resp.json()
            except ValueError as exc:
                raise ProtocolError(f"{url}: response is not JSON") from exc
        raise ScorerError(
            f"{url} unreachable after {self.max_retries + 1} attempts: {last_error}"
        )


# ----------------------------------------------------------------------
# Scorers
# ----------------------------------------------------------------------

class TargetImageScorer:
    """Distance = normalized MSE against the view's reference image."""

    def prepare(self, views: Sequence[ViewSpec]) -> None:
        for view in views:
            if not isinstance(view.target, ReferenceImage):
                raise ScorerError(
                    "target-image scorer requires a reference image on every view"
                )
            cam = view.camera
            if view.target.image.shape[:2] != (cam.height, cam.width):
                raise ScorerError(
                    f"reference image {view.target.image.shape[:2]} does not match "
                    f"camera film {(cam.height, cam.width)}"
                )

    def score(self, film: Film, view: ViewSpec) -> float:
        assert isinstance(view.target, ReferenceImage)
        return _mse_bytes(tonemap(film), view.target.image)


class EmbeddingScorer:
    """Distance = cosine distance between film and target embeddings.

    Target embeddings (one per distinct prompt or reference image) are
    computed once and cached for the scorer's lifetime; the cache is safe
    for concurrent reads with a one-time write per key.
    """

    def __init__(self, client: EmbeddingClient):
        self.client = client
        self._cache: dict[str, np.ndarray] = {}
        self._lock = threading.Lock()

    def prepare(self, views: Sequence[ViewSpec]) -> None:
        self.client.health()
        for view in views:
            self._target_embedding(view)

    def _target_embedding(self, view: ViewSpec) -> np.ndarray:
        if isinstance(view.target, TextPrompt):
            key = "text:" + view.target.text
        else:
            key = "image:" + view.target.digest
        hit = self._cache.get(key)
        if hit is not None:
            return hit
        if isinstance(view.target, TextPrompt):
            vec = self.client.embed_text(view.target.text)
        else:
            vec = self.client.embed_image(png_bytes(view.target.image))
        with self._lock:
            return self._cache.setdefault(key, vec)

    def score(self, film: Film, view: ViewSpec) -> float:
        film_vec = self.client.embed_image(png_bytes(tonemap(film)))
        return cosine_distance(film_vec, self._target_embedding(view))

    def __getstate__(self) -> dict:
        # worker processes start with a cold cache and their own lock
        return {"client": self.client}

    def __setstate__(self, state: dict) -> None:
        self.client = state["client"]
        self._cache = {}
        self._lock = threading.Lock()


Scorer = Union[TargetImageScorer, EmbeddingScorer]


# ----------------------------------------------------------------------
# Evaluation
# ----------------------------------------------------------------------

@dataclass(frozen=True)
class FitnessReport:
    total: float
    per_view: tuple[tuple[int, float], ...]


def evaluate(
    genome: np.ndarray,
    config: GenomeConfig,
    views: Sequence[ViewSpec],
    scorer: Scorer,
    settings: RenderSettings,
) -> FitnessReport:
    """Decode, render every view with its content-keyed seed, score, average.

    The same genome under the same settings always receives the same report:
    renders are bit-exact and per-view seeds depend on view content only.
    """
    if not views:
        raise ValueError("at least one view is required")
    scene = decode(genome, config)
    geometry = SceneGeometry(scene)
    per_view = []
    for index, view in enumerate(views):
        view_settings = replace(settings, seed=view_seed(settings.seed, view))
        film = render(geometry, view.camera, view_settings)
        per_view.append((index, float(scorer.score(film, view))))
    total = float(np.mean([d for _, d in per_view]))
    return FitnessReport(total=total, per_view=tuple(per_view))


class SceneEvaluator:
    """Binds everything a fitness call needs; picklable for worker pools."""

    def __init__(
        self,
        genome_config: GenomeConfig,
        views: Sequence[ViewSpec],
        scorer: Scorer,
        settings: RenderSettings,
    ):
        self.genome_config = genome_config
        self.views = tuple(views)
        self.scorer = scorer
        self.settings = settings

    def report(self, genome: np.ndarray) -> FitnessReport:
        return evaluate(genome, self.genome_config, self.views, self.scorer, self.settings)

    def __call__(self, genome: np.ndarray) -> float:
        return self.report(genome).total
