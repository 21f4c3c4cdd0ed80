from __future__ import annotations

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from trievolve.fitness import (
    EmbeddingClient,
    EmbeddingScorer,
    ProtocolError,
    ReferenceImage,
    ScorerError,
    TargetImageScorer,
    TextPrompt,
    ViewSpec,
    as_unit_embedding,
    cosine_distance,
    evaluate,
    reference_for_camera,
    target_image_score,
    view_seed,
)
from trievolve.genome import GenomeConfig, decode
from trievolve.render import Camera, Film, RenderSettings, render, tonemap

from stub_service import StubService, hash_embedding

CAMERA = Camera(position=(0.5, 0.5, 2.7), look_at=(0.5, 0.5, 0.5), width=24, height=24)
SETTINGS = RenderSettings(samples_per_pixel=2, seed=99)
GENOME_CONFIG = GenomeConfig(3)


def unit(v) -> np.ndarray:
    v = np.asarray(v, dtype=np.float64)
    return v / np.linalg.norm(v)


# -- cosine distance -----------------------------------------------------

def test_cosine_distance_reference_points():
    a = unit([1.0, 2.0, 3.0])
    assert cosine_distance(a, a) == pytest.approx(0.0, abs=1e-15)
    assert cosine_distance(unit([1, 0]), unit([0, 1])) == pytest.approx(1.0)
    assert cosine_distance(a, -a) == pytest.approx(2.0)


def test_cosine_distance_dimension_mismatch():
    with pytest.raises(ValueError):
        cosine_distance(np.ones(3) / np.sqrt(3), np.ones(4) / 2.0)


@settings(max_examples=100, deadline=None)
@given(seed=st.integers(min_value=0, max_value=2**32 - 1))
def test_cosine_distance_symmetric_and_zero_on_self(seed):
    gen = np.random.default_rng(seed)
    a = unit(gen.standard_normal(8))
    b = unit(gen.standard_normal(8))
    assert cosine_distance(a, b) == pytest.approx(cosine_distance(b, a), abs=1e-12)
    assert cosine_distance(a, a) == pytest.approx(0.0, abs=1e-12)
    assert -1e-12 <= cosine_distance(a, b) <= 2.0 + 1e-12


# -- target-image score ---------------------------------------------------

def test_target_image_score_reference_values():
    black = Film(4, 4, np.zeros((4, 4, 3)))
    white = Film(4, 4, np.ones((4, 4, 3)))
    assert target_image_score(black, black) == 0.0
    assert target_image_score(black, white) == 1.0

    gray_level = (128 / 255.0) ** 2.2  # linear radiance that tonemaps to byte 128
    gray = Film(4, 4, np.full((4, 4, 3), gray_level))
    assert tonemap(gray)[0, 0, 0] == 128
    assert target_image_score(gray, black) == pytest.approx((128 / 255.0) ** 2, abs=1e-12)


def test_target_image_score_dimension_mismatch():
    with pytest.raises(ValueError):
        target_image_score(Film(4, 4, np.zeros((4, 4, 3))), Film(5, 4, np.zeros((4, 5, 3))))


# -- embedding validation --------------------------------------------------

def test_as_unit_embedding_accepts_unit_and_rejects_others():
    assert as_unit_embedding(unit([3.0, 4.0])).shape == (2,)
    with pytest.raises(ProtocolError):
        as_unit_embedding([1.0, 1.0])
    with pytest.raises(ProtocolError):
        as_unit_embedding([np.nan, 0.0])
    with pytest.raises(ProtocolError):
        as_unit_embedding([])


# -- evaluation -----------------------------------------------------------

class ScriptedScorer:
    """Returns pre-set distances keyed by view identity."""

    def __init__(self, by_view: dict):
        self.by_view = by_view

    def prepare(self, views):
        pass

    def score(self, film, view):
        return self.by_view[id(view)]


def make_views(n: int):
    views = []
    for k in range(n):
        camera = Camera(
            position=(0.5 + 2.2 * np.cos(k), 0.5, 0.5 + 2.2 * np.sin(k)),
            look_at=(0.5, 0.5, 0.5),
            width=16,
            height=16,
        )
        views.append(ViewSpec(camera=camera, target=TextPrompt(f"view {k}")))
    return views


def test_total_is_exact_mean_of_per_view_distances(rng):
    views = make_views(4)
    scorer = ScriptedScorer({id(v): d for v, d in zip(views, (0.2, 0.4, 0.6, 0.8))})
    genome = rng.standard_normal(GENOME_CONFIG.dimension)
    report = evaluate(genome, GENOME_CONFIG, views, scorer, SETTINGS)
    assert report.total == pytest.approx(0.5, abs=1e-12)
    assert [i for i, _ in report.per_view] == [0, 1, 2, 3]
    distances = [d for _, d in report.per_view]
    assert report.total == pytest.approx(float(np.mean(distances)), abs=1e-15)


def test_self_match_scores_zero(rng):
    genome = rng.standard_normal(GENOME_CONFIG.dimension)
    scene = decode(genome, GENOME_CONFIG)
    view = ViewSpec(camera=CAMERA, target=reference_for_camera(scene, CAMERA, SETTINGS))
    report = evaluate(genome, GENOME_CONFIG, [view], TargetImageScorer(), SETTINGS)
    assert report.total == 0.0


def test_evaluation_is_deterministic(rng):
    genome = rng.standard_normal(GENOME_CONFIG.dimension)
    scene = decode(rng.standard_normal(GENOME_CONFIG.dimension), GENOME_CONFIG)
    view = ViewSpec(camera=CAMERA, target=reference_for_camera(scene, CAMERA, SETTINGS))
    a = evaluate(genome, GENOME_CONFIG, [view], TargetImageScorer(), SETTINGS)
    b = evaluate(genome, GENOME_CONFIG, [view], TargetImageScorer(), SETTINGS)
    assert a == b


def test_permuting_views_permutes_per_view_and_keeps_total(rng):
    genome = rng.standard_normal(GENOME_CONFIG.dimension)
    scene = decode(rng.standard_normal(GENOME_CONFIG.dimension), GENOME_CONFIG)
    cameras = [
        Camera(position=(0.5, 0.5, 2.7), look_at=(0.5, 0.5, 0.5), width=16, height=16),
        Camera(position=(2.7, 0.5, 0.5), look_at=(0.5, 0.5, 0.5), width=16, height=16),
        Camera(position=(0.5, 0.5, -1.7), look_at=(0.5, 0.5, 0.5), width=16, height=16),
    ]
    views = [
        ViewSpec(camera=c, target=reference_for_camera(scene, c, SETTINGS)) for c in cameras
    ]
    forward = evaluate(genome, GENOME_CONFIG, views, TargetImageScorer(), SETTINGS)
    backward = evaluate(genome, GENOME_CONFIG, views[::-1], TargetImageScorer(), SETTINGS)
    assert [d for _, d in backward.per_view] == [d for _, d in forward.per_view][::-1]
    assert backward.total == pytest.approx(forward.total, abs=1e-12)


def test_view_seed_depends_on_camera_not_position_in_list():
    cam_a = Camera(position=(0.5, 0.5, 2.7), look_at=(0.5, 0.5, 0.5), width=16, height=16)
    cam_b = Camera(position=(2.7, 0.5, 0.5), look_at=(0.5, 0.5, 0.5), width=16, height=16)
    va = ViewSpec(camera=cam_a, target=TextPrompt("x"))
    vb = ViewSpec(camera=cam_b, target=TextPrompt("x"))
    assert view_seed(7, va) == view_seed(7, cam_a)
    assert view_seed(7, va) != view_seed(7, vb)
    assert view_seed(7, va) != view_seed(8, va)


def test_empty_view_list_rejected(rng):
    with pytest.raises(ValueError):
        evaluate(rng.standard_normal(GENOME_CONFIG.dimension), GENOME_CONFIG, [],
                 TargetImageScorer(), SETTINGS)


def test_target_image_scorer_rejects_prompt_views():
    scorer = TargetImageScorer()
    with pytest.raises(ScorerError):
        scorer.prepare([ViewSpec(camera=CAMERA, target=TextPrompt("a bird"))])


def test_target_image_scorer_rejects_mismatched_reference():
    scorer = TargetImageScorer()
    wrong = ReferenceImage(np.zeros((8, 8, 3), dtype=np.uint8))
    with pytest.raises(ScorerError):
        scorer.prepare([ViewSpec(camera=CAMERA, target=wrong)])


# -- embedding client against the stub service -----------------------------

def test_client_health_and_embeddings():
    with StubService(dim=16) as svc:
        client = EmbeddingClient(svc.url, timeout=5, backoff=0.01)
        health = client.health()
        assert health["dim"] == 16
        vec = client.embed_text("a dog")
        assert vec.shape == (16,)
        assert abs(np.linalg.norm(vec) - 1.0) < 1e-6
        assert np.array_equal(vec, client.embed_text("a dog"))
        assert np.array_equal(vec, hash_embedding(b"a dog", 16))
        img = client.embed_image(b"\x89PNG fake bytes")
        assert abs(np.linalg.norm(img) - 1.0) < 1e-6


def test_client_retries_transient_failures():
    with StubService(dim=8) as svc:
        svc.server.fail_requests = 2
        client = EmbeddingClient(svc.url, timeout=5, max_retries=3, backoff=0.01)
        vec = client.embed_text("retry me")
        assert vec.shape == (8,)
        # two failures plus the success
        assert svc.request_count("/embed_text") == 3


def test_client_gives_up_after_max_retries():
    with StubService(dim=8) as svc:
        svc.server.fail_requests = 10
        client = EmbeddingClient(svc.url, timeout=5, max_retries=2, backoff=0.01)
        with pytest.raises(ScorerError):
            client.embed_text("never works")
        assert svc.request_count("/embed_text") == 3


def test_client_raises_protocol_error_on_400():
    with StubService(dim=8) as svc:
        client = EmbeddingClient(svc.url, timeout=5, backoff=0.01)
        with pytest.raises(ProtocolError):
            client._request("POST", "/embed_text", {"text": ""})


def test_client_rejects_non_unit_embeddings():
    with StubService(dim=8) as svc:
        svc.server.break_norm = True
        client = EmbeddingClient(svc.url, timeout=5, backoff=0.01)
        with pytest.raises(ProtocolError):
            client.embed_text("broken")


def test_client_unreachable_service():
    client = EmbeddingClient("http://127.0.0.1:9", timeout=0.2, max_retries=1, backoff=0.01)
    with pytest.raises(ScorerError):
        client.health()


def test_embedding_scorer_caches_targets_and_scores(rng):
    genome = rng.standard_normal(GENOME_CONFIG.dimension)
    with StubService(dim=32) as svc:
        scorer = EmbeddingScorer(EmbeddingClient(svc.url, timeout=5, backoff=0.01))
        views = [
            ViewSpec(camera=CAMERA, target=TextPrompt("a vivid, colorful bird")),
            ViewSpec(
                camera=Camera(position=(2.7, 0.5, 0.5), look_at=(0.5, 0.5, 0.5),
                              width=24, height=24),
                target=TextPrompt("a vivid, colorful bird"),
            ),
        ]
        scorer.prepare(views)
        assert svc.request_count("/embed_text") == 1  # one distinct prompt
        report = evaluate(genome, GENOME_CONFIG, views, scorer, SETTINGS)
        assert svc.request_count("/embed_text") == 1  # cache reused
        assert svc.request_count("/embed_image") == 2  # one film per view
        assert 0.0 <= report.total <= 2.0

        # distance equals cosine distance computed by hand
        scene = decode(genome, GENOME_CONFIG)
        from trievolve.render import png_bytes
        from dataclasses import replace
        film = render(scene, views[0].camera,
                      replace(SETTINGS, seed=view_seed(SETTINGS.seed, views[0])))
        img_vec = np.asarray(hash_embedding(png_bytes(tonemap(film)), 32))
        txt_vec = np.asarray(hash_embedding(b"a vivid, colorful bird", 32))
        expected = cosine_distance(img_vec, txt_vec)
        assert report.per_view[0][1] == pytest.approx(expected, abs=1e-12)
