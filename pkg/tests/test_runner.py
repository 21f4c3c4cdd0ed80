from __future__ import annotations

import json
from pathlib import Path

import numpy as np
import pytest

from trievolve.cli import main
from trievolve.fitness import (
    ReferenceImage,
    ScorerError,
    TargetImageScorer,
    ViewSpec,
    reference_for_camera,
)
from trievolve.genome import GenomeConfig, decode, load_scene
from trievolve.render import Camera, RenderSettings, SceneGeometry, load_png, render, save_png
from trievolve.runner import (
    ConfigError,
    ExportConfig,
    RunConfig,
    load_run_config,
    rerender,
    run,
    run_config_from_dict,
)

CAMERA = Camera(position=(0.5, 0.5, 2.7), look_at=(0.5, 0.5, 0.5), width=32, height=32)
SETTINGS = RenderSettings(samples_per_pixel=2, seed=17)
GENOME = GenomeConfig(4)


def desk_config(tmp_path: Path, **kw) -> RunConfig:
    hidden = decode(np.random.default_rng(5).standard_normal(GENOME.dimension), GENOME)
    view = ViewSpec(camera=CAMERA, target=reference_for_camera(hidden, CAMERA, SETTINGS))
    defaults = dict(
        genome=GENOME,
        views=(view,),
        scorer=TargetImageScorer(),
        population_size=6,
        generations=8,
        sigma0=1.0,
        cma_seed=3,
        render_settings=SETTINGS,
        output_dir=str(tmp_path / "out"),
        checkpoint_every=4,
        workers=1,
        export=ExportConfig(),
    )
    defaults.update(kw)
    return RunConfig(**defaults)


def test_smoke_run_produces_all_artifacts(tmp_path):
    config = desk_config(tmp_path, generations=1, population_size=2,
                         export=ExportConfig(turntable_frames=2))
    summary = run(config)
    out = Path(config.output_dir)
    assert summary.generations == 1
    assert summary.evaluations == 2
    names = {p.name for p in out.iterdir()}
    assert {"config.json", "trajectory.log", "checkpoint_1.json",
            "scene_1.json", "view0_1.png", "turntable_0.png", "turntable_1.png"} <= names


def test_trajectory_best_fitness_is_monotone(tmp_path):
    config = desk_config(tmp_path)
    run(config)
    lines = (Path(config.output_dir) / "trajectory.log").read_text().splitlines()
    assert len(lines) == config.generations
    best = [float(line.split(",")[1]) for line in lines]
    assert all(b <= a for a, b in zip(best, best[1:]))


def test_checkpoint_scene_rerenders_to_stored_pngs(tmp_path):
    config = desk_config(tmp_path)
    run(config)
    out = Path(config.output_dir)
    paths = rerender(
        str(out / "scene_8.json"), list(config.views), SETTINGS, str(tmp_path / "rr")
    )
    assert Path(paths[0]).read_bytes() == (out / "view0_8.png").read_bytes()


def test_resume_reproduces_trajectory_exactly(tmp_path):
    full = desk_config(tmp_path, output_dir=str(tmp_path / "full"), generations=8)
    run(full)
    half = desk_config(tmp_path, output_dir=str(tmp_path / "half"), generations=4)
    run(half)
    resumed = desk_config(tmp_path, output_dir=str(tmp_path / "resumed"), generations=8)
    run(resumed, resume_checkpoint=str(tmp_path / "half" / "checkpoint_4.json"))
    full_lines = (tmp_path / "full" / "trajectory.log").read_text().splitlines()
    resumed_lines = (tmp_path / "resumed" / "trajectory.log").read_text().splitlines()
    assert resumed_lines == full_lines[4:]


def test_resume_into_same_directory_appends(tmp_path):
    half = desk_config(tmp_path, generations=4)
    run(half)
    again = desk_config(tmp_path, generations=8)
    run(again, resume_checkpoint=str(Path(half.output_dir) / "checkpoint_4.json"))
    lines = (Path(half.output_dir) / "trajectory.log").read_text().splitlines()
    assert len(lines) == 8
    assert [int(l.split(",")[0]) for l in lines] == list(range(1, 9))


def test_resume_rejects_mismatched_config(tmp_path):
    run(desk_config(tmp_path, generations=4))
    other = desk_config(tmp_path, output_dir=str(tmp_path / "other"), population_size=8)
    with pytest.raises(ConfigError):
        run(other, resume_checkpoint=str(tmp_path / "out" / "checkpoint_4.json"))


class FailingScorer(TargetImageScorer):
    """Starts failing after a set number of scores."""

    def __init__(self, healthy_calls: int):
        self.remaining = healthy_calls

    def score(self, film, view):
        if self.remaining <= 0:
            raise ScorerError("induced mid-run failure")
        self.remaining -= 1
        return super().score(film, view)


def test_scorer_failure_checkpoints_then_raises(tmp_path):
    config = desk_config(tmp_path, scorer=FailingScorer(healthy_calls=6 * 5))
    with pytest.raises(ScorerError):
        run(config)
    # five full generations scored; checkpoint written at the last complete one
    assert (Path(config.output_dir) / "checkpoint_5.json").exists()


def test_unwritable_output_fails_before_work(tmp_path):
    blocker = tmp_path / "blocker"
    blocker.write_text("a file, not a directory")
    config = desk_config(tmp_path, output_dir=str(blocker / "nested"))
    with pytest.raises(OSError):
        run(config)


# -- config file parsing ----------------------------------------------------

def config_doc(tmp_path: Path) -> dict:
    ref = tmp_path / "ref.png"
    hidden = decode(np.random.default_rng(5).standard_normal(GENOME.dimension), GENOME)
    save_png(render(hidden, CAMERA, SETTINGS), str(ref))
    return {
        "genome": {"triangle_count": 4, "transparency": "learnable"},
        "views": [
            {
                "camera": {"position": [0.5, 0.5, 2.7], "width": 32, "height": 32},
                "reference_png": str(ref),
            }
        ],
        "scorer": {"type": "target_image"},
        "cma": {"population_size": 4, "generations": 2, "sigma0": 1.0, "seed": 1},
        "render": {"samples_per_pixel": 2, "seed": 17},
        "output_dir": str(tmp_path / "cli_out"),
        "checkpoint_every": 2,
        "workers": 1,
    }


def test_load_run_config_round_trip(tmp_path):
    doc = config_doc(tmp_path)
    path = tmp_path / "config.json"
    path.write_text(json.dumps(doc))
    config = load_run_config(str(path))
    assert config.population_size == 4
    assert config.genome.triangle_count == 4
    assert isinstance(config.scorer, TargetImageScorer)
    assert isinstance(config.views[0].target, ReferenceImage)


@pytest.mark.parametrize(
    "mutate, fragment",
    [
        (lambda d: d.pop("genome"), "genome"),
        (lambda d: d.pop("views"), "views"),
        (lambda d: d["views"].clear(), "views"),
        (lambda d: d["views"][0].pop("reference_png"), "prompt"),
        (lambda d: d["views"][0].update(prompt="x"), "exactly one"),
        (lambda d: d["cma"].pop("population_size"), "population_size"),
        (lambda d: d.update(scorer={"type": "nonsense"}), "scorer"),
        (lambda d: d.update(scorer={"type": "embedding"}), "service_url"),
        (lambda d: d["genome"].update(transparency={"fixed": 2.0}), "transparency"),
        (lambda d: d["genome"].update(triangle_count=0), "triangle_count"),
        (lambda d: d.pop("output_dir"), "output_dir"),
        (lambda d: d["views"][0].update(reference_png="missing.png"), "not found"),
    ],
)
def test_config_errors_name_the_field(tmp_path, mutate, fragment):
    doc = config_doc(tmp_path)
    mutate(doc)
    with pytest.raises(ConfigError) as err:
        run_config_from_dict(doc, base_dir=tmp_path)
    assert fragment in str(err.value)


def test_effective_config_written_next_to_artifacts(tmp_path):
    config = desk_config(tmp_path, generations=1, population_size=2)
    run(config)
    doc = json.loads((Path(config.output_dir) / "config.json").read_text())
    assert doc["cma"]["population_size"] == 2
    assert doc["genome"]["triangle_count"] == 4


# -- command line -----------------------------------------------------------

def test_cli_run_and_rerender_round_trip(tmp_path, capsys):
    doc = config_doc(tmp_path)
    path = tmp_path / "config.json"
    path.write_text(json.dumps(doc))
    assert main(["run", str(path)]) == 0
    out = Path(doc["output_dir"])
    assert (out / "scene_2.json").exists()

    assert main([
        "rerender", str(out / "scene_2.json"),
        "--output-dir", str(tmp_path / "rr"),
        "--config", str(path),
    ]) == 0
    assert (tmp_path / "rr" / "view0.png").read_bytes() == (out / "view0_2.png").read_bytes()


def test_cli_seed_override_changes_run(tmp_path):
    doc = config_doc(tmp_path)
    path = tmp_path / "config.json"
    path.write_text(json.dumps(doc))
    assert main(["run", str(path), "--output-dir", str(tmp_path / "a"), "--seed", "1"]) == 0
    assert main(["run", str(path), "--output-dir", str(tmp_path / "b"), "--seed", "2"]) == 0
    assert (tmp_path / "a" / "trajectory.log").read_text() != \
        (tmp_path / "b" / "trajectory.log").read_text()


def test_cli_exit_codes(tmp_path):
    bad = tmp_path / "bad.json"
    bad.write_text("{not json")
    assert main(["run", str(bad)]) == 2

    doc = config_doc(tmp_path)
    doc.pop("genome")
    path = tmp_path / "incomplete.json"
    path.write_text(json.dumps(doc))
    assert main(["run", str(path)]) == 2

    # embedding scorer pointing at a dead port -> scorer failure
    doc = config_doc(tmp_path)
    doc["views"][0] = {
        "camera": {"position": [0.5, 0.5, 2.7], "width": 32, "height": 32},
        "prompt": "a bird",
    }
    doc["scorer"] = {"type": "embedding", "service_url": "http://127.0.0.1:9"}
    path = tmp_path / "dead_service.json"
    path.write_text(json.dumps(doc))
    assert main(["run", str(path)]) == 3

    # output dir nested under a regular file -> I/O failure
    blocker = tmp_path / "blocker"
    blocker.write_text("file")
    doc = config_doc(tmp_path)
    doc["output_dir"] = str(blocker / "nested")
    path = tmp_path / "unwritable.json"
    path.write_text(json.dumps(doc))
    assert main(["run", str(path)]) == 4

    # malformed scene file -> config error
    scene = tmp_path / "scene.json"
    scene.write_text('{"triangles": [{"v1": [2, 0, 0]}]}')
    assert main(["rerender", str(scene), "--output-dir", str(tmp_path / "rr2")]) == 2


def test_rerender_empty_scene_gives_environment(tmp_path):
    scene = tmp_path / "empty.json"
    scene.write_text('{"triangles": []}')
    paths = rerender(str(scene), [CAMERA], SETTINGS, str(tmp_path / "rr"))
    image = load_png(paths[0])
    assert np.all(image == 255)


def test_rerender_quadrupled_spp_reduces_variance(tmp_path, rng):
    from conftest import random_scene

    scene = random_scene(rng, 5)
    from trievolve.genome import save_scene
    scene_path = tmp_path / "scene.json"
    save_scene(scene, str(scene_path))

    geometry = SceneGeometry(load_scene(str(scene_path)))
    camera = Camera(position=(0.5, 0.5, 2.7), look_at=(0.5, 0.5, 0.5), width=16, height=16)

    def variance(spp: int) -> float:
        films = [
            render(geometry, camera, RenderSettings(samples_per_pixel=spp, seed=s)).pixels
            for s in range(12)
        ]
        return float(np.var(np.stack(films), axis=0).mean())

    ratio = variance(8) / variance(32)
    assert 2.0 < ratio < 8.0
