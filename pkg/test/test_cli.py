import json
import os

import pytest

from egocapture4d.cli.config import RunConfig, loads
from egocapture4d.cli.main import EXIT_CONFIG, EXIT_MISMATCH, EXIT_OK, main
from egocapture4d.metrics.report import read_csv
from egocapture4d.optimizer.schedule import ABLATIONS
from egocapture4d.synth import bundle_io

SMALL = ["--set", "seed=3", "--set", "scenario.frames=6", "--set", "scenario.truncation=0.34", "--set", "scenario.scene_spacing=0.05"]
SHORT = [
    "--set",
    "stages.0.outer_iterations=1",
    "--set",
    "stages.0.inner_iterations=5",
    "--set",
    "stages.1.outer_iterations=1",
    "--set",
    "stages.1.inner_iterations=3",
    "--set",
    "stages.2.outer_iterations=1",
    "--set",
    "stages.2.inner_iterations=3",
]


@pytest.fixture(scope="module")
def bundle_dir(tmp_path_factory):
    directory = tmp_path_factory.mktemp("cli") / "bundle"
    assert main(["synth", "--out", str(directory), *SMALL]) == EXIT_OK
    return directory


def _read_bytes(directory):
    return {name: (directory / name).read_bytes() for name in sorted(os.listdir(directory))}


def test_synth_files(bundle_dir):
    """
    Test that synth writes every bundle file
    """
    for name in (
        bundle_io.SCENE_FILE,
        bundle_io.CAMERA_FILE,
        bundle_io.OBSERVATIONS_FILE,
        bundle_io.TRUTH_FILE,
        bundle_io.CONFIG_FILE,
    ):
        assert (bundle_dir / name).exists()
    config = loads((bundle_dir / bundle_io.CONFIG_FILE).read_text(encoding="utf-8"))
    assert config.seed == 3
    assert config.scenario.frames == 6
    assert len(bundle_io.load_bundle(bundle_dir).inputs.observations) == 6


def test_synth_byte_identical(bundle_dir, tmp_path):
    """
    Test that the same seed and configuration reproduce the bundle byte for byte
    """
    again = tmp_path / "again"
    assert main(["synth", "--out", str(again), *SMALL]) == EXIT_OK
    assert _read_bytes(again) == _read_bytes(bundle_dir)


def test_fit_and_eval(bundle_dir, tmp_path):
    """
    Test that fit writes an estimate and eval scores it
    """
    estimate = tmp_path / "estimate"
    assert main(["fit", str(bundle_dir), "--out", str(estimate), "--export-meshes", *SHORT]) == EXIT_OK
    for name in (bundle_io.ESTIMATE_FILE, bundle_io.SCALE_FILE, bundle_io.TRACE_FILE, bundle_io.CONFIG_FILE):
        assert (estimate / name).exists()
    assert (estimate / bundle_io.BODIES_DIR / "scene_with_bodies.obj").exists()
    assert (estimate / bundle_io.BODIES_DIR / "frame_0005.obj").exists()
    # the bundle's config.toml is picked up when no --config is given
    assert loads((estimate / bundle_io.CONFIG_FILE).read_text(encoding="utf-8")).scenario.frames == 6
    scale = json.loads((estimate / bundle_io.SCALE_FILE).read_text(encoding="utf-8"))
    assert scale["seed"] == 3
    assert scale["scale"] > 0.0

    metrics = tmp_path / "metrics"
    assert main(["eval", str(bundle_dir), str(estimate), "--out", str(metrics)]) == EXIT_OK
    reports = read_csv(metrics / "metrics.csv")
    assert [report.run for report in reports] == ["estimate"]
    assert reports[0].pje_u >= 0.0
    document = json.loads((metrics / "metrics.json").read_text(encoding="utf-8"))
    assert document["provenance"]["seed"] == 3
    assert document["metrics"][0]["run"] == "estimate"


def test_eval_ablation(bundle_dir, tmp_path):
    """
    Test that eval --ablation fits every variant and writes one metrics row each
    """
    out = tmp_path / "ablation"
    assert main(["eval", str(bundle_dir), "--ablation", "--out", str(out), *SHORT]) == EXIT_OK
    for name in ABLATIONS:
        assert (out / name / bundle_io.ESTIMATE_FILE).exists()
    reports = read_csv(out / "metrics.csv")
    assert [report.run for report in reports] == list(ABLATIONS)
    assert (out / "metrics.json").exists()
    scales = {report.run: report.scale_rel_error for report in reports}
    # the single-stage variant keeps unit scale against s* = 2
    assert scales["E_M"] == pytest.approx(0.5)


def test_defaults(capsys):
    """
    Test that the defaults command prints a loadable default configuration
    """
    assert main(["defaults"]) == EXIT_OK
    assert loads(capsys.readouterr().out) == RunConfig()
    assert main(["defaults", "--set", "seed=9"]) == EXIT_OK
    assert loads(capsys.readouterr().out).seed == 9


@pytest.mark.parametrize(
    "argv",
    [
        ["synth", "--set", "scenario.frames=1"],
        ["synth", "--set", "bogus.key=1"],
        ["synth", "--set", "stages.7.name=x"],
    ],
)
def test_config_error_exit(argv, tmp_path):
    """
    Test that configuration errors exit with code 2
    """
    assert main([*argv, "--out", str(tmp_path / "bundle")]) == EXIT_CONFIG


def test_config_file_error_exit(tmp_path):
    """
    Test that an invalid configuration file exits with code 2
    """
    path = tmp_path / "run.toml"
    path.write_text("[weights]\nlambda_beta = 0.01\nbogus = 1\n", encoding="utf-8")
    assert main(["synth", "--config", str(path), "--out", str(tmp_path / "bundle")]) == EXIT_CONFIG


def test_eval_without_estimate(bundle_dir, tmp_path):
    """
    Test that eval needs an estimate directory or --ablation
    """
    assert main(["eval", str(bundle_dir), "--out", str(tmp_path / "metrics")]) == EXIT_CONFIG


def test_mismatch_exit(bundle_dir, tmp_path):
    """
    Test that a bundle whose files disagree on the frame count exits with code 4
    """
    broken = tmp_path / "broken"
    broken.mkdir()
    for name, content in _read_bytes(bundle_dir).items():
        (broken / name).write_bytes(content)
    lines = (broken / bundle_io.CAMERA_FILE).read_text(encoding="utf-8").splitlines(keepends=True)
    (broken / bundle_io.CAMERA_FILE).write_text("".join(lines[:-1]), encoding="utf-8")
    assert main(["fit", str(broken), "--out", str(tmp_path / "estimate"), *SHORT]) == EXIT_MISMATCH


def test_estimate_mismatch_exit(bundle_dir, tmp_path):
    """
    Test that scoring an estimate with a different frame count exits with code 4
    """
    other = tmp_path / "other"
    assert main(["synth", "--out", str(other), *SMALL, "--set", "scenario.frames=5"]) == EXIT_OK
    estimate = tmp_path / "estimate"
    assert main(["fit", str(other), "--out", str(estimate), *SHORT]) == EXIT_OK
    assert main(["eval", str(bundle_dir), str(estimate), "--out", str(tmp_path / "metrics")]) == EXIT_MISMATCH
