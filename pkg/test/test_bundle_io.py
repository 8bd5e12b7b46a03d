import csv
import json

import numpy as np
import pytest

from egocapture4d.synth.bundle_io import (
    BODIES_DIR,
    CAMERA_FILE,
    CONFIG_FILE,
    OBSERVATIONS_FILE,
    SCENE_FILE,
    TRACE_FILE,
    TRUTH_FILE,
    load_bundle,
    load_estimate,
    read_jsonl,
    save_bundle,
    save_estimate,
)


def test_bundle_files(tmp_path, small_bundle):
    """
    Test the files of a saved bundle and reading them back
    """
    save_bundle(small_bundle, tmp_path)
    for name in (SCENE_FILE, CAMERA_FILE, OBSERVATIONS_FILE, TRUTH_FILE, CONFIG_FILE):
        assert (tmp_path / name).exists()
    records = read_jsonl(tmp_path / OBSERVATIONS_FILE)
    assert len(records) == small_bundle.frames
    assert records[0]["joints"][0]["name"] == "pelvis"
    assert set(records[0]["joints"][0]) == {"name", "u", "v", "w"}

    loaded = load_bundle(tmp_path)
    assert loaded.config == small_bundle.config
    np.testing.assert_array_equal(loaded.inputs.positions(), small_bundle.inputs.positions())
    np.testing.assert_array_equal(loaded.inputs.confidences(), small_bundle.inputs.confidences())
    np.testing.assert_allclose(loaded.inputs.scene.vertices, small_bundle.inputs.scene.vertices, rtol=1e-8, atol=1e-9)
    np.testing.assert_array_equal(loaded.inputs.scene.faces, small_bundle.inputs.scene.faces)
    assert loaded.truth.scale == small_bundle.truth.scale
    np.testing.assert_array_equal(loaded.truth.stance, small_bundle.truth.stance)
    np.testing.assert_array_equal(loaded.truth.annotated, small_bundle.truth.annotated)
    np.testing.assert_array_equal(loaded.truth.states[3].pose.theta, small_bundle.truth.states[3].pose.theta)
    assert loaded.frustums == small_bundle.frustums


def test_bundle_without_truth(tmp_path, small_bundle):
    """
    Test that a bundle without truth.jsonl loads with truth None
    """
    save_bundle(small_bundle, tmp_path)
    (tmp_path / TRUTH_FILE).unlink()
    assert load_bundle(tmp_path).truth is None


def test_bundle_frame_mismatch(tmp_path, small_bundle):
    """
    Test that per-frame files of different lengths are refused
    """
    save_bundle(small_bundle, tmp_path)
    lines = (tmp_path / CAMERA_FILE).read_text(encoding="utf-8").splitlines()
    (tmp_path / CAMERA_FILE).write_text("\n".join(lines[:-1]) + "\n", encoding="utf-8")
    with pytest.raises(ValueError):
        load_bundle(tmp_path)


def test_estimate_files(tmp_path, small_bundle):
    """
    Test the files of a saved estimate, the trace and the optional body meshes
    """
    estimate = small_bundle.truth.estimate()
    trace = [
        {"stage": "fit_2d", "iteration": 0, "joint": 1.5, "total": 2.0},
        {"stage": "fit_2d", "iteration": 1, "joint": 1.25, "total": 1.75},
    ]
    save_estimate(
        tmp_path,
        estimate,
        trace,
        config_text="seed = 3\n",
        seed=3,
        scene=small_bundle.inputs.scene,
        export_meshes=True,
    )
    with open(tmp_path / TRACE_FILE, encoding="utf-8") as file_handler:
        rows = list(csv.DictReader(file_handler))
    assert [row["iteration"] for row in rows] == ["0", "1"]
    assert float(rows[1]["total"]) == 1.75
    scale = json.loads((tmp_path / "scale.json").read_text(encoding="utf-8"))
    assert scale == {"scale": small_bundle.truth.scale, "scale_mode": "camera", "seed": 3}
    assert (tmp_path / CONFIG_FILE).read_text(encoding="utf-8") == "seed = 3\n"
    bodies = sorted(path.name for path in (tmp_path / BODIES_DIR).iterdir())
    assert bodies == [f"frame_{t:04d}.obj" for t in range(small_bundle.frames)] + ["scene_with_bodies.obj"]

    loaded = load_estimate(tmp_path)
    assert loaded.scale == estimate.scale
    np.testing.assert_array_equal(loaded.states[2].root.translation, estimate.states[2].root.translation)
    np.testing.assert_allclose(loaded.camera_poses[2].matrix(), estimate.camera_poses[2].matrix(), atol=1e-12)
