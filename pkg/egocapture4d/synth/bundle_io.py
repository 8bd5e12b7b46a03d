"""
Directory layouts of scenario bundles and fit results.

Bundle::

    scene.obj            scene mesh
    camera.jsonl         per frame: quaternion (x, y, z, w) and translation of the camera-to-world transform
    observations.jsonl   per frame: per-joint u, v, w and the detectable image region
    truth.jsonl          per frame: body state, true camera pose, scale, stance flags, reference annotation
    config.toml          resolved configuration, its [scenario] table gives the intrinsics

Estimate::

    estimate.jsonl       per frame: beta, theta, root translation and orientation, refined camera pose
    scale.json           scale, scale mode and seed
    trace.csv            stage, iteration and every energy term
    config.toml          resolved configuration
    bodies/              optional per-frame body OBJ files and a combined scene and body OBJ
"""

import csv
import json
import os
import sys
from typing import Dict, Iterable, List, Optional, Sequence

import numpy as np
import tomli_w

from ..core.body import DEFAULT_SKELETON, SkeletonDef, bone_mesh
from ..core.geometry import Pose3
from ..core.scene import PathType, SceneMesh, load_mesh, save_mesh, save_obj
from ..core.state import BodyState, SequenceEstimate
from ..energy.problem import FittingInputs
from ..energy.terms import Observation2D
from .detector import Frustum
from .scenario import GroundTruth, ScenarioBundle, ScenarioConfig

if sys.version_info >= (3, 11):
    import tomllib
else:
    import tomli as tomllib

SCENE_FILE = "scene.obj"
CAMERA_FILE = "camera.jsonl"
OBSERVATIONS_FILE = "observations.jsonl"
TRUTH_FILE = "truth.jsonl"
CONFIG_FILE = "config.toml"
ESTIMATE_FILE = "estimate.jsonl"
SCALE_FILE = "scale.json"
TRACE_FILE = "trace.csv"
BODIES_DIR = "bodies"


def write_jsonl(path: PathType, records: Iterable[Dict]):
    with open(path, "w", encoding="utf-8", newline="\n") as file_handler:
        for record in records:
            file_handler.write(json.dumps(record, sort_keys=False) + "\n")


def read_jsonl(path: PathType) -> List[Dict]:
    with open(path, encoding="utf-8") as file_handler:
        return [json.loads(line) for line in file_handler if line.strip()]


def pose_to_dict(pose: Pose3) -> Dict:
    return {"quaternion": pose.rotation.tolist(), "translation": pose.translation.tolist()}


def pose_from_dict(data: Dict) -> Pose3:
    return Pose3(data["quaternion"], data["translation"])


def default_config_text(config: ScenarioConfig, skeleton: SkeletonDef) -> str:
    scenario = config.to_dict()
    seed = scenario.pop("seed")
    return tomli_w.dumps({"schema_version": 1, "seed": seed, "scenario": scenario, "skeleton": skeleton.to_dict()})


def save_bundle(bundle: ScenarioBundle, directory: PathType, config_text: Optional[str] = None):
    """
    Write a bundle directory.

    Parameters
    ----------
    bundle : ScenarioBundle
        the scenario
    directory : PathType
        output directory, created if missing
    config_text : Optional[str]
        resolved configuration document, a minimal one is written if None
    """
    os.makedirs(directory, exist_ok=True)
    save_mesh(os.path.join(directory, SCENE_FILE), bundle.inputs.scene)
    write_jsonl(
        os.path.join(directory, CAMERA_FILE),
        ({"frame": t, **pose_to_dict(pose)} for t, pose in enumerate(bundle.inputs.camera_poses)),
    )
    names = bundle.skeleton.joint_names
    write_jsonl(
        os.path.join(directory, OBSERVATIONS_FILE),
        (
            {
                "frame": t,
                "joints": [
                    {"name": name, "u": float(u), "v": float(v), "w": float(w)}
                    for name, (u, v), w in zip(names, observation.positions, observation.confidence)
                ],
                "frustum": frustum.to_list(),
            }
            for t, (observation, frustum) in enumerate(zip(bundle.inputs.observations, bundle.frustums))
        ),
    )
    if bundle.truth is not None:
        truth = bundle.truth
        write_jsonl(
            os.path.join(directory, TRUTH_FILE),
            (
                {
                    "frame": t,
                    "state": state.to_dict(),
                    "camera": pose_to_dict(truth.camera_poses[t]),
                    "scale": truth.scale,
                    "stance": truth.stance[t].tolist(),
                    "annotation": [
                        [float(u), float(v), bool(inside)] for (u, v), inside in zip(truth.annotations[t], truth.annotated[t])
                    ],
                }
                for t, state in enumerate(truth.states)
            ),
        )
    if config_text is None:
        config_text = default_config_text(bundle.config, bundle.skeleton)
    with open(os.path.join(directory, CONFIG_FILE), "w", encoding="utf-8", newline="\n") as file_handler:
        file_handler.write(config_text)


def load_bundle(directory: PathType) -> ScenarioBundle:
    """
    Read a bundle directory; truth.jsonl is optional.

    Parameters
    ----------
    directory : PathType
        bundle directory

    Returns
    -------
    ScenarioBundle
        the scenario

    Raises
    ------
    ValueError
        if the per-frame files disagree on the frame count
    """
    with open(os.path.join(directory, CONFIG_FILE), "rb") as file_handler:
        document = tomllib.load(file_handler)
    config = ScenarioConfig.from_dict({**document.get("scenario", {}), "seed": document.get("seed", 0)})
    skeleton = SkeletonDef.from_dict(document["skeleton"]) if "skeleton" in document else DEFAULT_SKELETON

    cameras = [pose_from_dict(record) for record in read_jsonl(os.path.join(directory, CAMERA_FILE))]
    observations, frustums = [], []
    for record in read_jsonl(os.path.join(directory, OBSERVATIONS_FILE)):
        joints = record["joints"]
        observations.append(
            Observation2D([[joint["u"], joint["v"]] for joint in joints], [joint["w"] for joint in joints])
        )
        frustums.append(Frustum(*record["frustum"]))
    if len(cameras) != len(observations):
        raise ValueError(f"{len(cameras)} camera poses but {len(observations)} observed frames in {directory}")
    inputs = FittingInputs(config.intrinsics, observations, cameras, load_mesh(os.path.join(directory, SCENE_FILE)))

    truth = None
    truth_path = os.path.join(directory, TRUTH_FILE)
    if os.path.exists(truth_path):
        records = read_jsonl(truth_path)
        if len(records) != len(observations):
            raise ValueError(f"{len(records)} truth records but {len(observations)} observed frames in {directory}")
        truth = GroundTruth(
            states=[BodyState.from_dict(record["state"]) for record in records],
            scale=float(records[0]["scale"]),
            camera_poses=[pose_from_dict(record["camera"]) for record in records],
            stance=np.array([record["stance"] for record in records], dtype=bool),
            annotations=np.array([[entry[:2] for entry in record["annotation"]] for record in records]),
            annotated=np.array([[entry[2] for entry in record["annotation"]] for record in records], dtype=bool),
        )
    return ScenarioBundle(config, truth, inputs, frustums, skeleton)


def save_trace(path: PathType, rows: Sequence[Dict]):
    with open(path, "w", encoding="utf-8", newline="") as file_handler:
        writer = csv.writer(file_handler, lineterminator="\n")
        if not rows:
            return
        columns = list(rows[0].keys())
        writer.writerow(columns)
        for row in rows:
            writer.writerow([repr(row[column]) if isinstance(row[column], float) else row[column] for column in columns])


def save_estimate(
    directory: PathType,
    estimate: SequenceEstimate,
    trace: Sequence[Dict] = (),
    config_text: Optional[str] = None,
    seed: Optional[int] = None,
    skeleton: SkeletonDef = DEFAULT_SKELETON,
    scene: Optional[SceneMesh] = None,
    export_meshes: bool = False,
):
    """
    Write a fit result directory.

    Parameters
    ----------
    directory : PathType
        output directory, created if missing
    estimate : SequenceEstimate
        the fit
    trace : Sequence[Dict]
        energy trace rows (TraceRow.to_dict)
    config_text : Optional[str]
        resolved configuration document
    seed : Optional[int]
        seed of the run
    skeleton : SkeletonDef
        kinematic tree, for mesh export
    scene : Optional[SceneMesh]
        scene merged into the combined OBJ
    export_meshes : bool
        write per-frame body OBJ files and the combined scene and body OBJ
    """
    os.makedirs(directory, exist_ok=True)
    write_jsonl(
        os.path.join(directory, ESTIMATE_FILE),
        ({"frame": t, **state.to_dict(), "camera": pose_to_dict(pose)} for t, (state, pose) in enumerate(zip(estimate.states, estimate.camera_poses))),
    )
    with open(os.path.join(directory, SCALE_FILE), "w", encoding="utf-8", newline="\n") as file_handler:
        json.dump({"scale": estimate.scale, "scale_mode": estimate.scale_mode, "seed": seed}, file_handler, indent=2)
        file_handler.write("\n")
    save_trace(os.path.join(directory, TRACE_FILE), trace)
    if config_text is not None:
        with open(os.path.join(directory, CONFIG_FILE), "w", encoding="utf-8", newline="\n") as file_handler:
            file_handler.write(config_text)
    if export_meshes:
        export_bodies(os.path.join(directory, BODIES_DIR), estimate, skeleton, scene)


def export_bodies(directory: PathType, estimate: SequenceEstimate, skeleton: SkeletonDef, scene: Optional[SceneMesh] = None):
    """Per-frame world-frame body OBJ files plus one OBJ of the scene with every body."""
    os.makedirs(directory, exist_ok=True)
    meshes = []
    for t, joints in enumerate(estimate.joints_world(skeleton)):
        vertices, faces = bone_mesh(skeleton, joints, radius=0.04 * estimate.scale)
        save_obj(os.path.join(directory, f"frame_{t:04d}.obj"), vertices, faces)
        meshes.append(SceneMesh(vertices, faces))
    if scene is not None:
        meshes = [scene] + meshes
    save_mesh(os.path.join(directory, "scene_with_bodies.obj"), SceneMesh.merge(meshes))


def load_estimate(directory: PathType) -> SequenceEstimate:
    """
    Read a fit result directory.

    Parameters
    ----------
    directory : PathType
        directory written by save_estimate

    Returns
    -------
    SequenceEstimate
        the fit
    """
    records = read_jsonl(os.path.join(directory, ESTIMATE_FILE))
    with open(os.path.join(directory, SCALE_FILE), encoding="utf-8") as file_handler:
        scale = json.load(file_handler)
    return SequenceEstimate(
        states=[BodyState.from_dict(record) for record in records],
        scale=float(scale["scale"]),
        camera_poses=[pose_from_dict(record["camera"]) for record in records],
        scale_mode=scale.get("scale_mode", "camera"),
    )
