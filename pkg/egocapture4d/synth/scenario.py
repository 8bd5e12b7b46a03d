"""
Seeded synthetic egocentric captures: ground-truth motion, scene, moving camera,
noisy and truncated detections, and a mis-scaled copy of the world handed to the fitter.
"""

import dataclasses
import logging
from typing import Dict, List, Optional, Tuple

import numpy as np

from ..core.body import DEFAULT_SKELETON, LOWER_BODY_JOINTS, PoseParams, RootTransform, ShapeParams, SkeletonDef
from ..core.geometry import CameraIntrinsics, Pose3, project_points
from ..core.state import BodyState, SequenceEstimate, posed_sequence
from ..energy.problem import FittingInputs
from ..energy.terms import Observation2D
from .camera import camera_trajectory, perturb, scaled
from .detector import Frustum, NoiseModel, annotate, detect
from .motion import MotionType, synthesize_motion, to_camera
from .terrain import make_scene

logger = logging.getLogger(__name__)

# first truncated frame as a fraction of the sequence
TRUNCATION_START = 0.35


class InvalidConfig(ValueError):
    def __init__(self, message):
        super().__init__(message)


@dataclasses.dataclass(frozen=True)
class ScenarioConfig:
    """
    Synthetic scenario.

    Attributes
    ----------
    frames : int
        number of frames, at least 3
    motion : str
        see MotionType
    fps : float
        frame rate
    noise_std : float
        detector pixel noise
    dropout : float
        probability of missing a visible joint
    truncation : float
        fraction of frames whose lower body leaves the frame
    truncation_margin : float
        pixels between the lowest visible row and the highest lower-body joint in truncated frames
    scene_scale : float
        scale s* applied to the scene and camera trajectory handed to the fitter
    seed : int
        random seed
    focal : float
        focal length (pixels)
    image_size : Tuple[int, int]
        (width, height) in pixels
    shape_std : float
        spread of the true shape parameters
    camera_distance, camera_height, camera_azimuth : float
        wearer placement relative to the subject (meters, degrees)
    camera_jitter, camera_jitter_rate : float
        bounds of head rotation noise (radians)
    camera_rotation_noise, camera_translation_noise : float
        structure-from-motion noise on the fitter's camera trajectory (radians, meters)
    obstacles : int
        number of box obstacles, 1 to 3
    scene_spacing : float
        ground vertex spacing (meters) for a unit scene scale
    """

    frames: int = 20
    motion: str = MotionType.walk
    fps: float = 30.0
    noise_std: float = 2.0
    dropout: float = 0.0
    truncation: float = 0.3
    truncation_margin: float = 20.0
    scene_scale: float = 2.0
    seed: int = 0
    focal: float = 500.0
    image_size: Tuple[int, int] = (640, 480)
    shape_std: float = 0.02
    camera_distance: float = 3.2
    camera_height: float = 1.6
    camera_azimuth: float = 20.0
    camera_jitter: float = 0.03
    camera_jitter_rate: float = 0.01
    camera_rotation_noise: float = 0.0
    camera_translation_noise: float = 0.0
    obstacles: int = 2
    scene_spacing: float = 0.02

    def __post_init__(self):
        object.__setattr__(self, "image_size", tuple(int(v) for v in self.image_size))
        checks = [
            (self.frames >= 3, f"frames must be at least 3, got {self.frames}"),
            (self.motion in MotionType.values(), f"motion must be one of {MotionType.values()}, got {self.motion!r}"),
            (self.fps > 0.0, "fps must be positive"),
            (self.noise_std >= 0.0, f"noise_std must be non-negative, got {self.noise_std}"),
            (0.0 <= self.dropout < 1.0, f"dropout must lie in [0, 1), got {self.dropout}"),
            (0.0 <= self.truncation <= 1.0, f"truncation must lie in [0, 1], got {self.truncation}"),
            (self.scene_scale > 0.0, f"scene_scale must be positive, got {self.scene_scale}"),
            (self.focal > 0.0, "focal must be positive"),
            (len(self.image_size) == 2 and min(self.image_size) > 0, "image_size must be two positive integers"),
            (self.shape_std >= 0.0, "shape_std must be non-negative"),
            (self.camera_distance > 0.0, "camera_distance must be positive"),
            (1 <= self.obstacles <= 3, f"obstacles must lie in [1, 3], got {self.obstacles}"),
            (self.scene_spacing > 0.0, "scene_spacing must be positive"),
        ]
        for ok, message in checks:
            if not ok:
                raise InvalidConfig(message)

    @property
    def intrinsics(self) -> CameraIntrinsics:
        width, height = self.image_size
        return CameraIntrinsics((self.focal, self.focal), (width / 2.0, height / 2.0))

    def truncated_frames(self) -> range:
        count = int(round(self.truncation * self.frames))
        start = min(int(TRUNCATION_START * self.frames), self.frames - count)
        return range(start, start + count)

    def to_dict(self) -> Dict:
        data = dataclasses.asdict(self)
        data["image_size"] = list(self.image_size)
        return data

    @classmethod
    def from_dict(cls, data: Dict) -> "ScenarioConfig":
        try:
            return cls(**data)
        except TypeError as error:
            raise InvalidConfig(str(error)) from error


@dataclasses.dataclass
class GroundTruth:
    """
    True state of a scenario, in the fitter's (scaled) world.

    Attributes
    ----------
    states : List[BodyState]
        camera-frame body states (meters)
    scale : float
        true body-vs-scene scale s*
    camera_poses : List[Pose3]
        true camera-to-world transforms in scene units
    stance : np.ndarray
        (T, C) contact candidates touching the ground, aligned with skeleton.contact_candidates
    annotations : np.ndarray
        (T, J, 2) noise-free projections
    annotated : np.ndarray
        (T, J) in-frustum flags of the annotations
    """

    states: List[BodyState]
    scale: float
    camera_poses: List[Pose3]
    stance: np.ndarray
    annotations: np.ndarray
    annotated: np.ndarray

    def estimate(self) -> SequenceEstimate:
        return SequenceEstimate(list(self.states), self.scale, list(self.camera_poses))


@dataclasses.dataclass
class ScenarioBundle:
    """
    Generated scenario.

    Attributes
    ----------
    config : ScenarioConfig
        provenance
    truth : Optional[GroundTruth]
        ground truth, None for captures without it
    inputs : FittingInputs
        what the fitter sees
    frustums : List[Frustum]
        detectable region per frame
    skeleton : SkeletonDef
        kinematic tree
    """

    config: ScenarioConfig
    truth: Optional[GroundTruth]
    inputs: FittingInputs
    frustums: List[Frustum]
    skeleton: SkeletonDef = DEFAULT_SKELETON

    @property
    def frames(self) -> int:
        return self.inputs.frames


def truncated_frustum(
    frustum: Frustum, pixels: np.ndarray, valid: np.ndarray, lower: List[int], margin: float
) -> Frustum:
    """Frustum whose bottom edge lies margin pixels above the highest visible lower-body joint."""
    rows = pixels[lower, 1][valid[lower]]
    if len(rows) == 0:
        return frustum
    v_max = min(frustum.v_max, float(rows.min()) - margin)
    if v_max <= frustum.v_min:
        logger.warning("lower body spans the whole image height, truncated frame keeps no rows")
        v_max = frustum.v_min
    return dataclasses.replace(frustum, v_max=v_max)


def generate(config: ScenarioConfig, skeleton: SkeletonDef = DEFAULT_SKELETON) -> ScenarioBundle:
    """
    Generate a scenario. One generator seeded with config.seed feeds, in this order:
    shape and gait phase, camera jitter, scene obstacles, camera pose noise, detections.

    Parameters
    ----------
    config : ScenarioConfig
        scenario settings
    skeleton : SkeletonDef
        kinematic tree

    Returns
    -------
    ScenarioBundle
        truth and fitter inputs

    Raises
    ------
    InvalidConfig
        if the settings are inconsistent
    """
    rng = np.random.default_rng(config.seed)
    shape = ShapeParams(config.shape_std * rng.standard_normal(skeleton.shape_count))
    phase = float(rng.uniform(0.0, 2.0 * np.pi))
    motion = synthesize_motion(skeleton, config.motion, config.frames, config.fps, shape, phase)

    cameras = camera_trajectory(
        motion.roots,
        rng,
        distance=config.camera_distance,
        height=config.camera_height,
        azimuth=np.radians(config.camera_azimuth),
        jitter=config.camera_jitter,
        jitter_rate=config.camera_jitter_rate,
    )
    spacing = config.scene_spacing / max(1.0, config.scene_scale)
    scene = make_scene(motion.roots, rng, spacing=spacing, obstacles=config.obstacles)
    fitter_cameras = perturb(cameras, rng, config.camera_rotation_noise, config.camera_translation_noise)

    states = []
    for t, pose in enumerate(cameras):
        translation, orientation = to_camera(motion, t, pose.rotation_matrix, pose.translation)
        states.append(BodyState(shape, PoseParams(motion.poses[t]), RootTransform(translation, orientation)))
    joints_cam, _ = posed_sequence(skeleton, states)

    intrinsics = config.intrinsics
    noise = NoiseModel(config.noise_std, config.dropout)
    lower = skeleton.indices(LOWER_BODY_JOINTS)
    truncated = set(config.truncated_frames())
    frustums, observations, annotations, annotated = [], [], [], []
    for t in range(config.frames):
        frustum = Frustum.image(config.image_size)
        if t in truncated:
            pixels, valid = project_points(intrinsics, joints_cam[t])
            frustum = truncated_frustum(frustum, pixels, valid, lower, config.truncation_margin)
        frustums.append(frustum)
        observations.append(detect(joints_cam[t], intrinsics, noise, frustum, rng))
        reference, inside = annotate(joints_cam[t], intrinsics, frustum)
        annotations.append(reference)
        annotated.append(inside)

    truth = GroundTruth(
        states=states,
        scale=config.scene_scale,
        camera_poses=scaled(cameras, config.scene_scale),
        stance=motion.stance,
        annotations=np.stack(annotations),
        annotated=np.stack(annotated),
    )
    inputs = FittingInputs(
        intrinsics=intrinsics,
        observations=observations,
        camera_poses=scaled(fitter_cameras, config.scene_scale),
        scene=scene.scaled(config.scene_scale),
    )
    logger.info(
        "scenario: %d frames of %s, %d scene vertices, %d truncated frames",
        config.frames,
        config.motion,
        len(scene.vertices),
        len(truncated),
    )
    return ScenarioBundle(config, truth, inputs, frustums, skeleton)


def observations_from_truth(bundle: ScenarioBundle) -> List[Observation2D]:
    """Noise-free detections with unit confidence inside each frame's frustum."""
    return [
        Observation2D(pixels, inside.astype(np.float64))
        for pixels, inside in zip(bundle.truth.annotations, bundle.truth.annotated)
    ]


def with_observations(bundle: ScenarioBundle, observations: Optional[List[Observation2D]] = None) -> ScenarioBundle:
    observations = observations if observations is not None else observations_from_truth(bundle)
    inputs = dataclasses.replace(bundle.inputs, observations=list(observations))
    return dataclasses.replace(bundle, inputs=inputs)
