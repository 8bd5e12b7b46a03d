"""
Initialization and the multi-stage sequence fit.
"""

import dataclasses
import logging
from typing import List, Optional, Sequence

import numpy as np
from scipy.spatial.transform import Rotation

from ..core.body import (
    DEFAULT_SKELETON,
    RootTransform,
    ShapeParams,
    SkeletonDef,
    consolidate_shape,
    forward_kinematics,
    rest_pose,
    zero_shape,
)
from ..core.geometry import MIN_DEPTH, CameraIntrinsics
from ..core.kernel import rho_squared
from ..core.state import SequenceEstimate
from ..energy.problem import FittingInputs, FittingProblem, SequenceParams
from ..energy.terms import Observation2D
from .schedule import FitSettings, StageSchedule
from .stage import StageResult, TraceRow, run_stage

logger = logging.getLogger(__name__)

# joints the initial orientation is scored on
TORSO_JOINTS = ("pelvis", "right_hip", "left_hip", "spine", "thorax", "nose", "left_shoulder", "right_shoulder")
# joint pairs whose rest distance against their pixel span gives the depth
DEPTH_PAIRS = (
    ("pelvis", "spine"),
    ("spine", "thorax"),
    ("right_hip", "right_shoulder"),
    ("left_hip", "left_shoulder"),
    ("left_shoulder", "right_shoulder"),
)
# first visible one anchors the root translation
ANCHOR_JOINTS = ("pelvis", "spine", "thorax", "nose")

# upright body facing the camera: body y up is camera -y, body z forward is camera -z
FACING_CAMERA = Rotation.from_rotvec([np.pi, 0.0, 0.0])


def _rest_joints(skeleton: SkeletonDef) -> np.ndarray:
    root = RootTransform(np.zeros(3), np.zeros(3))
    return forward_kinematics(skeleton, zero_shape(skeleton), rest_pose(skeleton), root)


def initial_depth(
    skeleton: SkeletonDef,
    intrinsics: CameraIntrinsics,
    observation: Observation2D,
    default_depth: float = 3.0,
) -> float:
    """
    Root depth guess: median over visible torso pairs of focal * rest length / pixel span.

    Parameters
    ----------
    skeleton : SkeletonDef
        kinematic tree
    intrinsics : CameraIntrinsics
        camera intrinsics
    observation : Observation2D
        2D joints of the frame
    default_depth : float, optional
        returned when no pair is visible, by default 3.0

    Returns
    -------
    float
        depth in meters
    """
    rest = _rest_joints(skeleton)
    ratios = []
    for a, b in DEPTH_PAIRS:
        if a not in skeleton.joint_names or b not in skeleton.joint_names:
            continue
        i, j = skeleton.index(a), skeleton.index(b)
        if observation.confidence[i] <= 0.0 or observation.confidence[j] <= 0.0:
            continue
        span = np.linalg.norm(observation.positions[i] - observation.positions[j])
        if span > 1e-6:
            ratios.append(float(np.mean(intrinsics.focal)) * np.linalg.norm(rest[i] - rest[j]) / span)
    if not ratios:
        return default_depth
    return float(np.median(ratios))


def initialize_frame(
    skeleton: SkeletonDef,
    intrinsics: CameraIntrinsics,
    observation: Observation2D,
    yaw_candidates: int = 12,
    default_depth: float = 3.0,
    sigma: float = 100.0,
) -> RootTransform:
    """
    Root transform of a rest-pose body best explaining the torso detections of a frame.
    Orientations about the body's vertical axis are tried on a regular grid, ties keep the first.

    Parameters
    ----------
    skeleton : SkeletonDef
        kinematic tree
    intrinsics : CameraIntrinsics
        camera intrinsics
    observation : Observation2D
        2D joints of the frame
    yaw_candidates : int, optional
        number of orientations tried, by default 12
    default_depth : float, optional
        depth used when no torso pair is visible, by default 3.0
    sigma : float, optional
        robust kernel scale of the scoring, by default 100.0

    Returns
    -------
    RootTransform
        root translation and orientation
    """
    rest = _rest_joints(skeleton)
    depth = initial_depth(skeleton, intrinsics, observation, default_depth)
    anchor = next(
        (skeleton.index(name) for name in ANCHOR_JOINTS if name in skeleton.joint_names and observation.confidence[skeleton.index(name)] > 0.0),
        None,
    )
    if anchor is None:
        anchor_point = np.array([0.0, 0.0, depth])
        anchor = 0
    else:
        pixel = observation.positions[anchor]
        anchor_point = np.append((pixel - intrinsics.principal_point) / intrinsics.focal * depth, depth)

    torso = skeleton.indices(TORSO_JOINTS)
    best_score, best = np.inf, None
    for k in range(yaw_candidates):
        rotation = FACING_CAMERA * Rotation.from_rotvec([0.0, 2.0 * np.pi * k / yaw_candidates, 0.0])
        translation = anchor_point - rotation.apply(rest[anchor])
        points = rotation.apply(rest[torso]) + translation
        depths = np.maximum(points[:, 2], MIN_DEPTH)
        pixels = intrinsics.focal * points[:, :2] / depths[:, None] + intrinsics.principal_point
        residuals = np.sum((pixels - observation.positions[torso]) ** 2, axis=1)
        score = float(np.sum(observation.confidence[torso] * rho_squared(residuals, sigma)))
        if score < best_score:
            best_score, best = score, RootTransform(translation, rotation.as_rotvec())
    return best


def initialize(inputs: FittingInputs, skeleton: SkeletonDef = DEFAULT_SKELETON, settings: FitSettings = FitSettings()) -> SequenceParams:
    """
    Starting point of the fit: rest pose, zero shape, unit scale, unrefined cameras,
    and a per-frame root from initialize_frame.

    Parameters
    ----------
    inputs : FittingInputs
        observations and camera trajectory
    skeleton : SkeletonDef
        kinematic tree
    settings : FitSettings
        initialization settings

    Returns
    -------
    SequenceParams
        initial parameters
    """
    roots = []
    fallbacks = 0
    for observation in inputs.observations:
        if not any(observation.confidence[skeleton.indices([a, b])].min() > 0.0 for a, b in DEPTH_PAIRS):
            fallbacks += 1
        roots.append(
            initialize_frame(
                skeleton,
                inputs.intrinsics,
                observation,
                settings.yaw_candidates,
                settings.default_depth,
                settings.kernels.joint.sigma,
            )
        )
    if fallbacks:
        logger.warning("%d of %d frames had no visible torso pair, initial depth %.3g used", fallbacks, inputs.frames, settings.default_depth)
    frames = inputs.frames
    return SequenceParams(
        beta=np.zeros((frames, skeleton.shape_count)),
        theta=np.zeros((frames, skeleton.joint_count, 3)),
        root_translation=np.stack([root.translation for root in roots]),
        root_orientation=np.stack([root.orientation for root in roots]),
        camera_rotation=np.zeros((frames, 3)),
        camera_translation=np.zeros((frames, 3)),
        log_scale=0.0,
    )


def consolidate_sequence_shape(params: SequenceParams) -> SequenceParams:
    """Replace every frame's shape by the component-wise median over the sequence."""
    shape = consolidate_shape([ShapeParams(row) for row in params.beta])
    return params.replace(beta=np.tile(shape.beta, (params.frames, 1)))


@dataclasses.dataclass
class PipelineResult:
    """
    Outcome of a sequence fit.

    Attributes
    ----------
    estimate : SequenceEstimate
        final body states, scale and refined camera poses
    params : SequenceParams
        final raw parameters
    stages : List[StageResult]
        per-stage results in schedule order
    """

    estimate: SequenceEstimate
    params: SequenceParams
    stages: List[StageResult]

    @property
    def trace(self) -> List[TraceRow]:
        return [row for stage in self.stages for row in stage.trace]

    @property
    def flagged(self) -> bool:
        return any(stage.flagged for stage in self.stages)


def run_pipeline(
    inputs: FittingInputs,
    schedule: StageSchedule = StageSchedule.default(),
    settings: FitSettings = FitSettings(),
    skeleton: SkeletonDef = DEFAULT_SKELETON,
    initial: Optional[SequenceParams] = None,
) -> PipelineResult:
    """
    Fit the body sequence, the scale and the camera trajectory stage by stage.

    Parameters
    ----------
    inputs : FittingInputs
        observations, camera trajectory and scene
    schedule : StageSchedule
        stages to run
    settings : FitSettings
        weights, kernels and initialization settings
    skeleton : SkeletonDef
        kinematic tree
    initial : Optional[SequenceParams]
        starting point, initialize(...) if None

    Returns
    -------
    PipelineResult
        the estimate and per-stage traces

    Raises
    ------
    NonFiniteEnergy
        if a stage produces a non-finite energy
    """
    problem = FittingProblem(
        inputs,
        skeleton=skeleton,
        kernels=settings.kernels,
        weights=settings.weights,
        contact_groups=settings.contact_groups,
        scale_mode=settings.scale_mode,
        twist_weight=settings.twist_weight,
    )
    params = initial if initial is not None else initialize(inputs, skeleton, settings)
    results = []
    for stage in schedule:
        if stage.consolidate_shape and "beta" not in stage.free:
            params = consolidate_sequence_shape(params)
        result = run_stage(problem, params, stage, progress=settings.progress)
        params = result.params
        results.append(result)

    estimate = SequenceEstimate(
        states=params.states(),
        scale=params.scale,
        camera_poses=params.camera_poses(inputs.camera_poses),
        scale_mode=settings.scale_mode,
    )
    return PipelineResult(estimate, params, results)


def fit_sequence(
    intrinsics: CameraIntrinsics,
    observations: Sequence[Observation2D],
    camera_poses: Sequence,
    scene=None,
    schedule: StageSchedule = StageSchedule.default(),
    settings: FitSettings = FitSettings(),
    skeleton: SkeletonDef = DEFAULT_SKELETON,
) -> SequenceEstimate:
    """Convenience wrapper of run_pipeline returning only the estimate."""
    inputs = FittingInputs(intrinsics, list(observations), list(camera_poses), scene)
    return run_pipeline(inputs, schedule, settings, skeleton).estimate
