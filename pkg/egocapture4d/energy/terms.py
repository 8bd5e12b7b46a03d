"""
Energy terms of the scene-grounded fitting objective.

Every term has a batched torch form (used by the optimizer, differentiated with
autograd in double precision) and a numpy-facing entry point that evaluates a
single term from plain body states.
"""

import dataclasses
from typing import Optional, Sequence, Tuple

import numpy as np
import torch

from ..core.body import (
    DEFAULT_SKELETON,
    LIMB_JOINTS,
    TWIST_JOINTS,
    SkeletonDef,
)
from ..core.geometry import MIN_DEPTH, CameraIntrinsics, Pose3
from ..core.kernel import RobustKernel, rho, rho_squared
from ..core.scale_mode import ScaleMode
from ..core.scene import SpatialIndex
from ..core.state import BodyState, camera_to_world, posed_sequence
from ..core.util import to_tensor

__all__ = [
    "FreeSet",
    "KernelSet",
    "NonPositiveScale",
    "Observation2D",
    "SequenceTooShort",
    "Weights",
    "e_camera_prior",
    "e_contact",
    "e_joint",
    "e_pose_prior",
    "e_shape_prior",
    "e_temporal",
    "rho",
]


class NonPositiveScale(ValueError):
    def __init__(self, message):
        super().__init__(message)


class SequenceTooShort(ValueError):
    def __init__(self, message):
        super().__init__(message)


@dataclasses.dataclass(frozen=True, eq=False)
class Observation2D:
    """
    2D detections of one frame.

    Attributes
    ----------
    positions : np.ndarray
        (J, 2) pixel positions; ignored where the confidence is 0
    confidence : np.ndarray
        (J,) detection confidence in [0, 1], 0 for undetected joints
    """

    positions: np.ndarray
    confidence: np.ndarray

    def __post_init__(self):
        positions = np.array(self.positions, dtype=np.float64).reshape(-1, 2)
        confidence = np.array(self.confidence, dtype=np.float64).reshape(-1)
        if len(confidence) != len(positions):
            raise ValueError("one confidence per joint position is required")
        if np.any(confidence < 0.0) or np.any(confidence > 1.0):
            raise ValueError("confidences must lie in [0, 1]")
        # undetected joints carry no position information
        positions = np.where(confidence[:, None] > 0.0, positions, 0.0)
        positions.setflags(write=False)
        confidence.setflags(write=False)
        object.__setattr__(self, "positions", positions)
        object.__setattr__(self, "confidence", confidence)

    @property
    def missing_fraction(self) -> float:
        return float(np.mean(self.confidence == 0.0))


@dataclasses.dataclass(frozen=True)
class KernelSet:
    """Robust kernels of the joint, contact and temporal terms."""

    joint: RobustKernel = RobustKernel(100.0)
    contact: RobustKernel = RobustKernel(0.2)
    temporal: RobustKernel = RobustKernel(0.1)


@dataclasses.dataclass(frozen=True)
class Weights:
    """
    Term weights.

    Attributes
    ----------
    lambda_beta : float
        shape prior weight
    lambda_theta : float
        pose prior weight
    lambda_contact : float
        scene contact weight
    lambda_temporal : float
        zero-acceleration prior weight
    lambda_camera : float
        weight of the prior keeping refined cameras at the input trajectory,
        zero contribution for unrefined cameras
    """

    lambda_beta: float = 0.01
    lambda_theta: float = 0.1
    lambda_contact: float = 0.0
    lambda_temporal: float = 0.0
    lambda_camera: float = 100.0

    def __post_init__(self):
        for field in dataclasses.fields(self):
            value = getattr(self, field.name)
            if not value >= 0.0:
                raise ValueError(f"{field.name} must be non-negative, got {value}")


@dataclasses.dataclass(frozen=True)
class FreeSet:
    """
    Parameter blocks the optimizer may change.

    Attributes
    ----------
    beta : bool
        shape parameters
    theta : bool
        joint rotations
    gamma : bool
        root translation and orientation
    camera : bool
        camera-to-world increments
    scale : bool
        body-vs-scene scale
    """

    beta: bool = False
    theta: bool = False
    gamma: bool = False
    camera: bool = False
    scale: bool = False

    BLOCKS = ("beta", "theta", "gamma", "camera", "scale")

    @classmethod
    def of(cls, names: Sequence[str]) -> "FreeSet":
        unknown = set(names) - set(cls.BLOCKS)
        if unknown:
            raise ValueError(f"unknown parameter blocks {sorted(unknown)}")
        return cls(**{name: True for name in names})

    def names(self) -> Tuple[str, ...]:
        return tuple(name for name in self.BLOCKS if getattr(self, name))

    def without(self, name: str) -> "FreeSet":
        return dataclasses.replace(self, **{name: False})

    def __bool__(self) -> bool:
        return bool(self.names())


def pose_prior_weights(skeleton: SkeletonDef = DEFAULT_SKELETON, twist_weight: float = 4.0) -> np.ndarray:
    """
    Diagonal weights of the pose prior, twist components of knees and elbows boosted.

    Parameters
    ----------
    skeleton : SkeletonDef
        kinematic tree
    twist_weight : float, optional
        weight of the bone-axis component of knees and elbows, by default 4.0

    Returns
    -------
    np.ndarray
        (J, 3) weights
    """
    weights = np.ones((skeleton.joint_count, 3))
    weights[skeleton.indices(TWIST_JOINTS), 1] = twist_weight
    return weights


def annealing_weights(skeleton: SkeletonDef = DEFAULT_SKELETON, limb_weight: float = 1.0) -> np.ndarray:
    """
    Per-joint weights k of the joint term: limbs get limb_weight, the torso 1.

    Parameters
    ----------
    skeleton : SkeletonDef
        kinematic tree
    limb_weight : float, optional
        weight of arm and leg joints, by default 1.0

    Returns
    -------
    np.ndarray
        (J,) weights
    """
    weights = np.ones(skeleton.joint_count)
    weights[skeleton.indices(LIMB_JOINTS)] = limb_weight
    return weights


# batched torch terms


def joint_energy(
    joints_cam: torch.Tensor,
    focal: torch.Tensor,
    principal_point: torch.Tensor,
    positions: torch.Tensor,
    confidence: torch.Tensor,
    joint_weights: torch.Tensor,
    sigma: float,
) -> torch.Tensor:
    """
    Robust reprojection energy per frame; joints behind the camera get weight 0.

    Parameters
    ----------
    joints_cam : torch.Tensor
        (T, J, 3) camera-frame joints
    focal, principal_point : torch.Tensor
        (2,) intrinsics
    positions : torch.Tensor
        (T, J, 2) detections
    confidence : torch.Tensor
        (T, J) detection confidences
    joint_weights : torch.Tensor
        (J,) annealing weights k
    sigma : float
        joint kernel constant (pixels)

    Returns
    -------
    torch.Tensor
        (T,) per-frame energy
    """
    depth = joints_cam[..., 2]
    visible = depth > MIN_DEPTH
    safe_depth = torch.where(visible, depth, torch.ones_like(depth))
    pixels = joints_cam[..., :2] / safe_depth[..., None] * focal + principal_point
    residual_sq = ((pixels - positions) ** 2).sum(-1)
    weight = torch.where(visible, confidence * joint_weights, torch.zeros_like(confidence))
    return (weight * rho_squared(residual_sq, sigma)).sum(-1)


def shape_prior(beta: torch.Tensor) -> torch.Tensor:
    return (beta * beta).sum(-1)


def pose_prior(theta: torch.Tensor, rest: torch.Tensor, weights: torch.Tensor) -> torch.Tensor:
    diff = theta - rest
    return (weights * diff * diff).sum((-1, -2))


def world_points(
    points_cam: torch.Tensor,
    root_translation: torch.Tensor,
    rotation: torch.Tensor,
    translation: torch.Tensor,
    scale: torch.Tensor,
    scale_mode: str = ScaleMode.camera,
) -> torch.Tensor:
    """
    Torch counterpart of camera_to_world.

    Parameters
    ----------
    points_cam : torch.Tensor
        (T, N, 3) camera-frame points
    root_translation : torch.Tensor
        (T, 3) root positions
    rotation, translation : torch.Tensor
        (T, 3, 3) and (T, 3) camera-to-world transforms
    scale : torch.Tensor
        scalar scale
    scale_mode : str, optional
        see ScaleMode

    Returns
    -------
    torch.Tensor
        (T, N, 3) world points
    """
    if scale_mode == ScaleMode.camera:
        scaled = scale * points_cam
    else:
        center = root_translation[:, None, :]
        scaled = center + scale * (points_cam - center)
    return (rotation[:, None] @ scaled[..., None])[..., 0] + translation[:, None, :]


def contact_energy(points_world: torch.Tensor, targets: torch.Tensor, sigma: float) -> torch.Tensor:
    """
    Robust contact energy per frame towards fixed scene vertices.

    Parameters
    ----------
    points_world : torch.Tensor
        (T, C, 3) contact candidates in the world
    targets : torch.Tensor
        (T, C, 3) corresponding scene vertices
    sigma : float
        contact kernel constant (scene units)

    Returns
    -------
    torch.Tensor
        (T,) per-frame energy
    """
    distance_sq = ((points_world - targets) ** 2).sum(-1)
    return rho_squared(distance_sq, sigma).sum(-1)


def temporal_weights(confidence: torch.Tensor) -> torch.Tensor:
    """(T - 2, J) weights 1 - w, w being the least confidence over each three-frame stencil."""
    stencil = torch.minimum(torch.minimum(confidence[:-2], confidence[1:-1]), confidence[2:])
    return 1.0 - stencil


def temporal_energy(
    joints_world: torch.Tensor,
    confidence: torch.Tensor,
    sigma: float,
    scale: Optional[torch.Tensor] = None,
) -> torch.Tensor:
    """
    Zero-acceleration prior per interior frame.

    Accelerations are measured in body units (world offsets divided by the
    scale), so the prior ranks scales by smoothness alone and does not pull
    the scale towards zero.

    Parameters
    ----------
    joints_world : torch.Tensor
        (T, J, 3) world joints, T >= 3
    confidence : torch.Tensor
        (T, J) detection confidences
    sigma : float
        temporal kernel constant (body units)
    scale : Optional[torch.Tensor]
        scalar body-vs-scene scale, 1 if None

    Returns
    -------
    torch.Tensor
        (T - 2,) energy of frames 1 .. T - 2
    """
    acceleration = joints_world[2:] - 2.0 * joints_world[1:-1] + joints_world[:-2]
    if scale is not None:
        acceleration = acceleration / scale
    return (temporal_weights(confidence) * rho_squared((acceleration**2).sum(-1), sigma)).sum(-1)


def camera_prior(rotation_increment: torch.Tensor, translation_increment: torch.Tensor) -> torch.Tensor:
    """(T,) squared norm of the camera refinement (radians and scene units) per frame."""
    return (rotation_increment**2).sum(-1) + (translation_increment**2).sum(-1)


# numpy-facing single-term evaluation


def e_joint(
    state: BodyState,
    intrinsics: CameraIntrinsics,
    observation: Observation2D,
    kernel: RobustKernel,
    joint_weights: Optional[np.ndarray] = None,
    skeleton: SkeletonDef = DEFAULT_SKELETON,
) -> float:
    """
    Robust reprojection energy of one frame.

    Parameters
    ----------
    state : BodyState
        body state of the frame
    intrinsics : CameraIntrinsics
        camera intrinsics
    observation : Observation2D
        detections of the frame
    kernel : RobustKernel
        joint kernel
    joint_weights : Optional[np.ndarray]
        (J,) annealing weights, ones if None
    skeleton : SkeletonDef
        kinematic tree

    Returns
    -------
    float
        sum over joints of k_i w_i rho(|projection - detection|)
    """
    if joint_weights is None:
        joint_weights = np.ones(skeleton.joint_count)
    joints, _ = posed_sequence(skeleton, [state])
    with torch.no_grad():
        value = joint_energy(
            to_tensor(joints),
            to_tensor(intrinsics.focal),
            to_tensor(intrinsics.principal_point),
            to_tensor(observation.positions[None]),
            to_tensor(observation.confidence[None]),
            to_tensor(joint_weights),
            kernel.sigma,
        )
    return float(value[0])


def e_shape_prior(beta: np.ndarray) -> float:
    beta = np.asarray(beta, dtype=np.float64)
    return float(np.sum(beta * beta))


def e_pose_prior(theta: np.ndarray, rest: Optional[np.ndarray] = None, weights: Optional[np.ndarray] = None) -> float:
    """
    Diagonal Gaussian pose prior about a rest pose.

    Parameters
    ----------
    theta : np.ndarray
        (J, 3) joint rotations
    rest : Optional[np.ndarray]
        (J, 3) rest rotations, zeros if None
    weights : Optional[np.ndarray]
        (J, 3) per-component weights, ones if None

    Returns
    -------
    float
        sum of weighted squared deviations
    """
    theta = np.asarray(theta, dtype=np.float64).reshape(-1, 3)
    rest = np.zeros_like(theta) if rest is None else np.asarray(rest, dtype=np.float64).reshape(-1, 3)
    weights = np.ones_like(theta) if weights is None else np.asarray(weights, dtype=np.float64).reshape(-1, 3)
    diff = theta - rest
    return float(np.sum(weights * diff * diff))


def e_contact(
    states: Sequence[BodyState],
    camera_poses: Sequence[Pose3],
    index: SpatialIndex,
    scale: float,
    kernel: RobustKernel,
    skeleton: SkeletonDef = DEFAULT_SKELETON,
    groups: Optional[Sequence[str]] = None,
    scale_mode: str = ScaleMode.camera,
) -> float:
    """
    Robust distance of every contact candidate to its nearest scene vertex.

    Parameters
    ----------
    states : Sequence[BodyState]
        per-frame body states
    camera_poses : Sequence[Pose3]
        per-frame camera-to-world transforms
    index : SpatialIndex
        scene index
    scale : float
        body-vs-scene scale
    kernel : RobustKernel
        contact kernel
    skeleton : SkeletonDef
        kinematic tree
    groups : Optional[Sequence[str]]
        contact groups, all if None
    scale_mode : str
        see ScaleMode

    Returns
    -------
    float
        the contact energy

    Raises
    ------
    NonPositiveScale
        if scale <= 0
    """
    if not scale > 0.0:
        raise NonPositiveScale(f"scale must be positive, got {scale}")
    _, contacts = posed_sequence(skeleton, states, groups)
    roots = np.stack([state.root.translation for state in states])
    points = camera_to_world(contacts, roots, camera_poses, scale, scale_mode)
    _, distances = index.query(points.reshape(-1, 3))
    per_frame = rho(distances.reshape(points.shape[:2]), kernel).sum(axis=1)
    return float(per_frame.sum())


def e_temporal(
    joints_world: np.ndarray,
    confidence: np.ndarray,
    kernel: RobustKernel,
    scale: float = 1.0,
) -> float:
    """
    Zero-acceleration prior over a sequence of world-frame joints.

    Parameters
    ----------
    joints_world : np.ndarray
        (T, J, 3) world joints
    confidence : np.ndarray
        (T, J) detection confidences
    kernel : RobustKernel
        temporal kernel, sigma in body units
    scale : float
        body-vs-scene scale the accelerations are divided by

    Returns
    -------
    float
        the temporal energy

    Raises
    ------
    SequenceTooShort
        if fewer than 3 frames are given
    NonPositiveScale
        if scale <= 0
    """
    joints_world = np.asarray(joints_world, dtype=np.float64)
    if len(joints_world) < 3:
        raise SequenceTooShort(f"the temporal prior needs at least 3 frames, got {len(joints_world)}")
    if not scale > 0.0:
        raise NonPositiveScale(f"scale must be positive, got {scale}")
    with torch.no_grad():
        per_frame = temporal_energy(
            to_tensor(joints_world),
            to_tensor(confidence),
            kernel.sigma,
            to_tensor(scale),
        )
    return float(per_frame.sum())


def e_camera_prior(camera_poses: Sequence[Pose3], reference_poses: Sequence[Pose3]) -> float:
    """
    Squared distance of refined cameras from the input trajectory.

    Parameters
    ----------
    camera_poses : Sequence[Pose3]
        refined camera-to-world transforms
    reference_poses : Sequence[Pose3]
        input camera-to-world transforms

    Returns
    -------
    float
        sum over frames of |rotation increment|^2 + |translation increment|^2
    """
    total = 0.0
    for pose, reference in zip(camera_poses, reference_poses):
        increment = reference.scipy_rotation.inv() * pose.scipy_rotation
        total += float(np.sum(increment.as_rotvec() ** 2) + np.sum((pose.translation - reference.translation) ** 2))
    return total
