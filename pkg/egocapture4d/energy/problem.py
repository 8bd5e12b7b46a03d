"""
The full fitting objective over a sequence: parameter blocks, packing into the
flat vector the optimizer works on, total energy and its exact gradient.
"""

import dataclasses
import logging
from typing import Dict, List, Optional, Sequence, Tuple

import numpy as np
import torch

from ..core.body import DEFAULT_CONTACT_GROUPS, DEFAULT_SKELETON, SkeletonDef, batch_contact_points, batch_forward_kinematics
from ..core.geometry import CameraIntrinsics, Pose3
from ..core.scale_mode import ScaleMode
from ..core.scene import SceneMesh, SpatialIndex, build_index
from ..core.state import BodyState, stack_states
from ..core.util import axis_angle_to_matrix, to_tensor, wrap_axis_angle
from .terms import (
    FreeSet,
    KernelSet,
    NonPositiveScale,
    Observation2D,
    SequenceTooShort,
    Weights,
    camera_prior,
    contact_energy,
    joint_energy,
    pose_prior,
    pose_prior_weights,
    shape_prior,
    temporal_energy,
    world_points,
)

logger = logging.getLogger(__name__)

TERMS = ("joint", "shape", "pose", "contact", "temporal", "camera")

# parameter block -> SequenceParams fields, in packing order
BLOCK_FIELDS = {
    "beta": ("beta",),
    "theta": ("theta",),
    "gamma": ("root_translation", "root_orientation"),
    "camera": ("camera_rotation", "camera_translation"),
    "scale": ("log_scale",),
}


@dataclasses.dataclass(frozen=True)
class FittingInputs:
    """
    Everything the fitter observes.

    Attributes
    ----------
    intrinsics : CameraIntrinsics
        camera intrinsics
    observations : List[Observation2D]
        per-frame 2D detections
    camera_poses : List[Pose3]
        per-frame camera-to-world transforms from structure from motion
    scene : Optional[SceneMesh]
        scene mesh in the same (unknown scale) world units
    """

    intrinsics: CameraIntrinsics
    observations: List[Observation2D]
    camera_poses: List[Pose3]
    scene: Optional[SceneMesh] = None

    def __post_init__(self):
        if len(self.observations) != len(self.camera_poses):
            raise ValueError(
                f"{len(self.observations)} observations but {len(self.camera_poses)} camera poses were given"
            )

    @property
    def frames(self) -> int:
        return len(self.observations)

    def confidences(self) -> np.ndarray:
        return np.stack([observation.confidence for observation in self.observations])

    def positions(self) -> np.ndarray:
        return np.stack([observation.positions for observation in self.observations])


@dataclasses.dataclass(frozen=True, eq=False)
class SequenceParams:
    """
    Free parameters of a sequence fit.

    Attributes
    ----------
    beta : np.ndarray
        (T, B) shape per frame (rows equal once consolidated)
    theta : np.ndarray
        (T, J, 3) local joint rotations
    root_translation : np.ndarray
        (T, 3) root translation in the camera frame
    root_orientation : np.ndarray
        (T, 3) root axis-angle orientation
    camera_rotation : np.ndarray
        (T, 3) axis-angle increments right-multiplied onto the input camera rotations
    camera_translation : np.ndarray
        (T, 3) increments added to the input camera translations
    log_scale : float
        logarithm of the body-vs-scene scale
    """

    beta: np.ndarray
    theta: np.ndarray
    root_translation: np.ndarray
    root_orientation: np.ndarray
    camera_rotation: np.ndarray
    camera_translation: np.ndarray
    log_scale: float = 0.0

    @classmethod
    def from_states(cls, states: Sequence[BodyState], scale: float = 1.0) -> "SequenceParams":
        arrays = stack_states(states)
        frames = len(states)
        return cls(
            beta=arrays["beta"],
            theta=arrays["theta"],
            root_translation=arrays["root_translation"],
            root_orientation=arrays["root_orientation"],
            camera_rotation=np.zeros((frames, 3)),
            camera_translation=np.zeros((frames, 3)),
            log_scale=float(np.log(scale)),
        )

    @property
    def frames(self) -> int:
        return len(self.beta)

    @property
    def scale(self) -> float:
        return float(np.exp(self.log_scale))

    def replace(self, **changes) -> "SequenceParams":
        return dataclasses.replace(self, **changes)

    def states(self) -> List[BodyState]:
        """Per-frame body states, rotations wrapped to angles <= pi."""
        theta = wrap_axis_angle(self.theta)
        orientation = wrap_axis_angle(self.root_orientation)
        return [
            BodyState.from_dict(
                {
                    "beta": self.beta[t],
                    "theta": theta[t],
                    "root_translation": self.root_translation[t],
                    "root_orientation": orientation[t],
                }
            )
            for t in range(self.frames)
        ]

    def camera_poses(self, base: Sequence[Pose3]) -> List[Pose3]:
        """Refined camera-to-world transforms: base rotation times the increment, base translation plus the increment."""
        return [
            Pose3.from_matrix(_refined_matrix(pose, rotation, translation))
            for pose, rotation, translation in zip(base, self.camera_rotation, self.camera_translation)
        ]


def _refined_matrix(pose: Pose3, rotation: np.ndarray, translation: np.ndarray) -> np.ndarray:
    matrix = np.eye(4)
    increment = Pose3.from_rotvec(rotation, np.zeros(3)).rotation_matrix
    matrix[:3, :3] = pose.rotation_matrix @ increment
    matrix[:3, 3] = pose.translation + translation
    return matrix


class FittingProblem:
    """
    Total energy of a sequence fit and its gradient over the free parameter blocks.
    Contact correspondences are held fixed between calls to refresh_correspondences.
    """

    def __init__(
        self,
        inputs: FittingInputs,
        skeleton: SkeletonDef = DEFAULT_SKELETON,
        kernels: KernelSet = KernelSet(),
        weights: Weights = Weights(),
        contact_groups: Optional[Sequence[str]] = DEFAULT_CONTACT_GROUPS,
        scale_mode: str = ScaleMode.camera,
        twist_weight: float = 4.0,
        index: Optional[SpatialIndex] = None,
    ):
        """
        Create the objective of a sequence.

        Parameters
        ----------
        inputs : FittingInputs
            observations, camera trajectory and scene
        skeleton : SkeletonDef
            kinematic tree
        kernels : KernelSet
            robust kernels of the joint, contact and temporal terms
        weights : Weights
            term weights
        contact_groups : Optional[Sequence[str]]
            contact candidate groups, all if None
        scale_mode : str
            see ScaleMode
        twist_weight : float
            pose prior weight of knee and elbow twist
        index : Optional[SpatialIndex]
            prebuilt scene index, built from inputs.scene if None
        """
        if scale_mode not in ScaleMode.values():
            raise ValueError(f"unknown scale mode {scale_mode!r}")
        self.inputs = inputs
        self.skeleton = skeleton
        self.kernels = kernels
        self.weights = weights
        self.scale_mode = scale_mode
        self.candidates = skeleton.candidates(contact_groups)
        if index is None and inputs.scene is not None:
            index = build_index(inputs.scene)
        self.index = index

        self.focal = to_tensor(inputs.intrinsics.focal)
        self.principal_point = to_tensor(inputs.intrinsics.principal_point)
        self.positions = to_tensor(inputs.positions())
        self.confidence = to_tensor(inputs.confidences())
        self.base_rotation = to_tensor(np.stack([pose.rotation_matrix for pose in inputs.camera_poses]))
        self.base_translation = to_tensor(np.stack([pose.translation for pose in inputs.camera_poses]))
        self.prior_weights = to_tensor(pose_prior_weights(skeleton, twist_weight))
        self.rest_pose = torch.zeros((skeleton.joint_count, 3), dtype=self.prior_weights.dtype)
        self.joint_weights = torch.ones(skeleton.joint_count, dtype=self.prior_weights.dtype)
        self.targets: Optional[torch.Tensor] = None

    @property
    def frames(self) -> int:
        return self.inputs.frames

    def set_joint_weights(self, joint_weights: np.ndarray):
        self.joint_weights = to_tensor(joint_weights)

    def pack(self, params: SequenceParams, free: FreeSet) -> np.ndarray:
        """
        Flatten the free blocks into one vector (log scale for the scale block).

        Parameters
        ----------
        params : SequenceParams
            current parameters
        free : FreeSet
            blocks to include

        Returns
        -------
        np.ndarray
            flat parameter vector
        """
        parts = [
            np.ravel(getattr(params, field)).astype(np.float64)
            for block in free.names()
            for field in BLOCK_FIELDS[block]
        ]
        return np.concatenate(parts) if parts else np.zeros(0)

    def unpack(self, flat: np.ndarray, free: FreeSet, params: SequenceParams) -> SequenceParams:
        """
        Write a flat vector back into the free blocks; frozen blocks are reused untouched.

        Parameters
        ----------
        flat : np.ndarray
            flat parameter vector, as produced by pack
        free : FreeSet
            blocks contained in the vector
        params : SequenceParams
            parameters providing the frozen blocks and the block shapes

        Returns
        -------
        SequenceParams
            updated parameters
        """
        changes, offset = {}, 0
        for block in free.names():
            for field in BLOCK_FIELDS[block]:
                current = getattr(params, field)
                size = int(np.size(current))
                values = np.array(flat[offset : offset + size], dtype=np.float64)
                changes[field] = float(values[0]) if field == "log_scale" else values.reshape(np.shape(current))
                offset += size
        return params.replace(**changes)

    def _tensors(self, params: SequenceParams, free: FreeSet) -> Dict[str, torch.Tensor]:
        tensors = {}
        for block in FreeSet.BLOCKS:
            for field in BLOCK_FIELDS[block]:
                tensors[field] = to_tensor(getattr(params, field), requires_grad=getattr(free, block))
        return tensors

    def _camera(self, tensors: Dict[str, torch.Tensor]) -> Tuple[torch.Tensor, torch.Tensor]:
        rotation = self.base_rotation @ axis_angle_to_matrix(tensors["camera_rotation"])
        return rotation, self.base_translation + tensors["camera_translation"]

    def _evaluate(self, tensors: Dict[str, torch.Tensor], joint_weights: torch.Tensor) -> Dict[str, torch.Tensor]:
        joints, rotations = batch_forward_kinematics(
            self.skeleton,
            tensors["beta"],
            tensors["theta"],
            tensors["root_translation"],
            tensors["root_orientation"],
        )
        parts = {
            "joint": joint_energy(
                joints,
                self.focal,
                self.principal_point,
                self.positions,
                self.confidence,
                joint_weights,
                self.kernels.joint.sigma,
            ),
            "shape": shape_prior(tensors["beta"]),
            "pose": pose_prior(tensors["theta"], self.rest_pose, self.prior_weights),
        }
        zero = torch.zeros(self.frames, dtype=joints.dtype)
        rotation, translation = self._camera(tensors)
        scale = torch.exp(tensors["log_scale"])

        if self.targets is not None:
            contacts = batch_contact_points(joints, rotations, self.candidates)
            points = world_points(contacts, tensors["root_translation"], rotation, translation, scale, self.scale_mode)
            parts["contact"] = contact_energy(points, self.targets, self.kernels.contact.sigma)
        else:
            parts["contact"] = zero

        if self.frames >= 3:
            joints_world = world_points(joints, tensors["root_translation"], rotation, translation, scale, self.scale_mode)
            parts["temporal"] = temporal_energy(joints_world, self.confidence, self.kernels.temporal.sigma, scale)
        elif self.weights.lambda_temporal > 0.0:
            raise SequenceTooShort(f"the temporal prior needs at least 3 frames, got {self.frames}")
        else:
            parts["temporal"] = zero[:0]
        parts["camera"] = camera_prior(tensors["camera_rotation"], tensors["camera_translation"])
        return parts

    def _total(self, parts: Dict[str, torch.Tensor]) -> torch.Tensor:
        # per-frame model fitting energies first, then the sequence terms, always in this order
        model = parts["joint"] + self.weights.lambda_beta * parts["shape"] + self.weights.lambda_theta * parts["pose"]
        total = model.sum()
        if self.weights.lambda_contact > 0.0:
            total = total + self.weights.lambda_contact * parts["contact"].sum()
        if self.weights.lambda_temporal > 0.0:
            total = total + self.weights.lambda_temporal * parts["temporal"].sum()
        if self.weights.lambda_camera > 0.0:
            total = total + self.weights.lambda_camera * parts["camera"].sum()
        return total

    def refresh_correspondences(self, params: SequenceParams) -> Optional[np.ndarray]:
        """
        Re-assign every contact candidate to its nearest scene vertex.

        Parameters
        ----------
        params : SequenceParams
            current parameters

        Returns
        -------
        Optional[np.ndarray]
            (T, C) distances to the assigned vertices, None without a scene
        """
        if self.index is None:
            return None
        with torch.no_grad():
            tensors = self._tensors(params, FreeSet())
            joints, rotations = batch_forward_kinematics(
                self.skeleton,
                tensors["beta"],
                tensors["theta"],
                tensors["root_translation"],
                tensors["root_orientation"],
            )
            contacts = batch_contact_points(joints, rotations, self.candidates)
            rotation, translation = self._camera(tensors)
            points = world_points(
                contacts,
                tensors["root_translation"],
                rotation,
                translation,
                torch.exp(tensors["log_scale"]),
                self.scale_mode,
            ).numpy()
        points = points.reshape(-1, 3)
        # non-finite candidates keep a placeholder target, the energy check reports them
        finite = np.isfinite(points).all(axis=1)
        ids, distances = self.index.query(np.where(finite[:, None], points, 0.0))
        distances[~finite] = np.nan
        shape = (self.frames, len(self.candidates))
        self.targets = to_tensor(self.index.vertices[ids].reshape(shape + (3,)))
        return distances.reshape(shape)

    def frame_terms(self, params: SequenceParams, joint_weights: Optional[np.ndarray] = None) -> Dict[str, np.ndarray]:
        """
        Unweighted per-frame value of every term (temporal indexed by its center frame - 1).

        Parameters
        ----------
        params : SequenceParams
            current parameters
        joint_weights : Optional[np.ndarray]
            annealing weights, the current ones if None

        Returns
        -------
        Dict[str, np.ndarray]
            term name -> per-frame values
        """
        weights = self.joint_weights if joint_weights is None else to_tensor(joint_weights)
        with torch.no_grad():
            parts = self._evaluate(self._tensors(params, FreeSet()), weights)
        return {name: value.numpy().copy() for name, value in parts.items()}

    def terms(self, params: SequenceParams, joint_weights: Optional[np.ndarray] = None) -> Dict[str, float]:
        """
        Unweighted value of every term summed over the sequence, plus the weighted total.

        Parameters
        ----------
        params : SequenceParams
            current parameters
        joint_weights : Optional[np.ndarray]
            annealing weights, the current ones if None

        Returns
        -------
        Dict[str, float]
            joint, shape, pose, contact, temporal, camera and total
        """
        weights = self.joint_weights if joint_weights is None else to_tensor(joint_weights)
        with torch.no_grad():
            parts = self._evaluate(self._tensors(params, FreeSet()), weights)
            total = self._total(parts)
        values = {name: float(parts[name].sum()) for name in TERMS}
        values["total"] = float(total)
        return values

    def energy(self, params: SequenceParams) -> float:
        with torch.no_grad():
            return float(self._total(self._evaluate(self._tensors(params, FreeSet()), self.joint_weights)))

    def value_and_gradient(self, params: SequenceParams, free: FreeSet) -> Tuple[float, np.ndarray]:
        """
        Total energy and its gradient over the free blocks, in pack order.

        Parameters
        ----------
        params : SequenceParams
            current parameters
        free : FreeSet
            blocks to differentiate

        Returns
        -------
        Tuple[float, np.ndarray]
            energy and flat gradient (log scale for the scale block)
        """
        tensors = self._tensors(params, free)
        total = self._total(self._evaluate(tensors, self.joint_weights))
        leaves = [tensors[field] for block in free.names() for field in BLOCK_FIELDS[block]]
        if not total.requires_grad:
            # no free block reaches the active terms
            return float(total.detach()), np.zeros(sum(int(leaf.numel()) for leaf in leaves))
        grads = torch.autograd.grad(total, leaves, allow_unused=True)
        flat = [
            np.zeros(int(leaf.numel())) if grad is None else grad.detach().numpy().ravel()
            for leaf, grad in zip(leaves, grads)
        ]
        return float(total.detach()), np.concatenate(flat)

    def gradient(self, params: SequenceParams, free: FreeSet) -> np.ndarray:
        return self.value_and_gradient(params, free)[1]


def e_total(
    states: Sequence[BodyState],
    camera_poses: Sequence[Pose3],
    scale: float,
    inputs: FittingInputs,
    weights: Weights,
    kernels: KernelSet = KernelSet(),
    skeleton: SkeletonDef = DEFAULT_SKELETON,
    **problem_options,
) -> float:
    """
    Total energy of a sequence of states, contact correspondences taken at the states themselves.

    Parameters
    ----------
    states : Sequence[BodyState]
        per-frame body states
    camera_poses : Sequence[Pose3]
        camera-to-world transforms to evaluate with (replace the input trajectory)
    scale : float
        body-vs-scene scale
    inputs : FittingInputs
        observations and scene
    weights : Weights
        term weights
    kernels : KernelSet
        robust kernels
    skeleton : SkeletonDef
        kinematic tree

    Returns
    -------
    float
        the total energy
    """
    problem, params = _problem_at(states, camera_poses, scale, inputs, weights, kernels, skeleton, **problem_options)
    return problem.energy(params)


def gradient(
    states: Sequence[BodyState],
    camera_poses: Sequence[Pose3],
    scale: float,
    inputs: FittingInputs,
    weights: Weights,
    free: FreeSet,
    kernels: KernelSet = KernelSet(),
    skeleton: SkeletonDef = DEFAULT_SKELETON,
    **problem_options,
) -> np.ndarray:
    """
    Gradient of e_total over the free blocks, correspondences held fixed.
    Camera blocks are increments about the given poses, the scale block is log scale.

    Returns
    -------
    np.ndarray
        flat gradient in pack order
    """
    problem, params = _problem_at(states, camera_poses, scale, inputs, weights, kernels, skeleton, **problem_options)
    return problem.gradient(params, free)


def _problem_at(states, camera_poses, scale, inputs, weights, kernels, skeleton, **problem_options):
    if not scale > 0.0:
        raise NonPositiveScale(f"scale must be positive, got {scale}")
    inputs = dataclasses.replace(inputs, camera_poses=list(camera_poses))
    problem = FittingProblem(inputs, skeleton=skeleton, kernels=kernels, weights=weights, **problem_options)
    params = SequenceParams.from_states(states, scale)
    problem.refresh_correspondences(params)
    return problem, params
