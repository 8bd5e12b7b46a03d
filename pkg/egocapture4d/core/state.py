import dataclasses
from typing import Dict, List, Optional, Sequence

import numpy as np
import torch

from .body import (
    PoseParams,
    RootTransform,
    ShapeParams,
    SkeletonDef,
    batch_contact_points,
    batch_forward_kinematics,
)
from .geometry import Pose3
from .scale_mode import ScaleMode
from .util import to_tensor


@dataclasses.dataclass(frozen=True)
class BodyState:
    """
    Per-frame state of the articulated body.

    Attributes
    ----------
    shape : ShapeParams
        log bone-length multipliers
    pose : PoseParams
        local joint rotations
    root : RootTransform
        root placement in the camera frame
    """

    shape: ShapeParams
    pose: PoseParams
    root: RootTransform

    def to_dict(self) -> Dict:
        return {
            "beta": self.shape.beta.tolist(),
            "theta": self.pose.theta.tolist(),
            "root_translation": self.root.translation.tolist(),
            "root_orientation": self.root.orientation.tolist(),
        }

    @classmethod
    def from_dict(cls, data: Dict) -> "BodyState":
        return cls(
            ShapeParams(data["beta"]),
            PoseParams(data["theta"]),
            RootTransform(data["root_translation"], data["root_orientation"]),
        )


def stack_states(states: Sequence[BodyState]) -> Dict[str, np.ndarray]:
    """
    Stack per-frame states into (T, ...) arrays.

    Parameters
    ----------
    states : Sequence[BodyState]
        per-frame states

    Returns
    -------
    Dict[str, np.ndarray]
        beta (T, B), theta (T, J, 3), root_translation (T, 3), root_orientation (T, 3)
    """
    return {
        "beta": np.stack([state.shape.beta for state in states]),
        "theta": np.stack([state.pose.theta for state in states]),
        "root_translation": np.stack([state.root.translation for state in states]),
        "root_orientation": np.stack([state.root.orientation for state in states]),
    }


def posed_sequence(skeleton: SkeletonDef, states: Sequence[BodyState], groups: Optional[Sequence[str]] = None):
    """
    Camera-frame joints and contact candidates of a sequence of states.

    Parameters
    ----------
    skeleton : SkeletonDef
        kinematic tree
    states : Sequence[BodyState]
        per-frame states
    groups : Optional[Sequence[str]]
        contact groups, all candidates if None

    Returns
    -------
    Tuple[np.ndarray, np.ndarray]
        (T, J, 3) joints and (T, C, 3) contact candidates
    """
    arrays = stack_states(states)
    with torch.no_grad():
        joints, rotations = batch_forward_kinematics(
            skeleton,
            to_tensor(arrays["beta"]),
            to_tensor(arrays["theta"]),
            to_tensor(arrays["root_translation"]),
            to_tensor(arrays["root_orientation"]),
        )
        contacts = batch_contact_points(joints, rotations, skeleton.candidates(groups))
    return joints.numpy(), contacts.numpy()


def camera_to_world(
    points_cam: np.ndarray,
    root_translation: np.ndarray,
    camera_poses: Sequence[Pose3],
    scale: float,
    scale_mode: str = ScaleMode.camera,
) -> np.ndarray:
    """
    Map camera-frame body points into the world, applying the body-vs-scene scale.

    Parameters
    ----------
    points_cam : np.ndarray
        (T, N, 3) camera-frame points
    root_translation : np.ndarray
        (T, 3) root positions, the center of the body-frame scaling
    camera_poses : Sequence[Pose3]
        per-frame camera-to-world transforms
    scale : float
        body-vs-scene scale
    scale_mode : str, optional
        see ScaleMode, by default ScaleMode.camera

    Returns
    -------
    np.ndarray
        (T, N, 3) world points
    """
    points_cam = np.asarray(points_cam, dtype=np.float64)
    if scale_mode == ScaleMode.camera:
        scaled = scale * points_cam
    else:
        center = np.asarray(root_translation, dtype=np.float64)[:, None, :]
        scaled = center + scale * (points_cam - center)
    rotations = np.stack([pose.rotation_matrix for pose in camera_poses])
    translations = np.stack([pose.translation for pose in camera_poses])
    return np.einsum("tij,tnj->tni", rotations, scaled) + translations[:, None, :]


@dataclasses.dataclass
class SequenceEstimate:
    """
    Result of fitting a sequence.

    Attributes
    ----------
    states : List[BodyState]
        per-frame body states (camera frame)
    scale : float
        body-vs-scene scale shared by the sequence
    camera_poses : List[Pose3]
        refined camera-to-world transforms
    scale_mode : str
        where the scale is applied, see ScaleMode
    """

    states: List[BodyState]
    scale: float
    camera_poses: List[Pose3]
    scale_mode: str = ScaleMode.camera

    def __len__(self) -> int:
        return len(self.states)

    def joints_camera(self, skeleton: SkeletonDef) -> np.ndarray:
        joints, _ = posed_sequence(skeleton, self.states)
        return joints

    def joints_world(self, skeleton: SkeletonDef) -> np.ndarray:
        joints, _ = posed_sequence(skeleton, self.states)
        return self._to_world(joints)

    def contact_points_world(self, skeleton: SkeletonDef, groups: Optional[Sequence[str]] = None) -> np.ndarray:
        _, contacts = posed_sequence(skeleton, self.states, groups)
        return self._to_world(contacts)

    def _to_world(self, points_cam: np.ndarray) -> np.ndarray:
        roots = np.stack([state.root.translation for state in self.states])
        return camera_to_world(points_cam, roots, self.camera_poses, self.scale, self.scale_mode)
