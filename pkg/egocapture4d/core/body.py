"""
Simplified articulated body: a 17-joint skeleton whose bone lengths are
modulated by log multipliers over limb groups, posed by per-joint axis-angle
rotations and placed in the camera frame by a root transform.

Rotations follow the usual kinematic-tree convention: the global rotation of a
joint is its parent's global rotation times its own local rotation, and the
offset of a joint from its parent is rotated by the parent's global rotation.
"""

import dataclasses
from typing import Dict, List, Optional, Sequence, Tuple

import numpy as np
import torch

from .util import axis_angle_to_matrix, to_tensor

SKELETON_VERSION = 1

JOINT_NAMES = (
    "pelvis",
    "right_hip",
    "right_knee",
    "right_ankle",
    "left_hip",
    "left_knee",
    "left_ankle",
    "spine",
    "thorax",
    "nose",
    "head",
    "left_shoulder",
    "left_elbow",
    "left_wrist",
    "right_shoulder",
    "right_elbow",
    "right_wrist",
)

JOINT_PARENTS = (-1, 0, 1, 2, 0, 4, 5, 0, 7, 8, 9, 8, 11, 12, 8, 14, 15)

# body frame: x towards the subject's left, y up, z forward (meters)
REST_OFFSETS = (
    (0.0, 0.0, 0.0),
    (-0.1, 0.0, 0.0),
    (0.0, -0.45, 0.0),
    (0.0, -0.42, 0.0),
    (0.1, 0.0, 0.0),
    (0.0, -0.45, 0.0),
    (0.0, -0.42, 0.0),
    (0.0, 0.25, 0.0),
    (0.0, 0.25, 0.0),
    (0.0, 0.18, 0.08),
    (0.0, 0.12, -0.08),
    (0.18, 0.0, 0.0),
    (0.0, -0.28, 0.0),
    (0.0, -0.25, 0.0),
    (-0.18, 0.0, 0.0),
    (0.0, -0.28, 0.0),
    (0.0, -0.25, 0.0),
)

SHAPE_GROUP_NAMES = (
    "torso",
    "head",
    "shoulder_width",
    "upper_arm",
    "forearm",
    "hip_width",
    "thigh",
    "shank",
)

# limb group of each joint's incoming bone, -1 for the root
SHAPE_GROUPS = (-1, 5, 6, 7, 5, 6, 7, 0, 0, 1, 1, 2, 3, 4, 2, 3, 4)

# joints whose incoming bone belongs to an arm or a leg
LIMB_JOINTS = ("right_knee", "right_ankle", "left_knee", "left_ankle", "left_elbow", "left_wrist", "right_elbow", "right_wrist")

# joints that fall out of view when the lower body is truncated
LOWER_BODY_JOINTS = ("pelvis", "right_hip", "right_knee", "right_ankle", "left_hip", "left_knee", "left_ankle")

# the pose prior weighs the twist (bone axis, y) component of these joints more
TWIST_JOINTS = ("right_knee", "left_knee", "left_elbow", "right_elbow")


class DimensionMismatch(ValueError):
    def __init__(self, message):
        super().__init__(message)


class EmptyInput(ValueError):
    def __init__(self, message):
        super().__init__(message)


@dataclasses.dataclass(frozen=True)
class ContactCandidate:
    """
    Body point expected to touch the scene.

    Attributes
    ----------
    joint : int
        Index of the joint the point is attached to.
    offset : Tuple[float, float, float]
        Offset in the joint's frame (meters, not shape-scaled).
    group : str
        Name of the contact group (left_sole, right_sole, seat).
    """

    joint: int
    offset: Tuple[float, float, float]
    group: str


DEFAULT_CONTACT_CANDIDATES = (
    ContactCandidate(6, (0.0, -0.08, -0.05), "left_sole"),
    ContactCandidate(6, (0.0, -0.08, 0.15), "left_sole"),
    ContactCandidate(3, (0.0, -0.08, -0.05), "right_sole"),
    ContactCandidate(3, (0.0, -0.08, 0.15), "right_sole"),
    ContactCandidate(0, (0.0, -0.08, -0.12), "seat"),
)

DEFAULT_CONTACT_GROUPS = ("left_sole", "right_sole")


@dataclasses.dataclass(frozen=True, eq=False)
class SkeletonDef:
    """
    Kinematic tree of the body.

    Attributes
    ----------
    joint_names : Tuple[str, ...]
        Name of every joint; the root (pelvis) comes first.
    parents : Tuple[int, ...]
        Parent index per joint, -1 for the root; parents precede children.
    offsets : np.ndarray
        (J, 3) rest-pose offsets from the parent joint (meters).
    shape_groups : Tuple[int, ...]
        Limb group of every joint's incoming bone, -1 for the root.
    contact_candidates : Tuple[ContactCandidate, ...]
        Points attached to joints that may touch the scene.
    version : int
        Version of the joint table.
    """

    joint_names: Tuple[str, ...]
    parents: Tuple[int, ...]
    offsets: np.ndarray
    shape_groups: Tuple[int, ...]
    contact_candidates: Tuple[ContactCandidate, ...]
    version: int = SKELETON_VERSION

    def __post_init__(self):
        offsets = np.array(self.offsets, dtype=np.float64)
        joint_count = len(self.joint_names)
        if offsets.shape != (joint_count, 3):
            raise DimensionMismatch(f"offsets must be ({joint_count}, 3), got {offsets.shape}")
        if len(self.parents) != joint_count or len(self.shape_groups) != joint_count:
            raise DimensionMismatch("parents and shape_groups need one entry per joint")
        if joint_count == 0 or self.parents[0] != -1:
            raise ValueError("the first joint must be the root")
        for joint, parent in enumerate(self.parents[1:], start=1):
            if not 0 <= parent < joint:
                raise ValueError(f"parent of joint {joint} must be an earlier joint, got {parent}")
            if np.linalg.norm(offsets[joint]) <= 0.0:
                raise ValueError(f"bone ending at joint {self.joint_names[joint]} has zero rest length")
        if not self.contact_candidates:
            raise ValueError("a skeleton needs at least one contact candidate")
        for candidate in self.contact_candidates:
            if not 0 <= candidate.joint < joint_count:
                raise ValueError(f"contact candidate attached to unknown joint {candidate.joint}")
        offsets.setflags(write=False)
        object.__setattr__(self, "offsets", offsets)
        object.__setattr__(self, "parents", tuple(int(p) for p in self.parents))
        object.__setattr__(self, "shape_groups", tuple(int(g) for g in self.shape_groups))
        object.__setattr__(self, "joint_names", tuple(self.joint_names))
        object.__setattr__(self, "contact_candidates", tuple(self.contact_candidates))

    @property
    def joint_count(self) -> int:
        return len(self.joint_names)

    @property
    def shape_count(self) -> int:
        return max(self.shape_groups) + 1

    def index(self, name: str) -> int:
        return self.joint_names.index(name)

    def indices(self, names: Sequence[str]) -> List[int]:
        return [self.index(name) for name in names if name in self.joint_names]

    def candidates(self, groups: Optional[Sequence[str]] = None) -> Tuple[ContactCandidate, ...]:
        """
        Contact candidates belonging to the given groups (all if None).

        Parameters
        ----------
        groups : Optional[Sequence[str]]
            contact group names

        Returns
        -------
        Tuple[ContactCandidate, ...]
            candidates in table order

        Raises
        ------
        ValueError
            if no candidate belongs to the requested groups
        """
        if groups is None:
            return self.contact_candidates
        selected = tuple(c for c in self.contact_candidates if c.group in groups)
        if not selected:
            raise ValueError(f"no contact candidate in groups {list(groups)}")
        return selected

    def to_dict(self) -> Dict:
        return {
            "version": self.version,
            "joint_names": list(self.joint_names),
            "parents": list(self.parents),
            "offsets": [list(map(float, row)) for row in self.offsets],
            "shape_groups": list(self.shape_groups),
            "contact_candidates": [
                {"joint": c.joint, "offset": list(map(float, c.offset)), "group": c.group}
                for c in self.contact_candidates
            ],
        }

    @classmethod
    def from_dict(cls, data: Dict) -> "SkeletonDef":
        return cls(
            joint_names=tuple(data["joint_names"]),
            parents=tuple(data["parents"]),
            offsets=np.array(data["offsets"], dtype=np.float64),
            shape_groups=tuple(data["shape_groups"]),
            contact_candidates=tuple(
                ContactCandidate(int(c["joint"]), tuple(float(v) for v in c["offset"]), str(c["group"]))
                for c in data["contact_candidates"]
            ),
            version=int(data["version"]),
        )


DEFAULT_SKELETON = SkeletonDef(
    joint_names=JOINT_NAMES,
    parents=JOINT_PARENTS,
    offsets=np.array(REST_OFFSETS),
    shape_groups=SHAPE_GROUPS,
    contact_candidates=DEFAULT_CONTACT_CANDIDATES,
)


@dataclasses.dataclass(frozen=True, eq=False)
class ShapeParams:
    """Log bone-length multipliers, one per limb group."""

    beta: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "beta", _finite(self.beta, "beta").reshape(-1))


@dataclasses.dataclass(frozen=True, eq=False)
class PoseParams:
    """Per-joint axis-angle rotations, shape (J, 3)."""

    theta: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "theta", _finite(self.theta, "theta").reshape(-1, 3))


@dataclasses.dataclass(frozen=True, eq=False)
class RootTransform:
    """Root translation (camera frame, meters) and root orientation (axis-angle)."""

    translation: np.ndarray
    orientation: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "translation", _finite(self.translation, "translation").reshape(3))
        object.__setattr__(self, "orientation", _finite(self.orientation, "orientation").reshape(3))


def _finite(values, name: str) -> np.ndarray:
    array = np.array(values, dtype=np.float64)
    if not np.all(np.isfinite(array)):
        raise ValueError(f"{name} must be finite")
    array.setflags(write=False)
    return array


def zero_shape(skeleton: SkeletonDef = DEFAULT_SKELETON) -> ShapeParams:
    return ShapeParams(np.zeros(skeleton.shape_count))


def rest_pose(skeleton: SkeletonDef = DEFAULT_SKELETON) -> PoseParams:
    return PoseParams(np.zeros((skeleton.joint_count, 3)))


def batch_forward_kinematics(
    skeleton: SkeletonDef,
    beta: torch.Tensor,
    theta: torch.Tensor,
    root_translation: torch.Tensor,
    root_orientation: torch.Tensor,
) -> Tuple[torch.Tensor, torch.Tensor]:
    """
    Differentiable forward kinematics over a batch of frames.

    Parameters
    ----------
    skeleton : SkeletonDef
        kinematic tree
    beta : torch.Tensor
        (T, B) log bone-length multipliers
    theta : torch.Tensor
        (T, J, 3) local axis-angle rotations
    root_translation : torch.Tensor
        (T, 3) root position in the camera frame
    root_orientation : torch.Tensor
        (T, 3) root axis-angle orientation

    Returns
    -------
    Tuple[torch.Tensor, torch.Tensor]
        (T, J, 3) joint positions and (T, J, 3, 3) global joint rotations
    """
    frames = beta.shape[0]
    ones = torch.ones((frames, 1), dtype=beta.dtype)
    # the root has no bone, it reads the padded column of ones
    groups = [group if group >= 0 else skeleton.shape_count for group in skeleton.shape_groups]
    scale = torch.cat([torch.exp(beta), ones], dim=1)[:, groups]
    bones = to_tensor(skeleton.offsets)[None] * scale[..., None]

    local = axis_angle_to_matrix(theta)
    rotations = [axis_angle_to_matrix(root_orientation) @ local[:, 0]]
    positions = [root_translation]
    for joint in range(1, skeleton.joint_count):
        parent = skeleton.parents[joint]
        positions.append(positions[parent] + (rotations[parent] @ bones[:, joint, :, None])[..., 0])
        rotations.append(rotations[parent] @ local[:, joint])
    return torch.stack(positions, dim=1), torch.stack(rotations, dim=1)


def batch_contact_points(
    joints: torch.Tensor,
    rotations: torch.Tensor,
    candidates: Sequence[ContactCandidate],
) -> torch.Tensor:
    """
    Contact candidate positions from posed joints.

    Parameters
    ----------
    joints : torch.Tensor
        (T, J, 3) joint positions
    rotations : torch.Tensor
        (T, J, 3, 3) global joint rotations
    candidates : Sequence[ContactCandidate]
        the candidates to place

    Returns
    -------
    torch.Tensor
        (T, C, 3) candidate positions
    """
    index = [candidate.joint for candidate in candidates]
    offsets = to_tensor([candidate.offset for candidate in candidates])
    return joints[:, index] + (rotations[:, index] @ offsets[None, :, :, None])[..., 0]


def _check_dimensions(skeleton: SkeletonDef, shape: ShapeParams, pose: PoseParams):
    if shape.beta.shape != (skeleton.shape_count,):
        raise DimensionMismatch(f"expected {skeleton.shape_count} shape parameters, got {shape.beta.shape[0]}")
    if pose.theta.shape != (skeleton.joint_count, 3):
        raise DimensionMismatch(f"expected {skeleton.joint_count} joint rotations, got {pose.theta.shape[0]}")


def _posed(
    skeleton: SkeletonDef, shape: ShapeParams, pose: PoseParams, root: RootTransform
) -> Tuple[torch.Tensor, torch.Tensor]:
    _check_dimensions(skeleton, shape, pose)
    with torch.no_grad():
        return batch_forward_kinematics(
            skeleton,
            to_tensor(shape.beta[None]),
            to_tensor(pose.theta[None]),
            to_tensor(root.translation[None]),
            to_tensor(root.orientation[None]),
        )


def forward_kinematics(skeleton: SkeletonDef, shape: ShapeParams, pose: PoseParams, root: RootTransform) -> np.ndarray:
    """
    Joint positions of one body state in the camera frame.

    Parameters
    ----------
    skeleton : SkeletonDef
        kinematic tree
    shape : ShapeParams
        bone-length multipliers
    pose : PoseParams
        local joint rotations
    root : RootTransform
        root placement

    Returns
    -------
    np.ndarray
        (J, 3) joint positions

    Raises
    ------
    DimensionMismatch
        if the parameters do not match the skeleton
    """
    joints, _ = _posed(skeleton, shape, pose, root)
    return joints[0].numpy()


def contact_points(
    skeleton: SkeletonDef,
    shape: ShapeParams,
    pose: PoseParams,
    root: RootTransform,
    groups: Optional[Sequence[str]] = None,
) -> np.ndarray:
    """
    Contact candidate positions of one body state in the camera frame.

    Parameters
    ----------
    skeleton : SkeletonDef
        kinematic tree
    shape : ShapeParams
        bone-length multipliers
    pose : PoseParams
        local joint rotations
    root : RootTransform
        root placement
    groups : Optional[Sequence[str]]
        contact groups to include, all candidates if None

    Returns
    -------
    np.ndarray
        (C, 3) candidate positions
    """
    joints, rotations = _posed(skeleton, shape, pose, root)
    with torch.no_grad():
        return batch_contact_points(joints, rotations, skeleton.candidates(groups))[0].numpy()


def consolidate_shape(shapes: Sequence[ShapeParams]) -> ShapeParams:
    """
    Component-wise median of per-frame shapes; for an even count the midpoint
    of the two middle values.

    Parameters
    ----------
    shapes : Sequence[ShapeParams]
        per-frame shape estimates

    Returns
    -------
    ShapeParams
        the consolidated shape

    Raises
    ------
    EmptyInput
        if no shape is given
    DimensionMismatch
        if the shapes differ in size
    """
    if len(shapes) == 0:
        raise EmptyInput("cannot consolidate an empty list of shapes")
    sizes = {shape.beta.shape for shape in shapes}
    if len(sizes) != 1:
        raise DimensionMismatch(f"shapes differ in size: {sorted(sizes)}")
    return ShapeParams(np.median(np.stack([shape.beta for shape in shapes]), axis=0))


def body_height(skeleton: SkeletonDef, shape: ShapeParams) -> float:
    """
    Head-to-ankle distance of the rest pose, the ankle being the midpoint of both ankles.

    Parameters
    ----------
    skeleton : SkeletonDef
        kinematic tree
    shape : ShapeParams
        bone-length multipliers

    Returns
    -------
    float
        body height (meters)
    """
    root = RootTransform(np.zeros(3), np.zeros(3))
    joints = forward_kinematics(skeleton, shape, rest_pose(skeleton), root)
    ankles = joints[skeleton.indices(("left_ankle", "right_ankle"))].mean(axis=0)
    return float(np.linalg.norm(joints[skeleton.index("head")] - ankles))


def bone_mesh(skeleton: SkeletonDef, joints: np.ndarray, radius: float = 0.04, sides: int = 8) -> Tuple[np.ndarray, np.ndarray]:
    """
    Prism-per-bone surface of a posed body, used only for OBJ export.

    Parameters
    ----------
    skeleton : SkeletonDef
        kinematic tree
    joints : np.ndarray
        (J, 3) joint positions
    radius : float, optional
        prism radius, by default 0.04
    sides : int, optional
        number of prism sides, by default 8

    Returns
    -------
    Tuple[np.ndarray, np.ndarray]
        vertices (N, 3) and triangle faces (M, 3), 0-based
    """
    angles = np.linspace(0.0, 2.0 * np.pi, sides, endpoint=False)
    vertices, faces = [], []
    for joint in range(1, skeleton.joint_count):
        start, end = joints[skeleton.parents[joint]], joints[joint]
        axis = end - start
        axis /= np.linalg.norm(axis)
        helper = np.array([1.0, 0.0, 0.0]) if abs(axis[0]) < 0.9 else np.array([0.0, 1.0, 0.0])
        u = np.cross(axis, helper)
        u /= np.linalg.norm(u)
        v = np.cross(axis, u)
        ring = radius * (np.cos(angles)[:, None] * u + np.sin(angles)[:, None] * v)
        base = len(vertices) * sides
        vertices.extend([start + ring, end + ring])
        for k in range(sides):
            a, b = base + k, base + (k + 1) % sides
            faces.append((a, b, b + sides))
            faces.append((a, b + sides, a + sides))
    return np.concatenate(vertices), np.array(faces, dtype=np.int64)
