"""
Sinusoidal gait primitives in the world frame (z up, walking along +x).
"""

import dataclasses
from typing import Dict, Tuple

import numpy as np
from scipy.spatial.transform import Rotation

from ..core.body import PoseParams, RootTransform, ShapeParams, SkeletonDef, contact_points, forward_kinematics

# body axes (x left, y up, z forward) expressed in the world: forward is +x, up is +z
BODY_TO_WORLD = Rotation.from_matrix(np.array([[0.0, 0.0, 1.0], [1.0, 0.0, 0.0], [0.0, 1.0, 0.0]]))

# sole points closer to the ground than this are in stance (meters)
STANCE_HEIGHT = 0.01


class MotionType:
    walk = "walk"
    jog = "jog"
    throw_catch = "throw_catch"

    @classmethod
    def values(cls):
        return (cls.walk, cls.jog, cls.throw_catch)


@dataclasses.dataclass(frozen=True)
class GaitParams:
    """
    Amplitudes of a gait primitive (radians unless noted).

    Attributes
    ----------
    cadence : float
        gait cycles per second
    speed : float
        forward speed (m/s)
    hip : float
        hip flexion amplitude
    knee : float
        knee flexion during swing
    shoulder : float
        arm swing amplitude
    elbow : float
        constant elbow flexion
    lean : float
        forward lean of the spine
    throw : float
        extra forward raise of the right arm, oscillating
    """

    cadence: float
    speed: float
    hip: float
    knee: float
    shoulder: float
    elbow: float
    lean: float = 0.0
    throw: float = 0.0


GAITS: Dict[str, GaitParams] = {
    MotionType.walk: GaitParams(cadence=1.0, speed=1.2, hip=0.35, knee=1.0, shoulder=0.3, elbow=0.3, lean=0.05),
    MotionType.jog: GaitParams(cadence=1.4, speed=2.5, hip=0.5, knee=1.4, shoulder=0.5, elbow=1.2, lean=0.15),
    MotionType.throw_catch: GaitParams(
        cadence=0.5, speed=0.1, hip=0.05, knee=0.05, shoulder=0.15, elbow=0.6, throw=1.2
    ),
}


def gait_pose(skeleton: SkeletonDef, gait: GaitParams, phase: float) -> np.ndarray:
    """
    Local joint rotations at a gait phase.

    Parameters
    ----------
    skeleton : SkeletonDef
        kinematic tree
    gait : GaitParams
        amplitudes
    phase : float
        gait phase (radians), the left leg swings forward while sin(phase) > 0

    Returns
    -------
    np.ndarray
        (J, 3) axis-angle rotations
    """
    theta = np.zeros((skeleton.joint_count, 3))
    # a negative rotation about the left axis swings a hanging limb forward, a positive one tilts the spine forward
    for side, shift in (("left", 0.0), ("right", np.pi)):
        leg = phase + shift
        theta[skeleton.index(f"{side}_hip"), 0] = -gait.hip * np.sin(leg)
        theta[skeleton.index(f"{side}_knee"), 0] = gait.knee * max(0.0, np.sin(leg))
        # feet stay parallel to the pelvis
        theta[skeleton.index(f"{side}_ankle"), 0] = -theta[skeleton.index(f"{side}_hip"), 0] - theta[skeleton.index(f"{side}_knee"), 0]
        theta[skeleton.index(f"{side}_shoulder"), 0] = gait.shoulder * np.sin(leg)
        theta[skeleton.index(f"{side}_elbow"), 0] = -gait.elbow
    theta[skeleton.index("spine"), 0] = gait.lean
    theta[skeleton.index("right_shoulder"), 0] -= gait.throw * 0.5 * (1.0 + np.sin(phase))
    return theta


@dataclasses.dataclass
class Motion:
    """
    World-frame ground-truth motion.

    Attributes
    ----------
    shape : ShapeParams
        body shape shared by every frame
    poses : np.ndarray
        (T, J, 3) local joint rotations
    roots : np.ndarray
        (T, 3) pelvis positions in the world (meters)
    orientation : Rotation
        body-to-world rotation of the root, constant over the sequence
    stance : np.ndarray
        (T, C) contact candidates touching the ground, aligned with skeleton.contact_candidates
    """

    shape: ShapeParams
    poses: np.ndarray
    roots: np.ndarray
    orientation: Rotation
    stance: np.ndarray

    @property
    def frames(self) -> int:
        return len(self.poses)


def synthesize_motion(
    skeleton: SkeletonDef,
    motion: str,
    frames: int,
    fps: float,
    shape: ShapeParams,
    phase: float = 0.0,
) -> Motion:
    """
    Gait whose lowest sole point touches the ground plane z = 0 in every frame.

    Parameters
    ----------
    skeleton : SkeletonDef
        kinematic tree
    motion : str
        see MotionType
    frames : int
        number of frames
    fps : float
        frame rate
    shape : ShapeParams
        body shape
    phase : float, optional
        gait phase of the first frame, by default 0.0

    Returns
    -------
    Motion
        the motion
    """
    gait = GAITS[motion]
    sole_groups = tuple(sorted({c.group for c in skeleton.contact_candidates if c.group.endswith("sole")}))
    sole = np.array([c.group in sole_groups for c in skeleton.contact_candidates])
    at_origin = RootTransform(np.zeros(3), BODY_TO_WORLD.as_rotvec())
    poses, roots, stance = [], [], []
    for t in range(frames):
        seconds = t / fps
        theta = gait_pose(skeleton, gait, phase + 2.0 * np.pi * gait.cadence * seconds)
        candidates = contact_points(skeleton, shape, PoseParams(theta), at_origin)
        height = -candidates[sole, 2].min()
        root = np.array([gait.speed * seconds, 0.0, height])
        poses.append(theta)
        roots.append(root)
        stance.append(sole & (candidates[:, 2] + height < STANCE_HEIGHT))
    return Motion(shape, np.stack(poses), np.stack(roots), BODY_TO_WORLD, np.stack(stance))


def joints_world(skeleton: SkeletonDef, motion: Motion, frame: int) -> np.ndarray:
    root = RootTransform(motion.roots[frame], motion.orientation.as_rotvec())
    return forward_kinematics(skeleton, motion.shape, PoseParams(motion.poses[frame]), root)


def to_camera(motion: Motion, frame: int, camera_rotation: np.ndarray, camera_translation: np.ndarray) -> Tuple[np.ndarray, np.ndarray]:
    """
    Root translation and orientation of a frame in a camera given its camera-to-world transform (meters).

    Returns
    -------
    Tuple[np.ndarray, np.ndarray]
        root translation and axis-angle orientation in the camera frame
    """
    world_to_camera = Rotation.from_matrix(camera_rotation).inv()
    translation = world_to_camera.apply(motion.roots[frame] - camera_translation)
    orientation = (world_to_camera * motion.orientation).as_rotvec()
    return translation, orientation
