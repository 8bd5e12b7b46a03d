"""
Head-mounted camera trajectory of the wearer facing the subject.
"""

from typing import List

import numpy as np
from scipy.spatial.transform import Rotation

from ..core.geometry import Pose3, look_at


def camera_trajectory(
    subject: np.ndarray,
    rng: np.random.Generator,
    distance: float = 3.2,
    height: float = 1.6,
    azimuth: float = np.radians(20.0),
    target_height: float = 1.0,
    jitter: float = 0.03,
    jitter_rate: float = 0.01,
) -> List[Pose3]:
    """
    Camera-to-world poses (meters) keeping the subject in view with bounded head rotation noise.

    Parameters
    ----------
    subject : np.ndarray
        (T, 3) subject root positions; the subject walks along +x
    rng : np.random.Generator
        random stream, one (3,) draw per frame
    distance : float, optional
        horizontal distance to the subject, by default 3.2
    height : float, optional
        camera height above the ground, by default 1.6
    azimuth : float, optional
        angle of the camera around the subject measured from +x, by default 20 degrees
    target_height : float, optional
        height of the look-at point on the subject, by default 1.0
    jitter : float, optional
        bound of the per-axis rotation offset (radians), by default 0.03
    jitter_rate : float, optional
        bound of the per-axis rotation change between frames (radians), by default 0.01

    Returns
    -------
    List[Pose3]
        per-frame camera-to-world transforms
    """
    direction = np.array([np.cos(azimuth), np.sin(azimuth), 0.0])
    offset = np.zeros(3)
    poses = []
    for root in np.asarray(subject, dtype=np.float64):
        offset = np.clip(offset + rng.uniform(-jitter_rate, jitter_rate, 3), -jitter, jitter)
        eye = np.array([root[0], root[1], 0.0]) + distance * direction + np.array([0.0, 0.0, height])
        target = np.array([root[0], root[1], target_height])
        pose = look_at(eye, target)
        rotation = pose.scipy_rotation * Rotation.from_rotvec(offset)
        poses.append(Pose3(rotation.as_quat(), pose.translation))
    return poses


def perturb(poses: List[Pose3], rng: np.random.Generator, rotation_std: float, translation_std: float) -> List[Pose3]:
    """
    Structure-from-motion style noise on a camera trajectory; one (6,) draw per frame.

    Parameters
    ----------
    poses : List[Pose3]
        camera-to-world transforms
    rng : np.random.Generator
        random stream
    rotation_std : float
        per-axis rotation noise (radians)
    translation_std : float
        per-axis translation noise (pose units)

    Returns
    -------
    List[Pose3]
        perturbed transforms
    """
    noisy = []
    for pose in poses:
        draw = rng.standard_normal(6)
        rotation = pose.scipy_rotation * Rotation.from_rotvec(rotation_std * draw[:3])
        noisy.append(Pose3(rotation.as_quat(), pose.translation + translation_std * draw[3:]))
    return noisy


def scaled(poses: List[Pose3], factor: float) -> List[Pose3]:
    return [Pose3(pose.rotation, pose.translation * factor) for pose in poses]
