import logging
from typing import Optional, Sequence

import numpy as np

from ..core.scene import SpatialIndex
from ..energy.terms import SequenceTooShort

logger = logging.getLogger(__name__)

# a frame is partially observable from this fraction of undetected joints on
PARTIAL_FRACTION = 0.25


class EmptySubset(ValueError):
    def __init__(self, message):
        super().__init__(message)


def partial_frames(confidence: np.ndarray, fraction: float = PARTIAL_FRACTION) -> np.ndarray:
    """
    Frames in which at least the given fraction of joints was not detected.

    Parameters
    ----------
    confidence : np.ndarray
        (T, J) detection confidences
    fraction : float, optional
        threshold on the share of zero confidences, by default 0.25

    Returns
    -------
    np.ndarray
        frame indices
    """
    missing = np.mean(np.asarray(confidence) == 0.0, axis=1)
    return np.flatnonzero(missing >= fraction)


def uniform_frames(frames: int, stride: int = 1) -> np.ndarray:
    return np.arange(0, frames, max(1, int(stride)))


def pje(
    predicted: np.ndarray,
    annotations: np.ndarray,
    visible: np.ndarray,
    frames: Optional[Sequence[int]] = None,
) -> float:
    """
    Mean 2D distance between projected estimate joints and annotated-visible joints.

    Parameters
    ----------
    predicted : np.ndarray
        (T, J, 2) projected estimate
    annotations : np.ndarray
        (T, J, 2) reference positions
    visible : np.ndarray
        (T, J) annotation visibility flags
    frames : Optional[Sequence[int]]
        frames to average over, all if None

    Returns
    -------
    float
        error in pixels

    Raises
    ------
    EmptySubset
        if the subset holds no visible joint
    """
    frames = np.arange(len(predicted)) if frames is None else np.asarray(frames, dtype=np.int64)
    mask = np.asarray(visible, dtype=bool)[frames]
    if not mask.any():
        raise EmptySubset("no annotated joint in the selected frames")
    errors = np.linalg.norm(np.asarray(predicted)[frames] - np.asarray(annotations)[frames], axis=-1)
    return float(errors[mask].mean())


def smoothness(joints_world: np.ndarray, scale: float, body_height: float) -> float:
    """
    Mean acceleration magnitude of world joint trajectories, positions divided by scale * body_height.

    Parameters
    ----------
    joints_world : np.ndarray
        (T, J, 3) world-frame joints
    scale : float
        body-vs-scene scale of the estimate
    body_height : float
        rest-pose height of the body

    Returns
    -------
    float
        body heights per frame squared

    Raises
    ------
    SequenceTooShort
        with fewer than 3 frames
    """
    joints_world = np.asarray(joints_world, dtype=np.float64)
    if len(joints_world) < 3:
        raise SequenceTooShort(f"smoothness needs at least 3 frames, got {len(joints_world)}")
    normalized = joints_world / (scale * body_height)
    acceleration = normalized[2:] - 2.0 * normalized[1:-1] + normalized[:-2]
    return float(np.linalg.norm(acceleration, axis=-1).mean())


def contact_distance(points_world: np.ndarray, index: SpatialIndex, mask: Optional[np.ndarray] = None) -> float:
    """
    Mean over frames of the mean distance of contact candidates to their nearest scene vertex.

    Parameters
    ----------
    points_world : np.ndarray
        (T, C, 3) world-frame contact candidates
    index : SpatialIndex
        scene index
    mask : Optional[np.ndarray]
        (T, C) candidates to include, all if None; frames without any are skipped

    Returns
    -------
    float
        distance in scene units, NaN if the mask selects nothing
    """
    points_world = np.asarray(points_world, dtype=np.float64)
    _, distances = index.query(points_world.reshape(-1, 3))
    distances = distances.reshape(points_world.shape[:2])
    if mask is None:
        return float(distances.mean(axis=1).mean())
    mask = np.asarray(mask, dtype=bool)
    counts = mask.sum(axis=1)
    used = counts > 0
    if not used.any():
        return float("nan")
    per_frame = np.where(mask, distances, 0.0).sum(axis=1)[used] / counts[used]
    return float(per_frame.mean())


def joint3d_error(estimated: np.ndarray, truth: np.ndarray, mask: np.ndarray) -> float:
    """
    Mean 3D distance between estimated and true camera-frame joints over the masked entries.

    Parameters
    ----------
    estimated, truth : np.ndarray
        (T, J, 3) camera-frame joints in body units
    mask : np.ndarray
        (T, J) entries to include

    Returns
    -------
    float
        error in body units

    Raises
    ------
    EmptySubset
        if the mask selects nothing
    """
    mask = np.asarray(mask, dtype=bool)
    if not mask.any():
        raise EmptySubset("no joint selected for the 3D error")
    errors = np.linalg.norm(np.asarray(estimated) - np.asarray(truth), axis=-1)
    return float(errors[mask].mean())


def scale_rel_error(scale: float, true_scale: float) -> float:
    return abs(scale - true_scale) / true_scale
