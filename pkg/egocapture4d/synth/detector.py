"""
Stand-in 2D joint detector: projection, frustum test, pixel noise, confidences and dropout.
"""

import dataclasses
from typing import Tuple

import numpy as np

from ..core.geometry import CameraIntrinsics, project_points
from ..energy.terms import Observation2D


@dataclasses.dataclass(frozen=True)
class Frustum:
    """
    Image region a joint must project into to be detectable (pixels), in front of the camera.

    Attributes
    ----------
    u_min, u_max : float
        horizontal bounds
    v_min, v_max : float
        vertical bounds (v grows downwards)
    """

    u_min: float
    u_max: float
    v_min: float
    v_max: float

    @classmethod
    def image(cls, size: Tuple[int, int]) -> "Frustum":
        width, height = size
        return cls(0.0, float(width), 0.0, float(height))

    def contains(self, pixels: np.ndarray, valid: np.ndarray) -> np.ndarray:
        pixels = np.asarray(pixels, dtype=np.float64)
        inside = (
            (pixels[..., 0] >= self.u_min)
            & (pixels[..., 0] <= self.u_max)
            & (pixels[..., 1] >= self.v_min)
            & (pixels[..., 1] <= self.v_max)
        )
        return inside & valid

    def to_list(self):
        return [self.u_min, self.u_max, self.v_min, self.v_max]


@dataclasses.dataclass(frozen=True)
class NoiseModel:
    """
    Detector noise.

    Attributes
    ----------
    std : float
        per-axis Gaussian pixel noise
    dropout : float
        probability that a visible joint is not detected
    confidence : Tuple[float, float]
        range of the uniform detection confidence
    """

    std: float = 0.0
    dropout: float = 0.0
    confidence: Tuple[float, float] = (0.6, 1.0)

    def __post_init__(self):
        if not self.std >= 0.0:
            raise ValueError(f"noise std must be non-negative, got {self.std}")
        if not 0.0 <= self.dropout < 1.0:
            raise ValueError(f"dropout must lie in [0, 1), got {self.dropout}")
        low, high = self.confidence
        if not 0.0 < low <= high <= 1.0:
            raise ValueError(f"confidence range must lie in (0, 1], got {self.confidence}")


def detect(
    joints_cam: np.ndarray,
    intrinsics: CameraIntrinsics,
    noise: NoiseModel,
    frustum: Frustum,
    rng: np.random.Generator,
) -> Observation2D:
    """
    Detections of one frame. Every call draws (J, 2) noise, (J,) confidences and (J,) dropout
    values from rng, whatever the visibility, so the random stream is independent of the scene.

    Parameters
    ----------
    joints_cam : np.ndarray
        (J, 3) camera-frame joints
    intrinsics : CameraIntrinsics
        camera intrinsics
    noise : NoiseModel
        detector noise
    frustum : Frustum
        detectable image region
    rng : np.random.Generator
        random stream

    Returns
    -------
    Observation2D
        positions and confidences; undetected joints get confidence 0
    """
    joints_cam = np.asarray(joints_cam, dtype=np.float64)
    count = len(joints_cam)
    pixel_noise = rng.standard_normal((count, 2))
    confidence = rng.uniform(noise.confidence[0], noise.confidence[1], count)
    dropped = rng.random(count) < noise.dropout

    pixels, valid = project_points(intrinsics, joints_cam)
    visible = frustum.contains(pixels, valid) & ~dropped
    if noise.std > 0.0:
        pixels = pixels + noise.std * pixel_noise
    return Observation2D(pixels, np.where(visible, confidence, 0.0))


def annotate(joints_cam: np.ndarray, intrinsics: CameraIntrinsics, frustum: Frustum) -> Tuple[np.ndarray, np.ndarray]:
    """
    Noise-free reference annotation of a frame.

    Returns
    -------
    Tuple[np.ndarray, np.ndarray]
        (J, 2) exact projections and (J,) in-frustum flags
    """
    pixels, valid = project_points(intrinsics, joints_cam)
    return pixels, frustum.contains(pixels, valid)
