import dataclasses
from typing import Iterable, Tuple

import numpy as np
from scipy.spatial.transform import Rotation

# points closer to the image plane than this are treated as behind the camera
MIN_DEPTH = 1e-6


class BehindCamera(ValueError):
    def __init__(self, message):
        super().__init__(message)


def _frozen(values: Iterable[float], size: int, name: str) -> np.ndarray:
    array = np.array(values, dtype=np.float64).reshape(-1)
    if array.shape != (size,):
        raise ValueError(f"{name} must have {size} components, got {array.shape[0]}")
    if not np.all(np.isfinite(array)):
        raise ValueError(f"{name} must be finite")
    array.setflags(write=False)
    return array


@dataclasses.dataclass(frozen=True, eq=False)
class Pose3:
    """
    Rigid transform in 3D.

    Attributes
    ----------
    rotation : np.ndarray
        Unit quaternion, scalar last (x, y, z, w) as in scipy.
    translation : np.ndarray
        Translation 3-vector in scene units.
    """

    rotation: np.ndarray
    translation: np.ndarray

    def __post_init__(self):
        quaternion = _frozen(self.rotation, 4, "rotation").copy()
        norm = np.linalg.norm(quaternion)
        if norm == 0.0:
            raise ValueError("rotation quaternion must not be zero")
        quaternion /= norm
        quaternion.setflags(write=False)
        object.__setattr__(self, "rotation", quaternion)
        object.__setattr__(self, "translation", _frozen(self.translation, 3, "translation"))

    @classmethod
    def identity(cls) -> "Pose3":
        return cls(np.array([0.0, 0.0, 0.0, 1.0]), np.zeros(3))

    @classmethod
    def from_rotvec(cls, rotvec: Iterable[float], translation: Iterable[float]) -> "Pose3":
        """
        Build a pose from an axis-angle rotation vector and a translation.

        Parameters
        ----------
        rotvec : Iterable[float]
            axis-angle 3-vector (radians)
        translation : Iterable[float]
            translation 3-vector

        Returns
        -------
        Pose3
            the pose
        """
        return cls(Rotation.from_rotvec(np.array(rotvec, dtype=np.float64)).as_quat(), translation)

    @classmethod
    def from_matrix(cls, matrix: np.ndarray) -> "Pose3":
        matrix = np.asarray(matrix, dtype=np.float64)
        return cls(Rotation.from_matrix(matrix[:3, :3]).as_quat(), matrix[:3, 3])

    @property
    def scipy_rotation(self) -> Rotation:
        # scipy rejects read-only buffers
        return Rotation.from_quat(np.array(self.rotation))

    @property
    def rotation_matrix(self) -> np.ndarray:
        return self.scipy_rotation.as_matrix()

    @property
    def rotvec(self) -> np.ndarray:
        return self.scipy_rotation.as_rotvec()

    def matrix(self) -> np.ndarray:
        """
        Homogeneous 4x4 matrix of the transform.

        Returns
        -------
        np.ndarray
            4x4 matrix
        """
        out = np.eye(4)
        out[:3, :3] = self.rotation_matrix
        out[:3, 3] = self.translation
        return out

    def inverse(self) -> "Pose3":
        return inverse(self)

    def __matmul__(self, other: "Pose3") -> "Pose3":
        return compose(self, other)

    def __repr__(self):
        return f"<Pose3 rotation={self.rotation.tolist()} translation={self.translation.tolist()}>"


@dataclasses.dataclass(frozen=True, eq=False)
class CameraIntrinsics:
    """
    Pinhole intrinsics.

    Attributes
    ----------
    focal : np.ndarray
        (f_x, f_y) in pixels, both positive.
    principal_point : np.ndarray
        (c_x, c_y) in pixels.
    """

    focal: np.ndarray
    principal_point: np.ndarray

    def __post_init__(self):
        focal = _frozen(self.focal, 2, "focal")
        if np.any(focal <= 0.0):
            raise ValueError(f"focal components must be positive, got {focal.tolist()}")
        object.__setattr__(self, "focal", focal)
        object.__setattr__(self, "principal_point", _frozen(self.principal_point, 2, "principal_point"))

    def matrix(self) -> np.ndarray:
        return np.array(
            [
                [self.focal[0], 0.0, self.principal_point[0]],
                [0.0, self.focal[1], self.principal_point[1]],
                [0.0, 0.0, 1.0],
            ]
        )


def compose(a: Pose3, b: Pose3) -> Pose3:
    """
    Compose two transforms, the result applies b first and then a.

    Parameters
    ----------
    a : Pose3
        outer transform
    b : Pose3
        inner transform

    Returns
    -------
    Pose3
        a ∘ b
    """
    rot_a = a.scipy_rotation
    rotation = rot_a * b.scipy_rotation
    return Pose3(rotation.as_quat(), rot_a.apply(b.translation) + a.translation)


def inverse(transform: Pose3) -> Pose3:
    rot_inv = transform.scipy_rotation.inv()
    return Pose3(rot_inv.as_quat(), -rot_inv.apply(transform.translation))


def apply(transform: Pose3, point: Iterable[float]) -> np.ndarray:
    """
    Rotate then translate a point (or an (N, 3) array of points).

    Parameters
    ----------
    transform : Pose3
        the transform
    point : Iterable[float]
        3-vector or (N, 3) array

    Returns
    -------
    np.ndarray
        transformed point(s)
    """
    point = np.asarray(point, dtype=np.float64)
    return transform.scipy_rotation.apply(point) + transform.translation


def project(intrinsics: CameraIntrinsics, point_cam: Iterable[float]) -> np.ndarray:
    """
    Pinhole projection of a camera-frame point.

    Parameters
    ----------
    intrinsics : CameraIntrinsics
        camera intrinsics
    point_cam : Iterable[float]
        point in the camera frame (x right, y down, z forward)

    Returns
    -------
    np.ndarray
        pixel coordinates (u, v)

    Raises
    ------
    BehindCamera
        if the depth is not above MIN_DEPTH
    """
    x, y, z = np.asarray(point_cam, dtype=np.float64)
    if z <= MIN_DEPTH:
        raise BehindCamera(f"point at depth {z} is behind the camera")
    return np.array(
        [
            intrinsics.focal[0] * x / z + intrinsics.principal_point[0],
            intrinsics.focal[1] * y / z + intrinsics.principal_point[1],
        ]
    )


def project_points(intrinsics: CameraIntrinsics, points_cam: np.ndarray) -> Tuple[np.ndarray, np.ndarray]:
    """
    Project an array of points without raising, masking the ones behind the camera.

    Parameters
    ----------
    intrinsics : CameraIntrinsics
        camera intrinsics
    points_cam : np.ndarray
        (..., 3) camera-frame points

    Returns
    -------
    Tuple[np.ndarray, np.ndarray]
        (..., 2) pixel coordinates (zeros where invalid) and the (...) validity mask
    """
    points_cam = np.asarray(points_cam, dtype=np.float64)
    depth = points_cam[..., 2]
    valid = depth > MIN_DEPTH
    safe_depth = np.where(valid, depth, 1.0)
    pixels = points_cam[..., :2] / safe_depth[..., None] * intrinsics.focal + intrinsics.principal_point
    pixels = np.where(valid[..., None], pixels, 0.0)
    return pixels, valid


def look_at(eye: np.ndarray, target: np.ndarray, up: Iterable[float] = (0.0, 0.0, 1.0)) -> Pose3:
    """
    Camera-to-world pose of a camera at eye looking at target (x right, y down, z forward).

    Parameters
    ----------
    eye : np.ndarray
        camera center in world coordinates
    target : np.ndarray
        point the optical axis passes through
    up : Iterable[float]
        world up direction

    Returns
    -------
    Pose3
        camera-to-world transform
    """
    eye = np.asarray(eye, dtype=np.float64)
    forward = np.asarray(target, dtype=np.float64) - eye
    forward /= np.linalg.norm(forward)
    right = np.cross(forward, np.asarray(up, dtype=np.float64))
    right /= np.linalg.norm(right)
    down = np.cross(forward, right)
    return Pose3(Rotation.from_matrix(np.column_stack([right, down, forward])).as_quat(), eye)
