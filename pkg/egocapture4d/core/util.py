import math

import numpy as np
import torch

# every tensor of the fitting problem is double precision
DTYPE = torch.float64

# below this squared angle the rotation uses its Taylor expansion
SMALL_ANGLE_SQ = 1e-12


def to_tensor(array, requires_grad: bool = False) -> torch.Tensor:
    """
    Convert an array to a float64 tensor.

    Parameters
    ----------
    array : array-like
        values to convert
    requires_grad : bool, optional
        track gradients for this tensor, by default False

    Returns
    -------
    torch.Tensor
        float64 tensor (a copy, never sharing memory with the input)
    """
    tensor = torch.tensor(np.asarray(array, dtype=np.float64), dtype=DTYPE)
    if requires_grad:
        tensor.requires_grad_(True)
    return tensor


def skew(vectors: torch.Tensor) -> torch.Tensor:
    """
    Cross-product matrices of a batch of 3-vectors.

    Parameters
    ----------
    vectors : torch.Tensor
        (..., 3) vectors

    Returns
    -------
    torch.Tensor
        (..., 3, 3) skew-symmetric matrices
    """
    x, y, z = vectors.unbind(-1)
    zeros = torch.zeros_like(x)
    return torch.stack(
        [
            torch.stack([zeros, -z, y], dim=-1),
            torch.stack([z, zeros, -x], dim=-1),
            torch.stack([-y, x, zeros], dim=-1),
        ],
        dim=-2,
    )


def axis_angle_to_matrix(rotvecs: torch.Tensor) -> torch.Tensor:
    """
    Rodrigues formula for a batch of axis-angle vectors.
    Differentiable everywhere, including the zero rotation.

    Parameters
    ----------
    rotvecs : torch.Tensor
        (..., 3) axis-angle vectors (radians)

    Returns
    -------
    torch.Tensor
        (..., 3, 3) rotation matrices
    """
    angle_sq = (rotvecs * rotvecs).sum(-1)
    small = angle_sq < SMALL_ANGLE_SQ
    angle = torch.sqrt(torch.where(small, torch.ones_like(angle_sq), angle_sq))
    half = 0.5 * angle
    # sin(a)/a and (1 - cos(a))/a^2, the latter written without cancellation
    sin_coef = torch.where(small, 1.0 - angle_sq / 6.0, torch.sin(angle) / angle)
    cos_coef = torch.where(small, 0.5 - angle_sq / 24.0, 0.5 * (torch.sin(half) / half) ** 2)
    cross = skew(rotvecs)
    eye = torch.eye(3, dtype=rotvecs.dtype).expand(cross.shape)
    return eye + sin_coef[..., None, None] * cross + cos_coef[..., None, None] * (cross @ cross)


def wrap_axis_angle(rotvecs: np.ndarray) -> np.ndarray:
    """
    Re-parameterize axis-angle vectors so every rotation angle lies in [0, pi].

    Parameters
    ----------
    rotvecs : np.ndarray
        (..., 3) axis-angle vectors

    Returns
    -------
    np.ndarray
        equivalent vectors with angle <= pi
    """
    rotvecs = np.asarray(rotvecs, dtype=np.float64)
    angle = np.linalg.norm(rotvecs, axis=-1, keepdims=True)
    wrapped = np.mod(angle + math.pi, 2.0 * math.pi) - math.pi
    safe = np.where(angle > 0.0, angle, 1.0)
    return np.where(angle > math.pi, rotvecs / safe * wrapped, rotvecs)
