import dataclasses
from typing import Union

import numpy as np

Scalar = Union[int, float, np.ndarray]


@dataclasses.dataclass(frozen=True)
class RobustKernel:
    """
    Geman-McClure robustifier e^2 / (sigma^2 + e^2).

    Attributes
    ----------
    sigma : float
        Robustness constant, in the units of the residual it is applied to.
    """

    sigma: float

    def __post_init__(self):
        if not self.sigma > 0.0:
            raise ValueError(f"kernel sigma must be positive, got {self.sigma}")


def rho(e: Scalar, kernel: RobustKernel) -> Scalar:
    """
    Geman-McClure error of a residual.

    Parameters
    ----------
    e : Scalar
        residual (any sign)
    kernel : RobustKernel
        robustness constant

    Returns
    -------
    Scalar
        value in [0, 1)
    """
    return rho_squared(e * e, kernel.sigma)


def rho_derivative(e: Scalar, kernel: RobustKernel) -> Scalar:
    """
    Derivative of rho with respect to the residual, 2 sigma^2 e / (sigma^2 + e^2)^2.

    Parameters
    ----------
    e : Scalar
        residual
    kernel : RobustKernel
        robustness constant

    Returns
    -------
    Scalar
        d rho / d e
    """
    sigma_sq = kernel.sigma * kernel.sigma
    denom = sigma_sq + e * e
    return 2.0 * sigma_sq * e / (denom * denom)


def rho_squared(e_sq, sigma: float):
    """
    Geman-McClure error from an already squared residual.
    Works on floats, numpy arrays and torch tensors alike, and stays
    differentiable at a zero residual.

    Parameters
    ----------
    e_sq : array-like
        squared residual(s)
    sigma : float
        robustness constant

    Returns
    -------
    array-like
        e^2 / (sigma^2 + e^2)
    """
    return e_sq / (sigma * sigma + e_sq)
