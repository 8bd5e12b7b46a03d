import dataclasses
from typing import Tuple, Union

import numpy as np

BETA1 = 0.9
BETA2 = 0.999
EPSILON = 1e-8


class LengthMismatch(ValueError):
    def __init__(self, message):
        super().__init__(message)


@dataclasses.dataclass
class AdamState:
    """
    Moment estimates of Adam, aligned with the flat free-parameter vector.

    Attributes
    ----------
    first : np.ndarray
        first moment estimate
    second : np.ndarray
        second raw moment estimate
    step : int
        number of updates applied so far
    """

    first: np.ndarray
    second: np.ndarray
    step: int = 0

    @classmethod
    def zeros(cls, size: int) -> "AdamState":
        return cls(np.zeros(size), np.zeros(size), 0)

    def __len__(self) -> int:
        return len(self.first)


def adam_step(
    params: np.ndarray,
    grads: np.ndarray,
    state: AdamState,
    lr: Union[float, np.ndarray],
    beta1: float = BETA1,
    beta2: float = BETA2,
    eps: float = EPSILON,
) -> Tuple[np.ndarray, AdamState]:
    """
    One bias-corrected Adam update.

    Parameters
    ----------
    params : np.ndarray
        flat parameter vector
    grads : np.ndarray
        gradient at params
    state : AdamState
        moments before the update
    lr : Union[float, np.ndarray]
        learning rate, scalar or one per component
    beta1 : float, optional
        first moment decay, by default 0.9
    beta2 : float, optional
        second moment decay, by default 0.999
    eps : float, optional
        denominator offset, by default 1e-8

    Returns
    -------
    Tuple[np.ndarray, AdamState]
        updated parameters and moments (new arrays, inputs untouched)

    Raises
    ------
    LengthMismatch
        if params, grads and the moments are not aligned
    """
    params = np.asarray(params, dtype=np.float64)
    grads = np.asarray(grads, dtype=np.float64)
    if not (params.shape == grads.shape == state.first.shape == state.second.shape):
        raise LengthMismatch(
            f"parameters {params.shape}, gradient {grads.shape} and moments {state.first.shape} "
            "must have the same length"
        )
    step = state.step + 1
    first = beta1 * state.first + (1.0 - beta1) * grads
    second = beta2 * state.second + (1.0 - beta2) * grads * grads
    first_hat = first / (1.0 - beta1**step)
    second_hat = second / (1.0 - beta2**step)
    updated = params - lr * first_hat / (np.sqrt(second_hat) + eps)
    return updated, AdamState(first, second, step)
