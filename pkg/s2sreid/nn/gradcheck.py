"""Finite-difference verification of hand-derived gradients."""

from typing import Callable

import numpy as np

from ..errors import NumericalError, UsageError
from .network import PartNetwork, backward, forward

LossClosure = Callable[[np.ndarray], tuple[float, np.ndarray]]
EmbeddingLoss = Callable[[np.ndarray], tuple[float, np.ndarray]]

DEFAULT_EPS = 1e-5
DEFAULT_FLOOR = 1e-12


def relative_error(
    analytic: np.ndarray,
    numeric: np.ndarray,
    floor: float = DEFAULT_FLOOR,
) -> np.ndarray:
    """Elementwise |a - n| / max(|a|, |n|, floor)."""
    analytic = np.asarray(analytic, dtype=np.float64)
    numeric = np.asarray(numeric, dtype=np.float64)
    scale = np.maximum(np.maximum(np.abs(analytic), np.abs(numeric)), floor)
    return np.abs(analytic - numeric) / scale


def central_difference(
    func: Callable[[np.ndarray], float],
    x: np.ndarray,
    eps: float = DEFAULT_EPS,
) -> np.ndarray:
    """
    Numerical gradient of a scalar function by central differences.

    Raises:
        UsageError: if eps is not positive
        NumericalError: naming the flat index whose perturbation gave a
            non-finite value
    """
    if not eps > 0:
        raise UsageError(f"finite-difference step must be positive, got {eps}")
    x = np.array(x, dtype=np.float64)
    flat = x.reshape(-1)
    grad = np.zeros_like(flat)
    for i in range(flat.size):
        orig = flat[i]
        flat[i] = orig + eps
        plus = float(func(x))
        flat[i] = orig - eps
        minus = float(func(x))
        flat[i] = orig
        if not (np.isfinite(plus) and np.isfinite(minus)):
            raise NumericalError("non-finite loss during gradient check", index=i)
        grad[i] = (plus - minus) / (2.0 * eps)
    return grad.reshape(x.shape)


def check_gradient(
    func: Callable[[np.ndarray], tuple[float, np.ndarray]],
    x: np.ndarray,
    eps: float = DEFAULT_EPS,
    floor: float = DEFAULT_FLOOR,
) -> float:
    """
    Compare the gradient ``func`` reports at ``x`` with central differences.

    Args:
        func: Maps an array to ``(loss, gradient)``
        x: Point to check at
        eps: Finite-difference step
        floor: Lower bound on the relative-error denominator

    Returns:
        Maximum relative error over all elements
    """
    if not eps > 0:
        raise UsageError(f"finite-difference step must be positive, got {eps}")
    x = np.asarray(x, dtype=np.float64)
    loss, analytic = func(x)
    if not np.isfinite(loss):
        raise NumericalError("non-finite loss during gradient check")
    numeric = central_difference(lambda v: func(v)[0], x, eps)
    if numeric.size == 0:
        return 0.0
    return float(relative_error(analytic, numeric, floor).max())


def gradient_check(
    net: PartNetwork,
    loss_closure: LossClosure,
    eps: float = DEFAULT_EPS,
    floor: float = DEFAULT_FLOOR,
) -> float:
    """
    Check a closure's analytic parameter gradient at ``net.params``.

    Args:
        net: Network whose parameter vector is perturbed
        loss_closure: Maps a flat parameter vector to ``(loss, gradient)``
        eps: Finite-difference step, must be positive
        floor: Lower bound on the relative-error denominator

    Returns:
        max_i |analytic_i - numeric_i| / max(|analytic_i|, |numeric_i|, floor)

    Raises:
        UsageError: if eps is not positive
        NumericalError: on a non-finite loss, naming the parameter index
    """
    return check_gradient(loss_closure, np.array(net.params), eps, floor)


def network_loss_closure(net: PartNetwork, inputs: np.ndarray, loss: EmbeddingLoss) -> LossClosure:
    """
    Chain an embedding-space loss through the network.

    The returned closure rebuilds the network with the given parameters,
    runs forward and backward, and returns ``(loss, parameter gradient)``.
    """

    def closure(params: np.ndarray) -> tuple[float, np.ndarray]:
        candidate = net.with_params(params)
        embedding, tape = forward(candidate, inputs)
        value, grad_embedding = loss(embedding)
        grad_params, _ = backward(candidate, tape, grad_embedding)
        return value, grad_params

    return closure
