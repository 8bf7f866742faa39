"""Central finite-difference gradient checking."""

from __future__ import annotations

from typing import Callable, Mapping

import numpy as np


def relative_error(analytic, numeric):
    a, n = np.abs(analytic), np.abs(numeric)
    return np.abs(analytic - numeric) / np.maximum(1e-8, a + n)


def numeric_gradient(loss: Callable[[], float], array: np.ndarray, index, h: float = 1e-5) -> float:
    old = array[index]
    array[index] = old + h
    up = loss()
    array[index] = old - h
    down = loss()
    array[index] = old
    return (up - down) / (2 * h)


def gradient_check(
    loss: Callable[[], float],
    arrays: Mapping[str, np.ndarray],
    analytic: Mapping[str, np.ndarray],
    h: float = 1e-5,
    max_coords: int | None = 200,
    seed: int = 0,
) -> tuple[float, dict[str, float]]:
    """Compare analytic gradients with central differences.

    ``loss`` must re-evaluate the scalar objective from the current contents
    of ``arrays`` (which are perturbed in place and restored). Tensors with
    more than ``max_coords`` entries are checked on a seeded random subset of
    that many coordinates. Returns the overall maximum relative error and
    the per-tensor maxima.
    """
    rng = np.random.default_rng(seed)
    per_tensor = {}
    for name, arr in arrays.items():
        if arr.dtype != np.float64:
            raise TypeError(f"{name}: gradient checks need float64 arrays, got {arr.dtype}")
        flat_idx = np.arange(arr.size)
        if max_coords is not None and arr.size > max_coords:
            flat_idx = rng.choice(arr.size, size=max_coords, replace=False)
        worst = 0.0
        for k in flat_idx:
            index = np.unravel_index(k, arr.shape)
            num = numeric_gradient(loss, arr, index, h)
            worst = max(worst, float(relative_error(analytic[name][index], num)))
        per_tensor[name] = worst
    return (max(per_tensor.values()) if per_tensor else 0.0), per_tensor
