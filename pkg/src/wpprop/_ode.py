"""Fixed-step Runge-Kutta helpers shared by the orbit and Riccati integrators."""
from __future__ import annotations

import math
from typing import Callable

import numpy as np


def rk4_step(rhs: Callable[[np.ndarray], np.ndarray], y: np.ndarray, h: float) -> np.ndarray:
    """One classical fourth-order Runge-Kutta step for an autonomous system."""
    k1 = rhs(y)
    k2 = rhs(y + 0.5 * h * k1)
    k3 = rhs(y + 0.5 * h * k2)
    k4 = rhs(y + h * k3)
    return y + (h / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4)


def partition(span: float, max_step: float) -> tuple[int, float]:
    """Split ``span`` (any sign) into the fewest equal steps of size at most ``max_step``."""
    if not max_step > 0:
        raise ValueError("step must be positive")
    if span == 0:
        return 0, 0.0
    n = max(1, math.ceil(abs(span) / max_step - 1e-9))
    return n, span / n
