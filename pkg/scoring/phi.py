"""
phi.py

The one-parameter convex family phi_b whose Bregman divergences are the
Tweedie deviances, plus the scalar/array helpers shared by the score modules.
"""

import numpy as np

from .exceptions import DomainError

# phi_b is only evaluated at arguments >= this floor.
PHI_FLOOR = 1e-12


def scalar_or_array(value, *inputs):
    """Return a float when every input is a scalar, else the array."""
    if all(np.ndim(x) == 0 for x in inputs):
        return float(value)
    return value


def check_positive(name, x):
    x = np.asarray(x, dtype=float)
    if not np.all(x > 0):
        raise DomainError(f"{name} must be strictly positive")
    return x


def tweedie_phi(b, y, order=0):
    """
    The convex family phi_b and its first two derivatives.

        phi_b(y) = 2 / (b (b - 1)) y^b     for b not in {0, 1}
                 = -2 log(y)               for b = 0
                 = 2 y log(y) - 2 y        for b = 1

    phi_b''(y) = 2 y^(b - 2) > 0 for every b.

    Parameters:
        b (float): Family index.
        y: Positive argument(s).
        order (int): 0, 1 or 2.

    Raises:
        DomainError: if y <= 0 or order is not 0, 1 or 2.
    """
    if order not in (0, 1, 2):
        raise DomainError(f"order must be 0, 1 or 2, got {order!r}")
    b = float(b)
    x = np.maximum(check_positive("y", y), PHI_FLOOR)

    if order == 2:
        value = 2.0 * x ** (b - 2.0)
    elif b == 0.0:
        value = -2.0 * np.log(x) if order == 0 else -2.0 / x
    elif b == 1.0:
        value = 2.0 * x * np.log(x) - 2.0 * x if order == 0 else 2.0 * np.log(x)
    elif order == 0:
        value = 2.0 / (b * (b - 1.0)) * x ** b
    else:
        value = 2.0 / (b - 1.0) * x ** (b - 1.0)
    return scalar_or_array(value, y)


def scaled_phi(index, x, order):
    """(c / 2) * phi_b of a PhiIndex, or one of its derivatives."""
    return 0.5 * index.c * tweedie_phi(index.b, x, order)
