"""Error metrics on cascaded channels."""

import numpy as np

from .scenario import CascadedChannels


def _stack(J) -> np.ndarray:
    if isinstance(J, CascadedChannels):
        return J.per_user()
    return np.asarray(J, dtype=complex)


def nmse(J_true, J_hat) -> float:
    """Error energy of ``J_hat`` over the energy of ``J_true``.

    Accepts :class:`CascadedChannels` or arrays of per-user blocks; all links
    of all users are pooled before the ratio is taken.
    """
    a, b = _stack(J_true), _stack(J_hat)
    if a.shape != b.shape:
        raise ValueError(f"shape mismatch {a.shape} vs {b.shape}")
    den = np.vdot(a, a).real
    if den == 0:
        raise ZeroDivisionError("true channel is identically zero")
    d = a - b
    return float(np.vdot(d, d).real / den)
