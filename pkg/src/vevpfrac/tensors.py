"""Dense 3x3 tensor algebra and kinematic decompositions.

Every function accepts arrays of shape (..., 3, 3) and broadcasts over the
leading batch dimensions; a single tensor is simply the unbatched case.
Plane strain is represented with full 3x3 tensors (out-of-plane stretch 1).
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import NonPositiveJacobian

__all__ = [
    "IDENTITY",
    "identity",
    "det33",
    "inv33",
    "transpose33",
    "trace33",
    "deviator",
    "frobenius_norm",
    "left_cauchy_green",
    "green_strain",
    "polar_rotation",
    "VolumetricSplit",
    "split_volumetric",
]

IDENTITY = np.eye(3)


def identity(batch_shape=()):
    """Identity tensor broadcast to the given batch shape."""
    return np.broadcast_to(IDENTITY, tuple(batch_shape) + (3, 3)).copy()


def det33(t):
    """Determinant of (..., 3, 3) arrays, expanded cofactors."""
    return (
        t[..., 0, 0] * (t[..., 1, 1] * t[..., 2, 2] - t[..., 1, 2] * t[..., 2, 1])
        - t[..., 0, 1] * (t[..., 1, 0] * t[..., 2, 2] - t[..., 1, 2] * t[..., 2, 0])
        + t[..., 0, 2] * (t[..., 1, 0] * t[..., 2, 1] - t[..., 1, 1] * t[..., 2, 0])
    )


def inv33(t, det=None):
    """Inverse of (..., 3, 3) arrays via the adjugate (faster than LAPACK here)."""
    if det is None:
        det = det33(t)
    out = np.empty_like(t)
    out[..., 0, 0] = t[..., 1, 1] * t[..., 2, 2] - t[..., 1, 2] * t[..., 2, 1]
    out[..., 0, 1] = t[..., 0, 2] * t[..., 2, 1] - t[..., 0, 1] * t[..., 2, 2]
    out[..., 0, 2] = t[..., 0, 1] * t[..., 1, 2] - t[..., 0, 2] * t[..., 1, 1]
    out[..., 1, 0] = t[..., 1, 2] * t[..., 2, 0] - t[..., 1, 0] * t[..., 2, 2]
    out[..., 1, 1] = t[..., 0, 0] * t[..., 2, 2] - t[..., 0, 2] * t[..., 2, 0]
    out[..., 1, 2] = t[..., 0, 2] * t[..., 1, 0] - t[..., 0, 0] * t[..., 1, 2]
    out[..., 2, 0] = t[..., 1, 0] * t[..., 2, 1] - t[..., 1, 1] * t[..., 2, 0]
    out[..., 2, 1] = t[..., 0, 1] * t[..., 2, 0] - t[..., 0, 0] * t[..., 2, 1]
    out[..., 2, 2] = t[..., 0, 0] * t[..., 1, 1] - t[..., 0, 1] * t[..., 1, 0]
    out /= det[..., None, None]
    return out


def transpose33(t):
    return np.swapaxes(t, -1, -2)


def trace33(t):
    return t[..., 0, 0] + t[..., 1, 1] + t[..., 2, 2]


def deviator(t):
    """Traceless part t - tr(t)/3 * I."""
    out = t.astype(float, copy=True)
    p = trace33(t) / 3.0
    out[..., 0, 0] -= p
    out[..., 1, 1] -= p
    out[..., 2, 2] -= p
    return out


def frobenius_norm(t):
    """sqrt(t : t), elementwise over the batch."""
    return np.sqrt(np.sum(t * t, axis=(-1, -2)))


def left_cauchy_green(f):
    """B = F F^T."""
    return f @ transpose33(f)


def green_strain(f):
    """E = (F^T F - I) / 2; zero for any rigid motion."""
    e = transpose33(f) @ f
    e[..., 0, 0] -= 1.0
    e[..., 1, 1] -= 1.0
    e[..., 2, 2] -= 1.0
    return 0.5 * e


def polar_rotation(f, tol=1e-12, max_iter=64):
    """Rotation factor R of F = R U by Newton averaging of R and R^{-T}.

    Requires det(F) > 0 everywhere in the batch; converges quadratically
    for the well-conditioned near-identity tensors this package produces.
    """
    f = np.asarray(f, dtype=float)
    d = det33(f)
    if np.any(d <= 0.0) or not np.all(np.isfinite(d)):
        raise NonPositiveJacobian("polar decomposition requires det(F) > 0")
    r = f.copy()
    for _ in range(max_iter):
        r_next = 0.5 * (r + transpose33(inv33(r)))
        r = r_next
        err = r @ transpose33(r)
        err[..., 0, 0] -= 1.0
        err[..., 1, 1] -= 1.0
        err[..., 2, 2] -= 1.0
        if np.max(np.sum(err * err, axis=(-1, -2))) < tol * tol:
            break
    return r


@dataclass(frozen=True)
class VolumetricSplit:
    """Volume ratios and the unimodular part of a deformation gradient.

    J = J_m * J_w splits the total volume change into a mechanical part and
    the moisture-swelling part; F_bar = J^{-1/3} F has unit determinant.
    """

    J: np.ndarray
    J_m: np.ndarray
    J_w: np.ndarray
    F_bar: np.ndarray


def split_volumetric(f, j_w=1.0):
    """Split F into volume ratios and its unimodular part.

    Raises NonPositiveJacobian if det(F) <= 0 anywhere in the batch
    (element inversion upstream).
    """
    f = np.asarray(f, dtype=float)
    j = det33(f)
    if np.any(j <= 0.0) or not np.all(np.isfinite(j)):
        raise NonPositiveJacobian("det(F) <= 0")
    j_w = np.asarray(j_w, dtype=float)
    if np.any(j_w <= 0.0):
        raise NonPositiveJacobian("swelling ratio J_w must be positive")
    f_bar = f * (j ** (-1.0 / 3.0))[..., None, None]
    return VolumetricSplit(J=j, J_m=j / j_w, J_w=np.broadcast_to(j_w, j.shape), F_bar=f_bar)
