"""Numerical consistent tangent moduli via deformation-gradient perturbation.

Each of the six independent symmetric perturbation directions reruns the
full constitutive update from the same start-of-increment state; the
forward difference of the Cauchy stresses gives one Voigt column of the
tangent relating the corotational stress rate to the rate of deformation.
The symmetrized perturbation makes the spin increment vanish, so no
rotation correction is needed.
"""

from __future__ import annotations

import numpy as np

from .errors import NonFiniteTangent
from .material import Material, InternalState, prepare_stage1, update_internal_state

__all__ = ["VOIGT_PAIRS", "perturbed_deformation", "jaumann_tangent", "voigt_stress"]

# Voigt component order (11, 22, 33, 12, 13, 23), zero-based indices.
VOIGT_PAIRS = ((0, 0), (1, 1), (2, 2), (0, 1), (0, 2), (1, 2))
# Columns needed for the in-plane 2D stiffness block.
PLANE_PAIRS = ((0, 0), (1, 1), (0, 1))


def perturbed_deformation(F, i, j, eps):
    """F + (eps/2)(e_i x e_j . F + e_j x e_i . F), zero-based indices."""
    out = np.array(F, dtype=float, copy=True)
    row_j = np.array(F[..., j, :], copy=True)  # guard i == j aliasing
    out[..., i, :] += 0.5 * eps * row_j
    out[..., j, :] += 0.5 * eps * F[..., i, :]
    return out


def voigt_stress(sigma):
    """Stack (..., 3, 3) symmetric stress into Voigt order (..., 6)."""
    return np.stack(
        [sigma[..., 0, 0], sigma[..., 1, 1], sigma[..., 2, 2],
         sigma[..., 0, 1], sigma[..., 0, 2], sigma[..., 1, 2]],
        axis=-1,
    )


def jaumann_tangent(F_old, F_new, state: InternalState, phi, dt, material: Material,
                    eps=1e-8, pairs=VOIGT_PAIRS, base_sigma=None, stage1=None):
    """Tangent moduli in Voigt layout by forward differences.

    Parameters
    ----------
    F_old, F_new : ndarray (..., 3, 3)
        Increment endpoints; each perturbation modifies F_new only and the
        update restarts from the same ``state``.
    pairs : sequence of (i, j)
        Perturbation directions (Voigt columns) to compute; defaults to
        all six. A column for pair (i, j) with i != j corresponds to a
        unit engineering shear strain.
    base_sigma : ndarray, optional
        Unperturbed Cauchy stress, if the caller already evaluated it.
    stage1 : dict, optional
        Cached start-of-increment flow evaluation (shared with the base
        update; it does not depend on the perturbed step target).

    Returns
    -------
    ndarray (..., 6, len(pairs))
        Voigt rows (11, 22, 33, 12, 13, 23) by requested columns, MPa.
    """
    if stage1 is None:
        stage1 = prepare_stage1(F_old, state, phi, dt, material)
    if base_sigma is None:
        _, res = update_internal_state(F_old, F_new, state, dt, phi, material, stage1=stage1)
        base_sigma = res.sigma
    s0 = voigt_stress(base_sigma)
    columns = []
    for (i, j) in pairs:
        f_hat = perturbed_deformation(F_new, i, j, eps)
        _, res = update_internal_state(F_old, f_hat, state, dt, phi, material, stage1=stage1)
        columns.append((voigt_stress(res.sigma) - s0) / eps)
    tangent = np.stack(columns, axis=-1)
    if not np.all(np.isfinite(tangent)):
        raise NonFiniteTangent("perturbation produced a non-finite tangent column")
    return tangent
