"""Independent reference implementations used to check the package.

These deliberately avoid the package's tensor helpers: plain numpy plus
scipy's polar decomposition, unbatched, sub-stepped explicitly. They stay
independent of the code paths they verify.
"""

import numpy as np
from scipy.linalg import polar

BOLTZMANN = 1.380649e-23


def _dev(a):
    return a - np.trace(a) / 3.0 * np.eye(3)


def scalar_stress(F, Fv, Fvp, phi, material):
    """Direct one-shot evaluation of the degraded Cauchy stress."""
    m, p = material.moduli, material.params
    J = np.linalg.det(F)
    Fb = J ** (-1.0 / 3.0) * F
    Fve = Fb @ np.linalg.inv(Fvp)
    Fe = Fve @ np.linalg.inv(Fv)
    Bve = Fve @ Fve.T
    Be = Fe @ Fe.T
    g = (1.0 - phi) ** 2 + p.k_stab
    sdev = (m.mu_eq * _dev(Bve) + m.mu_neq * _dev(Be)) / J
    Jm = J / m.J_w
    svol = 0.5 * m.k_v * (Jm - 1.0 / Jm) * np.eye(3)
    if J >= 1.0:
        return g * (sdev + svol)
    return g * sdev + svol


def euler_substep_update(F0, F1, Fv0, Fvp0, eps0_vp, phi, dt, material, nsub=1000):
    """Forward-Euler sub-stepping of both flow rules over one increment.

    Follows the same constitutive definitions (degraded driving stresses,
    strain-rate clamp, activation recording) with a dense explicit march;
    the deformation is interpolated linearly in time.
    """
    m, p = material.moduli, material.params
    theta = material.env.theta
    g = (1.0 - phi) ** 2 + p.k_stab
    E0 = 0.5 * (F0.T @ F0 - np.eye(3))
    E1 = 0.5 * (F1.T @ F1 - np.eye(3))
    eps_dot = max((np.linalg.norm(E1) - np.linalg.norm(E0)) / dt, 0.0) if dt > 0 else 0.0
    Fv, Fvp = Fv0.copy(), Fvp0.copy()
    e0 = eps0_vp
    h = dt / nsub
    for k in range(nsub):
        F = F0 + (k / nsub) * (F1 - F0)
        J = np.linalg.det(F)
        Fb = J ** (-1.0 / 3.0) * F
        Fve = Fb @ np.linalg.inv(Fvp)
        Fe = Fve @ np.linalg.inv(Fv)
        Be = Fe @ Fe.T
        Bve = Fve @ Fve.T
        sdev = (m.mu_eq * _dev(Bve) + m.mu_neq * _dev(Be)) / J
        sneq = g * m.mu_neq * _dev(Be) / J
        Jm = J / m.J_w
        svol = 0.5 * m.k_v * (Jm - 1.0 / Jm) * np.eye(3)
        sig = g * (sdev + svol) if J >= 1.0 else g * sdev + svol
        tau_neq = np.linalg.norm(sneq)
        tau_tot = np.linalg.norm(_dev(sig))
        if tau_neq > 1e-12:
            r, _ = polar(Fe)
            s_rot = r.T @ sneq @ r
            rate = p.epsdot0 * np.exp(
                p.deltaH / (BOLTZMANN * theta) * ((tau_neq / p.tau0) ** p.m_exp - 1.0))
            Fv = Fv + h * (np.linalg.inv(Fe) @ (rate * s_rot / tau_neq) @ Fve)
        eps = np.linalg.norm(0.5 * (F.T @ F - np.eye(3)))
        if tau_tot >= m.sigma0:
            if np.isnan(e0):
                e0 = eps
            rate_vp = p.a_vp * max(eps - e0, 0.0) ** m.b_vp * eps_dot
            if tau_tot > 1e-12:
                Fvp = Fvp + h * (np.linalg.inv(Fve) @ (rate_vp * _dev(sig) / tau_tot) @ Fb)
    Fv = Fv * np.linalg.det(Fv) ** (-1.0 / 3.0)
    Fvp = Fvp * np.linalg.det(Fvp) ** (-1.0 / 3.0)
    return Fv, Fvp


def isotropic_plane_tangent_entries(mu, k_v):
    """Small-strain isotropic Voigt entries (engineering shear)."""
    c1111 = k_v + 4.0 * mu / 3.0
    c1212 = mu
    return c1111, c1212
