"""Quadrature-point constitutive update.

Finite-strain viscoelasticity (thermally activated flow on the
non-equilibrium network) combined with a threshold viscoplastic flow,
energy-based degradation and a stress-gated crack driving force. All
operations are pure functions of (inputs, state) -> (outputs, new state)
and broadcast over leading batch dimensions, so a whole field of
quadrature points updates in one call.

Unit system: MPa, mm, s, K. Energies are volumetric densities in MPa.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .environment import EffectiveModuli, EnvironmentConditions, MaterialParameters, effective_moduli
from .errors import DomainError, NonFiniteState, NonPositiveJacobian
from .tensors import (
    det33,
    deviator,
    frobenius_norm,
    green_strain,
    identity,
    inv33,
    polar_rotation,
    split_volumetric,
    trace33,
    transpose33,
)

__all__ = [
    "BOLTZMANN",
    "InternalState",
    "StressResult",
    "Material",
    "degradation",
    "free_energies",
    "energy_split",
    "argon_flow_rate",
    "viscoplastic_flow_rate",
    "cauchy_stress",
    "crack_driving_force",
    "update_internal_state",
]

BOLTZMANN = 1.380649e-23  # J/K

# Below this driving-stress norm the flow direction is numerical noise and
# both flows are zeroed exactly (the thermal rate floor is ~1e-9/s anyway).
_TAU_FLOOR = 1e-12

# Cap on the inelastic stretch increment per step. The thermally activated
# rate grows double-exponentially above the athermal yield stress, which no
# explicit step can resolve; the cap only engages orders of magnitude past
# the stability limit (inside failed crack bands) and leaves every
# material-test regime untouched.
FLOW_INCREMENT_CAP = 5e-3


@dataclass
class InternalState:
    """Per-point history. Arrays share a common batch shape.

    ``psi_crit`` and ``eps0_vp`` use NaN for "not yet recorded".
    """

    F_v: np.ndarray  # viscous deformation gradient, det = 1
    F_vp: np.ndarray  # viscoplastic deformation gradient, det = 1
    history: np.ndarray  # max-over-time crack driving force, MPa
    psi_crit: np.ndarray  # tensile energy at damage activation, MPa
    eps0_vp: np.ndarray  # effective strain at viscoplastic activation
    eps_prev: np.ndarray  # previous-step effective strain ||E||_F
    psi_max: np.ndarray  # running max of the tensile energy, MPa

    @classmethod
    def fresh(cls, batch_shape=()):
        shape = tuple(batch_shape)
        return cls(
            F_v=identity(shape),
            F_vp=identity(shape),
            history=np.zeros(shape),
            psi_crit=np.full(shape, np.nan),
            eps0_vp=np.full(shape, np.nan),
            eps_prev=np.zeros(shape),
            psi_max=np.zeros(shape),
        )

    def copy(self):
        return InternalState(
            F_v=self.F_v.copy(),
            F_vp=self.F_vp.copy(),
            history=self.history.copy(),
            psi_crit=self.psi_crit.copy(),
            eps0_vp=self.eps0_vp.copy(),
            eps_prev=self.eps_prev.copy(),
            psi_max=self.psi_max.copy(),
        )

    def take(self, idx):
        """View of a batched state at the given indices (for diagnostics)."""
        return InternalState(
            F_v=self.F_v[idx],
            F_vp=self.F_vp[idx],
            history=self.history[idx],
            psi_crit=self.psi_crit[idx],
            eps0_vp=self.eps0_vp[idx],
            eps_prev=self.eps_prev[idx],
            psi_max=self.psi_max[idx],
        )


@dataclass
class StressResult:
    """Stress and energy output of one constitutive evaluation."""

    sigma: np.ndarray  # degraded Cauchy stress, MPa
    sigma_dev_undegraded: np.ndarray
    sigma_vol_undegraded: np.ndarray
    psi_plus: np.ndarray  # tensile part of the free energy, MPa
    psi_minus: np.ndarray  # compressive (protected) part, MPa
    tau_neq: np.ndarray  # driving-stress norm of the viscous flow, MPa
    tau_tot: np.ndarray  # deviatoric norm of the total stress, MPa
    # step diagnostics (zero for single evaluations without time stepping)
    vp_rate: np.ndarray = None
    vp_rate_subthreshold: np.ndarray = None


@dataclass(frozen=True)
class Material:
    """Parameter bundle handed to the constitutive update."""

    params: MaterialParameters
    env: EnvironmentConditions
    moduli: EffectiveModuli = field(default=None)

    @classmethod
    def create(cls, params: MaterialParameters, env: EnvironmentConditions):
        return cls(params=params, env=env, moduli=effective_moduli(params, env))


def degradation(phi, k_stab):
    """Quadratic degradation g = (1-phi)^2 + k and its two derivatives."""
    phi = np.asarray(phi, dtype=float)
    if np.any(phi < 0.0) or np.any(phi > 1.0):
        raise DomainError("phase field outside [0, 1]")
    g = (1.0 - phi) ** 2 + k_stab
    g_prime = -2.0 * (1.0 - phi)
    g_double_prime = np.full_like(g, 2.0)
    return g, g_prime, g_double_prime


def free_energies(B_ve, B_e, J_m, moduli: EffectiveModuli):
    """Neo-Hookean deviatoric energies and the volumetric energy.

    psi_eq = mu_eq/2 (I1(B_ve) - 3), psi_neq likewise on B_e,
    psi_vol = k_v/2 ((J_m^2 - 1)/2 - ln J_m)^2. Negative round-off on the
    deviatoric invariants is clipped to zero.
    """
    J_m = np.asarray(J_m, dtype=float)
    if np.any(J_m <= 0.0):
        raise NonPositiveJacobian("J_m <= 0 in free energy")
    psi_eq = 0.5 * moduli.mu_eq * np.maximum(trace33(B_ve) - 3.0, 0.0)
    psi_neq = 0.5 * moduli.mu_neq * np.maximum(trace33(B_e) - 3.0, 0.0)
    psi_vol = 0.5 * moduli.k_v * (0.5 * (J_m**2 - 1.0) - np.log(J_m)) ** 2
    return psi_eq, psi_neq, psi_vol


def energy_split(psi_eq, psi_neq, psi_vol, J):
    """Tension/compression split: volumetric energy counts as tensile iff J >= 1."""
    tension = np.asarray(J, dtype=float) >= 1.0
    psi_plus = psi_eq + psi_neq + np.where(tension, psi_vol, 0.0)
    psi_minus = np.where(tension, 0.0, psi_vol)
    return psi_plus, psi_minus


def argon_flow_rate(tau_neq, theta, params: MaterialParameters):
    """Thermally activated viscous flow rate.

    rate = epsdot0 * exp[ deltaH / (k_b theta) * ((tau/tau0)^m - 1) ].
    Underflows to zero for small driving stress; overflow is left to the
    caller's finite-state check.
    """
    tau = np.asarray(tau_neq, dtype=float)
    exponent = params.deltaH / (BOLTZMANN * theta) * ((tau / params.tau0) ** params.m_exp - 1.0)
    with np.errstate(over="ignore"):
        return params.epsdot0 * np.exp(exponent)


def viscoplastic_flow_rate(tau_tot, eps, eps_dot, eps0, params: MaterialParameters,
                           moduli: EffectiveModuli):
    """Threshold viscoplastic flow rate.

    Zero below the stress threshold sigma0; above it,
    a * <eps - eps0>^b * eps_dot with eps0 the strain recorded at first
    activation (NaN treated as "activates now", zero base).
    """
    tau = np.asarray(tau_tot, dtype=float)
    eps = np.asarray(eps, dtype=float)
    eps0 = np.where(np.isnan(eps0), eps, eps0)
    base = np.maximum(eps - eps0, 0.0)
    rate = params.a_vp * base**moduli.b_vp * np.maximum(eps_dot, 0.0)
    return np.where(tau < moduli.sigma0, 0.0, rate)


def _drive_history(psi_plus, sigma_norm, psi_crit, psi_max, history, sigma_d):
    """Shared activation/retention arithmetic of the crack driving force."""
    newly = np.isnan(psi_crit) & (sigma_norm >= sigma_d)
    psi_crit = np.where(newly, psi_plus, psi_crit)
    psi_max = np.maximum(psi_max, psi_plus)
    crit = np.where(np.isnan(psi_crit), np.inf, psi_crit)  # unactivated -> H = 0
    h = np.maximum(psi_max - crit, 0.0)
    history = np.maximum(history, h)
    return history, psi_crit, psi_max


def crack_driving_force(psi_plus, sigma_norm, state: InternalState, moduli: EffectiveModuli):
    """History-field update for the stress-gated crack driving force.

    Activation records psi_plus as the initiation energy the first time
    ||sigma||_F reaches sigma_d; afterwards the driving force is the
    positive part of (running max of psi_plus) - (initiation energy).
    Returns (H, updated state). The input state is not modified.
    """
    psi_plus = np.asarray(psi_plus, dtype=float)
    sigma_norm = np.asarray(sigma_norm, dtype=float)
    out = state.copy()
    out.history, out.psi_crit, out.psi_max = _drive_history(
        psi_plus, sigma_norm, out.psi_crit, out.psi_max, out.history, moduli.sigma_d)
    return out.history.copy(), out


def _stress_terms(F_bar, J, J_w, F_v, F_vp, g, moduli: EffectiveModuli):
    """Stress decomposition at a given kinematic state.

    Returns a dict with the degraded total stress, the undegraded parts,
    the flow driving stresses and the intermediate tensors needed by the
    flow rules.
    """
    F_ve = F_bar @ inv33(F_vp)
    F_e = F_ve @ inv33(F_v)
    B_ve = F_ve @ transpose33(F_ve)
    B_e = F_e @ transpose33(F_e)
    J_m = J / J_w

    inv_j = (1.0 / J)[..., None, None]
    sigma_dev = inv_j * (moduli.mu_eq * deviator(B_ve) + moduli.mu_neq * deviator(B_e))
    p = 0.5 * moduli.k_v * (J_m - 1.0 / J_m)
    sigma_vol = p[..., None, None] * identity(np.shape(p))

    g_b = np.asarray(g, dtype=float)[..., None, None]
    tension = (J >= 1.0)[..., None, None]
    sigma = np.where(tension, g_b * (sigma_dev + sigma_vol), g_b * sigma_dev + sigma_vol)
    # the dashpot sees the actual (degraded) branch stress, like the
    # viscoplastic flow below; an undegraded drive would keep pumping the
    # thermally-activated flow inside fully broken bands
    sigma_neq = g_b * inv_j * (moduli.mu_neq * deviator(B_e))

    return {
        "F_ve": F_ve,
        "F_e": F_e,
        "B_ve": B_ve,
        "B_e": B_e,
        "J_m": J_m,
        "sigma": sigma,
        "sigma_dev": sigma_dev,
        "sigma_vol": sigma_vol,
        "sigma_neq": sigma_neq,
        "tau_neq": frobenius_norm(sigma_neq),
        "tau_tot": frobenius_norm(deviator(sigma)),
    }


def cauchy_stress(F, state: InternalState, phi, material: Material):
    """Degraded Cauchy stress and energies at a frozen internal state."""
    moduli = material.moduli
    split = split_volumetric(F, moduli.J_w)
    g, _, _ = degradation(phi, material.params.k_stab)
    t = _stress_terms(split.F_bar, split.J, moduli.J_w, state.F_v, state.F_vp, g, moduli)
    psi_eq, psi_neq, psi_vol = free_energies(t["B_ve"], t["B_e"], t["J_m"], moduli)
    psi_plus, psi_minus = energy_split(psi_eq, psi_neq, psi_vol, split.J)
    zeros = np.zeros(np.shape(split.J))
    return StressResult(
        sigma=t["sigma"],
        sigma_dev_undegraded=t["sigma_dev"],
        sigma_vol_undegraded=t["sigma_vol"],
        psi_plus=psi_plus,
        psi_minus=psi_minus,
        tau_neq=t["tau_neq"],
        tau_tot=t["tau_tot"],
        vp_rate=zeros,
        vp_rate_subthreshold=zeros.copy(),
    )


def _flow_rates(terms, theta, eps_eff, eps_dot, eps0, F_bar, dt, material: Material):
    """Rates of the two inelastic gradients at one evaluation point in time.

    Also performs the viscoplastic activation bookkeeping: points crossing
    the threshold here get eps0 recorded at the current effective strain.
    Returns (Fdot_v, Fdot_vp, eps0_new, vp_rate, vp_rate_subthreshold).
    """
    params, moduli = material.params, material.moduli
    tau_neq = terms["tau_neq"]
    tau_tot = terms["tau_tot"]
    rate_cap = FLOW_INCREMENT_CAP / dt if dt > 0.0 else np.inf

    # viscous flow driven by the rotated non-equilibrium stress
    r_e = polar_rotation(terms["F_e"])
    s_prime = transpose33(r_e) @ terms["sigma_neq"] @ r_e
    rate_v = np.minimum(argon_flow_rate(tau_neq, theta, params), rate_cap)
    scale_v = np.where(tau_neq > _TAU_FLOOR, rate_v / np.maximum(tau_neq, _TAU_FLOOR), 0.0)
    Fdot_v = inv33(terms["F_e"]) @ (scale_v[..., None, None] * s_prime) @ terms["F_ve"]

    # viscoplastic flow driven by the deviatoric total stress
    newly = np.isnan(eps0) & (tau_tot >= moduli.sigma0)
    eps0_new = np.where(newly, eps_eff, eps0)
    rate_vp = viscoplastic_flow_rate(tau_tot, eps_eff, eps_dot, eps0_new, params, moduli)
    rate_vp = np.minimum(rate_vp, rate_cap)
    dev_sigma = deviator(terms["sigma"])
    scale_vp = np.where(tau_tot > _TAU_FLOOR, rate_vp / np.maximum(tau_tot, _TAU_FLOOR), 0.0)
    Fdot_vp = inv33(terms["F_ve"]) @ (scale_vp[..., None, None] * dev_sigma) @ F_bar

    subthreshold = np.where(tau_tot < moduli.sigma0, rate_vp, 0.0)
    return Fdot_v, Fdot_vp, eps0_new, rate_vp, subthreshold


def _renormalize(F):
    """Rescale to unit determinant; midpoint integration of a traceless
    flow drifts in volume."""
    d = det33(F)
    if np.any(d <= 0.0) or not np.all(np.isfinite(d)):
        raise NonFiniteState("inelastic gradient lost positivity (dt too large)")
    return F * (d ** (-1.0 / 3.0))[..., None, None]


def prepare_stage1(F_old, state: InternalState, phi, dt, material: Material):
    """Start-of-increment flow evaluation, independent of the step target.

    The first midpoint stage depends only on (F_old, state, phi, dt), so
    one evaluation serves the base update and every tangent perturbation
    of the same step. The viscoplastic rate does depend on the step's
    strain rate; its unit direction tensor is cached and rescaled later.
    """
    params, moduli = material.params, material.moduli
    g, _, _ = degradation(phi, params.k_stab)
    split_old = split_volumetric(F_old, moduli.J_w)
    eps_old = np.asarray(state.eps_prev, dtype=float)

    terms1 = _stress_terms(split_old.F_bar, split_old.J, moduli.J_w,
                           state.F_v, state.F_vp, g, moduli)
    tau_neq = terms1["tau_neq"]
    tau_tot = terms1["tau_tot"]
    rate_cap = FLOW_INCREMENT_CAP / dt if dt > 0.0 else np.inf

    r_e = polar_rotation(terms1["F_e"])
    s_prime = transpose33(r_e) @ terms1["sigma_neq"] @ r_e
    rate_v = np.minimum(argon_flow_rate(tau_neq, material.env.theta, params), rate_cap)
    scale_v = np.where(tau_neq > _TAU_FLOOR, rate_v / np.maximum(tau_neq, _TAU_FLOOR), 0.0)
    fdot_v = inv33(terms1["F_e"]) @ (scale_v[..., None, None] * s_prime) @ terms1["F_ve"]

    newly = np.isnan(state.eps0_vp) & (tau_tot >= moduli.sigma0)
    eps0 = np.where(newly, eps_old, state.eps0_vp)
    dev_sigma = deviator(terms1["sigma"])
    unit = np.where((tau_tot > _TAU_FLOOR)[..., None, None],
                    dev_sigma / np.maximum(tau_tot, _TAU_FLOOR)[..., None, None], 0.0)
    vp_dir = inv33(terms1["F_ve"]) @ unit @ split_old.F_bar

    return {
        "g": g,
        "split_old": split_old,
        "eps_old": eps_old,
        "fdot_v": fdot_v,
        "vp_dir": vp_dir,
        "tau_tot": tau_tot,
        "eps0": eps0,
        "rate_cap": rate_cap,
    }


def update_internal_state(F_old, F_new, state: InternalState, dt, phi, material: Material,
                          stage1=None):
    """Advance the internal variables over one time increment.

    Two-stage explicit midpoint scheme: rates are evaluated at the start
    of the increment, the inelastic gradients advanced half a step, rates
    re-evaluated at the midpoint deformation (average of F_old and F_new)
    and midpoint internal variables, then the full step is taken. The
    phase field is frozen during the increment.

    Parameters
    ----------
    F_old, F_new : ndarray (..., 3, 3)
        Total deformation gradients at the start and end of the increment.
    state : InternalState
        Start-of-increment internal variables (not modified). The stored
        ``eps_prev`` must belong to F_old.
    dt : float
        Increment duration in seconds. dt = 0 performs a pure stress
        evaluation without flow.
    phi : ndarray (...)
        Phase field interpolated to the points, frozen over the step.
    material : Material
        Parameter bundle.
    stage1 : dict, optional
        Cached output of prepare_stage1 for this (F_old, state, phi, dt).

    Returns
    -------
    (InternalState, StressResult)
        End-of-increment state (with updated history field) and stress.
    """
    params, moduli = material.params, material.moduli
    theta = material.env.theta
    if stage1 is None:
        stage1 = prepare_stage1(F_old, state, phi, dt, material)
    g = stage1["g"]
    split_new = split_volumetric(F_new, moduli.J_w)

    eps_old = stage1["eps_old"]
    eps_new = frobenius_norm(green_strain(F_new))
    if dt > 0.0:
        eps_dot = np.maximum((eps_new - eps_old) / dt, 0.0)
    else:
        eps_dot = np.zeros(np.shape(eps_new))

    # stage 1: rates at the start of the increment (viscoplastic rate
    # rescaled for this step's strain rate)
    eps0 = stage1["eps0"]
    vp1 = np.minimum(
        viscoplastic_flow_rate(stage1["tau_tot"], eps_old, eps_dot, eps0, params, moduli),
        stage1["rate_cap"])
    sub1 = np.where(stage1["tau_tot"] < moduli.sigma0, vp1, 0.0)
    fdot_v1 = stage1["fdot_v"]
    fdot_vp1 = vp1[..., None, None] * stage1["vp_dir"]

    F_v_mid = state.F_v + 0.5 * dt * fdot_v1
    F_vp_mid = state.F_vp + 0.5 * dt * fdot_vp1

    # stage 2: rates at the midpoint deformation and internal variables
    F_mid = 0.5 * (np.asarray(F_old, dtype=float) + np.asarray(F_new, dtype=float))
    split_mid = split_volumetric(F_mid, moduli.J_w)
    eps_mid = frobenius_norm(green_strain(F_mid))
    terms2 = _stress_terms(split_mid.F_bar, split_mid.J, moduli.J_w,
                           F_v_mid, F_vp_mid, g, moduli)
    fdot_v2, fdot_vp2, eps0, vp2, sub2 = _flow_rates(
        terms2, theta, eps_mid, eps_dot, eps0, split_mid.F_bar, dt, material)

    F_v_new = _renormalize(state.F_v + dt * fdot_v2)
    F_vp_new = _renormalize(state.F_vp + dt * fdot_vp2)
    if not (np.all(np.isfinite(F_v_new)) and np.all(np.isfinite(F_vp_new))):
        raise NonFiniteState("flow update produced non-finite entries (dt too large)")

    # end-of-increment stress, energies and history
    terms = _stress_terms(split_new.F_bar, split_new.J, moduli.J_w,
                          F_v_new, F_vp_new, g, moduli)
    if not np.all(np.isfinite(terms["sigma"])):
        raise NonFiniteState("stress update produced non-finite entries")
    psi_eq, psi_neq, psi_vol = free_energies(terms["B_ve"], terms["B_e"], terms["J_m"], moduli)
    psi_plus, psi_minus = energy_split(psi_eq, psi_neq, psi_vol, split_new.J)

    sigma_norm = frobenius_norm(terms["sigma"])
    history, psi_crit, psi_max = _drive_history(
        psi_plus, sigma_norm, state.psi_crit, state.psi_max, state.history, moduli.sigma_d)
    state_new = InternalState(
        F_v=F_v_new,
        F_vp=F_vp_new,
        history=history,
        psi_crit=psi_crit,
        eps0_vp=eps0,
        eps_prev=eps_new,
        psi_max=psi_max,
    )

    result = StressResult(
        sigma=terms["sigma"],
        sigma_dev_undegraded=terms["sigma_dev"],
        sigma_vol_undegraded=terms["sigma_vol"],
        psi_plus=psi_plus,
        psi_minus=psi_minus,
        tau_neq=terms["tau_neq"],
        tau_tot=terms["tau_tot"],
        vp_rate=np.maximum(vp1, vp2),
        vp_rate_subthreshold=np.maximum(sub1, sub2),
    )
    return state_new, result
