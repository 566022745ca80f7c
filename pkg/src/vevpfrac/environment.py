"""Environmental scaling of material constants.

Maps (temperature, moisture content, nanoparticle volume fraction) to the
effective moduli, strength thresholds and swelling ratio used by the
constitutive update. Units: MPa, mm, s, K. Moisture content is a mass
fraction (0.010 == 1.0 %); the fracture energy parameter is given in J/m^2
and converted to N/mm here.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

from .errors import DomainError

__all__ = [
    "EnvironmentConditions",
    "MaterialParameters",
    "EffectiveModuli",
    "amplification_factor",
    "kitagawa_scale",
    "swelling_jacobian",
    "effective_moduli",
]

# Validation bounds keeping the moisture polynomial of the amplification
# factor positive with wide margin; out-of-range values are rejected.
W_W_MAX = 0.05
NU_NP_MAX = 0.2


@dataclass(frozen=True)
class EnvironmentConditions:
    """Spatially uniform test environment for one run."""

    theta: float  # temperature, K
    w_w: float = 0.0  # moisture mass fraction
    nu_np: float = 0.0  # nanoparticle volume fraction

    def __post_init__(self):
        if not self.theta > 0.0:
            raise DomainError(f"temperature must be positive, got {self.theta}")
        if not 0.0 <= self.w_w <= W_W_MAX:
            raise DomainError(f"moisture content {self.w_w} outside [0, {W_W_MAX}]")
        if not 0.0 <= self.nu_np <= NU_NP_MAX:
            raise DomainError(f"particle fraction {self.nu_np} outside [0, {NU_NP_MAX}]")


@dataclass(frozen=True)
class MaterialParameters:
    """Reference (dry, room-temperature) material constants.

    ``Gc_ref`` is stated in J/m^2; all stress-like quantities in MPa.
    ``alpha_kit`` (the temperature-scaling exponent, 1/K) has no published
    value and must be supplied whenever theta != theta_ref.
    """

    mu_eq_ref: float  # equilibrium shear modulus, MPa
    mu_neq_ref: float  # non-equilibrium shear modulus, MPa
    kv_ref: float  # bulk modulus, MPa
    epsdot0: float  # thermally-activated flow prefactor, 1/s
    deltaH: float  # activation energy, J
    m_exp: float  # flow-law stress exponent
    tau0: float  # athermal yield stress, MPa
    a_vp: float  # viscoplastic flow amplitude
    b_vp_slope: float  # b = slope * w_w + offset
    b_vp_offset: float
    sigma0_base: float  # viscoplastic threshold before amplification, MPa
    Gc_ref: float  # fracture energy, J/m^2
    l0: float  # phase-field length scale, mm
    sigma_d_base: float  # damage-activation stress before amplification, MPa
    alpha_w: float  # moisture swelling coefficient
    theta_ref: float = 296.0  # reference temperature, K
    alpha_kit: float | None = None  # temperature scaling exponent, 1/K
    k_stab: float = 1e-7  # residual stiffness of the degradation function

    def __post_init__(self):
        positive = (
            ("mu_eq_ref", self.mu_eq_ref),
            ("mu_neq_ref", self.mu_neq_ref),
            ("kv_ref", self.kv_ref),
            ("epsdot0", self.epsdot0),
            ("tau0", self.tau0),
            ("Gc_ref", self.Gc_ref),
            ("l0", self.l0),
            ("sigma_d_base", self.sigma_d_base),
            ("theta_ref", self.theta_ref),
        )
        for name, value in positive:
            if not value > 0.0:
                raise DomainError(f"{name} must be strictly positive, got {value}")
        if not 0.0 < self.k_stab < 1e-2:
            raise DomainError(f"k_stab must be a small positive number, got {self.k_stab}")


@dataclass(frozen=True)
class EffectiveModuli:
    """Environment-adjusted constants consumed by the constitutive layer."""

    mu_eq: float  # MPa
    mu_neq: float  # MPa
    k_v: float  # MPa
    G_c: float  # N/mm
    sigma0: float  # MPa
    sigma_d: float  # MPa
    b_vp: float
    X: float
    J_w: float


def amplification_factor(nu_np, w_w):
    """Stiffening factor for rigid fillers, knocked down by moisture.

    X = (1 - 9.5 w_w + 0.057 w_w^2)(1 + 3.5 nu + 18 nu^2)
    """
    moisture = 1.0 - 9.5 * w_w + 0.057 * w_w**2
    if moisture <= 0.0:
        raise DomainError(f"moisture term of the amplification factor is {moisture} <= 0")
    return moisture * (1.0 + 3.5 * nu_np + 18.0 * nu_np**2)


def kitagawa_scale(theta, params: MaterialParameters):
    """Temperature scaling 2 - exp[alpha (theta - theta_ref)] of the moduli."""
    if not theta > 0.0:
        raise DomainError(f"temperature must be positive, got {theta}")
    if params.alpha_kit is None:
        if theta == params.theta_ref:
            return 1.0
        raise DomainError(
            "alpha_kit is required for temperatures away from theta_ref "
            f"(theta={theta}, theta_ref={params.theta_ref})"
        )
    scale = 2.0 - math.exp(params.alpha_kit * (theta - params.theta_ref))
    if scale <= 0.0:
        raise DomainError(f"temperature scale {scale} <= 0 at theta={theta}")
    return scale


def swelling_jacobian(w_w, alpha_w):
    """Moisture swelling volume ratio J_w = 1 + alpha_w w_w."""
    if w_w < 0.0:
        raise DomainError(f"moisture content must be non-negative, got {w_w}")
    return 1.0 + alpha_w * w_w


def effective_moduli(params: MaterialParameters, env: EnvironmentConditions):
    """Assemble all environment-adjusted constants for one run.

    Moduli scale with both the amplification factor and the temperature
    scale; the fracture energy scales with amplification only and is
    converted from J/m^2 to N/mm. The strength thresholds scale with
    amplification only.
    """
    x = amplification_factor(env.nu_np, env.w_w)
    kit = kitagawa_scale(env.theta, params)
    return EffectiveModuli(
        mu_eq=x * kit * params.mu_eq_ref,
        mu_neq=x * kit * params.mu_neq_ref,
        k_v=x * kit * params.kv_ref,
        G_c=x * params.Gc_ref * 1e-3,  # J/m^2 -> N/mm
        sigma0=params.sigma0_base * x,
        sigma_d=params.sigma_d_base * x,
        b_vp=params.b_vp_slope * env.w_w + params.b_vp_offset,
        X=x,
        J_w=swelling_jacobian(env.w_w, params.alpha_w),
    )
