"""Phase-field fracture of viscoelastic-viscoplastic nanoparticle/epoxy
composites under hygrothermal conditions: 2D plane-strain FEM at desk scale.
"""

from .environment import (
    EffectiveModuli,
    EnvironmentConditions,
    MaterialParameters,
    amplification_factor,
    effective_moduli,
    kitagawa_scale,
    swelling_jacobian,
)
from .fem import Mesh, PlaneStrainAssembler, apply_dirichlet, node_set_dofs, reaction_force
from .material import (
    InternalState,
    Material,
    StressResult,
    argon_flow_rate,
    cauchy_stress,
    crack_driving_force,
    degradation,
    energy_split,
    free_energies,
    update_internal_state,
    viscoplastic_flow_rate,
)
from .solver import (
    BoundaryConditions,
    FEProblem,
    LoadProgram,
    LoadSegment,
    RunArtifacts,
    SolverConfig,
    StepState,
    material_point_driver,
    relax_to_stress_free,
    run_simulation,
    staggered_step,
)
from .tangent import jaumann_tangent, perturbed_deformation
from .tensors import (
    VolumetricSplit,
    deviator,
    frobenius_norm,
    green_strain,
    left_cauchy_green,
    polar_rotation,
    split_volumetric,
)

__version__ = "0.1.0"
