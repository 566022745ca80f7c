"""Load stepping, Newton iteration, staggered coupling and drivers.

The displacement field is solved by Newton iteration at frozen damage;
the phase-field system is linear and solved directly at frozen history.
Damage irreversibility is enforced twice: through the monotone history
field and through a nodal floor at the previous step's damage. Steps that
fail to converge are retried with recursive halving.

A standalone material-point driver integrates the constitutive update
without any discretization, including mixed (uniaxial stress) control.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
import scipy.sparse.linalg as spla

from .errors import (
    DomainError,
    ElementInverted,
    LateralIterationDiverged,
    LinearSolveFailed,
    NewtonDiverged,
    NonFiniteState,
    SimulationError,
)
from .fem import Mesh, PlaneStrainAssembler, apply_dirichlet, node_set_dofs, reaction_force
from .material import InternalState, Material, update_internal_state
from .tensors import frobenius_norm, green_strain

__all__ = [
    "SolverConfig",
    "LoadSegment",
    "LoadProgram",
    "BoundaryConditions",
    "StepState",
    "FEProblem",
    "staggered_step",
    "RunArtifacts",
    "run_simulation",
    "UniaxialHistory",
    "material_point_driver",
    "relax_to_stress_free",
]


@dataclass
class SolverConfig:
    """Increment sizes, tolerances and bookkeeping knobs for a run."""

    du_increment: float  # mm per step
    rate: float = 1.0  # imposed displacement rate, mm/min
    max_newton_iters: int = 25
    tol_rel_residual: float = 1e-6
    abs_residual_floor: float = 1e-9
    # residual acceptance relative to the largest nodal internal force seen;
    # keeps tiny-increment steps from chasing constitutive branch kinks
    force_rel_floor: float = 1e-5
    staggered_passes: int = 1
    clamp_phi: bool = True
    perturbation_eps: float = 1e-8
    failure_fraction: float = 0.05  # stop when force < fraction * running peak
    snapshot_every: int = 0  # 0 = final snapshot only
    max_step_halvings: int = 12
    thickness: float = 2.3  # mm, out-of-plane

    def __post_init__(self):
        if not self.du_increment > 0.0:
            raise DomainError("du_increment must be positive")
        if not 0.0 < self.tol_rel_residual < 1.0:
            raise DomainError("tol_rel_residual must lie in (0, 1)")
        if self.staggered_passes < 1:
            raise DomainError("staggered_passes must be >= 1")
        if not self.rate > 0.0:
            raise DomainError("rate must be positive")

    @property
    def rate_mm_per_s(self):
        return self.rate / 60.0

    def dt_for(self, du):
        return abs(du) / self.rate_mm_per_s


@dataclass(frozen=True)
class LoadSegment:
    """One leg of the load program.

    ``target`` is an absolute imposed displacement (mm); ``None`` means
    "unload until the reaction force crosses zero".
    """

    target: float | None

    @property
    def to_zero_force(self):
        return self.target is None


@dataclass(frozen=True)
class LoadProgram:
    """Piecewise-linear displacement program, e.g. cyclic load/unload."""

    segments: tuple

    @classmethod
    def from_tokens(cls, tokens):
        """Build from a list of displacement targets and 'zero' markers."""
        segs = []
        for tok in tokens:
            if isinstance(tok, str) and tok.strip().lower() == "zero":
                segs.append(LoadSegment(None))
            else:
                segs.append(LoadSegment(float(tok)))
        if not segs:
            raise DomainError("load program must contain at least one segment")
        return cls(tuple(segs))

    @classmethod
    def monotonic(cls, target):
        return cls((LoadSegment(float(target)),))


@dataclass(frozen=True)
class BoundaryConditions:
    """Homogeneous constraints plus one displacement-driven dof group."""

    fixed: tuple  # ((set_name, 'x'|'y'|'xy'), ...)
    load_set: str
    load_dof: str  # 'x' or 'y'

    def resolve(self, mesh: Mesh):
        fixed_dofs = (
            np.unique(np.concatenate([node_set_dofs(mesh, s, d) for s, d in self.fixed]))
            if self.fixed else np.empty(0, dtype=int)
        )
        loaded = node_set_dofs(mesh, self.load_set, self.load_dof)
        fixed_dofs = np.setdiff1d(fixed_dofs, loaded)
        return fixed_dofs, loaded


@dataclass
class StepState:
    """Converged solution at the end of a load step."""

    u: np.ndarray
    phi: np.ndarray
    qstate: InternalState
    time: float = 0.0
    displacement: float = 0.0

    def copy(self):
        return StepState(self.u.copy(), self.phi.copy(), self.qstate.copy(),
                         self.time, self.displacement)


@dataclass
class StepDiagnostics:
    newton_iters: int = 0
    halvings: int = 0
    min_history_increment: float = 0.0
    min_phi_increment: float = 0.0
    vp_subthreshold_max: float = 0.0
    max_phi: float = 0.0
    psi_plus_integral: float = 0.0


class FEProblem:
    """Mesh + material + solver configuration wired for stepping."""

    def __init__(self, mesh: Mesh, material: Material, config: SolverConfig,
                 bcs: BoundaryConditions):
        self.mesh = mesh
        self.material = material
        self.config = config
        self.assembler = PlaneStrainAssembler(mesh)
        self.fixed_dofs, self.loaded_dofs = bcs.resolve(mesh)
        self.constrained = np.union1d(self.fixed_dofs, self.loaded_dofs)
        self.free_mask = np.ones(self.assembler.n_dof, dtype=bool)
        self.free_mask[self.constrained] = False
        # running out-of-balance force scale; a residual small relative to
        # it counts as converged even at the first iteration of a step
        self.residual_scale = 0.0
        # largest nodal internal force magnitude seen at any converged state
        self.force_scale = 0.0

    def fresh_state(self):
        return StepState(
            u=np.zeros(self.assembler.n_dof),
            phi=np.zeros(self.mesh.n_nodes),
            qstate=InternalState.fresh((self.assembler.nqp,)),
        )

    def reaction(self, f_int):
        return reaction_force(f_int, self.loaded_dofs, self.config.thickness)


def _sparse_solve(K, rhs):
    try:
        x = spla.spsolve(K, rhs)
    except RuntimeError as exc:  # SuperLU singular factorization
        raise LinearSolveFailed(str(exc)) from exc
    if not np.all(np.isfinite(x)):
        raise LinearSolveFailed("linear solve returned non-finite values")
    return x


def _newton_displacement(problem: FEProblem, u, phi, F_old_qp, state0, dt):
    """Newton loop on the displacement field at frozen damage.

    The stiffness is only assembled when another iteration is actually
    taken; the converged check needs just the residual.
    """
    cfg = problem.config
    floor = max(cfg.abs_residual_floor,
                cfg.tol_rel_residual * problem.residual_scale,
                cfg.force_rel_floor * problem.force_scale)
    r0 = None
    for it in range(cfg.max_newton_iters + 1):
        r, trial, ctx = problem.assembler.evaluate_residual(
            u, F_old_qp, phi, state0, dt, problem.material)
        rn = float(np.linalg.norm(r[problem.free_mask]))
        if r0 is None:
            r0 = max(rn, floor)
            problem.residual_scale = max(problem.residual_scale, rn)
        if rn <= floor or rn <= cfg.tol_rel_residual * r0:
            problem.force_scale = max(problem.force_scale, float(np.max(np.abs(trial.f_int))))
            return u, trial, it
        if it == cfg.max_newton_iters:
            break
        K = problem.assembler.assemble_stiffness(trial, ctx, problem.material,
                                                 cfg.perturbation_eps)
        K_sys, rhs = apply_dirichlet(K, -r, problem.constrained)
        u = u + _sparse_solve(K_sys, rhs)
    raise NewtonDiverged(
        f"no convergence in {cfg.max_newton_iters} iterations (|r| = {rn:.3e}, |r0| = {r0:.3e})")


def staggered_step(problem: FEProblem, state: StepState, du, dt):
    """Advance one increment: alternating u-solve and phi-solve.

    The displacement Newton always restarts the constitutive trial from
    the increment's initial internal states, so repeated staggered passes
    re-solve the same time window with an updated phase field.
    """
    cfg = problem.config
    u = state.u.copy()
    u[problem.loaded_dofs] += du
    F_old_qp = problem.assembler.deformation_gradients(state.u)
    phi = state.phi
    iters_total = 0
    for _ in range(cfg.staggered_passes):
        u, trial, iters = _newton_displacement(problem, u, phi, F_old_qp, state.qstate, dt)
        iters_total += iters
        K_phi, f_phi = problem.assembler.assemble_phasefield(
            u, trial.state.history, problem.material)
        phi = _sparse_solve(K_phi, f_phi)
        if cfg.clamp_phi:
            np.clip(phi, 0.0, 1.0, out=phi)
        phi = np.maximum(phi, state.phi)  # nodal irreversibility projection

    diag = StepDiagnostics(
        newton_iters=iters_total,
        min_history_increment=float(np.min(trial.state.history - state.qstate.history)),
        min_phi_increment=float(np.min(phi - state.phi)),
        vp_subthreshold_max=float(np.max(trial.stress.vp_rate_subthreshold)),
        max_phi=float(np.max(phi)),
        psi_plus_integral=problem.assembler.integrate_qp(trial.stress.psi_plus),
    )
    new_state = StepState(u=u, phi=phi, qstate=trial.state,
                          time=state.time + dt, displacement=state.displacement + du)
    return new_state, trial, diag


def _substep(problem, state, du, dt, depth):
    """Step with recursive halving on convergence failure."""
    try:
        return (*staggered_step(problem, state, du, dt), depth)
    except (NewtonDiverged, NonFiniteState, LinearSolveFailed, ElementInverted):
        if depth >= problem.config.max_step_halvings:
            raise
        mid, _, _, d1 = _substep(problem, state, du / 2, dt / 2, depth + 1)
        new, trial, diag, d2 = _substep(problem, mid, du / 2, dt / 2, depth + 1)
        diag.halvings = max(d1, d2)
        return new, trial, diag, max(d1, d2)


@dataclass
class RunArtifacts:
    """Everything a simulation run records.

    ``curve`` rows are (step, time_s, displacement_mm, force_N, max_phi);
    ``psi_plus_integrals`` parallels the curve. Snapshots hold copies of
    the nodal fields at the configured cadence plus the final state.
    """

    curve: list = field(default_factory=list)
    psi_plus_integrals: list = field(default_factory=list)
    snapshots: list = field(default_factory=list)  # (step, u, phi)
    metadata: dict = field(default_factory=dict)
    # acceptance bookkeeping
    history_monotone: bool = True
    phi_monotone: bool = True
    vp_subthreshold_max: float = 0.0
    peak_force: float = 0.0
    failure_step: int | None = None
    failure_displacement: float | None = None
    qp_ever_tension: np.ndarray = None
    final_phi_qp: np.ndarray = None
    final_state: StepState = None

    def displacement_at_force_drop(self, drop=0.9):
        """First recorded displacement where force <= (1-drop) * running peak."""
        peak = 0.0
        for (_, _, d, f, _) in self.curve:
            peak = max(peak, f)
            if peak > 0.0 and f <= (1.0 - drop) * peak:
                return d
        return None


def run_simulation(mesh: Mesh, material: Material, program: LoadProgram,
                   config: SolverConfig, bcs: BoundaryConditions,
                   log=None):
    """March a load program and record the structural response.

    Stops on program completion or on failure detection (reaction force
    below ``failure_fraction`` of its running peak). Unload-to-zero-force
    segments roll back the step that crossed zero and finish with a
    linearly interpolated partial step.
    """
    problem = FEProblem(mesh, material, config, bcs)
    state = problem.fresh_state()
    arts = RunArtifacts()
    arts.qp_ever_tension = np.zeros(problem.assembler.nqp, dtype=bool)
    arts.metadata["n_elements"] = mesh.n_elements
    arts.metadata["n_nodes"] = mesh.n_nodes

    step = 0
    last_force = 0.0
    peak_displacement = 0.0
    stop = False

    def record(state, trial, diag, du):
        nonlocal step, last_force, peak_displacement, stop
        step += 1
        force = problem.reaction(trial.f_int)
        arts.curve.append((step, state.time, state.displacement, force, diag.max_phi))
        arts.psi_plus_integrals.append(diag.psi_plus_integral)
        arts.history_monotone &= diag.min_history_increment >= 0.0
        arts.phi_monotone &= diag.min_phi_increment >= 0.0
        arts.vp_subthreshold_max = max(arts.vp_subthreshold_max, diag.vp_subthreshold_max)
        arts.qp_ever_tension |= trial.J >= 1.0
        if config.snapshot_every and step % config.snapshot_every == 0:
            arts.snapshots.append((step, state.u.copy(), state.phi.copy()))
        if log is not None and (step % log == 0):
            print(f"  step {step:6d}  u={state.displacement:9.5f} mm  "
                  f"F={force:10.4f} N  max_phi={diag.max_phi:.4f}  it={diag.newton_iters}")
        if force > arts.peak_force:
            arts.peak_force = force
            peak_displacement = state.displacement
        elif (du > 0 and arts.peak_force > 0.0
              and state.displacement > peak_displacement  # past the envelope peak
              and force < config.failure_fraction * arts.peak_force):
            arts.failure_step = step
            arts.failure_displacement = state.displacement
            stop = True
        last_force = force
        return force

    try:
        for segment in program.segments:
            if stop:
                break
            direction = 1.0
            if segment.to_zero_force:
                direction = -1.0
            elif segment.target < state.displacement:
                direction = -1.0

            while not stop:
                du = direction * config.du_increment
                if not segment.to_zero_force:
                    remaining = segment.target - state.displacement
                    if abs(remaining) <= 1e-14:
                        break
                    if abs(remaining) < abs(du):
                        du = remaining
                prev = state.copy()
                prev_force = last_force
                state, trial, diag, _ = _substep(problem, state, du, config.dt_for(du), 0)
                force = record(state, trial, diag, du)
                if segment.to_zero_force and force <= 0.0:
                    if force < 0.0 and prev_force > 0.0:
                        # roll back and land exactly on the zero crossing
                        frac = prev_force / (prev_force - force)
                        arts.curve.pop()
                        arts.psi_plus_integrals.pop()
                        step -= 1
                        du_star = frac * du
                        state, trial, diag, _ = _substep(
                            problem, prev, du_star, config.dt_for(du_star), 0)
                        record(state, trial, diag, du_star)
                    break
    except SimulationError as exc:
        raise type(exc)(f"step {step + 1}: {exc}") from exc

    arts.snapshots.append((step, state.u.copy(), state.phi.copy()))
    arts.final_phi_qp = problem.assembler.interpolate_nodal(state.phi)
    arts.final_state = state
    arts.metadata["steps"] = step
    return arts


# ----------------------------------------------------------------------
# material-point driver (no discretization)
# ----------------------------------------------------------------------

@dataclass
class UniaxialHistory:
    """Per-step record of a mixed-control uniaxial run."""

    time: list = field(default_factory=list)
    stretch: list = field(default_factory=list)
    stretch_lateral: list = field(default_factory=list)
    sigma_axial: list = field(default_factory=list)
    tau_neq: list = field(default_factory=list)
    eps_eff: list = field(default_factory=list)
    state: InternalState = None
    F: np.ndarray = None

    def arrays(self):
        return (np.asarray(self.time), np.asarray(self.stretch),
                np.asarray(self.sigma_axial))


def _uniaxial_f(lam, lat):
    return np.diag([lam, lat, lat])


def _solve_lateral(material, state, F_old, lam_new, lat_guess, dt, phi=0.0,
                   tol=1e-8, max_iter=40):
    """Find the lateral stretch zeroing the transverse stress at step end."""
    lat = lat_guess
    for _ in range(max_iter):
        _, res = update_internal_state(F_old, _uniaxial_f(lam_new, lat), state, dt, phi, material)
        s22 = float(res.sigma[1, 1])
        if abs(s22) < tol:
            return lat
        h = 1e-7 * max(abs(lat), 1.0)
        _, res_h = update_internal_state(F_old, _uniaxial_f(lam_new, lat + h), state, dt,
                                         phi, material)
        slope = (float(res_h.sigma[1, 1]) - s22) / h
        if slope == 0.0 or not np.isfinite(slope):
            raise LateralIterationDiverged("flat transverse stress slope")
        lat -= s22 / slope
        if not 0.0 < lat < 10.0:
            raise LateralIterationDiverged(f"lateral stretch left (0, 10): {lat}")
    raise LateralIterationDiverged(f"|sigma_22| = {abs(s22):.3e} after {max_iter} iterations")


def material_point_driver(material: Material, segments, stretch_rate,
                          n_steps_per_unit=2000, phi=0.0):
    """Uniaxial-stress cyclic driver for the constitutive model alone.

    Parameters
    ----------
    segments : sequence of float | 'zero'
        Axial stretch targets; 'zero' unloads until the axial stress
        crosses zero (the crossing is landed by linear interpolation).
    stretch_rate : float
        d(lambda)/dt in 1/s; sets dt per step.
    n_steps_per_unit : int
        Step density: steps = n_steps_per_unit * |segment span|.
    """
    hist = UniaxialHistory()
    state = InternalState.fresh()
    lam, lat = 1.0, 1.0
    t = 0.0
    F_old = _uniaxial_f(lam, lat)

    def advance(lam_new, dt):
        nonlocal state, lam, lat, t, F_old
        lat_new = _solve_lateral(material, state, F_old, lam_new, lat * (lam / lam_new) ** 0.5,
                                 dt, phi)
        F_new = _uniaxial_f(lam_new, lat_new)
        state, res = update_internal_state(F_old, F_new, state, dt, phi, material)
        lam, lat, t = lam_new, lat_new, t + dt
        F_old = F_new
        hist.time.append(t)
        hist.stretch.append(lam)
        hist.stretch_lateral.append(lat)
        hist.sigma_axial.append(float(res.sigma[0, 0]))
        hist.tau_neq.append(float(res.tau_neq))
        hist.eps_eff.append(float(frobenius_norm(green_strain(F_new))))
        return res

    for seg in segments:
        to_zero = isinstance(seg, str) and seg.strip().lower() == "zero"
        if to_zero:
            dlam = -1.0 / n_steps_per_unit
            while True:
                prev_sigma = hist.sigma_axial[-1] if hist.sigma_axial else 0.0
                prev_lam = lam
                prev_state = state.copy()
                prev_F = F_old.copy()
                res = advance(lam + dlam, abs(dlam) / stretch_rate)
                if float(res.sigma[0, 0]) <= 0.0:
                    if prev_sigma > 0.0 and float(res.sigma[0, 0]) < 0.0:
                        frac = prev_sigma / (prev_sigma - float(res.sigma[0, 0]))
                        # roll back and land on the interpolated crossing
                        for lst in (hist.time, hist.stretch, hist.stretch_lateral,
                                    hist.sigma_axial, hist.tau_neq, hist.eps_eff):
                            lst.pop()
                        state, lam, F_old = prev_state, prev_lam, prev_F
                        t = hist.time[-1] if hist.time else 0.0
                        dl = frac * dlam
                        advance(lam + dl, abs(dl) / stretch_rate)
                    break
        else:
            target = float(seg)
            span = target - lam
            n = max(int(round(abs(span) * n_steps_per_unit)), 1)
            dlam = span / n
            for _ in range(n):
                advance(lam + dlam, abs(dlam) / stretch_rate)

    hist.state = state
    hist.F = F_old
    return hist


def relax_to_stress_free(material: Material, state: InternalState, F_start,
                         tol_sigma=1e-8, tau_stop=1e-6, max_steps=20000, phi=0.0):
    """Hold at zero total stress until the viscous branch has relaxed.

    Marches with adaptive time steps (bounded by the current flow rate),
    solving both stretches of a diagonal deformation for zero axial and
    transverse stress. Returns (F_final, state, eps_eff) where eps_eff is
    the residual effective strain of the stress-free configuration.
    """
    mu = material.moduli.mu_neq
    lam = float(F_start[0, 0])
    lat = float(F_start[1, 1])
    F_old = np.diag([lam, lat, lat])

    from .material import argon_flow_rate  # local import to avoid cycle noise

    for _ in range(max_steps):
        _, res0 = update_internal_state(F_old, F_old, state, 0.0, phi, material)
        tau = float(res0.tau_neq)
        if tau < tau_stop and abs(float(res0.sigma[0, 0])) < tol_sigma \
                and abs(float(res0.sigma[1, 1])) < tol_sigma:
            break
        rate = max(float(argon_flow_rate(tau, material.env.theta, material.params)), 1e-12)
        dt = min(2e4, 0.25 * max(tau, 1e-9) / (2.0 * mu * rate))
        # two-unknown Newton for a fully stress-free diagonal state
        x = np.array([lam, lat])
        for _ in range(40):
            F_new = np.diag([x[0], x[1], x[1]])
            st_try, res = update_internal_state(F_old, F_new, state, dt, phi, material)
            r = np.array([float(res.sigma[0, 0]), float(res.sigma[1, 1])])
            if np.max(np.abs(r)) < tol_sigma:
                break
            jac = np.empty((2, 2))
            for k in range(2):
                xh = x.copy()
                h = 1e-7 * max(abs(x[k]), 1.0)
                xh[k] += h
                _, res_h = update_internal_state(F_old, np.diag([xh[0], xh[1], xh[1]]),
                                                 state, dt, phi, material)
                jac[:, k] = (np.array([float(res_h.sigma[0, 0]),
                                       float(res_h.sigma[1, 1])]) - r) / h
            x = x - np.linalg.solve(jac, r)
        else:
            raise LateralIterationDiverged("stress-free relaxation Newton stalled")
        lam, lat = float(x[0]), float(x[1])
        state = st_try
        F_old = np.diag([lam, lat, lat])
    F_final = np.diag([lam, lat, lat])
    return F_final, state, float(frobenius_norm(green_strain(F_final)))
