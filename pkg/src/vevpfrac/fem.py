"""Q4 plane-strain discretization: shape functions, quadrature, assembly.

Assembly is spatial (updated configuration, dv = J dV) following the
pushed-forward weak forms. The displacement system carries the numerical
corotational tangent plus the geometric stress term; the phase-field
system is linear in the nodal damage for the quadratic degradation
function. The two coupling stiffness blocks of the monolithic scheme are
intentionally never assembled (staggered solution).

Quadrature states are stored per (element, Gauss point) in one flat batch
of length 4 * n_elements, ordered element-major.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
import scipy.sparse as sp

from .errors import (
    AssemblyDimensionMismatch,
    ElementInverted,
    UnknownNodeSet,
)
from .material import InternalState, Material, StressResult, prepare_stage1, update_internal_state
from .tangent import PLANE_PAIRS, jaumann_tangent

__all__ = [
    "GAUSS_POINTS",
    "shape_functions",
    "Mesh",
    "node_set_dofs",
    "PlaneStrainAssembler",
    "apply_dirichlet",
    "reaction_force",
]

# 2x2 Gauss rule on [-1, 1]^2, all weights 1.
_G = 1.0 / np.sqrt(3.0)
GAUSS_POINTS = np.array([[-_G, -_G], [_G, -_G], [_G, _G], [-_G, _G]])

# In-plane rows (11, 22, 12) of the Voigt tangent.
_PLANE_ROWS = np.array([0, 1, 3])


def shape_functions(xi, eta):
    """Bilinear Q4 basis at one parent-domain point.

    Returns (N, dN) with N of shape (4,) and dN of shape (4, 2) holding
    the parent-coordinate derivatives. Node order is counter-clockwise
    from (-1, -1).
    """
    n = 0.25 * np.array([
        (1 - xi) * (1 - eta),
        (1 + xi) * (1 - eta),
        (1 + xi) * (1 + eta),
        (1 - xi) * (1 + eta),
    ])
    dn = 0.25 * np.array([
        [-(1 - eta), -(1 - xi)],
        [(1 - eta), -(1 + xi)],
        [(1 + eta), (1 + xi)],
        [-(1 + eta), (1 - xi)],
    ])
    return n, dn


@dataclass
class Mesh:
    """Q4 mesh with named node sets for boundary conditions.

    ``elems`` holds 0-based node indices in counter-clockwise order;
    ``node_ids``/``elem_ids`` preserve the file ids for round-tripping.
    """

    node_ids: np.ndarray
    coords: np.ndarray
    elems: np.ndarray
    elem_ids: np.ndarray
    node_sets: dict = field(default_factory=dict)

    @property
    def n_nodes(self):
        return self.coords.shape[0]

    @property
    def n_elements(self):
        return self.elems.shape[0]

    def reference_jacobians(self):
        """det of the reference isoparametric map, shape (n_elements, 4)."""
        xe = self.coords[self.elems]  # (ne, 4, 2)
        dets = np.empty((self.n_elements, 4))
        for gp, (xi, eta) in enumerate(GAUSS_POINTS):
            _, dn = shape_functions(xi, eta)
            jac = np.einsum("eai,aj->eij", xe, dn)
            dets[:, gp] = jac[:, 0, 0] * jac[:, 1, 1] - jac[:, 0, 1] * jac[:, 1, 0]
        return dets


def node_set_dofs(mesh: Mesh, set_name: str, dofs: str):
    """Global displacement dof indices for a named node set.

    ``dofs`` is 'x', 'y' or 'xy'. Raises UnknownNodeSet for a missing set.
    """
    if set_name not in mesh.node_sets:
        raise UnknownNodeSet(f"node set '{set_name}' not defined in mesh")
    nodes = np.asarray(mesh.node_sets[set_name], dtype=int)
    out = []
    if "x" in dofs:
        out.append(2 * nodes)
    if "y" in dofs:
        out.append(2 * nodes + 1)
    if not out:
        raise UnknownNodeSet(f"dof spec '{dofs}' must contain x and/or y")
    return np.sort(np.concatenate(out))


@dataclass
class TrialFields:
    """Per-quadrature-point output of one displacement assembly."""

    state: InternalState
    stress: StressResult
    F: np.ndarray  # (nqp, 3, 3)
    J: np.ndarray  # (nqp,)
    phi: np.ndarray  # (nqp,)
    f_int: np.ndarray  # assembled internal force (copy of the residual)


class PlaneStrainAssembler:
    """Vectorized residual/stiffness assembly for one mesh.

    Reference-configuration quantities are precomputed once; each call
    re-evaluates current-configuration kinematics from the nodal
    displacements. One instance owns the quadrature-point batch layout
    (element-major, 4 points per element).
    """

    def __init__(self, mesh: Mesh):
        self.mesh = mesh
        ne = mesh.n_elements
        self.n_dof = 2 * mesh.n_nodes
        self.nqp = 4 * ne

        conn = mesh.elems
        self.conn = conn
        self.Xe = mesh.coords[conn]  # (ne, 4, 2)

        # interleaved displacement dof map (ne, 8)
        edof = np.empty((ne, 8), dtype=int)
        edof[:, 0::2] = 2 * conn
        edof[:, 1::2] = 2 * conn + 1
        self.edof = edof
        self._rows_u = np.repeat(edof, 8, axis=1).ravel()
        self._cols_u = np.tile(edof, (1, 8)).ravel()
        self._rows_phi = np.repeat(conn, 4, axis=1).ravel()
        self._cols_phi = np.tile(conn, (1, 4)).ravel()

        # parent-domain basis at the four Gauss points
        self._N = np.empty((4, 4))
        self._dN = np.empty((4, 4, 2))
        for gp, (xi, eta) in enumerate(GAUSS_POINTS):
            self._N[gp], self._dN[gp] = shape_functions(xi, eta)

        # reference Jacobians (per gp): inverse and determinant
        self._invJ_ref = np.empty((4, ne, 2, 2))
        self._w_ref = np.empty((4, ne))
        for gp in range(4):
            jac = np.einsum("eai,aj->eij", self.Xe, self._dN[gp])
            det = jac[:, 0, 0] * jac[:, 1, 1] - jac[:, 0, 1] * jac[:, 1, 0]
            if np.any(det <= 0.0):
                raise ElementInverted(int(mesh.elem_ids[np.argmax(det <= 0.0)]),
                                      "non-positive reference Jacobian")
            inv = np.empty_like(jac)
            inv[:, 0, 0] = jac[:, 1, 1]
            inv[:, 1, 1] = jac[:, 0, 0]
            inv[:, 0, 1] = -jac[:, 0, 1]
            inv[:, 1, 0] = -jac[:, 1, 0]
            inv /= det[:, None, None]
            self._invJ_ref[gp] = inv
            self._w_ref[gp] = det

    # ------------------------------------------------------------------
    # kinematics
    # ------------------------------------------------------------------
    def _check_u(self, u):
        u = np.asarray(u, dtype=float)
        if u.shape != (self.n_dof,):
            raise AssemblyDimensionMismatch(
                f"displacement vector has shape {u.shape}, expected ({self.n_dof},)")
        return u

    def current_kinematics(self, u):
        """Per-Gauss-point deformation data at nodal displacements u.

        Returns (F, dNdx, w_cur, J) with F of shape (4, ne, 3, 3), current
        gradients dNdx (4, ne, 4, 2), current integration weights
        (4, ne) and J = det F (4, ne). Raises ElementInverted when the
        current configuration folds over.
        """
        u = self._check_u(u)
        ne = self.mesh.n_elements
        xe = self.Xe + u.reshape(-1, 2)[self.conn]
        F = np.zeros((4, ne, 3, 3))
        F[..., 2, 2] = 1.0
        dNdx = np.empty((4, ne, 4, 2))
        w_cur = np.empty((4, ne))
        for gp in range(4):
            jac = np.einsum("eai,aj->eij", xe, self._dN[gp])
            det = jac[:, 0, 0] * jac[:, 1, 1] - jac[:, 0, 1] * jac[:, 1, 0]
            if np.any(det <= 0.0) or not np.all(np.isfinite(det)):
                bad = int(np.argmax(~(det > 0.0)))
                raise ElementInverted(int(self.mesh.elem_ids[bad]),
                                      "element inverted in current configuration")
            F[gp, :, :2, :2] = np.einsum("eij,ejk->eik", jac, self._invJ_ref[gp])
            inv = np.empty_like(jac)
            inv[:, 0, 0] = jac[:, 1, 1]
            inv[:, 1, 1] = jac[:, 0, 0]
            inv[:, 0, 1] = -jac[:, 0, 1]
            inv[:, 1, 0] = -jac[:, 1, 0]
            inv /= det[:, None, None]
            dNdx[gp] = np.einsum("aj,eji->eai", self._dN[gp], inv)
            w_cur[gp] = det
        J = w_cur / self._w_ref
        return F, dNdx, w_cur, J

    def deformation_gradients(self, u):
        """Flat (nqp, 3, 3) deformation gradients at displacements u."""
        F, _, _, _ = self.current_kinematics(u)
        return self._flatten(F)

    def _flatten(self, per_gp):
        """(4, ne, ...) -> (nqp, ...) in element-major order."""
        return np.ascontiguousarray(np.swapaxes(per_gp, 0, 1)).reshape(
            (self.nqp,) + per_gp.shape[2:])

    def _per_gp(self, flat):
        """(nqp, ...) -> (4, ne, ...)."""
        return np.swapaxes(flat.reshape((self.mesh.n_elements, 4) + flat.shape[1:]), 0, 1)

    def interpolate_nodal(self, values):
        """Interpolate a nodal scalar field to the quadrature points, (nqp,)."""
        ve = np.asarray(values, dtype=float)[self.conn]  # (ne, 4)
        out = np.einsum("ga,ea->ge", self._N, ve)
        return self._flatten(out)

    def qp_reference_coords(self):
        """Reference coordinates of the quadrature points, (nqp, 2)."""
        out = np.einsum("ga,eai->gei", self._N, self.Xe)
        return self._flatten(out)

    def integrate_qp(self, values_qp):
        """Reference-volume integral of a per-quadrature-point scalar."""
        v = self._per_gp(np.asarray(values_qp, dtype=float))
        return float(np.sum(v * self._w_ref))

    # ------------------------------------------------------------------
    # assembly
    # ------------------------------------------------------------------
    def _b_matrix(self, dNdx_gp):
        ne = self.mesh.n_elements
        b = np.zeros((ne, 3, 8))
        b[:, 0, 0::2] = dNdx_gp[:, :, 0]
        b[:, 1, 1::2] = dNdx_gp[:, :, 1]
        b[:, 2, 0::2] = dNdx_gp[:, :, 1]
        b[:, 2, 1::2] = dNdx_gp[:, :, 0]
        return b

    def evaluate_residual(self, u, F_old_qp, phi_nodal, state0: InternalState,
                          dt, material: Material):
        """Internal-force vector and trial fields at frozen phi.

        The constitutive trial update restarts from ``state0`` (the
        converged start-of-increment states). Returns (r, trial, ctx)
        where ctx carries the kinematic data a subsequent stiffness
        assembly reuses.
        """
        phi_nodal = np.asarray(phi_nodal, dtype=float)
        if phi_nodal.shape != (self.mesh.n_nodes,):
            raise AssemblyDimensionMismatch(
                f"phase field has shape {phi_nodal.shape}, expected ({self.mesh.n_nodes},)")
        F, dNdx, w_cur, J = self.current_kinematics(u)
        F_flat = self._flatten(F)
        phi_qp = self.interpolate_nodal(phi_nodal)

        stage1 = prepare_stage1(F_old_qp, state0, phi_qp, dt, material)
        state_new, res = update_internal_state(F_old_qp, F_flat, state0, dt, phi_qp,
                                               material, stage1=stage1)
        sig_gp = self._per_gp(res.sigma)

        ne = self.mesh.n_elements
        r_e = np.zeros((ne, 8))
        for gp in range(4):
            b = self._b_matrix(dNdx[gp])
            sv = np.stack([sig_gp[gp][:, 0, 0], sig_gp[gp][:, 1, 1], sig_gp[gp][:, 0, 1]],
                          axis=-1)
            r_e += np.einsum("eki,ek->ei", b, sv * w_cur[gp][:, None])
        r = np.bincount(self.edof.ravel(), weights=r_e.ravel(), minlength=self.n_dof)

        trial = TrialFields(state=state_new, stress=res, F=F_flat,
                            J=self._flatten(J), phi=phi_qp, f_int=r.copy())
        ctx = {"F_old_qp": F_old_qp, "state0": state0, "dt": dt, "dNdx": dNdx,
               "w_cur": w_cur, "stage1": stage1}
        return r, trial, ctx

    def assemble_stiffness(self, trial: TrialFields, ctx, material: Material, eps=1e-8):
        """Tangent stiffness for the trial state of evaluate_residual."""
        tangent = jaumann_tangent(ctx["F_old_qp"], trial.F, ctx["state0"], trial.phi,
                                  ctx["dt"], material, eps=eps, pairs=PLANE_PAIRS,
                                  base_sigma=trial.stress.sigma, stage1=ctx["stage1"])
        c2_gp = self._per_gp(tangent[:, _PLANE_ROWS, :])
        sig_gp = self._per_gp(trial.stress.sigma)
        dNdx, w_cur = ctx["dNdx"], ctx["w_cur"]

        ne = self.mesh.n_elements
        K_e = np.zeros((ne, 8, 8))
        for gp in range(4):
            w = w_cur[gp]
            b = self._b_matrix(dNdx[gp])
            cw = c2_gp[gp] * w[:, None, None]
            K_e += np.einsum("eki,ekl,elj->eij", b, cw, b, optimize=True)
            sig2 = sig_gp[gp][:, :2, :2] * w[:, None, None]
            kgeo = np.einsum("eai,eij,ebj->eab", dNdx[gp], sig2, dNdx[gp], optimize=True)
            K_e[:, 0::2, 0::2] += kgeo
            K_e[:, 1::2, 1::2] += kgeo
        return sp.coo_matrix((K_e.ravel(), (self._rows_u, self._cols_u)),
                             shape=(self.n_dof, self.n_dof)).tocsr()

    def assemble_displacement(self, u, F_old_qp, phi_nodal, state0: InternalState,
                              dt, material: Material, eps=1e-8):
        """Stiffness, internal-force vector and trial fields at frozen phi.

        One-shot combination of evaluate_residual and assemble_stiffness.
        """
        r, trial, ctx = self.evaluate_residual(u, F_old_qp, phi_nodal, state0, dt, material)
        K = self.assemble_stiffness(trial, ctx, material, eps)
        return K, r, trial

    def assemble_phasefield(self, u, history_qp, material: Material):
        """Linear phase-field system K phi = f at frozen history field.

        Spatial gradients with referential weights (the J^{-1} dv
        measure); the system is symmetric positive definite.
        """
        h = self._per_gp(np.asarray(history_qp, dtype=float))
        gc = material.moduli.G_c
        l0 = material.params.l0
        _, dNdx, _, _ = self.current_kinematics(u)

        ne = self.mesh.n_elements
        K_e = np.zeros((ne, 4, 4))
        f_e = np.zeros((ne, 4))
        for gp in range(4):
            w = self._w_ref[gp]
            nn = np.outer(self._N[gp], self._N[gp])
            react = (2.0 * h[gp] + gc / l0) * w
            K_e += react[:, None, None] * nn[None]
            K_e += (gc * l0) * w[:, None, None] * np.einsum(
                "eai,ebi->eab", dNdx[gp], dNdx[gp])
            f_e += (2.0 * h[gp] * w)[:, None] * self._N[gp][None]

        n = self.mesh.n_nodes
        K = sp.coo_matrix((K_e.ravel(), (self._rows_phi, self._cols_phi)),
                          shape=(n, n)).tocsr()
        f = np.bincount(self.conn.ravel(), weights=f_e.ravel(), minlength=n)
        return K, f


def apply_dirichlet(K, rhs, dofs, values=None):
    """Row/column elimination with right-hand-side correction.

    Constrained rows/columns are removed, the prescribed values are moved
    to the right-hand side, and the constrained rows become identity rows
    carrying the prescribed values. Returns (K', rhs').
    """
    n = K.shape[0]
    dofs = np.asarray(dofs, dtype=int)
    v = np.zeros(n)
    if values is not None:
        v[dofs] = values
    rhs = np.asarray(rhs, dtype=float) - K @ v
    constrained = np.zeros(n, dtype=bool)
    constrained[dofs] = True

    coo = K.tocoo()
    keep = ~constrained[coo.row] & ~constrained[coo.col]
    rows = np.concatenate([coo.row[keep], dofs])
    cols = np.concatenate([coo.col[keep], dofs])
    data = np.concatenate([coo.data[keep], np.ones(dofs.shape[0])])
    K_out = sp.coo_matrix((data, (rows, cols)), shape=K.shape).tocsr()
    rhs[dofs] = v[dofs]
    return K_out, rhs


def reaction_force(f_int, dofs, thickness):
    """Reaction at constrained dofs, scaled from per-unit-thickness to N."""
    return float(thickness * np.sum(np.asarray(f_int)[np.asarray(dofs, dtype=int)]))
