"""Configuration parsing, mesh I/O, mesh generation, result export, CLI.

Config files are flat ``key = value`` text, one pair per line, ``#``
comments. Mesh files are whitespace-delimited ASCII with NODES / ELEMENTS
/ NSET sections. Curves go to CSV, field snapshots to legacy ASCII
unstructured-grid files readable by standard viewers.
"""

from __future__ import annotations

import argparse
import sys
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .environment import EnvironmentConditions, MaterialParameters
from .errors import (
    ConfigError,
    DanglingNodeReference,
    DegenerateGeometry,
    DomainError,
    InvertedElement,
    MalformedSection,
    MissingKey,
    SimulationError,
    UnknownKey,
    UnparsableValue,
)
from .fem import Mesh
from .material import InternalState, Material
from .solver import (
    BoundaryConditions,
    LoadProgram,
    RunArtifacts,
    SolverConfig,
    material_point_driver,
    run_simulation,
)

__all__ = [
    "RunSetup",
    "read_config",
    "read_mesh",
    "write_mesh",
    "DogboneParams",
    "SenParams",
    "generate_dogbone",
    "generate_sen_plate",
    "write_curve_csv",
    "write_fields_vtk",
    "write_all_fields",
    "random_finite_strain_states",
    "tangent_consistency_check",
    "small_strain_tangent_errors",
    "cli_main",
    "main",
]


# ----------------------------------------------------------------------
# configuration
# ----------------------------------------------------------------------

_MATERIAL_KEYS = (
    "mu_eq_ref", "mu_neq_ref", "kv_ref", "epsdot0", "deltaH", "m_exp", "tau0",
    "a_vp", "b_vp_slope", "b_vp_offset", "sigma0_base", "Gc_ref", "l0",
    "sigma_d_base", "alpha_w",
)
_MATERIAL_OPTIONAL = ("theta_ref", "alpha_kit", "k_stab")
_ENV_KEYS = ("theta",)
_ENV_OPTIONAL = ("w_w", "nu_np")
_SOLVER_FLOAT = {
    "du_increment": None, "rate": 1.0, "tol_rel_residual": 1e-6,
    "abs_residual_floor": 1e-9, "perturbation_eps": 1e-8,
    "failure_fraction": 0.05, "thickness": 2.3,
}
_SOLVER_INT = {
    "max_newton_iters": 25, "staggered_passes": 1, "snapshot_every": 0,
    "max_step_halvings": 12,
}
_SOLVER_BOOL = {"clamp_phi": True}
_STRING_KEYS = {
    "mesh": None, "fix": None, "load": None, "load_segments": None,
    "curve_out": "curve.csv", "fields_out": "",
    "mp_segments": "1.05", "mp_csv": "mp_curve.csv",
}
_MP_FLOAT = {"mp_stretch_rate": 1e-3}
_MP_INT = {"mp_steps_per_unit": 2000}

_ALL_KEYS = (set(_MATERIAL_KEYS) | set(_MATERIAL_OPTIONAL) | set(_ENV_KEYS)
             | set(_ENV_OPTIONAL) | set(_SOLVER_FLOAT) | set(_SOLVER_INT)
             | set(_SOLVER_BOOL) | set(_STRING_KEYS) | set(_MP_FLOAT) | set(_MP_INT))

_REQUIRED = set(_MATERIAL_KEYS) | set(_ENV_KEYS) | {
    "du_increment", "mesh", "fix", "load", "load_segments"}


@dataclass
class RunSetup:
    """Everything a run needs, parsed from one config file."""

    params: MaterialParameters
    env: EnvironmentConditions
    solver: SolverConfig
    program: LoadProgram
    bcs: BoundaryConditions
    mesh_path: Path
    curve_out: Path
    fields_out: str  # snapshot path prefix; empty disables field output
    mp_segments: list
    mp_stretch_rate: float
    mp_steps_per_unit: int
    mp_csv: Path
    raw: dict  # key -> parsed scalar/string, for provenance checks

    def material(self):
        return Material.create(self.params, self.env)


def _parse_bool(raw):
    s = raw.strip().lower()
    if s in ("on", "true", "1", "yes"):
        return True
    if s in ("off", "false", "0", "no"):
        return False
    raise ValueError(raw)


def read_config(path):
    """Parse a flat key = value config file into a RunSetup.

    Unknown keys, missing required keys and unparsable values are
    reported with the offending key and line number. The mesh path is
    resolved relative to the config file's directory.
    """
    path = Path(path)
    lines = path.read_text().splitlines()
    raw = {}
    lineno_of = {}
    for lineno, line in enumerate(lines, start=1):
        stripped = line.split("#", 1)[0].strip()
        if not stripped:
            continue
        if "=" not in stripped:
            raise UnparsableValue("<line>", stripped, lineno)
        key, _, value = stripped.partition("=")
        key = key.strip()
        value = value.strip()
        if key not in _ALL_KEYS:
            raise UnknownKey(key, lineno)
        if key in raw:
            raise UnparsableValue(key, f"duplicate of line {lineno_of[key]}", lineno)
        raw[key] = value
        lineno_of[key] = lineno

    for key in sorted(_REQUIRED):
        if key not in raw:
            raise MissingKey(key)

    def take_float(key, default=None):
        if key not in raw:
            return default
        try:
            return float(raw[key])
        except ValueError:
            raise UnparsableValue(key, raw[key], lineno_of[key]) from None

    def take_int(key, default=None):
        if key not in raw:
            return default
        try:
            return int(raw[key])
        except ValueError:
            raise UnparsableValue(key, raw[key], lineno_of[key]) from None

    def take_bool(key, default):
        if key not in raw:
            return default
        try:
            return _parse_bool(raw[key])
        except ValueError:
            raise UnparsableValue(key, raw[key], lineno_of[key]) from None

    params = MaterialParameters(
        **{k: take_float(k) for k in _MATERIAL_KEYS},
        theta_ref=take_float("theta_ref", 296.0),
        alpha_kit=take_float("alpha_kit", None),
        k_stab=take_float("k_stab", 1e-7),
    )
    env = EnvironmentConditions(
        theta=take_float("theta"),
        w_w=take_float("w_w", 0.0),
        nu_np=take_float("nu_np", 0.0),
    )
    solver = SolverConfig(
        du_increment=take_float("du_increment"),
        rate=take_float("rate", _SOLVER_FLOAT["rate"]),
        max_newton_iters=take_int("max_newton_iters", _SOLVER_INT["max_newton_iters"]),
        tol_rel_residual=take_float("tol_rel_residual", _SOLVER_FLOAT["tol_rel_residual"]),
        abs_residual_floor=take_float("abs_residual_floor", _SOLVER_FLOAT["abs_residual_floor"]),
        staggered_passes=take_int("staggered_passes", _SOLVER_INT["staggered_passes"]),
        clamp_phi=take_bool("clamp_phi", True),
        perturbation_eps=take_float("perturbation_eps", _SOLVER_FLOAT["perturbation_eps"]),
        failure_fraction=take_float("failure_fraction", _SOLVER_FLOAT["failure_fraction"]),
        snapshot_every=take_int("snapshot_every", _SOLVER_INT["snapshot_every"]),
        max_step_halvings=take_int("max_step_halvings", _SOLVER_INT["max_step_halvings"]),
        thickness=take_float("thickness", _SOLVER_FLOAT["thickness"]),
    )
    program = LoadProgram.from_tokens(raw["load_segments"].split())

    fixed = []
    for clause in raw["fix"].split():
        name, _, dofs = clause.partition(":")
        if not dofs or set(dofs) - {"x", "y"}:
            raise UnparsableValue("fix", clause, lineno_of["fix"])
        fixed.append((name, dofs))
    name, _, dof = raw["load"].partition(":")
    if dof not in ("x", "y"):
        raise UnparsableValue("load", raw["load"], lineno_of["load"])
    bcs = BoundaryConditions(fixed=tuple(fixed), load_set=name, load_dof=dof)

    parsed_raw = {}
    for key, value in raw.items():
        if key in _STRING_KEYS:
            parsed_raw[key] = value
        elif key in _SOLVER_INT or key in _MP_INT:
            parsed_raw[key] = int(value)
        elif key in _SOLVER_BOOL:
            parsed_raw[key] = _parse_bool(value)
        else:
            parsed_raw[key] = float(value)

    return RunSetup(
        params=params,
        env=env,
        solver=solver,
        program=program,
        bcs=bcs,
        mesh_path=(path.parent / raw["mesh"]).resolve(),
        curve_out=Path(raw.get("curve_out", _STRING_KEYS["curve_out"])),
        fields_out=raw.get("fields_out", ""),
        mp_segments=raw.get("mp_segments", _STRING_KEYS["mp_segments"]).split(),
        mp_stretch_rate=take_float("mp_stretch_rate", _MP_FLOAT["mp_stretch_rate"]),
        mp_steps_per_unit=take_int("mp_steps_per_unit", _MP_INT["mp_steps_per_unit"]),
        mp_csv=Path(raw.get("mp_csv", _STRING_KEYS["mp_csv"])),
        raw=parsed_raw,
    )


# ----------------------------------------------------------------------
# mesh I/O
# ----------------------------------------------------------------------

def read_mesh(path):
    """Read an ASCII mesh file (NODES / ELEMENTS / NSET sections).

    Checks node-id uniqueness, connectivity references and reference
    Jacobian positivity at all quadrature points.
    """
    node_ids, coords = [], []
    elem_ids, elems_raw = [], []
    node_sets_raw = {}
    section = None
    set_name = None

    for lineno, line in enumerate(Path(path).read_text().splitlines(), start=1):
        stripped = line.split("#", 1)[0].strip()
        if not stripped:
            continue
        tokens = stripped.split()
        head = tokens[0].upper()
        if head == "NODES":
            section = "nodes"
            continue
        if head == "ELEMENTS":
            section = "elements"
            continue
        if head == "NSET":
            if len(tokens) != 2:
                raise MalformedSection("NSET requires exactly one name", lineno)
            section = "nset"
            set_name = tokens[1]
            node_sets_raw.setdefault(set_name, [])
            continue
        if section is None:
            raise MalformedSection(f"data before any section header: '{stripped}'", lineno)
        try:
            if section == "nodes":
                if len(tokens) != 3:
                    raise ValueError
                node_ids.append(int(tokens[0]))
                coords.append((float(tokens[1]), float(tokens[2])))
            elif section == "elements":
                if len(tokens) != 5:
                    raise ValueError
                elem_ids.append(int(tokens[0]))
                elems_raw.append(tuple(int(t) for t in tokens[1:]))
            else:
                node_sets_raw[set_name].extend(int(t) for t in tokens)
        except ValueError:
            raise MalformedSection(f"cannot parse '{stripped}' in {section.upper()}",
                                   lineno) from None

    node_ids = np.asarray(node_ids, dtype=int)
    if node_ids.size == 0:
        raise MalformedSection("mesh file defines no nodes", 0)
    if np.unique(node_ids).size != node_ids.size:
        raise MalformedSection("duplicate node ids", 0)
    index_of = {int(nid): k for k, nid in enumerate(node_ids)}

    def resolve(ids, context):
        try:
            return np.array([index_of[int(i)] for i in ids], dtype=int)
        except KeyError as exc:
            raise DanglingNodeReference(f"{context} references unknown node {exc.args[0]}")

    elems = (np.vstack([resolve(e, f"element {eid}") for e, eid in zip(elems_raw, elem_ids)])
             if elems_raw else np.zeros((0, 4), dtype=int))
    node_sets = {name: resolve(ids, f"NSET {name}") for name, ids in node_sets_raw.items()}
    mesh = Mesh(
        node_ids=node_ids,
        coords=np.asarray(coords, dtype=float),
        elems=elems,
        elem_ids=np.asarray(elem_ids, dtype=int),
        node_sets=node_sets,
    )
    if mesh.n_elements:
        dets = mesh.reference_jacobians()
        if np.any(dets <= 0.0):
            bad = int(mesh.elem_ids[np.argwhere(np.any(dets <= 0.0, axis=1))[0, 0]])
            raise InvertedElement(f"element {bad} has non-positive reference Jacobian")
    return mesh


def write_mesh(mesh: Mesh, path):
    """Write a mesh in the ASCII format read_mesh accepts.

    Coordinates are written with shortest round-trip float formatting, so
    write -> read -> write is byte-identical.
    """
    out = ["NODES"]
    for nid, (x, y) in zip(mesh.node_ids, mesh.coords):
        out.append(f"{int(nid)} {float(x)!r} {float(y)!r}")
    out.append("ELEMENTS")
    for eid, conn in zip(mesh.elem_ids, mesh.elems):
        ids = " ".join(str(int(mesh.node_ids[c])) for c in conn)
        out.append(f"{int(eid)} {ids}")
    for name, idx in mesh.node_sets.items():
        out.append(f"NSET {name}")
        ids = [str(int(mesh.node_ids[i])) for i in idx]
        for k in range(0, len(ids), 10):
            out.append(" ".join(ids[k:k + 10]))
    Path(path).write_text("\n".join(out) + "\n")


# ----------------------------------------------------------------------
# mesh generation
# ----------------------------------------------------------------------

def _geometric_run(length, h0, h1):
    """Interval sizes blending h0 -> h1 over a span, scaled to fit exactly."""
    if length <= 0:
        return np.empty(0)
    if abs(h1 - h0) < 1e-12 * max(h0, h1):
        n = max(int(round(length / h0)), 1)
        return np.full(n, length / n)
    h_mean = (h1 - h0) / np.log(h1 / h0)  # logarithmic mean
    n = max(int(round(length / h_mean)), 1)
    if n == 1:
        return np.array([length])
    sizes = h0 * (h1 / h0) ** (np.arange(n) / (n - 1))
    return sizes * (length / sizes.sum())


def _axis_from_zones(zones):
    """Node coordinates from ((x_end, h_start, h_end), ...) starting at 0."""
    x = [0.0]
    for x_end, h0, h1 in zones:
        span = x_end - x[-1]
        if span <= 0:
            continue
        for s in _geometric_run(span, h0, h1):
            x.append(x[-1] + s)
        x[-1] = x_end  # kill accumulation error at zone boundaries
    return np.asarray(x)


def _insert_line(xs, value):
    """Snap the nearest axis node to ``value`` (avoids sliver cells)."""
    k = int(np.argmin(np.abs(xs - value)))
    out = xs.copy()
    out[k] = value
    return out


def _grid_mesh(xs, ys, y_scale=None):
    """Tensor-product Q4 grid; optional per-column scaling of the y column."""
    nx, ny = len(xs) - 1, len(ys) - 1
    if nx < 1 or ny < 1:
        raise DegenerateGeometry("grid needs at least one element per direction")
    X, Y = np.meshgrid(xs, ys, indexing="ij")
    if y_scale is not None:
        Y = Y * y_scale(xs)[:, None]
    coords = np.column_stack([X.ravel(), Y.ravel()])

    def nid(i, j):
        return i * (ny + 1) + j

    elems = np.empty((nx * ny, 4), dtype=int)
    k = 0
    for i in range(nx):
        for j in range(ny):
            elems[k] = (nid(i, j), nid(i + 1, j), nid(i + 1, j + 1), nid(i, j + 1))
            k += 1
    return coords, elems


def _finish_mesh(coords, elems, node_sets):
    n = coords.shape[0]
    mesh = Mesh(
        node_ids=np.arange(1, n + 1),
        coords=coords,
        elems=elems,
        elem_ids=np.arange(1, elems.shape[0] + 1),
        node_sets=node_sets,
    )
    dets = mesh.reference_jacobians()
    if np.any(dets <= 0.0):
        raise DegenerateGeometry("generated mesh has inverted elements")
    return mesh


@dataclass
class DogboneParams:
    """Quarter dogbone (symmetry at mid-length x=0 and mid-width y=0).

    The outer-edge profile carries a shallow cosine notch at mid-length
    that localizes failure; the drawn specimen is approximated, not
    reproduced (its in-plane dimensions are not tabulated anywhere).
    """

    half_length: float = 158.0  # mm, modeled half length
    gauge_half_width: float = 5.0
    grip_half_width: float = 10.0
    gauge_end: float = 140.0  # x where the fillet starts
    fillet_length: float = 12.0
    notch_depth: float = 0.3
    notch_half_length: float = 3.0
    fine_size: float = 0.1  # target size near the notch root
    coarse_size: float = 4.0
    fine_band: float = 3.0  # x extent of the fine zone
    transition_length: float = 25.0  # fine -> coarse growth region
    n_width: int = 18  # elements across the half width
    width_ratio: float = 6.0  # coarse/fine size ratio across the width

    def width_at(self, x):
        x = np.asarray(x, dtype=float)
        w = np.full_like(x, self.gauge_half_width)
        in_notch = x < self.notch_half_length
        w = np.where(
            in_notch,
            self.gauge_half_width
            - 0.5 * self.notch_depth * (1.0 + np.cos(np.pi * x / self.notch_half_length)),
            w,
        )
        x1 = self.gauge_end
        x2 = self.gauge_end + self.fillet_length
        blend = (x >= x1) & (x < x2)
        t = np.clip((x - x1) / self.fillet_length, 0.0, 1.0)
        w = np.where(
            blend,
            self.gauge_half_width
            + (self.grip_half_width - self.gauge_half_width) * 0.5 * (1 - np.cos(np.pi * t)),
            w,
        )
        w = np.where(x >= x2, self.grip_half_width, w)
        return w


def generate_dogbone(p: DogboneParams | None = None, **overrides):
    """Structured quarter-dogbone mesh with graded refinement at the notch.

    Node sets: sym_x (x = 0), sym_y (y = 0), right (loaded end), top
    (outer edge).
    """
    p = p or DogboneParams()
    if overrides:
        p = DogboneParams(**{**p.__dict__, **overrides})
    if not (0 < p.notch_half_length < p.gauge_end < p.gauge_end + p.fillet_length
            < p.half_length):
        raise DegenerateGeometry("dogbone zones out of order")
    if not 0 <= p.notch_depth < p.gauge_half_width:
        raise DegenerateGeometry("notch depth must stay below the gauge half width")

    xs = _axis_from_zones([
        (p.fine_band, p.fine_size, p.fine_size),
        (min(p.fine_band + p.transition_length, p.gauge_end), p.fine_size, p.coarse_size),
        (p.half_length, p.coarse_size, p.coarse_size),
    ])

    # width template: unit interval refined toward the outer edge (eta = 1)
    sizes = p.width_ratio ** (1.0 - np.arange(p.n_width) / max(p.n_width - 1, 1))
    sizes = sizes / sizes.sum()
    etas = np.concatenate([[0.0], np.cumsum(sizes)])
    etas[-1] = 1.0

    coords, elems = _grid_mesh(xs, etas, y_scale=p.width_at)
    tol = 1e-9
    node_sets = {
        "sym_x": np.where(np.abs(coords[:, 0]) < tol)[0],
        "sym_y": np.where(np.abs(coords[:, 1]) < tol)[0],
        "right": np.where(np.abs(coords[:, 0] - p.half_length) < tol)[0],
        "top": np.where(np.abs(coords[:, 1] - p.width_at(coords[:, 0])) < tol)[0],
    }
    return _finish_mesh(coords, elems, node_sets)


@dataclass
class SenParams:
    """Square single-edge-notched plate; the notch is a duplicated-node
    seam from the left edge to the center at mid-height."""

    size: float = 1.0  # mm
    h_fine: float = 0.01
    h_coarse: float = 0.05
    band_below: float = 0.12  # refined band under the notch line
    band_above: float = 0.05  # refined band above the notch line
    x_fine_start: float = 0.35  # x where horizontal refinement starts


def generate_sen_plate(p: SenParams | None = None, **overrides):
    """Structured SEN mesh with a zero-width notch seam.

    Nodes on the two notch faces are distinct ids at identical
    coordinates; the crack-tip node at the plate center is shared. Node
    sets: bottom, top, left, right.
    """
    p = p or SenParams()
    if overrides:
        p = SenParams(**{**p.__dict__, **overrides})
    L = p.size
    mid = 0.5 * L
    if not (0 < p.h_fine <= p.h_coarse and p.band_below > 0 and p.band_above > 0):
        raise DegenerateGeometry("invalid SEN refinement parameters")

    xs = _axis_from_zones([
        (max(p.x_fine_start - 0.1 * L, 0.0), p.h_coarse, p.h_coarse),
        (p.x_fine_start, p.h_coarse, p.h_fine),
        (L, p.h_fine, p.h_fine),
    ])
    xs = _insert_line(xs, mid)  # grid line exactly at the notch tip
    ys = _axis_from_zones([
        (mid - p.band_below - 0.1 * L, p.h_coarse, p.h_coarse),
        (mid - p.band_below, p.h_coarse, p.h_fine),
        (mid + p.band_above, p.h_fine, p.h_fine),
        (min(mid + p.band_above + 0.15 * L, L), p.h_fine, p.h_coarse),
        (L, p.h_coarse, p.h_coarse),
    ])
    ys = _insert_line(ys, mid)

    coords, elems = _grid_mesh(xs, ys)
    tol = 1e-9
    centroid_y = coords[elems][:, :, 1].mean(axis=1)

    # seam: duplicate notch-line nodes strictly left of the tip and hand
    # the duplicates to the elements below the line
    on_line = np.abs(coords[:, 1] - mid) < tol
    seam_nodes = np.where(on_line & (coords[:, 0] < mid - tol))[0]
    dup_of = {}
    new_coords = [coords]
    next_id = coords.shape[0]
    for n in seam_nodes:
        dup_of[n] = next_id
        new_coords.append(coords[n][None])
        next_id += 1
    coords = np.vstack(new_coords)

    below = centroid_y < mid
    for k in np.where(below)[0]:
        for a in range(4):
            if int(elems[k, a]) in dup_of:
                elems[k, a] = dup_of[int(elems[k, a])]

    node_sets = {
        "bottom": np.where(np.abs(coords[:, 1]) < tol)[0],
        "top": np.where(np.abs(coords[:, 1] - L) < tol)[0],
        "left": np.where(np.abs(coords[:, 0]) < tol)[0],
        "right": np.where(np.abs(coords[:, 0] - L) < tol)[0],
    }
    return _finish_mesh(coords, elems, node_sets)


# ----------------------------------------------------------------------
# result export
# ----------------------------------------------------------------------

def write_curve_csv(artifacts: RunArtifacts, path):
    """Force-displacement curve as CSV, full double precision, no timestamps."""
    rows = ["step,time_s,displacement_mm,force_N,max_phi"]
    for (step, t, d, f, mp) in artifacts.curve:
        rows.append(f"{step},{float(t)!r},{float(d)!r},{float(f)!r},{float(mp)!r}")
    path = Path(path)
    if path.parent != Path(""):
        path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text("\n".join(rows) + "\n")


def write_fields_vtk(mesh: Mesh, snapshot, path):
    """One legacy ASCII unstructured-grid file for a (step, u, phi) snapshot."""
    step, u, phi = snapshot
    ux = u[0::2]
    uy = u[1::2]
    lines = [
        "# vtk DataFile Version 3.0",
        f"fields at step {step}",
        "ASCII",
        "DATASET UNSTRUCTURED_GRID",
        f"POINTS {mesh.n_nodes} double",
    ]
    for (x, y) in mesh.coords:
        lines.append(f"{float(x)!r} {float(y)!r} 0.0")
    lines.append(f"CELLS {mesh.n_elements} {5 * mesh.n_elements}")
    for conn in mesh.elems:
        lines.append("4 " + " ".join(str(int(c)) for c in conn))
    lines.append(f"CELL_TYPES {mesh.n_elements}")
    lines.extend(["9"] * mesh.n_elements)
    lines.append(f"POINT_DATA {mesh.n_nodes}")
    lines.append("VECTORS displacement double")
    for a, b in zip(ux, uy):
        lines.append(f"{float(a)!r} {float(b)!r} 0.0")
    lines.append("SCALARS phi double 1")
    lines.append("LOOKUP_TABLE default")
    for v in phi:
        lines.append(f"{float(v)!r}")
    path = Path(path)
    if path.parent != Path(""):
        path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text("\n".join(lines) + "\n")


def write_all_fields(mesh, artifacts, prefix):
    for snap in artifacts.snapshots:
        write_fields_vtk(mesh, snap, f"{prefix}_{snap[0]:06d}.vtk")


# ----------------------------------------------------------------------
# tangent self-consistency harness
# ----------------------------------------------------------------------

def random_finite_strain_states(rng, n, material):
    """Random constitutive step samples inside the integrator's stable range.

    Returns (F_old, F_new, state, phi, dt) with batch shape (n,). The
    elastic stretch of the viscous branch is kept small so the
    thermally-activated flow stays integrable at the sampled dt, and the
    volume ratio is kept away from the tension/compression branch point.
    """
    from .tensors import det33, frobenius_norm, green_strain

    def unimodular(scale):
        m = np.eye(3) + scale * rng.uniform(-1.0, 1.0, size=(n, 3, 3))
        return m * (det33(m) ** (-1.0 / 3.0))[..., None, None]

    F_v = unimodular(0.03)
    F_vp = unimodular(0.03)
    F_e = unimodular(0.002)
    j = rng.uniform(0.98, 1.02, size=n)
    j = np.where(np.abs(j - 1.0) < 1e-3, 1.0 + np.sign(j - 1.0 + 1e-12) * 1e-3, j)
    F_bar = F_e @ F_v @ F_vp
    F_old = F_bar * (j ** (1.0 / 3.0))[..., None, None]
    dF = np.eye(3) + 2e-4 * rng.uniform(-1.0, 1.0, size=(n, 3, 3))
    F_new = dF @ F_old

    state = InternalState.fresh((n,))
    state.F_v = F_v
    state.F_vp = F_vp
    state.eps_prev = frobenius_norm(green_strain(F_old))
    # half the points already have viscoplastic and damage activation records
    act = rng.uniform(size=n) < 0.5
    state.eps0_vp = np.where(act, 0.5 * state.eps_prev, np.nan)
    state.psi_crit = np.where(act, 0.1, np.nan)
    state.psi_max = np.where(act, 0.12, 0.0)
    phi = rng.uniform(0.0, 0.5, size=n)
    return F_old, F_new, state, phi, 0.02


def tangent_consistency_check(material, n_states=100, seed=2024):
    """Max relative discrepancy between eps = 1e-6 and 1e-8 tangents."""
    from .tangent import jaumann_tangent

    rng = np.random.default_rng(seed)
    F_old, F_new, state, phi, dt = random_finite_strain_states(rng, n_states, material)
    c6 = jaumann_tangent(F_old, F_new, state, phi, dt, material, eps=1e-6)
    c8 = jaumann_tangent(F_old, F_new, state, phi, dt, material, eps=1e-8)
    num = np.sqrt(np.sum((c6 - c8) ** 2, axis=(-1, -2)))
    den = np.sqrt(np.sum(c8**2, axis=(-1, -2)))
    return float(np.max(num / den))


def small_strain_tangent_errors(material, dt=1e-3):
    """Relative errors of the 11-11 and 12-12 entries vs isotropic elasticity."""
    from .tangent import jaumann_tangent

    c = jaumann_tangent(np.eye(3), np.eye(3), InternalState.fresh(), 0.0, dt, material)
    mu = material.moduli.mu_eq + material.moduli.mu_neq
    kv = material.moduli.k_v
    e1111 = abs(c[0, 0] - (kv + 4.0 * mu / 3.0)) / (kv + 4.0 * mu / 3.0)
    e1212 = abs(c[3, 3] - mu) / mu
    return float(e1111), float(e1212)


# ----------------------------------------------------------------------
# command-line interface
# ----------------------------------------------------------------------

def _cmd_run(args):
    setup = read_config(args.config)
    mesh = read_mesh(setup.mesh_path)
    material = setup.material()
    arts = run_simulation(mesh, material, setup.program, setup.solver, setup.bcs,
                          log=args.log)
    write_curve_csv(arts, setup.curve_out)
    print(f"wrote {setup.curve_out} ({len(arts.curve)} steps, "
          f"peak force {arts.peak_force:.4f} N)")
    if arts.failure_step is not None:
        print(f"failure detected at step {arts.failure_step}, "
              f"displacement {arts.failure_displacement:.5f} mm")
    if setup.fields_out:
        write_all_fields(mesh, arts, setup.fields_out)
        print(f"wrote {len(arts.snapshots)} field snapshots to {setup.fields_out}_*.vtk")
    return 0


def _cmd_mp(args):
    setup = read_config(args.config)
    material = setup.material()
    hist = material_point_driver(material, setup.mp_segments, setup.mp_stretch_rate,
                                 setup.mp_steps_per_unit)
    rows = ["time_s,stretch,stretch_lateral,sigma_axial_MPa,tau_neq_MPa,eps_eff"]
    for k in range(len(hist.time)):
        rows.append(f"{hist.time[k]!r},{hist.stretch[k]!r},{hist.stretch_lateral[k]!r},"
                    f"{hist.sigma_axial[k]!r},{hist.tau_neq[k]!r},{hist.eps_eff[k]!r}")
    setup.mp_csv.parent.mkdir(parents=True, exist_ok=True)
    setup.mp_csv.write_text("\n".join(rows) + "\n")
    print(f"wrote {setup.mp_csv} ({len(hist.time)} points)")
    return 0


def _cmd_tangent_check(args):
    setup = read_config(args.config)
    material = setup.material()
    worst = tangent_consistency_check(material, n_states=args.samples, seed=args.seed)
    e1111, e1212 = small_strain_tangent_errors(material)
    print(f"tangent self-consistency (eps 1e-6 vs 1e-8, {args.samples} states): "
          f"max rel discrepancy = {worst:.3e}")
    print(f"small-strain elastic check: rel err C_1111 = {e1111:.3e}, "
          f"C_1212 = {e1212:.3e}")
    if worst > 1e-3 or e1111 > 1e-3 or e1212 > 1e-3:
        print("TANGENT CHECK FAILED (threshold 1e-3)", file=sys.stderr)
        return 2
    print("tangent check passed")
    return 0


def _cmd_mesh_gen(args):
    overrides = {}
    for clause in args.set or []:
        key, _, value = clause.partition("=")
        overrides[key] = float(value) if "." in value or "e" in value.lower() else int(value)
    if args.preset == "dogbone":
        mesh = generate_dogbone(**overrides)
    elif args.preset == "sen-tension":
        mesh = generate_sen_plate(**overrides)
    elif args.preset == "sen-shear":
        p = SenParams(band_below=0.3, band_above=0.06, x_fine_start=0.3)
        mesh = generate_sen_plate(p, **overrides)
    else:
        raise ConfigError(f"unknown mesh preset '{args.preset}'")
    write_mesh(mesh, args.out)
    print(f"wrote {args.out}: {mesh.n_nodes} nodes, {mesh.n_elements} elements")
    return 0


_USER_ERRORS = (ConfigError, DomainError, DegenerateGeometry, OSError)


def cli_main(argv=None):
    """Entry point; returns the process exit code.

    0 success, 1 user error (config, mesh file, arguments), 2 numerical
    failure.
    """
    parser = argparse.ArgumentParser(
        prog="vevpfrac",
        description="Phase-field fracture of viscoelastic-viscoplastic "
                    "nanocomposites (plane strain, Q4)")
    sub = parser.add_subparsers(dest="command", required=True)

    p_run = sub.add_parser("run", help="run a full simulation from a config file")
    p_run.add_argument("config")
    p_run.add_argument("--log", type=int, default=None, metavar="N",
                       help="print progress every N steps")
    p_run.set_defaults(func=_cmd_run)

    p_mp = sub.add_parser("mp", help="material-point uniaxial driver")
    p_mp.add_argument("config")
    p_mp.set_defaults(func=_cmd_mp)

    p_tc = sub.add_parser("tangent-check", help="tangent self-consistency test")
    p_tc.add_argument("config")
    p_tc.add_argument("--samples", type=int, default=100)
    p_tc.add_argument("--seed", type=int, default=2024)
    p_tc.set_defaults(func=_cmd_tangent_check)

    p_mg = sub.add_parser("mesh-gen", help="generate a benchmark mesh")
    p_mg.add_argument("preset", choices=["dogbone", "sen-tension", "sen-shear"])
    p_mg.add_argument("--out", required=True)
    p_mg.add_argument("--set", action="append", metavar="key=value",
                      help="override a generator parameter")
    p_mg.set_defaults(func=_cmd_mesh_gen)

    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except _USER_ERRORS as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    except SimulationError as exc:
        print(f"numerical failure: {exc}", file=sys.stderr)
        return 2


def main():
    raise SystemExit(cli_main())
