"""Shared fixtures: reference material parameters and small meshes."""

import numpy as np
import pytest

from vevpfrac import (
    BoundaryConditions,
    EnvironmentConditions,
    Material,
    MaterialParameters,
)
from vevpfrac.fem import Mesh


def reference_parameters(**overrides):
    """Dry neat-epoxy reference constants used throughout the suite."""
    values = dict(
        mu_eq_ref=760.0,
        mu_neq_ref=790.0,
        kv_ref=1154.0,
        epsdot0=1.0447e12,
        deltaH=1.977e-19,
        m_exp=0.657,
        tau0=40.0,
        a_vp=0.1,
        b_vp_slope=22.0,
        b_vp_offset=0.8,
        sigma0_base=30.0,
        Gc_ref=190.0,
        l0=0.5,
        sigma_d_base=55.0,
        alpha_w=0.039,
    )
    values.update(overrides)
    return MaterialParameters(**values)


@pytest.fixture
def params():
    return reference_parameters()


@pytest.fixture
def dry_env():
    return EnvironmentConditions(theta=296.0)


@pytest.fixture
def material(params, dry_env):
    return Material.create(params, dry_env)


def unit_square_mesh(nx, ny, lx=1.0, ly=1.0):
    xs = np.linspace(0.0, lx, nx + 1)
    ys = np.linspace(0.0, ly, ny + 1)
    X, Y = np.meshgrid(xs, ys, indexing="xy")
    coords = np.column_stack([X.ravel(), Y.ravel()])
    elems = []
    for j in range(ny):
        for i in range(nx):
            n0 = j * (nx + 1) + i
            elems.append([n0, n0 + 1, n0 + nx + 2, n0 + nx + 1])
    elems = np.asarray(elems)
    tol = 1e-12
    sets = {
        "left": np.where(np.abs(coords[:, 0]) < tol)[0],
        "right": np.where(np.abs(coords[:, 0] - lx) < tol)[0],
        "bottom": np.where(np.abs(coords[:, 1]) < tol)[0],
        "top": np.where(np.abs(coords[:, 1] - ly) < tol)[0],
    }
    return Mesh(
        node_ids=np.arange(1, coords.shape[0] + 1),
        coords=coords,
        elems=elems,
        elem_ids=np.arange(1, elems.shape[0] + 1),
        node_sets=sets,
    )


@pytest.fixture
def single_element_mesh():
    return unit_square_mesh(1, 1)


@pytest.fixture
def tension_bcs():
    return BoundaryConditions(fixed=(("left", "x"), ("bottom", "y")),
                              load_set="right", load_dof="x")


def random_rotations(rng, n):
    """Uniform random rotation matrices via normalized quaternions."""
    q = rng.standard_normal((n, 4))
    q /= np.linalg.norm(q, axis=1, keepdims=True)
    w, x, y, z = q[:, 0], q[:, 1], q[:, 2], q[:, 3]
    r = np.empty((n, 3, 3))
    r[:, 0, 0] = 1 - 2 * (y * y + z * z)
    r[:, 0, 1] = 2 * (x * y - z * w)
    r[:, 0, 2] = 2 * (x * z + y * w)
    r[:, 1, 0] = 2 * (x * y + z * w)
    r[:, 1, 1] = 1 - 2 * (x * x + z * z)
    r[:, 1, 2] = 2 * (y * z - x * w)
    r[:, 2, 0] = 2 * (x * z - y * w)
    r[:, 2, 1] = 2 * (y * z + x * w)
    r[:, 2, 2] = 1 - 2 * (x * x + y * y)
    return r
