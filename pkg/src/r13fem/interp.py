"""Quasi-interpolation into the zero-trace enriched tensor space.

The operator combines per-element local L2 projections with patch
averaging: vertex and edge degrees of freedom take the mean of the
projected values over the adjacent elements, interior moments are taken
from the target field directly, and all boundary degrees of freedom are
set to zero. It is a projection onto the discrete space, preserves the
homogeneous boundary trace and leaves the divergence constraint residual
orthogonal to the discrete velocity space.

Coefficient vectors follow the assembly convention for the sigma field:
component-major over components (11, 12, 22), scalar dofs ordered
vertices, edges, interior moments.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import scipy.linalg as sla

from . import elements as fe
from .assembly import ScalarSpace, boundary_scalar_dofs, scalar_space
from .mesh import Mesh

__all__ = ["InterpolationContext", "build_context", "local_l2_projection", "interpolate"]

QUAD_DEGREE = 10


@dataclass
class InterpolationContext:
    mesh: Mesh
    space: ScalarSpace            # enriched scalar space (P2b)
    quad: fe.QuadratureRule
    ref_vals: np.ndarray          # (Q, 9) reference basis at quadrature points
    gram_chol: np.ndarray         # Cholesky factor of the reference Gram (9, 9)
    phys_pts: np.ndarray          # (T, Q, 2) physical quadrature points
    vertex_count: np.ndarray      # (V,) adjacent element count per vertex
    edge_count: np.ndarray        # (E,) adjacent element count per edge
    boundary_dofs: np.ndarray     # scalar dofs to zero out


def build_context(mesh: Mesh) -> InterpolationContext:
    space = scalar_space(mesh, "P2b")
    quad = fe.quadrature(QUAD_DEGREE)
    vals, _ = space.element.tabulate(quad.points)
    # reference Gram of the unscaled basis; the physical Gram is
    # |K| * outer(scales, scales) * this, so one factorization serves all
    gram = np.einsum("q,qa,qb->ab", quad.weights, vals, vals)
    chol = sla.cholesky(gram, lower=True)
    phys = np.einsum("qi,eid->eqd", quad.points, mesh.vertices[mesh.triangles])
    vcount = np.bincount(mesh.triangles.ravel(), minlength=mesh.n_vertices)
    ecount = np.bincount(mesh.tri_edges.ravel(), minlength=mesh.n_edges)
    return InterpolationContext(mesh, space, quad, vals, chol, phys,
                                vcount, ecount, boundary_scalar_dofs(mesh, space))


def _evaluate(ctx, tau):
    """Component values (T, Q, 3) of the target field at quadrature points.

    tau may be a callable points (N, 2) -> components (N, 3), or a
    coefficient vector in the sigma-field numbering (evaluated elementwise,
    no point location needed).
    """
    T, Q, _ = ctx.phys_pts.shape
    if callable(tau):
        flat = ctx.phys_pts.reshape(-1, 2)
        return np.asarray(tau(flat), dtype=float).reshape(T, Q, 3)
    coeffs = np.asarray(tau, dtype=float).reshape(3, ctx.space.n_scalar)
    phi = ctx.space.scales[:, None, :] * ctx.ref_vals[None, :, :]  # (T, Q, 9)
    local = coeffs[:, ctx.space.gdofs]                             # (3, T, 9)
    return np.einsum("eqb,ceb->eqc", phi, local)


def local_l2_projection(ctx: InterpolationContext, tau, element=None):
    """Local dof values of the elementwise L2 projection Q_K tau.

    Returns (T, 3, 9): for each element the 27 projection coefficients in
    the dual (dof-value) basis, per tensor component. Galerkin
    orthogonality (tau - Q_K tau, phi)_K = 0 holds for every local shape
    function. With `element` given, restricts to that element.
    """
    vals = _evaluate(ctx, tau)                     # (T, Q, 3)
    # rhs in the unscaled reference basis: int_K tau_c phi_b / (|K| scale_b)
    rhs = np.einsum("q,qb,eqc->ecb", ctx.quad.weights, ctx.ref_vals, vals)
    beta = sla.cho_solve((ctx.gram_chol, True), rhs.reshape(-1, 9).T).T
    alpha = beta.reshape(-1, 3, 9) / ctx.space.scales[:, None, :]
    if element is not None:
        return alpha[element]
    return alpha


def interpolate(ctx: InterpolationContext, tau) -> np.ndarray:
    """Coefficients of the quasi-interpolant in the sigma-field numbering.

    tau must have (numerically) zero boundary trace; boundary dofs are
    zeroed unconditionally.
    """
    mesh = ctx.mesh
    space = ctx.space
    alpha = local_l2_projection(ctx, tau)          # (T, 3, 9)
    ns = space.n_scalar
    out = np.zeros((3, ns))

    tris = mesh.triangles
    tedges = mesh.tri_edges
    for c in range(3):
        acc = np.zeros(ns)
        np.add.at(acc, tris.ravel(), alpha[:, c, 0:3].ravel())
        np.add.at(acc, (mesh.n_vertices + tedges).ravel(), alpha[:, c, 3:6].ravel())
        acc[:mesh.n_vertices] /= ctx.vertex_count
        acc[mesh.n_vertices:mesh.n_vertices + mesh.n_edges] /= ctx.edge_count
        out[c] = acc

    # interior moments use the target field directly
    vals = _evaluate(ctx, tau)                     # (T, Q, 3)
    lam = ctx.quad.points                          # (Q, 3)
    moments = np.einsum("q,qm,eqc->ecm", ctx.quad.weights, lam, vals)
    moments *= mesh.areas[:, None, None]
    base = mesh.n_vertices + mesh.n_edges
    idx = base + 3 * np.arange(mesh.n_triangles)[:, None] + np.arange(3)[None, :]
    for c in range(3):
        out[c, idx.ravel()] = moments[:, c, :].ravel()

    out[:, ctx.boundary_dofs] = 0.0
    return out.ravel()
