"""Reference-element bases and quadrature rules on triangles.

Scalar Lagrange bases (P1, P2) and the bubble-enriched 9-function scalar
space whose three copies compose the symmetric-tensor stress element.
Basis values and gradients are expressed in barycentric coordinates;
physical gradients follow from the affine map's constant barycentric
gradients. Quadrature rules are conical-product Gauss rules (Legendre x
Jacobi) on the triangle and Gauss-Legendre on edges.

Local DoF ordering (enriched space): the three vertex values, the three
unweighted edge integrals (edge k is opposite vertex k), and the three
interior moments against the barycentric coordinates. Applying the nine
functionals to the nine basis functions gives the identity (duality),
which the test suite asserts on random triangles.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.special import roots_jacobi, roots_legendre

__all__ = [
    "QuadratureRule",
    "quadrature",
    "edge_quadrature",
    "ScalarElement",
    "P1",
    "P2",
    "EnrichedP2",
    "element_for",
    "eval_lagrange_basis",
    "eval_enriched_basis",
    "local_tensor_basis",
    "dof_functionals_matrix",
    "sym_grad_surjectivity_rank",
]

MAX_DEGREE = 12


@dataclass(frozen=True)
class QuadratureRule:
    """Points in barycentric coordinates; weights sum to one.

    Integrals scale as  int_K f = |K| * sum_q w_q f(x_q).
    """

    points: np.ndarray  # (Q, 3)
    weights: np.ndarray  # (Q,)
    degree: int


def quadrature(degree: int) -> QuadratureRule:
    """Conical-product rule on the triangle, exact for polynomials of `degree`."""
    if not 0 <= degree <= MAX_DEGREE:
        raise ValueError(f"unsupported quadrature degree {degree}")
    n = max(1, (degree + 2) // 2)
    # x = xi (1 - eta), y = eta on the unit reference triangle
    xg, wg = roots_legendre(n)
    xg = 0.5 * (xg + 1.0)
    wg = 0.5 * wg
    xj, wj = roots_jacobi(n, 1.0, 0.0)
    xj = 0.5 * (xj + 1.0)
    wj = wj / 4.0  # jacobian of [-1,1] -> [0,1] incl. the (1-eta) weight scaling
    X, Y = np.meshgrid(xg, xj, indexing="ij")
    W = np.outer(wg, wj)
    x = (X * (1.0 - Y)).ravel()
    y = Y.ravel()
    w = W.ravel()
    w = w / w.sum()  # reference-area normalization
    pts = np.column_stack([1.0 - x - y, x, y])
    return QuadratureRule(points=pts, weights=w, degree=degree)


def edge_quadrature(degree: int):
    """Gauss-Legendre points on [0,1] and weights summing to one."""
    if not 0 <= degree <= MAX_DEGREE:
        raise ValueError(f"unsupported edge quadrature degree {degree}")
    n = max(1, (degree + 2) // 2)
    x, w = roots_legendre(n)
    return 0.5 * (x + 1.0), 0.5 * w


class ScalarElement:
    """Common interface: tabulate(points) -> (values, d/dlambda)."""

    name: str
    n_basis: int
    n_per_vertex = 1
    n_per_edge = 0
    n_per_tri = 0

    def tabulate(self, pts):
        raise NotImplementedError

    def local_scales(self, edge_lengths, areas):
        """Per-element scaling of the reference basis (T, n_basis).

        edge_lengths has shape (T, 3) ordered edge-opposite-vertex; areas (T,).
        """
        T = areas.shape[0]
        return np.ones((T, self.n_basis))


class P1(ScalarElement):
    name = "P1"
    n_basis = 3

    def tabulate(self, pts):
        pts = np.asarray(pts, dtype=float)
        vals = pts.copy()
        dlam = np.broadcast_to(np.eye(3), (pts.shape[0], 3, 3)).copy()
        return vals, dlam


class P2(ScalarElement):
    name = "P2"
    n_basis = 6
    n_per_edge = 1

    def tabulate(self, pts):
        pts = np.asarray(pts, dtype=float)
        Q = pts.shape[0]
        vals = np.empty((Q, 6))
        dlam = np.zeros((Q, 6, 3))
        for i in range(3):
            li = pts[:, i]
            vals[:, i] = li * (2.0 * li - 1.0)
            dlam[:, i, i] = 4.0 * li - 1.0
        for k in range(3):
            i, j = (k + 1) % 3, (k + 2) % 3
            vals[:, 3 + k] = 4.0 * pts[:, i] * pts[:, j]
            dlam[:, 3 + k, i] = 4.0 * pts[:, j]
            dlam[:, 3 + k, j] = 4.0 * pts[:, i]
        return vals, dlam


class EnrichedP2(ScalarElement):
    """P2 + bubble * P1 scalar space with vertex/edge-integral/moment DoFs.

    Vertex functions   u_i   = l_i (3 l_i - 2) + b (24 - 42 l_i)
    Edge functions     u_e_k = (6 / |e_k|) (l_i l_j + b (21 l_k - 12))
    Interior functions u_K_m = (1 / |K|) b (1260 l_m - 360)

    with b = l_1 l_2 l_3; the 1/|e| and 1/|K| factors are applied per
    element through local_scales.
    """

    name = "P2b"
    n_basis = 9
    n_per_edge = 1
    n_per_tri = 3

    def tabulate(self, pts):
        pts = np.asarray(pts, dtype=float)
        Q = pts.shape[0]
        l0, l1, l2 = pts[:, 0], pts[:, 1], pts[:, 2]
        b = l0 * l1 * l2
        db = np.empty((Q, 3))
        db[:, 0] = l1 * l2
        db[:, 1] = l0 * l2
        db[:, 2] = l0 * l1
        vals = np.empty((Q, 9))
        dlam = np.zeros((Q, 9, 3))
        for i in range(3):
            li = pts[:, i]
            vals[:, i] = li * (3.0 * li - 2.0) + b * (24.0 - 42.0 * li)
            for m in range(3):
                dlam[:, i, m] = db[:, m] * (24.0 - 42.0 * li)
            dlam[:, i, i] += 6.0 * li - 2.0 - 42.0 * b
        for k in range(3):
            i, j = (k + 1) % 3, (k + 2) % 3
            vals[:, 3 + k] = 6.0 * (pts[:, i] * pts[:, j] + b * (21.0 * pts[:, k] - 12.0))
            for m in range(3):
                dlam[:, 3 + k, m] = 6.0 * db[:, m] * (21.0 * pts[:, k] - 12.0)
            dlam[:, 3 + k, i] += 6.0 * pts[:, j]
            dlam[:, 3 + k, j] += 6.0 * pts[:, i]
            dlam[:, 3 + k, k] += 126.0 * b
        for m in range(3):
            vals[:, 6 + m] = b * (1260.0 * pts[:, m] - 360.0)
            for n in range(3):
                dlam[:, 6 + m, n] = db[:, n] * (1260.0 * pts[:, m] - 360.0)
            dlam[:, 6 + m, m] += 1260.0 * b
        return vals, dlam

    def local_scales(self, edge_lengths, areas):
        T = areas.shape[0]
        s = np.ones((T, 9))
        s[:, 3:6] = 1.0 / edge_lengths
        s[:, 6:9] = 1.0 / areas[:, None]
        return s


_ELEMENTS = {"P1": P1(), "P2": P2(), "P2b": EnrichedP2()}


def element_for(name: str) -> ScalarElement:
    try:
        return _ELEMENTS[name]
    except KeyError:
        raise ValueError(f"unknown element {name!r}") from None


def eval_lagrange_basis(degree, pts):
    """Values and barycentric derivatives of the P1 or P2 basis at pts."""
    if degree == 1:
        return P1().tabulate(pts)
    if degree == 2:
        return P2().tabulate(pts)
    raise ValueError("Lagrange degree must be 1 or 2")


def eval_enriched_basis(pts, edge_lengths=(1.0, 1.0, 1.0), area=1.0):
    """Enriched basis values and barycentric derivatives on one element.

    edge_lengths / area supply the physical normalization of the edge and
    interior functions; defaults give the reference-normalized basis.
    """
    pts = np.asarray(pts, dtype=float)
    if np.any(pts < -1e-12) or np.abs(pts.sum(axis=-1) - 1.0).max() > 1e-12:
        raise ValueError("points must be barycentric (nonnegative, summing to 1)")
    vals, dlam = EnrichedP2().tabulate(np.atleast_2d(pts))
    scale = np.ones(9)
    scale[3:6] = 1.0 / np.asarray(edge_lengths, dtype=float)
    scale[6:9] = 1.0 / float(area)
    return vals * scale, dlam * scale[:, None]


# component patterns of the symmetric 2x2 tensor element, order (11, 12, 22)
TENSOR_COMPONENTS = ("s11", "s12", "s22")
E2 = np.array([
    [[1.0, 0.0], [0.0, 0.0]],
    [[0.0, 1.0], [1.0, 0.0]],
    [[0.0, 0.0], [0.0, 1.0]],
])


def local_tensor_basis(vertices):
    """27 tensor-valued shape functions of the stress element on a triangle.

    Returns a callable mapping barycentric points (Q, 3) to values of shape
    (Q, 27, 2, 2); dof index = 3 * scalar_dof + component, components
    ordered (11, 12, 22).
    """
    vertices = np.asarray(vertices, dtype=float)
    area = 0.5 * abs(np.cross(vertices[1] - vertices[0], vertices[2] - vertices[0]))
    if area <= 0.0:
        raise ValueError("degenerate triangle")
    lengths = np.array([
        np.linalg.norm(vertices[(k + 2) % 3] - vertices[(k + 1) % 3]) for k in range(3)
    ])

    def basis(pts):
        vals, _ = eval_enriched_basis(pts, lengths, area)
        out = np.zeros((vals.shape[0], 27, 2, 2))
        for s in range(9):
            for c in range(3):
                out[:, 3 * s + c] = vals[:, s, None, None] * E2[c]
        return out

    return basis


def dof_functionals_matrix(vertices, quad_degree=10):
    """27x27 matrix of the tensor DoF functionals applied to the shape functions.

    Functionals (per component c): point values at the vertices, unweighted
    edge integrals, interior moments against the barycentric coordinates.
    Equals the identity when the element is unisolvent.
    """
    vertices = np.asarray(vertices, dtype=float)
    basis = local_tensor_basis(vertices)
    comp_of = [(0, 0), (0, 1), (1, 1)]
    M = np.zeros((27, 27))

    verts_bary = np.eye(3)
    vals_v = basis(verts_bary)  # (3, 27, 2, 2)
    for v in range(3):
        for c in range(3):
            i, j = comp_of[c]
            M[3 * v + c, :] = vals_v[v, :, i, j]

    xi, we = edge_quadrature(quad_degree)
    for k in range(3):
        i0, j0 = (k + 1) % 3, (k + 2) % 3
        L = np.linalg.norm(vertices[j0] - vertices[i0])
        bary = np.zeros((xi.shape[0], 3))
        bary[:, i0] = 1.0 - xi
        bary[:, j0] = xi
        vals_e = basis(bary)  # (Qe, 27, 2, 2)
        for c in range(3):
            i, j = comp_of[c]
            M[9 + 3 * k + c, :] = L * np.einsum("q,qb->b", we, vals_e[:, :, i, j])

    rule = quadrature(quad_degree)
    area = 0.5 * abs(np.cross(vertices[1] - vertices[0], vertices[2] - vertices[0]))
    vals_q = basis(rule.points)
    for m in range(3):
        lam_m = rule.points[:, m]
        for c in range(3):
            i, j = comp_of[c]
            M[18 + 3 * m + c, :] = area * np.einsum(
                "q,q,qb->b", rule.weights, lam_m, vals_q[:, :, i, j])
    return M


def sym_grad_surjectivity_rank():
    """Rank of sym-grad: P2 vector fields -> P1 symmetric tensors (max 9).

    Full rank 9 justifies the componentwise bubble enrichment in 2D: the
    local bubble space b_K * sym-grad(P2) equals b_K * P1 per tensor
    component.
    """
    # monomial basis of P2 vector fields: (1, x, y, x^2, xy, y^2) x 2 components
    monos = [(0, 0), (1, 0), (0, 1), (2, 0), (1, 1), (0, 2)]

    def grad_mono(a, b):
        # gradient coefficients of x^a y^b in the P1 monomial basis (1, x, y)
        gx = np.zeros(3)
        gy = np.zeros(3)
        if a == 1 and b == 0:
            gx[0] = 1.0
        elif a == 2:
            gx[1] = 2.0
        elif a == 1 and b == 1:
            gx[2] = 1.0
            gy[1] = 1.0
        elif b == 1 and a == 0:
            gy[0] = 1.0
        elif b == 2:
            gy[2] = 2.0
        return gx, gy

    cols = []
    for comp in range(2):
        for (a, b) in monos:
            gx, gy = grad_mono(a, b)
            col = np.zeros(9)  # (s11, s12, s22) x (1, x, y)
            if comp == 0:
                col[0:3] = gx
                col[3:6] = 0.5 * gy
            else:
                col[3:6] += 0.5 * gx
                col[6:9] = gy
            cols.append(col)
    return int(np.linalg.matrix_rank(np.array(cols).T, tol=1e-10))
