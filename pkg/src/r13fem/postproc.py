"""Norms, errors, convergence rates, slices, closure moments and export.

Norm conventions: "L2" is the full L2 norm; "H1" is the H1 seminorm
|f|_1 = ||grad f||_0. Tensor fields carry the Frobenius component weights
(1, 2, 1) over (11, 12, 22).
"""

from __future__ import annotations

import csv
from dataclasses import dataclass, field

import numpy as np
from scipy.spatial import cKDTree

from . import assembly as asm
from . import elements as fe
from .mesh import Mesh
from .tensorops import embed_2d, stf3_project, stf_project

__all__ = [
    "locate_points",
    "evaluate_field",
    "field_norms",
    "error_between",
    "ConvergenceTable",
    "eoc",
    "closure_moments",
    "sample_slice",
    "oscillation_indicator",
    "export_fields",
    "read_vtk",
    "write_csv",
]

QUAD_DEGREE = 10
SNAP_TOL = 1e-12


# ---------------------------------------------------------------------------
# point location and field evaluation

def locate_points(mesh: Mesh, points, k: int = 12):
    """Containing element and barycentric coordinates for each point.

    Candidate elements come from a centroid KD-tree; the candidate whose
    smallest barycentric coordinate is largest wins, which also handles
    points marginally outside the polygonal boundary (slightly negative
    coordinates, polynomial extrapolation). Points whose best candidate has
    min barycentric coordinate below -0.1 are reported as outside
    (element index -1).
    """
    points = np.atleast_2d(np.asarray(points, dtype=float))
    cent = mesh.vertices[mesh.triangles].mean(axis=1)
    tree = cKDTree(cent)
    k = min(k, mesh.n_triangles)
    _, cand = tree.query(points, k=k)
    cand = np.atleast_2d(cand)
    if k == 1:
        cand = cand.reshape(-1, 1)
    # barycentric coordinates of each point in each candidate triangle
    tri = mesh.triangles[cand]                     # (N, k, 3)
    a = mesh.vertices[tri[:, :, 0]]
    b = mesh.vertices[tri[:, :, 1]]
    c = mesh.vertices[tri[:, :, 2]]
    d = points[:, None, :]
    det = np.cross(b - a, c - a)
    l2 = np.cross(d - a, c - a) / det
    l3 = np.cross(b - a, d - a) / det
    lam = np.stack([1.0 - l2 - l3, l2, l3], axis=-1)  # (N, k, 3)
    score = lam.min(axis=-1)
    best = score.argmax(axis=1)
    rows = np.arange(points.shape[0])
    elems = cand[rows, best]
    lam_best = lam[rows, best]
    elems = np.where(score[rows, best] < -0.1, -1, elems)
    # snap tiny negative coordinates
    small = np.abs(lam_best) < SNAP_TOL
    lam_best[small] = 0.0
    lam_best /= lam_best.sum(axis=1, keepdims=True)
    return elems, lam_best


def evaluate_field(dofmap: asm.DofMap, coeffs: np.ndarray, name: str,
                   elems: np.ndarray, lam: np.ndarray) -> np.ndarray:
    """Evaluate one field at points given by (element, barycentric) pairs.

    coeffs is the (n_components, n_scalar) array for the field; returns
    (N, n_components). Points with element -1 yield NaN.
    """
    space = dofmap.spaces[name]
    inside = elems >= 0
    vals, _ = space.element.tabulate(lam[inside])
    e = elems[inside]
    phi = space.scales[e] * vals                       # (n, nb)
    local = coeffs[:, space.gdofs[e]]                  # (nc, n, nb)
    out = np.full((elems.shape[0], coeffs.shape[0]), np.nan)
    out[inside] = np.einsum("nb,cnb->nc", phi, local)
    return out


def _volume_eval(mesh, dofmap, coeffs, name, quad):
    """Field values and gradients at all volume quadrature points.

    Returns vals (T, Q, nc) and grads (T, Q, nc, 2).
    """
    tab = asm.VolumeTab(mesh, dofmap.spaces[name], quad)
    local = coeffs[:, dofmap.spaces[name].gdofs]       # (nc, T, nb)
    vals = np.einsum("eqb,ceb->eqc", tab.vals, local)
    grads = np.einsum("eqbd,ceb->eqcd", tab.grads, local)
    return vals, grads


# ---------------------------------------------------------------------------
# norms and errors

def field_norms(solution, which: str = "L2", quad_degree: int = QUAD_DEGREE):
    """Per-field norms of a Solution (or of (dofmap, fields) duck-typed)."""
    dofmap = solution.dofmap
    mesh = dofmap.mesh
    quad = fe.quadrature(quad_degree)
    w = mesh.areas[:, None] * quad.weights[None, :]
    out = {}
    for name in asm.FIELD_ORDER:
        coeffs = solution.fields[name]
        vals, grads = _volume_eval(mesh, dofmap, coeffs, name, quad)
        wc = asm.SIGMA_WEIGHTS if name == "sigma" else np.ones(coeffs.shape[0])
        if which == "L2":
            out[name] = float(np.sqrt(np.einsum("eq,eqc,c->", w, vals ** 2, wc)))
        elif which == "H1":
            out[name] = float(np.sqrt(np.einsum("eq,eqcd,c->", w, grads ** 2, wc)))
        else:
            raise ValueError("which must be 'L2' or 'H1'")
    return out


@dataclass
class _FieldView:
    """Duck-typed minimal solution (dofmap + fields dict)."""
    dofmap: asm.DofMap
    fields: dict


def error_between(sol_fine, sol_coarse=None, analytic=None,
                  quad_degree: int = QUAD_DEGREE):
    """Per-field L2 errors integrated on the finer solution's mesh.

    Either `sol_coarse` (a Solution on a coarser mesh of the same domain,
    evaluated by point location) or `analytic` (dict field -> callable
    points (N, 2) -> (N, nc)) must be given.
    """
    dofmap = sol_fine.dofmap
    mesh = dofmap.mesh
    quad = fe.quadrature(quad_degree)
    w = mesh.areas[:, None] * quad.weights[None, :]
    pts = np.einsum("qi,eid->eqd", quad.points, mesh.vertices[mesh.triangles])
    flat = pts.reshape(-1, 2)
    if sol_coarse is not None:
        elems, lam = locate_points(sol_coarse.dofmap.mesh, flat)
        if np.any(elems < 0):
            raise ValueError("point location failed on the coarse mesh")
    out = {}
    for name in asm.FIELD_ORDER:
        coeffs = sol_fine.fields[name]
        vals, _ = _volume_eval(mesh, dofmap, coeffs, name, quad)
        if sol_coarse is not None:
            other = evaluate_field(sol_coarse.dofmap, sol_coarse.fields[name],
                                   name, elems, lam)
        else:
            other = np.asarray(analytic[name](flat), dtype=float).reshape(flat.shape[0], -1)
        diff = vals - other.reshape(vals.shape)
        wc = asm.SIGMA_WEIGHTS if name == "sigma" else np.ones(coeffs.shape[0])
        out[name] = float(np.sqrt(np.einsum("eq,eqc,c->", w, diff ** 2, wc)))
    return out


# ---------------------------------------------------------------------------
# convergence tables

@dataclass
class ConvergenceTable:
    """Rows of (h, per-field errors) with empirical orders of convergence."""

    hs: list = field(default_factory=list)
    errors: list = field(default_factory=list)     # list of dicts field -> error

    def add_row(self, h, errs):
        if self.hs and h >= self.hs[-1]:
            raise ValueError("mesh sizes must be strictly decreasing")
        self.hs.append(float(h))
        self.errors.append(dict(errs))

    def eocs(self):
        """EOC per field from row 2 on: log(e_prev/e_cur)/log(h_prev/h_cur)."""
        rows = [None]
        for i in range(1, len(self.hs)):
            row = {}
            for name, e in self.errors[i].items():
                e_prev = self.errors[i - 1][name]
                if e <= 0 or e_prev <= 0:
                    raise ValueError("nonpositive errors have no EOC")
                row[name] = np.log(e_prev / e) / np.log(self.hs[i - 1] / self.hs[i])
            rows.append(row)
        return rows

    def as_rows(self):
        """CSV-ready rows with header h, e_<field>_L2..., eoc_<field>..."""
        names = list(self.errors[0].keys()) if self.errors else []
        header = (["h"] + [f"e_{n}_L2" for n in names] + [f"eoc_{n}" for n in names])
        eocs = self.eocs()
        body = []
        for i, h in enumerate(self.hs):
            row = [h] + [self.errors[i][n] for n in names]
            row += [float("nan") if eocs[i] is None else eocs[i][n] for n in names]
            body.append(row)
        return header, body


def eoc(hs, errors):
    """Convenience constructor: hs list + list of per-field error dicts."""
    t = ConvergenceTable()
    for h, e in zip(hs, errors):
        t.add_row(h, e)
    return t


# ---------------------------------------------------------------------------
# derived quantities

def closure_moments(solution, quad_degree: int = 4):
    """Higher-order closure moments at quadrature points, per element.

    Returns dict with m (T, Q, 3, 3, 3), R (T, Q, 2, 2), delta (T, Q):
    m = -2 Kn Stf(grad sigma~), R = -(24/5) Kn stf(grad s),
    delta = -12 Kn div s, all from the discrete gradients.
    """
    dofmap = solution.dofmap
    mesh = dofmap.mesh
    kn = solution.kn if hasattr(solution, "kn") else solution.fields.get("kn", None)
    if kn is None:
        raise ValueError("solution does not carry a Knudsen number")
    quad = fe.quadrature(quad_degree)
    _, gsig = _volume_eval(mesh, dofmap, solution.fields["sigma"], "sigma", quad)
    _, gs = _volume_eval(mesh, dofmap, solution.fields["s"], "s", quad)
    T, Q = gsig.shape[:2]
    m = np.zeros((T, Q, 3, 3, 3))
    grad = np.einsum("cij,eqcd->eqijd", [embed_2d(p) for p in fe.E2], gsig)
    g3 = np.zeros((T, Q, 3, 3, 3))
    g3[:, :, :, :, :2] = grad
    for e in range(T):
        for q in range(Q):
            m[e, q] = -2.0 * kn * stf3_project(g3[e, q])
    # gs has components (s1, s2); grad s matrix (d_j s_i)
    gmat = np.transpose(gs, (0, 1, 2, 3))         # (T, Q, 2comp, 2dir)
    R = np.empty((T, Q, 2, 2))
    for e in range(T):
        for q in range(Q):
            R[e, q] = -(24.0 / 5.0) * kn * stf_project(gmat[e, q])
    delta = -12.0 * kn * (gs[:, :, 0, 0] + gs[:, :, 1, 1])
    return {"m": m, "R": R, "delta": delta}


def sample_slice(solution, axis: str, value: float, count: int,
                 lo: float = None, hi: float = None):
    """Sample all fields along an axis-aligned line.

    axis 'y' means the line y = value (points vary in x), axis 'x' the line
    x = value. Returns dict with 'points' (N, 2), per-field arrays (NaN and
    flagged where outside the domain, e.g. inside an obstacle), and 'inside'.
    """
    mesh = solution.dofmap.mesh
    if lo is None or hi is None:
        mn, mx = mesh.vertices.min(axis=0), mesh.vertices.max(axis=0)
        j = 0 if axis == "y" else 1
        lo = mn[j] if lo is None else lo
        hi = mx[j] if hi is None else hi
    t = np.linspace(lo, hi, count)
    if axis == "y":
        pts = np.column_stack([t, np.full(count, value)])
    elif axis == "x":
        pts = np.column_stack([np.full(count, value), t])
    else:
        raise ValueError("axis must be 'x' or 'y'")
    elems, lam = locate_points(mesh, pts)
    out = {"points": pts, "inside": elems >= 0}
    for name in asm.FIELD_ORDER:
        out[name] = evaluate_field(solution.dofmap, solution.fields[name],
                                   name, elems, lam)
    return out


def oscillation_indicator(solution, name: str = "u", quad_degree: int = 4):
    """Normalized inter-element jump energy of the field magnitude.

    w is the elementwise average of |field|; the indicator is
    sqrt(sum_e |e| (w_K1 - w_K2)^2) / ||w||_0 over interior edges. Zero for
    globally constant fields and invariant under scaling.
    """
    dofmap = solution.dofmap
    mesh = dofmap.mesh
    quad = fe.quadrature(quad_degree)
    vals, _ = _volume_eval(mesh, dofmap, solution.fields[name], name, quad)
    mag = np.sqrt((vals ** 2).sum(axis=2))          # (T, Q)
    wbar = mag @ quad.weights                        # elementwise average
    # interior edges: find the two adjacent elements of each edge
    owner = np.full((mesh.n_edges, 2), -1, dtype=np.int64)
    flat = mesh.tri_edges.ravel()
    tri_of = np.repeat(np.arange(mesh.n_triangles), 3)
    for eid, t in zip(flat, tri_of):
        if owner[eid, 0] < 0:
            owner[eid, 0] = t
        else:
            owner[eid, 1] = t
    interior = owner[:, 1] >= 0
    e1, e2 = owner[interior, 0], owner[interior, 1]
    v = mesh.vertices[mesh.edges[interior]]
    lengths = np.linalg.norm(v[:, 1] - v[:, 0], axis=1)
    jump = np.sqrt((lengths * (wbar[e1] - wbar[e2]) ** 2).sum())
    norm = np.sqrt((mesh.areas * wbar ** 2).sum())
    if norm == 0.0:
        return 0.0
    return float(jump / norm)


# ---------------------------------------------------------------------------
# export

def _subdivided_points(mesh: Mesh):
    """Vertices + edge midpoints, and the 4-way subdivided connectivity."""
    mids = mesh.vertices[mesh.edges].mean(axis=1)
    pts = np.vstack([mesh.vertices, mids])
    t = mesh.triangles
    m = mesh.n_vertices + mesh.tri_edges            # midpoint ids, opposite vertex k
    cells = np.vstack([
        np.column_stack([t[:, 0], m[:, 2], m[:, 1]]),
        np.column_stack([t[:, 1], m[:, 0], m[:, 2]]),
        np.column_stack([t[:, 2], m[:, 1], m[:, 0]]),
        np.column_stack([m[:, 0], m[:, 1], m[:, 2]]),
    ])
    return pts, cells


def export_fields(solution, path):
    """Legacy-VTK ASCII export on the 4-way subdivided triangulation.

    Quadratic fields are sampled at vertices and edge midpoints, linear
    fields interpolated to midpoints. Point data: theta, p (scalars),
    u, s (vectors), sigma components as three scalars.
    """
    dofmap = solution.dofmap
    mesh = dofmap.mesh
    pts, cells = _subdivided_points(mesh)
    # evaluate at the subdivision points: vertices are element corners
    elems, lam = locate_points(mesh, pts)
    data = {}
    for name in asm.FIELD_ORDER:
        data[name] = evaluate_field(dofmap, solution.fields[name], name, elems, lam)
    try:
        f = open(path, "w")
    except OSError as exc:
        raise OSError(f"cannot write VTK file {path}: {exc}") from exc
    with f:
        f.write("# vtk DataFile Version 3.0\n")
        f.write("r13fem fields\nASCII\nDATASET UNSTRUCTURED_GRID\n")
        f.write(f"POINTS {pts.shape[0]} double\n")
        for x, y in pts:
            f.write(f"{float(x)!r} {float(y)!r} 0.0\n")
        f.write(f"CELLS {cells.shape[0]} {4 * cells.shape[0]}\n")
        for a, b, c in cells:
            f.write(f"3 {a} {b} {c}\n")
        f.write(f"CELL_TYPES {cells.shape[0]}\n")
        f.write("5\n" * cells.shape[0])
        f.write(f"POINT_DATA {pts.shape[0]}\n")
        for name, comp in (("theta", 0), ("p", 0)):
            f.write(f"SCALARS {name} double 1\nLOOKUP_TABLE default\n")
            for v in data[name][:, 0]:
                f.write(f"{float(v)!r}\n")
        for cname, cidx in (("sigma_11", 0), ("sigma_12", 1), ("sigma_22", 2)):
            f.write(f"SCALARS {cname} double 1\nLOOKUP_TABLE default\n")
            for v in data["sigma"][:, cidx]:
                f.write(f"{float(v)!r}\n")
        for name in ("u", "s"):
            f.write(f"VECTORS {name} double\n")
            for vx, vy in data[name]:
                f.write(f"{float(vx)!r} {float(vy)!r} 0.0\n")


def read_vtk(path):
    """Parse the artifact's own legacy-VTK output (round-trip checks)."""
    with open(path) as f:
        lines = f.read().splitlines()
    i = lines.index(next(l for l in lines if l.startswith("POINTS")))
    npts = int(lines[i].split()[1])
    pts = np.array([[float(x) for x in lines[i + 1 + j].split()] for j in range(npts)])
    data = {}
    j = i + 1 + npts
    while j < len(lines):
        line = lines[j]
        if line.startswith("SCALARS"):
            name = line.split()[1]
            vals = [float(lines[j + 2 + k]) for k in range(npts)]
            data[name] = np.array(vals)
            j += 2 + npts
        elif line.startswith("VECTORS"):
            name = line.split()[1]
            vals = [[float(x) for x in lines[j + 1 + k].split()] for k in range(npts)]
            data[name] = np.array(vals)
            j += 1 + npts
        else:
            j += 1
    return pts[:, :2], data


def write_csv(path, header, rows):
    with open(path, "w", newline="") as f:
        w = csv.writer(f)
        w.writerow(header)
        for row in rows:
            w.writerow([repr(v) if isinstance(v, float) else v for v in row])
