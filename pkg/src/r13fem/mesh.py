"""2D conforming triangulations for the benchmark geometries.

Builds the unit square (uniform diagonal or criss-cross split), a
ring-structured annulus and a square-with-square-obstacle mesh, classifies
boundary edges with outward normal / tangent frames, and provides a
diagnostics report plus a small ASCII interchange format.

Conventions: triangles are counterclockwise; edge k of a triangle is the
edge opposite local vertex k; the tangent is the outward normal rotated by
+90 degrees (counterclockwise).
"""

from __future__ import annotations

from dataclasses import dataclass, field, replace

import numpy as np

__all__ = [
    "Mesh",
    "MeshDiagnostics",
    "build_mesh",
    "build_unit_square_mesh",
    "build_annulus_mesh",
    "build_square_with_hole_mesh",
    "validate_mesh",
    "write_mesh",
    "read_mesh",
]


@dataclass
class Mesh:
    """Immutable triangulation with boundary frames.

    boundary_* arrays are aligned: entry i describes one boundary edge,
    giving its index into `edges`, the adjacent triangle, an integer region
    label, and the outward unit normal / unit tangent.
    """

    vertices: np.ndarray          # (V, 2)
    triangles: np.ndarray         # (T, 3) CCW
    edges: np.ndarray             # (E, 2) sorted vertex pairs
    tri_edges: np.ndarray         # (T, 3) edge index opposite local vertex k
    boundary_edge_ids: np.ndarray  # (B,) into edges
    boundary_tri: np.ndarray      # (B,) adjacent triangle
    boundary_local_edge: np.ndarray  # (B,) local edge index in boundary_tri
    boundary_labels: np.ndarray   # (B,) int region ids
    boundary_normals: np.ndarray  # (B, 2)
    boundary_tangents: np.ndarray  # (B, 2)
    h_max: float = 0.0
    areas: np.ndarray = field(default=None, repr=False)
    grad_lambda: np.ndarray = field(default=None, repr=False)  # (T, 3, 2)
    tri_edge_lengths: np.ndarray = field(default=None, repr=False)  # (T, 3)

    @property
    def n_vertices(self):
        return self.vertices.shape[0]

    @property
    def n_triangles(self):
        return self.triangles.shape[0]

    @property
    def n_edges(self):
        return self.edges.shape[0]

    def freeze(self):
        for a in (self.vertices, self.triangles, self.edges, self.tri_edges,
                  self.boundary_edge_ids, self.boundary_tri, self.boundary_local_edge,
                  self.boundary_labels, self.boundary_normals, self.boundary_tangents,
                  self.areas, self.grad_lambda, self.tri_edge_lengths):
            if a is not None:
                a.setflags(write=False)
        return self


def _signed_areas(vertices, triangles):
    a = vertices[triangles[:, 0]]
    b = vertices[triangles[:, 1]]
    c = vertices[triangles[:, 2]]
    return 0.5 * np.cross(b - a, c - a)


def build_mesh(vertices, triangles, label_fn) -> Mesh:
    """Assemble full connectivity from raw vertex/triangle arrays.

    label_fn(midpoints) maps boundary-edge midpoints (B, 2) to integer
    region labels. Triangles are reoriented CCW if needed.
    """
    vertices = np.asarray(vertices, dtype=float)
    triangles = np.asarray(triangles, dtype=np.int64)

    sa = _signed_areas(vertices, triangles)
    flip = sa < 0
    if flip.any():
        triangles = triangles.copy()
        triangles[flip] = triangles[flip][:, [0, 2, 1]]
        sa = np.abs(sa)
    if np.any(sa <= 0):
        raise ValueError("degenerate triangle in mesh")

    # edge k opposite local vertex k
    pairs = np.concatenate([
        triangles[:, [1, 2]], triangles[:, [2, 0]], triangles[:, [0, 1]],
    ])
    pairs_sorted = np.sort(pairs, axis=1)
    edges, inverse, counts = np.unique(
        pairs_sorted, axis=0, return_inverse=True, return_counts=True)
    T = triangles.shape[0]
    tri_edges = inverse.reshape(3, T).T.copy()
    if counts.max() > 2:
        raise ValueError("non-conforming mesh: edge shared by more than 2 triangles")

    boundary_edge_ids = np.flatnonzero(counts == 1)
    # adjacent triangle of each boundary edge
    edge_owner = np.full(edges.shape[0], -1, dtype=np.int64)
    edge_local = np.full(edges.shape[0], -1, dtype=np.int64)
    flat = tri_edges.ravel()
    order = np.argsort(flat, kind="stable")
    # last writer wins; boundary edges have exactly one owner anyway
    for idx in order:
        e = flat[idx]
        edge_owner[e] = idx // 3
        edge_local[e] = idx % 3
    boundary_tri = edge_owner[boundary_edge_ids]
    boundary_local_edge = edge_local[boundary_edge_ids]

    v0 = vertices[edges[boundary_edge_ids, 0]]
    v1 = vertices[edges[boundary_edge_ids, 1]]
    tvec = v1 - v0
    lengths = np.linalg.norm(tvec, axis=1)
    nrm = np.column_stack([tvec[:, 1], -tvec[:, 0]]) / lengths[:, None]
    mid = 0.5 * (v0 + v1)
    cent = vertices[triangles[boundary_tri]].mean(axis=1)
    inward = np.einsum("ij,ij->i", nrm, cent - mid) > 0
    nrm[inward] *= -1.0
    tang = np.column_stack([-nrm[:, 1], nrm[:, 0]])

    labels = np.asarray(label_fn(mid), dtype=np.int64)

    a = vertices[triangles[:, 0]]
    b = vertices[triangles[:, 1]]
    c = vertices[triangles[:, 2]]
    areas = 0.5 * np.cross(b - a, c - a)
    grad_lambda = np.empty((T, 3, 2))
    pts = [a, b, c]
    for i in range(3):
        pj = pts[(i + 1) % 3]
        pk = pts[(i + 2) % 3]
        grad_lambda[:, i, 0] = (pj[:, 1] - pk[:, 1]) / (2.0 * areas)
        grad_lambda[:, i, 1] = (pk[:, 0] - pj[:, 0]) / (2.0 * areas)
    tri_edge_lengths = np.empty((T, 3))
    for k in range(3):
        pi = pts[(k + 1) % 3]
        pj = pts[(k + 2) % 3]
        tri_edge_lengths[:, k] = np.linalg.norm(pj - pi, axis=1)
    h_max = float(tri_edge_lengths.max())

    return Mesh(
        vertices=vertices, triangles=triangles, edges=edges, tri_edges=tri_edges,
        boundary_edge_ids=boundary_edge_ids, boundary_tri=boundary_tri,
        boundary_local_edge=boundary_local_edge, boundary_labels=labels,
        boundary_normals=nrm, boundary_tangents=tang, h_max=h_max,
        areas=areas, grad_lambda=grad_lambda, tri_edge_lengths=tri_edge_lengths,
    ).freeze()


def build_unit_square_mesh(n: int, split: str = "diagonal") -> Mesh:
    """Uniform unit-square mesh with n subdivisions per side.

    split='diagonal' cuts each cell bottom-left to top-right (2 triangles
    per cell); split='crisscross' adds the cell center (4 triangles per
    cell) and is symmetric under both axis reflections. The bottom wall
    (y = 0) is labeled 1, the remaining boundary 2.
    """
    if n < 1:
        raise ValueError("n must be >= 1")
    xs = np.linspace(0.0, 1.0, n + 1)
    X, Y = np.meshgrid(xs, xs, indexing="xy")
    verts = np.column_stack([X.ravel(), Y.ravel()])

    def vid(i, j):
        return j * (n + 1) + i

    tris = []
    if split == "diagonal":
        for j in range(n):
            for i in range(n):
                v00, v10 = vid(i, j), vid(i + 1, j)
                v01, v11 = vid(i, j + 1), vid(i + 1, j + 1)
                tris.append([v00, v10, v11])
                tris.append([v00, v11, v01])
    elif split == "crisscross":
        centers = []
        for j in range(n):
            for i in range(n):
                centers.append([(xs[i] + xs[i + 1]) / 2.0, (xs[j] + xs[j + 1]) / 2.0])
        verts = np.vstack([verts, np.array(centers)])
        nc0 = (n + 1) * (n + 1)
        for j in range(n):
            for i in range(n):
                vc = nc0 + j * n + i
                v00, v10 = vid(i, j), vid(i + 1, j)
                v01, v11 = vid(i, j + 1), vid(i + 1, j + 1)
                tris += [[v00, v10, vc], [v10, v11, vc], [v11, v01, vc], [v01, v00, vc]]
    else:
        raise ValueError("split must be 'diagonal' or 'crisscross'")

    def labels(mid):
        return np.where(mid[:, 1] < 1e-12, 1, 2)

    return build_mesh(verts, np.array(tris), labels)


def _stitch_rings(inner_ids, inner_angles, outer_ids, outer_angles):
    """Triangulate the band between two concentric vertex rings.

    Greedy angular merge: repeatedly advance whichever ring's next vertex
    comes first in angle, emitting one triangle per step. Deterministic and
    valid for arbitrary per-ring counts.
    """
    ni, no = len(inner_ids), len(outer_ids)
    tris = []
    i = j = 0
    two_pi = 2.0 * np.pi

    def ia(k):
        return inner_angles[k % ni] + two_pi * (k // ni)

    def oa(k):
        return outer_angles[k % no] + two_pi * (k // no)

    while i < ni or j < no:
        adv_inner = j >= no or (i < ni and ia(i + 1) <= oa(j + 1))
        if adv_inner:
            tris.append([inner_ids[i % ni], inner_ids[(i + 1) % ni], outer_ids[j % no]])
            i += 1
        else:
            tris.append([inner_ids[i % ni], outer_ids[(j + 1) % no], outer_ids[j % no]])
            j += 1
    return tris


INNER_LABEL = 1
OUTER_LABEL = 2


def build_annulus_mesh(R1: float, R2: float, h: float) -> Mesh:
    """Ring-structured annulus mesh with target edge length h.

    Vertices lie on concentric circles with per-ring angular counts chosen
    so edge lengths stay near h; rings are stitched by a greedy angular
    merge. Boundary vertices sit exactly on radius R1 or R2 (polygonal
    boundary approximation). Labels: inner = 1, outer = 2.
    """
    if not (0.0 < R1 < R2):
        raise ValueError("need 0 < R1 < R2")
    if not (0.0 < h < R2 - R1):
        raise ValueError("need 0 < h < R2 - R1")
    n_rings = max(1, round((R2 - R1) / h))
    radii = np.linspace(R1, R2, n_rings + 1)
    verts = []
    ring_ids = []
    ring_angles = []
    for k, r in enumerate(radii):
        n_k = max(8, int(round(2.0 * np.pi * r / h)))
        offset = 0.5 * (k % 2) * (2.0 * np.pi / n_k)
        ang = offset + 2.0 * np.pi * np.arange(n_k) / n_k
        ids = len(verts) + np.arange(n_k)
        verts.extend(np.column_stack([r * np.cos(ang), r * np.sin(ang)]))
        ring_ids.append(ids)
        ring_angles.append(ang)
    tris = []
    for k in range(n_rings):
        tris += _stitch_rings(ring_ids[k], ring_angles[k], ring_ids[k + 1], ring_angles[k + 1])

    rmid = 0.5 * (R1 + R2)

    def labels(mid):
        return np.where(np.linalg.norm(mid, axis=1) < rmid, INNER_LABEL, OUTER_LABEL)

    mesh = build_mesh(np.array(verts), np.array(tris), labels)
    diag = validate_mesh(mesh)
    if diag.max_aspect_ratio > 12.0:
        raise ValueError(
            f"annulus generator quality bound exceeded (aspect {diag.max_aspect_ratio:.2f})")
    return mesh


def build_square_with_hole_mesh(h: float) -> Mesh:
    """Mesh of (0,8)^2 minus the closed square [1,3]^2, obstacle corners as vertices.

    Uses a uniform grid whose spacing divides 1 so the obstacle boundary is
    resolved exactly, then the diagonal split. Labels: obstacle boundary =
    1 (inner), outer boundary = 2.
    """
    if not (0.0 < h <= 0.5):
        raise ValueError("need 0 < h <= 0.5")
    m = int(np.ceil(1.0 / h))
    spacing = 1.0 / m
    n = 8 * m
    xs = np.arange(n + 1) * spacing

    def vid(i, j):
        return j * (n + 1) + i

    X, Y = np.meshgrid(xs, xs, indexing="xy")
    verts = np.column_stack([X.ravel(), Y.ravel()])
    tris = []
    lo, hi = m, 3 * m  # grid indices of x=1 and x=3
    for j in range(n):
        for i in range(n):
            if lo <= i < hi and lo <= j < hi:
                continue  # cell inside the obstacle
            v00, v10 = vid(i, j), vid(i + 1, j)
            v01, v11 = vid(i, j + 1), vid(i + 1, j + 1)
            tris.append([v00, v10, v11])
            tris.append([v00, v11, v01])
    tris = np.array(tris)
    used = np.unique(tris)
    remap = np.full(verts.shape[0], -1, dtype=np.int64)
    remap[used] = np.arange(used.shape[0])
    verts = verts[used]
    tris = remap[tris]

    def labels(mid):
        inner = ((mid[:, 0] > 1.0 - 1e-9) & (mid[:, 0] < 3.0 + 1e-9)
                 & (mid[:, 1] > 1.0 - 1e-9) & (mid[:, 1] < 3.0 + 1e-9))
        return np.where(inner, INNER_LABEL, OUTER_LABEL)

    return build_mesh(verts, tris, labels)


@dataclass
class MeshDiagnostics:
    min_angle_deg: float
    max_aspect_ratio: float
    orientation_violations: int
    conformity_violations: int
    h_max: float
    total_area: float


def validate_mesh(mesh: Mesh) -> MeshDiagnostics:
    """Quality / consistency report; never mutates or raises."""
    v = mesh.vertices
    t = mesh.triangles
    sa = _signed_areas(v, t)
    orient_bad = int(np.sum(sa <= 0))

    p = [v[t[:, i]] for i in range(3)]
    min_angle = np.inf
    for i in range(3):
        u1 = p[(i + 1) % 3] - p[i]
        u2 = p[(i + 2) % 3] - p[i]
        cosang = np.einsum("ij,ij->i", u1, u2) / (
            np.linalg.norm(u1, axis=1) * np.linalg.norm(u2, axis=1))
        min_angle = min(min_angle, np.degrees(np.arccos(np.clip(cosang, -1, 1))).min())

    lengths = mesh.tri_edge_lengths
    # aspect ratio: longest edge over inradius-based height, normalized to 1 for equilateral
    s = lengths.sum(axis=1) / 2.0
    inradius = np.abs(sa) / s
    aspect = lengths.max(axis=1) / (2.0 * np.sqrt(3.0) * inradius)

    pairs = np.concatenate([t[:, [1, 2]], t[:, [2, 0]], t[:, [0, 1]]])
    _, counts = np.unique(np.sort(pairs, axis=1), axis=0, return_counts=True)
    conf_bad = int(np.sum(counts > 2))

    return MeshDiagnostics(
        min_angle_deg=float(min_angle),
        max_aspect_ratio=float(aspect.max()),
        orientation_violations=orient_bad,
        conformity_violations=conf_bad,
        h_max=mesh.h_max,
        total_area=float(np.abs(sa).sum()),
    )


MESH_FORMAT_HEADER = "mesh2d 1"


def write_mesh(mesh: Mesh, path_or_file):
    """ASCII interchange format: header, counts, vertices, triangles, boundary edges."""
    own = isinstance(path_or_file, (str, bytes)) or hasattr(path_or_file, "__fspath__")
    f = open(path_or_file, "w") if own else path_or_file
    try:
        f.write(MESH_FORMAT_HEADER + "\n")
        f.write(f"{mesh.n_vertices} {mesh.n_triangles} {len(mesh.boundary_edge_ids)}\n")
        for x, y in mesh.vertices:
            f.write(f"{float(x)!r} {float(y)!r}\n")
        for i, j, k in mesh.triangles:
            f.write(f"{i} {j} {k}\n")
        for eid, lab in zip(mesh.boundary_edge_ids, mesh.boundary_labels):
            i, j = mesh.edges[eid]
            f.write(f"{i} {j} {lab}\n")
    finally:
        if own:
            f.close()


def read_mesh(path_or_file) -> Mesh:
    own = isinstance(path_or_file, (str, bytes)) or hasattr(path_or_file, "__fspath__")
    f = open(path_or_file) if own else path_or_file
    try:
        header = f.readline().strip()
        if header != MESH_FORMAT_HEADER:
            raise ValueError(f"bad mesh header {header!r}")
        nv, nt, nb = (int(x) for x in f.readline().split())
        verts = np.array([[float(x) for x in f.readline().split()] for _ in range(nv)])
        tris = np.array([[int(x) for x in f.readline().split()] for _ in range(nt)])
        blines = [[int(x) for x in f.readline().split()] for _ in range(nb)]
    finally:
        if own:
            f.close()
    label_of = {tuple(sorted((i, j))): lab for i, j, lab in blines}
    mesh = build_mesh(verts, tris, lambda mid: np.zeros(mid.shape[0], dtype=np.int64))
    labels = np.array([
        label_of.get(tuple(mesh.edges[eid]), 0) for eid in mesh.boundary_edge_ids
    ], dtype=np.int64)
    labels.setflags(write=False)
    return replace(mesh, boundary_labels=labels)
