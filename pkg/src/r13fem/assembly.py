"""Global assembly of the five-field mixed system.

Unknowns are ordered (sigma, s, p, u, theta, mu) where sigma is the
symmetric deviatoric stress (components 11, 12, 22), s the heat flux, p the
pressure, u the velocity, theta the temperature and mu a scalar Lagrange
multiplier enforcing zero-mean pressure. Within a field the numbering is
component-major: dof = offset + component * n_scalar + scalar_dof.

The weak form couples the trial triple (sigma, s, p) to the test pair
(u, theta) through first-order operators only, so the assembled matrix has
the saddle-point shape [[A, B^T], [B, 0]]; A is symmetric except for the
skew c-pairing between sigma and s.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
import scipy.sparse as sp

from . import elements as fe
from .elements import E2
from .mesh import Mesh
from .tensorops import embed_2d, stf3_project

__all__ = [
    "PRESETS",
    "FIELD_ORDER",
    "FIELD_COMPONENTS",
    "WallData",
    "DofMap",
    "BlockSystem",
    "build_dofmap",
    "build_system",
    "assemble_volume_forms",
    "assemble_boundary_forms",
    "assemble_rhs",
    "field_gram_matrices",
    "coupling_matrix",
    "INFSUP_PAIRS",
    "boundary_scalar_dofs",
    "rigid_motion_coefficients",
    "constant_coefficients",
    "dump_matrix",
]

# element name per field, keyed by preset
PRESETS = {
    "enriched": {"sigma": "P2b", "s": "P2", "p": "P1", "u": "P2", "theta": "P1"},
    "equal_order": {"sigma": "P2", "s": "P2", "p": "P1", "u": "P2", "theta": "P1"},
    "taylor_hood": {"sigma": "P2", "s": "P2", "p": "P1", "u": "P1", "theta": "P1"},
}

FIELD_ORDER = ("sigma", "s", "p", "u", "theta")
FIELD_COMPONENTS = {"sigma": 3, "s": 2, "p": 1, "u": 2, "theta": 1}

# Frobenius weights of the symmetric-tensor components (11, 12, 22)
SIGMA_WEIGHTS = np.array([1.0, 2.0, 1.0])

VOLUME_DEGREE = 10
EDGE_DEGREE = 6


@dataclass
class WallData:
    """Per-boundary-label wall data and physical parameters.

    theta_w / u_t_w map boundary labels to wall temperature and tangential
    wall velocity; entries may be floats or callables evaluated at boundary
    quadrature points (N, 2) -> (N,). chi is the modified Maxwell
    accommodation factor.
    """

    theta_w: dict
    u_t_w: dict
    chi: float = 1.0

    def __post_init__(self):
        if not self.chi > 0:
            raise ValueError("accommodation factor chi must be positive")

    def _eval(self, table, label, points):
        if label not in table:
            raise KeyError(f"no wall data for boundary label {label}")
        v = table[label]
        if callable(v):
            return np.asarray(v(points), dtype=float)
        return np.full(points.shape[0], float(v))

    def theta_at(self, label, points):
        return self._eval(self.theta_w, label, points)

    def u_t_at(self, label, points):
        return self._eval(self.u_t_w, label, points)


@dataclass
class ScalarSpace:
    """Scalar finite element space on a mesh: global numbering + tabulations."""

    name: str
    element: fe.ScalarElement
    gdofs: np.ndarray        # (T, nb) global scalar dof per element
    n_scalar: int
    scales: np.ndarray       # (T, nb) physical scaling of reference basis


def scalar_space(mesh: Mesh, elem_name: str) -> ScalarSpace:
    elem = fe.element_for(elem_name)
    T = mesh.n_triangles
    V = mesh.n_vertices
    E = mesh.n_edges
    blocks = [mesh.triangles]
    if elem.n_per_edge:
        blocks.append(V + mesh.tri_edges)
        n_scalar = V + E
    else:
        n_scalar = V
    if elem.n_per_tri:
        base = V + E + elem.n_per_tri * np.arange(T)[:, None]
        blocks.append(base + np.arange(elem.n_per_tri)[None, :])
        n_scalar = V + E + elem.n_per_tri * T
    gdofs = np.hstack(blocks)
    scales = elem.local_scales(mesh.tri_edge_lengths, mesh.areas)
    return ScalarSpace(elem_name, elem, gdofs, n_scalar, scales)


@dataclass
class DofMap:
    """Monolithic numbering of all fields plus the zero-mean multiplier."""

    mesh: Mesh
    preset: str
    spaces: dict            # field -> ScalarSpace
    offsets: dict           # field -> int
    n_total: int            # includes the multiplier row

    @property
    def multiplier_index(self):
        return self.n_total - 1

    def field_dim(self, name):
        return FIELD_COMPONENTS[name] * self.spaces[name].n_scalar

    def field_slice(self, name):
        off = self.offsets[name]
        return slice(off, off + self.field_dim(name))

    def global_dofs(self, name, component):
        """Global dof array (T, nb) of one component of a field."""
        sp_ = self.spaces[name]
        return self.offsets[name] + component * sp_.n_scalar + sp_.gdofs

    def split(self, x):
        """Split a monolithic vector into per-field (n_components, n_scalar) arrays."""
        out = {}
        for name in FIELD_ORDER:
            nc = FIELD_COMPONENTS[name]
            ns = self.spaces[name].n_scalar
            out[name] = np.asarray(x)[self.field_slice(name)].reshape(nc, ns)
        out["mu"] = float(np.asarray(x)[self.multiplier_index])
        return out


def build_dofmap(mesh: Mesh, preset: str) -> DofMap:
    if preset not in PRESETS:
        raise ValueError(f"unknown preset {preset!r}; choose from {sorted(PRESETS)}")
    spaces = {name: scalar_space(mesh, PRESETS[preset][name]) for name in FIELD_ORDER}
    offsets = {}
    off = 0
    for name in FIELD_ORDER:
        offsets[name] = off
        off += FIELD_COMPONENTS[name] * spaces[name].n_scalar
    return DofMap(mesh, preset, spaces, offsets, off + 1)


# ---------------------------------------------------------------------------
# tabulations

class VolumeTab:
    """Physical basis values and gradients at shared volume quadrature points."""

    def __init__(self, mesh: Mesh, space: ScalarSpace, quad: fe.QuadratureRule):
        vals, dlam = space.element.tabulate(quad.points)     # (Q, nb), (Q, nb, 3)
        # phi[e, q, b] and grad[e, q, b, d]
        self.vals = space.scales[:, None, :] * vals[None, :, :]
        g = np.einsum("qbi,eid->eqbd", dlam, mesh.grad_lambda)
        self.grads = space.scales[:, None, :, None] * g
        self.nb = space.element.n_basis


def _wa(mesh, quad):
    """(T, Q) combined quadrature weight x element area."""
    return mesh.areas[:, None] * quad.weights[None, :]


def _mass(mesh, quad, ta: VolumeTab, tb: VolumeTab):
    return np.einsum("eq,eqa,eqb->eab", _wa(mesh, quad), ta.vals, tb.vals)


def _grad2(mesh, quad, ta: VolumeTab, tb: VolumeTab):
    """G[e, a, b, d1, d2] = int d_{d1} phi_a d_{d2} phi_b."""
    return np.einsum("eq,eqac,eqbd->eabcd", _wa(mesh, quad), ta.grads, tb.grads)


def _gradmass(mesh, quad, ta: VolumeTab, tb: VolumeTab):
    """GM[e, a, b, d] = int (d_d phi_a) phi_b."""
    return np.einsum("eq,eqad,eqb->eabd", _wa(mesh, quad), ta.grads, tb.vals)


class Triplets:
    """COO accumulator with deterministic insertion order."""

    def __init__(self, shape):
        self.shape = shape
        self.rows = []
        self.cols = []
        self.vals = []

    def add_block(self, rows, cols, block):
        """rows (E, m), cols (E, n), block (E, m, n): scatter elementwise outer blocks."""
        E, m = rows.shape
        n = cols.shape[1]
        self.rows.append(np.broadcast_to(rows[:, :, None], (E, m, n)).ravel())
        self.cols.append(np.broadcast_to(cols[:, None, :], (E, m, n)).ravel())
        self.vals.append(np.asarray(block).reshape(E * m * n))

    def add_entries(self, rows, cols, vals):
        self.rows.append(np.asarray(rows).ravel())
        self.cols.append(np.asarray(cols).ravel())
        self.vals.append(np.asarray(vals).ravel())

    def tocsr(self):
        if self.rows:
            r = np.concatenate(self.rows)
            c = np.concatenate(self.cols)
            v = np.concatenate(self.vals)
        else:
            r = c = v = np.zeros(0)
        return sp.coo_matrix((v, (r, c)), shape=self.shape).tocsr()


def _stf_coupling_table():
    """M6[c1, k1, c2, k2] = <Stf(E~_c1 (x) e_k1), Stf(E~_c2 (x) e_k2)>_F.

    E~_c is the trace-free 3D embedding of the 2D component pattern and e_k
    an in-plane direction; this reduces the Stf-gradient volume term to
    scalar gradient integrals.
    """
    basis = np.zeros((3, 2, 3, 3, 3))
    for c in range(3):
        emb = embed_2d(E2[c])
        for k in range(2):
            g = np.zeros((3, 3, 3))
            g[:, :, k] = emb
            basis[c, k] = stf3_project(g)
    return np.einsum("ckxyz,dlxyz->ckdl", basis, basis)


M6 = _stf_coupling_table()
TEMB = np.array([[2.0, 0.0, 1.0], [0.0, 2.0, 0.0], [1.0, 0.0, 2.0]])


# ---------------------------------------------------------------------------
# volume forms

def assemble_volume_forms(mesh: Mesh, dofmap: DofMap, kn: float, out: Triplets,
                          quad_degree: int = VOLUME_DEGREE):
    """Scatter all volume contributions of a, c, d, b, e, g into `out`.

    Row/column block conventions (test row <- trial column):
      sigma-test: d(sigma, tau) + c(s, tau) - e(u, tau)
      s-test:    -c(r, sigma) + a(s, r) - b(theta, r)
      p-test:    -g(q, u)  (+ multiplier column)
      u-test:    -e(v, sigma) - g(p, v)
      theta-test: -b(gamma, s)
    """
    if not kn > 0:
        raise ValueError("Kn must be positive")
    quad = fe.quadrature(quad_degree)
    tabs = {n: VolumeTab(mesh, dofmap.spaces[n], quad) for n in FIELD_ORDER}
    gsig = [dofmap.global_dofs("sigma", c) for c in range(3)]
    gs = [dofmap.global_dofs("s", c) for c in range(2)]
    gu = [dofmap.global_dofs("u", c) for c in range(2)]
    gp = dofmap.global_dofs("p", 0)
    gth = dofmap.global_dofs("theta", 0)

    # --- d-form volume: Kn (Stf grad sigma~ : Stf grad tau~) + (1/(2 Kn)) (sigma~, tau~)
    Gss = _grad2(mesh, quad, tabs["sigma"], tabs["sigma"])
    Mss = _mass(mesh, quad, tabs["sigma"], tabs["sigma"])
    for c1 in range(3):
        for c2 in range(3):
            blk = kn * np.einsum("kl,eabkl->eab", M6[c1, :, c2, :], Gss)
            blk += (TEMB[c1, c2] / (2.0 * kn)) * Mss
            out.add_block(gsig[c1], gsig[c2], blk)

    # --- a-form volume on the s/s block
    Gaa = _grad2(mesh, quad, tabs["s"], tabs["s"])
    Maa = _mass(mesh, quad, tabs["s"], tabs["s"])
    trG = np.einsum("eabdd->eab", Gaa)
    for c1 in range(2):
        for c2 in range(2):
            blk = (24.0 / 25.0) * kn * 0.5 * Gaa[:, :, :, c2, c1]
            if c1 == c2:
                blk = blk + (24.0 / 25.0) * kn * 0.5 * trG
                blk = blk + (4.0 / 15.0) / kn * Maa
            blk = blk + (12.0 / 25.0) * kn * Gaa[:, :, :, c1, c2]
            out.add_block(gs[c1], gs[c2], blk)

    # --- c-form volume: (2/5)(sigma, grad r), r in the s-space
    # C[(m, a_r), (c, b_sig)] = (2/5) sum_i E2[c][i, m] int phi_bsig d_i psi_ar
    GMc = _gradmass(mesh, quad, tabs["s"], tabs["sigma"])  # (e, a_r, b_sig, i)
    for m in range(2):
        for c in range(3):
            blk = (2.0 / 5.0) * np.einsum("i,eabi->eab", E2[c][:, m], GMc)
            out.add_block(gsig[c], gs[m], np.transpose(blk, (0, 2, 1)))  # +c(s, tau)
            out.add_block(gs[m], gsig[c], -blk)                          # -c(r, sigma)

    # --- e-form: (div tau, u); E[(c, b_sig), (m, a_u)]
    GMe = _gradmass(mesh, quad, tabs["sigma"], tabs["u"])  # (e, a_sig, b_u, i)
    for c in range(3):
        for m in range(2):
            blk = np.einsum("i,eabi->eab", E2[c][:, m], GMe)
            out.add_block(gsig[c], gu[m], -blk)                          # -e(u, tau)
            out.add_block(gu[m], gsig[c], -np.transpose(blk, (0, 2, 1)))  # -e(v, sigma)

    # --- b-form: (theta, div r)
    GMb = _gradmass(mesh, quad, tabs["s"], tabs["theta"])  # (e, a_r, b_th, i)
    for m in range(2):
        blk = GMb[:, :, :, m]
        out.add_block(gs[m], gth, -blk)                                  # -b(theta, r)
        out.add_block(gth, gs[m], -np.transpose(blk, (0, 2, 1)))         # -b(gamma, s)

    # --- g-form: (v, grad p)
    GMg = _gradmass(mesh, quad, tabs["p"], tabs["u"])  # (e, a_p, b_u, i)
    for m in range(2):
        blk = np.transpose(GMg[:, :, :, m], (0, 2, 1))  # (e, b_u, a_p)
        out.add_block(gu[m], gp, -blk)                                   # -g(p, v)
        out.add_block(gp, gu[m], -np.transpose(blk, (0, 2, 1)))          # -g(q, u)

    # --- zero-mean pressure multiplier: mu * m(q) in the p row, m(p) in the mu row
    mp = _mass(mesh, quad, tabs["p"], tabs["p"]).sum(axis=2)  # int phi_a per element
    mu_col = np.full(gp.shape, dofmap.multiplier_index)
    out.add_entries(gp, mu_col, mp)
    out.add_entries(mu_col, gp, mp)


# ---------------------------------------------------------------------------
# boundary forms

class EdgeTab:
    """Basis traces of a space on boundary edges, grouped by geometry.

    vals[i, q, b]: trace of basis b of the adjacent triangle at edge
    quadrature point q of boundary edge i.
    """

    def __init__(self, mesh: Mesh, space: ScalarSpace, xi: np.ndarray):
        Q = xi.shape[0]
        B = mesh.boundary_tri.shape[0]
        nb = space.element.n_basis
        self.vals = np.empty((B, Q, nb))
        for k in range(3):
            sel = np.flatnonzero(mesh.boundary_local_edge == k)
            if sel.size == 0:
                continue
            lam = np.zeros((Q, 3))
            lam[:, (k + 1) % 3] = 1.0 - xi
            lam[:, (k + 2) % 3] = xi
            v, _ = space.element.tabulate(lam)
            self.vals[sel] = space.scales[mesh.boundary_tri[sel], None, :] * v[None, :, :]


def _edge_geometry(mesh: Mesh, xi: np.ndarray):
    eids = mesh.boundary_edge_ids
    tri = mesh.boundary_tri
    k = mesh.boundary_local_edge
    vi = mesh.triangles[tri, (k + 1) % 3]
    vj = mesh.triangles[tri, (k + 2) % 3]
    p0 = mesh.vertices[vi]
    p1 = mesh.vertices[vj]
    lengths = np.linalg.norm(p1 - p0, axis=1)
    # physical quadrature points (B, Q, 2)
    pts = p0[:, None, :] * (1.0 - xi)[None, :, None] + p1[:, None, :] * xi[None, :, None]
    return eids, lengths, pts


def assemble_boundary_forms(mesh: Mesh, dofmap: DofMap, chi: float, out: Triplets,
                            edge_degree: int = EDGE_DEGREE):
    """Scatter the a, c, d boundary terms (Onsager conditions) into `out`."""
    if not chi > 0:
        raise ValueError("chi must be positive")
    if np.any(mesh.boundary_labels == 0):
        raise ValueError("unlabeled boundary edge")
    xi, w = fe.edge_quadrature(edge_degree)
    _, lengths, _ = _edge_geometry(mesh, xi)
    n = mesh.boundary_normals
    t = mesh.boundary_tangents
    tab_sig = EdgeTab(mesh, dofmap.spaces["sigma"], xi)
    tab_s = EdgeTab(mesh, dofmap.spaces["s"], xi)

    # edge mass matrices int_e phi_a psi_b for (sigma,sigma), (s,s), (s,sigma)
    wl = lengths[:, None] * w[None, :]
    Msig = np.einsum("iq,iqa,iqb->iab", wl, tab_sig.vals, tab_sig.vals)
    Ms = np.einsum("iq,iqa,iqb->iab", wl, tab_s.vals, tab_s.vals)
    Mss = np.einsum("iq,iqa,iqb->iab", wl, tab_s.vals, tab_sig.vals)

    bt = mesh.boundary_tri
    gsig = [dofmap.global_dofs("sigma", c)[bt] for c in range(3)]
    gs = [dofmap.global_dofs("s", c)[bt] for c in range(2)]

    # frame contractions of the component patterns: A_nn[i, c], A_nt, A_tt
    Ann = np.einsum("ix,cxy,iy->ic", n, E2, n)
    Ant = np.einsum("ix,cxy,iy->ic", n, E2, t)
    Att = np.einsum("ix,cxy,iy->ic", t, E2, t)

    # a-form boundary: (1/(2 chi)) s_n r_n + (12/25) chi s_t r_t
    for c1 in range(2):
        for c2 in range(2):
            coef = (0.5 / chi) * n[:, c1] * n[:, c2] + (12.0 / 25.0) * chi * t[:, c1] * t[:, c2]
            out.add_block(gs[c1], gs[c2], coef[:, None, None] * Ms)

    # c-form boundary: -(3/20) sigma_nn r_n - (1/5) sigma_nt r_t
    for m in range(2):
        for c in range(3):
            coef = -(3.0 / 20.0) * Ann[:, c] * n[:, m] - (1.0 / 5.0) * Ant[:, c] * t[:, m]
            blk = coef[:, None, None] * Mss  # (i, a_r, b_sig)
            out.add_block(gsig[c], gs[m], np.transpose(blk, (0, 2, 1)))
            out.add_block(gs[m], gsig[c], -blk)

    # d-form boundary
    for c1 in range(3):
        for c2 in range(3):
            coef = ((9.0 / 8.0) * chi * Ann[:, c1] * Ann[:, c2]
                    + chi * (Att[:, c1] + 0.5 * Ann[:, c1]) * (Att[:, c2] + 0.5 * Ann[:, c2])
                    + (1.0 / chi) * Ant[:, c1] * Ant[:, c2])
            out.add_block(gsig[c1], gsig[c2], coef[:, None, None] * Msig)


def assemble_rhs(mesh: Mesh, dofmap: DofMap, wall: WallData,
                 edge_degree: int = EDGE_DEGREE) -> np.ndarray:
    """Load vector: l1(r) = -int theta^W r_n in the s rows, l2(tau) =
    -int u_t^W tau_nt in the sigma rows."""
    F = np.zeros(dofmap.n_total)
    xi, w = fe.edge_quadrature(edge_degree)
    _, lengths, pts = _edge_geometry(mesh, xi)
    n = mesh.boundary_normals
    t = mesh.boundary_tangents
    tab_sig = EdgeTab(mesh, dofmap.spaces["sigma"], xi)
    tab_s = EdgeTab(mesh, dofmap.spaces["s"], xi)

    B = lengths.shape[0]
    thw = np.empty((B, xi.shape[0]))
    utw = np.empty((B, xi.shape[0]))
    for lab in np.unique(mesh.boundary_labels):
        sel = mesh.boundary_labels == lab
        flat = pts[sel].reshape(-1, 2)
        thw[sel] = wall.theta_at(int(lab), flat).reshape(-1, xi.shape[0])
        utw[sel] = wall.u_t_at(int(lab), flat).reshape(-1, xi.shape[0])

    wl = lengths[:, None] * w[None, :]
    bt = mesh.boundary_tri
    Ant = np.einsum("ix,cxy,iy->ic", n, E2, t)

    # l1: s rows
    l1 = np.einsum("iq,iq,iqa->ia", wl, thw, tab_s.vals)
    for m in range(2):
        g = dofmap.global_dofs("s", m)[bt]
        np.add.at(F, g, -n[:, m, None] * l1)
    # l2: sigma rows
    l2 = np.einsum("iq,iq,iqa->ia", wl, utw, tab_sig.vals)
    for c in range(3):
        g = dofmap.global_dofs("sigma", c)[bt]
        np.add.at(F, g, -Ant[:, c, None] * l2)
    return F


# ---------------------------------------------------------------------------
# monolithic system

@dataclass
class BlockSystem:
    matrix: sp.csr_matrix
    rhs: np.ndarray
    dofmap: DofMap
    kn: float
    chi: float
    wall: WallData = field(default=None, repr=False)


def build_system(mesh: Mesh, preset: str, kn: float, wall: WallData) -> BlockSystem:
    dofmap = build_dofmap(mesh, preset)
    out = Triplets((dofmap.n_total, dofmap.n_total))
    assemble_volume_forms(mesh, dofmap, kn, out)
    assemble_boundary_forms(mesh, dofmap, wall.chi, out)
    K = out.tocsr()
    F = assemble_rhs(mesh, dofmap, wall)
    return BlockSystem(K, F, dofmap, kn, wall.chi, wall)


def dump_matrix(system: BlockSystem, path):
    """Coordinate-format ASCII dump plus a sidecar with field offsets."""
    coo = system.matrix.tocoo()
    with open(path, "w") as f:
        f.write(f"% {coo.shape[0]} {coo.shape[1]} {coo.nnz}\n")
        for r, c, v in zip(coo.row, coo.col, coo.data):
            f.write(f"{r} {c} {v!r}\n")
    with open(str(path) + ".offsets", "w") as f:
        for name in FIELD_ORDER:
            f.write(f"{name} {system.dofmap.offsets[name]} {system.dofmap.field_dim(name)}\n")
        f.write(f"multiplier {system.dofmap.multiplier_index} 1\n")


# ---------------------------------------------------------------------------
# Gram matrices and auxiliary coefficient constructions (diagnostics)

def field_gram_matrices(mesh: Mesh, dofmap: DofMap, name: str,
                        quad_degree: int = VOLUME_DEGREE):
    """(L2, H1) Gram matrices of one field in its standalone numbering.

    For the tensor field the inner product carries the Frobenius component
    weights (1, 2, 1); vector/scalar fields sum components with weight 1.
    """
    quad = fe.quadrature(quad_degree)
    space = dofmap.spaces[name]
    tab = VolumeTab(mesh, space, quad)
    nc = FIELD_COMPONENTS[name]
    weights = SIGMA_WEIGHTS if name == "sigma" else np.ones(nc)
    Mel = _mass(mesh, quad, tab, tab)
    Gel = np.einsum("eabdd->eab", _grad2(mesh, quad, tab, tab))
    dim = nc * space.n_scalar
    t0 = Triplets((dim, dim))
    t1 = Triplets((dim, dim))
    for c in range(nc):
        g = c * space.n_scalar + space.gdofs
        t0.add_block(g, g, weights[c] * Mel)
        t1.add_block(g, g, weights[c] * (Mel + Gel))
    return t0.tocsr(), t1.tocsr()


INFSUP_PAIRS = {
    # pair id: (trial field, test field)
    "sigma_u": ("sigma", "u"),
    "s_theta": ("s", "theta"),
    "u_p": ("u", "p"),
}


def coupling_matrix(mesh: Mesh, dofmap: DofMap, pair: str,
                    quad_degree: int = VOLUME_DEGREE) -> sp.csr_matrix:
    """Coupling block B (test rows x trial columns) in standalone field numbering.

    sigma_u: (v, div sigma); s_theta: (gamma, div s); u_p: (u, grad q).
    """
    if pair not in INFSUP_PAIRS:
        raise ValueError(f"unknown pair {pair!r}; choose from {sorted(INFSUP_PAIRS)}")
    quad = fe.quadrature(quad_degree)
    trial, test = INFSUP_PAIRS[pair]
    sp_trial = dofmap.spaces[trial]
    sp_test = dofmap.spaces[test]
    tab_trial = VolumeTab(mesh, sp_trial, quad)
    tab_test = VolumeTab(mesh, sp_test, quad)
    n_test = FIELD_COMPONENTS[test] * sp_test.n_scalar
    n_trial = FIELD_COMPONENTS[trial] * sp_trial.n_scalar
    out = Triplets((n_test, n_trial))
    if pair == "sigma_u":
        GM = _gradmass(mesh, quad, tab_trial, tab_test)  # (e, a_sig, b_u, i)
        for c in range(3):
            for m in range(2):
                blk = np.einsum("i,eabi->eba", E2[c][:, m], GM)  # (e, b_u, a_sig)
                out.add_block(m * sp_test.n_scalar + sp_test.gdofs,
                              c * sp_trial.n_scalar + sp_trial.gdofs, blk)
    elif pair == "s_theta":
        GM = _gradmass(mesh, quad, tab_trial, tab_test)  # (e, a_s, b_th, i)
        for m in range(2):
            out.add_block(sp_test.gdofs, m * sp_trial.n_scalar + sp_trial.gdofs,
                          np.transpose(GM[:, :, :, m], (0, 2, 1)))
    else:  # u_p: B[q, u] = (u, grad q)
        GM = _gradmass(mesh, quad, tab_test, tab_trial)  # (e, a_p, b_u, i)
        for m in range(2):
            out.add_block(sp_test.gdofs, m * sp_trial.n_scalar + sp_trial.gdofs,
                          GM[:, :, :, m])
    return out.tocsr()


def boundary_scalar_dofs(mesh: Mesh, space: ScalarSpace) -> np.ndarray:
    """Scalar dofs with support on the boundary: boundary vertices and edges."""
    bverts = np.unique(mesh.edges[mesh.boundary_edge_ids].ravel())
    dofs = [bverts]
    if space.element.n_per_edge:
        dofs.append(mesh.n_vertices + mesh.boundary_edge_ids)
    return np.unique(np.concatenate(dofs))


def _nodal_coordinates(mesh: Mesh, space: ScalarSpace) -> np.ndarray:
    """Coordinates of the Lagrange nodes of P1/P2 (vertices, then midpoints)."""
    if space.element.n_per_tri:
        raise ValueError("nodal coordinates only defined for Lagrange spaces")
    pts = [mesh.vertices]
    if space.element.n_per_edge:
        pts.append(mesh.vertices[mesh.edges].mean(axis=1))
    return np.vstack(pts)


def rigid_motion_coefficients(mesh: Mesh, dofmap: DofMap, name: str = "u") -> np.ndarray:
    """Coefficient vectors of the rigid motions (1,0), (0,1), (y,-x) in a
    Lagrange vector field; columns of the returned (dim, 3) array."""
    space = dofmap.spaces[name]
    x = _nodal_coordinates(mesh, space)
    ns = space.n_scalar
    Z = np.zeros((2 * ns, 3))
    Z[:ns, 0] = 1.0
    Z[ns:, 1] = 1.0
    Z[:ns, 2] = x[:, 1]
    Z[ns:, 2] = -x[:, 0]
    return Z


def constant_coefficients(mesh: Mesh, dofmap: DofMap, name: str) -> np.ndarray:
    """Coefficient vector of the constant-1 field (scalar Lagrange spaces)."""
    space = dofmap.spaces[name]
    _nodal_coordinates(mesh, space)  # validates Lagrange property
    return np.ones((space.n_scalar, 1))
