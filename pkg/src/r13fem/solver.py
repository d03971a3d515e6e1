"""Linear solves and stability diagnostics for the assembled block system.

Provides a direct sparse solve with a residual contract, a minimum-norm
fallback for (near-)singular systems arising from unenriched element
choices, discrete inf-sup constants for the three coupling pairs, and a
coercivity witness on the numerically extracted constraint kernel.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
import scipy.linalg as sla
import scipy.sparse as sp
import scipy.sparse.linalg as spl

from . import assembly as asm
from .assembly import BlockSystem, DofMap
from .mesh import Mesh

__all__ = [
    "SingularSystemError",
    "Solution",
    "InfSupReport",
    "solve",
    "solve_min_norm",
    "infsup_constant",
    "coercivity_witness",
    "DENSE_CAP",
]

DENSE_CAP = 20000
RESIDUAL_TOL = 1e-9


class SingularSystemError(RuntimeError):
    """Raised when the direct factorization fails or cannot meet the
    residual contract; carries whatever pivot diagnostics are available."""

    def __init__(self, message, diagnostics=None):
        super().__init__(message)
        self.diagnostics = diagnostics or {}


@dataclass
class Solution:
    """Monolithic coefficient vector plus per-field views and solve metadata."""

    x: np.ndarray
    dofmap: DofMap
    residual: float
    method: str
    fields: dict = field(default=None, repr=False)
    mu: float = 0.0
    kn: float = None
    chi: float = None

    @classmethod
    def from_vector(cls, x, dofmap, residual, method, kn=None, chi=None):
        f = dofmap.split(x)
        mu = f.pop("mu")
        return cls(x=x, dofmap=dofmap, residual=residual, method=method,
                   fields=f, mu=mu, kn=kn, chi=chi)

    def pressure_mean(self):
        """Integral of the discrete pressure (P1) over the domain."""
        mesh = self.dofmap.mesh
        p = self.fields["p"][0][: mesh.n_vertices]
        return float((mesh.areas[:, None] / 3.0 * p[mesh.triangles]).sum())


def _relative_residual(K, x, f):
    nf = np.linalg.norm(f)
    if nf == 0.0:
        return float(np.linalg.norm(K @ x))
    return float(np.linalg.norm(K @ x - f) / nf)


def solve(system: BlockSystem) -> Solution:
    """Direct sparse factorization; raises SingularSystemError when the
    factorization fails or the relative residual exceeds 1e-9."""
    K = system.matrix.tocsc()
    try:
        lu = spl.splu(K)
        x = lu.solve(system.rhs)
    except RuntimeError as exc:
        raise SingularSystemError(
            f"sparse LU factorization failed: {exc}",
            {"dimension": K.shape[0]}) from exc
    if not np.all(np.isfinite(x)):
        raise SingularSystemError(
            "factorization produced non-finite solution (zero pivot)",
            {"dimension": K.shape[0]})
    res = _relative_residual(K, x, system.rhs)
    if res > RESIDUAL_TOL:
        diag = {"dimension": K.shape[0], "residual": res}
        try:
            diag["min_abs_U_diag"] = float(np.abs(lu.U.diagonal()).min())
        except Exception:
            pass
        raise SingularSystemError(
            f"direct solve residual {res:.3e} exceeds {RESIDUAL_TOL:.0e} "
            "(system singular or severely ill-conditioned)", diag)
    return Solution.from_vector(x, system.dofmap, res, "splu",
                                kn=system.kn, chi=system.chi)


def solve_min_norm(system: BlockSystem, dense_cap: int = DENSE_CAP) -> Solution:
    """Minimum-norm least-squares solution, for possibly singular systems.

    Uses a dense rank-revealing solve below `dense_cap` unknowns and the
    LSMR iteration (which converges to the minimum-norm solution from a
    zero start) above it.
    """
    K = system.matrix
    n = K.shape[0]
    if n <= dense_cap:
        x, _, _, _ = np.linalg.lstsq(K.toarray(), system.rhs, rcond=None)
        method = "dense-lstsq"
    else:
        res = spl.lsmr(K, system.rhs, atol=1e-12, btol=1e-12, maxiter=20 * n)
        x = res[0]
        method = "lsmr"
    resid = _relative_residual(K, x, system.rhs)
    return Solution.from_vector(x, system.dofmap, resid, method,
                                kn=system.kn, chi=system.chi)


@dataclass
class InfSupReport:
    pair: str
    preset: str
    h_max: float
    beta: float
    near_null_dim: int
    dimension: int
    singular_values: np.ndarray = field(default=None, repr=False)


def _interior_component_dofs(mesh, space, n_components):
    """Indices (standalone numbering) of dofs without boundary support."""
    bdofs = asm.boundary_scalar_dofs(mesh, space)
    mask = np.ones(space.n_scalar, dtype=bool)
    mask[bdofs] = False
    idx = np.flatnonzero(mask)
    return np.concatenate([c * space.n_scalar + idx for c in range(n_components)])


def infsup_constant(mesh: Mesh, pair: str, preset: str,
                    dense_cap: int = DENSE_CAP) -> InfSupReport:
    """Discrete inf-sup constant of a coupling pair.

    beta is the smallest nonzero singular value of Mw^{-1/2} B Mt^{-1/2}
    with Mt the H1 Gram of the trial field restricted to zero-trace dofs
    and Mw the L2 Gram of the test field. Known structural kernels of the
    test side (rigid motions for u, constants for theta and p) are
    deflated before counting near-null directions.
    """
    dofmap = asm.build_dofmap(mesh, preset)
    trial, test = asm.INFSUP_PAIRS[pair]
    B = asm.coupling_matrix(mesh, dofmap, pair)

    trial_idx = _interior_component_dofs(mesh, dofmap.spaces[trial],
                                         asm.FIELD_COMPONENTS[trial])
    _, Mt_full = asm.field_gram_matrices(mesh, dofmap, trial)
    Mw, _ = asm.field_gram_matrices(mesh, dofmap, test)
    B = B[:, trial_idx]
    Mt = Mt_full[trial_idx][:, trial_idx]

    dim = B.shape[0] + B.shape[1]
    if dim > dense_cap:
        raise ValueError(f"pair dimension {dim} exceeds dense cap {dense_cap}")

    if pair == "sigma_u":
        Z = asm.rigid_motion_coefficients(mesh, dofmap, "u")
    elif pair == "s_theta":
        Z = asm.constant_coefficients(mesh, dofmap, "theta")
    else:
        Z = asm.constant_coefficients(mesh, dofmap, "p")

    try:
        Lw = sla.cholesky(Mw.toarray(), lower=True)
        Lt = sla.cholesky(Mt.toarray(), lower=True)
    except sla.LinAlgError as exc:
        raise RuntimeError("Gram matrix not SPD (assembly bug)") from exc

    C = sla.solve_triangular(Lw, B.toarray(), lower=True)
    C = sla.solve_triangular(Lt, C.T, lower=True).T
    Zt = Lw.T @ Z
    Q, _ = np.linalg.qr(Zt)
    C -= Q @ (Q.T @ C)

    svals = np.linalg.svd(C, compute_uv=False)
    thresh = 1e-10 * svals.max() if svals.size else 0.0
    nonzero = svals[svals >= thresh]
    near_null = int(np.sum(svals < thresh)) - Z.shape[1]
    # the deflation itself contributes min(rows, cols) - rank zeros only if
    # the test space is larger; count relative to the non-deflated rank
    near_null = max(near_null, 0)
    beta = float(nonzero.min()) if nonzero.size else 0.0
    return InfSupReport(pair=pair, preset=preset, h_max=mesh.h_max, beta=beta,
                        near_null_dim=near_null, dimension=dim,
                        singular_values=svals)


def coercivity_witness(mesh: Mesh, preset: str = "enriched", kn: float = 1.0,
                       chi: float = 1.0, n_samples: int = 50, seed: int = 0):
    """Minimum Rayleigh quotient of the A-block over the discrete B-kernel.

    The kernel of the constraint rows (velocity, temperature and zero-mean
    tests) is extracted densely; random unit combinations are tested
    against S^T A S / ||S||_T^2 with the trial norm H1 for sigma and s and
    L2 for p. Returns (min quotient, kernel dimension).
    """
    wall = asm.WallData(theta_w={1: 0.0, 2: 0.0}, u_t_w={1: 0.0, 2: 0.0}, chi=chi)
    system = asm.build_system(mesh, preset, kn, wall)
    dm = system.dofmap
    n1 = dm.offsets["u"]          # trial group (sigma, s, p)
    K = system.matrix
    A = K[:n1, :n1].toarray()
    rows = np.r_[np.arange(dm.offsets["u"], dm.n_total - 1), dm.multiplier_index]
    Bblk = K[rows][:, :n1].toarray()
    Z = sla.null_space(Bblk)
    if Z.shape[1] == 0:
        raise RuntimeError("constraint block has trivial kernel")

    blocks = []
    for name in ("sigma", "s", "p"):
        L2g, H1g = asm.field_gram_matrices(mesh, dm, name)
        blocks.append(L2g if name == "p" else H1g)
    Mt = sp.block_diag(blocks).toarray()

    rng = np.random.default_rng(seed)
    qmin = np.inf
    for _ in range(n_samples):
        c = rng.standard_normal(Z.shape[1])
        S = Z @ c
        qmin = min(qmin, float(S @ A @ S) / float(S @ Mt @ S))
    return qmin, Z.shape[1]
