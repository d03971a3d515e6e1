"""Small-tensor algebra used throughout the solver.

Symmetric / trace-free projections in 2D and 3D, the 2D-to-3D trace-free
embedding, the symmetric trace-free projection of third-order tensors,
kernel bases of the symmetric-gradient operators (rigid motions in 2D,
conformal Killing fields in 3D), explicit polynomial right inverses of the
divergence for those kernels, and a numeric ellipticity check of the
symbol v -> stf(v (x) xi).

Everything here is exact small linear algebra; no mesh or quadrature is
involved.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

__all__ = [
    "sym_project",
    "stf_project",
    "embed_2d",
    "stf3_project",
    "KernelField",
    "kernel_basis",
    "PolyTensorField",
    "divergence_right_inverse",
    "symbol_matrix",
    "symbol_injectivity_check",
    "SymbolReport",
]


def sym_project(M):
    """Symmetric part (M + M^T) / 2 of a square matrix."""
    M = np.asarray(M, dtype=float)
    return 0.5 * (M + M.T)


def stf_project(M, d=None):
    """Symmetric trace-free part: sym M - (tr M / d) I."""
    M = np.asarray(M, dtype=float)
    if d is None:
        d = M.shape[0]
    S = sym_project(M)
    return S - (np.trace(M) / d) * np.eye(d)


def embed_2d(sigma):
    """Embed a symmetric 2x2 tensor as a trace-free symmetric 3x3 tensor.

    The (3,3) entry is set to -(s11 + s22) so the result has zero trace;
    the out-of-plane off-diagonal entries are zero.
    """
    s = np.asarray(sigma, dtype=float)
    out = np.zeros((3, 3))
    out[:2, :2] = s
    out[2, 2] = -(s[0, 0] + s[1, 1])
    return out


def stf3_project(m):
    """Symmetric trace-free projection of a third-order tensor (3x3x3).

    Averages over all six index permutations, then removes the traces so
    the result is fully symmetric and trace-free in every index pair. The
    projection is idempotent and orthogonal for the Frobenius pairing.
    """
    m = np.asarray(m, dtype=float)
    if m.shape != (3, 3, 3):
        raise ValueError("stf3_project expects a 3x3x3 tensor")
    ms = (m
          + m.transpose(1, 2, 0) + m.transpose(2, 0, 1)
          + m.transpose(1, 0, 2) + m.transpose(0, 2, 1)
          + m.transpose(2, 1, 0)) / 6.0
    t = np.einsum("ill->i", ms)
    eye = np.eye(3)
    out = ms - (np.einsum("i,jk->ijk", t, eye)
                + np.einsum("j,ik->ijk", t, eye)
                + np.einsum("k,ij->ijk", t, eye)) / 5.0
    return out


@dataclass(frozen=True)
class KernelField:
    """A polynomial vector field in the kernel of sym-grad (2D) or stf-grad (3D).

    tag is one of 'translation', 'rotation', 'scaling', 'special_conformal'.
    The parameter payload depends on the tag: a vector ``a`` for translations,
    a skew matrix ``A`` for rotations, a scalar ``lam`` for scaling and a
    vector ``b`` for special conformal maps.
    """

    dim: int
    tag: str
    a: np.ndarray | None = None
    A: np.ndarray | None = None
    lam: float = 0.0
    b: np.ndarray | None = None

    def __call__(self, x):
        x = np.atleast_2d(np.asarray(x, dtype=float))
        if self.tag == "translation":
            return np.broadcast_to(self.a, x.shape).copy()
        if self.tag == "rotation":
            return x @ np.asarray(self.A).T
        if self.tag == "scaling":
            return self.lam * x
        if self.tag == "special_conformal":
            bx = x @ self.b
            return 2.0 * bx[:, None] * x - (x * x).sum(axis=1)[:, None] * self.b
        raise ValueError(f"unknown kernel tag {self.tag!r}")


def kernel_basis(d):
    """Basis of the kernel of the symmetric-gradient operator.

    d=2: rigid motions (two translations + one rotation, dim 3).
    d=3: conformal Killing fields (3 translations, 3 rotations, 1 scaling,
    3 special conformal maps, dim 10).
    """
    if d == 2:
        rot = np.array([[0.0, 1.0], [-1.0, 0.0]])
        return [
            KernelField(2, "translation", a=np.array([1.0, 0.0])),
            KernelField(2, "translation", a=np.array([0.0, 1.0])),
            KernelField(2, "rotation", A=rot),
        ]
    if d == 3:
        fields = [KernelField(3, "translation", a=np.eye(3)[i]) for i in range(3)]
        for (i, j) in [(0, 1), (0, 2), (1, 2)]:
            A = np.zeros((3, 3))
            A[i, j], A[j, i] = 1.0, -1.0
            fields.append(KernelField(3, "rotation", A=A))
        fields.append(KernelField(3, "scaling", lam=1.0))
        fields += [KernelField(3, "special_conformal", b=np.eye(3)[i]) for i in range(3)]
        return fields
    raise ValueError("d must be 2 or 3")


@dataclass
class PolyTensorField:
    """Matrix-valued polynomial sum_alpha x^alpha C_alpha with exact divergence.

    coeffs maps a multi-index (exponents per coordinate) to a dim x dim
    coefficient matrix. Differentiation acts on the monomial exponents, so
    the divergence is exact (no numerics involved).
    """

    dim: int
    coeffs: dict = field(default_factory=dict)

    def add(self, alpha, C):
        alpha = tuple(int(k) for k in alpha)
        C = np.asarray(C, dtype=float)
        if alpha in self.coeffs:
            self.coeffs[alpha] = self.coeffs[alpha] + C
        else:
            self.coeffs[alpha] = C

    def __call__(self, x):
        x = np.atleast_2d(np.asarray(x, dtype=float))
        out = np.zeros((x.shape[0], self.dim, self.dim))
        for alpha, C in self.coeffs.items():
            mono = np.ones(x.shape[0])
            for k, p in enumerate(alpha):
                if p:
                    mono = mono * x[:, k] ** p
            out += mono[:, None, None] * C
        return out

    def divergence(self, x):
        """Row divergence (sum_k d_k sigma_ik) by exact monomial differentiation."""
        x = np.atleast_2d(np.asarray(x, dtype=float))
        out = np.zeros((x.shape[0], self.dim))
        for alpha, C in self.coeffs.items():
            for k in range(self.dim):
                if alpha[k] == 0:
                    continue
                beta = list(alpha)
                beta[k] -= 1
                mono = np.full(x.shape[0], float(alpha[k]))
                for kk, p in enumerate(beta):
                    if p:
                        mono = mono * x[:, kk] ** p
                out += mono[:, None] * C[:, k]
        return out

    def is_symmetric(self, tol=1e-14):
        return all(np.abs(C - C.T).max() <= tol for C in self.coeffs.values())

    def trace_coeffs(self):
        return {alpha: float(np.trace(C)) for alpha, C in self.coeffs.items()}


def _unit(k, n):
    e = [0] * n
    e[k] = 1
    return tuple(e)


def divergence_right_inverse(v: KernelField) -> PolyTensorField:
    """Polynomial symmetric tensor field with divergence equal to v.

    Implements the explicit constructions for 2D rigid motions and for the
    four 3D kernel types (translation, rotation, scaling, special
    conformal); the 3D tensors are additionally trace-free. Raises for
    fields outside these kernels.
    """
    sig = PolyTensorField(v.dim)
    if v.dim == 2:
        # v = (a x2 + b1, -a x1 + b2); sigma = diag(a x1 x2 + b1 x1, -a x1 x2 + b2 x2)
        if v.tag == "translation":
            a = 0.0
            b1, b2 = v.a
        elif v.tag == "rotation":
            A = np.asarray(v.A)
            if np.abs(A + A.T).max() > 1e-14:
                raise ValueError("rotation parameter must be skew-symmetric")
            a = A[0, 1]
            b1 = b2 = 0.0
        else:
            raise ValueError(f"{v.tag!r} is not a 2D rigid motion")
        sig.add((1, 1), np.diag([a, -a]))
        sig.add((1, 0), np.diag([b1, 0.0]))
        sig.add((0, 1), np.diag([0.0, b2]))
        return sig

    if v.dim != 3:
        raise ValueError("kernel fields must be 2D or 3D")
    eye = np.eye(3)
    if v.tag == "translation":
        a = np.asarray(v.a, dtype=float)
        for k in range(3):
            C = 3.0 * (np.outer(a, eye[k]) + np.outer(eye[k], a)) - 2.0 * a[k] * eye
            sig.add(_unit(k, 3), C / 10.0)
        return sig
    if v.tag == "rotation":
        A = np.asarray(v.A, dtype=float)
        if np.abs(A + A.T).max() > 1e-14:
            raise ValueError("rotation parameter must be skew-symmetric")
        # ((A x) (x) x + x (x) (A x)) / 5, expanded per monomial x_l x_k
        for l in range(3):
            for k in range(3):
                C = np.outer(A[:, l], eye[k]) + np.outer(eye[k], A[:, l])
                alpha = [0, 0, 0]
                alpha[l] += 1
                alpha[k] += 1
                sig.add(tuple(alpha), C / 5.0)
        return sig
    if v.tag == "scaling":
        lam = float(v.lam)
        for i in range(3):
            for k in range(3):
                alpha = [0, 0, 0]
                alpha[i] += 1
                alpha[k] += 1
                C = 0.3 * lam * (np.outer(eye[i], eye[k]) - (eye[i, k] / 3.0) * eye)
                sig.add(tuple(alpha), C)
        return sig
    if v.tag == "special_conformal":
        b = np.asarray(v.b, dtype=float)
        # (34 (b.x) x(x)x - 11 |x|^2 (b(x)x + x(x)b) - 4 |x|^2 (b.x) I) / 70
        for l in range(3):
            for i in range(3):
                for k in range(3):
                    alpha = [0, 0, 0]
                    alpha[l] += 1
                    alpha[i] += 1
                    alpha[k] += 1
                    C = 34.0 * b[l] * np.outer(eye[i], eye[k])
                    if i == k:
                        C = C - 11.0 * (np.outer(b, eye[l]) + np.outer(eye[l], b))
                        C = C - 4.0 * b[l] * eye
                    sig.add(tuple(alpha), C / 70.0)
        return sig
    raise ValueError(f"unknown kernel tag {v.tag!r}")


def symbol_matrix(xi):
    """Complex matrix of the symbol map v -> stf(v (x) xi), flattened row-major.

    Output rows are the d*d entries of the symmetric trace-free matrix, so
    matrix 2-norms agree with Frobenius norms of the tensor values.
    """
    xi = np.asarray(xi, dtype=complex)
    d = xi.shape[0]
    cols = []
    for i in range(d):
        M = np.zeros((d, d), dtype=complex)
        M[i, :] = xi
        S = 0.5 * (M + M.T) - (np.trace(M) / d) * np.eye(d)
        cols.append(S.ravel())
    return np.array(cols).T


def _realify(M):
    return np.block([[M.real, -M.imag], [M.imag, M.real]])


@dataclass
class SymbolReport:
    dim: int
    min_singular_values: np.ndarray
    counterexample_found: bool


def symbol_injectivity_check(d, trials=100, seed=0, tol=1e-12):
    """Sample random complex directions and report min singular values of the symbol.

    For d >= 3 every direction gives a strictly positive minimum singular
    value (the operator is elliptic over the complex field); for d = 2 the
    direction (i, -1) is singular with null direction proportional to (i, 1).
    Works on the realified representation so only real SVDs are needed.
    """
    if d not in (2, 3):
        raise ValueError("d must be 2 or 3")
    if trials < 1:
        raise ValueError("trials must be >= 1")
    rng = np.random.default_rng(seed)
    mins = np.empty(trials)
    for t in range(trials):
        xi = rng.standard_normal(d) + 1j * rng.standard_normal(d)
        xi = xi / np.linalg.norm(xi)
        mins[t] = np.linalg.svd(_realify(symbol_matrix(xi)), compute_uv=False).min()
    found = bool(mins.min() < tol)
    if d == 2:
        # deterministic known singular pair, included regardless of sampling
        known = np.linalg.svd(_realify(symbol_matrix([1j, -1.0])), compute_uv=False).min()
        found = found or known < tol
    return SymbolReport(dim=d, min_singular_values=mins, counterexample_found=found)
