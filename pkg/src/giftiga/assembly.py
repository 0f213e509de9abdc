"""Galerkin assembly for Poisson and linear elasticity, boundary data, and the linear solve."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
import scipy.linalg
import scipy.sparse as sp
import scipy.sparse.linalg as spla

__all__ = [
    "MaterialPlaneStrain",
    "MaterialIsotropic3D",
    "BoundaryCondition",
    "BoundarySpec",
    "LinearSystem",
    "NotPositiveDefiniteError",
    "assemble_poisson",
    "assemble_elasticity",
    "project_dirichlet",
    "solve",
    "solve_system",
    "write_triplets",
    "parametric_faces",
]

_CHUNK_ENTRIES = 4_000_000


class NotPositiveDefiniteError(np.linalg.LinAlgError):
    """Reduced stiffness matrix is singular or indefinite."""

    def __init__(self, message, dof=None):
        super().__init__(message)
        self.dof = dof


@dataclass(frozen=True)
class MaterialPlaneStrain:
    E: float
    nu: float

    def __post_init__(self):
        if self.E <= 0:
            raise ValueError("Young's modulus must be positive")
        if not -1.0 < self.nu < 0.5:
            raise ValueError("Poisson ratio must lie in (-1, 0.5)")

    @property
    def lame(self):
        lam = self.E * self.nu / ((1 + self.nu) * (1 - 2 * self.nu))
        mu = self.E / (2 * (1 + self.nu))
        return lam, mu

    def D(self):
        c = self.E / ((1 + self.nu) * (1 - 2 * self.nu))
        nu = self.nu
        return c * np.array([[1 - nu, nu, 0], [nu, 1 - nu, 0], [0, 0, (1 - 2 * nu) / 2]])


@dataclass(frozen=True)
class MaterialIsotropic3D(MaterialPlaneStrain):
    def D(self):
        lam, mu = self.lame
        D = np.zeros((6, 6))
        D[:3, :3] = lam
        D[np.arange(3), np.arange(3)] += 2 * mu
        D[np.arange(3, 6), np.arange(3, 6)] = mu
        return D


@dataclass(frozen=True)
class BoundaryCondition:
    """Condition on one parametric face.

    ``kind`` is one of ``dirichlet`` (``value(x)``), ``neumann`` (``value(x, n)``
    returns the flux or traction; ``None`` means zero), ``symmetry``
    (``components`` held at zero) or ``free`` (homogeneous natural condition,
    also used for collapsed faces).
    """

    kind: str
    value: object = None
    components: tuple = ()

    def __post_init__(self):
        if self.kind not in ("dirichlet", "neumann", "symmetry", "free"):
            raise ValueError("unknown boundary condition kind %r" % self.kind)
        if self.kind == "dirichlet" and self.value is None:
            raise ValueError("dirichlet condition needs a value function")
        if self.kind == "symmetry" and not self.components:
            raise ValueError("symmetry condition needs constrained components")


def parametric_faces(pdim):
    return [(d, s) for d in range(pdim) for s in (0, 1)]


@dataclass
class BoundarySpec:
    """Mapping ``(direction, side) -> BoundaryCondition`` covering every face exactly once."""

    faces: dict

    def __post_init__(self):
        self.faces = dict(self.faces)

    def validate(self, pdim):
        expected = set(parametric_faces(pdim))
        got = set(self.faces)
        if got != expected:
            missing = sorted(expected - got)
            extra = sorted(got - expected)
            raise ValueError("boundary spec must cover each face once; missing %s, extra %s" % (missing, extra))

    @classmethod
    def all_dirichlet(cls, value, pdim=2):
        return cls({f: BoundaryCondition("dirichlet", value) for f in parametric_faces(pdim)})

    def __getitem__(self, face):
        return self.faces[face]


@dataclass
class LinearSystem:
    """Assembled system with Dirichlet data.

    ``K`` and ``f`` are the full (unconstrained) operator and load; ``fixed``
    holds equation indices with prescribed ``fixed_values``. Equation
    ``c * ndof + k`` belongs to component ``c`` of basis function ``k``.
    """

    K: sp.csr_matrix
    f: np.ndarray
    ndof: int
    ncomp: int
    fixed: np.ndarray = field(default_factory=lambda: np.zeros(0, dtype=np.int64))
    fixed_values: np.ndarray = field(default_factory=lambda: np.zeros(0))

    @property
    def size(self):
        return self.K.shape[0]

    @property
    def free(self):
        mask = np.ones(self.size, dtype=bool)
        mask[self.fixed] = False
        return np.flatnonzero(mask)

    def dof(self, basis_index, component=0):
        return component * self.ndof + basis_index

    def reduced(self):
        """Symmetrically eliminated system ``(K_ff, f_f - K_fc u_c, free)``."""
        free = self.free
        K = self.K.tocsr()
        Kff = K[free][:, free]
        rhs = self.f[free].copy()
        if self.fixed.size:
            rhs -= K[free][:, self.fixed] @ self.fixed_values
        return Kff.tocsc(), rhs, free


def _chunks(ncells, per_cell):
    step = max(1, _CHUNK_ENTRIES // max(per_cell, 1))
    for a in range(0, ncells, step):
        yield slice(a, min(a + step, ncells))


def _cell_table(disc, vq, sl, nderiv=1):
    """Solution basis on the quadrature points of integration cells `sl`."""
    xi = vq.xi[sl]
    M, nq, d = xi.shape
    t = disc.space.tabulate(xi.reshape(-1, d), nderiv)
    nloc = t.idx.shape[1]
    idx = t.idx.reshape(M, nq, nloc)[:, 0, :]
    val = t.val.reshape(M, nq, nloc)
    grad = None
    if nderiv >= 1:
        start = sl.start * nq
        invJ = vq.jac.invJ[start : start + M * nq]
        grad = np.einsum("nji,naj->nai", invJ, t.grad).reshape(M, nq, nloc, d)
    return idx, val, grad


def _accumulate(rows, cols, vals, r, c, v):
    rows.append(r.ravel())
    cols.append(c.ravel())
    vals.append(v.ravel())


def _coo(rows, cols, vals, n):
    if not rows:
        return sp.csr_matrix((n, n))
    K = sp.coo_matrix((np.concatenate(vals), (np.concatenate(rows), np.concatenate(cols))), shape=(n, n))
    return K.tocsr()


def _eval_scalar(func, x):
    v = np.asarray(func(x), dtype=float)
    return np.broadcast_to(v, x.shape[:1]).copy() if v.ndim == 0 else v.reshape(x.shape[0])


def _eval_vector(func, x, ncomp, *args):
    v = np.asarray(func(x, *args), dtype=float)
    if ncomp == 1 and v.ndim == 1:
        v = v[:, None]
    return np.broadcast_to(v, (x.shape[0], ncomp))


def assemble_poisson(disc, source, boundary):
    """Stiffness ``int grad M_i . grad M_j`` and load with source and Neumann flux.

    `source` maps physical points ``(N, d)`` to values; Neumann values are
    called as ``g(x, n)`` and give the outward flux ``du/dn``.
    """
    boundary.validate(disc.pdim)
    n = disc.ndof
    vq = disc.volume_quadrature()
    M, nq, _ = vq.xi.shape
    rows, cols, vals = [], [], []
    f = np.zeros(n)
    fx = None if source is None else _eval_scalar(source, vq.x.reshape(M * nq, -1)).reshape(M, nq)
    nloc_guess = int(np.prod(np.array(disc.space.degrees) + 1))
    for sl in _chunks(M, nq * nloc_guess * nloc_guess):
        idx, val, grad = _cell_table(disc, vq, sl)
        W = vq.weight[sl]
        m, _, nl, d = grad.shape
        Gw = (grad * W[:, :, None, None]).transpose(0, 2, 1, 3).reshape(m, nl, nq * d)
        Ke = np.matmul(Gw, grad.transpose(0, 1, 3, 2).reshape(m, nq * d, nl))
        _accumulate(rows, cols, vals, np.repeat(idx, nl, axis=1), np.tile(idx, (1, nl)), Ke)
        if fx is not None:
            np.add.at(f, idx, np.einsum("mqa,mq->ma", val, fx[sl] * W))
    K = _coo(rows, cols, vals, n)
    for face, bc in boundary.faces.items():
        if bc.kind == "neumann" and bc.value is not None:
            _neumann_load(disc, face, bc.value, f, 1)
    fixed, fvals = project_dirichlet(disc, boundary, 1)
    return LinearSystem(K, f, n, 1, fixed, fvals)


def _neumann_load(disc, face, func, f, ncomp):
    bq = disc.boundary_quadrature(*face)
    F, nq, d = bq.xi.shape
    if F == 0:
        return
    t = disc.space.tabulate(bq.xi.reshape(-1, d), 0)
    nloc = t.idx.shape[1]
    x = bq.x.reshape(F * nq, -1)
    nrm = bq.normal.reshape(F * nq, -1)
    g = _eval_vector(func, x, ncomp, nrm).reshape(F, nq, ncomp)
    val = t.val.reshape(F, nq, nloc)
    idx = t.idx.reshape(F, nq, nloc)[:, 0, :]
    contrib = np.einsum("fqa,fqc,fq->cfa", val, g, bq.weight)
    n = disc.ndof
    for c in range(ncomp):
        np.add.at(f, c * n + idx, contrib[c])


def _voigt_B(grad):
    """Strain-displacement blocks ``(..., nloc, nv, d)`` from physical gradients."""
    d = grad.shape[-1]
    shape = grad.shape[:-1]
    if d == 2:
        B = np.zeros(shape + (3, 2))
        B[..., 0, 0] = grad[..., 0]
        B[..., 1, 1] = grad[..., 1]
        B[..., 2, 0] = grad[..., 1]
        B[..., 2, 1] = grad[..., 0]
        return B
    B = np.zeros(shape + (6, 3))
    for i in range(3):
        B[..., i, i] = grad[..., i]
    for v, (i, j) in zip((3, 4, 5), ((1, 2), (0, 2), (0, 1))):
        B[..., v, i] = grad[..., j]
        B[..., v, j] = grad[..., i]
    return B


def _voigt_index(d):
    if d == 2:
        return {(0, 0): 0, (1, 1): 1, (0, 1): 2, (1, 0): 2}
    pairs = {(0, 0): 0, (1, 1): 1, (2, 2): 2, (1, 2): 3, (0, 2): 4, (0, 1): 5}
    pairs.update({(j, i): v for (i, j), v in list(pairs.items())})
    return pairs


def voigt_to_tensor(D, d):
    """Fourth-order elasticity tensor ``C[i, k, j, l]`` from a Voigt matrix (engineering shear strains)."""
    V = _voigt_index(d)
    C = np.zeros((d, d, d, d))
    for i in range(d):
        for k in range(d):
            for j in range(d):
                for l in range(d):
                    C[i, k, j, l] = D[V[i, k], V[j, l]]
    return C


def assemble_elasticity(disc, material, body_force, boundary):
    """Stiffness ``int B_i^T D B_j`` with traction and body loads.

    Plane strain in 2D and isotropic Hooke in 3D. Tractions are called as
    ``t(x, n)`` and return ``(N, d)``; symmetry faces fix single components.
    """
    boundary.validate(disc.pdim)
    d = disc.pdim
    n = disc.ndof
    C4 = voigt_to_tensor(material.D(), d)
    vq = disc.volume_quadrature()
    M, nq, _ = vq.xi.shape
    rows, cols, vals = [], [], []
    f = np.zeros(d * n)
    bf = None
    if body_force is not None:
        bf = _eval_vector(lambda x: body_force(x), vq.x.reshape(M * nq, -1), d).reshape(M, nq, d)
    nloc_guess = int(np.prod(np.array(disc.space.degrees) + 1))
    for sl in _chunks(M, nq * (d * nloc_guess) ** 2 * 3):
        idx, val, grad = _cell_table(disc, vq, sl)
        W = vq.weight[sl]
        # A[m, a, k, b, l] = int dM_a/dx_k dM_b/dx_l, then K = C : A
        m, _, nl, _ = grad.shape
        Gw = (grad * W[:, :, None, None]).reshape(m, nq, nl * d)
        A = np.matmul(Gw.transpose(0, 2, 1), grad.reshape(m, nq, nl * d)).reshape(m, nl, d, nl, d)
        Ke = np.einsum("ikjl,makbl->maibj", C4, A)
        eq = (np.arange(d)[None, None, :] * n + idx[:, :, None]).reshape(m, nl * d)  # (m, a*d+i)
        Ke = Ke.reshape(m, nl * d, nl * d)
        L = nl * d
        _accumulate(rows, cols, vals, np.repeat(eq, L, axis=1), np.tile(eq, (1, L)), Ke)
        if bf is not None:
            fe = np.einsum("mqa,mqi,mq->mai", val, bf[sl], W).reshape(m, L)
            np.add.at(f, eq, fe)
    K = _coo(rows, cols, vals, d * n)
    for face, bc in boundary.faces.items():
        if bc.kind == "neumann" and bc.value is not None:
            _neumann_load(disc, face, bc.value, f, d)
    fixed, fvals = project_dirichlet(disc, boundary, d)
    return LinearSystem(K, f, n, d, fixed, fvals)


def project_dirichlet(disc, boundary, ncomp=1, rel_tol=1e-12):
    """Boundary L2 projection of Dirichlet and symmetry data.

    For each component the faces constraining it are gathered, the boundary
    mass matrix over them is assembled with the physical surface measure, and
    the coefficients of every function with a nonzero trace are solved for.
    Returns ``(fixed_equations, values)``.
    """
    n = disc.ndof
    fixed_all, vals_all = [], []
    for c in range(ncomp):
        faces = []
        for face, bc in boundary.faces.items():
            if bc.kind == "dirichlet":
                faces.append((face, bc.value))
            elif bc.kind == "symmetry" and c in bc.components:
                faces.append((face, None))
        if not faces:
            continue
        rows, cols, mv = [], [], []
        b = np.zeros(n)
        for face, func in faces:
            bq = disc.boundary_quadrature(*face)
            F, nq, d = bq.xi.shape
            if F == 0:
                continue
            t = disc.space.tabulate(bq.xi.reshape(-1, d), 0)
            nl = t.idx.shape[1]
            val = t.val.reshape(F, nq, nl)
            idx = t.idx.reshape(F, nq, nl)[:, 0, :]
            Me = np.einsum("fqa,fqb,fq->fab", val, val, bq.weight)
            _accumulate(rows, cols, mv, np.repeat(idx, nl, axis=1), np.tile(idx, (1, nl)), Me)
            if func is not None:
                g = _eval_vector(lambda x: func(x), bq.x.reshape(F * nq, -1), ncomp)[:, c].reshape(F, nq)
                np.add.at(b, idx, np.einsum("fqa,fq->fa", val, g * bq.weight))
        Mb = _coo(rows, cols, mv, n)
        diag = Mb.diagonal()
        if not np.any(diag > 0):
            continue
        S = np.flatnonzero(diag > rel_tol * diag.max())
        Mss = Mb[S][:, S].toarray()
        try:
            cf = scipy.linalg.cho_factor(Mss)
        except np.linalg.LinAlgError as exc:
            raise np.linalg.LinAlgError("singular boundary mass matrix for component %d" % c) from exc
        u = scipy.linalg.cho_solve(cf, b[S])
        fixed_all.append(c * n + S)
        vals_all.append(u)
    if not fixed_all:
        return np.zeros(0, dtype=np.int64), np.zeros(0)
    return np.concatenate(fixed_all).astype(np.int64), np.concatenate(vals_all)


def solve_system(A, b, dof_labels=None, rtol=1e-10):
    """Solve an SPD sparse system by a symmetric-mode sparse LU.

    Raises :class:`NotPositiveDefiniteError` naming the offending equation
    when a pivot is nonpositive, and ``RuntimeError`` when the relative
    residual exceeds `rtol`.
    """
    A = sp.csc_matrix(A)
    b = np.asarray(b, dtype=float)
    n = A.shape[0]
    if n == 0:
        return np.zeros(0)
    label = (lambda i: int(dof_labels[i])) if dof_labels is not None else (lambda i: int(i))
    u = None
    try:
        lu = spla.splu(
            A, permc_spec="MMD_AT_PLUS_A", diag_pivot_thresh=0.0, options=dict(SymmetricMode=True)
        )
        if np.array_equal(lu.perm_r, lu.perm_c):
            piv = lu.U.diagonal()
            bad = np.flatnonzero(~(piv > 0))
            if bad.size:
                k = bad[0]
                j = int(np.flatnonzero(lu.perm_c == k)[0])
                raise NotPositiveDefiniteError(
                    "matrix not positive definite: pivot %.3e at equation %d" % (piv[k], label(j)), label(j)
                )
            u = lu.solve(b)
    except RuntimeError as exc:  # exactly singular factor
        if "singular" not in str(exc).lower():
            raise
    if u is None:
        Ad = A.toarray()
        c, info = scipy.linalg.lapack.dpotrf(Ad, lower=0)
        if info > 0:
            raise NotPositiveDefiniteError(
                "matrix not positive definite: Cholesky fails at equation %d" % label(info - 1), label(info - 1)
            )
        u = scipy.linalg.cho_solve((c, False), b)
    nb = np.linalg.norm(b)
    res = np.linalg.norm(A @ u - b)
    if nb > 0 and res / nb > rtol:
        raise RuntimeError("linear solve residual %.3e exceeds %.1e" % (res / nb, rtol))
    return u


def solve(system):
    """Full coefficient vector of a :class:`LinearSystem` after Dirichlet elimination."""
    Kff, rhs, free = system.reduced()
    u = np.zeros(system.size)
    u[system.fixed] = system.fixed_values
    u[free] = solve_system(Kff, rhs, dof_labels=free)
    return u


def write_triplets(K, path):
    """Dump a sparse matrix as ``row col value`` lines (0-based)."""
    C = sp.coo_matrix(K)
    with open(path, "w") as fh:
        fh.write("# %d %d %d\n" % (C.shape[0], C.shape[1], C.nnz))
        for r, c, v in zip(C.row, C.col, C.data):
            fh.write("%d %d %.17g\n" % (r, c, v))
