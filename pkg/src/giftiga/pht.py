"""Cubic C1 PHT-splines over hierarchical T-meshes.

Cells live in an index space where the initial grid has integer corners and
a level-``l`` cell has side ``2**-l``; all corner coordinates are dyadic, so
floating point comparisons in index space are exact. Parameters are obtained
from index coordinates by piecewise-linear interpolation over the initial
breakpoints (affine on every cell).

A function of the space is fixed by its Hermite data ``(f, f_xi, f_eta,
f_xi_eta)`` at the basis vertices (boundary and crossing vertices). Data at a
T-vertex follows from cubic Hermite interpolation along the coarse edge that
contains it. Each basis vertex carries four functions whose data at the
vertex equals that of the four local tensor B-splines with double knots;
their data at every other basis vertex is zero. Old functions therefore lose
their data at newly created basis vertices on refinement, which is the
reset-to-zero rule expressed in Hermite form.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .spline import BasisTable

__all__ = [
    "HierarchicalTMesh",
    "PhtSpace",
    "build_initial_pht",
    "refine_cell",
    "eval_pht",
    "format_tmesh",
    "write_tmesh",
    "AffineReparam",
    "reparameterize_domain",
    "BOUNDARY",
    "CROSSING",
    "T_VERTEX",
]

BOUNDARY = "boundary"
CROSSING = "crossing"
T_VERTEX = "T"

_SHIFT = 21  # bits per index in the packed leaf code


def _code(level, i, j):
    return (np.asarray(level, np.int64) << (2 * _SHIFT)) | (np.asarray(i, np.int64) << _SHIFT) | np.asarray(j, np.int64)


class HierarchicalTMesh:
    """Leaves of a quadtree refinement of a tensor grid.

    Leaves are keyed ``(level, i, j)``: the cell ``[i, i+1] x [j, j+1]``
    scaled by ``2**-level`` in index space.
    """

    def __init__(self, xbreaks, ybreaks, leaves=None):
        self.xbreaks = np.asarray(xbreaks, dtype=float)
        self.ybreaks = np.asarray(ybreaks, dtype=float)
        for b in (self.xbreaks, self.ybreaks):
            if b.ndim != 1 or b.size < 2:
                raise ValueError("need at least two breakpoints per direction")
            if np.any(np.diff(b) <= 0):
                raise ValueError("breakpoints must be strictly increasing (no empty spans)")
        self.nx = self.xbreaks.size - 1
        self.ny = self.ybreaks.size - 1
        if leaves is None:
            leaves = {(0, i, j) for i in range(self.nx) for j in range(self.ny)}
        self.leaves = frozenset(leaves)
        self._vertices = None

    # geometry of index space -------------------------------------------
    def to_param(self, ix, iy):
        return (
            np.interp(ix, np.arange(self.nx + 1), self.xbreaks),
            np.interp(iy, np.arange(self.ny + 1), self.ybreaks),
        )

    def to_index(self, px, py):
        return (
            np.interp(px, self.xbreaks, np.arange(self.nx + 1, dtype=float)),
            np.interp(py, self.ybreaks, np.arange(self.ny + 1, dtype=float)),
        )

    @staticmethod
    def box(key):
        """Index-space box ``(x0, x1, y0, y1)`` of a leaf key."""
        lev, i, j = key
        s = 2.0**-lev
        return (i * s, (i + 1) * s, j * s, (j + 1) * s)

    def param_box(self, key):
        x0, x1, y0, y1 = self.box(key)
        (a, b), (c, d) = self.to_param(np.array([x0, x1]), np.array([y0, y1]))
        return (a, b, c, d)

    @property
    def max_level(self):
        return max(k[0] for k in self.leaves)

    def sorted_leaves(self):
        return sorted(self.leaves)

    # refinement ----------------------------------------------------------
    def refine(self, keys):
        keys = set(keys)
        missing = keys - self.leaves
        if missing:
            raise ValueError("not a leaf: %r" % (sorted(missing)[0],))
        leaves = set(self.leaves) - keys
        for lev, i, j in keys:
            for di in (0, 1):
                for dj in (0, 1):
                    leaves.add((lev + 1, 2 * i + di, 2 * j + dj))
        return HierarchicalTMesh(self.xbreaks, self.ybreaks, leaves)

    # point location ------------------------------------------------------
    def locate(self, ix, iy):
        """Leaf keys (as an index into :meth:`sorted_leaves`) containing index points.

        Points on shared edges go to the cell on the upper side, except at the
        upper domain boundary.
        """
        ix = np.asarray(ix, float)
        iy = np.asarray(iy, float)
        order = self.sorted_leaves()
        arr = np.array(order, dtype=np.int64)
        codes = _code(arr[:, 0], arr[:, 1], arr[:, 2])
        perm = np.argsort(codes)
        scodes = codes[perm]
        out = np.full(ix.shape, -1, dtype=np.int64)
        todo = np.ones(ix.shape, bool)
        for lev in range(self.max_level + 1):
            if not todo.any():
                break
            n = 2**lev
            i = np.clip(np.floor(ix[todo] * n).astype(np.int64), 0, self.nx * n - 1)
            j = np.clip(np.floor(iy[todo] * n).astype(np.int64), 0, self.ny * n - 1)
            c = _code(lev, i, j)
            pos = np.clip(np.searchsorted(scodes, c), 0, scodes.size - 1)
            hit = scodes[pos] == c
            sub = np.flatnonzero(todo)
            out[sub[hit]] = perm[pos[hit]]
            todo[sub[hit]] = False
        if todo.any():
            raise RuntimeError("point location failed; T-mesh is inconsistent")
        return out

    def _leaf_at(self, x, y):
        """Leaf key containing the open neighbourhood of an index point, or None outside."""
        if not (0 <= x < self.nx and 0 <= y < self.ny):
            return None
        lev = 0
        while True:
            n = 2**lev
            key = (lev, int(math.floor(x * n)), int(math.floor(y * n)))
            if key in self.leaves:
                return key
            lev += 1
            if lev > self.max_level:
                raise RuntimeError("point location failed; T-mesh is inconsistent")

    # vertices --------------------------------------------------------------
    def vertices(self):
        """Dict ``(x, y) -> class`` over all leaf corners in index space."""
        if self._vertices is not None:
            return self._vertices
        pts = set()
        for key in self.leaves:
            x0, x1, y0, y1 = self.box(key)
            pts.update({(x0, y0), (x1, y0), (x0, y1), (x1, y1)})
        eps = 2.0 ** -(self.max_level + 2)
        out = {}
        for v in pts:
            x, y = v
            if x == 0 or y == 0 or x == self.nx or y == self.ny:
                out[v] = BOUNDARY
                continue
            cls = CROSSING
            for sx in (-eps, eps):
                for sy in (-eps, eps):
                    key = self._leaf_at(x + sx, y + sy)
                    x0, x1, y0, y1 = self.box(key)
                    if x not in (x0, x1) or y not in (y0, y1):
                        cls = T_VERTEX
            out[v] = cls
        self._vertices = out
        return out

    def count(self, cls):
        return sum(1 for c in self.vertices().values() if c == cls)

    def host_edge(self, v):
        """Leaf and edge endpoints for a T-vertex: ``(key, end0, end1, axis)``.

        ``axis`` is 0 for an edge along xi, 1 for an edge along eta.
        """
        x, y = v
        eps = 2.0 ** -(self.max_level + 2)
        for sx in (-eps, eps):
            for sy in (-eps, eps):
                key = self._leaf_at(x + sx, y + sy)
                x0, x1, y0, y1 = self.box(key)
                if y in (y0, y1) and x0 < x < x1:
                    return key, (x0, y), (x1, y), 0
                if x in (x0, x1) and y0 < y < y1:
                    return key, (x, y0), (x, y1), 1
        raise ValueError("%r is not a T-vertex" % (v,))


def _vertex_level(v):
    lev = 0
    x, y = v
    while not (float(x * 2**lev).is_integer() and float(y * 2**lev).is_integer()):
        lev += 1
    return lev


def _hermite_1d(t, a, b):
    """Cubic Hermite weights and their derivatives at ``t`` on ``[a, b]``.

    Returns rows ``(H00, H10, H01, H11)`` for value and derivative, acting on
    ``(f(a), f'(a), f(b), f'(b))``.
    """
    L = b - a
    s = (t - a) / L
    val = np.array([1 - 3 * s**2 + 2 * s**3, L * (s - 2 * s**2 + s**3), 3 * s**2 - 2 * s**3, L * (s**3 - s**2)])
    der = np.array([(-6 * s + 6 * s**2) / L, 1 - 4 * s + 3 * s**2, (6 * s - 6 * s**2) / L, 3 * s**2 - 2 * s])
    return val, der


def _type_data(a, b, c):
    """Value and slope at ``b`` of the cubic B-splines on ``[a,a,b,b,c]`` and ``[a,b,b,c,c]``."""
    h = c - a
    return np.array([[(c - b) / h, -3.0 / h], [(b - a) / h, 3.0 / h]])


def _hermite_to_bezier(hx, hy):
    """16x16 map from corner data (corner-major, ``(f, fx, fy, fxy)``) to Bezier ordinates.

    Corners are ordered ``(x0,y0), (x1,y0), (x0,y1), (x1,y1)``; ordinates are
    indexed ``4*i + j`` with ``i`` along xi.
    """
    H = np.zeros((16, 16))
    for c, (cx, cy) in enumerate(((0, 0), (1, 0), (0, 1), (1, 1))):
        sx = 1.0 if cx == 0 else -1.0
        sy = 1.0 if cy == 0 else -1.0
        ic, jc = (0, 1) if cx == 0 else (3, 2), (0, 1) if cy == 0 else (3, 2)
        for di in (0, 1):
            for dj in (0, 1):
                row = 4 * ic[di] + jc[dj]
                col = 4 * c
                H[row, col] = 1.0
                if di:
                    H[row, col + 1] = sx * hx / 3
                if dj:
                    H[row, col + 2] = sy * hy / 3
                if di and dj:
                    H[row, col + 3] = sx * sy * hx * hy / 9
    return H


def _bernstein(t, nderiv):
    """Cubic Bernstein values and derivatives on ``[0, 1]``: list of ``(N, 4)``."""
    t = np.asarray(t, float)[:, None]
    u = 1 - t
    out = [np.hstack([u**3, 3 * t * u**2, 3 * t**2 * u, t**3])]
    if nderiv >= 1:
        out.append(np.hstack([-3 * u**2, 3 * u**2 - 6 * t * u, 6 * t * u - 3 * t**2, 3 * t**2]))
    if nderiv >= 2:
        out.append(np.hstack([6 * u, -12 * u + 6 * t, 6 * u - 12 * t, 6 * t]))
    return out


class PhtSpace:
    """Cubic C1 PHT-spline space on a hierarchical T-mesh.

    Degrees are fixed to (3, 3) and smoothness to (1, 1). Degrees of freedom
    are numbered ``4 * k + q`` where ``k`` indexes :attr:`basis_vertices` and
    ``q`` the four local functions (types AA, BA, BB, AB in xi x eta).
    """

    kind = "pht"
    pdim = 2
    degrees = (3, 3)
    rational = False

    def __init__(self, mesh, name="PHT", vertex_order=None):
        self.mesh = mesh
        self.name = name
        classes = mesh.vertices()
        basis = [v for v, c in classes.items() if c != T_VERTEX]
        if vertex_order is not None:
            rank = {v: k for k, v in enumerate(vertex_order)}
            basis.sort(key=lambda v: (rank.get(v, len(rank)), v))
        else:
            basis.sort()
        self.basis_vertices = basis
        self._vindex = {v: k for k, v in enumerate(basis)}
        self._transfer_cache = {}
        self._build_vertex_blocks()
        self._build_leaf_blocks()

    # construction ------------------------------------------------------
    def _build_vertex_blocks(self):
        """Per basis vertex: 4x4 map from the four coefficients to Hermite data."""
        m = self.mesh
        blocks = np.empty((len(self.basis_vertices), 4, 4))
        for k, v in enumerate(self.basis_vertices):
            s = 2.0 ** -_vertex_level(v)
            x, y = v
            (xa, xb, xc), (ya, yb, yc) = m.to_param(
                np.array([max(x - s, 0.0), x, min(x + s, m.nx)]),
                np.array([max(y - s, 0.0), y, min(y + s, m.ny)]),
            )
            gx = _type_data(xa, xb, xc)  # rows: type A, B; cols: value, slope
            gy = _type_data(ya, yb, yc)
            for q, (tx, ty) in enumerate(((0, 0), (1, 0), (1, 1), (0, 1))):
                blocks[k, :, q] = [
                    gx[tx, 0] * gy[ty, 0],
                    gx[tx, 1] * gy[ty, 0],
                    gx[tx, 0] * gy[ty, 1],
                    gx[tx, 1] * gy[ty, 1],
                ]
        self.vertex_blocks = blocks

    def transfer(self, v):
        """Hermite data at a mesh vertex as ``{basis vertex id: 4x4 matrix}`` acting on basis-vertex data."""
        if v in self._vindex:
            return {self._vindex[v]: np.eye(4)}
        if v in self._transfer_cache:
            return self._transfer_cache[v]
        m = self.mesh
        _, e0, e1, axis = m.host_edge(v)
        px = m.to_param(np.array([e0[0], v[0], e1[0]]), np.array([e0[1], v[1], e1[1]]))
        a, t, b = px[axis]
        val, der = _hermite_1d(t, a, b)
        mats = []
        for end in (0, 1):
            h0, h1 = val[2 * end], val[2 * end + 1]
            d0, d1 = der[2 * end], der[2 * end + 1]
            T = np.zeros((4, 4))
            if axis == 0:
                # along xi: (f, fx) and (fy, fxy) are cubic Hermite pairs
                T[0, [0, 1]] = h0, h1
                T[1, [0, 1]] = d0, d1
                T[2, [2, 3]] = h0, h1
                T[3, [2, 3]] = d0, d1
            else:
                T[0, [0, 2]] = h0, h1
                T[2, [0, 2]] = d0, d1
                T[1, [1, 3]] = h0, h1
                T[3, [1, 3]] = d0, d1
            mats.append(T)
        out = {}
        for T, e in zip(mats, (e0, e1)):
            for k, M in self.transfer(e).items():
                out[k] = out.get(k, 0.0) + T @ M
        self._transfer_cache[v] = out
        return out

    def _build_leaf_blocks(self):
        m = self.mesh
        leaves = m.sorted_leaves()
        self.leaf_keys = leaves
        L = len(leaves)
        pb = np.array([m.param_box(k) for k in leaves])
        self.leaf_lo = pb[:, [0, 2]]
        self.leaf_hi = pb[:, [1, 3]]
        per_leaf = []
        nmax = 0
        for n, key in enumerate(leaves):
            x0, x1, y0, y1 = m.box(key)
            hx = pb[n, 1] - pb[n, 0]
            hy = pb[n, 3] - pb[n, 2]
            H = _hermite_to_bezier(hx, hy)
            cols = {}
            for c, v in enumerate(((x0, y0), (x1, y0), (x0, y1), (x1, y1))):
                for k, M in self.transfer(v).items():
                    blk = H[:, 4 * c : 4 * c + 4] @ M @ self.vertex_blocks[k]
                    cols[k] = cols.get(k, 0.0) + blk
            ks = sorted(cols)
            per_leaf.append((ks, np.hstack([cols[k] for k in ks])))
            nmax = max(nmax, 4 * len(ks))
        idx = np.zeros((L, nmax), dtype=np.int64)
        mat = np.zeros((L, 16, nmax))
        for n, (ks, B) in enumerate(per_leaf):
            ids = (4 * np.array(ks)[:, None] + np.arange(4)[None, :]).ravel()
            idx[n, : ids.size] = ids
            idx[n, ids.size :] = ids[0]
            mat[n, :, : ids.size] = B
        self.leaf_idx = idx
        self.leaf_bezier = mat

    # space interface ---------------------------------------------------
    @property
    def dim(self):
        return 4 * len(self.basis_vertices)

    @property
    def nleaves(self):
        return len(self.leaf_keys)

    @property
    def breakpoints(self):
        return [self.mesh.xbreaks, self.mesh.ybreaks]

    def cells(self):
        """Leaf boxes ``(lo, hi)`` in parameter space, ordered like :attr:`leaf_keys`."""
        return self.leaf_lo.copy(), self.leaf_hi.copy()

    def vertex_counts(self):
        """``(V^b, V^+, V^T)``: boundary, crossing and T-vertex counts."""
        m = self.mesh
        return m.count(BOUNDARY), m.count(CROSSING), m.count(T_VERTEX)

    def locate(self, points):
        pts = np.atleast_2d(np.asarray(points, float))
        lo = np.array([self.mesh.xbreaks[0], self.mesh.ybreaks[0]])
        hi = np.array([self.mesh.xbreaks[-1], self.mesh.ybreaks[-1]])
        tol = 1e-12 * np.maximum(1.0, np.abs(hi - lo))
        if np.any(pts < lo - tol) or np.any(pts > hi + tol):
            raise ValueError("parameter point outside the domain")
        ix, iy = self.mesh.to_index(pts[:, 0], pts[:, 1])
        return self.mesh.locate(ix, iy)

    def tabulate(self, points, nderiv=0):
        """Local functions at points; ``idx`` is constant within a leaf."""
        if nderiv > 2:
            raise ValueError("derivatives up to order 2 only")
        pts = np.atleast_2d(np.asarray(points, float))
        return self.tabulate_in_leaves(pts, self.locate(pts), nderiv)

    def tabulate_in_leaves(self, points, leaf, nderiv=0):
        """Like :meth:`tabulate` but with given leaf indices (one-sided traces on edges)."""
        if nderiv > 2:
            raise ValueError("derivatives up to order 2 only")
        pts = np.atleast_2d(np.asarray(points, float))
        leaf = np.broadcast_to(np.asarray(leaf, np.int64), pts.shape[:1])
        lo, hi = self.leaf_lo[leaf], self.leaf_hi[leaf]
        h = hi - lo
        t = (pts - lo) / h
        bx = _bernstein(t[:, 0], nderiv)
        by = _bernstein(t[:, 1], nderiv)
        M = self.leaf_bezier[leaf]  # (N, 16, nloc)

        def comb(dx, dy):
            B = (bx[dx][:, :, None] * by[dy][:, None, :]).reshape(-1, 16)
            return np.einsum("nb,nba->na", B, M) / (h[:, 0] ** dx * h[:, 1] ** dy)[:, None]

        val = comb(0, 0)
        grad = hess = None
        if nderiv >= 1:
            grad = np.stack([comb(1, 0), comb(0, 1)], axis=-1)
        if nderiv >= 2:
            hxy = comb(1, 1)
            hess = np.stack([np.stack([comb(2, 0), hxy], -1), np.stack([hxy, comb(0, 2)], -1)], -2)
        return BasisTable(self.leaf_idx[leaf], val, grad, hess)

    def support(self, dof):
        """Parameter box ``(xmin, xmax, ymin, ymax)`` bounding the support of a function."""
        v = self.basis_vertices[dof // 4]
        s = 2.0 ** -_vertex_level(v)
        m = self.mesh
        (x0, x1), (y0, y1) = m.to_param(
            np.array([max(v[0] - s, 0.0), min(v[0] + s, m.nx)]),
            np.array([max(v[1] - s, 0.0), min(v[1] + s, m.ny)]),
        )
        return (x0, x1, y0, y1)

    # refinement ----------------------------------------------------------
    def refine_cells(self, cells):
        """Cross-insert into the given leaves (keys or indices into :attr:`leaf_keys`)."""
        keys = [self.leaf_keys[c] if isinstance(c, (int, np.integer)) else tuple(c) for c in cells]
        for k in keys:
            if k not in self.mesh.leaves:
                raise ValueError("cell %r is not a leaf" % (k,))
        return PhtSpace(self.mesh.refine(keys), self.name, vertex_order=self.basis_vertices)

    def refine_uniform(self, times=1):
        sp = self
        for _ in range(times):
            sp = sp.refine_cells(sp.leaf_keys)
        return sp

    def __repr__(self):
        vb, vc, vt = self.vertex_counts()
        return "PhtSpace(leaves=%d, dim=%d, Vb=%d, V+=%d, VT=%d)" % (self.nleaves, self.dim, vb, vc, vt)


def build_initial_pht(xbreaks, ybreaks=None, name="PHT"):
    """Level-0 PHT space on a tensor grid; ``ybreaks`` defaults to ``xbreaks``."""
    if ybreaks is None:
        ybreaks = xbreaks
    return PhtSpace(HierarchicalTMesh(xbreaks, ybreaks), name)


def refine_cell(space, cell):
    """Subdivide one leaf into four; returns the new space."""
    return space.refine_cells([cell])


def eval_pht(space, coeffs, xi, max_deriv=0):
    """Evaluate ``sum_i T_i M_i`` at parameter points.

    Returns the values ``(N,)``, plus the gradient ``(N, 2)`` when
    ``max_deriv >= 1`` and the Hessian ``(N, 2, 2)`` when ``max_deriv >= 2``.
    """
    coeffs = np.asarray(coeffs, float)
    if coeffs.shape != (space.dim,):
        raise ValueError("expected %d coefficients" % space.dim)
    t = space.tabulate(xi, max_deriv)
    c = coeffs[t.idx]
    out = [np.einsum("na,na->n", c, t.val)]
    if max_deriv >= 1:
        out.append(np.einsum("na,nai->ni", c, t.grad))
    if max_deriv >= 2:
        out.append(np.einsum("na,naij->nij", c, t.hess))
    return out[0] if max_deriv == 0 else tuple(out)


def format_tmesh(space_or_mesh):
    """Text dump: ``level xmin xmax ymin ymax`` per leaf, ``x y class`` per vertex (parameter space)."""
    m = space_or_mesh.mesh if isinstance(space_or_mesh, PhtSpace) else space_or_mesh
    lines = ["# cells: level xmin xmax ymin ymax"]
    for key in m.sorted_leaves():
        a, b, c, d = m.param_box(key)
        lines.append("%d %.17g %.17g %.17g %.17g" % (key[0], a, b, c, d))
    lines.append("# vertices: x y class")
    for v, cls in sorted(m.vertices().items()):
        px, py = m.to_param(v[0], v[1])
        lines.append("%.17g %.17g %s" % (px, py, cls))
    return "\n".join(lines) + "\n"


def write_tmesh(space_or_mesh, path):
    with open(path, "w") as fh:
        fh.write(format_tmesh(space_or_mesh))


@dataclass(frozen=True)
class AffineReparam:
    """Affine change of parameters from a new box ``[e,f] x [g,h]`` back to ``[a,b] x [c,d]``."""

    source: tuple  # (a, b, c, d)
    target: tuple  # (e, f, g, h)

    def to_source(self, xi):
        a, b, c, d = self.source
        e, f, g, h = self.target
        xi = np.atleast_2d(np.asarray(xi, float))
        u = ((f - xi[:, 0]) * a + (xi[:, 0] - e) * b) / (f - e)
        v = ((h - xi[:, 1]) * c + (xi[:, 1] - g) * d) / (h - g)
        return np.stack([u, v], -1)

    def to_target(self, uv):
        inv = AffineReparam(self.target, self.source)
        return inv.to_source(uv)

    @property
    def scale(self):
        """Diagonal Jacobian ``(du/dxi, dv/deta)``."""
        a, b, c, d = self.source
        e, f, g, h = self.target
        return ((b - a) / (f - e), (d - c) / (h - g))


def reparameterize_domain(boxes, topology):
    """Translate patch parameter boxes so that adjacent patches share edges.

    Parameters
    ----------
    boxes : list of ``(a, b, c, d)``
        Original parameter boxes ``[a,b] x [c,d]``; patch 0 stays in place.
    topology : list of ``(anchor, patch, side)``
        Places ``patch`` next to ``anchor`` on ``side`` ("right" or "top").
        The shared edges must have equal lengths.

    Returns the new boxes and one :class:`AffineReparam` per patch.
    """
    n = len(boxes)
    new = [None] * n
    new[0] = tuple(float(v) for v in boxes[0])
    pending = list(topology)
    while pending:
        progressed = False
        for item in list(pending):
            anchor, patch, side = item
            if not (0 <= anchor < n and 0 <= patch < n) or anchor == patch:
                raise ValueError("bad patch index in %r" % (item,))
            if new[anchor] is None:
                continue
            A = new[anchor]
            a, b, c, d = boxes[patch]
            if side == "right":
                if not math.isclose(d - c, A[3] - A[2]):
                    raise ValueError("inconsistent adjacency: edge lengths differ in %r" % (item,))
                box = (A[1], A[1] + (b - a), A[2], A[3])
            elif side == "top":
                if not math.isclose(b - a, A[1] - A[0]):
                    raise ValueError("inconsistent adjacency: edge lengths differ in %r" % (item,))
                box = (A[0], A[1], A[3], A[3] + (d - c))
            else:
                raise ValueError("side must be 'right' or 'top'")
            if new[patch] is not None and not np.allclose(new[patch], box):
                raise ValueError("inconsistent adjacency: conflicting placements of patch %d" % patch)
            new[patch] = box
            pending.remove(item)
            progressed = True
        if not progressed:
            raise ValueError("inconsistent adjacency: patches not connected to patch 0")
    if any(b is None for b in new):
        raise ValueError("inconsistent adjacency: some patches are not placed")
    maps = [AffineReparam(tuple(float(v) for v in boxes[k]), new[k]) for k in range(n)]
    return new, maps
