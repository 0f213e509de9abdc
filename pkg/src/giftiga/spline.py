"""B-spline and NURBS kernels.

Univariate Cox-de Boor evaluation (vectorized over points), tensor-product
rational and polynomial bases with first and second derivatives, and the
geometry-preserving refinement operators: knot insertion and degree elevation.
Both operators act on homogeneous coordinates ``(w*P, w)`` so a rational patch
is reproduced exactly up to rounding.
"""

from __future__ import annotations

from dataclasses import dataclass
from math import factorial

import numpy as np

__all__ = [
    "KnotVector",
    "TensorBasisSpec",
    "WeightedControlNet",
    "BasisEval",
    "BasisTable",
    "TensorBasis",
    "NurbsPatch",
    "find_span",
    "basis_derivatives",
    "eval_basis",
    "eval_nurbs",
    "knot_insert",
    "degree_elevate",
    "make_bspline_twin",
    "build_reduced_degree_basis",
    "open_knot_vector",
]

_KNOT_TOL = 1e-12


class KnotVector:
    """Open (clamped) knot vector of a given degree.

    Parameters
    ----------
    values : array_like
        Nondecreasing knot sequence.
    degree : int
        Polynomial degree ``p``.
    """

    def __init__(self, values, degree):
        values = np.array(values, dtype=float)
        degree = int(degree)
        if values.ndim != 1:
            raise ValueError("knot vector must be one-dimensional")
        if degree < 0:
            raise ValueError("degree must be nonnegative")
        if values.size < 2 * degree + 2:
            raise ValueError("knot vector too short for degree %d" % degree)
        if np.any(np.diff(values) < 0):
            raise ValueError("knot vector must be nondecreasing")
        if values[-1] - values[0] <= 0:
            raise ValueError("knot vector has no nonempty span")
        p = degree
        if not (np.all(values[: p + 1] == values[0]) and np.all(values[-p - 1 :] == values[-1])):
            raise ValueError("knot vector must be open: end knots repeated p+1 times")
        if values.size > p + 1 and p > 0:
            if np.any(values[p + 1] == values[0]) or np.any(values[-p - 2] == values[-1]):
                raise ValueError("end knots repeated more than p+1 times")
        interior = values[p + 1 : values.size - p - 1]
        if interior.size:
            _, counts = np.unique(interior, return_counts=True)
            if p > 0 and counts.max() > p:
                raise ValueError("interior knot multiplicity exceeds degree")
        values.setflags(write=False)
        self.values = values
        self.degree = degree

    @property
    def p(self):
        return self.degree

    @property
    def n(self):
        """Number of basis functions."""
        return self.values.size - self.degree - 1

    @property
    def domain(self):
        return float(self.values[0]), float(self.values[-1])

    @property
    def breakpoints(self):
        """Distinct knot values, including the ends."""
        return np.unique(self.values)

    @property
    def nspans(self):
        return self.breakpoints.size - 1

    def multiplicity(self, x):
        return int(np.sum(np.abs(self.values - x) <= _KNOT_TOL))

    def span(self, xi):
        return find_span(self, xi)

    def __len__(self):
        return self.values.size

    def __eq__(self, other):
        return (
            isinstance(other, KnotVector)
            and other.degree == self.degree
            and other.values.shape == self.values.shape
            and bool(np.all(other.values == self.values))
        )

    def __hash__(self):
        return hash((self.degree, self.values.tobytes()))

    def __repr__(self):
        return "KnotVector(%s, degree=%d)" % (np.array2string(self.values, precision=6), self.degree)


def open_knot_vector(breaks, degree, multiplicity=1):
    """Open knot vector on `breaks` with uniform interior multiplicity."""
    breaks = np.asarray(breaks, dtype=float)
    vals = [breaks[0]] * (degree + 1)
    for b in breaks[1:-1]:
        vals += [b] * multiplicity
    vals += [breaks[-1]] * (degree + 1)
    return KnotVector(vals, degree)


def _spans(kv, xi):
    """Vectorized span lookup; right endpoint maps to the last nonempty span."""
    U = kv.values
    p = kv.degree
    n = kv.n
    xi = np.asarray(xi, dtype=float)
    lo, hi = U[0], U[-1]
    if np.any(xi < lo - _KNOT_TOL) or np.any(xi > hi + _KNOT_TOL):
        raise ValueError("parameter outside knot range [%g, %g]" % (lo, hi))
    xi = np.clip(xi, lo, hi)
    span = np.searchsorted(U, xi, side="right") - 1
    return np.clip(span, p, n - 1), xi


def find_span(kv, xi):
    """Index ``k`` of the nonempty span ``[U_k, U_{k+1})`` containing `xi`.

    At the right end of the knot range the last nonempty span is returned.
    Raises ``ValueError`` when `xi` lies outside the knot range.
    """
    span, _ = _spans(kv, np.atleast_1d(xi))
    return int(span[0])


def basis_derivatives(kv, xi, nderiv=0):
    """Nonzero B-spline basis functions and derivatives at many points.

    Returns
    -------
    spans : (N,) int array
    ders : (N, nderiv+1, p+1) array
        ``ders[:, k, r]`` is the k-th derivative of basis ``spans - p + r``.
        Derivatives of order above ``p`` are zero.
    """
    p = kv.degree
    U = kv.values
    spans, x = _spans(kv, np.atleast_1d(xi))
    N = x.size
    nd = min(nderiv, p)
    ndu = np.zeros((N, p + 1, p + 1))
    ndu[:, 0, 0] = 1.0
    left = np.zeros((N, p + 1))
    right = np.zeros((N, p + 1))
    for j in range(1, p + 1):
        left[:, j] = x - U[spans + 1 - j]
        right[:, j] = U[spans + j] - x
        saved = np.zeros(N)
        for r in range(j):
            ndu[:, j, r] = right[:, r + 1] + left[:, j - r]
            temp = ndu[:, r, j - 1] / ndu[:, j, r]
            ndu[:, r, j] = saved + right[:, r + 1] * temp
            saved = left[:, j - r] * temp
        ndu[:, j, j] = saved

    ders = np.zeros((N, nderiv + 1, p + 1))
    ders[:, 0, :] = ndu[:, :, p]
    if nd == 0:
        return spans, ders
    for r in range(p + 1):
        a = np.zeros((2, N, p + 1))
        a[0, :, 0] = 1.0
        s1, s2 = 0, 1
        for k in range(1, nd + 1):
            d = np.zeros(N)
            rk, pk = r - k, p - k
            if r >= k:
                a[s2, :, 0] = a[s1, :, 0] / ndu[:, pk + 1, rk]
                d = a[s2, :, 0] * ndu[:, rk, pk]
            j1 = 1 if rk >= -1 else -rk
            j2 = k - 1 if r - 1 <= pk else p - r
            for j in range(j1, j2 + 1):
                a[s2, :, j] = (a[s1, :, j] - a[s1, :, j - 1]) / ndu[:, pk + 1, rk + j]
                d = d + a[s2, :, j] * ndu[:, rk + j, pk]
            if r <= pk:
                a[s2, :, k] = -a[s1, :, k - 1] / ndu[:, pk + 1, r]
                d = d + a[s2, :, k] * ndu[:, r, pk]
            ders[:, k, r] = d
            s1, s2 = s2, s1
    for k in range(1, nd + 1):
        ders[:, k, :] *= factorial(p) / factorial(p - k)
    return spans, ders


@dataclass(frozen=True)
class BasisEval:
    """Nonzero basis functions at a single parametric point.

    ``d1`` has one column per parametric direction and ``d2`` one entry per
    direction pair; in the univariate case both are 1-D.
    """

    indices: np.ndarray
    values: np.ndarray
    d1: np.ndarray | None = None
    d2: np.ndarray | None = None


def eval_basis(kv, xi, max_deriv=0):
    """Univariate B-spline basis at `xi` with derivatives up to `max_deriv`."""
    if max_deriv < 0 or max_deriv > 2:
        raise ValueError("max_deriv must be 0, 1 or 2")
    if max_deriv > kv.degree:
        raise ValueError("max_deriv=%d exceeds degree %d" % (max_deriv, kv.degree))
    spans, ders = basis_derivatives(kv, np.array([xi], dtype=float), max_deriv)
    k = spans[0]
    idx = np.arange(k - kv.degree, k + 1)
    d = ders[0]
    return BasisEval(
        indices=idx,
        values=d[0],
        d1=d[1] if max_deriv >= 1 else None,
        d2=d[2] if max_deriv >= 2 else None,
    )


@dataclass(frozen=True)
class TensorBasisSpec:
    """Tensor product of open knot vectors, one per parametric direction."""

    knots: tuple

    def __post_init__(self):
        object.__setattr__(self, "knots", tuple(self.knots))
        if not 1 <= len(self.knots) <= 3:
            raise ValueError("parametric dimension must be 1, 2 or 3")
        for kv in self.knots:
            if not isinstance(kv, KnotVector):
                raise TypeError("knots must be KnotVector instances")

    @property
    def dim(self):
        return len(self.knots)

    @property
    def degrees(self):
        return tuple(kv.degree for kv in self.knots)

    @property
    def shape(self):
        return tuple(kv.n for kv in self.knots)

    @property
    def size(self):
        return int(np.prod(self.shape))

    @property
    def breakpoints(self):
        return tuple(kv.breakpoints for kv in self.knots)

    @property
    def domain(self):
        return tuple(kv.domain for kv in self.knots)


@dataclass(frozen=True)
class WeightedControlNet:
    """Control points of shape ``(n_1, ..., n_d, sdim)`` and positive weights ``(n_1, ..., n_d)``."""

    points: np.ndarray
    weights: np.ndarray

    def __post_init__(self):
        pts = np.array(self.points, dtype=float)
        w = np.array(self.weights, dtype=float)
        if pts.shape[:-1] != w.shape:
            raise ValueError("points and weights grid shapes differ: %s vs %s" % (pts.shape[:-1], w.shape))
        if np.any(w <= 0):
            raise ValueError("weights must be strictly positive")
        pts.setflags(write=False)
        w.setflags(write=False)
        object.__setattr__(self, "points", pts)
        object.__setattr__(self, "weights", w)

    @property
    def dims(self):
        return self.weights.shape

    @property
    def sdim(self):
        return self.points.shape[-1]

    def homogeneous(self):
        return np.concatenate([self.points * self.weights[..., None], self.weights[..., None]], axis=-1)

    @classmethod
    def from_homogeneous(cls, Pw):
        w = Pw[..., -1]
        return cls(Pw[..., :-1] / w[..., None], w)


@dataclass
class BasisTable:
    """Basis functions tabulated at ``N`` points.

    ``idx`` holds flat global indices of the ``nloc`` functions that may be
    nonzero at each point; padded entries carry zero values.
    """

    idx: np.ndarray  # (N, nloc)
    val: np.ndarray  # (N, nloc)
    grad: np.ndarray | None = None  # (N, nloc, d)
    hess: np.ndarray | None = None  # (N, nloc, d, d)


def _tensor_table(spec, points, nderiv):
    points = np.atleast_2d(np.asarray(points, dtype=float))
    N, d = points.shape
    if d != spec.dim:
        raise ValueError("points have %d coordinates, basis has %d directions" % (d, spec.dim))
    per_dir = [basis_derivatives(kv, points[:, i], min(nderiv, 2)) for i, kv in enumerate(spec.knots)]
    shape = spec.shape
    degs = spec.degrees
    # local multi-indices in C order
    local = np.stack(np.meshgrid(*[np.arange(p + 1) for p in degs], indexing="ij"), -1).reshape(-1, d)
    nloc = local.shape[0]
    gidx = np.zeros((N, nloc), dtype=np.int64)
    for i in range(d):
        first = per_dir[i][0] - degs[i]
        gidx = gidx * shape[i] + (first[:, None] + local[None, :, i])

    def factor(i, order):
        return per_dir[i][1][:, order, :][:, local[:, i]]

    val = np.ones((N, nloc))
    for i in range(d):
        val = val * factor(i, 0)
    grad = hess = None
    if nderiv >= 1:
        grad = np.ones((N, nloc, d))
        for j in range(d):
            for i in range(d):
                grad[:, :, j] *= factor(i, 1 if i == j else 0)
    if nderiv >= 2:
        hess = np.ones((N, nloc, d, d))
        for a in range(d):
            for b in range(d):
                for i in range(d):
                    order = (i == a) + (i == b)
                    hess[:, :, a, b] *= factor(i, order)
    return BasisTable(gidx, val, grad, hess)


def _rationalize(table, weights_flat):
    """Apply the NURBS quotient rule to a polynomial basis table."""
    w = weights_flat[table.idx]
    wN = w * table.val
    W = wN.sum(axis=1)
    R = wN / W[:, None]
    grad = hess = None
    if table.grad is not None:
        wdN = w[:, :, None] * table.grad
        dW = wdN.sum(axis=1)
        grad = (wdN - R[:, :, None] * dW[:, None, :]) / W[:, None, None]
        if table.hess is not None:
            wd2N = w[:, :, None, None] * table.hess
            d2W = wd2N.sum(axis=1)
            hess = (
                wd2N
                - grad[:, :, :, None] * dW[:, None, None, :]
                - grad[:, :, None, :] * dW[:, None, :, None]
                - R[:, :, None, None] * d2W[:, None, :, :]
            ) / W[:, None, None, None]
    return BasisTable(table.idx, R, grad, hess)


class TensorBasis:
    """Tensor-product B-spline basis, rational when `weights` are given.

    This is the carrier of a solution space in the GIFT sense: only knots and
    weights matter, never control points.
    """

    def __init__(self, spec, weights=None):
        self.spec = spec
        if weights is not None:
            weights = np.array(weights, dtype=float).reshape(spec.shape)
            if np.any(weights <= 0):
                raise ValueError("weights must be strictly positive")
            weights.setflags(write=False)
        self.weights = weights

    @property
    def rational(self):
        return self.weights is not None

    @property
    def dim(self):
        return self.spec.dim

    @property
    def degrees(self):
        return self.spec.degrees

    @property
    def shape(self):
        return self.spec.shape

    @property
    def size(self):
        return self.spec.size

    def tabulate(self, points, nderiv=0):
        table = _tensor_table(self.spec, points, nderiv)
        if self.weights is None:
            return table
        return _rationalize(table, self.weights.ravel())

    def evaluate(self, xi, max_deriv=0):
        """Nonzero basis functions at a single point as a :class:`BasisEval`."""
        t = self.tabulate(np.atleast_2d(xi), max_deriv)
        return BasisEval(
            t.idx[0], t.val[0], None if t.grad is None else t.grad[0], None if t.hess is None else t.hess[0]
        )

    def _homogeneous(self):
        w = self.weights if self.weights is not None else np.ones(self.shape)
        return w[..., None]

    def _from_homogeneous(self, spec, Hw):
        if self.weights is None:
            return TensorBasis(spec)
        return TensorBasis(spec, Hw[..., 0])

    def insert_knot(self, direction, knot):
        spec, Hw = _insert_along(self.spec, self._homogeneous(), direction, knot)
        return self._from_homogeneous(spec, Hw)

    def insert_knots(self, direction, knots):
        out = self
        for k in knots:
            out = out.insert_knot(direction, k)
        return out

    def elevate(self, direction, times=1):
        spec, Hw = self.spec, self._homogeneous()
        for _ in range(times):
            spec, Hw = _elevate_along(spec, Hw, direction)
        return self._from_homogeneous(spec, Hw)

    def refine_uniform(self, times=1):
        """Insert the midpoint of every nonempty span in every direction, `times` times."""
        out = self
        for _ in range(times):
            for d, kv in enumerate(out.spec.knots):
                b = kv.breakpoints
                out = out.insert_knots(d, 0.5 * (b[:-1] + b[1:]))
        return out

    def __repr__(self):
        kind = "NURBS" if self.rational else "B-spline"
        return "TensorBasis(%s, degrees=%s, shape=%s)" % (kind, self.degrees, self.shape)


class NurbsPatch:
    """A rational tensor-product patch: basis spec plus weighted control net."""

    def __init__(self, spec, net):
        if tuple(net.dims) != tuple(spec.shape):
            raise ValueError("control grid %s does not match basis shape %s" % (net.dims, spec.shape))
        self.spec = spec
        self.net = net
        self.basis = TensorBasis(spec, net.weights)
        self._points_flat = net.points.reshape(-1, net.sdim)

    @property
    def pdim(self):
        return self.spec.dim

    @property
    def sdim(self):
        return self.net.sdim

    def evaluate(self, points, nderiv=0):
        """Physical points and derivatives.

        Returns ``x (N, sdim)``, ``dx (N, sdim, d)`` and ``d2x (N, sdim, d, d)``
        (the latter two ``None`` below the requested order).
        """
        t = self.basis.tabulate(points, nderiv)
        C = self._points_flat[t.idx]  # (N, nloc, sdim)
        x = np.einsum("na,nas->ns", t.val, C)
        dx = d2x = None
        if nderiv >= 1:
            dx = np.einsum("nai,nas->nsi", t.grad, C)
        if nderiv >= 2:
            d2x = np.einsum("naij,nas->nsij", t.hess, C)
        return x, dx, d2x

    def __call__(self, points):
        return self.evaluate(points)[0]


def eval_nurbs(spec, net, xi, max_deriv=0):
    """Evaluate the rational map at one or many parametric points.

    Returns ``(x, dx, d2x)`` as in :meth:`NurbsPatch.evaluate`; a single point
    yields unbatched arrays.
    """
    xi = np.asarray(xi, dtype=float)
    single = xi.ndim == 1
    x, dx, d2x = NurbsPatch(spec, net).evaluate(np.atleast_2d(xi), max_deriv)
    if single:
        x = x[0]
        dx = None if dx is None else dx[0]
        d2x = None if d2x is None else d2x[0]
    return x, dx, d2x


# -- refinement on homogeneous coordinates -------------------------------------


def _insert_1d(kv, Pw, u):
    """Boehm single-knot insertion along axis 0 of `Pw`."""
    U = kv.values
    p = kv.degree
    lo, hi = kv.domain
    if not lo < u < hi:
        raise ValueError("new knot %g must lie strictly inside (%g, %g)" % (u, lo, hi))
    if kv.multiplicity(u) + 1 > p:
        raise ValueError("inserting %g would exceed multiplicity %d" % (u, p))
    k = find_span(kv, u)
    n = kv.n
    Q = np.empty((n + 1,) + Pw.shape[1:])
    Q[: k - p + 1] = Pw[: k - p + 1]
    for i in range(k - p + 1, k + 1):
        alpha = (u - U[i]) / (U[i + p] - U[i])
        Q[i] = alpha * Pw[i] + (1.0 - alpha) * Pw[i - 1]
    Q[k + 1 :] = Pw[k:]
    newU = np.insert(U, k + 1, u)
    return KnotVector(newU, p), Q


def _elevated_knots(kv):
    vals = []
    for b in kv.breakpoints:
        m = int(np.sum(kv.values == b))
        vals += [b] * (m + 1)
    return KnotVector(vals, kv.degree + 1)


def _greville(kv):
    U = kv.values
    p = kv.degree
    if p == 0:
        return 0.5 * (U[:-1] + U[1:])
    return np.array([U[i + 1 : i + p + 1].mean() for i in range(kv.n)])


def _collocation(kv, x):
    spans, ders = basis_derivatives(kv, x, 0)
    A = np.zeros((x.size, kv.n))
    for r in range(kv.degree + 1):
        A[np.arange(x.size), spans - kv.degree + r] = ders[:, 0, r]
    return A


def _elevate_1d(kv, Pw):
    """Degree elevation along axis 0 by interpolation at the Greville points.

    The elevated space contains the original one, so interpolation reproduces
    every homogeneous coordinate function exactly (up to rounding).
    """
    new = _elevated_knots(kv)
    g = _greville(new)
    A_new = _collocation(new, g)
    A_old = _collocation(kv, g)
    shape = Pw.shape
    rhs = A_old @ Pw.reshape(kv.n, -1)
    Q = np.linalg.solve(A_new, rhs)
    return new, Q.reshape((new.n,) + shape[1:])


def _along(spec, Hw, direction, op):
    if not 0 <= direction < spec.dim:
        raise ValueError("direction %d out of range" % direction)
    moved = np.moveaxis(Hw, direction, 0)
    kv, Q = op(spec.knots[direction], moved)
    knots = list(spec.knots)
    knots[direction] = kv
    return TensorBasisSpec(tuple(knots)), np.moveaxis(Q, 0, direction)


def _insert_along(spec, Hw, direction, u):
    return _along(spec, Hw, direction, lambda kv, P: _insert_1d(kv, P, float(u)))


def _elevate_along(spec, Hw, direction):
    return _along(spec, Hw, direction, _elevate_1d)


def knot_insert(spec, net, direction, new_knot):
    """Insert `new_knot` in one direction without changing the geometry."""
    spec2, Hw = _insert_along(spec, net.homogeneous(), direction, new_knot)
    return spec2, WeightedControlNet.from_homogeneous(Hw)


def degree_elevate(spec, net, direction):
    """Raise the degree by one in `direction` without changing the geometry."""
    spec2, Hw = _elevate_along(spec, net.homogeneous(), direction)
    return spec2, WeightedControlNet.from_homogeneous(Hw)


def make_bspline_twin(spec, net):
    """Same knots and control points, all weights set to one."""
    return spec, WeightedControlNet(net.points, np.ones_like(net.weights))


def build_reduced_degree_basis(spec, degrees):
    """Fresh B-spline basis of the given degrees on the breakpoints of `spec`.

    Interior breakpoints get multiplicity one; no control data is converted.
    """
    degrees = tuple(int(q) for q in degrees)
    if len(degrees) != spec.dim:
        raise ValueError("need one degree per direction")
    if min(degrees) < 1:
        raise ValueError("target degrees must be >= 1")
    knots = []
    for kv, q in zip(spec.knots, degrees):
        if q == kv.degree:
            knots.append(kv)
        else:
            knots.append(open_knot_vector(kv.breakpoints, q))
    return TensorBasisSpec(tuple(knots))
