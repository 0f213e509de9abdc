import numpy as np
import pytest

from giftiga.geometry import GeometryMap
from giftiga.spline import KnotVector, TensorBasisSpec, WeightedControlNet

_ACCEPTANCE_LINES = []


def record_acceptance(line):
    _ACCEPTANCE_LINES.append(line)
    print(line)


def pytest_terminal_summary(terminalreporter):
    if _ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in sorted(_ACCEPTANCE_LINES):
            terminalreporter.write_line(line)


def affine_square(scale=(1.0, 1.0), degrees=(1, 1)):
    """Bilinear map of the unit square onto ``[0, sx] x [0, sy]`` (optionally elevated knots)."""
    kx = KnotVector([0, 0, 1, 1], 1)
    ky = KnotVector([0, 0, 1, 1], 1)
    pts = np.array([[[0, 0], [0, scale[1]]], [[scale[0], 0], [scale[0], scale[1]]]], dtype=float)
    return GeometryMap(TensorBasisSpec((kx, ky)), WeightedControlNet(pts, np.ones((2, 2))), "square")


@pytest.fixture
def unit_square():
    return affine_square()


def collocation_matrix(space, points, nderiv=0):
    """Dense ``(N, dim)`` matrix of basis values (or a derivative) at points."""
    t = space.tabulate(points, nderiv)
    A = np.zeros((len(points), space.dim))
    rows = np.repeat(np.arange(len(points)), t.idx.shape[1])
    np.add.at(A, (rows, t.idx.ravel()), t.val.ravel())
    return A
