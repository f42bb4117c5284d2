import numpy as np

from momentflow.expr import parse
from momentflow.jets import (
    jet_deriv,
    jet_from_expr,
    jet_length,
    jet_matrix_inverse,
    jet_mul,
    multi_indices,
    order_from_length,
)


def _nodes_2d(n=11):
    rng = np.random.default_rng(3)
    return rng.uniform(0.2, 0.8, size=(n, 2))


def test_multi_index_bookkeeping():
    idx = multi_indices(2, 2)
    assert idx == ((0, 0), (0, 1), (1, 0), (0, 2), (1, 1), (2, 0))
    assert jet_length(2, 6) == 28
    assert order_from_length(2, 28) == 6


def test_jet_product_matches_symbolic():
    nodes = _nodes_2d()
    f = parse("x1*log(x1)+sin(x2)")
    g = parse("exp(0.5*x1)*x2^2")
    fg = parse("(x1*log(x1)+sin(x2))*(exp(0.5*x1)*x2^2)")
    jf = jet_from_expr(f, nodes, 4)[None, ...]  # fake slot axis
    jg = jet_from_expr(g, nodes, 4)[None, ...]
    prod = jet_mul("i,i->i", jf, jg, 2)[0]
    expected = jet_from_expr(fg, nodes, 4)
    assert np.max(np.abs(prod - expected)) <= 1e-10 * np.max(np.abs(expected))


def test_jet_deriv_matches_symbolic():
    nodes = _nodes_2d()
    f = parse("x1^3*x2+cos(x1*x2)")
    jf = jet_from_expr(f, nodes, 5)
    from momentflow.expr import derive

    for axis in (0, 1):
        shifted = jet_deriv(jf, axis, 2)
        expected = jet_from_expr(derive(f, axis), nodes, 4)
        assert np.max(np.abs(shifted - expected)) <= 1e-12 * max(1.0, np.max(np.abs(expected)))


def test_jet_matrix_inverse():
    nodes = _nodes_2d()
    entries = [
        [parse("2+x1^2"), parse("x1*x2")],
        [parse("x1*x2"), parse("3+x2^2")],
    ]
    J = jet_length(2, 4)
    A = np.empty((2, 2, nodes.shape[0], J), dtype=complex)
    for i in range(2):
        for j in range(2):
            A[i, j] = jet_from_expr(entries[i][j], nodes, 4)
    B = jet_matrix_inverse(A, 2)
    eye = jet_mul("ij,jk->ik", A, B, 2)
    expected = np.zeros_like(eye)
    expected[0, 0, :, 0] = 1.0
    expected[1, 1, :, 0] = 1.0
    assert np.max(np.abs(eye - expected)) <= 1e-12
