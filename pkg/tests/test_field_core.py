import numpy as np
import pytest

from momentflow.charts import polytope_chart, torus_chart
from momentflow.errors import NyquistError, PolytopeDifferentiationForbidden
from momentflow.fields import (
    Field,
    dump_field,
    inner_product,
    nyquist_fraction,
    spectral_derivative,
)
from momentflow.linops import (
    adjoint_probe,
    compose_adjoint,
    contract_op,
    derivative_op,
    multiply_op,
)

F1_POLYTOPE = [((1.0, 0.0), 0.0), ((0.0, 1.0), 0.0), ((0.0, -1.0), 1.0), ((-1.0, -1.0), 2.0)]


def test_torus_weights_sum_to_volume():
    ch = torus_chart(1, 32)
    assert abs(ch.volume - 1.0) <= 1e-12
    assert np.all(ch.weights > 0)


def test_segment_quadrature_exact():
    ch = polytope_chart([((1.0,), 0.0), ((-1.0,), 2.0)], 12)
    assert abs(ch.volume - 2.0) <= 1e-12
    x = ch.nodes[:, 0]
    for deg in range(2 * 12 - 1):
        exact = 2.0 ** (deg + 1) / (deg + 1)
        assert abs(np.sum(ch.weights * x**deg) - exact) <= 1e-12 * max(1.0, exact)


def test_polygon_quadrature_exact():
    ch = polytope_chart(F1_POLYTOPE, 10)
    assert abs(ch.volume - 1.5) <= 1e-12
    x, y = ch.nodes[:, 0], ch.nodes[:, 1]
    # moments of the trapezoid with vertices (0,0),(2,0),(1,1),(0,1):
    # int x = int_0^1 (2-y)^2/2 dy = 7/6, int x*y = int_0^1 y(2-y)^2/2 dy = 11/24
    assert abs(np.sum(ch.weights * x) - 7.0 / 6.0) <= 1e-12
    assert abs(np.sum(ch.weights * x * y) - 11.0 / 24.0) <= 1e-12


def test_polygon_nodes_interior():
    ch = polytope_chart(F1_POLYTOPE, 8)
    for a, c in F1_POLYTOPE:
        assert np.all(ch.nodes @ np.array(a) + c > 0)


def test_inner_product_trivia():
    ch = torus_chart(1, 32)
    x = ch.axis_coordinate(0)
    one = Field(ch, np.ones(ch.grid_shape, dtype=complex))
    c = Field(ch, np.cos(2 * np.pi * x).astype(complex))
    s = Field(ch, np.sin(2 * np.pi * x).astype(complex))
    assert abs(inner_product(one, one) - 1.0) <= 1e-14
    assert abs(inner_product(c, s)) <= 1e-14
    assert abs(inner_product(c, c) - 0.5) <= 1e-14
    assert inner_product(c, s) == np.conj(inner_product(s, c))


def test_spectral_derivative_exact_mode():
    ch = torus_chart(1, 32)
    x = ch.axis_coordinate(0)
    f = np.cos(2 * np.pi * x).astype(complex)
    df = spectral_derivative(f, ch, 0)
    assert np.max(np.abs(df - (-2 * np.pi * np.sin(2 * np.pi * x)))) <= 1e-12
    const = np.ones(ch.grid_shape, dtype=complex)
    assert np.max(np.abs(spectral_derivative(const, ch, 0))) <= 1e-14


def test_spectral_derivative_nyquist_guard():
    ch = torus_chart(1, 32)
    rng = np.random.default_rng(0)
    noise = rng.standard_normal(ch.grid_shape).astype(complex)
    assert nyquist_fraction(noise, ch, 0) > 1e-6
    with pytest.raises(NyquistError):
        spectral_derivative(noise, ch, 0)


def test_spectral_convergence_ratio():
    errs = []
    for n in (16, 32):
        ch = torus_chart(1, n)
        x = ch.axis_coordinate(0)
        f = np.exp(np.cos(2 * np.pi * x)).astype(complex)
        exact = -2 * np.pi * np.sin(2 * np.pi * x) * np.exp(np.cos(2 * np.pi * x))
        errs.append(np.max(np.abs(spectral_derivative(f, ch, 0) - exact)))
    assert errs[0] / max(errs[1], 1e-300) >= 1e3


def test_polytope_differentiation_forbidden():
    ch = polytope_chart([((1.0,), 0.0), ((-1.0,), 2.0)], 8)
    with pytest.raises(PolytopeDifferentiationForbidden):
        spectral_derivative(np.ones(8, dtype=complex), ch, 0)


def test_derivative_adjoint_is_minus():
    ch = torus_chart(1, 16)
    rng = np.random.default_rng(7)
    op = derivative_op(ch, 0, rank=0, check=False)
    assert adjoint_probe(op, rng) <= 1e-12


def test_multiply_adjoint_conjugates():
    ch = torus_chart(1, 16)
    rng = np.random.default_rng(8)
    w = rng.standard_normal(ch.grid_shape) + 1j * rng.standard_normal(ch.grid_shape)
    assert adjoint_probe(multiply_op(ch, w, rank=0), rng) <= 1e-12


def test_composed_adjoint_random_probe():
    ch = torus_chart(1, 16)
    rng = np.random.default_rng(9)
    w = rng.standard_normal(ch.grid_shape) + 1j * rng.standard_normal(ch.grid_shape)
    op = compose_adjoint([derivative_op(ch, 0, 0, check=False), multiply_op(ch, w, 0)])
    assert adjoint_probe(op, rng) <= 1e-11


def test_contract_op_adjoint():
    ch = torus_chart(1, 16)
    rng = np.random.default_rng(10)
    t = rng.standard_normal((2, 2) + ch.grid_shape) + 1j * rng.standard_normal(
        (2, 2) + ch.grid_shape
    )
    op = contract_op(ch, "ij,j->i", t, rank_in=1, rank_out=1)
    assert adjoint_probe(op, rng) <= 1e-11


def test_dump_field_roundtrip(tmp_path):
    ch = torus_chart(1, 8)
    x = ch.axis_coordinate(0)
    f = Field(ch, np.exp(2j * np.pi * x))
    path = tmp_path / "field.csv"
    dump_field(path, f)
    lines = path.read_text().splitlines()
    assert lines[0] == "x1,x2,re,im"
    assert len(lines) == 1 + ch.n_nodes
    assert (tmp_path / "field.csv.json").exists()
