import numpy as np
import pytest

from momentflow.errors import RicciNotNonNegative
from momentflow.expr import parse
from momentflow.geometry import build_toric_geometry, build_torus_geometry, poisson_bracket
from momentflow.jets import jet_from_expr
from momentflow.lichnerowicz import (
    d1,
    d2,
    dense_assembly,
    hessian_form,
    lichnerowicz,
    mu_variation_residual,
    poisson_relation_residual,
    positivity_check,
    rayleigh_spectrum,
    ricci_min_eigenvalue,
    weak_kernel_residual,
    weak_pair,
)

EPS_PHI = "0.05*cos(2*pi*x1)"
CP1_SEGMENT = [((1.0,), 0.0), ((-1.0,), 2.0)]
CP1_GUILLEMIN = "0.5*(x1*log(x1)+(2-x1)*log(2-x1))"
PI6 = np.pi**6


@pytest.fixture(scope="module")
def flat():
    return build_torus_geometry(None, 1, 32)


@pytest.fixture(scope="module")
def perturbed():
    return build_torus_geometry(parse(EPS_PHI), 1, 64)


@pytest.fixture(scope="module")
def cp1():
    # jet order 7: the bracket side of the Poisson relation differentiates mu
    return build_toric_geometry(CP1_SEGMENT, parse(CP1_GUILLEMIN), 32, jet_order=7)


def mode(geom, p, q):
    x, y = geom.chart.axis_coordinate(0), geom.chart.axis_coordinate(1)
    return np.exp(2j * np.pi * (p * x + q * y))


def test_d_norms_flat(flat):
    x = flat.chart.axis_coordinate(0)
    f = np.cos(2 * np.pi * x).astype(complex)
    n1 = flat.l2_inner(d1(flat, f), d1(flat, f), 3).real
    n2 = flat.l2_inner(d2(flat, f), d2(flat, f), 3).real
    assert abs(n1 - PI6 / 2) <= 1e-10 * PI6
    assert abs(n2 - PI6 / 2) <= 1e-10 * PI6
    zero = d2(flat, np.ones_like(f))
    assert np.max(np.abs(zero)) <= 1e-12


def test_flat_multipliers(flat):
    # Rayleigh quotients reproduce the multipliers to 1e-10; pointwise
    # residuals carry the k^5-amplified noise floor and sit near 1e-9.
    op = lichnerowicz(flat)
    for p in range(-2, 3):
        for q in range(0, 3):
            if p * p + q * q == 0 or p * p + q * q > 8:
                continue
            e = mode(flat, p, q)
            le = op.apply(e)
            lam = 2 * PI6 * (p * p + q * q) ** 3
            rayleigh = (flat.l2_inner(e, le, 0) / flat.l2_inner(e, e, 0)).real
            assert abs(rayleigh - lam) <= 1e-10 * lam
            assert np.max(np.abs(le - lam * e)) <= 1e-6 * lam


def test_annihilates_constants(flat):
    op = lichnerowicz(flat)
    c = np.ones(flat.chart.grid_shape, dtype=complex)
    assert np.max(np.abs(op.apply(c))) <= 1e-11


def test_self_adjointness_probes(perturbed):
    op = lichnerowicz(perturbed)
    rng = np.random.default_rng(17)
    shape = perturbed.chart.grid_shape
    worst = 0.0
    for _ in range(20):
        f = rng.standard_normal(shape) + 1j * rng.standard_normal(shape)
        h = rng.standard_normal(shape) + 1j * rng.standard_normal(shape)
        lhs = perturbed.l2_inner(h, op.apply(f), 0)
        rhs = perturbed.l2_inner(op.apply(h), f, 0)
        worst = max(worst, abs(lhs - rhs) / max(abs(lhs), abs(rhs)))
    assert worst <= 1e-11


def test_weak_pair_matches_strong(perturbed):
    op = lichnerowicz(perturbed)
    rng = np.random.default_rng(18)
    x, y = perturbed.chart.axis_coordinate(0), perturbed.chart.axis_coordinate(1)

    def band_limited():
        f = np.zeros_like(x, dtype=complex)
        for _ in range(6):
            p, q = rng.integers(-5, 6, size=2)
            f += rng.standard_normal() * np.exp(2j * np.pi * (p * x + q * y))
        return f

    f, h = band_limited(), band_limited()
    a = op.pair(h, f)
    b = weak_pair(perturbed, h, f)
    assert abs(a - b) <= 1e-11 * max(abs(a), 1.0)


def test_conjugation_identity(perturbed):
    op = lichnerowicz(perturbed)
    rng = np.random.default_rng(19)
    shape = perturbed.chart.grid_shape
    u = rng.standard_normal(shape) + 1j * rng.standard_normal(shape)
    direct = op.apply_bar(u)
    assert np.max(np.abs(direct - np.conj(op.apply(np.conj(u))))) == 0.0


def test_poisson_relation_flat(flat):
    x = flat.chart.axis_coordinate(0)
    f = np.sin(2 * np.pi * x).astype(complex)
    out = poisson_relation_residual(flat, f)
    assert out["residual"] <= 1e-10


def test_poisson_relation_perturbed(perturbed):
    x, y = perturbed.chart.axis_coordinate(0), perturbed.chart.axis_coordinate(1)
    f = np.sin(2 * np.pi * x).astype(complex) + 0.5 * np.cos(2 * np.pi * (x + y))
    out = poisson_relation_residual(perturbed, f)
    assert out["residual"] <= 1e-5
    assert out["lhs_norm"] > 1.0  # nonzero content, not a trivial pass


def test_poisson_relation_refines():
    res = {}
    for n in (32, 64):
        geom = build_torus_geometry(parse(EPS_PHI), 1, n)
        x, y = geom.chart.axis_coordinate(0), geom.chart.axis_coordinate(1)
        f = np.sin(2 * np.pi * x).astype(complex) + np.cos(2 * np.pi * (3 * x - 2 * y))
        res[n] = poisson_relation_residual(geom, f)["residual"]
    assert res[64] < res[32]


def test_poisson_relation_cp1_weak(cp1):
    # invariant f against interior-supported probes; mu is constant so the
    # bracket side vanishes and the weak operator difference must too.
    f = jet_from_expr(parse("x1"), cp1.chart.nodes, 4)
    probes = [
        jet_from_expr(parse("(x1*(2-x1))^2"), cp1.chart.nodes, 4),
        jet_from_expr(parse("(x1*(2-x1))^2*(1-x1)"), cp1.chart.nodes, 4),
        jet_from_expr(parse("(x1*(2-x1))^3"), cp1.chart.nodes, 4),
    ]
    out = poisson_relation_residual(cp1, f, probes=probes)
    assert out["residual"] <= 1e-6


def test_jacobi_identity(perturbed):
    rng = np.random.default_rng(23)
    x, y = perturbed.chart.axis_coordinate(0), perturbed.chart.axis_coordinate(1)

    def tri():
        p, q = rng.integers(-2, 3, size=2)
        return np.cos(2 * np.pi * (p * x + q * y) + rng.uniform(0, 2 * np.pi)).astype(complex)

    f, g, h = tri(), tri(), tri()
    jac = (
        poisson_bracket(perturbed, f, poisson_bracket(perturbed, g, h))
        + poisson_bracket(perturbed, g, poisson_bracket(perturbed, h, f))
        + poisson_bracket(perturbed, h, poisson_bracket(perturbed, f, g))
    )
    scale = max(
        perturbed.l2_norm(poisson_bracket(perturbed, f, poisson_bracket(perturbed, g, h))),
        1.0,
    )
    assert perturbed.l2_norm(jac) <= 1e-9 * scale


def test_poisson_bracket_flat_value(flat):
    x, y = flat.chart.axis_coordinate(0), flat.chart.axis_coordinate(1)
    h = np.sin(2 * np.pi * x).astype(complex)
    f = np.sin(2 * np.pi * y).astype(complex)
    got = poisson_bracket(flat, h, f)
    # omega = 2 dx^dy halves the Hamiltonian fields relative to the unit form
    expected = -2 * np.pi**2 * np.cos(2 * np.pi * x) * np.cos(2 * np.pi * y)
    assert np.max(np.abs(got - expected)) <= 1e-10
    assert np.max(np.abs(poisson_bracket(flat, h, h))) <= 1e-12


def test_mu_variation_flat(flat):
    x = flat.chart.axis_coordinate(0)
    f = np.cos(2 * np.pi * x).astype(complex)
    out = mu_variation_residual(flat, f)
    assert out["residual"] <= 1e-6
    op = lichnerowicz(flat)
    lam = 4 * PI6
    got = op.apply_sum(f, smooth=True)
    assert np.max(np.abs(got - lam * f)) <= 1e-6 * lam
    const = np.ones_like(f)
    assert np.max(np.abs(op.apply_sum(const))) <= 1e-11


def test_mu_variation_perturbed(perturbed):
    y = perturbed.chart.axis_coordinate(1)
    f = np.sin(2 * np.pi * y).astype(complex)
    out = mu_variation_residual(perturbed, f)
    assert out["residual"] <= 1e-5


def test_hessian_flat(flat):
    x = flat.chart.axis_coordinate(0)
    f = np.cos(2 * np.pi * x).astype(complex)
    out = hessian_form(flat, f, f)
    assert abs(out["value"] - 16 * np.pi**12) <= 1e-8 * 16 * np.pi**12
    assert out["commutator"] <= 1e-10


def test_positivity_flat_equality(flat):
    rng = np.random.default_rng(29)
    x, y = flat.chart.axis_coordinate(0), flat.chart.axis_coordinate(1)
    f = sum(
        rng.standard_normal() * np.cos(2 * np.pi * (p * x + q * y))
        for p, q in ((1, 0), (2, 1), (0, 3))
    ).astype(complex)
    out = positivity_check(flat, f)
    assert abs(out["margin"]) <= 1e-10 * max(out["lhs"], 1.0)
    assert out["ricci_min_eig"] >= -1e-10


def test_positivity_cp1(cp1):
    rng = np.random.default_rng(31)
    for _ in range(3):
        a, b, c = (float(v) for v in rng.standard_normal(3))
        f = jet_from_expr(
            parse(f"{a!r}*x1+{b!r}*x1^2+{c!r}*x1^3"),
            cp1.chart.nodes, 4,
        )
        out = positivity_check(cp1, f)
        assert out["margin"] >= -1e-8 * max(out["lhs"], 1.0)
        assert out["ricci_min_eig"] > 0


def test_positivity_gate_skips_indefinite(perturbed):
    x = perturbed.chart.axis_coordinate(0)
    f = np.sin(2 * np.pi * x).astype(complex)
    assert ricci_min_eigenvalue(perturbed) < -1e-10
    with pytest.raises(RicciNotNonNegative):
        positivity_check(perturbed, f)


def test_kernel_constants_torus(flat):
    c = np.ones(flat.chart.grid_shape, dtype=complex)
    x, y = flat.chart.axis_coordinate(0), flat.chart.axis_coordinate(1)
    probes = [
        np.cos(2 * np.pi * x).astype(complex),
        np.sin(2 * np.pi * (x + y)).astype(complex),
        np.cos(2 * np.pi * (2 * x - y)).astype(complex),
    ]
    assert weak_kernel_residual(flat, c, probes) <= 1e-11


def test_kernel_cp1_action_coordinate(cp1):
    f = jet_from_expr(parse("x1"), cp1.chart.nodes, 4)
    probes = [
        jet_from_expr(parse("(x1*(2-x1))^2"), cp1.chart.nodes, 4),
        jet_from_expr(parse("(x1*(2-x1))^2*x1"), cp1.chart.nodes, 4),
        jet_from_expr(parse("(x1*(2-x1))^3"), cp1.chart.nodes, 4),
    ]
    assert weak_kernel_residual(cp1, f, probes) <= 1e-6


def test_nonconstant_rayleigh_positive():
    geom = build_torus_geometry(None, 1, 16)
    x, y = geom.chart.axis_coordinate(0), geom.chart.axis_coordinate(1)
    basis = []
    for p, q in [(1, 0), (0, 1), (1, 1), (1, -1), (2, 0), (0, 2), (2, 1), (1, 2), (2, 2), (2, -1)]:
        basis.append(np.cos(2 * np.pi * (p * x + q * y)).astype(complex))
        basis.append(np.sin(2 * np.pi * (p * x + q * y)).astype(complex))
    eigs = rayleigh_spectrum(geom, basis)
    assert len(basis) == 20
    assert eigs.min() > 0
    # the smallest trig mode sits at the first multiplier
    assert abs(eigs.min() - 2 * PI6) <= 1e-8 * PI6


def test_dense_assembly_flat_spectrum():
    geom = build_torus_geometry(None, 1, 16)
    eigs = dense_assembly(geom)
    # kernel: the constant plus the three Nyquist-killed modes of an even grid
    assert np.max(np.abs(eigs[:4])) <= 1e-9 * PI6
    expected_first = 2 * PI6  # fourfold (p,q) = (+-1,0),(0,+-1)
    assert np.max(np.abs(eigs[4:8] - expected_first)) <= 1e-10 * expected_first
