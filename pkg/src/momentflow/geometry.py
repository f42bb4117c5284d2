"""Kahler geometry states and the curvature pipeline.

Index conventions (single source of truth, mirrored in docs/conventions.md):

* Real coordinate indices run 0..2m-1. On the torus, z^a = x^a + i x^{m+a}
  and the complex structure is the constant standard one. On toric charts the
  coordinates are (action x^1..x^m, angle axes m..2m-1) and omega is the
  constant Darboux matrix omega[a, m+a] = +1.
* omega with upper indices means the matrix inverse: omega^{ij} := (omega^-1)_{ij},
  so raising a lowered slot is A^i = sum_j (omega^-1)_{ij} A_j applied via the
  defining equation of each object (see raise_deformation).
* The torus metric comes from a potential: h_{ab} = delta_{ab} + d^2 phi / dz^a dzbar^b,
  real metric g = 2[[I+A, B], [-B, I+A]] for h = I + A + iB, and omega = g J.
  The flat metric is therefore 2*Id and the flat Kahler form 2 dx^dy; this
  scale is what makes the sixth-order operator's flat spectrum equal
  2 pi^6 (p^2+q^2)^3 on unit-period coordinates.
* Curvature: R(X,Y)Z = nabla_X nabla_Y Z - nabla_Y nabla_X Z - nabla_[X,Y] Z,
  stored as riem[i, j, k, l] = component of R(e_k, e_l) e_j along e_i.
  Lowering by omega acts on the last slot: rlow[p,q,r,s] = omega(R(e_p,e_q)e_r, e_s).
* Ric(X, Y) = -tr(Z -> R(X, Z) Y), i.e. ric[p,q] = -riem[z,q,p,z].
* The geometric measure used for all functional pairings is nu = omega_m / 2^m
  (density sqrt(det g)/2^m against the chart measure); on the unit flat torus
  nu has total mass 1. Toric charts use the polytope Lebesgue measure (the
  constant angle-volume factor is dropped).
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .calculus import ToricCalc, TorusCalc
from .charts import ChartSpec, polytope_chart, torus_chart
from .errors import (
    ChartMismatch,
    DomainError,
    NonConvexPotential,
    NonPositiveMetric,
)
from .expr import Expr, evaluate, max_axis
from .jets import jet_const, jet_from_expr, jet_matrix_inverse, jet_mul, jet_truncate

__all__ = [
    "GeometryState", "SymplecticConnection", "Deformation",
    "build_torus_geometry", "build_toric_geometry",
    "curvature_from_connection", "ricci", "covariant_derivative",
    "split_gradient", "levi_civita", "raise_deformation",
    "perturbed_connection", "project_slots", "frame_vector",
]

TORIC_JET_ORDER = 6


@dataclass(frozen=True)
class SymplecticConnection:
    """Torsion-free connection with nabla(omega) = 0: Christoffels gamma[i,j,k]."""

    chart: ChartSpec
    gamma: np.ndarray


@dataclass(frozen=True)
class Deformation:
    """Lowered totally symmetric 3-tensor field, a tangent vector to the
    affine space of symplectic connections."""

    chart: ChartSpec
    data: np.ndarray


@dataclass(frozen=True)
class GeometryState:
    """One Kahler structure with every coefficient field the pipeline needs."""

    chart: ChartSpec
    calc: object
    calc_op: object
    kind: str
    m: int
    omega: np.ndarray
    omega_inv: np.ndarray
    J: np.ndarray
    g: np.ndarray
    g_inv: np.ndarray
    gamma: np.ndarray
    proj_h: np.ndarray
    proj_a: np.ndarray
    density: np.ndarray
    nu_weights: np.ndarray
    min_metric_eig: float
    potential: object = field(default=None, repr=False)

    @property
    def dim(self):
        return self.chart.dim

    @property
    def connection(self):
        return SymplecticConnection(self.chart, self.gamma)

    # -- measure-aware reductions ------------------------------------------

    def node_values(self, a, rank=0):
        """Flatten node axes and strip jet data, keeping slot axes."""
        v = self.calc.value(a) if self.kind == "toric" else a
        if self.kind == "torus":
            v = v.reshape(v.shape[: v.ndim - len(self.chart.grid_shape)] + (-1,))
        return v

    def integrate(self, scalar):
        """Integral against the geometric measure nu."""
        return complex(np.sum(self.node_values(scalar) * self.nu_weights))

    def mean(self, scalar):
        return self.integrate(scalar) / np.sum(self.nu_weights)

    def l2_inner(self, a, b, rank=0):
        """Hermitian pairing <a, b> with inverse-metric contraction per slot,
        conjugating the first argument, against nu."""
        av = self.node_values(a, rank)
        bv = self.node_values(b, rank)
        ginv = self.node_values(self.g_inv, 2)
        letters = "abcdefgh"[:rank]
        for s in range(rank):
            src = letters[:s] + "z" + letters[s + 1 :]
            bv = np.einsum(f"{letters[s]}zn,{src}n->{letters}n", ginv, bv)
        flat_a = av.reshape(-1, av.shape[-1])
        flat_b = bv.reshape(-1, bv.shape[-1])
        return complex(np.einsum("cn,cn,n->", np.conj(flat_a), flat_b, self.nu_weights))

    def l2_norm(self, a, rank=0):
        return float(np.sqrt(max(self.l2_inner(a, a, rank).real, 0.0)))


# ---------------------------------------------------------------------------
# Generic tensor calculus over a calc backend.

def levi_civita(calc, g, g_inv):
    dg = calc.stack_grad(g)  # dg[i, j, c] = d_c g_{ij}
    t1 = calc.lin("ljk->ljk", dg)
    t2 = calc.lin("lkj->ljk", dg)
    t3 = calc.lin("jkl->ljk", dg)
    return 0.5 * calc.mul("il,ljk->ijk", g_inv, calc.sub(calc.add(t1, t2), t3))


def curvature_riem(calc, gamma):
    """riem[i,j,k,l]: component along e_i of R(e_k, e_l) e_j."""
    dG = calc.stack_grad(gamma)  # dG[i, a, b, c] = d_c gamma^i_{ab}
    term1 = calc.lin("iljk->ijkl", dG)
    term2 = calc.lin("ikjl->ijkl", dG)
    gg1 = calc.mul("ika,alj->ijkl", gamma, gamma)
    gg2 = calc.mul("ila,akj->ijkl", gamma, gamma)
    return calc.add(calc.sub(term1, term2), calc.sub(gg1, gg2))


def lower_curvature(calc, riem, omega):
    """rlow[p,q,r,s] = omega(R(e_p, e_q) e_r, e_s)."""
    return calc.mul("is,irpq->pqrs", omega, riem)


def ricci_from_riem(calc, riem):
    """ric[p,q] = -tr(Z -> R(e_p, Z) e_q)."""
    return -calc.lin("zqpz->pq", riem)


def covariant_derivative(calc, T, variance, gamma, *, check=True):
    """nabla T with the new derivative slot appended last.

    variance: 'u'/'d' per existing slot. Scalar input: variance ''.
    """
    rank = len(variance)
    out = calc.stack_grad(T, check=check)
    letters = "abcdefgh"  # slot letters; y is the new derivative axis, z the dummy
    slots = letters[:rank]
    for s, v in enumerate(variance):
        tslots = slots[:s] + "z" + slots[s + 1 :]
        if v == "d":
            corr = calc.mul(f"zy{slots[s]},{tslots}->{slots}y", gamma, T)
            out = calc.sub(out, corr)
        else:
            corr = calc.mul(f"{slots[s]}yz,{tslots}->{slots}y", gamma, T)
            out = calc.add(out, corr)
    return out


def raise_deformation(calc, A, omega_inv):
    """S with lowered form A: solves S^l omega_{l t} = A_t on the last slot."""
    return calc.mul("ts,qut->squ", omega_inv, A)


def project_slots(calc, T, proj_h, proj_a, pattern):
    """Project lowered slots: 'h' holomorphic, 'a' antiholomorphic, 'r' none.

    Down-slot action of a projector P is (xi P)_j = xi_i P^i_j.
    """
    out = T
    n = len(pattern)
    letters = "abcdefgh"
    for s, p in enumerate(pattern):
        if p == "r":
            continue
        P = proj_h if p == "h" else proj_a
        slots = letters[:n]
        tslots = slots[:s] + "z" + slots[s + 1 :]
        out = calc.mul(f"z{slots[s]},{tslots}->{slots}", P, out)
    return out


# ---------------------------------------------------------------------------
# Spec-level operations.

def curvature_from_connection(geom: GeometryState, conn: SymplecticConnection):
    """Lowered curvature omega(R(e_p,e_q)e_r, e_s) of any symplectic connection."""
    if conn.chart != geom.chart:
        raise ChartMismatch("connection lives on a different chart")
    riem = curvature_riem(geom.calc, conn.gamma)
    return lower_curvature(geom.calc, riem, geom.omega)


def ricci(geom: GeometryState, conn: SymplecticConnection = None):
    conn = conn or geom.connection
    return ricci_from_riem(geom.calc, curvature_riem(geom.calc, conn.gamma))


def split_gradient(geom: GeometryState, f):
    """(X_f, grad' f, grad'' f) for real f: i(X_f) omega = df, X_f = -J grad f."""
    calc = geom.calc
    df = calc.stack_grad(f)
    X = calc.mul("ts,t->s", geom.omega_inv, df)
    grad = calc.mul("st,t->s", geom.g_inv, df)
    # up-slot projection: (P v)^i = P^i_j v^j
    grad_h = calc.mul("ij,j->i", geom.proj_h, grad)
    grad_a = calc.mul("ij,j->i", geom.proj_a, grad)
    return X, grad_h, grad_a


def perturbed_connection(geom: GeometryState, A: Deformation, t: float):
    """gamma + t * (omega-raised A); stays symplectic for symmetric A."""
    S = raise_deformation(geom.calc, A.data, geom.omega_inv)
    return SymplecticConnection(geom.chart, geom.calc.add(geom.gamma, t * S))


def poisson_bracket(geom: GeometryState, h, f):
    """{h, f} := X_h f, extended complex-linearly in both arguments.

    Resolution guards are left to the callers' entry points: brackets of
    brackets produce numerically tiny fields whose noise spectrum would trip
    the under-resolution check spuriously.
    """
    calc = geom.calc
    dh = calc.stack_grad(h, check=False)
    Xh = calc.mul("ts,t->s", geom.omega_inv, dh)
    df = calc.stack_grad(f, check=False)
    return calc.mul("s,s->", Xh, df)


def frame_vector(geom: GeometryState, alpha, kind="h"):
    """Torus coordinate-frame vector d/dz^alpha (or conjugate) as components."""
    if geom.kind != "torus":
        raise ChartMismatch("coordinate complex frames are a torus-backend notion")
    v = np.zeros(geom.dim, dtype=complex)
    sign = -1j if kind == "h" else 1j
    v[alpha] = 0.5
    v[geom.m + alpha] = 0.5 * sign
    return v


# ---------------------------------------------------------------------------
# Builders.

def build_torus_geometry(phi, m: int, n) -> GeometryState:
    """Kahler torus from a real potential on the unit periodic chart.

    phi is an expression in x1..x_{2m} or a nodal array on the grid. The
    Hermitian coefficients are h = I + (d^2 phi / dz dzbar); positivity of h
    at every node is required.
    """
    chart = n if isinstance(n, ChartSpec) else torus_chart(m, n)
    calc = TorusCalc(chart, denoise=True)
    d = 2 * m
    shape = chart.grid_shape

    if isinstance(phi, Expr):
        if max_axis(phi) >= d:
            raise DomainError(f"potential uses more than {d} coordinates")
        grids = np.meshgrid(*[np.arange(k) / k for k in shape], indexing="ij")
        phi_vals = np.asarray(evaluate(phi, grids), dtype=complex) * np.ones(shape)
    elif phi is None:
        phi_vals = np.zeros(shape, dtype=complex)
    else:
        phi_vals = np.asarray(phi, dtype=complex)
        if phi_vals.shape != shape:
            raise ChartMismatch(f"potential grid {phi_vals.shape} != chart {shape}")

    dd = np.empty((d, d) + shape, dtype=complex)
    dphi = [calc.deriv(phi_vals, i, check=False) for i in range(d)]
    for i in range(d):
        for j in range(i, d):
            dd[i, j] = calc.deriv(dphi[i], j, check=False)
            dd[j, i] = dd[i, j]

    delta = np.eye(m)
    A = 0.25 * (dd[:m, :m] + dd[m:, m:])
    B = 0.25 * (dd[:m, m:] - np.swapaxes(dd[:m, m:], 0, 1))
    h = delta.reshape((m, m) + (1,) * d) + A + 1j * B

    # resolution guard at the metric level: the flat part sets the scale, so a
    # vanishing potential does not trip the check while an under-resolved one
    # still does
    from .fields import NYQUIST_ENERGY_LIMIT, nyquist_fraction

    for axis in range(d):
        frac = nyquist_fraction(h, chart, axis)
        if frac > NYQUIST_ENERGY_LIMIT:
            raise NyquistError(
                f"potential under-resolved: metric top-frequency energy "
                f"fraction {frac:.3e} on axis {axis}"
            )

    h_nodes = np.moveaxis(h.reshape(m, m, -1), -1, 0)
    eigs = np.linalg.eigvalsh(h_nodes).real
    min_eig = float(eigs.min())
    if min_eig <= 0:
        worst = int(np.argmin(eigs.min(axis=1)))
        raise NonPositiveMetric(2 * min_eig, worst)

    g = np.zeros((d, d) + shape, dtype=complex)
    g[:m, :m] = 2 * (delta.reshape((m, m) + (1,) * d) + A)
    g[m:, m:] = g[:m, :m]
    g[:m, m:] = 2 * B
    g[m:, :m] = -2 * B

    omega = np.zeros((d, d) + shape, dtype=complex)
    omega[:m, m:] = g[:m, :m]
    omega[m:, :m] = -g[:m, :m]
    omega[:m, :m] = -2 * B
    omega[m:, m:] = -2 * B

    J = np.zeros((d, d), dtype=complex)
    J[:m, m:] = -np.eye(m)
    J[m:, :m] = np.eye(m)
    J = J.reshape((d, d) + (1,) * d) * np.ones(shape)

    g_inv = _batched_inverse(g, d)
    omega_inv = _batched_inverse(omega, d)
    gamma = levi_civita(calc, g, g_inv)

    eye = np.eye(d).reshape((d, d) + (1,) * d)
    proj_h = 0.5 * (eye - 1j * J)
    proj_a = 0.5 * (eye + 1j * J)

    det_g = _batched_det(g, d).real
    density = np.sqrt(det_g) / 2**m
    nu_weights = chart.weights * density.reshape(-1)

    return GeometryState(
        chart=chart, calc=calc, calc_op=TorusCalc(chart), kind="torus", m=m,
        omega=omega, omega_inv=omega_inv, J=J, g=g, g_inv=g_inv, gamma=gamma,
        proj_h=proj_h, proj_a=proj_a, density=density, nu_weights=nu_weights,
        min_metric_eig=2 * min_eig, potential=phi_vals,
    )


def build_toric_geometry(polytope, u: Expr, n, jet_order=TORIC_JET_ORDER) -> GeometryState:
    """Toric Kahler structure in action-angle coordinates from a symplectic
    potential u (Guillemin term plus smooth perturbation), strictly convex on
    the polytope interior. All coefficient derivatives are exact jets of u.
    """
    chart = polytope if isinstance(polytope, ChartSpec) else polytope_chart(polytope, n)
    mdim = chart.m
    d = chart.dim
    calc = ToricCalc(chart)

    u_jet = jet_from_expr(u, chart.nodes, jet_order)
    hess_order = jet_order - 2

    from .jets import jet_deriv

    du = [jet_deriv(u_jet, i, mdim) for i in range(mdim)]
    U = np.stack(
        [np.stack([jet_deriv(du[i], j, mdim) for j in range(mdim)], axis=0) for i in range(mdim)],
        axis=0,
    )

    U0 = np.moveaxis(U[..., 0].real, (0, 1), (-2, -1))
    eigs = np.linalg.eigvalsh(U0)
    min_eig = float(eigs.min())
    if min_eig <= 0:
        raise NonConvexPotential(
            f"Hess(u) min eigenvalue {min_eig:.6e} <= 0 on interior nodes"
        )

    W = jet_matrix_inverse(U, mdim)

    n_nodes = chart.n_nodes
    Jlen = U.shape[-1]
    g = np.zeros((d, d, n_nodes, Jlen), dtype=complex)
    g[:mdim, :mdim] = U
    g[mdim:, mdim:] = W
    g_inv = np.zeros_like(g)
    g_inv[:mdim, :mdim] = W
    g_inv[mdim:, mdim:] = U

    omega_mat = np.zeros((d, d))
    omega_mat[:mdim, mdim:] = np.eye(mdim)
    omega_mat[mdim:, :mdim] = -np.eye(mdim)
    omega = jet_const(omega_mat, mdim, hess_order)[:, :, None, :]
    omega_inv = jet_const(-omega_mat, mdim, hess_order)[:, :, None, :]

    Jf = np.zeros_like(g)
    Jf[:mdim, mdim:] = -W
    Jf[mdim:, :mdim] = U

    gamma = levi_civita(calc, g, g_inv)

    eye = jet_const(np.eye(d), mdim, hess_order)[:, :, None, :]
    proj_h = 0.5 * (eye - 1j * jet_truncate(Jf, mdim, hess_order))
    proj_a = 0.5 * (eye + 1j * jet_truncate(Jf, mdim, hess_order))

    density = np.ones(n_nodes)
    return GeometryState(
        chart=chart, calc=calc, calc_op=calc, kind="toric", m=mdim,
        omega=omega, omega_inv=omega_inv, J=Jf, g=g, g_inv=g_inv, gamma=gamma,
        proj_h=proj_h, proj_a=proj_a, density=density,
        nu_weights=chart.weights.copy(), min_metric_eig=min_eig, potential=u,
    )


# ---------------------------------------------------------------------------

def _batched_inverse(a, d):
    moved = np.moveaxis(a.reshape((d, d, -1)), -1, 0)
    inv = np.linalg.inv(moved)
    return np.moveaxis(inv, 0, -1).reshape(a.shape)


def _batched_det(a, d):
    moved = np.moveaxis(a.reshape((d, d, -1)), -1, 0)
    return np.linalg.det(moved).reshape(a.shape[2:])
