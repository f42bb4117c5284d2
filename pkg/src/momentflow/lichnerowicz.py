"""Sixth-order operator layer.

The operator L is never hand-derived in strong form: it is the composition
3 D1* D1 - D2* D2, where D1/D2 are the projected third covariant derivatives
and the adjoints are exact discrete adjoints assembled map-by-map. Discrete
self-adjointness is therefore structural. The conjugated companion is
Lbar u := conj(L(conj u)).

On polytope charts only the weak pairing <h, L f> = 3<D1 h, D1 f> - <D2 h, D2 f>
is available (no discrete integration by parts next to the boundary); the
strong operator is a periodic-chart object.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import ChartMismatch, RicciNotNonNegative
from .geometry import (
    GeometryState,
    covariant_derivative,
    poisson_bracket,
    project_slots,
    ricci,
    split_gradient,
)
from .linops import LinearOperatorHandle, compose_adjoint

__all__ = [
    "SixthOrderOperator", "d1", "d2", "lichnerowicz", "poisson_bracket",
    "poisson_relation_residual", "mu_variation_residual", "hessian_form",
    "positivity_check", "weak_kernel_residual", "ricci_min_eigenvalue",
    "dense_assembly", "rayleigh_spectrum",
]


# ---------------------------------------------------------------------------
# D1 / D2 as fields (both backends).

def third_covariant(geom: GeometryState, f, *, operator_path=False):
    calc = geom.calc_op if operator_path else geom.calc
    t1 = covariant_derivative(calc, f, "", geom.gamma)
    t2 = covariant_derivative(calc, t1, "d", geom.gamma)
    return covariant_derivative(calc, t2, "dd", geom.gamma)


def d1(geom: GeometryState, f):
    """Projected third covariant derivative with one holomorphic slot: the
    innermost two derivatives antiholomorphic, the outer one holomorphic."""
    t3 = third_covariant(geom, f)
    return project_slots(geom.calc, t3, geom.proj_h, geom.proj_a, "aah")


def d2(geom: GeometryState, f):
    """All-antiholomorphic projected third covariant derivative."""
    t3 = third_covariant(geom, f)
    return project_slots(geom.calc, t3, geom.proj_h, geom.proj_a, "aaa")


def weak_pair(geom: GeometryState, h, f):
    """<h, L f> evaluated weakly: 3 <D1 h, D1 f> - <D2 h, D2 f> in the
    geometric pairing. Available on both backends."""
    return 3 * geom.l2_inner(d1(geom, h), d1(geom, f), 3) - geom.l2_inner(
        d2(geom, h), d2(geom, f), 3
    )


# ---------------------------------------------------------------------------
# Matrix-free strong operator on periodic charts.

def _cov_handle(geom: GeometryState, rank: int, calc=None) -> LinearOperatorHandle:
    """nabla on all-lowered rank-r fields with its exact plain adjoint.

    Forward: out[slots, y] = d_y x[slots] - sum_s Gamma^z_{y s} x[..z at s..].
    Adjoint: -sum_y d_y Y[slots, y] - sum_s conj(Gamma)[z, y, s] Y[..s.., y].
    """
    calc = calc or geom.calc_op
    gamma = geom.gamma
    gamma_c = np.conj(gamma)
    slots = "abcdefgh"[:rank]

    def apply(x):
        return covariant_derivative(calc, x, "d" * rank, gamma, check=False)

    def adjoint(y):
        total = None
        for c in range(geom.dim):
            sl = (slice(None),) * rank + (c,)
            term = -calc.deriv(y[sl], c, check=False)
            total = term if total is None else total + term
        for s in range(rank):
            tslots = slots[:s] + "z" + slots[s + 1 :]
            corr = calc.mul(f"zy{slots[s]},{slots}y->{tslots}", gamma_c, y)
            total = total - corr
        return total

    return LinearOperatorHandle(apply, adjoint, (geom.chart, rank), (geom.chart, rank + 1))


def _proj_handle(geom: GeometryState, pattern: str, calc=None) -> LinearOperatorHandle:
    calc = calc or geom.calc_op
    rank = len(pattern)
    ph, pa = geom.proj_h, geom.proj_a
    ph_c, pa_c = np.conj(ph), np.conj(pa)
    letters = "abcdefgh"[:rank]

    def apply(x):
        return project_slots(calc, x, ph, pa, pattern)

    def adjoint(y):
        out = y
        for s, p in enumerate(pattern):
            if p == "r":
                continue
            P = ph_c if p == "h" else pa_c
            tslots = letters[:s] + "z" + letters[s + 1 :]
            out = calc.mul(f"z{letters[s]},{letters}->{tslots}", P, out)
        return out

    sig = (geom.chart, rank)
    return LinearOperatorHandle(apply, adjoint, sig, sig)


@dataclass(frozen=True)
class SixthOrderOperator:
    """Strong sixth-order operator pair (L, Lbar) on a periodic chart.

    apply/apply_bar act on scalar grid fields; self-adjointness in the
    geometric pairing holds by construction of the adjoint chain. smooth=True
    routes through mode-floor-filtered derivatives: iterated sixth-order
    chains amplify the float noise floor by k^5, so diagnostics on analytic
    fields (commutators, identity residuals) need the filtered path, while
    adjoint-exactness statements need the unfiltered one.
    """

    geom: GeometryState
    _d1: LinearOperatorHandle
    _d2: LinearOperatorHandle
    _d1s: LinearOperatorHandle
    _d2s: LinearOperatorHandle

    def _gram3(self, y):
        g = self.geom
        ginv = g.g_inv
        out = y
        letters = "abc"
        for s in range(3):
            tslots = letters[:s] + "z" + letters[s + 1 :]
            out = g.calc_op.mul(f"{letters[s]}z,{tslots}->{letters}", ginv, out)
        return out * g.density

    def apply(self, f, smooth=False):
        g = self.geom
        h1 = self._d1s if smooth else self._d1
        h2 = self._d2s if smooth else self._d2
        y1 = h1.apply(f)
        y2 = h2.apply(f)
        out = 3 * h1.adjoint_apply(self._gram3(y1)) - h2.adjoint_apply(self._gram3(y2))
        return out / g.density

    def apply_bar(self, f, smooth=False):
        return np.conj(self.apply(np.conj(f), smooth=smooth))

    def apply_sum(self, f, smooth=False):
        """(L + Lbar) f."""
        return self.apply(f, smooth=smooth) + self.apply_bar(f, smooth=smooth)

    def pair(self, h, f):
        """<h, L f> in the geometric pairing (equals the weak form exactly)."""
        return self.geom.l2_inner(h, self.apply(f), 0)


def lichnerowicz(geom: GeometryState) -> SixthOrderOperator:
    if geom.kind != "torus":
        raise ChartMismatch(
            "the strong operator needs a periodic chart; use weak_pair on "
            "polytope charts"
        )

    def chain(calc, pattern):
        c0 = _cov_handle(geom, 0, calc)
        c1 = _cov_handle(geom, 1, calc)
        c2 = _cov_handle(geom, 2, calc)
        return compose_adjoint([c0, c1, c2, _proj_handle(geom, pattern, calc)])

    return SixthOrderOperator(
        geom,
        chain(geom.calc_op, "aah"),
        chain(geom.calc_op, "aaa"),
        chain(geom.calc, "aah"),
        chain(geom.calc, "aaa"),
    )


# ---------------------------------------------------------------------------
# Identity residuals and checks.

def poisson_relation_residual(geom: GeometryState, f, probes=None):
    """Relative residual of (Lbar - L) f = +i {f, mu} (orientation pinned by
    the flat-torus and perturbed-torus oracles under the conventions ledger).

    Periodic charts compare strongly in the geometric L2 norm; polytope
    charts compare weakly against interior probes.
    """
    from .moment import mu

    m = mu(geom)
    bracket = 1j * poisson_bracket(geom, f, m)
    if geom.kind == "torus":
        op = lichnerowicz(geom)
        lf = op.apply(f, smooth=True)
        lbf = op.apply_bar(f, smooth=True)
        lhs = lbf - lf
        scale = max(
            geom.l2_norm(lf), geom.l2_norm(lbf), geom.l2_norm(bracket), 1e-300
        )
        res = geom.l2_norm(lhs - bracket) / scale
        return {"residual": res, "lhs_norm": geom.l2_norm(lhs),
                "rhs_norm": geom.l2_norm(bracket)}
    if probes is None:
        raise ChartMismatch("polytope charts need interior probes")
    worst = 0.0
    scale = 0.0
    for h in probes:
        lhs = np.conj(weak_pair(geom, np.conj(h), np.conj(f))) - weak_pair(geom, h, f)
        rhs = geom.l2_inner(h, bracket, 0)
        hn = geom.l2_norm(h)
        scale = max(scale, abs(weak_pair(geom, h, h)) / max(hn**2, 1e-300))
        worst = max(worst, abs(lhs - rhs) / max(hn, 1e-300))
    fnorm = geom.l2_norm(f)
    return {"residual": worst / max(scale * fnorm, 1e-300)}


def mu_variation_residual(geom: GeometryState, f, h_step=3e-4):
    """Residual of the first variation of mu along the complex-structure
    direction generated by f, evaluated in the potential picture.

    The curve moves the potential at rate 2f; pulling the fixed-form picture
    back along the flow of the paired vector field leaves the transport term
    -(J X_f) mu. The variation must equal (L + Lbar) f.
    """
    from .errors import StepTooLarge
    from .geometry import build_torus_geometry
    from .moment import mu

    if geom.kind != "torus":
        raise ChartMismatch("the variation check runs on the periodic backend")
    calc = geom.calc
    op = lichnerowicz(geom)
    rhs = op.apply_sum(f, smooth=True)

    def mu_at(t):
        g_t = build_torus_geometry(geom.potential + 2 * t * f, geom.m, geom.chart)
        return mu(g_t)

    def central(h):
        return (mu_at(h) - mu_at(-h)) / (2 * h)

    dmu1 = central(h_step)
    dmu2 = central(h_step / 2)
    fd = (4 * dmu2 - dmu1) / 3

    m0 = mu(geom)
    X, _, _ = split_gradient(geom, f)
    JX = calc.mul("ij,j->i", geom.J, X)
    transport = calc.mul("s,s->", JX, calc.stack_grad(m0))

    lhs = fd - transport
    scale = max(geom.l2_norm(rhs), 1e-300)
    spread = geom.l2_norm(dmu1 - dmu2)
    if spread > 0.1 * scale:
        raise StepTooLarge(
            f"variation step {h_step:g}: h and h/2 estimates differ by "
            f"{spread:.3e} against scale {scale:.3e}"
        )
    return {
        "residual": geom.l2_norm(lhs - rhs) / scale,
        "fd_spread": spread,
        "rhs_norm": scale,
    }


def hessian_form(geom: GeometryState, f, h):
    """8 Re <f, L Lbar h> with the relative commutator diagnostic
    |(L Lbar - Lbar L) h| / |L Lbar h| (vanishing at critical geometries)."""
    op = lichnerowicz(geom)
    llbar_h = op.apply(op.apply_bar(h, smooth=True), smooth=True)
    lbarl_h = op.apply_bar(op.apply(h, smooth=True), smooth=True)
    value = 8 * geom.l2_inner(f, llbar_h, 0).real
    comm = geom.l2_norm(llbar_h - lbarl_h) / max(geom.l2_norm(llbar_h), 1e-300)
    return {"value": value, "commutator": comm}


def ricci_min_eigenvalue(geom: GeometryState) -> float:
    """Smallest eigenvalue of Ricci against the metric over all nodes."""
    ric = geom.node_values(ricci(geom), 2).real
    gv = geom.node_values(geom.g, 2).real
    d = geom.dim
    ric_n = np.moveaxis(ric.reshape(d, d, -1), -1, 0)
    g_n = np.moveaxis(gv.reshape(d, d, -1), -1, 0)
    chol = np.linalg.cholesky(g_n)
    inv_chol = np.linalg.inv(chol)
    sym = inv_chol @ ric_n @ np.swapaxes(inv_chol, -1, -2)
    sym = 0.5 * (sym + np.swapaxes(sym, -1, -2))
    return float(np.linalg.eigvalsh(sym).min())


def positivity_check(geom: GeometryState, f, gate_tol=1e-10):
    """(f, L f) >= 2 |D1 f|^2 when Ricci is non-negative.

    Returns lhs, rhs, and the margin; raises RicciNotNonNegative (check
    skipped, recorded by callers) when the curvature gate fails.
    """
    min_eig = ricci_min_eigenvalue(geom)
    if min_eig < -gate_tol:
        raise RicciNotNonNegative(min_eig)
    n1 = geom.l2_inner(d1(geom, f), d1(geom, f), 3).real
    n2 = geom.l2_inner(d2(geom, f), d2(geom, f), 3).real
    lhs = 3 * n1 - n2
    rhs = 2 * n1
    return {"lhs": lhs, "rhs": rhs, "margin": lhs - rhs, "ricci_min_eig": min_eig}


def weak_kernel_residual(geom: GeometryState, f, probes):
    """max over probes h of |<h, L f>| / (|h| scale), the weak statement that
    f lies in the kernel. scale is a Rayleigh magnitude of the operator on
    the probe family times |f|."""
    fnorm = geom.l2_norm(f)
    lam = 1e-300
    worst = 0.0
    for h in probes:
        hn = geom.l2_norm(h)
        lam = max(lam, abs(weak_pair(geom, h, h).real) / max(hn**2, 1e-300))
        worst = max(worst, abs(weak_pair(geom, h, f)) / max(hn, 1e-300))
    return worst / max(lam * fnorm, 1e-300)


# ---------------------------------------------------------------------------
# Spectral probes.

def dense_assembly(geom: GeometryState, max_nodes=256):
    """Dense matrix of L in the geometric inner product at coarse resolution,
    symmetrized through the measure weights; returns sorted eigenvalues."""
    if geom.kind != "torus":
        raise ChartMismatch("dense assembly is a periodic-chart probe")
    n_nodes = geom.chart.n_nodes
    if n_nodes > max_nodes:
        raise ChartMismatch(
            f"dense assembly capped at {max_nodes} nodes, chart has {n_nodes}"
        )
    op = lichnerowicz(geom)
    shape = geom.chart.grid_shape
    cols = []
    for k in range(n_nodes):
        e = np.zeros(n_nodes, dtype=complex)
        e[k] = 1.0
        cols.append(op.apply(e.reshape(shape)).reshape(-1))
    L = np.stack(cols, axis=1)
    w = geom.nu_weights
    s = np.sqrt(w)
    sym = (s[:, None] * L) / s[None, :]
    sym = 0.5 * (sym + sym.conj().T)
    return np.linalg.eigvalsh(sym)


def rayleigh_spectrum(geom: GeometryState, basis):
    """Generalized Rayleigh eigenvalues of the weak form on a finite family."""
    n = len(basis)
    B = np.empty((n, n), dtype=complex)
    M = np.empty((n, n), dtype=complex)
    for i, hi in enumerate(basis):
        for j, fj in enumerate(basis):
            B[i, j] = weak_pair(geom, hi, fj)
            M[i, j] = geom.l2_inner(hi, fj, 0)
    B = 0.5 * (B + B.conj().T)
    M = 0.5 * (M + M.conj().T)
    chol = np.linalg.cholesky(M)
    inv = np.linalg.inv(chol)
    return np.linalg.eigvalsh(inv @ B @ inv.conj().T)
