"""The moment map of symplectic connections and its verification suite.

All raising here is by the inverse symplectic matrix, all pairings and
integrals by the geometric measure nu of the GeometryState. The three routes
to the connection's Lie derivative (the curvature-plus-second-derivative
formula, the eight-block third-covariant-derivative assembly, and the metric
variation chain) are kept fully independent so their agreement is evidence,
not construction.
"""

from __future__ import annotations

import numpy as np

from .errors import StepTooLarge
from .geometry import (
    Deformation,
    GeometryState,
    covariant_derivative,
    curvature_riem,
    levi_civita,
    lower_curvature,
    perturbed_connection,
    poisson_bracket,
    project_slots,
    ricci_from_riem,
    split_gradient,
)

__all__ = [
    "mu", "mu_parts", "omega_E_pairing", "lie_derivative_connection",
    "lie_derivative_connection_kahler", "metric_variation",
    "connection_variation", "moment_identity_residual",
    "equivariance_residual", "futaki",
]


def _raise_all(calc, T, omega_inv, rank):
    """Raise every lowered slot: up[p...] = sum_a (omega^-1)[p, a] low[a...]."""
    letters = "abcdefgh"[:rank]
    out = T
    for s in range(rank):
        src = letters[:s] + "z" + letters[s + 1 :]
        out = calc.mul(f"{letters[s]}z,{src}->{letters}", omega_inv, out)
    return out


def mu_parts(geom: GeometryState, conn=None):
    """The three summands of the moment-map scalar, kept separate so the
    divergence term's vanishing integral can be reported."""
    conn = conn or geom.connection
    calc = geom.calc
    riem = curvature_riem(calc, conn.gamma)
    rlow = lower_curvature(calc, riem, geom.omega)
    ric = ricci_from_riem(calc, riem)
    ric_up = _raise_all(calc, ric, geom.omega_inv, 2)

    c1 = covariant_derivative(calc, ric_up, "uu", conn.gamma)
    c2 = covariant_derivative(calc, c1, "uud", conn.gamma)
    term_div = calc.lin("pqqp->", c2)

    term_ric = calc.mul("pq,pq->", ric, ric_up)
    r_up = _raise_all(calc, rlow, geom.omega_inv, 4)
    term_riem = calc.mul("pqrs,pqrs->", rlow, r_up)
    return term_div, term_ric, term_riem


def mu(geom: GeometryState, conn=None):
    """Moment-map scalar of a symplectic connection.

    mu = nabla_p nabla_q Ric^{pq} - 1/2 Ric_{pq} Ric^{pq}
         + 1/4 R_{pqrs} R^{pqrs},
    with curvature lowered by omega on the last slot and all raising by the
    inverse of omega. Depends only on (Christoffels, omega), so perturbed
    non-Levi-Civita connections go through the same path.
    """
    term_div, term_ric, term_riem = mu_parts(geom, conn)
    calc = geom.calc
    return calc.add(calc.sub(term_div, 0.5 * term_ric), 0.25 * term_riem)


def omega_E_pairing(geom: GeometryState, A: Deformation, B: Deformation) -> float:
    """Natural symplectic pairing of two connection deformations."""
    calc = geom.calc
    b_up = _raise_all(calc, B.data, geom.omega_inv, 3)
    integrand = calc.mul("abc,abc->", A.data, b_up)
    return geom.integrate(integrand).real


def lie_derivative_connection(geom: GeometryState, f) -> Deformation:
    """Lowered Lie derivative of the connection along the Hamiltonian field of f,
    via the curvature term plus the second covariant derivative of X_f.
    Total symmetry of the result is a theorem about Kahler input, and is
    checked by callers, never imposed.
    """
    calc = geom.calc
    X, _, _ = split_gradient(geom, f)
    riem = curvature_riem(calc, geom.gamma)
    rlow = lower_curvature(calc, riem, geom.omega)
    term1 = calc.mul("s,squt->qut", X, rlow)

    v1 = covariant_derivative(calc, X, "u", geom.gamma)  # [s, u] = nabla_u X^s
    v2 = covariant_derivative(calc, v1, "ud", geom.gamma)  # [s, u, q] = nabla_q nabla_u X^s
    term2 = calc.mul("suq,st->qut", v2, geom.omega)
    return Deformation(geom.chart, calc.add(term1, term2))


def _third_covariant(geom: GeometryState, f):
    calc = geom.calc
    t1 = covariant_derivative(calc, f, "", geom.gamma)
    t2 = covariant_derivative(calc, t1, "d", geom.gamma)
    return covariant_derivative(calc, t2, "dd", geom.gamma)  # [a,b,c] = nabla_c nabla_b nabla_a f


def lie_derivative_connection_kahler(geom: GeometryState, f) -> Deformation:
    """Same tensor assembled from the eight pure-type blocks of the third
    covariant derivative, with the minority-type index differentiated last.
    """
    calc = geom.calc
    t3 = _third_covariant(geom, f)
    total = None
    for pattern in ("hhh", "aaa", "hha", "aah", "hah", "aha", "ahh", "haa"):
        counts = pattern.count("h")
        if counts in (0, 3):
            arranged = t3
        else:
            minority = "a" if counts == 2 else "h"
            mino = pattern.index(minority)
            maj = [s for s in range(3) if s != mino]
            out_letters = ["", "", ""]
            out_letters[maj[0]] = "a"
            out_letters[maj[1]] = "b"
            out_letters[mino] = "c"
            arranged = calc.lin(f"abc->{''.join(out_letters)}", t3)
        block = project_slots(calc, arranged, geom.proj_h, geom.proj_a, pattern)
        total = block if total is None else calc.add(total, block)
    return Deformation(geom.chart, total)


def metric_variation(geom: GeometryState, f):
    """gdot = omega . Jdot along the symplectomorphism action generated by
    X_f (Jdot = -L_{X_f} J). Symmetric, with vanishing mixed-type blocks."""
    calc = geom.calc
    X, _, _ = split_gradient(geom, f)
    dJ = calc.stack_grad(geom.J)
    dX = calc.stack_grad(X)
    lie_J = calc.sub(
        calc.add(calc.mul("a,ija->ij", X, dJ), calc.mul("ia,aj->ij", geom.J, dX)),
        calc.mul("ia,aj->ij", dX, geom.J),
    )
    return calc.mul("ik,kj->ij", geom.omega, -lie_J)


def connection_variation(geom: GeometryState, f) -> Deformation:
    """Variation of the Levi-Civita connection along the symplectomorphism
    action generated by X_f: the Christoffel variation of gdot, lowered by
    omega on the last slot. Equal to minus the eight-block assembly.
    """
    calc = geom.calc
    g_dot = metric_variation(geom, f)

    c = covariant_derivative(calc, g_dot, "dd", geom.gamma)  # [l, j, k] = nabla_k gdot_{lj}
    t1 = calc.lin("ljk->ljk", c)
    t2 = calc.lin("lkj->ljk", c)
    t3 = calc.lin("jkl->ljk", c)
    gamma_dot = 0.5 * calc.mul(
        "il,ljk->ijk", geom.g_inv, calc.sub(calc.add(t1, t2), t3)
    )
    lowered = calc.mul("squ,st->qut", gamma_dot, geom.omega)
    return Deformation(geom.chart, lowered)


def moment_identity_residual(geom: GeometryState, f, A: Deformation, h_step=1e-3):
    """Residual of the defining identity of the moment map.

    Left side: Richardson-extrapolated central difference of
    t -> integral of mu(connection + t A) f; right side: the pairing of the
    connection's Lie derivative with A. Returns a dict with the relative
    residual and finite-difference diagnostics. Raises StepTooLarge when the
    h and h/2 estimates disagree at the scale of the answer itself.
    """
    calc = geom.calc

    def pairing(t):
        m_t = mu(geom, perturbed_connection(geom, A, t))
        return geom.integrate(calc.mul(",->", m_t, f)).real

    def central(h):
        return (pairing(h) - pairing(-h)) / (2 * h)

    d1 = central(h_step)
    d2 = central(h_step / 2)
    richardson = (4 * d2 - d1) / 3
    rhs = omega_E_pairing(geom, lie_derivative_connection(geom, f), A)
    residual = abs(richardson - rhs) / (abs(rhs) + 1.0)
    if abs(d1 - d2) > 0.1 * (abs(rhs) + 1.0):
        raise StepTooLarge(
            f"finite-difference step {h_step:g}: estimates {d1:.6e} and {d2:.6e} "
            "disagree at the scale of the pairing"
        )
    return {
        "lhs": richardson,
        "rhs": rhs,
        "residual": residual,
        "fd_spread": abs(d1 - d2),
    }


def equivariance_residual(geom: GeometryState, h, f):
    """Residual of the pairing identity between two Hamiltonian directions:
    Omega^E(L_{X_h}nabla, L_{X_f}nabla) against +integral {h,f} mu.

    The orientation is pinned by the moment-map identity's + sign under the
    conventions ledger; the opposite sign corresponds to running the
    equivariance flow backwards.
    """
    dh = lie_derivative_connection(geom, h)
    df = lie_derivative_connection(geom, f)
    lhs = omega_E_pairing(geom, dh, df)
    bracket = poisson_bracket(geom, h, f)
    rhs = geom.integrate(geom.calc.mul(",->", bracket, mu(geom))).real
    scale = max(
        abs(lhs),
        abs(rhs),
        geom.l2_norm(dh.data, 3) * geom.l2_norm(df.data, 3),
        1e-300,
    )
    return {"lhs": lhs, "rhs": rhs, "residual": abs(lhs - rhs) / scale}


def futaki(geom: GeometryState, f) -> float:
    """Pairing of the moment map against a mean-normalized potential.

    Independent of the compatible complex structure when f generates a
    holomorphic vector field; that invariance is a claim under test, so this
    computes the plain pairing for any f.
    """
    calc = geom.calc
    mean = geom.mean(f)
    m_field = mu(geom)
    value = geom.integrate(calc.mul(",->", m_field, f)) - mean * geom.integrate(m_field)
    return value.real
