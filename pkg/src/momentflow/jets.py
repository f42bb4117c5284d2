"""Truncated jets of torus-invariant fields on polytope charts.

A jet array stores the values of all mixed partial derivatives up to some
order at every node: shape (..., n_nodes, n_comps) with the trailing axis
enumerating multi-indices sorted by (degree, lex). Components are derivative
values (not Taylor coefficients), so products follow the Leibniz rule with
binomial weights and differentiation is an index shift. Every jet is seeded
from exact expression derivatives, which is what makes sixth-order curvature
quantities evaluable next to the log-singular polytope boundary.
"""

from __future__ import annotations

from functools import lru_cache
from math import comb

import numpy as np

from .errors import PolytopeDifferentiationForbidden

__all__ = [
    "multi_indices", "jet_length", "order_from_length", "jet_mul",
    "jet_deriv", "jet_const", "jet_truncate", "jet_from_expr",
    "jet_matrix_inverse",
]


@lru_cache(maxsize=None)
def multi_indices(m: int, order: int):
    """Multi-indices over m variables with degree <= order, (degree, lex) sorted."""
    out = []
    for deg in range(order + 1):
        out.extend(_fixed_degree(m, deg))
    return tuple(out)


def _fixed_degree(m, deg):
    if m == 1:
        return [(deg,)]
    res = []
    for first in range(deg + 1):
        for rest in _fixed_degree(m - 1, deg - first):
            res.append((first,) + rest)
    return sorted(res)


def jet_length(m: int, order: int) -> int:
    return comb(order + m, m)


@lru_cache(maxsize=None)
def order_from_length(m: int, length: int) -> int:
    order = 0
    while jet_length(m, order) < length:
        order += 1
    if jet_length(m, order) != length:
        raise ValueError(f"{length} is not a jet length for {m} variables")
    return order


@lru_cache(maxsize=None)
def _index_positions(m, order):
    return {alpha: i for i, alpha in enumerate(multi_indices(m, order))}


@lru_cache(maxsize=None)
def _leibniz_table(m, ka, kb):
    """(gamma_pos, alpha_pos, beta_pos, coeff) rows for orders (ka, kb) -> min."""
    kout = min(ka, kb)
    pos_a = _index_positions(m, ka)
    pos_b = _index_positions(m, kb)
    rows = []
    for gi, gamma in enumerate(multi_indices(m, kout)):
        for alpha in multi_indices(m, sum(gamma)):
            if any(a > g for a, g in zip(alpha, gamma)):
                continue
            beta = tuple(g - a for g, a in zip(gamma, alpha))
            coeff = 1.0
            for g, a in zip(gamma, alpha):
                coeff *= comb(g, a)
            rows.append((gi, pos_a[alpha], pos_b[beta], coeff))
    return tuple(rows)


def jet_mul(spec: str, a: np.ndarray, b: np.ndarray, m: int) -> np.ndarray:
    """Leibniz product with an einsum contraction over slot axes.

    spec is written over slot letters only ('ij,j->i'); node axes are handled
    by a trailing ellipsis per component.
    """
    ka = order_from_length(m, a.shape[-1])
    kb = order_from_length(m, b.shape[-1])
    sa, rest = spec.split(",")
    sb, so = rest.split("->")
    pattern = f"{sa}...,{sb}...->{so}..."
    kout = min(ka, kb)

    sample = np.einsum(pattern, a[..., 0], b[..., 0])
    out = np.zeros(sample.shape + (jet_length(m, kout),), dtype=np.complex128)
    for gi, ai, bi, coeff in _leibniz_table(m, ka, kb):
        term = np.einsum(pattern, a[..., ai], b[..., bi])
        if coeff != 1.0:
            term = term * coeff
        out[..., gi] += term
    return out


def jet_deriv(a: np.ndarray, axis: int, m: int) -> np.ndarray:
    """d/dx_axis as an index shift; output order drops by one."""
    k = order_from_length(m, a.shape[-1])
    if k == 0:
        raise PolytopeDifferentiationForbidden(
            "field's exact derivative data is exhausted"
        )
    pos_in = _index_positions(m, k)
    idx = multi_indices(m, k - 1)
    out = np.empty(a.shape[:-1] + (len(idx),), dtype=a.dtype)
    for i, alpha in enumerate(idx):
        shifted = tuple(v + (1 if j == axis else 0) for j, v in enumerate(alpha))
        out[..., i] = a[..., pos_in[shifted]]
    return out


def jet_const(values: np.ndarray, m: int, order: int) -> np.ndarray:
    """Lift x-independent values to a jet (all higher components zero)."""
    out = np.zeros(np.shape(values) + (jet_length(m, order),), dtype=np.complex128)
    out[..., 0] = values
    return out


def jet_truncate(a: np.ndarray, m: int, order: int) -> np.ndarray:
    k = order_from_length(m, a.shape[-1])
    if order > k:
        raise ValueError(f"cannot raise jet order {k} to {order}")
    return a[..., : jet_length(m, order)]


def jet_from_expr(e, nodes: np.ndarray, order: int) -> np.ndarray:
    """Exact jet of an expression at polytope nodes: shape (n_nodes, n_comps)."""
    from .expr import derive_multi, evaluate

    m = nodes.shape[1]
    idx = multi_indices(m, order)
    out = np.empty((nodes.shape[0], len(idx)), dtype=np.complex128)
    point = [nodes[:, j] for j in range(m)]
    for i, alpha in enumerate(idx):
        out[:, i] = np.broadcast_to(evaluate(derive_multi(e, alpha), point), nodes.shape[0:1])
    return out


def jet_matrix_inverse(A: np.ndarray, m: int) -> np.ndarray:
    """Inverse of a (d, d, nodes, J) matrix with jet entries.

    Writes A = A0 + dA with dA carrying no value part; dA is then nilpotent
    in the truncated jet ring, so the Neumann series terminates at the jet
    order and the result is exact there.
    """
    k = order_from_length(m, A.shape[-1])
    A0 = A[..., 0]
    B0 = np.linalg.inv(np.moveaxis(A0, (0, 1), (-2, -1)))
    B0 = jet_const(np.moveaxis(B0, (-2, -1), (0, 1)), m, k)
    dA = A.copy()
    dA[..., 0] = 0.0
    X = jet_mul("ij,jk->ik", B0, dA, m)  # zero value part
    acc = B0
    term = B0
    for _ in range(k):
        term = -jet_mul("ij,jk->ik", X, term, m)
        acc = acc + term
    return acc
