"""Matrix-free linear operators with compositionally constructed adjoints.

Adjoints are taken against the plain chart pairing sum(conj(a)*b*w) over all
slots and nodes (fields.frobenius_product). Every elementary map carries its
exact discrete adjoint, and compositions reverse the adjoint chain, so the
adjoint identity holds to roundoff by construction. Geometry-weighted
(measure and metric) self-adjoint operators are built on top of these by
sandwiching with pointwise Gram factors.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .charts import ChartSpec
from .errors import SignatureMismatch
from .fields import frobenius_product, spectral_derivative

__all__ = [
    "LinearOperatorHandle", "compose_adjoint", "derivative_op",
    "multiply_op", "contract_op", "adjoint_probe",
]


@dataclass(frozen=True)
class LinearOperatorHandle:
    """Matrix-free linear map between tensor-field spaces.

    apply / adjoint_apply act on raw arrays (slot axes first, node axes
    last). dom/cod are (chart, rank) signatures.
    """

    apply: callable
    adjoint_apply: callable
    dom: tuple
    cod: tuple

    def adjoint(self):
        return LinearOperatorHandle(self.adjoint_apply, self.apply, self.cod, self.dom)

    def __matmul__(self, other):
        return compose_adjoint([other, self])


def compose_adjoint(ops) -> LinearOperatorHandle:
    """Composition (last applied last) whose adjoint is the reversed chain."""
    ops = list(ops)
    for first, second in zip(ops, ops[1:]):
        if first.cod != second.dom:
            raise SignatureMismatch(
                f"cannot compose: codomain {first.cod} != next domain {second.dom}"
            )

    def apply(x):
        for op in ops:
            x = op.apply(x)
        return x

    def adjoint_apply(y):
        for op in reversed(ops):
            y = op.adjoint_apply(y)
        return y

    return LinearOperatorHandle(apply, adjoint_apply, ops[0].dom, ops[-1].cod)


def derivative_op(chart: ChartSpec, axis: int, rank: int, *, check=True):
    """Periodic spectral derivative acting componentwise; plain adjoint -d."""
    sig = (chart, rank)

    def apply(x):
        return spectral_derivative(x, chart, axis, check=check)

    def adj(y):
        return -spectral_derivative(y, chart, axis, check=False)

    return LinearOperatorHandle(apply, adj, sig, sig)


def multiply_op(chart: ChartSpec, weight, rank: int):
    """Pointwise multiplication by a scalar field; adjoint multiplies by conj."""
    sig = (chart, rank)
    wc = np.conj(weight)
    return LinearOperatorHandle(lambda x: x * weight, lambda y: y * wc, sig, sig)


def contract_op(chart: ChartSpec, spec: str, tensor, rank_in: int, rank_out: int):
    """Contraction with a fixed tensor field via an einsum over slot axes.

    spec is written over slot axes only, e.g. 'ij,j->i'; node axes are
    appended automatically. The adjoint contracts with the conjugate tensor
    along the reversed spec.
    """
    t_sub, rest = spec.split(",")
    x_sub, y_sub = rest.split("->")
    fwd = f"{t_sub}...,{x_sub}...->{y_sub}..."
    rev = f"{t_sub}...,{y_sub}...->{x_sub}..."
    tc = np.conj(tensor)

    def apply(x):
        return np.einsum(fwd, tensor, x)

    def adj(y):
        return np.einsum(rev, tc, y)

    return LinearOperatorHandle(apply, adj, (chart, rank_in), (chart, rank_out))


def adjoint_probe(op: LinearOperatorHandle, rng, n_probes=20):
    """Max relative defect of <h, A f> = <A* h, f> over random complex pairs."""
    chart_d, rank_d = op.dom
    chart_c, rank_c = op.cod

    def random_field(chart, rank):
        if chart.kind == "torus":
            shape = (chart.dim,) * rank + chart.grid_shape
        else:
            shape = (chart.dim,) * rank + (chart.n_nodes,)
        return rng.standard_normal(shape) + 1j * rng.standard_normal(shape)

    worst = 0.0
    for _ in range(n_probes):
        f = random_field(chart_d, rank_d)
        h = random_field(chart_c, rank_c)
        lhs = frobenius_product(chart_c, h, op.apply(f), rank_c)
        rhs = frobenius_product(chart_d, op.adjoint_apply(h), f, rank_d)
        scale = max(abs(lhs), abs(rhs), 1e-300)
        worst = max(worst, abs(lhs - rhs) / scale)
    return worst
