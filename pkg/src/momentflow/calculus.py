"""Backend-independent tensor calculus primitives.

The curvature and moment-map pipelines are written once against three
primitives: an einsum product over slot axes (mul), a single-operand linear
reshuffle (lin), and a partial derivative (deriv). The torus backend realizes
them with plain arrays and spectral differentiation; the toric backend with
jet arrays and exact index-shift differentiation. Slot axes always come
first, node (and jet) axes last, so the same pattern strings serve both.
"""

from __future__ import annotations

import numpy as np

from .charts import ChartSpec
from .fields import spectral_derivative
from .jets import jet_deriv, jet_mul

__all__ = ["TorusCalc", "ToricCalc"]


class TorusCalc:
    """Spectral calculus on a periodic chart; fields are (slots..., grid).

    denoise=True is for coefficient-field pipelines (metric, Christoffels,
    curvature); linear operator paths need the unfiltered variant.
    """

    def __init__(self, chart: ChartSpec, denoise=False):
        self.chart = chart
        self.dim = chart.dim
        self.denoise = denoise

    def mul(self, spec, a, b):
        sa, rest = spec.split(",")
        sb, so = rest.split("->")
        return np.einsum(f"{sa}...,{sb}...->{so}...", a, b)

    def lin(self, spec, a):
        si, so = spec.split("->")
        return np.einsum(f"{si}...->{so}...", a)

    def add(self, a, b):
        return a + b

    def sub(self, a, b):
        return a - b

    def deriv(self, a, axis, check=True):
        return spectral_derivative(a, self.chart, axis, check=check, denoise=self.denoise)

    def value(self, a):
        return a

    def stack_grad(self, a, check=True):
        """All partials of a, stacked as a new trailing slot axis."""
        rank = a.ndim - len(self.chart.grid_shape)
        parts = [self.deriv(a, c, check=check) for c in range(self.dim)]
        return np.stack(parts, axis=rank)

    def nodes_flat(self, a, rank):
        return a.reshape(a.shape[:rank] + (-1,))


class ToricCalc:
    """Exact-jet calculus on a polytope chart; fields are (slots..., nodes, J).

    Fields depend on the m action coordinates only; angle-axis derivatives
    vanish identically. Differentiation consumes one jet order.
    """

    def __init__(self, chart: ChartSpec):
        self.chart = chart
        self.dim = chart.dim
        self.m = chart.dim // 2

    def mul(self, spec, a, b):
        return jet_mul(spec, a, b, self.m)

    def lin(self, spec, a):
        si, so = spec.split("->")
        return np.einsum(f"{si}...->{so}...", a)

    def add(self, a, b):
        k = min(a.shape[-1], b.shape[-1])
        return a[..., :k] + b[..., :k]

    def sub(self, a, b):
        k = min(a.shape[-1], b.shape[-1])
        return a[..., :k] - b[..., :k]

    def deriv(self, a, axis, check=True):
        if axis >= self.m:
            out = np.zeros_like(a[..., :_shorter(a, self.m)])
            return out
        return jet_deriv(a, axis, self.m)

    def value(self, a):
        return a[..., 0]

    def stack_grad(self, a, check=True):
        rank = a.ndim - 2
        parts = [self.deriv(a, c) for c in range(self.dim)]
        return np.stack(parts, axis=rank)

    def nodes_flat(self, a, rank):
        return a[..., 0]


def _shorter(a, m):
    from .jets import jet_length, order_from_length

    k = order_from_length(m, a.shape[-1])
    if k == 0:
        from .errors import PolytopeDifferentiationForbidden

        raise PolytopeDifferentiationForbidden("field's exact derivative data is exhausted")
    return jet_length(m, k - 1)
