"""Tensor fields over charts: storage conventions, spectral differentiation,
inner products, and dumps.

Array layout: tensor slot axes first, node axes last. On torus charts the
node axes are the full grid (n1, ..., n_{2m}); on polytope charts fields are
(..., n_nodes, n_jet) where the trailing axis holds exact derivative data
(see jets). Components are complex throughout, even for real tensors.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass

import numpy as np

from .charts import ChartSpec, write_sidecar
from .errors import ChartMismatch, NyquistError, PolytopeDifferentiationForbidden

__all__ = [
    "Field", "spectral_derivative", "nyquist_fraction", "inner_product",
    "frobenius_product", "check_symmetric", "check_real", "dump_field",
]

NYQUIST_ENERGY_LIMIT = 1e-6


@dataclass(frozen=True)
class Field:
    """A rank-r tensor field: data shaped (d,)*r + node axes.

    variance: one of 'u'/'d' per slot (real-index up/down).
    frame: one of 'r'/'h'/'a' per slot (real, holomorphic- or
    antiholomorphic-projected).
    """

    chart: ChartSpec
    data: np.ndarray
    variance: str = ""
    frame: str = ""

    @property
    def rank(self):
        return len(self.variance)

    def __post_init__(self):
        if self.frame == "":
            object.__setattr__(self, "frame", "r" * len(self.variance))
        if len(self.frame) != len(self.variance):
            raise ValueError("frame and variance tags must have equal length")


def _node_axis(chart: ChartSpec, data: np.ndarray, axis: int) -> int:
    """Position of grid axis `axis` within a torus data array."""
    n_grid = len(chart.grid_shape)
    return data.ndim - n_grid + axis


def nyquist_fraction(data: np.ndarray, chart: ChartSpec, axis: int) -> float:
    """Fraction of spectral energy in the top-frequency band of one axis."""
    ax = _node_axis(chart, data, axis)
    hat = np.fft.fft(data, axis=ax)
    total = float(np.sum(np.abs(hat) ** 2))
    if total == 0.0:
        return 0.0
    n = chart.grid_shape[axis]
    top = np.take(hat, n // 2, axis=ax)
    return float(np.sum(np.abs(top) ** 2)) / total


MODE_FLOOR = 2e-16


def spectral_derivative(data: np.ndarray, chart: ChartSpec, axis: int, *, check=True,
                        denoise=False):
    """Exact derivative of the trigonometric interpolant along a periodic axis.

    The Nyquist mode is dropped from the derivative (odd mode on an even
    grid). Raises NyquistError when the field is under-resolved, and
    PolytopeDifferentiationForbidden on polytope charts, whose fields must
    carry exact derivatives instead.

    denoise zeroes modes below MODE_FLOOR relative to the per-component peak
    before multiplying. Analytic coefficient fields have true tails far below
    the float noise floor; filtering stops high-order derivative chains from
    amplifying that noise by k^order. It makes the map data-dependent, so
    linear-operator paths must leave it off.
    """
    if chart.kind != "torus":
        raise PolytopeDifferentiationForbidden(
            "grid differentiation is not defined on polytope charts"
        )
    ax = _node_axis(chart, data, axis)
    n = chart.grid_shape[axis]
    hat = np.fft.fft(data, axis=ax)
    if check:
        abs2 = np.abs(hat) ** 2
        total = float(np.sum(abs2))
        if total > 0.0:
            frac = float(np.sum(np.take(abs2, n // 2, axis=ax))) / total
            if frac > NYQUIST_ENERGY_LIMIT:
                raise NyquistError(
                    f"axis {axis}: top-frequency energy fraction {frac:.3e} exceeds "
                    f"{NYQUIST_ENERGY_LIMIT:.0e}"
                )
    if denoise:
        n_grid = len(chart.grid_shape)
        node_axes = tuple(range(data.ndim - n_grid, data.ndim))
        peak = np.max(np.abs(hat), axis=node_axes, keepdims=True)
        hat = np.where(np.abs(hat) >= MODE_FLOOR * peak, hat, 0.0)
    k = np.fft.fftfreq(n, d=1.0 / n)
    k[n // 2] = 0.0  # Nyquist derivative is ambiguous; zero it
    mult = 2j * np.pi * k
    shape = [1] * data.ndim
    shape[ax] = n
    return np.fft.ifft(hat * mult.reshape(shape), axis=ax)


def _flat_nodes(chart: ChartSpec, data: np.ndarray, rank: int):
    if chart.kind == "torus":
        return data.reshape(data.shape[:rank] + (-1,))
    return data


def inner_product(f: Field, h: Field):
    """Chart-measure product sum(conj(f) * h * weight) for scalar fields."""
    if f.chart is not h.chart and f.chart != h.chart:
        raise ChartMismatch("inner_product requires a shared chart")
    if f.rank != 0 or h.rank != 0:
        raise ValueError("inner_product is for scalar fields; see frobenius_product")
    fv = _flat_nodes(f.chart, f.data, 0)
    hv = _flat_nodes(h.chart, h.data, 0)
    return complex(np.sum(np.conj(fv) * hv * f.chart.weights))


def frobenius_product(chart: ChartSpec, a: np.ndarray, b: np.ndarray, rank: int):
    """Plain slot-wise product sum over slots and weighted nodes.

    This is the pairing against which elementary operator adjoints are exact.
    """
    av = _flat_nodes(chart, a, rank).reshape(-1, chart.n_nodes)
    bv = _flat_nodes(chart, b, rank).reshape(-1, chart.n_nodes)
    return complex(np.einsum("cn,cn,n->", np.conj(av), bv, chart.weights))


def check_symmetric(data: np.ndarray, rank: int, tol=1e-12):
    """Max relative deviation from total symmetry over the slot axes."""
    from itertools import permutations

    scale = float(np.max(np.abs(data))) or 1.0
    worst = 0.0
    for perm in permutations(range(rank)):
        moved = np.transpose(data, perm + tuple(range(rank, data.ndim)))
        worst = max(worst, float(np.max(np.abs(data - moved))) / scale)
    return worst


def check_real(data: np.ndarray, tol=1e-12):
    """Max relative imaginary part."""
    scale = float(np.max(np.abs(data))) or 1.0
    return float(np.max(np.abs(data.imag))) / scale


def dump_field(path, field: Field, component_names=None):
    """CSV dump: one row per (component, node) with coordinates, re, im.

    Writes a JSON sidecar (same path + '.json') with chart metadata.
    """
    chart = field.chart
    rank = field.rank
    d = chart.dim
    coords = chart.nodes
    n_coord = coords.shape[1]
    flat = _flat_nodes(chart, field.data, rank)
    if chart.kind == "polytope" and flat.ndim > rank and flat.shape[-1] != chart.n_nodes:
        flat = flat[..., 0]  # jet value part
    flat = flat.reshape((-1, chart.n_nodes)) if rank else flat.reshape((1, -1))
    comp_indices = list(np.ndindex(*([d] * rank))) if rank else [()]
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(
            (["component"] if rank else [])
            + [f"x{i + 1}" for i in range(n_coord)]
            + ["re", "im"]
        )
        for ci, comp in enumerate(comp_indices):
            label = ["".join(str(i) for i in comp)] if rank else []
            for node in range(chart.n_nodes):
                v = flat[ci, node]
                writer.writerow(
                    label
                    + [repr(float(c)) for c in coords[node]]
                    + [repr(float(v.real)), repr(float(v.imag))]
                )
    write_sidecar(
        str(path) + ".json",
        chart,
        extra={"rank": rank, "variance": field.variance, "frame": field.frame},
    )
