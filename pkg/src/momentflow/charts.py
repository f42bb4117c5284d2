"""Discretized charts: periodic tori and polytope interiors.

A chart owns node coordinates and quadrature weights in the chart measure
(coordinate Lebesgue measure). Geometry-aware measures are layered on top by
the geometry module through a node-wise density.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field

import numpy as np

from .errors import ConfigError

__all__ = ["ChartSpec", "torus_chart", "polytope_chart", "polytope_vertices_2d"]


@dataclass(frozen=True)
class ChartSpec:
    """A discretized chart.

    kind: 'torus' (periodic, uniform nodes, unit period per axis) or
    'polytope' (Gauss-Legendre nodes strictly inside a convex polytope).
    dim: real tangent dimension (2m for both backends).
    grid_shape: per-axis node counts for the torus; () for polytopes.
    nodes: (n_nodes, n_coord_axes) coordinates. Torus coordinates cover all
    2m axes; polytope coordinates cover only the m action coordinates, the
    angle axes being handled analytically.
    weights: (n_nodes,) chart-measure quadrature weights, all positive.
    """

    kind: str
    dim: int
    grid_shape: tuple = ()
    nodes: np.ndarray = field(default=None, repr=False)
    weights: np.ndarray = field(default=None, repr=False)
    inequalities: tuple = ()

    @property
    def m(self):
        return self.dim // 2

    @property
    def n_nodes(self):
        return int(np.prod(self.grid_shape)) if self.kind == "torus" else self.nodes.shape[0]

    @property
    def volume(self):
        return float(np.sum(self.weights))

    def axis_coordinate(self, axis):
        """Coordinate values of one axis, shaped like a scalar field."""
        if self.kind == "torus":
            grids = np.meshgrid(
                *[np.arange(n) / n for n in self.grid_shape], indexing="ij"
            )
            return grids[axis]
        if axis >= self.m:
            raise ConfigError(f"polytope charts expose only the {self.m} action axes")
        return self.nodes[:, axis]

    def metadata(self):
        md = {"kind": self.kind, "dim": self.dim, "n_nodes": self.n_nodes}
        if self.kind == "torus":
            md["grid_shape"] = list(self.grid_shape)
        else:
            md["inequalities"] = [[list(a), c] for a, c in self.inequalities]
        return md


def torus_chart(m: int, n) -> ChartSpec:
    """Uniform periodic chart on the unit torus of real dimension 2m.

    n is a node count (power of two) shared by all axes, or one per axis.
    """
    shape = tuple([int(n)] * (2 * m)) if np.isscalar(n) else tuple(int(k) for k in n)
    if len(shape) != 2 * m:
        raise ConfigError(f"need {2 * m} axis node counts, got {len(shape)}")
    for k in shape:
        if k < 4 or (k & (k - 1)) != 0:
            raise ConfigError(f"periodic axis node counts must be powers of two >= 4, got {k}")
    total = int(np.prod(shape))
    weights = np.full(total, 1.0 / total)
    grids = np.meshgrid(*[np.arange(k) / k for k in shape], indexing="ij")
    nodes = np.stack([gr.ravel() for gr in grids], axis=-1)
    return ChartSpec(kind="torus", dim=2 * m, grid_shape=shape, nodes=nodes, weights=weights)


def _gauss_legendre(lo, hi, n):
    x, w = np.polynomial.legendre.leggauss(n)
    half = 0.5 * (hi - lo)
    return lo + half * (x + 1.0), half * w


def polytope_vertices_2d(inequalities):
    """Vertices of a bounded 2D polytope given as rows (a, c) with a.x + c >= 0."""
    rows = [(np.asarray(a, dtype=float), float(c)) for a, c in inequalities]
    verts = []
    k = len(rows)
    for i in range(k):
        for j in range(i + 1, k):
            A = np.stack([rows[i][0], rows[j][0]])
            b = -np.array([rows[i][1], rows[j][1]])
            if abs(np.linalg.det(A)) < 1e-12:
                continue
            v = np.linalg.solve(A, b)
            if all(a @ v + c >= -1e-10 for a, c in rows):
                verts.append(v)
    if len(verts) < 3:
        raise ConfigError("polytope has fewer than 3 vertices; not a 2D Delzant polygon")
    verts = np.unique(np.round(np.stack(verts), 12), axis=0)
    center = verts.mean(axis=0)
    order = np.argsort(np.arctan2(verts[:, 1] - center[1], verts[:, 0] - center[0]))
    return verts[order]


def polytope_chart(inequalities, n: int) -> ChartSpec:
    """Gauss-Legendre chart strictly interior to a convex polytope.

    inequalities: sequence of (a, c) rows meaning <a, x> + c >= 0. Supports
    segments (1D) and convex polygons (2D). n is the per-axis node count.

    2D polygons are integrated by strips: Gauss-Legendre in x1 on each strip
    between consecutive vertex abscissae, and Gauss-Legendre in x2 between the
    affine edge bounds. This keeps every node interior and integrates
    polynomials of degree <= 2n-1 per axis exactly.
    """
    ineqs = tuple((tuple(float(v) for v in a), float(c)) for a, c in inequalities)
    mdim = len(ineqs[0][0])
    if any(len(a) != mdim for a, _ in ineqs):
        raise ConfigError("inconsistent inequality dimensions")

    if mdim == 1:
        los = [-c / a[0] for a, c in ineqs if a[0] > 0]
        his = [-c / a[0] for a, c in ineqs if a[0] < 0]
        if not los or not his:
            raise ConfigError("1D polytope is unbounded")
        lo, hi = max(los), min(his)
        if hi <= lo:
            raise ConfigError("empty 1D polytope")
        x, w = _gauss_legendre(lo, hi, n)
        nodes = x[:, None]
        weights = w
    elif mdim == 2:
        verts = polytope_vertices_2d(ineqs)
        breaks = np.unique(np.round(verts[:, 0], 12))
        nodes_list, weights_list = [], []
        for lo, hi in zip(breaks[:-1], breaks[1:]):
            if hi - lo < 1e-12:
                continue
            x1, w1 = _gauss_legendre(lo, hi, n)
            for xv, wv in zip(x1, w1):
                lows = [-(a[0] * xv + c) / a[1] for a, c in ineqs if a[1] > 0]
                highs = [-(a[0] * xv + c) / a[1] for a, c in ineqs if a[1] < 0]
                lo2, hi2 = max(lows), min(highs)
                if hi2 <= lo2:
                    continue
                x2, w2 = _gauss_legendre(lo2, hi2, n)
                for yv, wy in zip(x2, w2):
                    nodes_list.append((xv, yv))
                    weights_list.append(wv * wy)
        nodes = np.array(nodes_list)
        weights = np.array(weights_list)
    else:
        raise ConfigError(f"polytopes of dimension {mdim} are out of scope")

    for a, c in ineqs:
        vals = nodes @ np.asarray(a) + c
        if np.any(vals <= 0):
            raise ConfigError("quadrature produced a non-interior node")
    return ChartSpec(
        kind="polytope", dim=2 * mdim, nodes=nodes, weights=weights, inequalities=ineqs
    )


def write_sidecar(path, chart: ChartSpec, extra=None):
    md = chart.metadata()
    if extra:
        md.update(extra)
    with open(path, "w") as fh:
        json.dump(md, fh, indent=2, sort_keys=True)
        fh.write("\n")
