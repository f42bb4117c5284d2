"""Monotone descent of the squared moment-map functional in potential space.

The state is a Kahler potential on the periodic chart; the identification of
potential velocity 2f with the fixed-form complex-structure direction runs
through the diffeomorphism machinery of the variation checks, so the
functional and its gradient are computed in the potential picture exactly.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import MetricDegenerated, NonPositiveMetric, NyquistError
from .geometry import GeometryState, build_torus_geometry
from .lichnerowicz import lichnerowicz
from .moment import mu

__all__ = ["FlowState", "phi_functional", "descent_direction", "run_flow"]


def phi_functional(geom: GeometryState) -> float:
    """Squared geometric L2 norm of the moment map."""
    m = mu(geom)
    return geom.l2_inner(m, m, 0).real


def descent_direction(geom: GeometryState, op=None):
    """Steepest-descent potential direction -(L + Lbar) mu, mean-normalized.

    Returns (direction, diagnostics); the diagnostics record the imaginary
    part of <direction, L mu>, asserted small by callers (reality of the
    first variation is a computed fact, not an assumption).
    """
    op = op or lichnerowicz(geom)
    m = mu(geom)
    grad = op.apply_sum(m, smooth=True)
    direction = -grad.real.astype(complex)
    direction = direction - geom.mean(direction)
    imag_defect = abs(geom.l2_inner(direction, op.apply(m, smooth=True), 0).imag)
    slope = geom.l2_inner(direction, grad, 0).real  # = -|grad|^2 up to mean term
    return direction, {
        "residual": float(np.sqrt(max(geom.l2_inner(grad, grad, 0).real, 0.0))),
        "slope": slope,
        "imag_defect": imag_defect,
    }


@dataclass
class FlowState:
    potential: np.ndarray
    m: int
    step: int = 0
    eta: float = 0.0
    phi_value: float = 0.0
    residual: float = 0.0
    min_metric_eig: float = 0.0
    stop_reason: str = ""
    worst_consistency: float = 0.0
    trace: list = field(default_factory=list)


def _flat_multiplier_sq(chart, eta):
    """Fourier symbol of (1 + eta (L+Lbar)_flat^2)^-1, the semi-implicit
    preconditioner. Positive definite, so preconditioned steps stay descent
    directions and backtracking keeps the trace monotone."""
    ks = [np.fft.fftfreq(n, d=1.0 / n) for n in chart.grid_shape]
    grids = np.meshgrid(*ks, indexing="ij")
    k2 = sum(g**2 for g in grids)
    lam = 4 * np.pi**6 * k2**3
    return 1.0 / (1.0 + eta * lam**2)


def run_flow(
    initial,
    m: int,
    n,
    *,
    steps=200,
    eta0=1e-6,
    tol=1e-8,
    eta_min=1e-30,
    consistency_every=10,
    consistency_h=1e-5,
) -> FlowState:
    """Backtracking descent: each accepted step strictly decreases the
    functional or the flow halts. Stiff high-frequency modes are tamed by a
    flat-spectrum semi-implicit preconditioner (still a descent direction);
    rejected trials halve the step, and the run is fatal only on step-size
    underflow.
    """
    geom = build_torus_geometry(initial, m, n)
    chart = geom.chart
    phi_grid = np.asarray(geom.potential, dtype=complex)

    state = FlowState(potential=phi_grid, m=m)
    eta = float(eta0)

    def record(step, phi_val, res, eta_val, eig):
        state.trace.append((step, phi_val, res, eta_val, eig))

    op = lichnerowicz(geom)
    phi_val = phi_functional(geom)
    direction, diag = descent_direction(geom, op)
    record(0, phi_val, diag["residual"], eta, geom.min_metric_eig)

    for it in range(1, steps + 1):
        if diag["residual"] <= tol:
            state.stop_reason = "residual_below_tolerance"
            break
        accepted = False
        while not accepted:
            if eta < eta_min:
                raise MetricDegenerated(
                    f"step size underflow at step {it} (eta={eta:g})"
                )
            symbol = _flat_multiplier_sq(chart, eta)
            move = np.fft.ifftn(np.fft.fftn(direction) * symbol).real
            trial_phi = phi_grid + 2 * eta * move
            try:
                trial_geom = build_torus_geometry(trial_phi.astype(complex), m, chart)
                trial_val = phi_functional(trial_geom)
            except (NonPositiveMetric, NyquistError):
                eta *= 0.5
                continue
            if trial_val < phi_val:
                accepted = True
                phi_grid = trial_phi.astype(complex)
                geom = trial_geom
                phi_val = trial_val
            else:
                eta *= 0.5

        op = lichnerowicz(geom)
        direction, diag = descent_direction(geom, op)
        record(it, phi_val, diag["residual"], eta, geom.min_metric_eig)
        state.step = it

        if consistency_every and it % consistency_every == 0:
            # along the direction actually stepped (the preconditioned move)
            state.worst_consistency = max(
                state.worst_consistency,
                _first_variation_defect(geom, phi_grid, move.astype(complex), op,
                                        consistency_h),
            )
        eta = min(eta * 1.5, eta0)
    else:
        state.stop_reason = "max_steps"

    state.potential = phi_grid
    state.eta = eta
    state.phi_value = phi_val
    state.residual = diag["residual"]
    state.min_metric_eig = geom.min_metric_eig
    return state


def _first_variation_defect(geom, phi_grid, f, op, h):
    """Relative defect of the first-variation identity along direction f:
    central difference of the functional against 2 <f, (L+Lbar) mu>."""
    chart = geom.chart
    m = geom.m

    def phi_at(t):
        g = build_torus_geometry((phi_grid + 2 * t * f).astype(complex), m, chart)
        return phi_functional(g)

    fd = (phi_at(h) - phi_at(-h)) / (2 * h)
    predicted = 2 * geom.l2_inner(f, op.apply_sum(mu(geom), smooth=True), 0).real
    scale = max(abs(predicted), abs(fd), 1e-300)
    return abs(fd - predicted) / scale
