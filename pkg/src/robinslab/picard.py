"""Fixed-point iteration for the coupled squared-velocity / vorticity pair.

The unknown is a pair of uniform time slices (v, w) on [0, T] iterated as

    v(t) <- v0 + 4 Int_0^t  v (K w)_z ds
    w(t) <- P_t w0 + Int_0^t P_{t-s} v_z ds

where K is the Robin elliptic inverse and P the Robin heat flow, starting
from the constant-in-time pair.  The horizon T is chosen from the data norms
so that the map contracts on a ball:

    R = C e^{nu gamma^2} (||w0||_{H^s} + 2 ||v0||_{H^{s+1}})
    M = 2 ||v0||_{H^{s+1}} + R
    T = min( 1/(8R), 1/(2 C e^{nu gamma^2}), 1/(2M), 1 )

with C the calibrated heat growth constant (>= 1).  The iteration distance
is the slice-wise maximum of the H^{s+1} norm of the v difference and the
H^s norm of the w difference.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .domain import (
    MAX_DERIVATIVE_ORDER,
    ModelParams,
    SpectralField3,
    d_z,
    field_from_lateral_values,
    lateral_values,
    pointwise_product,
    sobolev_norm,
)
from .elliptic import solve_elliptic
from .errors import NoConvergenceError, NonFiniteError, SignError
from .heat import RobinPropagator

__all__ = [
    "HorizonSelection",
    "PicardState",
    "PicardResult",
    "horizon_from_norms",
    "select_horizon",
    "duhamel_apply",
    "picard_step",
    "picard_solve",
    "x_norm",
    "x_distance",
    "recover_u",
]

DIVERGENCE_FACTOR = 10.0


@dataclass(frozen=True)
class HorizonSelection:
    """Contraction horizon and ball radius derived from the data norms.

    binding names the active minimum: "data-bound" (1/(8R)),
    "propagator-bound" (1/(2 C e^{nu gamma^2})), "ball-radius" (1/(2M)) or
    "unit cap".  constraint_value is 8 C T e^{nu gamma^2 T} (||w0|| +
    2 T ||v0||), which the selection keeps at or below 1.
    """

    T: float
    M: float
    growth_constant: float
    binding: str
    constraint_value: float


@dataclass(frozen=True)
class PicardState:
    """One iterate: time grid plus per-slice field pairs."""

    t_grid: np.ndarray
    v_slices: tuple[SpectralField3, ...]
    omega_slices: tuple[SpectralField3, ...]
    iteration_index: int = 0


@dataclass(frozen=True)
class PicardResult:
    state: PicardState
    horizon: HorizonSelection
    diffs: tuple[float, ...]
    ratios: tuple[float, ...]
    converged: bool
    iterations: int


def _check_orders(params: ModelParams) -> None:
    if params.s + 1 > MAX_DERIVATIVE_ORDER:
        raise ValueError(
            f"iteration norms need H^{params.s + 1} on v, above the supported "
            f"derivative order {MAX_DERIVATIVE_ORDER}"
        )


def horizon_from_norms(
    norm_v0: float, norm_w0: float, growth_constant: float, params: ModelParams
) -> HorizonSelection:
    """Contraction horizon from precomputed data norms."""
    if growth_constant < 1.0:
        raise ValueError(
            f"growth constant below its t=0 value 1: {growth_constant}"
        )
    if norm_v0 < 0 or norm_w0 < 0:
        raise ValueError("data norms must be nonnegative")
    if norm_v0 == 0.0 and norm_w0 == 0.0:
        return HorizonSelection(
            T=1.0, M=0.0, growth_constant=growth_constant,
            binding="unit cap", constraint_value=0.0,
        )
    amp = growth_constant * math.exp(params.nu * params.gamma**2)
    r = amp * (float(norm_w0) + 2.0 * float(norm_v0))
    m = 2.0 * float(norm_v0) + r
    candidates = (
        (1.0 / (8.0 * r), "data-bound"),
        (1.0 / (2.0 * amp), "propagator-bound"),
        (1.0 / (2.0 * m), "ball-radius"),
        (1.0, "unit cap"),
    )
    t_sel, binding = min(candidates, key=lambda c: c[0])
    constraint = (
        8.0
        * growth_constant
        * t_sel
        * math.exp(params.nu * params.gamma**2 * t_sel)
        * (norm_w0 + 2.0 * t_sel * norm_v0)
    )
    if constraint > 1.0:
        raise ValueError(
            f"selected horizon violates its own smallness constraint: {constraint}"
        )
    return HorizonSelection(
        T=float(t_sel), M=float(m), growth_constant=growth_constant,
        binding=binding, constraint_value=float(constraint),
    )


def select_horizon(
    v0: SpectralField3,
    w0: SpectralField3,
    params: ModelParams,
    growth_constant: float,
) -> HorizonSelection:
    """Contraction horizon measured directly from the initial fields."""
    _check_orders(params)
    return horizon_from_norms(
        sobolev_norm(v0, params.s + 1, params.a),
        sobolev_norm(w0, params.s, params.a),
        growth_constant,
        params,
    )


# --- Duhamel quadrature -----------------------------------------------------


def duhamel_apply(
    w0: SpectralField3,
    g_slices,
    horizon: float,
    params: ModelParams,
    quad_nodes: int = 2,
) -> list[SpectralField3]:
    """Slices of P_t w0 + Int_0^t P_{t-s} g(s) ds on the uniform grid.

    One propagator is built per forcing slice and reused for every
    evaluation time.  quad_nodes = 2 is the plain slice trapezoid;
    larger values subdivide each slice cell, blending the forcing
    linearly in s between its two bracketing slices (the flow is linear
    in the data, so the blend commutes with propagation).
    """
    n_t = len(g_slices)
    if n_t < 2:
        raise ValueError("Duhamel quadrature needs at least two slices")
    if quad_nodes < 2:
        raise ValueError(f"quad_nodes must be >= 2, got {quad_nodes}")
    if not horizon > 0:
        raise ValueError(f"horizon must be positive, got {horizon}")
    disc = w0.disc
    t = np.linspace(0.0, horizon, n_t)
    dt = t[1] - t[0]
    base = RobinPropagator(w0, params, check_compat=False)
    props = [RobinPropagator(g, params, check_compat=False) for g in g_slices]

    out = [w0]
    for i in range(1, n_t):
        total = base.at(t[i]).coeffs.copy()
        if quad_nodes == 2:
            for j in range(i + 1):
                wj = dt if 0 < j < i else 0.5 * dt
                total += wj * props[j].at(t[i] - t[j]).coeffs
        else:
            h = dt / (quad_nodes - 1)
            cache: dict[tuple[int, float], np.ndarray] = {}

            def flow(j: int, lag: float) -> np.ndarray:
                key = (j, lag)
                if key not in cache:
                    cache[key] = props[j].at(lag).coeffs
                return cache[key]

            for j in range(i):
                for sq in np.linspace(t[j], t[j + 1], quad_nodes):
                    wq = h if t[j] < sq < t[j + 1] else 0.5 * h
                    theta = (sq - t[j]) / dt
                    lag = t[i] - sq
                    if theta < 1.0:
                        total += wq * (1.0 - theta) * flow(j, lag)
                    if theta > 0.0:
                        total += wq * theta * flow(j + 1, lag)
        out.append(SpectralField3(total, disc))
    return out


# --- the iteration map ------------------------------------------------------


def x_norm(state: PicardState, params: ModelParams) -> float:
    """Slice-wise max of ||v||_{H^{s+1}} and ||w||_{H^s}."""
    a, s = params.a, params.s
    worst = 0.0
    for v, w in zip(state.v_slices, state.omega_slices):
        worst = max(worst, sobolev_norm(v, s + 1, a), sobolev_norm(w, s, a))
    return worst


def x_distance(first: PicardState, second: PicardState, params: ModelParams) -> float:
    a, s = params.a, params.s
    worst = 0.0
    for va, wa, vb, wb in zip(
        first.v_slices, first.omega_slices, second.v_slices, second.omega_slices
    ):
        worst = max(
            worst,
            sobolev_norm(va - vb, s + 1, a),
            sobolev_norm(wa - wb, s, a),
        )
    return worst


def picard_step(
    state: PicardState,
    v0: SpectralField3,
    w0: SpectralField3,
    params: ModelParams,
    quad_nodes: int = 2,
) -> PicardState:
    """One sweep of the map; slice 0 stays pinned to the data."""
    t = state.t_grid
    dt = t[1] - t[0]
    integrands = []
    for v_j, w_j in zip(state.v_slices, state.omega_slices):
        stream = solve_elliptic(w_j, params.beta, params.a)
        integrands.append(pointwise_product(v_j, d_z(stream)).coeffs)

    v_new = [v0]
    acc = np.zeros_like(v0.coeffs)
    for i in range(1, len(t)):
        acc = acc + 2.0 * dt * (integrands[i - 1] + integrands[i])
        v_new.append(SpectralField3(v0.coeffs + acc, v0.disc))

    g_slices = [d_z(v_j) for v_j in state.v_slices]
    w_new = duhamel_apply(w0, g_slices, float(t[-1]), params, quad_nodes)
    return PicardState(
        t_grid=t,
        v_slices=tuple(v_new),
        omega_slices=tuple(w_new),
        iteration_index=state.iteration_index + 1,
    )


def picard_solve(
    v0: SpectralField3,
    w0: SpectralField3,
    params: ModelParams,
    growth_constant: float,
    tol: float = 1e-8,
    max_iter: int = 30,
    quad_nodes: int = 2,
    horizon: HorizonSelection | None = None,
    initial_state: PicardState | None = None,
) -> PicardResult:
    """Iterate to the fixed point on the certified horizon.

    Starts from the constant-in-time pair (or initial_state), stops when a
    sweep moves the iterate by at most tol times the first sweep's move.
    A first sweep that does not move at all is already the fixed point.
    """
    _check_orders(params)
    if v0.disc is not w0.disc and v0.disc != w0.disc:
        raise ValueError("v0 and w0 must share a discretization")
    if not (np.all(np.isfinite(v0.coeffs)) and np.all(np.isfinite(w0.coeffs))):
        raise NonFiniteError("initial data contains non-finite values")
    if horizon is None:
        horizon = select_horizon(v0, w0, params, growth_constant)
    n_t = v0.disc.n_t
    t_grid = np.linspace(0.0, horizon.T, n_t)
    if initial_state is None:
        state = PicardState(t_grid, (v0,) * n_t, (w0,) * n_t, 0)
    else:
        state = initial_state
    guard = DIVERGENCE_FACTOR * horizon.M

    diffs: list[float] = []
    converged = False
    for _ in range(max_iter):
        new = picard_step(state, v0, w0, params, quad_nodes)
        diff = x_distance(new, state, params)
        if not np.isfinite(diff):
            raise NonFiniteError(
                f"iterate stopped being finite at sweep {new.iteration_index}"
            )
        diffs.append(diff)
        state = new
        if diff <= tol * diffs[0]:
            converged = True
            break
        if horizon.M > 0 and x_norm(state, params) > guard:
            raise NoConvergenceError(
                f"iterate left the certified ball (radius {horizon.M:.6g}) "
                f"at sweep {state.iteration_index}"
            )
    if not converged:
        raise NoConvergenceError(
            f"no convergence in {max_iter} sweeps: last move {diffs[-1]:.3e} "
            f"vs target {tol * diffs[0]:.3e}"
        )
    ratios = tuple(
        diffs[m + 1] / diffs[m] for m in range(len(diffs) - 1) if diffs[m] > 0.0
    )
    return PicardResult(
        state=state,
        horizon=horizon,
        diffs=tuple(diffs),
        ratios=ratios,
        converged=True,
        iterations=state.iteration_index,
    )


def recover_u(v: SpectralField3, tol: float = 1e-12) -> SpectralField3:
    """Square root of the squared velocity on the collocation grid.

    Rejects data that is genuinely negative somewhere; values inside the
    -tol*scale float noise band are clipped to zero before the root.
    """
    vals = lateral_values(v)
    scale = max(1.0, float(np.max(np.abs(vals))))
    if np.min(vals) < -tol * scale:
        raise SignError(
            f"squared velocity reaches {np.min(vals):.3e}; no real square root"
        )
    return field_from_lateral_values(np.sqrt(np.clip(vals, 0.0, None)), v.disc)
