"""Certificates: measured quantities checked against their proved bounds.

Every estimate the solver relies on is re-measured at runtime and packed
into a Certificate with the measured value, the bound it must stay under,
and the resulting margin.  Calibrated constants get a 1.1x allowance
(1.05x for the product inequality, whose calibration ensembles are much
denser), exact inequalities a 1 + 1e-6 float allowance, and convergence
orders a +-0.2 window.  A failed check never aborts a batch: the suite
runner converts exceptions into failed certificates.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .domain import (
    Discretization,
    ModelParams,
    SpectralField3,
    restrict_band,
    sobolev_norm,
)
from .heat import RobinPropagator, fd_robin_oracle
from .picard import PicardResult, PicardState, picard_solve, picard_step, x_distance

__all__ = [
    "Certificate",
    "make_certificate",
    "order_certificate",
    "min_order_certificate",
    "run_certificates",
    "energy",
    "gronwall_energy_check",
    "growth_bound_check",
    "elliptic_bound_check",
    "product_bound_check",
    "contraction_check",
    "apriori_bounds_check",
    "fixed_point_residual_check",
    "uniqueness_check",
    "transform_oracle_certificate",
    "smoothing_check",
    "CALIBRATION_MARGIN",
    "PRODUCT_MARGIN",
    "EXACT_SLACK",
    "CONTRACTION_BOUND",
    "ORDER_WINDOW",
]

CALIBRATION_MARGIN = 1.1
PRODUCT_MARGIN = 1.05
EXACT_SLACK = 1.0 + 1e-6
CONTRACTION_BOUND = 0.55
ORDER_WINDOW = 0.2


@dataclass(frozen=True)
class Certificate:
    """One measured-vs-bound record."""

    name: str
    measured: float
    bound: float
    passed: bool
    margin: float | None
    details: dict = field(default_factory=dict)

    def describe(self) -> str:
        status = "PASS" if self.passed else "FAIL"
        return f"{status} {self.name}: measured {self.measured:.6g} vs bound {self.bound:.6g}"


def make_certificate(name: str, measured: float, bound: float, **details) -> Certificate:
    measured = float(measured)
    bound = float(bound)
    margin = None if measured == 0.0 else bound / measured - 1.0
    return Certificate(
        name=name,
        measured=measured,
        bound=bound,
        passed=bool(measured <= bound),
        margin=margin,
        details=details,
    )


def order_certificate(
    name: str, observed: float, expected: float = 2.0, window: float = ORDER_WINDOW, **details
) -> Certificate:
    """Convergence order inside expected +- window."""
    return make_certificate(
        name, abs(observed - expected), window, observed_order=float(observed), **details
    )


def min_order_certificate(
    name: str, observed: float, required: float, **details
) -> Certificate:
    """Convergence order at least required (encoded as required/observed <= 1)."""
    measured = math.inf if observed <= 0 else required / observed
    return make_certificate(
        name, measured, 1.0, observed_order=float(observed), required_order=float(required),
        **details,
    )


def run_certificates(checks) -> list[Certificate]:
    """Run (name, thunk) pairs; an exception becomes a failed certificate."""
    out = []
    for name, thunk in checks:
        try:
            result = thunk()
        except Exception as exc:
            out.append(
                Certificate(
                    name=name, measured=math.inf, bound=0.0, passed=False,
                    margin=None, details={"error": f"{type(exc).__name__}: {exc}"},
                )
            )
            continue
        if isinstance(result, Certificate):
            out.append(result)
        else:
            out.extend(result)
    return out


# --- individual checks ------------------------------------------------------


def energy(w: SpectralField3, s: int, a: float) -> float:
    """Squared vorticity norm, the quantity the growth inequality bounds."""
    return sobolev_norm(w, s, a) ** 2


def gronwall_energy_check(
    times, energies, params: ModelParams, name: str = "gronwall-energy"
) -> Certificate:
    """E(t2) <= E(t1) e^{4 nu gamma^2 (t2 - t1)} along consecutive samples."""
    times = np.asarray(times, dtype=float)
    energies = np.asarray(energies, dtype=float)
    if times.shape != energies.shape or times.size < 2:
        raise ValueError("need matching time and energy sequences of length >= 2")
    rate = 4.0 * params.nu * params.gamma**2
    worst = 0.0
    for t1, t2, e1, e2 in zip(times[:-1], times[1:], energies[:-1], energies[1:]):
        if t2 <= t1:
            raise ValueError("times must be strictly increasing")
        allowed = e1 * math.exp(rate * (t2 - t1))
        if allowed == 0.0:
            ratio = 0.0 if e2 == 0.0 else math.inf
        else:
            ratio = e2 / allowed
        worst = max(worst, ratio)
    return make_certificate(name, worst, EXACT_SLACK, samples=int(times.size))


def growth_bound_check(
    ratios, growth_constant: float, name: str = "growth-bound"
) -> Certificate:
    """Held-out normalized propagation ratios against 1.1x the calibrated constant."""
    worst = max((float(r) for r in ratios), default=0.0)
    return make_certificate(
        name, worst, CALIBRATION_MARGIN * growth_constant,
        growth_constant=float(growth_constant), samples=len(list(ratios)),
    )


def elliptic_bound_check(
    ratios, elliptic_constant: float, name: str = "elliptic-bound"
) -> Certificate:
    worst = max((float(r) for r in ratios), default=0.0)
    return make_certificate(
        name, worst, CALIBRATION_MARGIN * elliptic_constant,
        elliptic_constant=float(elliptic_constant),
    )


def product_bound_check(
    ratios, product_constant: float, name: str = "product-inequality"
) -> Certificate:
    worst = max((float(r) for r in ratios), default=0.0)
    return make_certificate(
        name, worst, PRODUCT_MARGIN * product_constant,
        product_constant=float(product_constant),
    )


def contraction_check(ratios, name: str = "contraction") -> Certificate:
    worst = max((float(r) for r in ratios), default=0.0)
    return make_certificate(name, worst, CONTRACTION_BOUND, sweeps=len(list(ratios)))


def apriori_bounds_check(
    result: PicardResult,
    v0: SpectralField3,
    w0: SpectralField3,
    params: ModelParams,
) -> list[Certificate]:
    """Converged slices inside the two a-priori balls (1.1x allowance)."""
    a, s = params.a, params.s
    h = result.horizon
    v_worst = max(sobolev_norm(v, s + 1, a) for v in result.state.v_slices)
    w_worst = max(sobolev_norm(w, s, a) for w in result.state.omega_slices)
    v_ball = 2.0 * sobolev_norm(v0, s + 1, a)
    w_ball = (
        h.growth_constant
        * math.exp(params.nu * params.gamma**2 * h.T)
        * (sobolev_norm(w0, s, a) + 2.0 * h.T * sobolev_norm(v0, s + 1, a))
    )
    return [
        make_certificate("apriori-velocity", v_worst, CALIBRATION_MARGIN * v_ball,
                         ball=v_ball, horizon=h.T),
        make_certificate("apriori-vorticity", w_worst, CALIBRATION_MARGIN * w_ball,
                         ball=w_ball, horizon=h.T),
    ]


def fixed_point_residual_check(
    result: PicardResult,
    v0: SpectralField3,
    w0: SpectralField3,
    params: ModelParams,
    tol: float,
    quad_nodes: int = 2,
) -> Certificate:
    """One extra sweep moves a converged iterate by at most 2 tol x first move."""
    extra = picard_step(result.state, v0, w0, params, quad_nodes)
    move = x_distance(extra, result.state, params)
    return make_certificate(
        "fixed-point-residual", move, 2.0 * tol * result.diffs[0],
        first_sweep_move=result.diffs[0],
    )


def uniqueness_check(
    v0: SpectralField3,
    w0: SpectralField3,
    params: ModelParams,
    growth_constant: float,
    tol: float = 1e-8,
    quad_nodes: int = 2,
) -> Certificate:
    """Two different initial guesses land on the same fixed point.

    The second guess inflates the constant vorticity slices by 10 percent;
    both runs share the horizon, so their converged states are comparable
    slice by slice.
    """
    first = picard_solve(
        v0, w0, params, growth_constant, tol=tol, quad_nodes=quad_nodes
    )
    n_t = v0.disc.n_t
    skewed = PicardState(
        t_grid=first.state.t_grid,
        v_slices=(v0,) * n_t,
        omega_slices=(w0.scaled(1.1),) * n_t,
        iteration_index=0,
    )
    second = picard_solve(
        v0, w0, params, growth_constant, tol=tol, quad_nodes=quad_nodes,
        horizon=first.horizon, initial_state=skewed,
    )
    gap = x_distance(first.state, second.state, params)
    return make_certificate(
        "uniqueness", gap, 10.0 * tol,
        sweeps_first=first.iterations, sweeps_second=second.iterations,
    )


def transform_oracle_certificate(
    w0: SpectralField3,
    t: float,
    params: ModelParams,
    n_steps: int = 2000,
    bound: float = 5e-3,
    name: str = "heat-route-agreement",
) -> Certificate:
    """Transform propagator against the Crank-Nicolson route on one field."""
    prop = RobinPropagator(w0, params, check_compat=False).at(t)
    ref = fd_robin_oracle(w0, t, params, n_steps=n_steps)
    scale = float(np.max(np.abs(ref.coeffs)))
    diff = float(np.max(np.abs(prop.coeffs - ref.coeffs)))
    measured = diff if scale == 0.0 else diff / scale
    return make_certificate(name, measured, bound, t=float(t), n_steps=int(n_steps))


def smoothing_check(
    w_wide: SpectralField3,
    disc_narrow: Discretization,
    t: float,
    params: ModelParams,
    bound: float = 0.05,
) -> Certificate:
    """Extending the mode band barely moves the propagated norm.

    w_wide must extend a narrow-band field; the comparison field is its
    restriction, so the two differ only in the extra high modes.
    """
    w_narrow = restrict_band(w_wide, disc_narrow)
    s, a = params.s, params.a
    n_wide = sobolev_norm(
        RobinPropagator(w_wide, params, check_compat=False).at(t), s, a
    )
    n_narrow = sobolev_norm(
        RobinPropagator(w_narrow, params, check_compat=False).at(t), s, a
    )
    if n_wide == 0.0:
        raise ValueError("smoothing check needs nonzero propagated data")
    rough_ratio = sobolev_norm(w_wide, s, a) / max(sobolev_norm(w_narrow, s, a), 1e-300)
    return make_certificate(
        "instant-smoothing", abs(n_wide - n_narrow) / n_wide, bound,
        t=float(t), rough_band_growth=float(rough_ratio),
    )
