"""Per-mode inverse of the Robin-wall Poisson operator.

Expanding -Delta v = f in lateral sine modes leaves, for each mode (k1, k2),
a two-point boundary value problem on [0, l_z]:

    -v'' + mu^2 v = f,   mu = pi*|k|/a,
    v'(0) + beta*v(0) = 0,   v(l_z) = 0.

The wall condition is closed with a centered ghost point, the far end is a
Dirichlet cap standing in for decay at infinity, and each mode is a banded
(tridiagonal) direct solve.  Uniqueness fails exactly when beta collides
with one of the mode rates mu, so admissibility is checked first.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.linalg import solve_banded
from scipy.sparse.linalg import LinearOperator, onenormest

from .domain import Discretization, SpectralField3, random_field3, sobolev_norm
from .errors import ResonanceError, SingularSystemError

__all__ = [
    "AdmissibilityReport",
    "check_admissible",
    "solve_elliptic",
    "interior_residual",
    "calibrate_elliptic_constant",
]

DEFAULT_RESONANCE_TOL = 1e-8
DEFAULT_CONDITION_CAP = 1e12


@dataclass(frozen=True)
class AdmissibilityReport:
    """Distance of the Robin coefficient from the resolved mode rates."""

    beta: float
    min_gap: float
    offending_modes: tuple[tuple[int, int], ...]

    @property
    def admissible(self) -> bool:
        return not self.offending_modes


def check_admissible(
    beta: float,
    disc: Discretization,
    a: float,
    tol: float = DEFAULT_RESONANCE_TOL,
) -> AdmissibilityReport:
    """Scan all resolved modes for |beta - pi*|k|/a| below tol."""
    rates = disc.mode_rates(a)
    gaps = np.abs(beta - rates)
    offending = [
        (int(k1) + 1, int(k2) + 1)
        for k1, k2 in np.argwhere(gaps < tol)
    ]
    return AdmissibilityReport(
        beta=float(beta),
        min_gap=float(gaps.min()),
        offending_modes=tuple(offending),
    )


def _mode_bands(mu2: float, beta: float, dz: float, n_unknown: int) -> np.ndarray:
    """Banded matrix (ab form) of one mode's two-point problem."""
    h2 = dz * dz
    ab = np.zeros((3, n_unknown))
    ab[1, :] = 2.0 / h2 + mu2
    ab[1, 0] = 2.0 / h2 - 2.0 * beta / dz + mu2  # ghost-point Robin row
    ab[0, 1:] = -1.0 / h2
    ab[0, 1] = -2.0 / h2
    ab[2, :-1] = -1.0 / h2
    return ab


_COND_CACHE: dict = {}


def _max_condition_estimate(beta: float, a: float, disc: Discretization) -> tuple:
    """1-norm condition estimate, worst resolved mode; cached per geometry."""
    key = (float(beta), float(a), disc)
    hit = _COND_CACHE.get(key)
    if hit is not None:
        return hit
    n_unknown = disc.n_z - 1
    rates = disc.mode_rates(a)
    worst = (0.0, (1, 1))
    for k1 in range(disc.k_max):
        for k2 in range(k1 + 1):  # mu depends on |k| only; mirror symmetric
            ab = _mode_bands(rates[k1, k2] ** 2, beta, disc.dz, n_unknown)
            # column sums of |A|: ab rows hold (upper, diag, lower) per column
            norm_a = np.max(np.abs(ab[0]) + np.abs(ab[1]) + np.abs(ab[2]))
            abt = np.zeros_like(ab)  # transpose swaps the off-diagonal bands
            abt[1] = ab[1]
            abt[0, 1:] = ab[2, :-1]
            abt[2, :-1] = ab[0, 1:]
            inv = LinearOperator(
                (n_unknown, n_unknown),
                matvec=lambda x, ab=ab: solve_banded((1, 1), ab, x),
                rmatvec=lambda x, abt=abt: solve_banded((1, 1), abt, x),
            )
            cond = float(norm_a * onenormest(inv))
            if cond > worst[0]:
                worst = (cond, (k1 + 1, k2 + 1))
    _COND_CACHE[key] = worst
    return worst


def solve_elliptic(
    f: SpectralField3,
    beta: float,
    a: float,
    resonance_tol: float = DEFAULT_RESONANCE_TOL,
    condition_cap: float = DEFAULT_CONDITION_CAP,
) -> SpectralField3:
    """Invert -Delta with the Robin wall condition, mode by mode."""
    disc = f.disc
    report = check_admissible(beta, disc, a, resonance_tol)
    if not report.admissible:
        raise ResonanceError(
            "Robin coefficient beta={:.12g} resonates with lateral mode(s) {} "
            "(gap below {:g})".format(beta, report.offending_modes, resonance_tol),
            modes=report.offending_modes,
        )
    cond, cond_mode = _max_condition_estimate(beta, a, disc)
    if cond > condition_cap:
        raise SingularSystemError(
            f"mode {cond_mode} system condition estimate {cond:.3e} exceeds "
            f"cap {condition_cap:.3e}"
        )

    n_unknown = disc.n_z - 1
    rates = disc.mode_rates(a)
    out = np.zeros_like(f.coeffs)
    for k1 in range(disc.k_max):
        for k2 in range(disc.k_max):
            ab = _mode_bands(rates[k1, k2] ** 2, beta, disc.dz, n_unknown)
            out[k1, k2, :n_unknown] = solve_banded(
                (1, 1), ab, f.coeffs[k1, k2, :n_unknown]
            )
    return f.replace_coeffs(out)


def interior_residual(
    v: SpectralField3, f: SpectralField3, beta: float, a: float
) -> float:
    """Max interior residual of -v'' + mu^2 v - f, relative to max|f|."""
    disc = v.disc
    h2 = disc.dz**2
    mu2 = disc.mode_rates(a)[:, :, None] ** 2
    vc, fc = v.coeffs, f.coeffs
    lap = (vc[:, :, 2:] - 2.0 * vc[:, :, 1:-1] + vc[:, :, :-2]) / h2
    res = -lap + mu2 * vc[:, :, 1:-1] - fc[:, :, 1:-1]
    scale = np.max(np.abs(fc))
    if scale == 0.0:
        return float(np.max(np.abs(res)))
    return float(np.max(np.abs(res)) / scale)


def calibrate_elliptic_constant(
    ensemble_size: int,
    s: int,
    seed: int,
    disc: Discretization,
    a: float,
    beta: float,
    fields: list[SpectralField3] | None = None,
) -> float:
    """Max of ||solve(f)||_{H^s} / ||f||_{H^{s-2}} over an ensemble.

    By default the ensemble is seeded random smooth fields; an explicit list
    of fields replaces it (ensemble_size and seed are then ignored).
    """
    if s < 2:
        raise ValueError("calibration needs s >= 2 (ratio uses H^{s-2})")
    if fields is None:
        if ensemble_size < 1:
            raise ValueError("calibration ensemble must be nonempty")
        rng = np.random.default_rng(seed)
        fields = [random_field3(disc, rng, kind="generic") for _ in range(ensemble_size)]
    elif not fields:
        raise ValueError("calibration ensemble must be nonempty")
    worst = 0.0
    for f in fields:
        denom = sobolev_norm(f, s - 2, a)
        if denom == 0.0:
            continue
        v = solve_elliptic(f, beta, a)
        worst = max(worst, sobolev_norm(v, s, a) / denom)
    if worst == 0.0:
        raise ValueError("calibration ensemble produced no usable fields")
    return worst
