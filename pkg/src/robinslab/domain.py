"""Geometry, spectral-grid fields, and discrete Sobolev calculus.

The domain is the box (0, a) x (0, a) x (0, inf), truncated at z = l_z.
Fields vanish on the lateral walls, so the lateral directions are carried
as sine modes sin(k1*pi*x1/a) * sin(k2*pi*x2/a) with 1 <= k1, k2 <= k_max,
while z stays a uniform point grid. A 3-d field is therefore a coefficient
array of shape (k_max, k_max, n_z).
"""

from __future__ import annotations

import itertools
from dataclasses import dataclass
from functools import cached_property

import numpy as np
from scipy.fft import dst
from scipy.integrate import trapezoid

__all__ = [
    "MAX_DERIVATIVE_ORDER",
    "ModelParams",
    "Discretization",
    "SpectralField3",
    "Field2",
    "zero_field3",
    "field3_from_profile",
    "field3_from_coeffs",
    "sobolev_norm",
    "d_z",
    "lateral_values",
    "field_from_lateral_values",
    "pointwise_product",
    "product_ratio",
    "random_field3",
    "multi_indices",
]

# Highest z-derivative order the norm machinery supports.  H^{s+1} norms of
# the velocity-square component need order s+1, so s = 2 uses all of it.
MAX_DERIVATIVE_ORDER = 3


@dataclass(frozen=True)
class ModelParams:
    """Physical parameters of the model.

    a      lateral box size (both horizontal directions)
    nu     viscosity of the vorticity equation
    gamma  Robin coefficient of the vorticity wall condition at z = 0
    beta   Robin coefficient of the stream-function wall condition
    s      Sobolev index used by the solver (integer, >= 2)
    """

    a: float
    nu: float
    gamma: float
    beta: float
    s: int = 2

    def __post_init__(self):
        if not self.a > 0:
            raise ValueError(f"lateral size a must be positive, got {self.a}")
        if not self.nu > 0:
            raise ValueError(f"viscosity nu must be positive, got {self.nu}")
        if int(self.s) != self.s or self.s < 2:
            raise ValueError(f"Sobolev index s must be an integer >= 2, got {self.s}")
        object.__setattr__(self, "s", int(self.s))

    def mode_rate(self, k1: int, k2: int) -> float:
        """Decay rate pi*|k|/a of lateral mode (k1, k2)."""
        return np.pi * np.hypot(k1, k2) / self.a


@dataclass(frozen=True)
class Discretization:
    """Grid resolution knobs.

    k_max       lateral sine modes per direction
    n_z         z grid points on [0, l_z]
    l_z         truncation depth of the half-infinite direction
    n_t         stored time slices (uniform grid on [0, T])
    quad_nodes  Duhamel quadrature nodes per slice interval (2 = trapezoid)
    """

    k_max: int
    n_z: int
    l_z: float
    n_t: int = 2
    quad_nodes: int = 2

    def __post_init__(self):
        if self.k_max < 1:
            raise ValueError("k_max must be >= 1")
        if self.n_z < 8:
            raise ValueError("n_z must be >= 8")
        if not self.l_z > 0:
            raise ValueError("l_z must be positive")
        if self.n_t < 2:
            raise ValueError("n_t must be >= 2")
        if self.quad_nodes < 2:
            raise ValueError("quad_nodes must be >= 2")

    @cached_property
    def z(self) -> np.ndarray:
        grid = np.linspace(0.0, self.l_z, self.n_z)
        grid.flags.writeable = False
        return grid

    @property
    def dz(self) -> float:
        return self.l_z / (self.n_z - 1)

    def mode_rates(self, a: float) -> np.ndarray:
        """Table of pi*|k|/a over the resolved (k1, k2) grid."""
        k = np.arange(1, self.k_max + 1, dtype=float)
        return np.pi * np.sqrt(k[:, None] ** 2 + k[None, :] ** 2) / a

    def check_tail(self, rate: float, tol: float) -> None:
        """Require exp(-rate*l_z) below tol so truncation stays in budget."""
        tail = np.exp(-rate * self.l_z)
        if tail >= tol:
            raise ValueError(
                f"l_z={self.l_z} too short: exp(-{rate:g}*l_z)={tail:.3e} "
                f"exceeds tail tolerance {tol:g}"
            )


def _check_coeff_array(coeffs: np.ndarray, shape: tuple) -> np.ndarray:
    arr = np.asarray(coeffs, dtype=float)
    if arr.shape != shape:
        raise ValueError(f"coefficient array must have shape {shape}, got {arr.shape}")
    arr = arr.copy()
    arr.flags.writeable = False
    return arr


@dataclass(frozen=True)
class SpectralField3:
    """Sine-mode x z-grid coefficients of a 3-d field.

    coeffs[k1-1, k2-1, j] multiplies sin(k1*pi*x1/a)*sin(k2*pi*x2/a) at z_j.
    Instances are immutable; operations return new fields.
    """

    coeffs: np.ndarray
    disc: Discretization

    def __post_init__(self):
        shape = (self.disc.k_max, self.disc.k_max, self.disc.n_z)
        object.__setattr__(self, "coeffs", _check_coeff_array(self.coeffs, shape))

    def replace_coeffs(self, coeffs: np.ndarray) -> "SpectralField3":
        return SpectralField3(coeffs, self.disc)

    def scaled(self, factor: float) -> "SpectralField3":
        return SpectralField3(self.coeffs * factor, self.disc)

    def __add__(self, other: "SpectralField3") -> "SpectralField3":
        _require_same_disc(self, other)
        return SpectralField3(self.coeffs + other.coeffs, self.disc)

    def __sub__(self, other: "SpectralField3") -> "SpectralField3":
        _require_same_disc(self, other)
        return SpectralField3(self.coeffs - other.coeffs, self.disc)

    def max_abs(self) -> float:
        return float(np.max(np.abs(self.coeffs))) if self.coeffs.size else 0.0


@dataclass(frozen=True)
class Field2:
    """Lateral sine-mode coefficients of a 2-d field on the wall cross-section."""

    coeffs: np.ndarray
    disc: Discretization

    def __post_init__(self):
        shape = (self.disc.k_max, self.disc.k_max)
        object.__setattr__(self, "coeffs", _check_coeff_array(self.coeffs, shape))


def _require_same_disc(u, v) -> None:
    if u.disc != v.disc:
        raise ValueError("fields live on different discretizations")


def zero_field3(disc: Discretization) -> SpectralField3:
    return SpectralField3(np.zeros((disc.k_max, disc.k_max, disc.n_z)), disc)


def field3_from_coeffs(coeffs: np.ndarray, disc: Discretization) -> SpectralField3:
    return SpectralField3(coeffs, disc)


def field3_from_profile(
    disc: Discretization, mode: tuple[int, int], profile: np.ndarray
) -> SpectralField3:
    """Single lateral mode with the given z profile."""
    k1, k2 = mode
    if not (1 <= k1 <= disc.k_max and 1 <= k2 <= disc.k_max):
        raise ValueError(f"mode {mode} outside resolved range 1..{disc.k_max}")
    coeffs = np.zeros((disc.k_max, disc.k_max, disc.n_z))
    coeffs[k1 - 1, k2 - 1, :] = np.asarray(profile, dtype=float)
    return SpectralField3(coeffs, disc)


# ---------------------------------------------------------------------------
# z derivatives: second-order centered stencils, one-sided at both ends.


def _dz1(c: np.ndarray, dz: float) -> np.ndarray:
    out = np.empty_like(c)
    out[..., 1:-1] = (c[..., 2:] - c[..., :-2]) / (2.0 * dz)
    out[..., 0] = (-3.0 * c[..., 0] + 4.0 * c[..., 1] - c[..., 2]) / (2.0 * dz)
    out[..., -1] = (3.0 * c[..., -1] - 4.0 * c[..., -2] + c[..., -3]) / (2.0 * dz)
    return out


def _dz2(c: np.ndarray, dz: float) -> np.ndarray:
    h2 = dz * dz
    out = np.empty_like(c)
    out[..., 1:-1] = (c[..., 2:] - 2.0 * c[..., 1:-1] + c[..., :-2]) / h2
    out[..., 0] = (
        2.0 * c[..., 0] - 5.0 * c[..., 1] + 4.0 * c[..., 2] - c[..., 3]
    ) / h2
    out[..., -1] = (
        2.0 * c[..., -1] - 5.0 * c[..., -2] + 4.0 * c[..., -3] - c[..., -4]
    ) / h2
    return out


def _dz_profile(c: np.ndarray, dz: float, order: int) -> np.ndarray:
    if order == 0:
        return c
    if order == 1:
        return _dz1(c, dz)
    if order == 2:
        return _dz2(c, dz)
    if order == 3:
        return _dz1(_dz2(c, dz), dz)
    raise ValueError(f"z-derivative order {order} not supported")


def d_z(f: SpectralField3, order: int = 1) -> SpectralField3:
    """z derivative of a field, order 1 or 2."""
    if order not in (1, 2):
        raise ValueError(f"d_z supports orders 1 and 2, got {order}")
    if f.disc.n_z < 4:
        raise ValueError("n_z >= 4 required for one-sided boundary stencils")
    return f.replace_coeffs(_dz_profile(f.coeffs, f.disc.dz, order))


# ---------------------------------------------------------------------------
# Sobolev norms.  Unweighted derivative-sum convention:
#     ||f||_{H^s}^2 = sum over all multi-indices |alpha| <= s of ||D^alpha f||_{L2}^2
# Lateral derivatives act mode-wise (sin <-> cos flips preserve the mode's L2
# weight a/2 per direction); z derivatives use the stencils above; the
# z integral is trapezoid.


def multi_indices(s: int) -> list[tuple[int, int, int]]:
    """All 3-d multi-indices with |alpha| <= s, in a fixed order."""
    out = []
    for total in range(s + 1):
        for a1, a2 in itertools.product(range(total + 1), repeat=2):
            a3 = total - a1 - a2
            if a3 >= 0:
                out.append((a1, a2, a3))
    return out


def sobolev_norm(f: SpectralField3, s: int, a: float) -> float:
    """Discrete H^s norm of a field on the box of lateral size a."""
    if int(s) != s or s < 0:
        raise ValueError(f"Sobolev order must be a nonnegative integer, got {s}")
    s = int(s)
    if s > MAX_DERIVATIVE_ORDER:
        raise ValueError(
            f"Sobolev order {s} above supported maximum {MAX_DERIVATIVE_ORDER}"
        )
    disc = f.disc
    dz = disc.dz
    profiles = [f.coeffs]
    for order in range(1, s + 1):
        profiles.append(_dz_profile(f.coeffs, dz, order))
    k = np.arange(1, disc.k_max + 1, dtype=float)
    kfac1 = (np.pi * k[:, None] / a) ** 2 * np.ones((1, disc.k_max))
    kfac2 = (np.pi * k[None, :] / a) ** 2 * np.ones((disc.k_max, 1))
    zints = [trapezoid(p * p, dx=dz, axis=-1) for p in profiles]
    acc = 0.0
    for a1, a2, a3 in multi_indices(s):
        acc += float(np.sum(kfac1**a1 * kfac2**a2 * zints[a3]))
    return float(np.sqrt(0.25 * a * a * acc))


# ---------------------------------------------------------------------------
# Lateral collocation transforms and dealiased products.
#
# Products are formed on a padded sine-collocation grid (2*k_max + 1 interior
# points per direction, above the 3/2 minimum) and projected back onto the
# resolved modes, so no quadratic mode aliases into the kept band.


def _pad_points(k_max: int) -> int:
    return 2 * k_max + 1


def lateral_values(f: SpectralField3, n_pad: int | None = None) -> np.ndarray:
    """Evaluate on the interior sine-collocation grid, shape (M, M, n_z)."""
    disc = f.disc
    m = n_pad if n_pad is not None else _pad_points(disc.k_max)
    if m < disc.k_max:
        raise ValueError("collocation grid smaller than the resolved band")
    padded = np.zeros((m, m, disc.n_z))
    padded[: disc.k_max, : disc.k_max, :] = f.coeffs
    vals = dst(dst(padded, type=1, axis=0), type=1, axis=1) / 4.0
    return vals


def field_from_lateral_values(vals: np.ndarray, disc: Discretization) -> SpectralField3:
    """Project collocation values back onto the resolved sine band."""
    m = vals.shape[0]
    full = dst(dst(vals, type=1, axis=0), type=1, axis=1) / (m + 1) ** 2
    return SpectralField3(full[: disc.k_max, : disc.k_max, :], disc)


def pointwise_product(u: SpectralField3, v: SpectralField3) -> SpectralField3:
    """Dealiased pointwise product of two fields."""
    _require_same_disc(u, v)
    m = _pad_points(u.disc.k_max)
    vals = lateral_values(u, m) * lateral_values(v, m)
    return field_from_lateral_values(vals, u.disc)


def restrict_band(f: SpectralField3, disc: Discretization) -> SpectralField3:
    """Drop lateral modes above disc.k_max; z grids must agree."""
    src = f.disc
    if (src.n_z, src.l_z) != (disc.n_z, disc.l_z):
        raise ValueError("restrict_band requires matching z discretizations")
    if disc.k_max > src.k_max:
        raise ValueError("restrict_band cannot widen the mode band")
    return SpectralField3(f.coeffs[: disc.k_max, : disc.k_max, :], disc)


def product_ratio(u: SpectralField3, v: SpectralField3, s: int, a: float) -> float:
    """||u*v||_{H^s} / (||u||_{H^s} ||v||_{H^s}); factors must have nonzero norm."""
    nu_ = sobolev_norm(u, s, a)
    nv = sobolev_norm(v, s, a)
    if nu_ == 0.0 or nv == 0.0:
        raise ValueError("product_ratio requires factors with nonzero H^s norm")
    return sobolev_norm(pointwise_product(u, v), s, a) / (nu_ * nv)


# ---------------------------------------------------------------------------
# Reproducible random fields for calibration ensembles.


def random_field3(
    disc: Discretization,
    rng: np.random.Generator,
    kind: str = "generic",
    gamma: float | None = None,
    lateral_decay: float = 3.0,
    amplitude: float = 1.0,
) -> SpectralField3:
    """Random smooth decaying field.

    kind = "generic"  two decaying exponentials per mode, free wall trace
           "robin"    z profiles satisfying c'(0) + gamma*c(0) = 0
           "vspace"   z**3-type profiles: value, slope and curvature vanish at z=0
           "flat"     slowly decaying lateral amplitudes 1/(k1*k2), rough data
    """
    K, n = disc.k_max, disc.n_z
    z = disc.z
    kk1 = np.arange(1, K + 1, dtype=float)[:, None]
    kk2 = np.arange(1, K + 1, dtype=float)[None, :]
    if kind == "flat":
        amps = rng.choice([-1.0, 1.0], size=(K, K)) / (kk1 * kk2)
    else:
        amps = rng.normal(size=(K, K)) / (kk1**2 + kk2**2) ** (lateral_decay / 2.0)

    if kind in ("generic", "flat"):
        p = rng.uniform(1.0, 2.0, size=(K, K, 1))
        q = rng.uniform(2.0, 3.0, size=(K, K, 1))
        g = rng.uniform(-1.0, 1.0, size=(K, K, 1))
        profiles = np.exp(-p * z) + g * np.exp(-q * z)
    elif kind == "robin":
        if gamma is None or gamma <= 0:
            raise ValueError("robin profiles need gamma > 0")
        p = gamma * rng.uniform(1.3, 2.2, size=(K, K, 1))
        q = gamma * rng.uniform(2.3, 3.2, size=(K, K, 1))
        # c(z) = e^{-pz} + w e^{-qz} with w chosen so c'(0) + gamma c(0) = 0
        w = -(gamma - p) / (gamma - q)
        profiles = np.exp(-p * z) + w * np.exp(-q * z)
    elif kind == "vspace":
        p = rng.uniform(1.5, 2.5, size=(K, K, 1))
        raw = z**3 * np.exp(-p * z)
        profiles = raw / np.max(raw, axis=-1, keepdims=True)
    else:
        raise ValueError(f"unknown random field kind {kind!r}")

    coeffs = amplitude * amps[:, :, None] * profiles
    return SpectralField3(coeffs, disc)
