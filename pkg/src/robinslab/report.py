"""Run configuration parsing and report serialization.

Config files are flat JSON with nested records; parsing is strict (unknown
keys are errors) and every range constraint is checked up front, including
that the z-truncation tail e^{-gamma l_z} fits the tail tolerance.  Reports
serialize with sorted keys and full float precision so identical runs
produce byte-identical files; timing lives in its own block, the only part
excluded from determinism comparisons.
"""

from __future__ import annotations

import csv
import json
import math
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .domain import Discretization, ModelParams, SpectralField3, random_field3
from .errors import ConfigError
from .verify import Certificate

__all__ = [
    "ToleranceSettings",
    "RunConfig",
    "parse_config",
    "load_config",
    "build_field",
    "certificate_to_dict",
    "certificate_from_dict",
    "write_report",
    "read_report",
    "write_norms_csv",
    "read_norms_csv",
    "write_snapshot",
    "read_snapshot",
]

_FLOAT_FMT = "{:.17g}"


@dataclass(frozen=True)
class ToleranceSettings:
    resonance_tol: float = 1e-8
    picard_tol: float = 1e-8
    tail_tol: float = 1e-10

    def __post_init__(self):
        for name in ("resonance_tol", "picard_tol", "tail_tol"):
            value = getattr(self, name)
            if not 0.0 < value < 1.0:
                raise ConfigError(f"{name} must lie in (0, 1), got {value}")


@dataclass(frozen=True)
class RunConfig:
    """Parsed, validated run configuration."""

    params: ModelParams
    disc: Discretization
    seed: int
    tolerances: ToleranceSettings
    elliptic_constant: float | None
    growth_constant: float | None
    initial_v: dict
    initial_w: dict

    def echo(self) -> dict:
        """JSON-ready copy of the effective configuration."""
        out = {
            "params": {
                "a": self.params.a,
                "nu": self.params.nu,
                "gamma": self.params.gamma,
                "beta": self.params.beta,
                "s": self.params.s,
            },
            "disc": {
                "k_max": self.disc.k_max,
                "n_z": self.disc.n_z,
                "l_z": self.disc.l_z,
                "n_t": self.disc.n_t,
                "quad_nodes": self.disc.quad_nodes,
            },
            "seed": self.seed,
            "tolerances": {
                "resonance_tol": self.tolerances.resonance_tol,
                "picard_tol": self.tolerances.picard_tol,
                "tail_tol": self.tolerances.tail_tol,
            },
            "initial_data": {"v": dict(self.initial_v), "w": dict(self.initial_w)},
        }
        constants = {}
        if self.elliptic_constant is not None:
            constants["elliptic_constant"] = self.elliptic_constant
        if self.growth_constant is not None:
            constants["growth_constant"] = self.growth_constant
        if constants:
            out["constants"] = constants
        return out


def _require_keys(record: dict, allowed: set, required: set, where: str) -> None:
    unknown = set(record) - allowed
    if unknown:
        raise ConfigError(f"unknown keys in {where}: {sorted(unknown)}")
    missing = required - set(record)
    if missing:
        raise ConfigError(f"missing keys in {where}: {sorted(missing)}")


def _number(record: dict, key: str, where: str) -> float:
    value = record[key]
    if isinstance(value, bool) or not isinstance(value, (int, float)):
        raise ConfigError(f"{where}.{key} must be a number, got {value!r}")
    return float(value)


def _integer(record: dict, key: str, where: str) -> int:
    value = record[key]
    if isinstance(value, bool) or not isinstance(value, int):
        raise ConfigError(f"{where}.{key} must be an integer, got {value!r}")
    return value


_FAMILY_KEYS = {
    "zero": set(),
    "eigenmode": {"mode", "amplitude"},
    "random": {"kind", "amplitude"},
    "file": {"path"},
}
_RANDOM_KINDS = {"generic", "robin", "vspace", "flat"}


def _normalize_family(spec, where: str) -> dict:
    if not isinstance(spec, dict):
        raise ConfigError(f"{where} must be a record, got {spec!r}")
    if "family" not in spec:
        raise ConfigError(f"{where} needs a 'family' key")
    family = spec["family"]
    if family not in _FAMILY_KEYS:
        raise ConfigError(
            f"{where}.family must be one of {sorted(_FAMILY_KEYS)}, got {family!r}"
        )
    _require_keys(spec, _FAMILY_KEYS[family] | {"family"}, {"family"}, where)
    out = {"family": family}
    if family == "eigenmode":
        mode = spec.get("mode", [1, 1])
        if (
            not isinstance(mode, (list, tuple))
            or len(mode) != 2
            or not all(isinstance(k, int) and k >= 1 for k in mode)
        ):
            raise ConfigError(f"{where}.mode must be two positive integers")
        out["mode"] = [int(mode[0]), int(mode[1])]
        out["amplitude"] = _number(spec, "amplitude", where) if "amplitude" in spec else 1.0
    elif family == "random":
        kind = spec.get("kind", "robin")
        if kind not in _RANDOM_KINDS:
            raise ConfigError(
                f"{where}.kind must be one of {sorted(_RANDOM_KINDS)}, got {kind!r}"
            )
        out["kind"] = kind
        out["amplitude"] = _number(spec, "amplitude", where) if "amplitude" in spec else 1.0
    elif family == "file":
        if not isinstance(spec.get("path"), str):
            raise ConfigError(f"{where}.path must be a string")
        out["path"] = spec["path"]
    return out


def parse_config(raw: dict, seed_override: int | None = None) -> RunConfig:
    """Validate a decoded JSON record into a RunConfig."""
    if not isinstance(raw, dict):
        raise ConfigError("configuration root must be a JSON object")
    _require_keys(
        raw,
        {"params", "disc", "seed", "tolerances", "constants", "initial_data"},
        {"params", "disc", "seed"},
        "config",
    )

    p = raw["params"]
    _require_keys(p, {"a", "nu", "gamma", "beta", "s"}, {"a", "nu", "gamma", "beta"}, "params")
    try:
        params = ModelParams(
            a=_number(p, "a", "params"),
            nu=_number(p, "nu", "params"),
            gamma=_number(p, "gamma", "params"),
            beta=_number(p, "beta", "params"),
            s=_integer(p, "s", "params") if "s" in p else 2,
        )
    except ValueError as exc:
        raise ConfigError(f"params: {exc}") from exc

    d = raw["disc"]
    _require_keys(
        d, {"k_max", "n_z", "l_z", "n_t", "quad_nodes"}, {"k_max", "n_z", "l_z"}, "disc"
    )
    try:
        disc = Discretization(
            k_max=_integer(d, "k_max", "disc"),
            n_z=_integer(d, "n_z", "disc"),
            l_z=_number(d, "l_z", "disc"),
            n_t=_integer(d, "n_t", "disc") if "n_t" in d else 9,
            quad_nodes=_integer(d, "quad_nodes", "disc") if "quad_nodes" in d else 2,
        )
    except ValueError as exc:
        raise ConfigError(f"disc: {exc}") from exc

    seed = raw["seed"]
    if isinstance(seed, bool) or not isinstance(seed, int) or seed < 0:
        raise ConfigError(f"seed must be a nonnegative integer, got {seed!r}")
    if seed_override is not None:
        seed = seed_override

    tol_rec = raw.get("tolerances", {})
    _require_keys(
        tol_rec, {"resonance_tol", "picard_tol", "tail_tol"}, set(), "tolerances"
    )
    tolerances = ToleranceSettings(
        **{k: _number(tol_rec, k, "tolerances") for k in tol_rec}
    )

    const_rec = raw.get("constants", {})
    _require_keys(
        const_rec, {"elliptic_constant", "growth_constant"}, set(), "constants"
    )
    elliptic_constant = (
        _number(const_rec, "elliptic_constant", "constants")
        if "elliptic_constant" in const_rec
        else None
    )
    growth_constant = (
        _number(const_rec, "growth_constant", "constants")
        if "growth_constant" in const_rec
        else None
    )
    if elliptic_constant is not None and elliptic_constant <= 0:
        raise ConfigError("constants.elliptic_constant must be positive")
    if growth_constant is not None and growth_constant < 1.0:
        raise ConfigError("constants.growth_constant cannot be below its t=0 value 1")

    data_rec = raw.get("initial_data", {})
    _require_keys(data_rec, {"v", "w"}, set(), "initial_data")
    initial_v = _normalize_family(data_rec.get("v", {"family": "zero"}), "initial_data.v")
    initial_w = _normalize_family(data_rec.get("w", {"family": "zero"}), "initial_data.w")

    if params.gamma > 0:
        try:
            disc.check_tail(params.gamma, tolerances.tail_tol)
        except ValueError as exc:
            raise ConfigError(str(exc)) from exc

    return RunConfig(
        params=params,
        disc=disc,
        seed=seed,
        tolerances=tolerances,
        elliptic_constant=elliptic_constant,
        growth_constant=growth_constant,
        initial_v=initial_v,
        initial_w=initial_w,
    )


def load_config(path, seed_override: int | None = None) -> RunConfig:
    path = Path(path)
    try:
        raw = json.loads(path.read_text())
    except json.JSONDecodeError as exc:
        raise ConfigError(f"{path}: invalid JSON: {exc}") from exc
    config = parse_config(raw, seed_override)
    for spec in (config.initial_v, config.initial_w):
        if spec["family"] == "file":
            spec["path"] = str((path.parent / spec["path"]).resolve())
    return config


def build_field(
    spec: dict,
    config: RunConfig,
    rng: np.random.Generator,
) -> SpectralField3:
    """Materialize an initial-data family spec on the configured grid."""
    disc, params = config.disc, config.params
    family = spec["family"]
    if family == "zero":
        return SpectralField3(np.zeros((disc.k_max, disc.k_max, disc.n_z)), disc)
    if family == "eigenmode":
        k1, k2 = spec["mode"]
        if k1 > disc.k_max or k2 > disc.k_max:
            raise ConfigError(f"eigenmode {k1, k2} outside resolved band {disc.k_max}")
        coeffs = np.zeros((disc.k_max, disc.k_max, disc.n_z))
        coeffs[k1 - 1, k2 - 1] = spec["amplitude"] * np.exp(-params.gamma * disc.z)
        return SpectralField3(coeffs, disc)
    if family == "random":
        return random_field3(
            disc, rng, kind=spec["kind"], gamma=params.gamma,
            amplitude=spec["amplitude"],
        )
    return read_snapshot(spec["path"], disc)


# --- serialization ----------------------------------------------------------


def certificate_to_dict(cert: Certificate) -> dict:
    return {
        "name": cert.name,
        "measured": cert.measured,
        "bound": cert.bound,
        "passed": cert.passed,
        "margin": cert.margin,
        "details": dict(cert.details),
    }


def certificate_from_dict(record: dict) -> Certificate:
    return Certificate(
        name=record["name"],
        measured=float(record["measured"]),
        bound=float(record["bound"]),
        passed=bool(record["passed"]),
        margin=None if record["margin"] is None else float(record["margin"]),
        details=dict(record["details"]),
    )


def _json_safe(value):
    if isinstance(value, (np.floating, np.integer)):
        return value.item()
    if isinstance(value, np.ndarray):
        return [_json_safe(v) for v in value.tolist()]
    if isinstance(value, dict):
        return {k: _json_safe(v) for k, v in value.items()}
    if isinstance(value, (list, tuple)):
        return [_json_safe(v) for v in value]
    if isinstance(value, float) and math.isinf(value):
        return "inf" if value > 0 else "-inf"
    return value


def write_report(path, report: dict) -> None:
    path = Path(path)
    path.write_text(json.dumps(_json_safe(report), sort_keys=True, indent=2) + "\n")


def read_report(path) -> dict:
    return json.loads(Path(path).read_text())


def write_norms_csv(path, times, v_norms, w_norms, energies) -> None:
    """Norm time series at full float precision."""
    rows = zip(times, v_norms, w_norms, energies)
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["t", "v_norm_hs1", "w_norm_hs", "energy"])
        for row in rows:
            writer.writerow([_FLOAT_FMT.format(float(x)) for x in row])


def read_norms_csv(path) -> dict:
    with open(path, newline="") as fh:
        reader = csv.DictReader(fh)
        cols = {name: [] for name in reader.fieldnames}
        for row in reader:
            for name, text in row.items():
                cols[name].append(float(text))
    return {name: np.asarray(vals) for name, vals in cols.items()}


def write_snapshot(path, field: SpectralField3) -> None:
    """Sparse (k1, k2, j, coefficient) dump; zero entries are skipped."""
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["k1", "k2", "j", "coefficient"])
        coeffs = field.coeffs
        for k1, k2, j in zip(*np.nonzero(coeffs)):
            writer.writerow(
                [int(k1) + 1, int(k2) + 1, int(j), _FLOAT_FMT.format(coeffs[k1, k2, j])]
            )


def read_snapshot(path, disc: Discretization) -> SpectralField3:
    coeffs = np.zeros((disc.k_max, disc.k_max, disc.n_z))
    try:
        fh = open(path, newline="")
    except OSError as exc:
        raise ConfigError(f"cannot read coefficient file {path}: {exc}") from exc
    with fh:
        reader = csv.DictReader(fh)
        expected = {"k1", "k2", "j", "coefficient"}
        if set(reader.fieldnames or ()) != expected:
            raise ConfigError(
                f"{path}: coefficient files need columns {sorted(expected)}"
            )
        for row in reader:
            k1, k2, j = int(row["k1"]), int(row["k2"]), int(row["j"])
            if not (1 <= k1 <= disc.k_max and 1 <= k2 <= disc.k_max):
                raise ConfigError(f"{path}: mode ({k1}, {k2}) outside resolved band")
            if not 0 <= j < disc.n_z:
                raise ConfigError(f"{path}: grid index {j} outside [0, {disc.n_z})")
            coeffs[k1 - 1, k2 - 1, j] = float(row["coefficient"])
    return SpectralField3(coeffs, disc)
