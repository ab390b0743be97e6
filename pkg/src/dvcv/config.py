"""Scenario configuration: a flat ``key = value`` text file with ``#`` comments."""

from __future__ import annotations

import dataclasses
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Optional

from .analysis import RateParams
from .protocol import ProtocolParams
from .tomography import TomographySettings, WignerGrid, default_phases

SCENARIOS = ("resource", "rsp", "teleport", "swap", "tomo-roundtrip", "rates", "bloch-map")


class ConfigError(ValueError):
    pass


def _parse_complex(text: str) -> complex:
    return complex(text.replace(" ", "").replace("i", "j"))


def _parse_phases(text: str) -> tuple[float, ...]:
    parts = [p for p in text.replace(",", " ").split() if p]
    if len(parts) == 1 and parts[0].isdigit():
        return default_phases(int(parts[0]))
    return tuple(float(p) for p in parts)


def _parse_bool(text: str) -> bool:
    low = text.lower()
    if low in ("true", "yes", "1"):
        return True
    if low in ("false", "no", "0"):
        return False
    raise ValueError(f"not a boolean: {text!r}")


# keys owned by each parameter object and the parser for their values
PROTOCOL_KEYS = {
    "squeeze_r": float, "R_tap": float, "beta_over_alpha": float,
    "gamma_plus": float, "gamma_minus": float, "visibility": float,
    "ratio_pdb_pgood_at_H": float, "eta_homodyne": float,
    "cutoff_cv": int, "cutoff_rail": int, "alpha_in": _parse_complex,
    "input_phase": float, "bs_convention": str,
}
TOMOGRAPHY_KEYS = {
    "n_samples": int, "phase_grid": _parse_phases, "eta": float, "cutoff": int,
    "max_iters": int, "log_likelihood_tol": float, "seed": int,
}
RATE_KEYS = {
    "R_rep": float, "R_B": float, "R_alpha": float, "R_beta": float,
    "eta_spcm": float, "a": _parse_complex, "b": _parse_complex,
}
RUN_KEYS = {
    "scenario": str, "output_dir": str, "n_grid": int, "phi_origin": float,
    "wigner_extent": float, "wigner_points": int, "efficiency_correction": _parse_bool,
}
ALL_KEYS = {**PROTOCOL_KEYS, **TOMOGRAPHY_KEYS, **RATE_KEYS, **RUN_KEYS}


@dataclass(frozen=True)
class ScenarioConfig:
    scenario: str
    protocol: ProtocolParams = field(default_factory=ProtocolParams)
    tomography: TomographySettings = field(default_factory=TomographySettings)
    rates: RateParams = field(default_factory=RateParams)
    output_dir: Path = Path(".")
    n_grid: int = 10_000
    phi_origin: float = 0.0
    wigner: WignerGrid = field(default_factory=WignerGrid)
    efficiency_correction: bool = True

    @property
    def input_state(self) -> tuple[complex, complex]:
        """Normalized input polarization ``(a, b)`` taken from the rate keys."""
        a, b = complex(self.rates.a), complex(self.rates.b)
        norm = math.sqrt(abs(a) ** 2 + abs(b) ** 2)
        if norm == 0:
            raise ConfigError("a and b are both zero")
        return a / norm, b / norm

    def with_seed(self, seed: int) -> "ScenarioConfig":
        return dataclasses.replace(self, tomography=dataclasses.replace(self.tomography, seed=seed))


def parse_text(text: str) -> dict[str, Any]:
    """Parse ``key = value`` lines into typed values; unknown keys raise ConfigError."""
    values: dict[str, Any] = {}
    for lineno, raw in enumerate(text.splitlines(), 1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        key, sep, value = line.partition("=")
        key, value = key.strip(), value.strip()
        if not sep or not key:
            raise ConfigError(f"line {lineno}: expected 'key = value'")
        if key not in ALL_KEYS:
            raise ConfigError(f"line {lineno}: unknown key {key!r}")
        if key in values:
            raise ConfigError(f"line {lineno}: duplicate key {key!r}")
        try:
            values[key] = ALL_KEYS[key](value)
        except ValueError as exc:
            raise ConfigError(f"line {lineno}: bad value for {key}: {exc}") from None
    return values


def build(values: dict[str, Any], scenario: Optional[str] = None) -> ScenarioConfig:
    """Validate parsed values into a ScenarioConfig before anything runs."""
    name = scenario or values.get("scenario")
    if name is None:
        raise ConfigError("no scenario given")
    if name not in SCENARIOS:
        raise ConfigError(f"unknown scenario {name!r}; expected one of {', '.join(SCENARIOS)}")

    def pick(keys):
        return {k: v for k, v in values.items() if k in keys}

    try:
        protocol = ProtocolParams(**pick(PROTOCOL_KEYS))
        if protocol.bs_convention not in ("real", "symmetric"):
            raise ValueError(f"unknown beamsplitter convention {protocol.bs_convention!r}")
        tomo = TomographySettings(**pick(TOMOGRAPHY_KEYS))
        rate = RateParams(**pick(RATE_KEYS))
        extent = values.get("wigner_extent", 4.0)
        points = values.get("wigner_points", 81)
        if extent <= 0 or points < 2:
            raise ValueError("wigner grid must have positive extent and at least 2 points")
        n_grid = values.get("n_grid", 10_000)
        if n_grid < 100:
            raise ValueError("n_grid must be at least 100")
        cfg = ScenarioConfig(
            scenario=name,
            protocol=protocol,
            tomography=tomo,
            rates=rate,
            output_dir=Path(values.get("output_dir", ".")),
            n_grid=n_grid,
            phi_origin=values.get("phi_origin", 0.0),
            wigner=WignerGrid(-extent, extent, -extent, extent, points),
            efficiency_correction=values.get("efficiency_correction", True),
        )
        cfg.input_state
    except (TypeError, ValueError) as exc:
        raise ConfigError(str(exc)) from None
    return cfg


def load(path, scenario: Optional[str] = None) -> ScenarioConfig:
    try:
        text = Path(path).read_text()
    except OSError as exc:
        raise ConfigError(f"cannot read config: {exc}") from None
    return build(parse_text(text), scenario)
