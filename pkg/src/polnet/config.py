"""Experiment configuration: one strict schema for every experiment kind.

Files may be JSON or YAML. Unknown keys are rejected so that a misspelled
physics parameter never silently falls back to its default.
"""

from __future__ import annotations

import json
from pathlib import Path
from typing import Literal

import numpy as np
import yaml
from pydantic import BaseModel, ConfigDict, Field, ValidationError

from .components import AnalyzerConfig, SpdcConfig
from .fiber import (
    TYPICAL_ATTENUATION_DB_KM,
    ClassicalChannel,
    FiberLink,
    FiberSection,
    db_per_km_to_per_m,
)

EXPERIMENT_KINDS = ("fringe", "tomography", "cd_timing", "dgd_report", "raman_sweep", "jsi", "twist_scan")


class ConfigError(ValueError):
    def __init__(self, errors: list[str]):
        self.errors = errors
        super().__init__("invalid configuration:\n  " + "\n  ".join(errors))


class _Block(BaseModel):
    model_config = ConfigDict(extra="forbid", validate_assignment=True)


def _default_scan() -> list[float]:
    return [float(x) for x in np.linspace(-45.0, 180.0, 16)]


class FringeSettings(_Block):
    theta_a: list[float] = Field(default_factory=lambda: [-45.0, 0.0, 45.0, 90.0], description="deg")
    theta_b: list[float] = Field(default_factory=_default_scan, description="deg")
    outcome: Literal["00", "01", "10", "11"] = "00"


class TwistScanSettings(_Block):
    twist_rates: list[float] = Field(default_factory=lambda: [float(x) for x in np.linspace(0.0, 0.5, 10)],
                                     description="rad/m")
    fiber_length: float = Field(10.0, gt=0.0, description="m")
    theta_a: float = Field(0.0, description="deg")
    theta_b: list[float] = Field(default_factory=_default_scan, description="deg")
    outcome: Literal["00", "01", "10", "11"] = "00"


class CdTimingSettings(_Block):
    distances_km: list[float] = Field(default_factory=lambda: [1.0, 10.0, 25.0, 50.0])
    dispersive_arms: Literal["both", "b"] = "both"
    pairs: int = Field(10_000, gt=0)
    delay_bins: int = Field(60, gt=0)


class DgdSettings(_Block):
    wavelengths: list[float] = Field(default_factory=lambda: [1530.0, 1540.0, 1550.0, 1560.0, 1570.0])
    step_nm: float = Field(0.1, gt=0.0)


class RamanSweepSettings(_Block):
    wavelengths: list[float] | None = None  # default: every row of the coefficient table
    distances_km: list[float] = Field(default_factory=lambda: [float(x) for x in range(1, 26)])
    powers: list[float] = Field(default_factory=lambda: [float(x) for x in np.logspace(13, 15, 9)])
    fixed_power: float = Field(1e14, gt=0.0, description="photons/s, for the distance sweep")
    fixed_length_km: float = Field(25.0, gt=0.0, description="for the power sweep")
    min_counts: float = Field(2e4, gt=0.0, description="expected noise counts per grid point")
    table_path: str | None = None
    bandwidth: float = Field(100e9, gt=0.0, description="Hz")
    noise_wavelength: float = Field(1550.0, gt=0.0, description="nm")
    noise_attenuation_db_km: float = Field(0.2, ge=0.0)
    classical_attenuation_db_km: dict[str, float] | None = None


class JsiSettings(_Block):
    pairs: int = Field(100_000, gt=0)
    bins: int = Field(41, gt=2)
    half_width: float | None = Field(None, gt=0.0, description="nm; default 5 sigma")


class OutputConfig(_Block):
    dir: str = "results"
    format: Literal["csv"] = "csv"


def _default_fiber() -> FiberLink:
    return FiberLink(sections=[FiberSection()])


class ExperimentConfig(_Block):
    kind: Literal[EXPERIMENT_KINDS]  # type: ignore[valid-type]
    seed: int = 0
    # polarization-statistics experiments only; cd_timing and jsi always schedule photons
    engine: Literal["ensemble", "event"] = "ensemble"
    pairs_per_setting: int = Field(100_000, gt=0)
    duration: float | None = Field(None, gt=0.0, description="s; event engine only, overrides the pair budget")
    workers: int = Field(1, ge=1)
    coincidence_window: float = Field(1000.0, gt=0.0, description="ps")
    timing_bin: float = Field(10.0, gt=0.0, description="ps")
    source: SpdcConfig = Field(default_factory=SpdcConfig)
    analyzer_a: AnalyzerConfig = Field(default_factory=AnalyzerConfig)
    analyzer_b: AnalyzerConfig = Field(default_factory=AnalyzerConfig)
    fiber_a: FiberLink | None = None
    fiber_b: FiberLink | None = None
    classical: ClassicalChannel | None = None
    raman_table_path: str | None = None
    fringe: FringeSettings = Field(default_factory=FringeSettings)
    twist_scan: TwistScanSettings = Field(default_factory=TwistScanSettings)
    cd_timing: CdTimingSettings = Field(default_factory=CdTimingSettings)
    dgd_report: DgdSettings = Field(default_factory=DgdSettings)
    raman_sweep: RamanSweepSettings = Field(default_factory=RamanSweepSettings)
    jsi: JsiSettings = Field(default_factory=JsiSettings)
    output: OutputConfig = Field(default_factory=OutputConfig)

    def link_b(self) -> FiberLink:
        return self.fiber_b if self.fiber_b is not None else _default_fiber()


def _format_error(err: dict) -> str:
    loc = ".".join(str(p) for p in err["loc"]) or "<root>"
    return f"{loc}: {err['msg']}"


def validate_config(data: dict) -> ExperimentConfig:
    try:
        return ExperimentConfig.model_validate(data)
    except ValidationError as exc:
        raise ConfigError([_format_error(e) for e in exc.errors()]) from None


def read_config_data(path) -> dict:
    path = Path(path)
    text = path.read_text()
    if path.suffix.lower() in (".yaml", ".yml"):
        data = yaml.safe_load(text)
    else:
        data = json.loads(text)
    if not isinstance(data, dict):
        raise ConfigError(["<root>: configuration must be a mapping"])
    return data


def load_config(path) -> ExperimentConfig:
    return validate_config(read_config_data(path))


def config_to_dict(config: ExperimentConfig) -> dict:
    return config.model_dump(mode="json")


def save_config(config: ExperimentConfig, path) -> None:
    path = Path(path)
    data = config_to_dict(config)
    if path.suffix.lower() in (".yaml", ".yml"):
        path.write_text(yaml.safe_dump(data, sort_keys=True))
    else:
        path.write_text(json.dumps(data, indent=2, sort_keys=True) + "\n")


def classical_attenuation(settings: RamanSweepSettings, wavelength: float) -> float:
    """Classical-channel attenuation (1/m) for the sweep at ``wavelength`` nm."""
    table = dict(TYPICAL_ATTENUATION_DB_KM)
    if settings.classical_attenuation_db_km:
        table.update({float(k): v for k, v in settings.classical_attenuation_db_km.items()})
    if wavelength not in table:
        raise ConfigError([f"raman_sweep.classical_attenuation_db_km: no attenuation for {wavelength} nm"])
    return db_per_km_to_per_m(table[wavelength])
