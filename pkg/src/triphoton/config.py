"""Experiment configuration files (TOML).

Sections: [source], [detector], [interferometer], [model], [analysis],
[plates].  Every key is optional and falls back to the package defaults,
which encode the published operating point (tau = 3.7 ns, transmissions
0.44, SNSPD efficiencies 0.80/0.48/0.60/0.85, dark rates, CAR target 14)
at a desk-scale triplet rate.  See configs/default.toml for the schema.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field, fields

try:
    import tomllib
except ImportError:  # python < 3.11
    import tomli as tomllib

from .fringes import PlateSpec
from .source import (
    ConfigError,
    DetectorConfig,
    ExperimentConfig,
    InterferometerSetting,
    SourceConfig,
)

#: Photon-group center wavelengths (m); group order 842 / 1530 / 1570 nm.
DEFAULT_WAVELENGTHS = (842e-9, 1530e-9, 1570e-9)
DEFAULT_PRE_TILT_DEG = (3.0, 5.0, 3.0)


@dataclass
class AnalysisOptions:
    """Windows for the coincidence analysis stage."""

    coarse_window: float = 20.0e-9
    bin_width: float = 0.78e-9
    car_window: float = 3.125e-9

    def validate(self):
        if not self.coarse_window > 0 or not self.bin_width > 0:
            raise ConfigError("analysis windows must be positive")


@dataclass
class RunSetup:
    """Everything a pipeline run needs: physics config, windows, plates."""

    experiment: ExperimentConfig = field(default_factory=ExperimentConfig)
    analysis: AnalysisOptions = field(default_factory=AnalysisOptions)
    plates: tuple = ()

    def __post_init__(self):
        if not self.plates:
            self.plates = default_plates()

    def validate(self):
        self.experiment.validate()
        self.analysis.validate()


def default_plates(wavelengths=DEFAULT_WAVELENGTHS,
                   pre_tilt_deg=DEFAULT_PRE_TILT_DEG,
                   thickness=3.0e-3, glass_index=1.5,
                   ambient_index=1.0) -> tuple:
    return tuple(
        PlateSpec(wavelength=w, thickness=thickness, glass_index=glass_index,
                  ambient_index=ambient_index, pre_tilt=math.radians(p))
        for w, p in zip(wavelengths, pre_tilt_deg))


def _apply_section(obj, section: dict, name: str, converters=None):
    valid = {f.name for f in fields(obj)}
    converters = converters or {}
    for key, value in section.items():
        if key not in valid:
            raise ConfigError(f"[{name}] has no key {key!r} "
                              f"(valid: {', '.join(sorted(valid))})")
        setattr(obj, key, converters.get(key, lambda v: v)(value))
    return obj


def _as_pair_table(value):
    return tuple(tuple(row) for row in value)


def parse_setup(data: dict, origin: str = "<config>") -> RunSetup:
    known = {"source", "detector", "interferometer", "model", "analysis", "plates"}
    unknown = set(data) - known
    if unknown:
        raise ConfigError(f"{origin}: unknown section(s) {sorted(unknown)}")

    src = _apply_section(SourceConfig(), data.get("source", {}), "source",
                         {"car_target": lambda v: None if not v else float(v)})
    det = _apply_section(DetectorConfig(), data.get("detector", {}), "detector",
                         {"efficiency": tuple, "dark_rate": tuple})
    itf = _apply_section(InterferometerSetting(), data.get("interferometer", {}),
                         "interferometer",
                         {"phases": tuple, "blocked": _as_pair_table,
                          "transmission": _as_pair_table})
    exp = ExperimentConfig(source=src, detector=det, interferometer=itf)
    model_sec = data.get("model", {})
    for key in model_sec:
        if key not in ("mu_triple", "mu_pair"):
            raise ConfigError(f"[model] has no key {key!r}")
    exp.mu_triple = model_sec.get("mu_triple")
    exp.mu_pair = model_sec.get("mu_pair")

    ana = _apply_section(AnalysisOptions(), data.get("analysis", {}), "analysis")

    plate_sec = dict(data.get("plates", {}))
    wavelengths = tuple(plate_sec.pop("wavelength", DEFAULT_WAVELENGTHS))
    pre_tilt = tuple(plate_sec.pop("pre_tilt_deg", DEFAULT_PRE_TILT_DEG))
    thickness = plate_sec.pop("thickness", 3.0e-3)
    glass = plate_sec.pop("glass_index", 1.5)
    ambient = plate_sec.pop("ambient_index", 1.0)
    if plate_sec:
        raise ConfigError(f"[plates] has no key(s) {sorted(plate_sec)}")
    if len(wavelengths) != 3 or len(pre_tilt) != 3:
        raise ConfigError("[plates] wavelength and pre_tilt_deg need three entries")
    plates = default_plates(wavelengths, pre_tilt, thickness, glass, ambient)

    setup = RunSetup(experiment=exp, analysis=ana, plates=plates)
    try:
        setup.validate()
    except (ConfigError, ValueError) as exc:
        raise ConfigError(f"{origin}: {exc}") from exc
    return setup


def load_setup(path) -> RunSetup:
    """Parse a TOML configuration file into a validated RunSetup."""
    try:
        with open(path, "rb") as fh:
            data = tomllib.load(fh)
    except tomllib.TOMLDecodeError as exc:
        # tomllib reports "...(at line N, column M)" in the message
        raise ConfigError(f"{path}: {exc}") from exc
    except OSError as exc:
        raise ConfigError(f"{path}: {exc}") from exc
    return parse_setup(data, origin=str(path))


def default_setup() -> RunSetup:
    return RunSetup()


def ideal_setup() -> RunSetup:
    from .source import ideal_config

    return RunSetup(experiment=ideal_config())
