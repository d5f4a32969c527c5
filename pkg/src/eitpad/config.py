"""Experiment configuration with full defaulting.

Defaults reproduce the reference study setup end to end: 16 electrodes on a
100 mm square, reciprocity-reduced adjacent protocol (104 measurements),
sweep over five lattice widths plus a uniform comparator at four touch
levels and three phantoms, and reconstruction of the four standard phantoms
with Tikhonov (factor 0.01) and L1 (factor 0.01, 200 iterations). A config
file only needs to name the values it overrides.
"""

from __future__ import annotations

import json
from dataclasses import asdict, dataclass, field, replace
from pathlib import Path
from typing import Any

from .errors import ConfigError
from .hmi import (
    DEFAULT_DEBOUNCE_FRAMES,
    ActionConfig,
    action_config_from_json,
    action_config_to_json,
    default_action_config,
)
from .inverse import L1, TIKHONOV, ReconstructionParams
from .mesh import (
    DEFAULT_ELECTRODE_COUNT,
    DEFAULT_ELECTRODE_WIDTH_MM,
    DEFAULT_SIDE_MM,
    RECON_DIVISIONS,
    SIM_DIVISIONS,
)
from .phantom import (
    DEFAULT_LATTICE_BACKGROUND,
    DEFAULT_LATTICE_PITCH_MM,
    DEFAULT_LATTICE_WIDTHS_MM,
    DEFAULT_TOUCH_LEVELS,
    TouchSpec,
    annulus,
    disc,
)

# Touch centers sit on the mid-side axes: identity-regularized EIT dumps
# residual energy into electrode-adjacent boundary elements, and diagonal
# placements push those artifacts past the blob threshold.
DEFAULT_SWEEP_PHANTOMS: dict[str, list[tuple[float, float]]] = {
    "single": [(50.0, 50.0)],
    "double": [(20.0, 50.0), (80.0, 50.0)],
    "triple": [(20.0, 50.0), (80.0, 50.0), (50.0, 80.0)],
}

# Ring sized so its hole exceeds the central resolution width, at a contrast
# low enough to stay linearizable: a strongly conductive ring shields its
# interior and becomes indistinguishable from a solid disc in the data.
DEFAULT_ANNULUS = {
    "center": (50.0, 50.0),
    "inner": 25.0,
    "outer": 35.0,
    "level": 2.0,
}


def _canonical_phantoms(
    phantoms: dict,
) -> dict[str, tuple[tuple[float, float], ...]]:
    return {
        str(name): tuple((float(x), float(y)) for x, y in centers)
        for name, centers in phantoms.items()
    }


@dataclass(frozen=True)
class SweepSettings:
    # thin channels need a finer grid than the recon data generator uses
    divisions: int = 96
    lattice_widths_mm: tuple[float, ...] = DEFAULT_LATTICE_WIDTHS_MM
    lattice_pitch_mm: float = DEFAULT_LATTICE_PITCH_MM
    lattice_background: float = DEFAULT_LATTICE_BACKGROUND
    include_uniform: bool = True
    touch_levels: tuple[float, ...] = DEFAULT_TOUCH_LEVELS
    touch_radius_mm: float = 10.0
    phantoms: dict[str, tuple[tuple[float, float], ...]] = field(
        default_factory=lambda: _canonical_phantoms(DEFAULT_SWEEP_PHANTOMS)
    )
    snr_db: float | None = None

    def __post_init__(self) -> None:
        object.__setattr__(self, "phantoms", _canonical_phantoms(self.phantoms))
        object.__setattr__(
            self, "lattice_widths_mm", tuple(self.lattice_widths_mm)
        )
        object.__setattr__(self, "touch_levels", tuple(self.touch_levels))


@dataclass(frozen=True)
class ReconSettings:
    snr_db: float | None = 40.0
    touch_level: float = 5.0
    touch_radius_mm: float = 9.0
    phantom_centers: dict[str, tuple[tuple[float, float], ...]] = field(
        default_factory=lambda: _canonical_phantoms(DEFAULT_SWEEP_PHANTOMS)
    )
    annulus: dict[str, Any] = field(default_factory=lambda: dict(DEFAULT_ANNULUS))

    def __post_init__(self) -> None:
        object.__setattr__(
            self, "phantom_centers", _canonical_phantoms(self.phantom_centers)
        )
        ann = dict(self.annulus)
        ann["center"] = tuple(float(v) for v in ann["center"])
        for key in ("inner", "outer", "level"):
            if key in ann:
                ann[key] = float(ann[key])
        object.__setattr__(self, "annulus", ann)
    tikhonov_lambda: float = 0.01
    l1_lambda: float = 0.01
    l1_iterations: int = 200
    lambda_scaling: str = "spectral"
    blob_threshold: float = 0.3
    raster_resolution: int = 64

    def params(self, method: str) -> ReconstructionParams:
        if method == TIKHONOV:
            return ReconstructionParams(
                TIKHONOV, self.tikhonov_lambda, lambda_scaling=self.lambda_scaling
            )
        if method == L1:
            return ReconstructionParams(
                L1,
                self.l1_lambda,
                iterations=self.l1_iterations,
                lambda_scaling=self.lambda_scaling,
            )
        raise ConfigError(f"unknown reconstruction method {method!r}")

    def phantoms(self) -> dict[str, list[TouchSpec]]:
        """Touch lists for the four standard phantoms, in fixed order."""
        out: dict[str, list[TouchSpec]] = {}
        for name, centers in self.phantom_centers.items():
            out[name] = [
                disc(tuple(c), self.touch_radius_mm, self.touch_level)
                for c in centers
            ]
        ann = self.annulus
        out["annular"] = [
            annulus(
                tuple(ann["center"]),
                float(ann["inner"]),
                float(ann["outer"]),
                float(ann.get("level", self.touch_level)),
            )
        ]
        return out


@dataclass(frozen=True)
class ServeSettings:
    port: int = 8765
    method: str = TIKHONOV
    touch_level: float = 5.0
    default_touch_radius_mm: float = 10.0
    # raw-magnitude activation threshold in S/m; calibrated so the default
    # Tikhonov pipeline activates on a 10 mm touch but not on solver noise
    activation_threshold: float = 0.05
    debounce_frames: int = DEFAULT_DEBOUNCE_FRAMES
    raster_resolution: int = 64
    snr_db: float | None = None
    action_config: ActionConfig = field(default_factory=default_action_config)


@dataclass(frozen=True)
class ExperimentConfig:
    side_mm: float = DEFAULT_SIDE_MM
    sim_divisions: int = SIM_DIVISIONS
    recon_divisions: int = RECON_DIVISIONS
    electrode_count: int = DEFAULT_ELECTRODE_COUNT
    electrode_width_mm: float = DEFAULT_ELECTRODE_WIDTH_MM
    reciprocity_reduced: bool = True
    drive_current: float = 1e-3
    background_conductivity: float = 1.0
    seed: int = 0
    allow_inverse_crime: bool = False
    sweep: SweepSettings = field(default_factory=SweepSettings)
    recon: ReconSettings = field(default_factory=ReconSettings)
    serve: ServeSettings = field(default_factory=ServeSettings)

    def __post_init__(self) -> None:
        if (
            self.sim_divisions == self.recon_divisions
            and not self.allow_inverse_crime
        ):
            raise ConfigError(
                "sim_divisions equals recon_divisions; synthetic data would "
                "be inverted on its own discretization. Set "
                "allow_inverse_crime to override."
            )


def paper_default_config() -> ExperimentConfig:
    return ExperimentConfig()


_SECTION_TYPES = {"sweep": SweepSettings, "recon": ReconSettings, "serve": ServeSettings}


def _build_section(cls, data: dict[str, Any], path: str):
    known = {f.name for f in cls.__dataclass_fields__.values()}
    bad = set(data) - known
    if bad:
        raise ConfigError(f"unknown key(s) {sorted(bad)} under {path!r}")
    kwargs = dict(data)
    if cls is ServeSettings and "action_config" in kwargs:
        kwargs["action_config"] = action_config_from_json(
            json.dumps(kwargs["action_config"])
        )
    try:
        return cls(**kwargs)
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"invalid values under {path!r}: {exc}") from exc


def config_from_dict(data: dict[str, Any]) -> ExperimentConfig:
    known = {f.name for f in ExperimentConfig.__dataclass_fields__.values()}
    bad = set(data) - known
    if bad:
        raise ConfigError(f"unknown top-level key(s) {sorted(bad)}")
    kwargs = dict(data)
    for name, cls in _SECTION_TYPES.items():
        if name in kwargs:
            if not isinstance(kwargs[name], dict):
                raise ConfigError(f"section {name!r} must be an object")
            kwargs[name] = _build_section(cls, kwargs[name], name)
    try:
        return ExperimentConfig(**kwargs)
    except TypeError as exc:
        raise ConfigError(str(exc)) from exc


def load_config(path: str | Path) -> ExperimentConfig:
    text = Path(path).read_text()
    try:
        data = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ConfigError(
            f"{path}: invalid JSON at line {exc.lineno}, column {exc.colno}: "
            f"{exc.msg}"
        ) from exc
    if not isinstance(data, dict):
        raise ConfigError(f"{path}: config root must be an object")
    return config_from_dict(data)


def config_to_json(config: ExperimentConfig) -> str:
    doc = asdict(config)
    doc["serve"]["action_config"] = json.loads(
        action_config_to_json(config.serve.action_config)
    )
    return json.dumps(doc, sort_keys=True, indent=2)


def with_seed(config: ExperimentConfig, seed: int | None) -> ExperimentConfig:
    return config if seed is None else replace(config, seed=seed)
