"""Run configuration: one JSON file describing beam, partition, rig, coupler and outputs."""

from __future__ import annotations

import json
import logging
from pathlib import Path
from typing import Optional, Union

from pydantic import BaseModel, ConfigDict, Field, field_validator, model_validator

from .config import (
    BEAM_DENSITY,
    BEAM_LENGTH,
    BEAM_THICKNESS,
    BEAM_WIDTH,
    BEAM_YOUNG_MODULUS,
    BEAM_ZETA_K,
    BEAM_ZETA_M,
    INTERFACE_POSITION,
    MESH_ELEMENTS,
    NEAR_POLE_CONDITION,
    OUTPUT_DIR,
    STABILITY_CUTOFFS,
    STABILITY_DELTA_RANGE,
    STABILITY_FREQ_RANGE,
    STABILITY_ROOT_DELAYS,
    STABILITY_TAU_MAX,
)
from .core import InvalidArgumentError
from .tools.beam_fe import BeamProperties, BoundaryCondition, FEModel, assemble
from .tools.iterative_coupler import CouplerConfig
from .tools.stability import Resolution, SearchBox
from .tools.substructuring import Partition, partition_at
from .tools.virtual_rig import RigConfig, VirtualRig

logger = logging.getLogger("hybrid_beam.config")

DEFAULT_CONFIG_PATH = Path(__file__).parent / "data" / "default_config.json"


class BeamConfig(BaseModel):
    model_config = ConfigDict(extra="forbid")

    E: float = Field(BEAM_YOUNG_MODULUS, gt=0, description="Young's modulus (kg/ms²/mm)")
    rho: float = Field(BEAM_DENSITY, gt=0, description="Density (kg/mm³)")
    b: float = Field(BEAM_WIDTH, gt=0, description="Width (mm)")
    h: float = Field(BEAM_THICKNESS, gt=0, description="Thickness (mm)")
    L: float = Field(BEAM_LENGTH, gt=0, description="Length (mm)")
    zeta_M: float = Field(BEAM_ZETA_M, ge=0, description="Mass-proportional damping (1/ms)")
    zeta_K: float = Field(BEAM_ZETA_K, ge=0, description="Stiffness-proportional damping (ms)")

    def properties(self) -> BeamProperties:
        return BeamProperties(self.E, self.rho, self.b, self.h, self.L, self.zeta_M, self.zeta_K)


class MeshConfig(BaseModel):
    model_config = ConfigDict(extra="forbid")

    n_elements: int = Field(MESH_ELEMENTS, ge=2)


class PartitionConfig(BaseModel):
    model_config = ConfigDict(extra="forbid")

    position: float = Field(INTERFACE_POSITION, gt=0, description="Interface distance from the clamp (mm)")
    near_pole_condition: float = Field(NEAR_POLE_CONDITION, gt=1, description="Bulk condition number treated as a pole")


class StabilityConfig(BaseModel):
    model_config = ConfigDict(extra="forbid")

    alpha: float = Field(0.5, gt=0, lt=1, description="Interface position fraction of the root maps and locus")
    root_delays: list[float] = Field(list(STABILITY_ROOT_DELAYS), description="Delays of the root maps (ms)")
    delta_range: tuple[float, float] = STABILITY_DELTA_RANGE
    f_range: tuple[float, float] = Field(STABILITY_FREQ_RANGE, description="Frequency window (kHz)")
    n_delta: int = Field(48, ge=4)
    n_f: int = Field(72, ge=4)
    levels: int = Field(3, ge=0)
    locus_taus: tuple[float, float, float] = Field((0.05, 2.5, 0.05), description="Locus delays: start, stop, step (ms)")
    f_cutoffs: list[float] = Field(list(STABILITY_CUTOFFS), description="Cut-off frequencies (kHz)")
    alpha_grid: list[float] = Field(
        [round(0.05 * j, 2) for j in range(1, 20)], description="Interface positions of the boundary"
    )
    tau_range: tuple[float, float] = Field((0.02, STABILITY_TAU_MAX), description="Critical delay search range (ms)")

    @field_validator("alpha_grid")
    @classmethod
    def _inside(cls, value):
        bad = [a for a in value if not 0.0 < a < 1.0]
        if bad:
            raise ValueError(f"alpha grid values outside (0, 1): {bad}")
        return sorted(value)

    @field_validator("root_delays", "f_cutoffs")
    @classmethod
    def _non_negative(cls, value):
        if any(v < 0 for v in value):
            raise ValueError("delays and cut-offs must be non-negative")
        return value

    def box(self) -> SearchBox:
        return SearchBox(tuple(self.delta_range), tuple(self.f_range))

    def resolution(self) -> Resolution:
        return Resolution(self.n_delta, self.n_f, self.levels)

    def locus_grid(self) -> list[float]:
        start, stop, step = self.locus_taus
        count = int(round((stop - start) / step)) + 1
        return [round(start + j * step, 10) for j in range(count)]


class OutputConfig(BaseModel):
    model_config = ConfigDict(extra="forbid")

    directory: str = OUTPUT_DIR
    plot_scripts: bool = True
    export_raw: bool = False


class RunConfig(BaseModel):
    """Complete description of a run; every sub-model validates before anything is built."""

    model_config = ConfigDict(extra="forbid")

    beam: BeamConfig = Field(default_factory=BeamConfig)
    mesh: MeshConfig = Field(default_factory=MeshConfig)
    partition: PartitionConfig = Field(default_factory=PartitionConfig)
    rig: RigConfig = Field(default_factory=RigConfig)
    coupler: CouplerConfig = Field(default_factory=CouplerConfig)
    stability: StabilityConfig = Field(default_factory=StabilityConfig)
    output: OutputConfig = Field(default_factory=OutputConfig)

    @model_validator(mode="after")
    def _cross_checks(self):
        problems = []
        L = self.beam.L
        le = L / self.mesh.n_elements
        if not le <= self.partition.position <= L - le:
            problems.append(f"partition.position {self.partition.position} mm must leave one element on each side")
        L_P = L - self.partition.position
        s = self.rig.sensors
        if s.gauge_2 >= L_P:
            problems.append(f"rig.sensors.gauge_2 {s.gauge_2} mm lies beyond the physical beam ({L_P:.0f} mm)")
        if self.coupler.forcing_position is not None and self.coupler.forcing_position >= self.partition.position:
            problems.append("coupler.forcing_position must lie on the numerical span")
        if problems:
            raise ValueError("; ".join(problems))
        return self


def load_config(path: Optional[Union[str, Path]] = None) -> RunConfig:
    """Read a JSON run configuration; the built-in defaults when ``path`` is None.

    Raises:
        InvalidArgumentError: if the file cannot be read or is not JSON.
        pydantic.ValidationError: listing every invalid field at once.
    """
    if path is None:
        return RunConfig()
    path = Path(path)
    try:
        data = json.loads(path.read_text(encoding="utf-8"))
    except (OSError, json.JSONDecodeError) as e:
        raise InvalidArgumentError(f"cannot read config {path}: {e}") from e
    config = RunConfig.model_validate(data)
    logger.debug("loaded config %s", path)
    return config


def build_model(config: RunConfig) -> FEModel:
    return assemble(config.beam.properties(), config.mesh.n_elements, BoundaryCondition.CLAMPED_FREE)


def build_partition(config: RunConfig, model: Optional[FEModel] = None) -> Partition:
    return partition_at(model or build_model(config), config.partition.position)


def build_rig(
    config: RunConfig,
    part: Partition,
    damping_scale: Optional[float] = None,
    ideal: bool = False,
    seed: Optional[int] = None,
) -> VirtualRig:
    """Virtual rig carrying the physical span of ``part`` with run-level overrides."""
    rig_cfg = config.rig.ideal() if ideal else config.rig
    update = {}
    if damping_scale is not None:
        update["damping_scale"] = damping_scale
    if seed is not None:
        update["noise"] = rig_cfg.noise.model_copy(update={"seed": seed})
    if update:
        rig_cfg = rig_cfg.model_copy(update=update)
    return VirtualRig(part.P_part, rig_cfg)
