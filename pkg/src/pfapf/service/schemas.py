"""Request and response bodies for the HTTP service."""

from __future__ import annotations

from typing import Literal, Optional

from pydantic import BaseModel, ConfigDict, Field, model_validator

Vector3 = tuple[float, float, float]


class ConfigRef(BaseModel):
    """Either a shipped preset name or the text of a TOML config file."""

    model_config = ConfigDict(extra="forbid")

    preset: Optional[str] = None
    toml: Optional[str] = None
    seed: Optional[int] = Field(default=None, description="overrides filter.seed")

    @model_validator(mode="after")
    def _one_source(self):
        if (self.preset is None) == (self.toml is None):
            raise ValueError("give exactly one of 'preset' or 'toml'")
        return self


class SessionCreate(BaseModel):
    model_config = ConfigDict(extra="forbid")

    config: ConfigRef


class GridInfo(BaseModel):
    width: int
    height: int
    k_w: int
    k_h: int
    k_d: float
    n_w: int
    n_h: int
    n_d: int
    n_states: int


class SessionInfo(BaseModel):
    session_id: str
    config_sha256: str
    grid: GridInfo
    frames: int


class FrameIn(BaseModel):
    """A depth image as row-major meters; non-positive or null entries mean no return."""

    model_config = ConfigDict(extra="forbid")

    width: int = Field(gt=0)
    height: int = Field(gt=0)
    depths: list[Optional[float]]
    goal: Vector3

    @model_validator(mode="after")
    def _size(self):
        if len(self.depths) != self.width * self.height:
            raise ValueError(f"expected {self.width * self.height} depths, got {len(self.depths)}")
        return self


class Command(BaseModel):
    v_x: float
    v_z: float
    v_psi: float


class ModeState(BaseModel):
    linear: int
    boundary: bool
    i: Optional[int] = None
    j: Optional[int] = None
    k: Optional[int] = None
    depth_m: Optional[float] = None
    probability: float


class FrameOut(BaseModel):
    frame: int
    mode: ModeState
    boundary_probability: float
    degenerate: bool
    command: Command
    nu: Vector3
    force: Vector3
    repulsive: Vector3
    stagnated: bool
    F_rep_magnitude: float
    closest_depth_m: Optional[float]
    compute_ms: float
    belief: Optional[list[tuple[int, float]]] = Field(
        default=None, description="nonzero (linear_state, probability) pairs when requested"
    )


class BeliefOut(BaseModel):
    frame: int
    n_states: int
    states: list[tuple[int, float]]
    mode: ModeState


class SceneRun(BaseModel):
    model_config = ConfigDict(extra="forbid")

    config: ConfigRef
    scene_toml: str
    max_time: Optional[float] = Field(default=None, gt=0)


class RunSummary(BaseModel):
    outcome: Literal["reached", "collided", "timeout"]
    duration_s: float
    frames: int
    path_length_m: float
    min_clearance_m: Optional[float]
    final_position: Optional[Vector3]


class Health(BaseModel):
    status: Literal["ok"] = "ok"
    version: str
    sessions: int
