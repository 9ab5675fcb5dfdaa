"""HTTP front end: filter sessions fed frame by frame, and whole scenario runs."""

from __future__ import annotations

import math
import threading
import uuid
from dataclasses import dataclass, field

import numpy as np
from fastapi import FastAPI, HTTPException, Query, Request

from .. import __version__
from ..config import ConfigError, RunConfig, loads, preset, with_seed
from ..filter import Belief
from ..grid import DepthImage, decode_raw
from ..pipeline import FrameResult, Pipeline
from ..scenario import run_scenario
from ..sim import SceneError, loads_scene
from .schemas import (
    BeliefOut,
    Command,
    ConfigRef,
    FrameIn,
    FrameOut,
    GridInfo,
    Health,
    ModeState,
    RunSummary,
    SceneRun,
    SessionCreate,
    SessionInfo,
)


def resolve_config(ref: ConfigRef) -> RunConfig:
    try:
        cfg = preset(ref.preset) if ref.preset is not None else loads(ref.toml)
    except ConfigError as exc:
        raise HTTPException(422, detail={"key": exc.key, "message": str(exc)}) from None
    except ValueError as exc:
        raise HTTPException(422, detail={"key": "preset", "message": str(exc)}) from None
    return with_seed(cfg, ref.seed) if ref.seed is not None else cfg


def _finite_or_none(x):
    return None if math.isnan(x) else x


def mode_state(belief: Belief) -> ModeState:
    m = belief.mode
    return ModeState(
        linear=belief.mode_linear, boundary=m.is_boundary,
        i=m.i, j=m.j, k=m.k,
        depth_m=_finite_or_none(belief.mode_depth()),
        probability=belief.mode_probability,
    )


def sparse_belief(belief: Belief):
    p = belief.probabilities
    return [(int(s), float(p[s])) for s in np.flatnonzero(p)]


def frame_out(r: FrameResult, include_belief=False) -> FrameOut:
    d = r.direction
    return FrameOut(
        frame=r.frame,
        mode=mode_state(r.belief),
        boundary_probability=r.belief.boundary_probability,
        degenerate=r.belief.degenerate,
        command=Command(v_x=r.command.v_x, v_z=r.command.v_z, v_psi=r.command.v_psi),
        nu=tuple(float(v) for v in d.nu),
        force=tuple(float(v) for v in d.force),
        repulsive=tuple(float(v) for v in d.repulsive),
        stagnated=d.stagnated,
        F_rep_magnitude=d.repulsive_magnitude,
        closest_depth_m=_finite_or_none(r.closest_depth),
        compute_ms=r.compute_s * 1e3,
        belief=sparse_belief(r.belief) if include_belief else None,
    )


@dataclass(eq=False)
class Session:
    cfg: RunConfig
    pipeline: Pipeline
    last: FrameResult | None = None
    lock: threading.Lock = field(default_factory=threading.Lock)

    def info(self, sid) -> SessionInfo:
        spec = self.pipeline.spec
        grid = GridInfo(**spec.to_dict(), n_w=spec.n_w, n_h=spec.n_h, n_states=spec.n_states)
        return SessionInfo(session_id=sid, config_sha256=self.cfg.digest(), grid=grid,
                           frames=self.pipeline.frame)


def create_app() -> FastAPI:
    app = FastAPI(title="pfapf", version=__version__)
    sessions: dict[str, Session] = {}
    registry_lock = threading.Lock()
    app.state.sessions = sessions

    def get(sid) -> Session:
        with registry_lock:
            s = sessions.get(sid)
        if s is None:
            raise HTTPException(404, detail=f"no session {sid}")
        return s

    def step(s: Session, image: DepthImage, goal, include_belief) -> FrameOut:
        spec = s.pipeline.spec
        if (image.width, image.height) != (spec.width, spec.height):
            raise HTTPException(
                422, detail=f"image is {image.width}x{image.height}, grid expects {spec.width}x{spec.height}"
            )
        with s.lock:
            s.last = s.pipeline.step(image, np.asarray(goal, dtype=float))
            return frame_out(s.last, include_belief)

    @app.get("/health", response_model=Health)
    def health():
        return Health(version=__version__, sessions=len(sessions))

    @app.post("/sessions", response_model=SessionInfo, status_code=201)
    def create_session(body: SessionCreate):
        cfg = resolve_config(body.config)
        sid = uuid.uuid4().hex
        s = Session(cfg, Pipeline(cfg))
        with registry_lock:
            sessions[sid] = s
        return s.info(sid)

    @app.get("/sessions/{sid}", response_model=SessionInfo)
    def session_info(sid: str):
        return get(sid).info(sid)

    @app.delete("/sessions/{sid}", status_code=204)
    def close_session(sid: str):
        with registry_lock:
            if sessions.pop(sid, None) is None:
                raise HTTPException(404, detail=f"no session {sid}")

    @app.post("/sessions/{sid}/frames", response_model=FrameOut)
    def post_frame(sid: str, body: FrameIn, include_belief: bool = False):
        s = get(sid)
        depths = np.array([np.nan if v is None else v for v in body.depths], dtype=np.float32)
        return step(s, DepthImage.from_flat(body.width, body.height, depths), body.goal, include_belief)

    @app.post("/sessions/{sid}/frames/raw", response_model=FrameOut)
    async def post_raw_frame(
        sid: str,
        request: Request,
        gx: float = Query(...), gy: float = Query(...), gz: float = Query(...),
        include_belief: bool = False,
    ):
        s = get(sid)
        try:
            image = decode_raw(await request.body(), "request body")
        except ValueError as exc:
            raise HTTPException(422, detail=str(exc)) from None
        return step(s, image, (gx, gy, gz), include_belief)

    @app.get("/sessions/{sid}/belief", response_model=BeliefOut)
    def get_belief(sid: str):
        s = get(sid)
        if s.last is None:
            raise HTTPException(409, detail="no frame processed yet")
        b = s.last.belief
        return BeliefOut(frame=s.last.frame, n_states=b.spec.n_states, states=sparse_belief(b),
                         mode=mode_state(b))

    @app.get("/sessions/{sid}/command", response_model=FrameOut)
    def get_command(sid: str):
        s = get(sid)
        if s.last is None:
            raise HTTPException(409, detail="no frame processed yet")
        return frame_out(s.last)

    @app.post("/scenarios/run", response_model=RunSummary)
    def run(body: SceneRun):
        cfg = resolve_config(body.config)
        try:
            scene = loads_scene(body.scene_toml)
        except SceneError as exc:
            raise HTTPException(422, detail=f"scene: {exc}") from None
        result = run_scenario(scene, scene.start, scene.goal, cfg, max_time=body.max_time, keep_frames=False)
        return RunSummary(**result.summary())

    return app


app = create_app()
