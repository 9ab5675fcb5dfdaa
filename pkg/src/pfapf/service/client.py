"""Thin HTTP client; rebuilds frame results so local CSV writers can be reused."""

from __future__ import annotations

import math

import httpx
import numpy as np

from ..config import RunConfig
from ..control import ControlCommand, Direction
from ..filter import Belief
from ..grid import DepthImage, GridSpec, encode_raw
from ..pipeline import FrameResult


class ServiceError(RuntimeError):
    pass


class ServiceClient:
    def __init__(self, base_url: str | None = None, client: httpx.Client | None = None, timeout=60.0):
        if client is None:
            if base_url is None:
                raise ValueError("need a base_url or an httpx client")
            client = httpx.Client(base_url=base_url, timeout=timeout)
        self._http = client

    def _call(self, method, url, **kw):
        try:
            r = self._http.request(method, url, **kw)
        except httpx.HTTPError as exc:
            raise ServiceError(f"{method} {url}: {exc}") from None
        if r.status_code >= 400:
            raise ServiceError(f"{method} {url}: HTTP {r.status_code}: {r.text}")
        return r.json() if r.content else None

    def health(self):
        return self._call("GET", "/health")

    def create_session(self, cfg: RunConfig) -> dict:
        return self._call("POST", "/sessions", json={"config": {"toml": cfg.dumps()}})

    def close_session(self, sid):
        self._call("DELETE", f"/sessions/{sid}")

    def send_frame(self, sid, image: DepthImage, goal, include_belief=True) -> dict:
        gx, gy, gz = (float(v) for v in goal)
        params = {"gx": gx, "gy": gy, "gz": gz, "include_belief": include_belief}
        return self._call("POST", f"/sessions/{sid}/frames/raw", params=params, content=encode_raw(image),
                          headers={"content-type": "application/octet-stream"})

    def close(self):
        self._http.close()


def frame_result_from(out: dict, spec: GridSpec, cfg: RunConfig) -> FrameResult:
    """Rebuild a FrameResult from a response that carries the sparse belief."""
    if out.get("belief") is None:
        raise ServiceError("response carries no belief; request it with include_belief")
    p = np.zeros(spec.n_states)
    for s, prob in out["belief"]:
        p[s] = prob
    belief = Belief(spec, p, degenerate=out["degenerate"])
    direction = Direction(np.array(out["nu"]), np.array(out["force"]), np.array(out["repulsive"]),
                          out["stagnated"])
    c = out["command"]
    command = ControlCommand(c["v_x"], c["v_z"], c["v_psi"], cfg.steering_limits())
    closest = out["closest_depth_m"]
    return FrameResult(out["frame"], belief, direction, command,
                       math.nan if closest is None else closest, out["compute_ms"] / 1e3)


def remote_replay(client: ServiceClient, cfg: RunConfig, images, goal) -> list[FrameResult]:
    """Replay ``images`` through a fresh server-side session."""
    info = client.create_session(cfg)
    spec = cfg.grid_spec()
    try:
        return [frame_result_from(client.send_frame(info["session_id"], img, goal), spec, cfg) for img in images]
    finally:
        client.close_session(info["session_id"])
