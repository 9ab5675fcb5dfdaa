"""Command-line entry points: run, replay, plot, batch, bench and serve."""

from __future__ import annotations

import argparse
import csv
import hashlib
import json
import logging
import math
import sys
from pathlib import Path

import numpy as np

from .config import ConfigError, RunConfig, load_config, with_seed
from .pipeline import Pipeline, ReplayError, list_frames, load_frames, replay
from .plots import PlotError, plot_csv
from .scenario import (
    COLLIDED, REACHED, TIMEOUT, manifest, noise_spec, run_scenario, write_frames, write_run_artifacts,
)
from .scenarios import BATCH_COLUMNS, run_batch, shipped_scenarios
from .sim import Renderer, SceneError, inject_noise, load_scene

log = logging.getLogger("pfapf")

EXIT_OK = 0
EXIT_COLLIDED = 2
EXIT_TIMEOUT = 3
EXIT_USAGE = 64  # bad arguments, config or scene
EXIT_DATA = 65  # unreadable images or CSVs
EXIT_UNAVAILABLE = 69  # service unreachable

OUTCOME_EXIT = {REACHED: EXIT_OK, COLLIDED: EXIT_COLLIDED, TIMEOUT: EXIT_TIMEOUT}


class CliError(Exception):
    def __init__(self, message, code):
        super().__init__(message)
        self.code = code


class _Parser(argparse.ArgumentParser):
    # argparse exits 2 on usage errors, which would read as "collided"
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_USAGE, f"{self.prog}: error: {message}\n")


def _config(args, default) -> RunConfig:
    try:
        cfg = load_config(args.config or default)
    except ConfigError as exc:
        raise CliError(f"config error: {exc}", EXIT_USAGE) from None
    except ValueError as exc:
        raise CliError(f"config error: {exc}", EXIT_USAGE) from None
    if args.seed is not None:
        cfg = with_seed(cfg, args.seed)
    return cfg


def _out_dir(args, cfg) -> Path:
    out = Path(args.out or cfg.io.output_dir)
    out.mkdir(parents=True, exist_ok=True)
    return out


def _write_json(path, data):
    Path(path).write_text(json.dumps(data, indent=2, sort_keys=True) + "\n")


# --- subcommands -------------------------------------------------------------


def cmd_run(args) -> int:
    cfg = _config(args, "flight")
    try:
        scene = load_scene(args.scene)
    except SceneError as exc:
        raise CliError(f"scene error: {exc}", EXIT_USAGE) from None
    max_time = None
    if args.frames is not None:
        max_time = args.frames / cfg.sim.frame_rate
    result = run_scenario(scene, scene.start, scene.goal, cfg, max_time=max_time)
    out = _out_dir(args, cfg)
    write_run_artifacts(out, result, cfg, scene)
    s = result.summary()
    clearance = "inf" if s["min_clearance_m"] is None else f"{s['min_clearance_m']:.3f}"
    print(f"{result.outcome}: {s['duration_s']:.2f} s, {s['frames']} frames, "
          f"path {s['path_length_m']:.2f} m, min clearance {clearance} m -> {out}")
    return OUTCOME_EXIT[result.outcome]


def _images_digest(paths):
    h = hashlib.sha256()
    for p in paths:
        h.update(p.name.encode())
        h.update(p.read_bytes())
    return h.hexdigest()


def cmd_replay(args) -> int:
    cfg = _config(args, "cable-test")
    try:
        paths = list_frames(args.images)
        if args.frames is not None:
            paths = paths[: args.frames]
        images = load_frames(paths, cfg.grid_spec())
    except ReplayError as exc:
        raise CliError(str(exc), EXIT_DATA) from None
    goal = np.array(args.goal, dtype=float)
    if args.server:
        from .service.client import ServiceClient, ServiceError, remote_replay

        client = ServiceClient(args.server)
        try:
            frames = remote_replay(client, cfg, images, goal)
        except (ServiceError, OSError) as exc:
            raise CliError(f"service error: {exc}", EXIT_UNAVAILABLE) from None
        finally:
            client.close()
    else:
        frames = replay(cfg, images, goal)
    out = _out_dir(args, cfg)
    write_frames(out, frames, [f.frame / cfg.sim.frame_rate for f in frames])
    _write_json(out / "manifest.json", manifest(cfg, {
        "command": "replay",
        "frames": len(frames),
        "images_sha256": _images_digest(paths),
        "goal": goal.tolist(),
    }))
    cfg.save(out / "config.toml")
    free = sum(f.belief.mode_linear == cfg.grid_spec().boundary for f in frames)
    print(f"replayed {len(frames)} frames ({free} with free-space mode) -> {out}")
    return EXIT_OK


def cmd_plot(args) -> int:
    scene = None
    if args.scene:
        try:
            scene = load_scene(args.scene)
        except SceneError as exc:
            raise CliError(f"scene error: {exc}", EXIT_USAGE) from None
    for path in args.csv:
        try:
            svg = plot_csv(path, args.out, scene)
        except (PlotError, OSError, ValueError, IndexError) as exc:
            raise CliError(f"cannot plot {path}: {exc}", EXIT_DATA) from None
        print(svg)
    return EXIT_OK


def cmd_batch(args) -> int:
    cfg = _config(args, "flight")
    if args.scene:
        scenes = []
        for p in args.scene:
            try:
                name = Path(p).stem
                if any(name == n for n, _ in scenes):
                    name = f"{name}-{len(scenes):02d}"  # keep run directories distinct
                scenes.append((name, load_scene(p)))
            except SceneError as exc:
                raise CliError(f"scene error: {exc}", EXIT_USAGE) from None
    else:
        scenes = shipped_scenarios(args.count)
    out = _out_dir(args, cfg)
    rows = run_batch(cfg, scenes, out_dir=out, jobs=args.jobs)
    with open(out / "batch.csv", "w", newline="") as f:
        w = csv.writer(f, lineterminator="\n")
        w.writerow(BATCH_COLUMNS)
        for r in rows:
            w.writerow([r[c] if not isinstance(r[c], float) else repr(r[c]) for c in BATCH_COLUMNS])
    _write_json(out / "manifest.json", manifest(cfg, {"command": "batch", "runs": [r["name"] for r in rows]}))
    cfg.save(out / "config.toml")
    counts = {k: sum(r["outcome"] == k for r in rows) for k in (REACHED, COLLIDED, TIMEOUT)}
    clearances = [r["min_clearance_m"] for r in rows if r["min_clearance_m"] is not None]
    worst = min(clearances) if clearances else math.inf
    print(f"{len(rows)} runs: {counts[REACHED]} reached, {counts[COLLIDED]} collided, "
          f"{counts[TIMEOUT]} timeout; min clearance {worst:.3f} m -> {out / 'batch.csv'}")
    return EXIT_COLLIDED if counts[COLLIDED] else EXIT_OK


def cmd_bench(args) -> int:
    cfg = _config(args, "flight")
    if args.scene:
        try:
            scene = load_scene(args.scene)
        except SceneError as exc:
            raise CliError(f"scene error: {exc}", EXIT_USAGE) from None
    else:
        scene = shipped_scenarios(1)[0][1]
    n = args.frames or 200
    pipe = Pipeline(cfg)
    renderer = Renderer(cfg.grid.width, cfg.grid.height, pipe.intrinsics, pipe.extrinsics, cfg.sim.max_range)
    noise = noise_spec(cfg)
    rng = np.random.default_rng(noise.seed)
    base = renderer.render(scene, scene.start)
    images = [inject_noise(base, noise, rng) for _ in range(n)]
    goal = scene.start.to_body(scene.goal.center)
    frames = [pipe.step(img, goal) for img in images]
    ms = np.array([f.compute_s * 1e3 for f in frames])
    out = _out_dir(args, cfg)
    with open(out / "timing.csv", "w", newline="") as f:
        w = csv.writer(f, lineterminator="\n")
        w.writerow(["frame", "compute_ms"])
        for fr, t in zip(frames, ms):
            w.writerow([fr.frame, f"{t:.3f}"])
    stats = {
        "frames": n,
        "particles": cfg.filter.particles,
        "median_ms": float(np.median(ms)),
        "p95_ms": float(np.percentile(ms, 95)),
        "max_ms": float(ms.max()),
    }
    _write_json(out / "bench.json", stats)
    _write_json(out / "manifest.json", manifest(cfg, {"command": "bench"}))
    print(f"{n} frames, {cfg.filter.particles} particles: median {stats['median_ms']:.1f} ms, "
          f"p95 {stats['p95_ms']:.1f} ms -> {out / 'timing.csv'}")
    return EXIT_OK


def cmd_serve(args) -> int:
    import uvicorn

    uvicorn.run("pfapf.service.app:app", host=args.host, port=args.port, log_level="info")
    return EXIT_OK


# --- parser ------------------------------------------------------------------


def build_parser() -> argparse.ArgumentParser:
    p = _Parser(prog="pfapf", description=__doc__)
    p.add_argument("-v", "--verbose", action="store_true")
    sub = p.add_subparsers(dest="command", required=True, parser_class=_Parser)

    def common(sp, frames_help=None):
        sp.add_argument("--config", help="config file or preset name (cable-test, flight)")
        sp.add_argument("--out", help="output directory (default: io.output_dir)")
        sp.add_argument("--seed", type=int, help="overrides the filter and noise seeds")
        if frames_help:
            sp.add_argument("--frames", type=int, help=frames_help)

    sp = sub.add_parser("run", help="fly one scene closed loop")
    common(sp, "stop after this many frames")
    sp.add_argument("--scene", required=True)
    sp.set_defaults(func=cmd_run)

    sp = sub.add_parser("replay", help="filter a directory of recorded depth images")
    common(sp, "use only the first N images")
    sp.add_argument("--images", required=True, help="directory of .pfm or .raw frames")
    sp.add_argument("--goal", type=float, nargs=3, default=(5.0, 0.0, 0.0), metavar=("X", "Y", "Z"),
                    help="goal in the body frame, meters")
    sp.add_argument("--server", help="send frames to a running service instead of filtering locally")
    sp.set_defaults(func=cmd_replay)

    sp = sub.add_parser("plot", help="SVG figures from run or replay CSVs")
    sp.add_argument("csv", nargs="+")
    sp.add_argument("--out", help="directory for the SVGs (default: next to each CSV)")
    sp.add_argument("--scene", help="scene file, to draw obstacles and goals on trajectories")
    sp.set_defaults(func=cmd_plot)

    sp = sub.add_parser("batch", help="run many scenes, optionally in parallel")
    common(sp)
    sp.add_argument("--scene", nargs="*", help="scene files (default: the shipped scenario set)")
    sp.add_argument("--count", type=int, default=20, help="size of the shipped set to run")
    sp.add_argument("--jobs", type=int, default=1)
    sp.set_defaults(func=cmd_batch)

    sp = sub.add_parser("bench", help="time the per-frame pipeline")
    common(sp, "number of frames to time (default 200)")
    sp.add_argument("--scene")
    sp.set_defaults(func=cmd_bench)

    sp = sub.add_parser("serve", help="start the HTTP service")
    sp.add_argument("--host", default="127.0.0.1")
    sp.add_argument("--port", type=int, default=8000)
    sp.set_defaults(func=cmd_serve)
    return p


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    if getattr(args, "frames", None) is not None and args.frames <= 0:
        print("error: --frames must be positive", file=sys.stderr)
        return EXIT_USAGE
    try:
        return args.func(args)
    except CliError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return exc.code


if __name__ == "__main__":
    sys.exit(main())
