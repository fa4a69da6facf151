"""Command-line entry point.

Subcommands: train, stylize, filter, guidance, register, hyperopt, serve,
bench.  Exit codes: 0 success, 1 runtime failure, 2 usage or config parse
error; diagnostics go to stderr.
"""

from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path

from . import arap, guidance as guidance_mod, hyperopt as hyperopt_mod, temporal
from .data import (
    Frame,
    KeyframeSpec,
    load_frame,
    load_keyframe_spec,
    load_keyframes,
    load_sequence,
    save_frame,
    save_sequence,
)
from .errors import ConfigError, EmptyInputError, PatchstyleError
from .inference import bench, stylize_sequence
from .training import EvalPair, TrainConfig, load_checkpoint, save_checkpoint, train


class _ConfigLoadError(Exception):
    """A config file could not be read or parsed (exit code 2)."""


def _read_json(path: str | Path) -> dict:
    try:
        with open(path) as handle:
            return json.load(handle)
    except OSError as exc:
        raise _ConfigLoadError(f"cannot read config {path}: {exc}") from exc
    except json.JSONDecodeError as exc:
        raise _ConfigLoadError(f"config {path} is not valid JSON: {exc}") from exc


def _train_config(payload: dict) -> TrainConfig:
    try:
        return TrainConfig.from_json_dict(payload)
    except ConfigError as exc:
        raise _ConfigLoadError(str(exc)) from exc


def _keyframe_specs(field, base: Path) -> list[KeyframeSpec]:
    if isinstance(field, str):
        return load_keyframe_spec(base / field if not Path(field).is_absolute() else field)
    if isinstance(field, list) and field:
        return [
            KeyframeSpec(
                index=int(entry["index"]),
                style=base / entry["style"],
                mask=base / entry["mask"] if entry.get("mask") else None,
            )
            for entry in field
        ]
    raise _ConfigLoadError("config needs 'keyframes': a spec path or a non-empty list")


def _cmd_train(args) -> int:
    payload = _read_json(args.config)
    base = Path(args.config).parent
    frames = args.frames or payload.get("frames")
    if not frames:
        raise _ConfigLoadError("no frames directory (config 'frames' or --frames)")
    train_payload = dict(payload.get("train") or {})
    if args.budget_steps is not None:
        train_payload.update(budget_steps=args.budget_steps, budget_seconds=None)
    if args.seed is not None:
        train_payload["seed"] = args.seed
    config = _train_config(train_payload)

    sequence = load_sequence(frames, payload.get("masks"), payload.get("guidance"))
    if args.keyframes:
        specs = _keyframe_specs(args.keyframes, Path.cwd())
    else:
        specs = _keyframe_specs(payload.get("keyframes"), base)
    keyframes = load_keyframes(sequence, specs)

    checkpoint = train(keyframes, config)
    out = Path(args.out or payload.get("output") or "model.ckpt")
    save_checkpoint(checkpoint, out)
    history = Path(args.history or payload.get("history") or out.with_suffix(".csv"))
    checkpoint.history.write_csv(history)
    print(json.dumps({"checkpoint": str(out), "history": str(history), "steps": checkpoint.step}))
    return 0


def _cmd_stylize(args) -> int:
    checkpoint = load_checkpoint(args.checkpoint)
    sequence = load_sequence(args.frames, args.masks, args.guidance)
    result = stylize_sequence(
        checkpoint, sequence, workers=args.workers, composite=args.composite
    )
    paths = save_sequence(result, args.out)
    print(json.dumps({"frames": len(paths), "out": str(args.out)}))
    return 0


def _cmd_filter(args) -> int:
    sequence = load_sequence(args.frames)
    motion = None
    if args.motion:
        motion = temporal.estimate_motion(sequence, spacing=args.spacing)
    filtered = temporal.bilateral_temporal_filter(
        sequence, radius=args.radius, sigma_t=args.sigma_t, sigma_r=args.sigma_r, motion=motion
    )
    paths = save_sequence(filtered, args.out)
    print(json.dumps({"frames": len(paths), "out": str(args.out)}))
    return 0


def _cmd_guidance(args) -> int:
    sequence = load_sequence(args.frames)
    extent = (sequence.width, sequence.height)
    count = args.count if args.count is not None else guidance_mod.default_count(extent)
    gaussians = guidance_mod.generate_gaussians(
        extent, count=count, sigma_range=(args.sigma_min, args.sigma_max), seed=args.seed
    )
    layers = guidance_mod.propagate_guidance(
        sequence,
        args.keyframe,
        gaussians,
        spacing=args.spacing,
        iterations=args.iterations,
        block_radius=args.block_radius,
        search_radius=args.search_radius,
    )
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    for index, layer in enumerate(layers):
        save_frame(Frame(index=index, pixels=layer.pixels), out / f"{index:05d}.png")
    print(json.dumps({"frames": len(layers), "gaussians": len(gaussians), "out": str(out)}))
    return 0


def _cmd_register(args) -> int:
    sequence = load_sequence(args.frames)
    grid = arap.make_grid(sequence.width, sequence.height, spacing=args.spacing)
    reference = sequence.frames[args.keyframe].pixels
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    for frame in sequence.frames:
        registered = (
            grid
            if frame.index == args.keyframe
            else arap.arap_register(grid, reference, frame.pixels, iterations=args.iterations)
        )
        overlay = frame.pixels.copy()
        for x, y in registered.current_points:
            iy, ix = int(round(y)), int(round(x))
            if 0 <= iy < overlay.shape[0] and 0 <= ix < overlay.shape[1]:
                overlay[max(0, iy - 1) : iy + 2, max(0, ix - 1) : ix + 2] = (1.0, 0.0, 0.0)
        save_frame(Frame(index=frame.index, pixels=overlay), out / f"{frame.index:05d}.png")
    print(json.dumps({"frames": len(sequence), "out": str(out)}))
    return 0


def _cmd_hyperopt(args) -> int:
    payload = _read_json(args.spec)
    base = Path(args.spec).parent
    keyframes = None
    if "keyframes" in payload:
        entry = payload["keyframes"]
        sequence = load_sequence(base / entry["frames"])
        keyframes = load_keyframes(sequence, _keyframe_specs(entry["spec"], base))
    eval_pairs = None
    if "eval" in payload:
        eval_pairs = [
            EvalPair(
                input=load_frame(base / item["input"]),
                reference=load_frame(base / item["reference"]),
            )
            for item in payload["eval"]
        ]
    base_config = None
    if "base_train" in payload:
        base_config = _train_config(payload["base_train"])
    try:
        spec = hyperopt_mod.SearchSpec(
            axes=payload["axes"],
            keyframes=keyframes,
            eval_pairs=eval_pairs,
            train_budget_seconds=payload.get(
                "train_budget_seconds", hyperopt_mod.DEFAULT_TRAIN_BUDGET_SECONDS
            ),
            inference_budget_seconds=payload.get(
                "inference_budget_seconds", hyperopt_mod.DEFAULT_INFERENCE_BUDGET_SECONDS
            ),
            train_budget_steps=payload.get("train_budget_steps"),
            workers=payload.get("workers", 1),
            results_path=args.out,
            seed=payload.get("seed", 0),
            allow_extended_ranges=payload.get("allow_extended_ranges", False),
            base_config=base_config,
            timing_size=tuple(payload["timing_size"]) if "timing_size" in payload else None,
            timing_runs=payload.get("timing_runs", 10),
            timing_warmup=payload.get("timing_warmup", 2),
        )
    except (KeyError, ConfigError, EmptyInputError) as exc:
        raise _ConfigLoadError(f"bad search spec: {exc}") from exc
    results = hyperopt_mod.run_grid_search(spec)
    if args.summary_dir:
        hyperopt_mod.write_summaries(results, args.summary_dir)
    best = next((r for r in results if r.status == hyperopt_mod.STATUS_OK), None)
    print(
        json.dumps(
            {
                "results": len(results),
                "best": best.to_json_dict() if best else None,
                "out": str(args.out),
            }
        )
    )
    return 0


def _cmd_serve(args) -> int:
    import uvicorn

    from .service import create_app

    app = create_app(static_dir=args.static)
    uvicorn.run(app, host=args.host, port=args.port, log_level="warning")
    return 0


def _cmd_bench(args) -> int:
    checkpoint = load_checkpoint(args.checkpoint)
    report = bench(checkpoint, size=args.size, runs=args.runs, warmup=args.warmup)
    print(json.dumps(report))
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="patchstyle")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("train", help="train a model from keyframes")
    p.add_argument("--config", required=True)
    p.add_argument("--frames")
    p.add_argument("--keyframes")
    p.add_argument("--out")
    p.add_argument("--history")
    p.add_argument("--budget-steps", type=int, dest="budget_steps")
    p.add_argument("--seed", type=int)
    p.set_defaults(handler=_cmd_train)

    p = sub.add_parser("stylize", help="stylize a frame directory")
    p.add_argument("--checkpoint", required=True)
    p.add_argument("--frames", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--masks")
    p.add_argument("--guidance")
    p.add_argument("--workers", type=int, default=1)
    p.add_argument("--composite", action="store_true")
    p.set_defaults(handler=_cmd_stylize)

    p = sub.add_parser("filter", help="temporal bilateral pre-filter")
    p.add_argument("--frames", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--radius", type=int, default=temporal.DEFAULT_RADIUS)
    p.add_argument("--sigma-t", type=float, default=temporal.DEFAULT_SIGMA_T, dest="sigma_t")
    p.add_argument("--sigma-r", type=float, default=temporal.DEFAULT_SIGMA_R, dest="sigma_r")
    p.add_argument("--motion", action=argparse.BooleanOptionalAction, default=True)
    p.add_argument("--spacing", type=int, default=temporal.DEFAULT_GRID_SPACING)
    p.set_defaults(handler=_cmd_filter)

    p = sub.add_parser("guidance", help="generate and advect guidance layers")
    p.add_argument("--frames", required=True)
    p.add_argument("--keyframe", type=int, required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--count", type=int)
    p.add_argument("--sigma-min", type=float, default=guidance_mod.DEFAULT_SIGMA_RANGE[0], dest="sigma_min")
    p.add_argument("--sigma-max", type=float, default=guidance_mod.DEFAULT_SIGMA_RANGE[1], dest="sigma_max")
    p.add_argument("--spacing", type=int, default=temporal.DEFAULT_GRID_SPACING)
    p.add_argument("--iterations", type=int, default=arap.DEFAULT_ITERATIONS)
    p.add_argument("--block-radius", type=int, default=temporal.DEFAULT_BLOCK_RADIUS, dest="block_radius")
    p.add_argument("--search-radius", type=int, default=temporal.DEFAULT_SEARCH_RADIUS, dest="search_radius")
    p.set_defaults(handler=_cmd_guidance)

    p = sub.add_parser("register", help="debug: write grid overlays")
    p.add_argument("--frames", required=True)
    p.add_argument("--keyframe", type=int, required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--spacing", type=int, default=temporal.DEFAULT_GRID_SPACING)
    p.add_argument("--iterations", type=int, default=arap.DEFAULT_ITERATIONS)
    p.set_defaults(handler=_cmd_register)

    p = sub.add_parser("hyperopt", help="constrained grid search")
    p.add_argument("--spec", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--summary-dir", dest="summary_dir")
    p.set_defaults(handler=_cmd_hyperopt)

    p = sub.add_parser("serve", help="run the HTTP/WebSocket service")
    p.add_argument("--host", default="127.0.0.1")
    p.add_argument("--port", type=int, default=8000)
    p.add_argument("--static")
    p.set_defaults(handler=_cmd_serve)

    p = sub.add_parser("bench", help="inference throughput report")
    p.add_argument("--checkpoint", required=True)
    p.add_argument("--size", type=int, default=640)
    p.add_argument("--runs", type=int, default=10)
    p.add_argument("--warmup", type=int, default=2)
    p.set_defaults(handler=_cmd_bench)

    return parser


def cli_main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code or 0)
    try:
        return args.handler(args)
    except _ConfigLoadError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 2
    except PatchstyleError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    except OSError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


def main() -> None:
    sys.exit(cli_main(sys.argv[1:]))


if __name__ == "__main__":
    main()
