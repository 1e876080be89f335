"""Command-line interface: ``motiongraph <command> [flags]``.

Exit codes: 0 success, 1 usage error, 2 validation or numeric failure.
"""

from __future__ import annotations

import argparse
import contextlib
import json
import os
import sys
from pathlib import Path
from typing import Sequence

import numpy as np

from .errors import MotionGraphError
from .graph import dump_graph
from .numerics import mgt
from .numerics.gradcheck import tolerance
from .numerics.tensor import no_grad
from .pipeline import bench as bench_mod
from .pipeline.checkpoint import load_checkpoint, save_checkpoint
from .pipeline.config import PipelineConfig, load_config, preset
from .pipeline.gradsuite import OPS, gradcheck_config, run_op_suite, run_pipeline_check
from .pipeline.imageio import read_ppm, write_ppm
from .pipeline.model import forward, init_params, summary
from .pipeline.synthetic import SyntheticScene, make_scene
from .pipeline.train import smoothed, train

EXIT_OK, EXIT_USAGE, EXIT_FAILURE = 0, 1, 2


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):  # argparse would exit with status 2
        raise UsageError(f"{self.prog}: {message}")


def _threads(value: str) -> int:
    n = int(value)
    if n < 1:
        raise argparse.ArgumentTypeError(f"thread count must be >= 1, got {n}")
    return n


def build_parser() -> argparse.ArgumentParser:
    common = _Parser(add_help=False)
    common.add_argument("--seed", type=int, default=None,
                        help="override the config seed (default: config value or 0)")
    common.add_argument("--threads", type=_threads, default=None,
                        help="cap BLAS worker threads (fallback: MGE_THREADS)")

    parser = _Parser(prog="motiongraph", description="Motion-graph video prediction toolkit.")
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    p = sub.add_parser("synth", parents=[common], help="render a synthetic clip from a JSON spec")
    p.add_argument("--spec", required=True, help="scene spec (JSON)")
    p.add_argument("--out", required=True, help="output directory")

    p = sub.add_parser("train", parents=[common], help="train on synthetic clips")
    p.add_argument("--config", required=True, help="key = value config file")
    p.add_argument("--data", required=True,
                   help="directory of frame_*.ppm files, or of clip subdirectories holding them")
    p.add_argument("--out", required=True, help="checkpoint directory")
    p.add_argument("--steps", type=int, default=200)
    p.add_argument("--lr", type=float, default=1e-3, help="initial learning rate")

    p = sub.add_parser("predict", parents=[common], help="roll a checkpoint forward")
    p.add_argument("--ckpt", required=True, help="checkpoint directory")
    p.add_argument("--frames", required=True, nargs="+", help="T input frames (PPM), oldest first")
    p.add_argument("--steps", type=int, default=1)
    p.add_argument("--out", required=True, help="output directory")
    p.add_argument("--dump-features", action="store_true",
                   help="also write per-view node features after interaction")

    p = sub.add_parser("gradcheck", parents=[common], help="finite-difference gradient suites")
    p.add_argument("--config", help="model config for the end-to-end check (default: toy)")
    p.add_argument("--op", help=f"one of {', '.join(OPS)} or 'pipeline'")
    p.add_argument("--dtype", choices=("float64", "float32", "both"), default="float64")

    p = sub.add_parser("bench", parents=[common], help="graph vs dense storage report (CSV)")
    p.add_argument("--sizes", required=True,
                   help="comma-separated node counts (perfect squares) or HsxWs grids")
    p.add_argument("--T", type=int, default=2)
    p.add_argument("--k", type=int, default=4)
    p.add_argument("--channels", type=int, default=8)
    p.add_argument("--out", help="write the CSV here instead of stdout")

    p = sub.add_parser("dump-graph", parents=[common], help="edge list of the motion graph")
    src = p.add_mutually_exclusive_group()
    src.add_argument("--config", help="config file; parameters come from its seed")
    src.add_argument("--ckpt", help="checkpoint directory")
    clip = p.add_mutually_exclusive_group(required=True)
    clip.add_argument("--frames", nargs="+", help="T input frames (PPM)")
    clip.add_argument("--spec", help="scene spec (JSON); its first T frames are used")
    p.add_argument("--out", help="write the dump here instead of stdout")

    p = sub.add_parser("summary", parents=[common], help="parameter counts per module")
    src = p.add_mutually_exclusive_group()
    src.add_argument("--config", help="config file")
    src.add_argument("--preset", help="named preset (ucf, kitti, cityscapes, toy)")
    return parser


# -- helpers ------------------------------------------------------------------------

def _with_seed(cfg: PipelineConfig, seed: int | None) -> PipelineConfig:
    return cfg.replace(seed=seed).validate() if seed is not None else cfg


def _read_spec(path: str) -> dict:
    try:
        with open(path, encoding="utf-8") as fh:
            return json.load(fh)
    except OSError as exc:
        raise MotionGraphError(f"cannot read scene spec {path}: {exc.strerror}") from None
    except json.JSONDecodeError as exc:
        raise MotionGraphError(f"{path}: malformed JSON ({exc.msg}, line {exc.lineno})") from None


def _check_frames(frames: np.ndarray, cfg: PipelineConfig) -> np.ndarray:
    if frames.shape != (cfg.T, cfg.H, cfg.W, 3):
        raise MotionGraphError(f"model expects {cfg.T} frames of {cfg.H}x{cfg.W}, got "
                               f"{frames.shape[0]} of {frames.shape[1]}x{frames.shape[2]}")
    return frames.astype(cfg.np_dtype)


def _read_frames(paths: Sequence[str], cfg: PipelineConfig) -> np.ndarray:
    return _check_frames(np.stack([read_ppm(p) for p in paths]), cfg)


def _load_clips(root: Path) -> list[SyntheticScene]:
    if not root.is_dir():
        raise MotionGraphError(f"data directory {root} does not exist")
    if any(root.glob("frame_*.ppm")):
        dirs = [root]
    else:
        dirs = sorted(d for d in root.iterdir() if d.is_dir())
    scenes = []
    for d in dirs:
        files = sorted(d.glob("frame_*.ppm"))
        if not files:
            continue
        frames = np.stack([read_ppm(f) for f in files])
        T, H, W, _ = frames.shape
        scenes.append(SyntheticScene(H, W, frames, np.zeros((max(T - 1, 0), H, W, 2)),
                                     np.full((T, H, W), -1)))
    if not scenes:
        raise MotionGraphError(f"no frame_*.ppm files under {root}")
    return scenes


# -- commands -----------------------------------------------------------------------

def cmd_synth(args) -> int:
    spec = _read_spec(args.spec)
    if args.seed is not None:
        spec["seed"] = args.seed
    scene = make_scene(spec)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    for t, frame in enumerate(scene.frames):
        write_ppm(out / f"frame_{t:03d}.ppm", frame)
    mgt.save(out / "displacement.mgt", scene.displacement)
    print(f"wrote {scene.T} frames and displacement {scene.displacement.shape} to {out}")
    return EXIT_OK


def cmd_train(args) -> int:
    cfg = _with_seed(load_config(args.config), args.seed)
    scenes = _load_clips(Path(args.data))
    for sc in scenes:
        if (sc.height, sc.width) != (cfg.H, cfg.W):
            raise MotionGraphError(f"clip of {sc.height}x{sc.width} does not match config "
                                   f"{cfg.H}x{cfg.W}")
    result = train(scenes, cfg, args.steps, base_lr=args.lr)
    out = save_checkpoint(args.out, result.params, cfg)
    smooth = smoothed(result.history)
    rows = ["step,loss,smoothed,lr"]
    rows += [f"{i},{v:.9g},{s:.9g},{lr:.9g}" for i, (v, s, lr)
             in enumerate(zip(result.history, smooth, result.learning_rates))]
    (out / "loss.csv").write_text("\n".join(rows) + "\n", encoding="utf-8")
    print(f"{args.steps} steps; loss {smooth[0]:.6g} -> {smooth[-1]:.6g} (smoothed); "
          f"checkpoint in {out}")
    return EXIT_OK


def cmd_predict(args) -> int:
    if args.steps < 1:
        raise UsageError(f"--steps must be >= 1, got {args.steps}")
    cfg, params = load_checkpoint(args.ckpt)
    window = _read_frames(args.frames, cfg)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    for s in range(args.steps):
        with no_grad():
            res = forward(window, params, cfg)
        frame = np.array(res.prediction.data)
        write_ppm(out / f"pred_{s:03d}.ppm", frame)
        mgt.save(out / f"pred_{s:03d}.mgt", frame)
        mgt.save(out / f"field_{s:03d}.mgt", res.field.data)
        if args.dump_features:
            for m, feats in enumerate(res.features, start=1):
                mgt.save(out / f"features_{s:03d}_view{m}.mgt", feats.data)
        window = np.concatenate([window[1:], frame[None]], axis=0)
    print(f"wrote {args.steps} predictions to {out}")
    return EXIT_OK


def cmd_gradcheck(args) -> int:
    dtypes = ("float64", "float32") if args.dtype == "both" else (args.dtype,)
    if args.op is not None and args.op not in OPS and args.op != "pipeline":
        raise UsageError(f"unknown op {args.op!r}; choose from {', '.join(OPS)}, pipeline")
    seed = args.seed if args.seed is not None else 0
    failed = False
    for dtype in dtypes:
        tol = tolerance(dtype)
        results: dict[str, float] = {}
        if args.op != "pipeline":
            results.update(run_op_suite(np.dtype(dtype), seed=seed, only=args.op))
        if args.op in (None, "pipeline"):
            base = load_config(args.config) if args.config else gradcheck_config()
            cfg = base.replace(dtype=dtype).validate()
            report = run_pipeline_check(cfg, seed=seed)
            worst = max(report, key=report.get)
            results[f"pipeline[{worst}]"] = report[worst]
        for name, err in results.items():
            ok = err < tol
            failed |= not ok
            print(f"{dtype}  {name:<48} {err:.3e}  {'ok' if ok else 'FAIL'} (< {tol:g})")
    return EXIT_FAILURE if failed else EXIT_OK


def cmd_bench(args) -> int:
    try:
        sizes = [bench_mod.parse_size(s) for s in args.sizes.split(",") if s.strip()]
    except ValueError as exc:
        raise UsageError(f"--sizes: {exc}") from None
    if not sizes:
        raise UsageError("--sizes needs at least one entry")
    report = bench_mod.bench_memory(sizes, T=args.T, k=args.k, channels=args.channels,
                                    seed=args.seed or 0)
    text = report.to_csv()
    if args.out:
        Path(args.out).write_text(text, encoding="utf-8")
    else:
        sys.stdout.write(text)
    return EXIT_OK


def cmd_dump_graph(args) -> int:
    if args.ckpt:
        cfg, params = load_checkpoint(args.ckpt)
        cfg = _with_seed(cfg, args.seed)
    else:
        cfg = load_config(args.config) if args.config else preset("toy")
        cfg = _with_seed(cfg, args.seed)
        params = init_params(cfg)
    if args.frames:
        frames = _read_frames(args.frames, cfg)
    else:
        scene = make_scene(_read_spec(args.spec))
        if scene.T < cfg.T:
            raise MotionGraphError(f"scene has {scene.T} frames, the model needs {cfg.T}")
        frames = _check_frames(scene.frames[:cfg.T], cfg)
    with no_grad():
        graph = forward(frames, params, cfg).graph
    text = dump_graph(graph)
    if args.out:
        Path(args.out).write_text(text, encoding="utf-8")
    else:
        sys.stdout.write(text)
    return EXIT_OK


def cmd_summary(args) -> int:
    if args.config:
        cfg = load_config(args.config)
    else:
        cfg = preset(args.preset or "ucf")
    print(summary(_with_seed(cfg, args.seed)))
    return EXIT_OK


COMMANDS = {
    "synth": cmd_synth, "train": cmd_train, "predict": cmd_predict, "gradcheck": cmd_gradcheck,
    "bench": cmd_bench, "dump-graph": cmd_dump_graph, "summary": cmd_summary,
}


def _thread_limit(n: int | None):
    if n is None:
        env = os.environ.get("MGE_THREADS")
        if env:
            try:
                n = _threads(env)
            except (ValueError, argparse.ArgumentTypeError):
                raise UsageError(f"MGE_THREADS must be a positive integer, got {env!r}") from None
    if n is None:
        return contextlib.nullcontext()
    from threadpoolctl import threadpool_limits
    return threadpool_limits(limits=n)


def run(argv: Sequence[str] | None = None) -> int:
    try:
        args = build_parser().parse_args(argv)
        with _thread_limit(args.threads):
            return COMMANDS[args.command](args)
    except UsageError as exc:
        print(f"usage error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except (MotionGraphError, ValueError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_FAILURE


def main() -> None:
    sys.exit(run())


if __name__ == "__main__":
    main()
