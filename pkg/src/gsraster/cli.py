"""Command-line interface.

Exit codes: 0 success, 1 ``compare`` found differing images, 2 usage or input error.

Report keys
-----------
render sidecar (``<out>.stats``): backend, group, precision, width, height,
n_input, n_culled, n_degenerate, n_visible, n_entries, entry_loads,
chunk_loads, fragment_mma, skipped_pairs, padding_waste.

compare: psnr_db, max_abs_diff, max_diff_pixel, bit_exact.

stats (one line per group size): group, n_total, n_group, load_reduction,
mask_histogram, and n_total_recount / n_group_recount with ``--verify``.

bench (one line per configuration): backend, group, precision, reps,
median_s, mean_s, then the render sidecar counters.
"""

from __future__ import annotations

import argparse
import json
import statistics
import sys
import time
from pathlib import Path

import numpy as np

from .binning import GroupConfig, build_group_entries
from .errors import ConfigError, FormatError, ValidationError
from .kernel import PrecisionMode
from .metrics import load_reduction, max_abs_diff, psnr, recount_appearances
from .pipeline import render
from .projection import project_scene
from .scene import (
    ImageBuffer,
    canonical_camera,
    gen_synthetic_scene,
    load_camera,
    load_scene,
    read_ppm,
    save_camera,
    save_scene,
    write_image,
)

GROUP_CHOICES = (1, 2, 4)


def _fmt(value) -> str:
    if isinstance(value, bool):
        return "true" if value else "false"
    if isinstance(value, float):
        return f"{value:.6f}"
    return str(value)


def _kv_line(record: dict) -> str:
    return " ".join(f"{k}={_fmt(v)}" for k, v in record.items())


def _group_list(text: str) -> list[int]:
    try:
        groups = [int(v) for v in text.split(",") if v.strip()]
    except ValueError as exc:
        raise argparse.ArgumentTypeError(f"bad group list {text!r}") from exc
    bad = [g for g in groups if g not in GROUP_CHOICES]
    if bad or not groups:
        raise argparse.ArgumentTypeError(f"group sizes must be drawn from {GROUP_CHOICES}")
    return groups


def _render_record(result) -> dict:
    rec = {
        "backend": result.ops.backend,
        "group": result.ops.group,
        "precision": result.ops.precision,
        "width": result.image.width,
        "height": result.image.height,
        "n_input": result.projection.n_input,
        "n_culled": result.projection.n_culled,
        "n_degenerate": result.projection.n_degenerate,
        "n_visible": result.projection.n_visible,
        "n_entries": len(result.lists.entries),
    }
    ops = result.ops.as_dict()
    for key in ("entry_loads", "chunk_loads", "fragment_mma", "skipped_pairs", "padding_waste"):
        rec[key] = ops[key]
    return rec


def cmd_render(args) -> int:
    if args.backend == "scalar" and args.group != 1:
        args.parser.error("--backend scalar requires --group 1")
    scene = load_scene(args.scene)
    cam = load_camera(args.camera)
    result = render(scene, cam, args.group, args.precision, args.backend, args.workers, args.chunk)
    out = Path(args.out)
    write_image(result.image, out)
    record = _render_record(result)
    out.with_suffix(".stats").write_text("".join(f"{k}={_fmt(v)}\n" for k, v in record.items()))
    return 0


def cmd_compare(args) -> int:
    a, b = read_ppm(args.a), read_ppm(args.b)
    if a.shape != b.shape:
        raise ValidationError(f"image sizes differ: {a.shape[1]}x{a.shape[0]} vs {b.shape[1]}x{b.shape[0]}")
    ia, ib = ImageBuffer.from_bytes(a), ImageBuffer.from_bytes(b)
    exact = bool(np.array_equal(a, b))
    diff, (x, y, ch) = max_abs_diff(ia, ib)
    print(f"psnr_db={psnr(ia, ib):.4f}")
    print(f"max_abs_diff={diff:.6f}")
    print(f"max_diff_pixel={x},{y},{ch}")
    print(f"bit_exact={_fmt(exact)}")
    return 0 if exact else 1


def cmd_stats(args) -> int:
    scene = load_scene(args.scene)
    cam = load_camera(args.camera)
    projected, _ = project_scene(scene, cam)
    for g in args.groups:
        cfg = GroupConfig.square(g, cam.width, cam.height)
        report = load_reduction(build_group_entries(projected, cfg))
        rec = {"group": g, **report.as_dict()}
        rec["mask_histogram"] = ",".join(f"{bits}:{n}" for bits, n in rec["mask_histogram"].items())
        if args.verify:
            rec["n_total_recount"], rec["n_group_recount"] = recount_appearances(projected, cfg)
        print(json.dumps(rec) if args.jsonl else _kv_line(rec))
    return 0


def cmd_bench(args) -> int:
    scene = load_scene(args.scene)
    cam = load_camera(args.camera)
    configs = [("scalar", 1)] + [("tensor", g) for g in args.groups]
    for backend, g in configs:
        times = []
        for _ in range(args.reps):
            start = time.perf_counter()
            result = render(scene, cam, g, args.precision, backend, args.workers)
            times.append(time.perf_counter() - start)
        rec = {
            "backend": backend,
            "group": g,
            "precision": args.precision,
            "reps": args.reps,
            "median_s": statistics.median(times),
            "mean_s": statistics.fmean(times),
        }
        rec.update({k: v for k, v in _render_record(result).items() if k not in rec})
        print(json.dumps(rec) if args.jsonl else _kv_line(rec))
    if not args.jsonl:
        print("# CPU emulation timings; operation counts are the comparison proxy, GPU speedups are not reproduced")
    return 0


def cmd_gen_scene(args) -> int:
    scene = gen_synthetic_scene(args.seed, args.count, args.extent, (args.scale_min, args.scale_max), args.sh_degree)
    save_scene(scene, args.out)
    if args.camera_out:
        save_camera(canonical_camera(args.width, args.height, args.extent), args.camera_out)
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="gsraster", description=__doc__.split("\n\n")[0])
    sub = parser.add_subparsers(dest="command", required=True)

    def scene_args(p):
        p.add_argument("--scene", required=True, help=".gsb scene file")
        p.add_argument("--camera", required=True, help="key=value camera config")

    p = sub.add_parser("render", help="render a scene to a P6 PPM plus a .stats sidecar")
    scene_args(p)
    p.add_argument("--out", required=True)
    p.add_argument("--backend", choices=("scalar", "tensor"), default="tensor")
    p.add_argument("--precision", choices=[m.value for m in PrecisionMode], default="fp32")
    p.add_argument("--group", type=int, choices=GROUP_CHOICES, default=1)
    p.add_argument("--workers", type=int, default=1)
    p.add_argument("--chunk", type=int, default=16, help="entries per staged chunk (1-16)")
    p.set_defaults(func=cmd_render, parser=p)

    p = sub.add_parser("compare", help="PSNR / max difference / bit-exactness of two PPMs")
    p.add_argument("a")
    p.add_argument("b")
    p.set_defaults(func=cmd_compare)

    p = sub.add_parser("stats", help="Gaussian loading reduction per group size")
    scene_args(p)
    p.add_argument("--groups", type=_group_list, default=[1, 2, 4], help="comma list, e.g. 1,2,4")
    p.add_argument("--verify", action="store_true", help="add a brute-force per-tile recount")
    p.add_argument("--jsonl", action="store_true")
    p.set_defaults(func=cmd_stats)

    p = sub.add_parser("bench", help="timings and operation counters per backend and group size")
    scene_args(p)
    p.add_argument("--reps", type=int, default=3)
    p.add_argument("--groups", type=_group_list, default=[1, 2, 4])
    p.add_argument("--precision", choices=[m.value for m in PrecisionMode], default="fp32")
    p.add_argument("--workers", type=int, default=1)
    p.add_argument("--jsonl", action="store_true")
    p.set_defaults(func=cmd_bench, parser=p)

    p = sub.add_parser("gen-scene", help="write a deterministic synthetic scene")
    p.add_argument("--seed", type=int, default=7)
    p.add_argument("--count", type=int, default=5000)
    p.add_argument("--extent", type=float, default=1.0)
    p.add_argument("--scale-min", type=float, default=0.005)
    p.add_argument("--scale-max", type=float, default=0.03)
    p.add_argument("--sh-degree", type=int, choices=(0, 3), default=0)
    p.add_argument("--out", required=True)
    p.add_argument("--camera-out", help="also write the matching canonical camera")
    p.add_argument("--width", type=int, default=512)
    p.add_argument("--height", type=int, default=512)
    p.set_defaults(func=cmd_gen_scene)
    return parser


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    if getattr(args, "reps", 1) < 1:
        parser.error("--reps must be at least 1")
    if getattr(args, "workers", 1) < 1:
        parser.error("--workers must be at least 1")
    try:
        return args.func(args)
    except (FormatError, ValidationError, ConfigError, OSError, ValueError) as exc:
        msg = " ".join(str(exc).split())
        print(f"gsraster {args.command}: error: {msg}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
