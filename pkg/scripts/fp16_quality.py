"""PSNR and worst-case difference of fp16-operand renders against fp32 renders.

    python scripts/fp16_quality.py --seeds 1 2 3 4 5
"""

import argparse
import json

from gsraster.metrics import max_abs_diff, psnr
from gsraster.pipeline import render
from gsraster.scene import canonical_camera, gen_synthetic_scene


def main():
    ap = argparse.ArgumentParser(description=__doc__.split("\n\n")[0])
    ap.add_argument("--seeds", type=int, nargs="+", default=[1, 2, 3, 4, 5])
    ap.add_argument("--count", type=int, default=5000)
    ap.add_argument("--size", type=int, default=512)
    ap.add_argument("--group", type=int, default=2)
    ap.add_argument("--extent", type=float, default=1.0, help="scene half-width; larger values stress fp16 offsets less")
    args = ap.parse_args()
    cam = canonical_camera(args.size, args.size, args.extent)
    for seed in args.seeds:
        scene = gen_synthetic_scene(seed, args.count, args.extent)
        ref = render(scene, cam, group=args.group, mode="fp32").image
        low = render(scene, cam, group=args.group, mode="fp16").image
        diff, (x, y, ch) = max_abs_diff(ref, low)
        print(json.dumps({
            "seed": seed,
            "psnr_db": round(psnr(ref, low), 3),
            "max_abs_diff": round(diff, 6),
            "at": [x, y, ch],
            "bit_exact": bool((ref.rgb == low.rgb).all()),
        }))


if __name__ == "__main__":
    main()
