"""Reference out-of-process matcher used by the adapter's tests.

Implements the subprocess contract every plugged-in matcher must follow:

    <command> ... IR_PNG VIS_PNG OUT_JSON

The process reads the two (already preprocessed and resized) images, writes
``{"matches": [[x_ir, y_ir, x_vis, y_vis, confidence], ...]}`` to OUT_JSON,
and exits 0.  A nonzero exit, a missing output file, or unparseable JSON all
count as a crash on the adapter side.

This stub emits an identity grid over the overlapping region of the two
frames, with a deterministic position-derived confidence so truncation order
is observable.  Flags simulate the failure modes the adapter must survive.
"""

from __future__ import annotations

import argparse
import json
import sys
import time

from PIL import Image


def grid_matches(ir_size, vis_size, step: int, margin: int) -> list[list[float]]:
    w = min(ir_size[0], vis_size[0])
    h = min(ir_size[1], vis_size[1])
    rows = []
    for y in range(margin, h - margin + 1, step):
        for x in range(margin, w - margin + 1, step):
            conf = ((x * 31 + y * 17) % 997) / 996.0
            rows.append([float(x), float(y), float(x), float(y), conf])
    return rows


def main(argv=None) -> int:
    ap = argparse.ArgumentParser(prog="cmbench-stub-matcher")
    ap.add_argument("ir")
    ap.add_argument("vis")
    ap.add_argument("out")
    ap.add_argument("--step", type=int, default=16, help="grid spacing in pixels")
    ap.add_argument("--margin", type=int, default=8, help="border kept empty")
    ap.add_argument("--no-confidence", action="store_true",
                    help="emit 4-column rows without a confidence value")
    ap.add_argument("--fail", action="store_true", help="exit nonzero without writing")
    ap.add_argument("--garbage", action="store_true", help="write invalid JSON")
    ap.add_argument("--sleep", type=float, default=0.0,
                    help="stall before writing, to exercise the timeout path")
    args = ap.parse_args(argv)

    if args.fail:
        print("stub matcher asked to fail", file=sys.stderr)
        return 3
    if args.sleep > 0:
        time.sleep(args.sleep)
    if args.garbage:
        with open(args.out, "w", encoding="utf-8") as f:
            f.write("this is not json {{{")
        return 0

    with Image.open(args.ir) as im:
        ir_size = im.size
    with Image.open(args.vis) as im:
        vis_size = im.size
    rows = grid_matches(ir_size, vis_size, args.step, args.margin)
    if args.no_confidence:
        rows = [r[:4] for r in rows]
    with open(args.out, "w", encoding="utf-8") as f:
        json.dump({"matches": rows}, f)
    return 0


if __name__ == "__main__":
    sys.exit(main())
