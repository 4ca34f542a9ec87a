#!/usr/bin/env python3
"""Generate transform parity fixtures with torchvision.

Writes seeded input PNGs, the torchvision output of every default suite
perturbation for each input, and `manifest.csv` with one row per
(input, kind, level). Run from the repository root:

    python3 tools/gen_parity_fixtures.py --out crates/core/tests/fixtures/parity

Requires numpy, Pillow, torch and torchvision. The Rust test suite only reads
the committed output.
"""

import argparse
import csv
import math
from pathlib import Path

import numpy as np
import torch
import torchvision
import torchvision.transforms.functional as TF
from PIL import Image

BASES = {"gamma": 1.5, "contrast": 1.4, "brightness": 1.3, "sharpness": 2.0}
BLUR_STEP = 0.6


def suite():
    for kind in ("gamma", "contrast", "brightness", "sharpness"):
        for level in (-3, -2, -1, 1, 2, 3):
            yield kind, level, BASES[kind] ** level
    for level in range(1, 7):
        yield "blur", level, BLUR_STEP * level


def apply(kind, param, t):
    if kind == "gamma":
        return TF.adjust_gamma(t, param, gain=1.0)
    if kind == "contrast":
        return TF.adjust_contrast(t, param)
    if kind == "brightness":
        return TF.adjust_brightness(t, param)
    if kind == "sharpness":
        return TF.adjust_sharpness(t, param)
    radius = math.ceil(3.0 * param)
    return TF.gaussian_blur(t, [2 * radius + 1, 2 * radius + 1], [param, param])


def make_input(rng, channels, height, width):
    """Smooth texture plus noise and a few hard edges, kept inside (0, 1)."""
    coarse = rng.uniform(0.1, 0.9, size=(channels, 5, 5)).astype(np.float32)
    t = torch.from_numpy(coarse)[None]
    t = torch.nn.functional.interpolate(t, size=(height, width), mode="bilinear", align_corners=False)[0]
    t = t + torch.from_numpy(rng.normal(0, 0.06, size=(channels, height, width)).astype(np.float32))
    r0, c0 = rng.integers(0, height // 2), rng.integers(0, width // 2)
    t[:, r0 : r0 + height // 3, c0 : c0 + width // 3] += float(rng.choice([-0.35, 0.35]))
    return to_u8(t.clamp(0.02, 0.98))


def to_u8(t):
    """CHW float in [0, 1] -> HWC uint8, rounding half away from zero."""
    a = t.clamp(0, 1).permute(1, 2, 0).numpy().astype(np.float64) * 255.0
    return np.floor(a + 0.5).astype(np.uint8)


def save(a, path):
    Image.fromarray(a[:, :, 0] if a.shape[2] == 1 else a, mode="L" if a.shape[2] == 1 else "RGB").save(path)


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--out", type=Path, required=True)
    ap.add_argument("--seed", type=int, default=20240601)
    ap.add_argument("--count", type=int, default=24, help="number of input images")
    args = ap.parse_args()

    rng = np.random.default_rng(args.seed)
    (args.out / "inputs").mkdir(parents=True, exist_ok=True)
    (args.out / "outputs").mkdir(parents=True, exist_ok=True)
    shapes = [(24, 24), (20, 32), (31, 17), (13, 40)]
    rows = []
    for i in range(args.count):
        channels = 1 if i % 2 == 0 else 3
        height, width = shapes[(i // 2) % len(shapes)]
        name = f"img{i:02d}"
        u8 = make_input(rng, channels, height, width)
        save(u8, args.out / "inputs" / f"{name}.png")
        t = torch.from_numpy(u8.astype(np.float32) / 255.0).permute(2, 0, 1).contiguous()
        for kind, level, param in suite():
            out = apply(kind, param, t)
            rel = f"outputs/{name}_{kind}_{level:+d}.png"
            save(to_u8(out), args.out / rel)
            rows.append([f"inputs/{name}.png", kind, level, repr(param), rel])

    with open(args.out / "manifest.csv", "w", newline="") as f:
        f.write(f"# torchvision {torchvision.__version__}, torch {torch.__version__}, seed {args.seed}\n")
        w = csv.writer(f, lineterminator="\n")
        w.writerow(["input", "kind", "level", "parameter", "output"])
        w.writerows(rows)
    print(f"{args.count} inputs, {len(rows)} outputs -> {args.out}")


if __name__ == "__main__":
    main()
