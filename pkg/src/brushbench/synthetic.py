"""Synthetic image suites for tests, demos, and the acceptance experiments.

Two families:
  - evaluation suite: noisy two-blob scenes with foreground-colored distractor
    islands and a low-contrast fade on one side of the object; exercises the
    differences between the four systems and the robot policies.
  - planted suite: piecewise-constant scenes with boundary-band specks and a
    thin intermediate-color finger, built so that exactly one mid-range
    contrast weight achieves a perfect one-shot segmentation.
"""

from __future__ import annotations

import argparse
import os

import numpy as np

from .data import (RgbImage, LabelMap, Trimap, BrushStroke, DatasetEntry,
                   make_tight_trimap, save_dataset_entry)

FG_COLOR = np.array([0.85, 0.55, 0.20])
BG_COLOR = np.array([0.20, 0.30, 0.70])


def _ellipse(h, w, center, radii, wobble=None):
    yy, xx = np.mgrid[0:h, 0:w]
    dy = (yy - center[0]) / radii[0]
    dx = (xx - center[1]) / radii[1]
    rr = dy * dy + dx * dx
    if wobble is not None:
        ang = np.arctan2(yy - center[0], xx - center[1])
        rr = rr * (1.0 + wobble[0] * np.sin(2 * ang + wobble[2])
                   + wobble[1] * np.sin(3 * ang))
    return rr <= 1.0


def make_two_blob(seed: int, h: int = 56, w: int = 76, noise: float = 0.085,
                  fade: float = 0.95, n_distractors: int = 3) -> DatasetEntry:
    """One noisy scene: wobbly fg blob, right-side contrast fade, fg-colored
    distractor islands in the background, and a small static brush set."""
    rng = np.random.default_rng(seed)
    cy = h // 2 + int(rng.integers(-4, 5))
    cx = w // 2 + int(rng.integers(-6, 7))
    ry = float(rng.uniform(12, 16))
    rx = float(rng.uniform(15, 20))
    gt_mask = _ellipse(h, w, (cy, cx), (ry, rx),
                       wobble=(rng.uniform(0.05, 0.15), rng.uniform(0.0, 0.1),
                               rng.uniform(0, np.pi)))

    data = np.tile(BG_COLOR, (h, w, 1))
    data[gt_mask] = FG_COLOR
    # fade the fg toward bg on the right side of the blob (low-contrast boundary)
    xx = np.arange(w)[None, :].repeat(h, 0)
    rel = np.clip((xx - cx) / max(rx, 1.0), 0.0, 1.0)
    blend = fade * rel[gt_mask]
    data[gt_mask] = (1 - blend[:, None]) * FG_COLOR + blend[:, None] * BG_COLOR

    # fg-colored islands in the background, away from the blob and the corners
    distractors = []
    tries = 0
    while len(distractors) < n_distractors and tries < 200:
        tries += 1
        dy = int(rng.integers(6, h - 6))
        dx = int(rng.integers(6, w - 6))
        rad = float(rng.uniform(2.0, 3.5))
        if np.hypot(dy - cy, (dx - cx) * ry / rx) < max(ry, rx) + rad + 6:
            continue
        if min(np.hypot(dy - r, dx - c) for r, c in _corner_spots(h, w)) < rad + 5:
            continue
        dm = _ellipse(h, w, (dy, dx), (rad, rad * rng.uniform(0.8, 1.3)))
        if (dm & gt_mask).any():
            continue
        data[dm] = FG_COLOR
        distractors.append((dy, dx))

    data = np.clip(data + rng.normal(0.0, noise, data.shape), 0.0, 1.0)
    img = RgbImage(data)
    gt = LabelMap(gt_mask.astype(np.uint8))

    # the fg brush sits on the strong-contrast side and misses the faded colors,
    # so initial color models undershoot the right part of the object
    brush = Trimap.empty(h, w)
    brush = brush.with_stroke(BrushStroke(1, (cy, cx - int(rx * 0.3)), 3))
    for r, c in _corner_spots(h, w):
        if not gt_mask[r, c]:
            brush = brush.with_stroke(BrushStroke(0, (r, c), 3))

    return DatasetEntry(f"blob{seed:03d}", img, gt, brush,
                        make_tight_trimap(gt, 5))


def _corner_spots(h, w):
    return [(5, 5), (5, w - 6), (h - 6, 5), (h - 6, w - 6)]


def make_eval_suite(n: int = 10, base_seed: int = 0) -> list[DatasetEntry]:
    return [make_two_blob(base_seed + i) for i in range(n)]


# ---------------------------------------------------------------------------
# Planted-optimum suite
# ---------------------------------------------------------------------------

PLANTED_SIGMA = 0.03
PLANTED_SPECK_T = 0.53   # speck color just past the unary midpoint
PLANTED_FINGER_T = 0.70  # finger color, clearly fg-preferred but removable
PLANTED_BAND = 4
PLANTED_WBETA = 0.02     # keeps beta small so contrast edges stay informative


def make_planted_image(seed: int, h: int = 40, w: int = 56) -> DatasetEntry:
    """Scene whose one-shot tight-trimap segmentation is exact only for
    mid-range contrast weights: low weights leave bg specks mislabeled,
    high weights cut off a thin foreground finger."""
    rng = np.random.default_rng(10_000 + seed)
    cy = h // 2 + int(rng.integers(-2, 3))
    cx = w // 2 - 6 + int(rng.integers(-2, 3))
    ry = float(rng.uniform(10, 12))
    rx = float(rng.uniform(11, 13))
    gt_mask = _ellipse(h, w, (cy, cx), (ry, rx))

    # one-pixel-wide finger sticking out to the right
    finger_len = 10
    fx0 = int(cx + rx * np.sqrt(max(0.0, 1 - ((0.0) / ry) ** 2)))
    fy = cy
    finger = np.zeros((h, w), bool)
    finger[fy, fx0:min(w, fx0 + finger_len)] = True
    gt_mask = gt_mask | finger

    data = np.tile(BG_COLOR, (h, w, 1))
    data[gt_mask] = FG_COLOR
    fcol = BG_COLOR + PLANTED_FINGER_T * (FG_COLOR - BG_COLOR)
    data[finger] = fcol

    # single-pixel specks in the unlabeled bg band near the boundary
    scol = BG_COLOR + PLANTED_SPECK_T * (FG_COLOR - BG_COLOR)
    gt = LabelMap(gt_mask.astype(np.uint8))
    from .data import distance_to_zero
    d_to_fg = distance_to_zero(~gt_mask)
    band_bg = (~gt_mask) & (d_to_fg >= 2.0) & (d_to_fg <= 3.0)
    # keep specks away from the finger so they stay isolated
    band_bg[max(0, fy - 3):fy + 4, fx0 - 2:] = False
    cand = np.argwhere(band_bg)
    rng.shuffle(cand)
    specks = []
    for r, c in cand:
        if all(abs(r - r2) + abs(c - c2) > 6 for r2, c2 in specks):
            specks.append((int(r), int(c)))
        if len(specks) == 3:
            break
    for r, c in specks:
        data[r, c] = scol

    data = np.clip(data + rng.normal(0.0, PLANTED_SIGMA, data.shape), 0.0, 1.0)
    img = RgbImage(data)

    brush = Trimap.empty(h, w)
    brush = brush.with_stroke(BrushStroke(1, (cy, cx), 3))
    for r, c in _corner_spots(h, w):
        brush = brush.with_stroke(BrushStroke(0, (r, c), 3))

    return DatasetEntry(f"plant{seed:03d}", img, gt, brush,
                        make_tight_trimap(gt, PLANTED_BAND))


def make_planted_suite(n: int = 10, base_seed: int = 0) -> list[DatasetEntry]:
    return [make_planted_image(base_seed + i) for i in range(n)]


# planted sweep setup: only the middle value yields zero error on every image
PLANTED_GRID = (0.0, 1.0, 18.0, 150.0, 2000.0)
PLANTED_VALUE = 18.0


def main(argv=None) -> int:
    ap = argparse.ArgumentParser(description="generate synthetic dataset PNGs")
    ap.add_argument("--out", required=True, help="output directory")
    ap.add_argument("--kind", choices=["eval", "planted"], default="eval")
    ap.add_argument("--n", type=int, default=10)
    ap.add_argument("--seed", type=int, default=0)
    args = ap.parse_args(argv)

    suite = make_eval_suite(args.n, args.seed) if args.kind == "eval" \
        else make_planted_suite(args.n, args.seed)
    os.makedirs(args.out, exist_ok=True)
    for entry in suite:
        save_dataset_entry(entry, args.out)
    print(f"wrote {len(suite)} images to {args.out}")
    return 0


if __name__ == "__main__":
    raise SystemExit(main())
