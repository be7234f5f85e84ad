"""Image/mask/trimap data model, file I/O, downscaling, morphology, and transforms.

Conventions used throughout the package:
  - arrays are row-major (H, W[, C]) numpy arrays; coordinates are (row, col)
  - label 0 = background, 1 = foreground
  - trimap marks: BG_SEED=0, FG_SEED=1, UNLABELED=2
"""

from __future__ import annotations

import os
from dataclasses import dataclass, field

import numpy as np
from PIL import Image
from scipy import ndimage

from .errors import DatasetError

BG_SEED = 0
FG_SEED = 1
UNLABELED = 2

# grayscale PNG encoding of trimap marks
_PNG_BG, _PNG_FG, _PNG_UNL = 0, 255, 128


def _freeze(arr: np.ndarray) -> np.ndarray:
    arr.setflags(write=False)
    return arr


@dataclass(frozen=True)
class RgbImage:
    """H x W grid of 3-channel colors, each channel in [0, 1]."""

    data: np.ndarray  # (H, W, 3) float64

    def __post_init__(self):
        d = np.asarray(self.data, dtype=np.float64)
        if d.ndim != 3 or d.shape[2] != 3 or d.shape[0] < 1 or d.shape[1] < 1:
            raise ValueError(f"image data must be (H, W, 3), got {d.shape}")
        if not np.isfinite(d).all() or d.min() < 0.0 or d.max() > 1.0:
            raise ValueError("image channels must be finite and in [0, 1]")
        object.__setattr__(self, "data", _freeze(d))

    @property
    def height(self) -> int:
        return self.data.shape[0]

    @property
    def width(self) -> int:
        return self.data.shape[1]


@dataclass(frozen=True)
class LabelMap:
    """H x W binary segmentation: 0 = background, 1 = foreground."""

    labels: np.ndarray  # (H, W) uint8

    def __post_init__(self):
        lab = np.asarray(self.labels, dtype=np.uint8)
        if lab.ndim != 2:
            raise ValueError(f"labels must be 2-D, got shape {lab.shape}")
        if not np.isin(lab, (0, 1)).all():
            raise ValueError("labels must be in {0, 1}")
        object.__setattr__(self, "labels", _freeze(lab))

    @property
    def height(self) -> int:
        return self.labels.shape[0]

    @property
    def width(self) -> int:
        return self.labels.shape[1]

    def __eq__(self, other) -> bool:
        return isinstance(other, LabelMap) and np.array_equal(self.labels, other.labels)


@dataclass(frozen=True)
class Trimap:
    """H x W ternary map of user hints: BG_SEED, FG_SEED, or UNLABELED."""

    marks: np.ndarray  # (H, W) uint8

    def __post_init__(self):
        m = np.asarray(self.marks, dtype=np.uint8)
        if m.ndim != 2:
            raise ValueError(f"marks must be 2-D, got shape {m.shape}")
        if not np.isin(m, (BG_SEED, FG_SEED, UNLABELED)).all():
            raise ValueError("marks must be BG_SEED, FG_SEED, or UNLABELED")
        object.__setattr__(self, "marks", _freeze(m))

    @property
    def height(self) -> int:
        return self.marks.shape[0]

    @property
    def width(self) -> int:
        return self.marks.shape[1]

    @property
    def fg_mask(self) -> np.ndarray:
        return self.marks == FG_SEED

    @property
    def bg_mask(self) -> np.ndarray:
        return self.marks == BG_SEED

    def has_both_seeds(self) -> bool:
        return bool(self.fg_mask.any() and self.bg_mask.any())

    def with_stroke(self, stroke: "BrushStroke") -> "Trimap":
        """New trimap with the stroke's pixels overwritten to its label's seed mark."""
        m = self.marks.copy()
        m.setflags(write=True)
        m[stroke.pixel_mask(self.height, self.width)] = (
            FG_SEED if stroke.label == 1 else BG_SEED
        )
        return Trimap(m)

    @staticmethod
    def empty(height: int, width: int) -> "Trimap":
        return Trimap(np.full((height, width), UNLABELED, dtype=np.uint8))


def disk_mask(height: int, width: int, center: tuple[int, int], radius: int) -> np.ndarray:
    """Boolean mask of the closed disk clipped to the image.

    A pixel is covered iff its squared distance from the center is <= radius^2.
    radius 0 denotes the degenerate single-pixel stroke.
    """
    r0, c0 = center
    rr = np.arange(height)[:, None] - r0
    cc = np.arange(width)[None, :] - c0
    return rr * rr + cc * cc <= radius * radius


@dataclass(frozen=True)
class BrushStroke:
    """One circular brush stroke: label + closed disk of pixels around center.

    radius 0 is the degenerate single-pixel stroke used when even radius 1
    would straddle the ground-truth boundary.
    """

    label: int  # 0 = bg, 1 = fg
    center: tuple[int, int]  # (row, col)
    radius: int

    def __post_init__(self):
        if self.label not in (0, 1):
            raise ValueError("stroke label must be 0 or 1")
        if self.radius < 0:
            raise ValueError("stroke radius must be >= 0")

    def pixel_mask(self, height: int, width: int) -> np.ndarray:
        r, c = self.center
        if not (0 <= r < height and 0 <= c < width):
            raise ValueError(f"stroke center {self.center} outside {height}x{width} image")
        return disk_mask(height, width, self.center, self.radius)

    def pixels(self, height: int, width: int) -> np.ndarray:
        """(n, 2) array of covered (row, col) coordinates."""
        return np.argwhere(self.pixel_mask(height, width))


@dataclass(frozen=True)
class DatasetEntry:
    name: str
    image: RgbImage
    gt: LabelMap
    brush: Trimap  # static user brush strokes
    tight: Trimap  # eroded/dilated ground truth

    def __post_init__(self):
        shape = self.image.data.shape[:2]
        for part, arr in (("gt", self.gt.labels), ("brush", self.brush.marks),
                          ("tight", self.tight.marks)):
            if arr.shape != shape:
                raise DatasetError(
                    f"{self.name}: {part} shape {arr.shape} does not match image {shape}")


# ---------------------------------------------------------------------------
# PNG I/O
# ---------------------------------------------------------------------------

def load_image_png(path: str) -> RgbImage:
    if not os.path.exists(path):
        raise DatasetError(f"missing image file: {path}")
    arr = np.asarray(Image.open(path).convert("RGB"), dtype=np.float64) / 255.0
    return RgbImage(arr)


def save_image_png(img: RgbImage, path: str) -> None:
    Image.fromarray(np.round(img.data * 255.0).astype(np.uint8), "RGB").save(path)


def load_labelmap_png(path: str) -> LabelMap:
    if not os.path.exists(path):
        raise DatasetError(f"missing mask file: {path}")
    arr = np.asarray(Image.open(path).convert("L"))
    return LabelMap((arr >= 128).astype(np.uint8))


def save_labelmap_png(gt: LabelMap, path: str) -> None:
    Image.fromarray(gt.labels * np.uint8(255), "L").save(path)


def load_trimap_png(path: str) -> Trimap:
    if not os.path.exists(path):
        raise DatasetError(f"missing trimap file: {path}")
    arr = np.asarray(Image.open(path).convert("L"))
    marks = np.full(arr.shape, UNLABELED, dtype=np.uint8)
    marks[arr <= 64] = BG_SEED
    marks[arr >= 192] = FG_SEED
    return Trimap(marks)


def save_trimap_png(tri: Trimap, path: str) -> None:
    out = np.full(tri.marks.shape, _PNG_UNL, dtype=np.uint8)
    out[tri.marks == BG_SEED] = _PNG_BG
    out[tri.marks == FG_SEED] = _PNG_FG
    Image.fromarray(out, "L").save(path)


# ---------------------------------------------------------------------------
# Downscaling
# ---------------------------------------------------------------------------

def _fit_dims(w: int, h: int, max_w: int, max_h: int) -> tuple[int, int]:
    scale = min(max_w / w, max_h / h)
    # round half up, never below 1 pixel
    new_w = max(1, int(np.floor(w * scale + 0.5)))
    new_h = max(1, int(np.floor(h * scale + 0.5)))
    return min(new_w, max_w), min(new_h, max_h)


def downscale_max(img: RgbImage, max_w: int, max_h: int) -> RgbImage:
    """Shrink so the image fits in max_w x max_h, keeping aspect ratio.

    Images that already fit are returned unchanged, which also makes the
    operation idempotent. Uses bilinear averaging.
    """
    if max_w < 1 or max_h < 1:
        raise ValueError("max dimensions must be >= 1")
    if img.width <= max_w and img.height <= max_h:
        return img
    new_w, new_h = _fit_dims(img.width, img.height, max_w, max_h)
    pil = Image.fromarray(np.round(img.data * 255.0).astype(np.uint8), "RGB")
    out = pil.resize((new_w, new_h), Image.BILINEAR)
    return RgbImage(np.asarray(out, dtype=np.float64) / 255.0)


def _downscale_mask(arr: np.ndarray, new_w: int, new_h: int) -> np.ndarray:
    pil = Image.fromarray(arr, "L").resize((new_w, new_h), Image.NEAREST)
    return np.asarray(pil)


# ---------------------------------------------------------------------------
# Morphology and transforms
# ---------------------------------------------------------------------------

def distance_transform(mask: np.ndarray) -> np.ndarray:
    """Exact Euclidean distance from each pixel to the nearest zero pixel.

    The image border is treated as a ring of zeros, so an all-ones mask
    measures distance to the border. Pixels outside the mask have distance 0.
    """
    m = np.asarray(mask, dtype=bool)
    padded = np.zeros((m.shape[0] + 2, m.shape[1] + 2), dtype=bool)
    padded[1:-1, 1:-1] = m
    dist = ndimage.distance_transform_edt(padded)
    return dist[1:-1, 1:-1]


def distance_to_zero(mask: np.ndarray) -> np.ndarray:
    """Euclidean distance to the nearest zero pixel, without the border ring.

    Masks with no zero pixel at all get +inf everywhere.
    """
    m = np.asarray(mask, dtype=bool)
    if m.all():
        return np.full(m.shape, np.inf)
    return ndimage.distance_transform_edt(m)


def make_tight_trimap(gt: LabelMap, band: int) -> Trimap:
    """Trimap from ground truth: erode fg by `band` for FgSeed, dilate for BgSeed.

    Morphology uses the Euclidean disk: a fg pixel survives erosion iff no bg
    pixel lies within distance `band`; a pixel is BgSeed iff no fg pixel does.
    """
    if band < 0:
        raise ValueError("band must be >= 0")
    fg = gt.labels.astype(bool)
    dist_to_bg = distance_to_zero(fg)
    dist_to_fg = distance_to_zero(~fg)
    marks = np.full(gt.labels.shape, UNLABELED, dtype=np.uint8)
    marks[dist_to_bg > band] = FG_SEED
    marks[dist_to_fg > band] = BG_SEED
    return Trimap(marks)


@dataclass(frozen=True)
class Component:
    """One connected component of a binary mask."""

    mask: np.ndarray = field(compare=False)
    size: int
    first_index: int  # smallest row-major index of any member pixel


def connected_components(mask: np.ndarray, connectivity: int = 4) -> list[Component]:
    """Connected components sorted by size descending, ties by first row-major pixel."""
    if connectivity not in (4, 8):
        raise ValueError("connectivity must be 4 or 8")
    m = np.asarray(mask, dtype=bool)
    structure = ndimage.generate_binary_structure(2, 1 if connectivity == 4 else 2)
    labeled, n = ndimage.label(m, structure=structure)
    comps = []
    flat = labeled.ravel()
    for lab in range(1, n + 1):
        cmask = labeled == lab
        comps.append(Component(
            mask=_freeze(cmask),
            size=int(cmask.sum()),
            first_index=int(np.flatnonzero(flat == lab)[0]),
        ))
    comps.sort(key=lambda c: (-c.size, c.first_index))
    return comps


# ---------------------------------------------------------------------------
# Dataset loading
# ---------------------------------------------------------------------------

def load_dataset(root: str, max_w: int = 241, max_h: int = 161,
                 tight_band: int = 7) -> list[DatasetEntry]:
    """Load all `<name>.img.png` triples under `root`, downscaled to fit max dims.

    Expects per image: `<name>.img.png`, `<name>.gt.png`, `<name>.brush.png`,
    and optionally `<name>.tight.png` (regenerated from gt when absent).
    """
    if not os.path.isdir(root):
        raise DatasetError(f"dataset root is not a directory: {root}")
    names = sorted(f[:-len(".img.png")] for f in os.listdir(root) if f.endswith(".img.png"))
    entries = []
    for name in names:
        base = os.path.join(root, name)
        img = load_image_png(base + ".img.png")
        gt = load_labelmap_png(base + ".gt.png")
        brush = load_trimap_png(base + ".brush.png")
        tight_path = base + ".tight.png"
        tight = load_trimap_png(tight_path) if os.path.exists(tight_path) else None
        for part, arr in (("gt", gt.labels), ("brush", brush.marks)):
            if arr.shape != img.data.shape[:2]:
                raise DatasetError(
                    f"{name}: {part} is {arr.shape}, image is {img.data.shape[:2]}")
        if tight is not None and tight.marks.shape != img.data.shape[:2]:
            raise DatasetError(f"{name}: tight trimap dimensions mismatch")

        scaled = downscale_max(img, max_w, max_h)
        if scaled.data.shape != img.data.shape:
            h, w = scaled.height, scaled.width
            gt = LabelMap(_downscale_mask(gt.labels * np.uint8(255), w, h) // 255)
            brush = Trimap(_downscale_mask_marks(brush.marks, w, h))
            tight = Trimap(_downscale_mask_marks(tight.marks, w, h)) if tight else None
            img = scaled
        if tight is None:
            tight = make_tight_trimap(gt, tight_band)
        entries.append(DatasetEntry(name=name, image=img, gt=gt, brush=brush, tight=tight))
    return entries


def _downscale_mask_marks(marks: np.ndarray, new_w: int, new_h: int) -> np.ndarray:
    return _downscale_mask(marks, new_w, new_h)


def save_dataset_entry(entry: DatasetEntry, root: str) -> None:
    """Write one entry back as the four per-image PNG files."""
    os.makedirs(root, exist_ok=True)
    base = os.path.join(root, entry.name)
    save_image_png(entry.image, base + ".img.png")
    save_labelmap_png(entry.gt, base + ".gt.png")
    save_trimap_png(entry.brush, base + ".brush.png")
    save_trimap_png(entry.tight, base + ".tight.png")
