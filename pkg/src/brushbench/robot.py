"""Simulated-user policies: map (image, ground truth, current result) to strokes."""

from __future__ import annotations

import json
import time
from dataclasses import dataclass, field

import numpy as np

from .data import (LabelMap, RgbImage, BrushStroke,
                   connected_components, distance_transform, distance_to_zero)
from .errors import UnsupportedPolicyError
from .segmenters import SegmenterSession, GcsSession

POLICY_KINDS = ("random", "center", "sensit", "roi", "hamming")
_NEEDS_GCS = ("sensit", "roi", "hamming")


@dataclass(frozen=True)
class RobotPolicy:
    """Stroke-selection policy plus its knobs.

    kind: one of random | center | sensit | roi | hamming
    stride: candidate-grid spacing for roi/hamming (1 = exhaustive)
    sensit_mode: "gap" picks the smallest |MM0 - MM1|; "value" the lowest
        achievable flip energy (these order pixels identically, both kept
        so the reading can be switched explicitly)
    """

    kind: str
    rng_seed: int = 0
    stride: int = 2
    max_radius: int = 4
    sensit_mode: str = "gap"

    def __post_init__(self):
        if self.kind not in POLICY_KINDS:
            raise ValueError(f"unknown policy {self.kind!r}")
        if self.stride < 1:
            raise ValueError("stride must be >= 1")
        if self.sensit_mode not in ("gap", "value"):
            raise ValueError("sensit_mode must be 'gap' or 'value'")


def fit_brush(center: tuple[int, int], gt: LabelMap, max_radius: int = 4) -> BrushStroke:
    """Largest non-straddling brush at `center`, labeled by the ground truth.

    radius = min(max_radius, floor(distance to nearest opposite-label pixel) - 1),
    floored at 1; degrades to the single pixel (radius 0) when even radius 1
    would cover an opposite-label pixel.
    """
    r, c = center
    if not (0 <= r < gt.height and 0 <= c < gt.width):
        raise ValueError(f"center {center} outside image")
    label = int(gt.labels[r, c])
    dist = distance_to_zero(gt.labels == label)[r, c]
    if dist <= 1.0:
        radius = 0
    elif np.isinf(dist):
        radius = max_radius
    else:
        radius = max(1, min(max_radius, int(np.floor(dist)) - 1))
    return BrushStroke(label=label, center=(r, c), radius=radius)


def _center_of_largest_error(err: np.ndarray) -> tuple[int, int]:
    comp = connected_components(err, connectivity=8)[0]
    dt = distance_transform(comp.mask)
    dt = np.where(comp.mask, dt, -1.0)
    flat = int(np.argmax(dt))  # first maximum in row-major order
    return flat // err.shape[1], flat % err.shape[1]


def _candidate_centers(err: np.ndarray, stride: int) -> np.ndarray:
    grid = np.zeros_like(err)
    grid[::stride, ::stride] = True
    cand = err & grid
    if not cand.any():
        cand = err  # stride grid missed every error pixel
    return np.argwhere(cand)  # row-major order


def _simulate(session: SegmenterSession, stroke: BrushStroke) -> LabelMap:
    sim = session.clone()
    sim.add_stroke(stroke)
    return sim.segment()


def next_stroke(policy: RobotPolicy, img: RgbImage, gt: LabelMap, seg: LabelMap,
                session: SegmenterSession | None = None,
                rng: np.random.Generator | None = None) -> BrushStroke | None:
    """Choose the next brush stroke, or None once seg equals gt."""
    if seg.labels.shape != gt.labels.shape:
        raise ValueError("segmentation and ground truth dimensions differ")
    err = seg.labels != gt.labels
    if not err.any():
        return None
    if policy.kind in _NEEDS_GCS and not isinstance(session, GcsSession):
        raise UnsupportedPolicyError(
            f"policy {policy.kind!r} needs a GCS session (recyclable solves)")

    if policy.kind == "random":
        if rng is None:
            rng = np.random.default_rng(policy.rng_seed)
        flat = np.flatnonzero(err.ravel())
        pick = int(flat[rng.integers(len(flat))])
        center = (pick // err.shape[1], pick % err.shape[1])
        return fit_brush(center, gt, policy.max_radius)

    if policy.kind == "center":
        return fit_brush(_center_of_largest_error(err), gt, policy.max_radius)

    if policy.kind == "sensit":
        mm = session.min_marginals()
        score = np.abs(mm[:, :, 0] - mm[:, :, 1]) if policy.sensit_mode == "gap" \
            else np.maximum(mm[:, :, 0], mm[:, :, 1])
        score = np.where(err, score, np.inf)
        flat = int(np.argmin(score))  # first minimum in row-major order
        center = (flat // err.shape[1], flat % err.shape[1])
        return fit_brush(center, gt, policy.max_radius)

    # roi / hamming: simulate a stroke at every candidate center
    best_stroke = None
    best_score = None
    for r, c in _candidate_centers(err, policy.stride):
        stroke = fit_brush((int(r), int(c)), gt, policy.max_radius)
        seg2 = _simulate(session, stroke)
        if policy.kind == "roi":
            score = -int((seg2.labels != seg.labels).sum())  # most flips
        else:
            score = int((seg2.labels != gt.labels).sum())  # least error
        if best_score is None or score < best_score:
            best_score = score
            best_stroke = stroke
    return best_stroke


@dataclass(frozen=True)
class StrokeRecord:
    index: int
    center: tuple[int, int]
    radius: int
    label: int
    er_b: float
    elapsed_ms: float

    def to_json_dict(self) -> dict:
        return {"index": self.index, "center": list(self.center),
                "radius": self.radius, "label": self.label,
                "er_b": self.er_b, "elapsed_ms": self.elapsed_ms}


@dataclass
class InteractionTrace:
    """Per-brush stroke records plus the error curve er_0..er_B (padded)."""

    strokes: list[StrokeRecord] = field(default_factory=list)
    errors: list[float] = field(default_factory=list)

    def to_jsonl(self) -> str:
        return "\n".join(json.dumps(s.to_json_dict())
                         for s in self.strokes) + ("\n" if self.strokes else "")


def run_robot(session: SegmenterSession, policy: RobotPolicy, gt: LabelMap,
              budget: int) -> InteractionTrace:
    """Drive the session with the policy for up to `budget` strokes.

    The error curve always has budget + 1 entries (er_0 is pre-stroke); early
    termination on a perfect segmentation pads with the last value.
    """
    from .evaluation import hamming_error  # local import breaks the module cycle

    rng = np.random.default_rng(policy.rng_seed)
    trace = InteractionTrace()
    seg = session.segment()
    trace.errors.append(hamming_error(seg, gt))
    for b in range(1, budget + 1):
        t0 = time.perf_counter()
        stroke = next_stroke(policy, session.img, gt, seg, session, rng)
        if stroke is None:
            break
        session.add_stroke(stroke)
        seg = session.segment()
        er = hamming_error(seg, gt)
        trace.errors.append(er)
        trace.strokes.append(StrokeRecord(
            index=b, center=stroke.center, radius=stroke.radius,
            label=stroke.label, er_b=er,
            elapsed_ms=(time.perf_counter() - t0) * 1000.0))
    while len(trace.errors) < budget + 1:
        trace.errors.append(trace.errors[-1])
    return trace
