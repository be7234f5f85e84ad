"""The four interactive segmentation systems behind one session interface.

GCS: unaries frozen from the initial strokes, only stroke clamps change.
GC:  iterated color-model re-estimation, a fixed number of cut/refit rounds.
GCA: GC plus removal of foreground islands that contain no fg seed.
GEO: geodesic nearest-seed labeling on the likelihood-ratio field.
"""

from __future__ import annotations

import copy
from dataclasses import dataclass

import numpy as np
from scipy.sparse import coo_matrix
from scipy.sparse.csgraph import dijkstra

from . import color
from .color import CLAMP_COST
from .data import RgbImage, LabelMap, Trimap, BrushStroke, connected_components
from .energy import Params, GridEnergy, pairwise_edges, compute_beta, minimize
from .errors import MissingSeedsError
from .maxflow import DIR_OFFSETS, DIR_DISTS, FlowSolver

SYSTEMS = ("GCS", "GC", "GCA", "GEO")


@dataclass(frozen=True)
class SegmenterConfig:
    system: str
    params: Params
    gmm_k: int = 5
    gmm_seed: int = 0
    gc_iterations: int = 4
    geo_eps: float = 1e-4
    unary_weight: float = 1.0  # scales GMM costs; learned by max-margin, else 1
    recycle: bool = True       # GCS flow recycling across strokes

    def __post_init__(self):
        if self.system not in SYSTEMS:
            raise ValueError(f"unknown system {self.system!r}, expected one of {SYSTEMS}")
        if self.gc_iterations < 1:
            raise ValueError("gc_iterations must be >= 1")
        if self.gmm_k < 1:
            raise ValueError("gmm_k must be >= 1")

    def to_json_dict(self) -> dict:
        return {
            "system": self.system,
            "params": {"w_c": self.params.w_c, "w_i": self.params.w_i,
                       "w_beta": self.params.w_beta},
            "gmm_k": self.gmm_k,
            "gmm_seed": self.gmm_seed,
            "gc_iterations": self.gc_iterations,
            "geo_eps": self.geo_eps,
            "unary_weight": self.unary_weight,
        }

    @staticmethod
    def from_json_dict(d: dict) -> "SegmenterConfig":
        p = d.get("params", {})
        return SegmenterConfig(
            system=d["system"],
            params=Params(w_c=float(p.get("w_c", 0.25)), w_i=float(p.get("w_i", 5.0)),
                          w_beta=float(p.get("w_beta", 1.0))),
            gmm_k=int(d.get("gmm_k", 5)),
            gmm_seed=int(d.get("gmm_seed", 0)),
            gc_iterations=int(d.get("gc_iterations", 4)),
            geo_eps=float(d.get("geo_eps", 1e-4)),
            unary_weight=float(d.get("unary_weight", 1.0)),
        )


def _pin_seeds(labels: np.ndarray, tri: Trimap) -> np.ndarray:
    out = labels.copy()
    out[tri.fg_mask] = 1
    out[tri.bg_mask] = 0
    return out


class SegmenterSession:
    """Single-owner mutable session; all shared inputs are immutable."""

    def __init__(self, img: RgbImage, initial: Trimap, config: SegmenterConfig):
        if img.data.shape[:2] != initial.marks.shape:
            raise ValueError("trimap dimensions do not match image")
        if not initial.has_both_seeds():
            raise MissingSeedsError("initial trimap needs fg and bg seeds")
        self.img = img
        self.config = config
        self.trimap = initial
        self._seg: LabelMap | None = None

    def add_stroke(self, stroke: BrushStroke) -> "SegmenterSession":
        self.trimap = self.trimap.with_stroke(stroke)
        self._seg = None
        return self

    def segment(self) -> LabelMap:
        if self._seg is None:
            self._seg = self._compute()
        return self._seg

    def _compute(self) -> LabelMap:
        raise NotImplementedError

    def clone(self) -> "SegmenterSession":
        return copy.copy(self)


class GcsSession(SegmenterSession):
    """Frozen unaries from the initial trimap; strokes only move clamps."""

    def __init__(self, img, initial, config, unary_field: np.ndarray | None = None):
        super().__init__(img, initial, config)
        if unary_field is None:
            fg_px = img.data[initial.fg_mask]
            bg_px = img.data[initial.bg_mask]
            self.fg_gmm = color.fit_gmm(fg_px, config.gmm_k, config.gmm_seed)
            self.bg_gmm = color.fit_gmm(bg_px, config.gmm_k, config.gmm_seed + 1)
            unary_field = color.nll_field(img, self.fg_gmm, self.bg_gmm)
        else:
            self.fg_gmm = self.bg_gmm = None
        self.frozen_unary = unary_field * config.unary_weight
        self.beta = compute_beta(img, config.params.w_beta)
        self.edges = pairwise_edges(img, config.params, self.beta)
        self._solver: FlowSolver | None = None
        self._applied_theta: np.ndarray | None = None

    def current_energy(self) -> GridEnergy:
        """Frozen unaries with the current stroke clamps applied."""
        theta = color.apply_seed_clamps(self.frozen_unary, self.trimap)
        return GridEnergy(theta, self.edges, self.beta)

    def _compute(self) -> LabelMap:
        theta = color.apply_seed_clamps(self.frozen_unary, self.trimap)
        flat = theta.reshape(-1, 2)
        if self._solver is None or not self.config.recycle:
            self._solver = FlowSolver(self.img.height, self.img.width)
            self._solver.set_energy(flat, self.edges)
        else:
            changed = np.flatnonzero((flat != self._applied_theta).any(axis=1))
            if len(changed):
                self._solver.update_tlinks(changed, flat[changed])
        self._applied_theta = flat
        labels = self._solver.solve()
        return LabelMap(_pin_seeds(labels, self.trimap))

    def min_marginals(self) -> np.ndarray:
        """(H, W, 2) min-marginals of the current energy, recycling the flow."""
        seg = self.segment()
        solver = self._solver
        best = solver.energy_of(seg.labels)
        flips = solver.min_marginal_flips(seg.labels, CLAMP_COST)
        mm = np.empty((self.img.height, self.img.width, 2))
        lab = seg.labels.astype(np.int64)
        np.put_along_axis(mm, lab[:, :, None], best, axis=2)
        np.put_along_axis(mm, (1 - lab)[:, :, None], flips[:, :, None], axis=2)
        return mm

    def clone(self) -> "GcsSession":
        other = copy.copy(self)
        if self._solver is not None:
            other._solver = self._solver.clone()
        return other


class GcSession(SegmenterSession):
    """Iterated GrabCut rounds; optional fg-island removal (GCA)."""

    def __init__(self, img, initial, config):
        super().__init__(img, initial, config)
        self.remove_islands = config.system == "GCA"
        self.beta = compute_beta(img, config.params.w_beta)
        self.edges = pairwise_edges(img, config.params, self.beta)
        self.fg_gmm = self.bg_gmm = None

    def _compute(self) -> LabelMap:
        cfg = self.config
        if not self.trimap.has_both_seeds():
            raise MissingSeedsError("color re-estimation needs fg and bg seeds")
        unary, fg, bg = color.unaries_from_trimap(
            self.img, self.trimap, cfg.gmm_k, cfg.gmm_seed)
        seg = None
        for _ in range(cfg.gc_iterations):
            if seg is not None:
                unary, fg, bg, _ = color.refit_from_segmentation(
                    self.img, seg, self.trimap, cfg.gmm_k, cfg.gmm_seed)
            e = GridEnergy(unary * cfg.unary_weight if cfg.unary_weight != 1.0
                           else unary, self.edges, self.beta)
            seg, _ = minimize(e)
        self.fg_gmm, self.bg_gmm = fg, bg
        labels = _pin_seeds(seg.labels, self.trimap)
        if self.remove_islands:
            labels = self._drop_deserted_islands(labels)
        return LabelMap(labels)

    def _drop_deserted_islands(self, labels: np.ndarray) -> np.ndarray:
        fg_seeds = self.trimap.fg_mask
        out = labels.copy()
        for comp in connected_components(labels == 1, connectivity=4):
            if not (comp.mask & fg_seeds).any():
                out[comp.mask] = 0
        return out


def geodesic_distances(field: np.ndarray, sources: np.ndarray,
                       eps: float = 1e-4) -> np.ndarray:
    """Multi-source geodesic distance over the 8-connected grid.

    Step cost between neighbors p, q is |field(p) - field(q)| + eps * dist(p, q);
    the eps term breaks zero-cost plateaus toward geometrically short paths.
    """
    h, w = field.shape
    n = h * w
    rows, cols, vals = [], [], []
    for (dr, dc), dist in zip(DIR_OFFSETS, DIR_DISTS):
        rs = slice(max(0, -dr), h - max(0, dr))
        cs = slice(max(0, -dc), w - max(0, dc))
        a = field[rs, cs]
        b = field[max(0, dr):h + min(0, dr), max(0, dc):w + min(0, dc)]
        cost = np.abs(a - b) + eps * dist
        rr, cc = np.mgrid[rs, cs]
        p = (rr * w + cc).ravel()
        q = ((rr + dr) * w + (cc + dc)).ravel()
        rows.append(p)
        cols.append(q)
        vals.append(cost.ravel())
    rows = np.concatenate(rows)
    cols = np.concatenate(cols)
    vals = np.concatenate(vals)
    graph = coo_matrix((np.concatenate([vals, vals]),
                        (np.concatenate([rows, cols]), np.concatenate([cols, rows]))),
                       shape=(n, n)).tocsr()
    src = np.flatnonzero(np.asarray(sources, dtype=bool).ravel())
    if len(src) == 0:
        return np.full((h, w), np.inf)
    d = dijkstra(graph, directed=False, indices=src, min_only=True)
    return d.reshape(h, w)


class GeoSession(SegmenterSession):
    """Geodesic nearest-seed labeling; models refit from the trimap each stroke."""

    def __init__(self, img, initial, config):
        super().__init__(img, initial, config)
        self.fg_gmm = self.bg_gmm = None
        self.field: np.ndarray | None = None

    def _compute(self) -> LabelMap:
        cfg = self.config
        if not self.trimap.has_both_seeds():
            raise MissingSeedsError("geodesic labeling needs fg and bg seeds")
        fg_px = self.img.data[self.trimap.fg_mask]
        bg_px = self.img.data[self.trimap.bg_mask]
        self.fg_gmm = color.fit_gmm(fg_px, cfg.gmm_k, cfg.gmm_seed)
        self.bg_gmm = color.fit_gmm(bg_px, cfg.gmm_k, cfg.gmm_seed + 1)
        self.field = color.likelihood_ratio_field(self.img, self.fg_gmm, self.bg_gmm)
        d_fg = geodesic_distances(self.field, self.trimap.fg_mask, cfg.geo_eps)
        d_bg = geodesic_distances(self.field, self.trimap.bg_mask, cfg.geo_eps)
        labels = (d_fg < d_bg).astype(np.uint8)  # ties go to background
        return LabelMap(_pin_seeds(labels, self.trimap))


def start_session(img: RgbImage, initial: Trimap,
                  config: SegmenterConfig) -> SegmenterSession:
    """Create a session of the configured system from the initial trimap."""
    if config.system == "GCS":
        return GcsSession(img, initial, config)
    if config.system in ("GC", "GCA"):
        return GcSession(img, initial, config)
    if config.system == "GEO":
        return GeoSession(img, initial, config)
    raise ValueError(f"unknown system {config.system!r}")
