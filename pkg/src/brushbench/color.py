"""Gaussian-mixture color models: fitting, per-pixel unary costs, likelihood ratios."""

from __future__ import annotations

from dataclasses import dataclass
from typing import NamedTuple

import numpy as np
from .data import RgbImage, LabelMap, Trimap
from .errors import MissingSeedsError, ModelFitError

# Shared "effectively infinite" cost: large enough to dominate any achievable
# cut, small enough that sums of a few of them stay well inside float64 range.
CLAMP_COST = 1e8

_COV_REG = 1e-6  # added to covariance diagonals
_DENSITY_FLOOR = 1e-300


@dataclass(frozen=True)
class Gmm:
    """Mixture of full-covariance 3-D Gaussians."""

    weights: np.ndarray  # (k,)
    means: np.ndarray    # (k, 3)
    covs: np.ndarray     # (k, 3, 3)

    def __post_init__(self):
        w = np.asarray(self.weights, dtype=np.float64)
        if w.ndim != 1 or len(w) < 1:
            raise ValueError("weights must be a non-empty vector")
        if (w < 0).any() or abs(w.sum() - 1.0) > 1e-9:
            raise ValueError("weights must be >= 0 and sum to 1")
        for cov in np.asarray(self.covs):
            if np.linalg.eigvalsh(cov).min() < _COV_REG * 0.5:
                raise ValueError("covariance not positive definite after regularization")

    @property
    def k(self) -> int:
        return len(self.weights)

    def log_density(self, x: np.ndarray) -> np.ndarray:
        """Log mixture density at each row of x, shape (n, 3) -> (n,)."""
        x = np.atleast_2d(np.asarray(x, dtype=np.float64))
        return _logsumexp_rows(_component_logpdfs(x, self.weights, self.means,
                                                  self.covs))

    def density(self, x: np.ndarray) -> np.ndarray:
        return np.exp(self.log_density(x))

    def to_json_dict(self) -> dict:
        return {
            "weights": self.weights.tolist(),
            "means": self.means.tolist(),
            "covariances": [c.ravel().tolist() for c in self.covs],
        }

    @staticmethod
    def from_json_dict(d: dict) -> "Gmm":
        covs = np.array([np.array(c, dtype=np.float64).reshape(3, 3)
                         for c in d["covariances"]])
        return Gmm(np.array(d["weights"], float), np.array(d["means"], float), covs)


_LOG_2PI = np.log(2.0 * np.pi)


def _gaussian_logpdf(x: np.ndarray, mean: np.ndarray, cov: np.ndarray) -> np.ndarray:
    chol = np.linalg.cholesky(cov)
    sol = (x - mean[None, :]) @ np.linalg.inv(chol).T
    maha = np.einsum("ni,ni->n", sol, sol)
    logdet = 2.0 * np.sum(np.log(np.diag(chol)))
    return -0.5 * (maha + logdet + 3.0 * _LOG_2PI)


def _component_logpdfs(x: np.ndarray, weights, means, covs) -> np.ndarray:
    """log(w_j) + log N(x | mu_j, Sigma_j) as an (n, k) matrix."""
    out = np.empty((len(x), len(weights)))
    for j in range(len(weights)):
        out[:, j] = _gaussian_logpdf(x, means[j], covs[j])
    with np.errstate(divide="ignore"):
        out += np.log(weights)[None, :]
    return out


def _logsumexp_rows(a: np.ndarray) -> np.ndarray:
    m = a.max(axis=1)
    return m + np.log(np.exp(a - m[:, None]).sum(axis=1))


def _kmeanspp_init(pixels: np.ndarray, k: int, rng: np.random.Generator) -> np.ndarray:
    """Standard k-means++ seeding: first center uniform, rest D^2-weighted."""
    n = len(pixels)
    centers = np.empty((k, 3))
    centers[0] = pixels[rng.integers(n)]
    d2 = np.sum((pixels - centers[0]) ** 2, axis=1)
    for j in range(1, k):
        total = d2.sum()
        if total <= 0.0:
            centers[j] = pixels[rng.integers(n)]
        else:
            centers[j] = pixels[rng.choice(n, p=d2 / total)]
        d2 = np.minimum(d2, np.sum((pixels - centers[j]) ** 2, axis=1))
    return centers


def _mstep(pixels: np.ndarray, resp: np.ndarray):
    nk = resp.sum(axis=0)
    weights = nk / len(pixels)
    means = (resp.T @ pixels) / nk[:, None]
    covs = np.empty((resp.shape[1], 3, 3))
    for j in range(resp.shape[1]):
        diff = pixels - means[j]
        covs[j] = (resp[:, j, None] * diff).T @ diff / nk[j]
        covs[j] += _COV_REG * np.eye(3)
    return weights, means, covs


def fit_gmm(pixels: np.ndarray, k: int, seed: int,
            return_ll_history: bool = False):
    """Fit a k-component GMM by seeded k-means++ init followed by EM.

    EM stops when the mean log-likelihood gain drops below 1e-6 or after 100
    iterations. Components that collapse to zero responsibility are re-seeded
    to a random data point once; a second collapse drops them with weight
    renormalization. Deterministic given (pixels, k, seed).
    """
    pixels = np.atleast_2d(np.asarray(pixels, dtype=np.float64))
    if len(pixels) == 0:
        raise ModelFitError("cannot fit a color model on an empty pixel set")
    if k < 1:
        raise ValueError("component count must be >= 1")
    rng = np.random.default_rng(seed)

    means = _kmeanspp_init(pixels, k, rng)
    # hard assignment to nearest center for the initial M-step
    d2 = ((pixels[:, None, :] - means[None, :, :]) ** 2).sum(axis=2)
    resp = np.zeros((len(pixels), k))
    resp[np.arange(len(pixels)), np.argmin(d2, axis=1)] = 1.0
    resp = np.maximum(resp, 1e-12)
    weights, means, covs = _mstep(pixels, resp / resp.sum(axis=1, keepdims=True))

    reseeded = np.zeros(k, dtype=bool)
    history = []
    prev_ll = -np.inf
    for _ in range(100):
        # E-step
        logp = _component_logpdfs(pixels, weights, means, covs)
        norm = _logsumexp_rows(logp)
        ll = float(norm.mean())
        history.append(ll)
        resp = np.exp(logp - norm[:, None])

        # empty-component handling: re-seed once, then drop
        nk = resp.sum(axis=0)
        empty = nk < 1e-10
        if empty.any():
            keep = np.ones(len(weights), dtype=bool)
            for j in np.flatnonzero(empty):
                if reseeded[j] or len(pixels) <= 1:
                    keep[j] = False
                else:
                    means[j] = pixels[rng.integers(len(pixels))]
                    covs[j] = np.cov(pixels.T) + _COV_REG * np.eye(3) \
                        if len(pixels) > 1 else _COV_REG * np.eye(3)
                    reseeded[j] = True
            if not keep.all():
                weights, means, covs = weights[keep], means[keep], covs[keep]
                weights = weights / weights.sum()
                reseeded = reseeded[keep]
            prev_ll = -np.inf  # mixture changed; restart convergence check
            continue

        if ll - prev_ll < 1e-6:
            break
        prev_ll = ll
        weights, means, covs = _mstep(pixels, resp)

    gmm = Gmm(weights / weights.sum(), means, covs)
    return (gmm, history) if return_ll_history else gmm


# ---------------------------------------------------------------------------
# Unary fields
# ---------------------------------------------------------------------------
# A UnaryField is a plain (H, W, 2) float64 array: [..., 0] = cost of bg,
# [..., 1] = cost of fg.

def nll_field(img: RgbImage, fg: Gmm, bg: Gmm) -> np.ndarray:
    """Raw negative-log-likelihood costs, clamped to <= CLAMP_COST, no seed clamps."""
    flat = img.data.reshape(-1, 3)
    costs = np.empty((img.height * img.width, 2))
    costs[:, 0] = -bg.log_density(flat)
    costs[:, 1] = -fg.log_density(flat)
    np.minimum(costs, CLAMP_COST, out=costs)
    return costs.reshape(img.height, img.width, 2)


def apply_seed_clamps(unary: np.ndarray, tri: Trimap) -> np.ndarray:
    """Copy of the field with seed pixels clamped to their marked label."""
    out = unary.copy()
    fg = tri.fg_mask
    bg = tri.bg_mask
    out[fg, 0] = CLAMP_COST
    out[fg, 1] = 0.0
    out[bg, 0] = 0.0
    out[bg, 1] = CLAMP_COST
    return out


def check_unary_field(unary: np.ndarray, img: RgbImage) -> None:
    if unary.shape != (img.height, img.width, 2):
        raise ValueError("unary field dimensions do not match image")
    if np.isnan(unary).any():
        raise ValueError("unary field contains NaN")


def _seed_pixels(img: RgbImage, tri: Trimap):
    fg_px = img.data[tri.fg_mask]
    bg_px = img.data[tri.bg_mask]
    if len(fg_px) == 0 or len(bg_px) == 0:
        raise MissingSeedsError(
            "need at least one foreground and one background seed; add strokes")
    return fg_px, bg_px


def unaries_from_trimap(img: RgbImage, tri: Trimap, k: int = 5,
                        seed: int = 0) -> tuple[np.ndarray, Gmm, Gmm]:
    """Fit fg/bg GMMs on the trimap seeds and build the clamped unary field."""
    fg_px, bg_px = _seed_pixels(img, tri)
    fg = fit_gmm(fg_px, k, seed)
    bg = fit_gmm(bg_px, k, seed + 1)
    unary = apply_seed_clamps(nll_field(img, fg, bg), tri)
    return unary, fg, bg


class RefitResult(NamedTuple):
    unary: np.ndarray
    fg: Gmm
    bg: Gmm
    used_trimap_fallback: bool


def refit_from_segmentation(img: RgbImage, seg: LabelMap, tri: Trimap,
                            k: int = 5, seed: int = 0) -> RefitResult:
    """Re-estimate the color models from a whole segmentation.

    Single-label segmentations cannot support two models; those fall back to
    the trimap-seed fit and set the fallback flag.
    """
    fg_sel = seg.labels == 1
    if not fg_sel.any() or fg_sel.all():
        unary, fg, bg = unaries_from_trimap(img, tri, k, seed)
        return RefitResult(unary, fg, bg, True)
    fg = fit_gmm(img.data[fg_sel], k, seed)
    bg = fit_gmm(img.data[~fg_sel], k, seed + 1)
    unary = apply_seed_clamps(nll_field(img, fg, bg), tri)
    return RefitResult(unary, fg, bg, False)


def likelihood_ratio_field(img: RgbImage, fg: Gmm, bg: Gmm) -> np.ndarray:
    """Normalized foreground probability per pixel, in [0, 1]."""
    flat = img.data.reshape(-1, 3)
    pf = np.maximum(fg.density(flat), _DENSITY_FLOOR)
    pb = np.maximum(bg.density(flat), _DENSITY_FLOOR)
    return (pf / (pf + pb)).reshape(img.height, img.width)
