import numpy as np
import pytest

from brushbench.color import (
    CLAMP_COST, Gmm, fit_gmm, likelihood_ratio_field,
    refit_from_segmentation, unaries_from_trimap,
)
from brushbench.data import RgbImage, LabelMap, Trimap, BrushStroke
from brushbench.errors import MissingSeedsError, ModelFitError


def _two_cluster_pixels(rng, n=400, c1=(0.9, 0.1, 0.1), c2=(0.1, 0.2, 0.9), s=0.02):
    a = np.clip(rng.normal(c1, s, (n, 3)), 0, 1)
    b = np.clip(rng.normal(c2, s, (n, 3)), 0, 1)
    return np.vstack([a, b]), np.array(c1), np.array(c2)


class TestFitGmm:
    def test_degenerate_single_color(self):
        px = np.full((50, 3), 0.3)
        gmm = fit_gmm(px, 1, seed=0)
        assert np.allclose(gmm.means[0], 0.3)
        assert np.allclose(gmm.covs[0], 1e-6 * np.eye(3))

    def test_two_separated_clusters(self, rng):
        px, c1, c2 = _two_cluster_pixels(rng)
        gmm = fit_gmm(px, 2, seed=3)
        got = sorted(map(tuple, gmm.means))
        want = sorted([tuple(px[:400].mean(axis=0)), tuple(px[400:].mean(axis=0))])
        assert np.allclose(got, want, atol=1e-3)
        assert np.allclose(gmm.weights, [0.5, 0.5], atol=0.02)

    def test_bit_identical_given_seed(self, rng):
        px, _, _ = _two_cluster_pixels(rng, n=120)
        a = fit_gmm(px, 3, seed=7)
        b = fit_gmm(px, 3, seed=7)
        assert np.array_equal(a.weights, b.weights)
        assert np.array_equal(a.means, b.means)
        assert np.array_equal(a.covs, b.covs)

    def test_empty_pixels_raise(self):
        with pytest.raises(ModelFitError):
            fit_gmm(np.empty((0, 3)), 2, seed=0)

    def test_em_loglik_monotone(self, rng):
        px, _, _ = _two_cluster_pixels(rng, n=200, s=0.08)
        _, history = fit_gmm(px, 3, seed=1, return_ll_history=True)
        diffs = np.diff(history)
        assert (diffs >= -1e-9).all()

    def test_excess_components_are_dropped(self):
        px = np.full((5, 3), 0.5)
        gmm = fit_gmm(px, 4, seed=0)
        assert abs(gmm.weights.sum() - 1.0) < 1e-9
        assert gmm.k >= 1

    def test_density_integrates_to_one(self):
        gmm = Gmm(np.array([1.0]), np.array([[0.5, 0.5, 0.5]]),
                  np.array([0.01 * np.eye(3)]))
        grid = np.linspace(0.5 - 0.5, 0.5 + 0.5, 41)
        step = grid[1] - grid[0]
        pts = np.stack(np.meshgrid(grid, grid, grid, indexing="ij"), -1).reshape(-1, 3)
        integral = gmm.density(pts).sum() * step ** 3
        assert abs(integral - 1.0) < 0.05

    def test_json_roundtrip(self, rng):
        px, _, _ = _two_cluster_pixels(rng, n=80)
        gmm = fit_gmm(px, 2, seed=0)
        back = Gmm.from_json_dict(gmm.to_json_dict())
        assert np.allclose(back.means, gmm.means)
        assert np.allclose(back.covs, gmm.covs)


def _seeded_image(rng, h=10, w=12):
    """Image with red fg corner and blue bg corner seeds."""
    data = rng.uniform(0.3, 0.7, (h, w, 3))
    data[:3, :3] = [0.9, 0.1, 0.1]
    data[-3:, -3:] = [0.1, 0.2, 0.9]
    img = RgbImage(np.clip(data, 0, 1))
    tri = Trimap.empty(h, w)
    tri = tri.with_stroke(BrushStroke(1, (1, 1), 1))
    tri = tri.with_stroke(BrushStroke(0, (h - 2, w - 2), 1))
    return img, tri


class TestUnaries:
    def test_seed_pixels_are_clamped(self, rng):
        img, tri = _seeded_image(rng)
        unary, fg, bg = unaries_from_trimap(img, tri, k=2, seed=0)
        assert (unary[tri.fg_mask, 0] == CLAMP_COST).all()
        assert (unary[tri.fg_mask, 1] == 0).all()
        assert (unary[tri.bg_mask, 1] == CLAMP_COST).all()
        assert (unary[tri.bg_mask, 0] == 0).all()

    def test_fg_colored_pixel_prefers_fg(self, rng):
        img, tri = _seeded_image(rng)
        unary, fg, bg = unaries_from_trimap(img, tri, k=1, seed=0)
        # pixel colored like the fg seed but not itself a seed
        probe = np.array([[0.9, 0.1, 0.1]])
        assert -fg.log_density(probe)[0] < -bg.log_density(probe)[0]

    def test_missing_seeds_raise(self, rng):
        img, _ = _seeded_image(rng)
        with pytest.raises(MissingSeedsError):
            unaries_from_trimap(img, Trimap.empty(10, 12), k=1, seed=0)

    def test_uniform_image_symmetric_costs(self):
        img = RgbImage(np.full((6, 6, 3), 0.5))
        tri = Trimap.empty(6, 6)
        tri = tri.with_stroke(BrushStroke(1, (1, 1), 0))
        tri = tri.with_stroke(BrushStroke(0, (4, 4), 0))
        unary, _, _ = unaries_from_trimap(img, tri, k=1, seed=0)
        free = ~(tri.fg_mask | tri.bg_mask)
        assert np.abs(unary[free, 0] - unary[free, 1]).max() < 1e-9

    def test_costs_finite_and_seed_argmin_is_seed_label(self, rng):
        img, tri = _seeded_image(rng)
        unary, _, _ = unaries_from_trimap(img, tri, k=2, seed=0)
        assert np.isfinite(unary).all()
        assert (np.argmin(unary[tri.fg_mask], axis=1) == 1).all()
        assert (np.argmin(unary[tri.bg_mask], axis=1) == 0).all()


class TestRefit:
    def test_refit_equals_trimap_fit_on_seed_segmentation(self, rng):
        img, tri = _seeded_image(rng)
        seg = LabelMap(tri.fg_mask.astype(np.uint8))  # fg seeds only
        res = refit_from_segmentation(img, seg, tri, k=1, seed=0)
        assert not res.used_trimap_fallback
        # fg model fit on exactly the fg-seed pixels matches the trimap fit
        _, fg_tri, _ = unaries_from_trimap(img, tri, k=1, seed=0)
        assert np.allclose(res.fg.means, fg_tri.means)

    def test_two_color_image_recovers_means(self):
        data = np.zeros((8, 8, 3))
        data[:, :4] = [0.8, 0.1, 0.1]  # fg red
        data[:, 4:] = [0.1, 0.1, 0.8]  # bg blue
        img = RgbImage(data)
        gt = LabelMap((np.arange(8)[None, :] < 4).astype(np.uint8) * np.ones((8, 1), np.uint8))
        tri = Trimap.empty(8, 8)
        tri = tri.with_stroke(BrushStroke(1, (4, 1), 1))
        tri = tri.with_stroke(BrushStroke(0, (4, 6), 1))
        res = refit_from_segmentation(img, gt, tri, k=1, seed=0)
        assert np.allclose(res.fg.means[0], [0.8, 0.1, 0.1], atol=1e-3)

    def test_single_label_falls_back(self, rng):
        img, tri = _seeded_image(rng)
        seg = LabelMap(np.ones((10, 12), np.uint8))
        res = refit_from_segmentation(img, seg, tri, k=1, seed=0)
        assert res.used_trimap_fallback


class TestLikelihoodRatio:
    def test_identical_models_give_half(self, rng):
        img, _ = _seeded_image(rng)
        gmm = fit_gmm(img.data.reshape(-1, 3), 2, seed=0)
        field = likelihood_ratio_field(img, gmm, gmm)
        assert np.allclose(field, 0.5)

    def test_pixel_at_fg_mean_is_confident(self):
        fg = Gmm(np.array([1.0]), np.array([[0.9, 0.1, 0.1]]),
                 np.array([1e-4 * np.eye(3)]))
        bg = Gmm(np.array([1.0]), np.array([[0.1, 0.1, 0.9]]),
                 np.array([1e-4 * np.eye(3)]))
        img = RgbImage(np.full((2, 2, 3), [0.9, 0.1, 0.1]))
        field = likelihood_ratio_field(img, fg, bg)
        assert (field > 0.99).all()

    def test_range_bounds(self, rng):
        img = RgbImage(rng.uniform(0, 1, (7, 7, 3)))
        fg = fit_gmm(rng.uniform(0, 1, (30, 3)), 2, seed=0)
        bg = fit_gmm(rng.uniform(0, 1, (30, 3)), 2, seed=1)
        field = likelihood_ratio_field(img, fg, bg)
        assert (field >= 0).all() and (field <= 1).all()
