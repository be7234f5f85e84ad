import numpy as np
import pytest

from brushbench.data import (LabelMap, RgbImage, Trimap, BrushStroke,
                             DatasetEntry, make_tight_trimap)
from brushbench.energy import evaluate_energy
from brushbench.maxmargin import (Constraint, ImageContext, build_context,
                                  crossval_dynamic, energy_for, find_violated,
                                  make_folds, psi, solve_qp, train_dynamic,
                                  train_static)

from conftest import random_energy
from oracles import enumerate_energies, qp_reference_active_set, qp_reference_dual_pg


def _tiny_entry(rng, h=3, w=3, name="t0"):
    img = RgbImage(rng.uniform(0, 1, (h, w, 3)))
    gt = LabelMap((rng.uniform(size=(h, w)) < 0.5).astype(np.uint8))
    tri = Trimap.empty(h, w)
    return DatasetEntry(name, img, gt, tri, tri)


def _tiny_context(rng, h=3, w=3, name="t0", entry=None):
    entry = entry or _tiny_entry(rng, h, w, name)
    e1 = random_energy(rng, h, w)
    e2 = random_energy(rng, h, w)
    return ImageContext(name, entry, rng.uniform(0, 10, (h, w, 2)),
                        e1.edges, e2.edges, beta=0.5)


def _separable_entry(name="sep0", h=6, w=8):
    """Colors split cleanly; gt is the unique minimizer for a unary-ish w."""
    data = np.zeros((h, w, 3))
    data[:, :w // 2] = [0.85, 0.5, 0.15]
    data[:, w // 2:] = [0.15, 0.3, 0.8]
    rng = np.random.default_rng(hash(name) % 2**31)
    data = np.clip(data + rng.normal(0, 0.02, data.shape), 0, 1)
    gt = np.zeros((h, w), np.uint8)
    gt[:, :w // 2] = 1
    tri = Trimap.empty(h, w)
    tri = tri.with_stroke(BrushStroke(1, (h // 2, 1), 1))
    tri = tri.with_stroke(BrushStroke(0, (h // 2, w - 2), 1))
    entry = DatasetEntry(name, RgbImage(data), LabelMap(gt), tri,
                         make_tight_trimap(LabelMap(gt), 1))
    return entry


class TestFeatures:
    def test_energy_equals_w_dot_psi(self, rng):
        ctx = _tiny_context(rng, 4, 4)
        for _ in range(100):
            w = rng.uniform(0, 3, 3)
            lab = (rng.uniform(size=(4, 4)) < 0.5).astype(np.uint8)
            e = energy_for(w, ctx)
            direct = evaluate_energy(e, lab)
            via_psi = float(w @ psi(ctx, lab))
            assert via_psi == pytest.approx(direct, rel=1e-6, abs=1e-9)

    def test_constraint_recomputable_from_labels(self, rng):
        ctx = _tiny_context(rng)
        gt = ctx.entry.gt
        lab = (rng.uniform(size=(3, 3)) < 0.5).astype(np.uint8)
        con = Constraint(lab, psi(ctx, lab) - psi(ctx, gt.labels),
                         float((lab != gt.labels).sum()))
        assert np.allclose(con.dpsi, psi(ctx, con.labels) - psi(ctx, gt.labels))
        assert con.loss == float((con.labels != gt.labels).sum())

    def test_build_context_shapes(self, rng):
        from brushbench.synthetic import make_two_blob
        entry = make_two_blob(0)
        ctx = build_context(entry, gmm_k=2)
        h, w = entry.image.height, entry.image.width
        assert ctx.unary.shape == (h, w, 2)
        assert ctx.ising_feat.shape == (4, h, w)
        assert (ctx.contrast_feat >= 0).all()


class TestSolveQp:
    def test_empty_working_set(self):
        sol = solve_qp({}, C=10.0, K=3, image_keys=["a", "b"])
        assert (sol.w == 0).all() and sol.objective == 0.0

    def test_single_constraint_analytic(self):
        # any C/K >= 1 makes the margin bind with zero slack: w* = (1, 0, 0)
        con = Constraint(np.zeros((1, 1), np.uint8), np.array([1.0, 0.0, 0.0]), 1.0)
        for c_over_k in (10.0, 1e4):
            sol = solve_qp({"a": [con]}, C=c_over_k, K=1)
            # idle components sit at interior-point mu scale, objective is exact
            assert sol.w == pytest.approx([1.0, 0.0, 0.0], abs=1e-4)
            assert sol.xi["a"] == pytest.approx(0.0, abs=1e-4)
            assert sol.objective == pytest.approx(0.5, abs=1e-6)

    def test_c_zero_gives_zero_w(self, rng):
        cons = [Constraint(np.zeros((1, 1), np.uint8), rng.normal(size=3), 2.0)]
        sol = solve_qp({"a": cons}, C=0.0, K=1)
        assert (sol.w == 0).all()

    def _random_working(self, rng, n_img=2, n_con=3):
        working = {}
        for k in range(n_img):
            working[f"i{k}"] = [
                Constraint(np.zeros((1, 1), np.uint8),
                           rng.normal(0, 2, 3), float(rng.uniform(0.5, 4)))
                for _ in range(int(rng.integers(1, n_con + 1)))]
        return working

    def test_matches_active_set_reference(self, rng):
        for _ in range(15):
            working = self._random_working(rng)
            C = float(rng.uniform(0.5, 20))
            sol = solve_qp(working, C, K=len(working))
            cons = [(k, c.dpsi, c.loss) for k, cs in working.items() for c in cs]
            ref_w, ref_obj = qp_reference_active_set(cons, C, len(working))
            assert sol.objective == pytest.approx(ref_obj, abs=1e-5)

    def test_matches_projected_gradient_reference(self, rng):
        for _ in range(5):
            working = self._random_working(rng, n_img=2, n_con=2)
            C = float(rng.uniform(0.5, 5))
            sol = solve_qp(working, C, K=len(working))
            cons = [(k, c.dpsi, c.loss) for k, cs in working.items() for c in cs]
            _, ref_obj = qp_reference_dual_pg(cons, C, len(working))
            assert sol.objective == pytest.approx(ref_obj, abs=1e-5)

    def test_solution_feasible_within_slacks(self, rng):
        working = self._random_working(rng, 3, 4)
        sol = solve_qp(working, C=5.0, K=3)
        for k, cs in working.items():
            for c in cs:
                assert float(sol.w @ c.dpsi) >= c.loss - sol.xi[k] - 1e-6
        assert (sol.w >= 0).all()


class TestFindViolated:
    def test_zero_w_no_clamps_returns_complement(self, rng):
        ctx = _tiny_context(rng)
        gt = ctx.entry.gt
        found = find_violated(np.zeros(3), ctx, None, xi_k=0.0)
        assert found is not None
        con, margin = found
        assert np.array_equal(con.labels, 1 - gt.labels)
        assert con.loss == gt.labels.size
        assert margin == pytest.approx(-gt.labels.size)

    def test_all_clamped_returns_none(self, rng):
        ctx = _tiny_context(rng)
        clamp = Trimap(ctx.entry.gt.labels.copy())
        assert find_violated(rng.uniform(0, 1, 3), ctx, clamp) is None

    def test_exhaustive_violation_detection(self, rng):
        for trial in range(20):
            ctx = _tiny_context(rng, name=f"x{trial}")
            gt = ctx.entry.gt.labels
            w = rng.uniform(0, 1.5, 3)
            xi_k = float(rng.uniform(0, 2))
            marks = np.full((3, 3), 2, np.uint8)
            sel = rng.uniform(size=(3, 3)) < 0.3
            marks[sel] = gt[sel]  # clamps always agree with ground truth
            clamps = Trimap(marks)

            e = energy_for(w, ctx)
            bits, energies = enumerate_energies(e.unary, e.edges)
            flat_gt = gt.reshape(-1)
            compat = np.ones(len(bits), bool)
            for p in range(9):
                if marks.reshape(-1)[p] != 2:
                    compat &= bits[:, p] == flat_gt[p]
            margins = []
            gt_idx = int(flat_gt @ (1 << np.arange(9, dtype=object)))
            for i in np.flatnonzero(compat):
                if i == gt_idx:
                    continue
                loss = float((bits[i] != flat_gt).sum())
                margins.append(energies[i] - energies[gt_idx] - loss)
            exists = min(margins) < -xi_k - 1e-4 if margins else False
            got = find_violated(w, ctx, clamps, xi_k=xi_k)
            assert (got is not None) == exists
            if got is not None:
                con, margin = got
                assert margin == pytest.approx(min(margins), abs=1e-6)

    def test_more_clamps_never_increase_violation(self, rng):
        ctx = _tiny_context(rng)
        gt = ctx.entry.gt.labels
        w = rng.uniform(0, 1, 3)

        def worst_margin(clamps):
            found = find_violated(w, ctx, clamps, xi_k=np.inf * 0 + 1e9, tol=-1e9)
            return found[1] if found else 0.0

        marks = np.full((3, 3), 2, np.uint8)
        base = worst_margin(Trimap(marks))
        marks2 = marks.copy()
        marks2[0, :] = gt[0, :]
        more = worst_margin(Trimap(marks2))
        assert more >= base - 1e-9


class TestTrainStatic:
    def test_separable_instance_converges_with_zero_slack(self):
        ctx = build_context(_separable_entry(), gmm_k=1)
        res = train_static([ctx], C=1000.0)
        assert res.converged
        assert max(res.xi.values()) <= 1e-4 + 1e-9
        for c in res.working[ctx.name]:
            assert float(res.w @ c.dpsi) >= c.loss - res.xi[ctx.name] - 1e-4

    def test_objective_nondecreasing(self, rng):
        ctxs = [_tiny_context(rng, 4, 4, name=f"i{k}") for k in range(3)]
        res = train_static(ctxs, C=50.0)
        diffs = np.diff(res.objectives)
        assert (diffs >= -1e-7).all()

    def test_c_zero_terminates_with_zero_w(self, rng):
        ctxs = [_tiny_context(rng, name="z0")]
        res = train_static(ctxs, C=0.0, max_rounds=3)
        assert (res.w == 0).all()

    def test_final_constraints_all_satisfied(self, rng):
        ctxs = [_tiny_context(rng, 4, 3, name=f"s{k}") for k in range(2)]
        res = train_static(ctxs, C=25.0)
        assert res.converged
        for k, cs in res.working.items():
            for c in cs:
                assert float(res.w @ c.dpsi) >= c.loss - res.xi[k] - 1e-4 - 1e-9


class TestTrainDynamic:
    def test_t_zero_is_static_training(self, rng):
        ctxs = [_tiny_context(rng, name=f"d{k}") for k in range(2)]
        dyn = train_dynamic(ctxs, C=25.0, T=0)
        static = train_static(ctxs, C=25.0,
                              clamps={c.name: c.entry.brush for c in ctxs})
        assert dyn.w_trajectory.shape == (1, 3)
        assert np.allclose(dyn.w_trajectory[0], static.w, atol=1e-7)

    def test_clamp_counts_and_iota_nondecreasing(self):
        entries = [_separable_entry(f"sep{i}") for i in range(2)]
        ctxs = [build_context(e, gmm_k=1) for e in entries]
        dyn = train_dynamic(ctxs, C=100.0, T=3)
        for k in dyn.labeled_counts[0]:
            counts = [row[k] for row in dyn.labeled_counts]
            assert all(b >= a for a, b in zip(counts, counts[1:]))
        assert all(b >= a - 1e-12 for a, b in zip(dyn.iota, dyn.iota[1:]))

    def test_trajectory_weights_satisfy_running_constraints(self):
        entries = [_separable_entry(f"run{i}") for i in range(2)]
        ctxs = [build_context(e, gmm_k=1) for e in entries]
        dyn = train_dynamic(ctxs, C=100.0, T=4)
        assert dyn.w_trajectory.shape == (5, 3)
        assert all(dyn.converged)

    def test_strokes_agree_with_ground_truth(self):
        entries = [_separable_entry("gt0")]
        ctxs = [build_context(e, gmm_k=1) for e in entries]
        dyn = train_dynamic(ctxs, C=100.0, T=3)
        tri = dyn.clamps["gt0"]
        gt = entries[0].gt.labels
        assert (gt[tri.fg_mask] == 1).all()
        assert (gt[tri.bg_mask] == 0).all()


class TestCrossval:
    def test_fold_partition_property(self):
        names = [f"img{i}" for i in range(11)]
        folds = make_folds(names, 5)
        flat = sorted(n for fold in folds for n in fold)
        assert flat == sorted(names)
        assert len(folds) == 5

    def test_perfect_stub_gives_zero_curves(self, monkeypatch):
        import brushbench.maxmargin as mm
        entries = [_separable_entry(f"cv{i}") for i in range(5)]
        monkeypatch.setattr(
            mm, "evaluate_weights",
            lambda w, entry, policy, B, *a, **kw: [0.0] * (B + 1))
        res = mm.crossval_dynamic(entries, folds=5, C=10.0, T=0, B=2, gmm_k=1)
        assert np.array(res.curves_w0).sum() == 0.0
        assert np.array(res.curves_wT).sum() == 0.0

    def test_small_real_crossval_runs(self):
        entries = [_separable_entry(f"r{i}") for i in range(4)]
        res = crossval_dynamic(entries, folds=2, C=100.0, T=1, B=2, gmm_k=1)
        assert len(res.curves_w0) == 2 and len(res.curves_wT) == 2
        d = res.to_json_dict()
        assert len(d["mean_curve_w0"]) == 3
