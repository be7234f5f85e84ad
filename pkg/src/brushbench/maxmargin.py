"""Max-margin learning of the energy weights with a robot user in the loop.

The energy is linear in w = (w_unary, w_ising, w_contrast) through per-labeling
features (GMM-cost sum, cut Ising sum, cut contrast sum). Training alternates
a working-set QP with loss-augmented search for violated labelings; "cheating"
clamps pin user-labeled pixels to ground truth, and the dynamic variant
interleaves robot strokes with re-training.

The beta scale is non-linear in the energy and stays frozen at its line-search
value throughout.
"""

from __future__ import annotations

import argparse
import json
from dataclasses import dataclass

import numpy as np
from cvxopt import matrix as cvx_matrix
from cvxopt import solvers as cvx_solvers

from . import color
from .color import CLAMP_COST
from .data import DatasetEntry, LabelMap, Trimap
from .energy import GridEnergy, Params, compute_beta, minimize, neighbor_sq_diffs
from .errors import QpSolverError
from .maxflow import DIR_OFFSETS, DIR_DISTS
from .robot import RobotPolicy, next_stroke, run_robot
from .segmenters import GcsSession, SegmenterConfig

cvx_solvers.options["show_progress"] = False
cvx_solvers.options["abstol"] = 1e-9
cvx_solvers.options["reltol"] = 1e-9
cvx_solvers.options["feastol"] = 1e-9

N_FEATURES = 3
DEFAULT_TOL = 1e-4
KKT_TOL = 1e-6


@dataclass(frozen=True)
class ImageContext:
    """Frozen per-image quantities the linear energy is built from."""

    name: str
    entry: DatasetEntry
    unary: np.ndarray          # raw GMM nll costs (H, W, 2), no clamps
    ising_feat: np.ndarray     # (4, H, W): 1/dist on valid pairs
    contrast_feat: np.ndarray  # (4, H, W): exp(-beta d2)/dist
    beta: float

    @property
    def n_pixels(self) -> int:
        return self.unary.shape[0] * self.unary.shape[1]


def build_context(entry: DatasetEntry, gmm_k: int = 5, gmm_seed: int = 0,
                  w_beta: float = 1.0) -> ImageContext:
    img = entry.image
    fg = color.fit_gmm(img.data[entry.brush.fg_mask], gmm_k, gmm_seed)
    bg = color.fit_gmm(img.data[entry.brush.bg_mask], gmm_k, gmm_seed + 1)
    unary = color.nll_field(img, fg, bg)
    beta = compute_beta(img, w_beta)
    h, w = img.height, img.width
    ising = np.zeros((4, h, w))
    contrast = np.zeros((4, h, w))
    diffs = neighbor_sq_diffs(img.data)
    for d, ((dr, dc), dist) in enumerate(zip(DIR_OFFSETS, DIR_DISTS)):
        rs = slice(max(0, -dr), h - max(0, dr))
        cs = slice(max(0, -dc), w - max(0, dc))
        ising[d, rs, cs] = 1.0 / dist
        contrast[d, rs, cs] = np.exp(-beta * diffs[d]) / dist
    return ImageContext(entry.name, entry, unary, ising, contrast, beta)


def _cut_sums(feat: np.ndarray, labels: np.ndarray) -> float:
    h, w = labels.shape
    total = 0.0
    for d, (dr, dc) in enumerate(DIR_OFFSETS):
        rs = slice(max(0, -dr), h - max(0, dr))
        cs = slice(max(0, -dc), w - max(0, dc))
        a = labels[rs, cs]
        b = labels[max(0, dr):h + min(0, dr), max(0, dc):w + min(0, dc)]
        total += float(feat[d, rs, cs][a != b].sum())
    return total


def psi(ctx: ImageContext, labels: np.ndarray) -> np.ndarray:
    """Feature vector with E_w(y) = w . psi(y)."""
    lab = np.asarray(labels, dtype=np.uint8)
    unary_sum = float(np.take_along_axis(
        ctx.unary, lab[:, :, None].astype(np.int64), axis=2).sum())
    return np.array([unary_sum, _cut_sums(ctx.ising_feat, lab),
                     _cut_sums(ctx.contrast_feat, lab)])


def energy_for(w: np.ndarray, ctx: ImageContext, clamps: Trimap | None = None,
               loss_gt: LabelMap | None = None,
               loss_weight: float = 1.0) -> GridEnergy:
    """Grid energy realizing w . psi plus optional clamp and loss terms."""
    theta = w[0] * ctx.unary
    if clamps is not None:
        theta = theta.copy()
        theta[clamps.fg_mask, 0] += CLAMP_COST
        theta[clamps.bg_mask, 1] += CLAMP_COST
    if loss_gt is not None:
        gtl = loss_gt.labels.astype(np.int64)
        theta = theta.copy()
        np.put_along_axis(
            theta, (1 - gtl)[:, :, None],
            np.take_along_axis(theta, (1 - gtl)[:, :, None], axis=2) - loss_weight,
            axis=2)
    edges = w[1] * ctx.ising_feat + w[2] * ctx.contrast_feat
    return GridEnergy(theta, edges, ctx.beta)


# ---------------------------------------------------------------------------
# Working-set QP
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class Constraint:
    labels: np.ndarray  # the violating labeling y
    dpsi: np.ndarray    # psi(y) - psi(gt)
    loss: float         # Hamming loss in pixels

    def key(self) -> bytes:
        return self.labels.tobytes()


WorkingSet = dict[str, list[Constraint]]


@dataclass
class QpSolution:
    w: np.ndarray
    xi: dict[str, float]
    objective: float


def minimal_slacks(w: np.ndarray, working: WorkingSet,
                   image_keys: list[str]) -> dict[str, float]:
    xi = {k: 0.0 for k in image_keys}
    for k, cons in working.items():
        for c in cons:
            xi[k] = max(xi[k], c.loss - float(w @ c.dpsi))
    return xi


def qp_objective(w: np.ndarray, xi: dict[str, float], C: float, K: int) -> float:
    return 0.5 * float(w @ w) + (C / K) * sum(xi.values())


def solve_qp(working: WorkingSet, C: float, K: int,
             image_keys: list[str] | None = None) -> QpSolution:
    """Minimize 1/2||w||^2 + (C/K) sum xi s.t. w.dpsi >= loss - xi_k, w,xi >= 0.

    Solved as a dense convex QP; the KKT residuals of the returned point are
    verified to 1e-6 and slacks are re-tightened to their minimal values.
    """
    keys = image_keys if image_keys is not None else sorted(working)
    cons = [(k, c) for k in keys for c in working.get(k, [])]
    if not cons or C == 0.0:
        w = np.zeros(N_FEATURES)
        xi = minimal_slacks(w, working, keys)
        return QpSolution(w, xi, qp_objective(w, xi, C, K))

    kidx = {k: i for i, k in enumerate(keys)}
    nk = len(keys)
    nv = N_FEATURES + nk
    P = np.zeros((nv, nv))
    P[:N_FEATURES, :N_FEATURES] = np.eye(N_FEATURES)
    q = np.zeros(nv)
    q[N_FEATURES:] = C / K

    rows = []
    rhs = []
    for k, c in cons:
        g = np.zeros(nv)
        g[:N_FEATURES] = -c.dpsi
        g[N_FEATURES + kidx[k]] = -1.0
        rows.append(g)
        rhs.append(-c.loss)
    for i in range(nv):  # w >= 0 and xi >= 0
        g = np.zeros(nv)
        g[i] = -1.0
        rows.append(g)
        rhs.append(0.0)
    G = np.array(rows)
    h = np.array(rhs)

    sol = cvx_solvers.qp(cvx_matrix(P), cvx_matrix(q), cvx_matrix(G),
                         cvx_matrix(h))
    if sol["status"] not in ("optimal", "unknown"):
        raise QpSolverError(f"QP solver returned status {sol['status']}")
    z = np.array(sol["x"]).ravel()
    lam = np.array(sol["z"]).ravel()
    stat = P @ z + q + G.T @ lam
    feas = G @ z - h
    comp = lam * feas
    # scaled KKT residuals: each block is measured against the magnitude of
    # the terms it is composed of (features and C can be orders of magnitude
    # apart, so raw residuals only reflect cancellation, not solve quality)
    stat_scale = max(1.0, np.abs(P @ z).max(), np.abs(q).max(),
                     (np.abs(G).T @ np.abs(lam)).max())
    feas_scale = max(1.0, np.abs(G @ z).max(), np.abs(h).max())
    comp_scale = max(1.0, np.abs(lam).max() * feas_scale)
    resid = max(np.abs(stat).max() / stat_scale,
                max(0.0, feas.max()) / feas_scale,
                np.abs(comp).max() / comp_scale)
    if resid > KKT_TOL:
        raise QpSolverError(
            f"QP scaled KKT residual {resid:.2e} exceeds {KKT_TOL} "
            f"(stationarity {np.abs(stat).max():.2e}/{stat_scale:.2e}, "
            f"primal {max(0.0, feas.max()):.2e}, "
            f"complementarity {np.abs(comp).max():.2e})")

    w = np.maximum(z[:N_FEATURES], 0.0)
    xi = minimal_slacks(w, working, keys)
    return QpSolution(w, xi, qp_objective(w, xi, C, K))


def find_violated(w: np.ndarray, ctx: ImageContext, clamps: Trimap | None,
                  xi_k: float = 0.0, tol: float = DEFAULT_TOL,
                  loss_weight: float = 1.0):
    """Most violating labeling of one image, or None if all margins hold.

    Runs loss-augmented minimization restricted to the clamp-compatible set;
    the ground-truth labeling itself never constitutes a violation.
    """
    gt = ctx.entry.gt
    e = energy_for(w, ctx, clamps=clamps, loss_gt=gt, loss_weight=loss_weight)
    labels, _ = minimize(e)
    lab = labels.labels.copy()
    if clamps is not None:
        lab[clamps.fg_mask] = 1
        lab[clamps.bg_mask] = 0
    if np.array_equal(lab, gt.labels):
        return None
    dpsi = psi(ctx, lab) - psi(ctx, gt.labels)
    loss = loss_weight * float((lab != gt.labels).sum())
    margin = float(w @ dpsi) - loss
    if margin < -xi_k - tol:
        return Constraint(lab, dpsi, loss), margin
    return None


def _compatible(c: Constraint, clamps: Trimap) -> bool:
    return (c.labels[clamps.fg_mask] == 1).all() and \
        (c.labels[clamps.bg_mask] == 0).all()


@dataclass
class StaticTrainResult:
    w: np.ndarray
    xi: dict[str, float]
    objective: float
    objectives: list[float]
    working: WorkingSet
    converged: bool
    rounds: int


def default_C(contexts: list[ImageContext]) -> float:
    return 10.0 * float(np.mean([c.n_pixels for c in contexts]))


def train_static(contexts: list[ImageContext], C: float | None = None,
                 tol: float = DEFAULT_TOL, max_rounds: int = 200,
                 clamps: dict[str, Trimap] | None = None,
                 working: WorkingSet | None = None) -> StaticTrainResult:
    """Cutting-plane training under fixed clamps.

    A warm-start working set may be passed; constraints incompatible with the
    current clamps are dropped so the relaxation stays sound.
    """
    if not contexts:
        raise ValueError("need at least one training image")
    if C is None:
        C = default_C(contexts)
    keys = [c.name for c in contexts]
    ctx_by = {c.name: c for c in contexts}
    clamps = clamps or {k: ctx_by[k].entry.brush for k in keys}
    working = working if working is not None else {}
    for k in keys:
        working[k] = [c for c in working.get(k, []) if _compatible(c, clamps[k])]

    objectives = []
    sol = solve_qp(working, C, len(keys), keys)
    objectives.append(sol.objective)
    converged = False
    rounds = 0
    for rounds in range(1, max_rounds + 1):
        added = 0
        for k in keys:
            found = find_violated(sol.w, ctx_by[k], clamps[k], sol.xi[k], tol)
            if found is None:
                continue
            con, _ = found
            if any(con.key() == c.key() for c in working[k]):
                continue
            working[k].append(con)
            added += 1
        if added == 0:
            converged = True
            break
        sol = solve_qp(working, C, len(keys), keys)
        objectives.append(sol.objective)
    return StaticTrainResult(sol.w, sol.xi, sol.objective, objectives, working,
                             converged, rounds)


# ---------------------------------------------------------------------------
# Interleaved dynamic training
# ---------------------------------------------------------------------------

@dataclass
class DynamicTrainResult:
    w_trajectory: np.ndarray        # (T+1, 3)
    iota: list[float]               # interaction cost per step
    objective_split: list[tuple[float, float]]  # (1/2||w||^2, slack term)
    clamps: dict[str, Trimap]
    labeled_counts: list[dict[str, int]]
    converged: list[bool]

    def to_json_dict(self) -> dict:
        return {
            "w_trajectory": self.w_trajectory.tolist(),
            "iota": self.iota,
            "objective_split": [list(t) for t in self.objective_split],
            "labeled_counts": self.labeled_counts,
            "converged": self.converged,
        }


def _gcs_segment(w: np.ndarray, ctx: ImageContext, clamps: Trimap) -> LabelMap:
    e = energy_for(w, ctx, clamps=clamps)
    labels, _ = minimize(e)
    lab = labels.labels.copy()
    lab[clamps.fg_mask] = 1
    lab[clamps.bg_mask] = 0
    return LabelMap(lab)


def train_dynamic(contexts: list[ImageContext], C: float | None = None,
                  strategy: RobotPolicy | None = None, T: int = 25,
                  a: float | None = None, tol: float = DEFAULT_TOL,
                  max_rounds: int = 200) -> DynamicTrainResult:
    """Interleave cutting-plane optimization with robot strokes.

    Step t trains w^t under the current clamps, then every training image
    receives one strategy stroke (clamps only ever grow); images whose
    segmentation already matches ground truth stop receiving strokes.
    """
    strategy = strategy or RobotPolicy("center")
    if C is None:
        C = default_C(contexts)
    clamps = {c.name: c.entry.brush for c in contexts}
    working: WorkingSet = {}
    w_traj = []
    iota = []
    splits = []
    counts_log = []
    converged = []

    def record(res):
        w_traj.append(res.w)
        reg = 0.5 * float(res.w @ res.w)
        splits.append((reg, res.objective - reg))
        counts = {k: int((clamps[k].marks != 2).sum()) for k in clamps}
        counts_log.append(counts)
        iota.append(max((a if a is not None else 1.0 / ctx_by[k].n_pixels) * n
                        for k, n in counts.items()))
        converged.append(res.converged)

    ctx_by = {c.name: c for c in contexts}
    res = train_static(contexts, C, tol, max_rounds, clamps, working)
    record(res)
    for _ in range(T):
        for ctx in contexts:
            seg = _gcs_segment(res.w, ctx, clamps[ctx.name])
            stroke = next_stroke(strategy, ctx.entry.image, ctx.entry.gt, seg)
            if stroke is not None:
                clamps[ctx.name] = clamps[ctx.name].with_stroke(stroke)
        res = train_static(contexts, C, tol, max_rounds, clamps, res.working)
        record(res)
    return DynamicTrainResult(np.array(w_traj), iota, splits, clamps,
                              counts_log, converged)


# ---------------------------------------------------------------------------
# Cross-validated comparison of w^0 vs w^T
# ---------------------------------------------------------------------------

def make_folds(names: list[str], folds: int) -> list[list[str]]:
    """Round-robin partition over the sorted names; every name appears once."""
    ordered = sorted(names)
    return [ordered[i::folds] for i in range(folds)]


def evaluate_weights(w: np.ndarray, entry: DatasetEntry, policy: RobotPolicy,
                     B: int, gmm_k: int = 5, gmm_seed: int = 0,
                     w_beta: float = 1.0) -> list[float]:
    """Dynamic-protocol error curve of a GCS session running under weights w."""
    ctx = build_context(entry, gmm_k, gmm_seed, w_beta)
    params = Params(w_c=float(w[2]), w_i=float(w[1]), w_beta=w_beta)
    cfg = SegmenterConfig("GCS", params, gmm_k=gmm_k, gmm_seed=gmm_seed,
                          unary_weight=float(w[0]))
    sess = GcsSession(entry.image, entry.brush, cfg, unary_field=ctx.unary)
    return run_robot(sess, policy, entry.gt, B).errors


@dataclass
class CrossvalResult:
    folds: list[list[str]]
    curves_w0: list[list[float]]   # per fold: mean test curve under w^0
    curves_wT: list[list[float]]
    w0: list[np.ndarray]
    wT: list[np.ndarray]
    dynamics: list[DynamicTrainResult]

    def mean_curve(self, which: str) -> np.ndarray:
        curves = self.curves_w0 if which == "w0" else self.curves_wT
        return np.mean(np.array(curves), axis=0)

    def to_json_dict(self) -> dict:
        return {
            "folds": self.folds,
            "curves_w0": self.curves_w0,
            "curves_wT": self.curves_wT,
            "mean_curve_w0": self.mean_curve("w0").tolist(),
            "mean_curve_wT": self.mean_curve("wT").tolist(),
            "w0": [w.tolist() for w in self.w0],
            "wT": [w.tolist() for w in self.wT],
            "dynamics": [d.to_json_dict() for d in self.dynamics],
        }


def crossval_dynamic(dataset: list[DatasetEntry], folds: int = 5,
                     C: float | None = None, T: int = 25, B: int | None = None,
                     strategy: RobotPolicy | None = None, gmm_k: int = 5,
                     gmm_seed: int = 0, w_beta: float = 1.0,
                     tol: float = DEFAULT_TOL) -> CrossvalResult:
    """K-fold comparison of the pre- and post-interaction weight vectors."""
    if len(dataset) < folds:
        raise ValueError("need at least as many images as folds")
    strategy = strategy or RobotPolicy("center")
    B = B if B is not None else T
    by_name = {e.name: e for e in dataset}
    fold_names = make_folds(list(by_name), folds)
    result = CrossvalResult(fold_names, [], [], [], [], [])
    for test_names in fold_names:
        train = [build_context(by_name[n], gmm_k, gmm_seed, w_beta)
                 for n in sorted(set(by_name) - set(test_names))]
        dyn = train_dynamic(train, C=C, strategy=strategy, T=T, tol=tol)
        w0 = dyn.w_trajectory[0]
        wT = dyn.w_trajectory[-1]
        c0, cT = [], []
        for n in test_names:
            c0.append(evaluate_weights(w0, by_name[n], strategy, B, gmm_k,
                                       gmm_seed, w_beta))
            cT.append(evaluate_weights(wT, by_name[n], strategy, B, gmm_k,
                                       gmm_seed, w_beta))
        result.curves_w0.append(np.mean(np.array(c0), axis=0).tolist())
        result.curves_wT.append(np.mean(np.array(cT), axis=0).tolist())
        result.w0.append(w0)
        result.wT.append(wT)
        result.dynamics.append(dyn)
    return result


def main(argv=None) -> int:
    ap = argparse.ArgumentParser(
        description="max-margin training of energy weights with a robot user")
    ap.add_argument("--dataset", help="dataset directory")
    ap.add_argument("--synthetic", type=int, default=0,
                    help="use N generated two-blob images")
    ap.add_argument("--C", type=float, default=None)
    ap.add_argument("--T", type=int, default=25)
    ap.add_argument("--B", type=int, default=None)
    ap.add_argument("--folds", type=int, default=5)
    ap.add_argument("--gmm-k", type=int, default=5)
    ap.add_argument("--w-beta", type=float, default=1.0)
    ap.add_argument("--out", required=True)
    args = ap.parse_args(argv)

    if args.synthetic:
        from .synthetic import make_eval_suite
        dataset = make_eval_suite(args.synthetic)
    elif args.dataset:
        from .data import load_dataset
        dataset = load_dataset(args.dataset)
    else:
        ap.error("need --dataset or --synthetic")

    result = crossval_dynamic(dataset, folds=args.folds, C=args.C, T=args.T,
                              B=args.B, gmm_k=args.gmm_k, w_beta=args.w_beta)
    with open(args.out, "w") as fh:
        json.dump(result.to_json_dict(), fh, indent=2)
    print(f"mean final er  w0={result.mean_curve('w0')[-1]:.3f}  "
          f"wT={result.mean_curve('wT')[-1]:.3f}")
    print(f"wrote {args.out}")
    return 0


if __name__ == "__main__":
    raise SystemExit(main())
