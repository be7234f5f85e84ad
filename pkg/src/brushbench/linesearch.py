"""Single-parameter sweep learning: grids, leave-one-out selection, jackknife."""

from __future__ import annotations

import argparse
import json
from dataclasses import dataclass, field, replace

import numpy as np

from .data import DatasetEntry
from .energy import Params
from .evaluation import evaluate
from .robot import RobotPolicy
from .segmenters import SegmenterConfig

PARAMETERS = ("w_c", "w_i", "w_beta")

DEFAULT_START = Params(w_c=0.25, w_i=5.0, w_beta=1.0)


def default_grid(parameter: str, n: int = 30) -> np.ndarray:
    """30-point default grids: linear from 0 for the linear weights,
    log-spaced for the beta scale."""
    if parameter in ("w_c", "w_i"):
        return np.linspace(0.0, 10.0, n)
    if parameter == "w_beta":
        return np.logspace(np.log10(0.1), np.log10(20.0), n)
    raise ValueError(f"unknown parameter {parameter!r}")


@dataclass(frozen=True)
class SweepSpec:
    parameter: str
    grid: tuple[float, ...] = ()
    protocol: str = "dynamic-brush"
    B: int = 20
    policy: RobotPolicy = RobotPolicy("center")
    f: str = "sigmoid"

    def __post_init__(self):
        if self.parameter not in PARAMETERS:
            raise ValueError(f"parameter must be one of {PARAMETERS}")
        grid = tuple(float(g) for g in self.grid) or tuple(default_grid(self.parameter))
        if any(b <= a for a, b in zip(grid, grid[1:])):
            raise ValueError("grid must be strictly increasing")
        if any(g < 0 for g in grid):
            raise ValueError("grid values must be >= 0")
        if self.parameter == "w_beta" and grid[0] <= 0:
            raise ValueError("w_beta grid must be positive")
        object.__setattr__(self, "grid", grid)


@dataclass
class SweepResult:
    parameter: str
    grid: tuple[float, ...]
    er_matrix: np.ndarray          # (len(grid), n_images)
    image_names: tuple[str, ...]
    failed: tuple[tuple[str, str], ...] = ()

    @property
    def train_mean(self) -> np.ndarray:
        return self.er_matrix.mean(axis=1)

    @property
    def train_std(self) -> np.ndarray:
        if self.er_matrix.shape[1] < 2:
            return np.zeros(len(self.grid))
        return self.er_matrix.std(axis=1, ddof=1)

    def to_json_dict(self) -> dict:
        return {
            "parameter": self.parameter,
            "grid": list(self.grid),
            "image_names": list(self.image_names),
            "er_matrix": self.er_matrix.tolist(),
            "train_mean": self.train_mean.tolist(),
            "train_std": self.train_std.tolist(),
            "failed": [list(f) for f in self.failed],
        }


def _with_param(params: Params, name: str, value: float) -> Params:
    return replace(params, **{name: float(value)})


def sweep(dataset: list[DatasetEntry], config: SegmenterConfig,
          spec: SweepSpec) -> SweepResult:
    """Er of every image at every grid value of the swept parameter.

    Images failing at any grid value are dropped from the matrix (and
    recorded), keeping columns comparable across grid rows.
    """
    if not dataset:
        raise ValueError("dataset must be nonempty")
    rows = []
    failed: dict[str, str] = {}
    per_row_results = []
    for value in spec.grid:
        cfg = replace(config, params=_with_param(config.params, spec.parameter, value))
        report = evaluate(dataset, cfg, spec.protocol, B=spec.B, policy=spec.policy)
        for name, msg in report.failed:
            failed[name] = msg
        per_row_results.append({r.name: r for r in report.results})
    keep = [e.name for e in dataset if e.name not in failed]
    for row in per_row_results:
        rows.append([_er_of(row[name], spec.f) for name in keep])
    return SweepResult(
        parameter=spec.parameter, grid=spec.grid,
        er_matrix=np.asarray(rows, dtype=float),
        image_names=tuple(keep), failed=tuple(sorted(failed.items())))


def _er_of(result, f: str) -> float:
    return result.Er_sigmoid if f == "sigmoid" else result.Er_identity


def select_loo(result: SweepResult) -> tuple[float, float]:
    """Reported optimum plus the leave-one-out test-error estimate.

    The reported w* minimizes the full-data mean; the LOO error averages, over
    held-out images k, the error of the value chosen without image k.
    Ties always go to the smaller grid value.
    """
    m = result.er_matrix
    n = m.shape[1]
    if n < 2:
        raise ValueError("leave-one-out needs at least 2 images")
    w_star = result.grid[int(np.argmin(m.mean(axis=1)))]
    loo_values = _loo_choices(result)
    loo_error = float(np.mean([m[gi, k] for k, gi in enumerate(loo_values)]))
    return float(w_star), loo_error


def _loo_choices(result: SweepResult) -> list[int]:
    """Grid index chosen when each image is held out (ties -> smaller value)."""
    m = result.er_matrix
    n = m.shape[1]
    totals = m.sum(axis=1)
    out = []
    for k in range(n):
        means_wo_k = (totals - m[:, k]) / (n - 1)
        out.append(int(np.argmin(means_wo_k)))
    return out


def jackknife_stdev(result: SweepResult) -> float:
    """Jackknife deviation of the selected value over leave-one-out choices."""
    if result.er_matrix.shape[1] < 2:
        raise ValueError("jackknife needs at least 2 images")
    theta = np.array([result.grid[i] for i in _loo_choices(result)])
    n = len(theta)
    var = (n - 1) / n * float(((theta - theta.mean()) ** 2).sum())
    return float(np.sqrt(var))


@dataclass
class LearnResult:
    params: Params
    stdevs: dict[str, float] = field(default_factory=dict)
    loo_errors: dict[str, float] = field(default_factory=dict)
    sweeps: list[SweepResult] = field(default_factory=list)

    def to_json_dict(self) -> dict:
        return {
            "params": {"w_c": self.params.w_c, "w_i": self.params.w_i,
                       "w_beta": self.params.w_beta},
            "stdevs": self.stdevs,
            "loo_errors": self.loo_errors,
            "sweeps": [s.to_json_dict() for s in self.sweeps],
        }


def coordinate_learn(dataset: list[DatasetEntry], config: SegmenterConfig,
                     specs: list[SweepSpec]) -> LearnResult:
    """One sweep per parameter in order, each fixing the values chosen so far."""
    seen = [s.parameter for s in specs]
    if len(set(seen)) != len(seen):
        raise ValueError("each parameter may be swept at most once")
    out = LearnResult(params=config.params)
    for spec in specs:
        cfg = replace(config, params=out.params)
        result = sweep(dataset, cfg, spec)
        w_star, loo = select_loo(result)
        out.params = _with_param(out.params, spec.parameter, w_star)
        out.stdevs[spec.parameter] = jackknife_stdev(result)
        out.loo_errors[spec.parameter] = loo
        out.sweeps.append(result)
    return out


def main(argv=None) -> int:
    ap = argparse.ArgumentParser(
        description="line-search parameter learning for a segmentation system")
    ap.add_argument("--dataset", help="dataset directory (PNG files)")
    ap.add_argument("--synthetic", type=int, default=0,
                    help="use N generated two-blob images instead of --dataset")
    ap.add_argument("--system", default="GCA",
                    choices=["GCS", "GC", "GCA", "GEO"])
    ap.add_argument("--protocol", default="dynamic-brush",
                    choices=["static-trimap", "static-brush", "dynamic-brush",
                             "dynamic"])
    ap.add_argument("--B", type=int, default=20)
    ap.add_argument("--policy", default="center")
    ap.add_argument("--f", default="sigmoid", choices=["sigmoid", "identity"])
    ap.add_argument("--grid-file", help="JSON file {parameter: [values...]}")
    ap.add_argument("--grid-points", type=int, default=30)
    ap.add_argument("--order", default="w_c,w_i,w_beta")
    ap.add_argument("--start", default=None,
                    help="starting params as w_c,w_i,w_beta")
    ap.add_argument("--gmm-k", type=int, default=5)
    ap.add_argument("--out", required=True)
    args = ap.parse_args(argv)

    if args.protocol == "dynamic":
        args.protocol = "dynamic-brush"
    if args.synthetic:
        from .synthetic import make_eval_suite
        dataset = make_eval_suite(args.synthetic)
    elif args.dataset:
        from .data import load_dataset
        dataset = load_dataset(args.dataset)
    else:
        ap.error("need --dataset or --synthetic")

    grids = {}
    if args.grid_file:
        grids = {k: tuple(v) for k, v in json.load(open(args.grid_file)).items()}
    start = DEFAULT_START
    if args.start:
        w_c, w_i, w_beta = (float(x) for x in args.start.split(","))
        start = Params(w_c, w_i, w_beta)

    config = SegmenterConfig(args.system, start, gmm_k=args.gmm_k)
    specs = [SweepSpec(parameter=p.strip(),
                       grid=grids.get(p.strip(),
                                      tuple(default_grid(p.strip(), args.grid_points))),
                       protocol=args.protocol, B=args.B,
                       policy=RobotPolicy(args.policy), f=args.f)
             for p in args.order.split(",") if p.strip()]
    result = coordinate_learn(dataset, config, specs)
    with open(args.out, "w") as fh:
        json.dump(result.to_json_dict(), fh, indent=2)
    print(f"learned params: {result.params} (stdevs {result.stdevs})")
    print(f"wrote {args.out}")
    return 0


if __name__ == "__main__":
    raise SystemExit(main())
