"""Error metrics, the three evaluation protocols, and report generation."""

from __future__ import annotations

import csv
import json
from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np

from .data import DatasetEntry, LabelMap
from .errors import BrushBenchError
from .robot import RobotPolicy, run_robot
from .segmenters import SegmenterConfig, SegmenterSession, start_session

PROTOCOLS = ("static-trimap", "static-brush", "dynamic-brush")

DEFAULT_CAP = 5.0


def hamming_error(seg: LabelMap, gt: LabelMap) -> float:
    """Percentage of misclassified pixels."""
    if seg.labels.shape != gt.labels.shape:
        raise ValueError("segmentation and ground truth dimensions differ")
    return 100.0 * float((seg.labels != gt.labels).sum()) / seg.labels.size


def transfer(er: float, c: float = DEFAULT_CAP) -> float:
    """Saturating error weight: 0 below 1.5, approaching c from below above it."""
    if er < 0:
        raise ValueError("error must be >= 0")
    if c <= 0:
        raise ValueError("cap must be > 0")
    if er <= 1.5:
        return 0.0
    return c - c / (er - 0.5) ** 2


def _f_of(name: str) -> Callable[[float], float]:
    if name == "identity":
        return lambda e: e
    if name == "sigmoid":
        return transfer
    raise ValueError("f must be 'identity' or 'sigmoid'")


def aggregate_Er(curve: Sequence[float], B: int, f: str = "sigmoid") -> float:
    """Mean of f(er_b) over brushes b = 1..B; er_0 is the pre-stroke error."""
    if B < 1:
        raise ValueError("B must be >= 1")
    if len(curve) < B + 1:
        raise ValueError(f"curve has {len(curve)} entries, need {B + 1}")
    fn = _f_of(f)
    return float(np.mean([fn(curve[b]) for b in range(1, B + 1)]))


@dataclass(frozen=True)
class ImageResult:
    name: str
    curve: tuple[float, ...]
    er_final: float
    Er_sigmoid: float
    Er_identity: float


@dataclass
class EvalReport:
    """Per-image curves and scores plus recomputable aggregates."""

    protocol: str
    B: int
    results: list[ImageResult] = field(default_factory=list)
    failed: list[tuple[str, str]] = field(default_factory=list)

    def aggregate(self) -> dict:
        if not self.results:
            return {"n_images": 0, "n_failed": len(self.failed), "defined": False}
        er_sig = np.array([r.Er_sigmoid for r in self.results])
        er_id = np.array([r.Er_identity for r in self.results])
        finals = np.array([r.er_final for r in self.results])
        curves = np.array([r.curve for r in self.results])
        f_sig = np.vectorize(transfer)(curves)

        def _std(a, axis=None):
            n = a.shape[axis] if axis is not None else a.size
            return np.std(a, axis=axis, ddof=1) if n > 1 else np.zeros_like(
                np.mean(a, axis=axis))

        return {
            "n_images": len(self.results),
            "n_failed": len(self.failed),
            "defined": True,
            "mean_Er_sigmoid": float(er_sig.mean()),
            "std_Er_sigmoid": float(_std(er_sig)),
            "mean_Er_identity": float(er_id.mean()),
            "std_Er_identity": float(_std(er_id)),
            "mean_final_er": float(finals.mean()),
            "mean_f_sigmoid_per_b": f_sig.mean(axis=0).tolist(),
            "std_f_sigmoid_per_b": np.atleast_1d(_std(f_sig, axis=0)).tolist(),
            "mean_er_per_b": curves.mean(axis=0).tolist(),
        }

    def write_csv(self, path: str) -> None:
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["image", "protocol", "Er_sigmoid", "Er_identity", "final_er"])
            for r in self.results:
                w.writerow([r.name, self.protocol, r.Er_sigmoid, r.Er_identity,
                            r.er_final])

    def write_curves_jsonl(self, path: str) -> None:
        with open(path, "w") as fh:
            for r in self.results:
                fh.write(json.dumps({"image": r.name, "curve": list(r.curve)}) + "\n")

    def to_json_dict(self) -> dict:
        return {
            "protocol": self.protocol,
            "B": self.B,
            "aggregate": self.aggregate(),
            "failed": [{"image": n, "error": m} for n, m in self.failed],
            "images": [{"image": r.name, "Er_sigmoid": r.Er_sigmoid,
                        "Er_identity": r.Er_identity, "final_er": r.er_final}
                       for r in self.results],
        }


def _default_factory(entry: DatasetEntry, config: SegmenterConfig,
                     protocol: str) -> SegmenterSession:
    tri = entry.tight if protocol == "static-trimap" else entry.brush
    return start_session(entry.image, tri, config)


def evaluate(dataset: Sequence[DatasetEntry], config: SegmenterConfig, protocol: str,
             B: int = 20, policy: RobotPolicy | None = None,
             session_factory: Callable | None = None,
             trace_dir: str | None = None) -> EvalReport:
    """Run one protocol over the dataset and assemble the report.

    session_factory(entry, config, protocol) can replace the segmenter (used
    by tests to inject stubs); failures are recorded per image and excluded
    from aggregates. trace_dir, when given, receives one robot-trace JSONL
    file per image for dynamic runs.
    """
    if protocol not in PROTOCOLS:
        raise ValueError(f"unknown protocol {protocol!r}")
    if protocol == "dynamic-brush" and policy is None:
        raise ValueError("dynamic-brush protocol requires a policy")
    factory = session_factory or _default_factory
    report = EvalReport(protocol=protocol, B=B if protocol == "dynamic-brush" else 0)
    for entry in dataset:
        try:
            session = factory(entry, config, protocol)
            if protocol == "dynamic-brush":
                trace = run_robot(session, policy, entry.gt, B)
                if trace_dir is not None:
                    import os
                    os.makedirs(trace_dir, exist_ok=True)
                    with open(os.path.join(trace_dir,
                                           f"{entry.name}.trace.jsonl"), "w") as fh:
                        fh.write(trace.to_jsonl())
                curve = tuple(trace.errors)
                res = ImageResult(
                    name=entry.name, curve=curve, er_final=curve[B],
                    Er_sigmoid=aggregate_Er(curve, B, "sigmoid"),
                    Er_identity=aggregate_Er(curve, B, "identity"))
            else:
                er = hamming_error(session.segment(), entry.gt)
                res = ImageResult(name=entry.name, curve=(er,), er_final=er,
                                  Er_sigmoid=transfer(er), Er_identity=er)
            report.results.append(res)
        except BrushBenchError as exc:
            report.failed.append((entry.name, str(exc)))
    return report
