"""One-pass evaluation: centre-distance precision, overlap success, DP@20 and AUC."""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .data_model import BoundingBox
from .errors import EvaluationError

PRECISION_THRESHOLDS = np.arange(0, 51, dtype=np.float64)  # pixels
SUCCESS_THRESHOLDS = np.arange(21, dtype=np.float64) / 20  # overlap, step 0.05
DP_THRESHOLD = 20.0


def _inter_union_enclose(a: BoundingBox, b: BoundingBox):
    ax0, ay0, ax1, ay1 = a.as_xyxy()
    bx0, by0, bx1, by1 = b.as_xyxy()
    iw = max(0.0, min(ax1, bx1) - max(ax0, bx0))
    ih = max(0.0, min(ay1, by1) - max(ay0, by0))
    inter = iw * ih
    union = a.area + b.area - inter
    enclose = (max(ax1, bx1) - min(ax0, bx0)) * (max(ay1, by1) - min(ay0, by0))
    return inter, union, enclose


def iou(a: BoundingBox, b: BoundingBox) -> float:
    inter, union, _ = _inter_union_enclose(a, b)
    return inter / union


def giou(a: BoundingBox, b: BoundingBox) -> float:
    inter, union, enclose = _inter_union_enclose(a, b)
    return inter / union - (enclose - union) / enclose


def center_distance(a: BoundingBox, b: BoundingBox) -> float:
    (ax, ay), (bx, by) = a.center, b.center
    return math.hypot(ax - bx, ay - by)


def precision_curve(errors, thresholds=PRECISION_THRESHOLDS) -> list[tuple[float, float]]:
    """Fraction of frames with centre error <= t, for each threshold t."""
    e = np.asarray(errors, dtype=np.float64)
    if e.size == 0:
        raise ValueError("precision_curve needs at least one frame")
    return [(float(t), float(np.mean(e <= t))) for t in thresholds]


def dp_at(curve, threshold: float = DP_THRESHOLD) -> float:
    for t, v in curve:
        if t == threshold:
            return v
    raise ValueError(f"threshold {threshold} not on the curve")


def success_auc(overlaps, thresholds=SUCCESS_THRESHOLDS) -> tuple[list[tuple[float, float]], float]:
    """Success curve (fraction of frames with overlap strictly above t) and its mean."""
    o = np.asarray(overlaps, dtype=np.float64)
    if o.size == 0:
        raise ValueError("success_auc needs at least one frame")
    curve = [(float(t), float(np.mean(o > t))) for t in thresholds]
    return curve, float(np.mean([v for _, v in curve]))


@dataclass
class EvalResult:
    per_frame_center_error: list[float]
    per_frame_overlap: list[float]
    dp_20: float
    auc: float
    precision_curve: list[tuple[float, float]]
    success_curve: list[tuple[float, float]]

    @classmethod
    def from_boxes(cls, predictions, ground_truth) -> "EvalResult":
        errs, ovs = [], []
        for p, g in zip(predictions, ground_truth):
            if g is None:  # unannotated frame
                continue
            errs.append(center_distance(p, g))
            ovs.append(iou(p, g))
        pc = precision_curve(errs)
        sc, auc = success_auc(ovs)
        return cls(errs, ovs, dp_at(pc), auc, pc, sc)


@dataclass
class OPEReport:
    per_sequence: dict[str, EvalResult]
    dp_20: float
    auc: float
    precision_curve: list[tuple[float, float]] = field(default_factory=list)
    success_curve: list[tuple[float, float]] = field(default_factory=list)


def _mean_curve(curves):
    ts = [t for t, _ in curves[0]]
    vals = np.mean([[v for _, v in c] for c in curves], axis=0)
    return list(zip(ts, (float(v) for v in vals)))


def evaluate_ope(predictions: dict, ground_truth: dict) -> OPEReport:
    """Per-sequence metrics, then sequence-balanced means for the aggregate."""
    missing = sorted(set(ground_truth) - set(predictions))
    if missing:
        raise EvaluationError(f"no predictions for sequence {missing[0]!r}")
    per_seq = {}
    for name in sorted(ground_truth):
        pred, gt = list(predictions[name]), list(ground_truth[name])
        if len(pred) != len(gt):
            raise EvaluationError(f"sequence {name!r}: {len(pred)} predictions for {len(gt)} ground-truth frames")
        per_seq[name] = EvalResult.from_boxes(pred, gt)
    if not per_seq:
        raise EvaluationError("nothing to evaluate")
    res = list(per_seq.values())
    return OPEReport(
        per_seq,
        float(np.mean([r.dp_20 for r in res])),
        float(np.mean([r.auc for r in res])),
        _mean_curve([r.precision_curve for r in res]),
        _mean_curve([r.success_curve for r in res]),
    )


def write_curve_csv(path, curve) -> None:
    with open(path, "w", newline="") as f:
        w = csv.writer(f)
        w.writerow(["threshold", "value"])
        for t, v in curve:
            w.writerow([repr(float(t)), repr(float(v))])


def read_curve_csv(path) -> list[tuple[float, float]]:
    with open(path, newline="") as f:
        rows = list(csv.reader(f))
    return [(float(t), float(v)) for t, v in rows[1:]]


def write_report(report: OPEReport, out_dir, label: str = "") -> Path:
    """Curve CSVs per sequence and aggregate, plus ``summary.csv`` with an AGGREGATE row."""
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    prefix = f"{label}_" if label else ""
    for name, r in report.per_sequence.items():
        write_curve_csv(out / f"{prefix}{name}_precision.csv", r.precision_curve)
        write_curve_csv(out / f"{prefix}{name}_success.csv", r.success_curve)
    write_curve_csv(out / f"{prefix}precision.csv", report.precision_curve)
    write_curve_csv(out / f"{prefix}success.csv", report.success_curve)
    summary = out / f"{prefix}summary.csv"
    with open(summary, "w", newline="") as f:
        w = csv.writer(f)
        w.writerow(["sequence", "dp20", "auc"])
        for name, r in report.per_sequence.items():
            w.writerow([name, repr(r.dp_20), repr(r.auc)])
        w.writerow(["AGGREGATE", repr(report.dp_20), repr(report.auc)])
    return summary


def read_summary(path) -> dict[str, tuple[float, float]]:
    with open(path, newline="") as f:
        rows = list(csv.reader(f))
    return {r[0]: (float(r[1]), float(r[2])) for r in rows[1:]}
