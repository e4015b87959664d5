# Copyright: (c) 2024, ucloudnet contributors
# GNU General Public License v3.0+ (see COPYING or https://www.gnu.org/licenses/gpl-3.0.txt)

import csv
from pathlib import Path
from typing import Iterable, List, Tuple, Union

import numpy as np

from .errors import MetricsError, ShapeError
from .objects.confusion import Confusion
from .objects.evalReport import EvalReport
from .tensor import Tensor

NUM_THRESHOLDS = 256
THRESHOLDS = np.arange(NUM_THRESHOLDS, dtype=np.float64) / (NUM_THRESHOLDS - 1)

ArrayLike = Union[Tensor, np.ndarray]


def _array(x:ArrayLike) -> np.ndarray:
    return x.data if isinstance(x, Tensor) else np.asarray(x)


def _ratio(num:int, den:int) -> float:
    # 0/0 is reported as 0
    return num / den if den else 0.0


def confusion(pred:ArrayLike, mask:ArrayLike, threshold:float) -> Confusion:
    """Pixel counts with a pixel predicted positive iff pred >= threshold."""
    p, m = _array(pred), _array(mask)
    if p.shape != m.shape:
        raise ShapeError(f"confusion: prediction {p.shape} and mask {m.shape} differ")
    pos = p.astype(np.float64) >= threshold
    truth = m > 0.5
    tp = int(np.count_nonzero(pos & truth))
    fp = int(np.count_nonzero(pos & ~truth))
    fn = int(np.count_nonzero(~pos & truth))
    tn = int(np.count_nonzero(~pos & ~truth))
    return Confusion(tp, fp, fn, tn)


def scalar_metrics(c:Confusion, threshold:float=0.5) -> EvalReport:
    precision = _ratio(c.tp, c.tp + c.fp)
    recall = _ratio(c.tp, c.tp + c.fn)
    f_measure = _ratio(2*precision*recall, precision + recall) if precision + recall > 0 else 0.0
    error_rate = _ratio(c.fp + c.fn, c.total)
    return EvalReport(c, precision, recall, f_measure, error_rate, threshold)


class PrHistogram:
    """Single-pass accumulator for the 256-threshold curve.

    Each pixel lands in the bin of the highest threshold it still reaches, split by its
    mask class; cumulative sums from the top give the counts at every threshold.
    """
    def __init__(self):
        self.positive = np.zeros(NUM_THRESHOLDS, dtype=np.int64)
        self.negative = np.zeros(NUM_THRESHOLDS, dtype=np.int64)

    def add(self, pred:ArrayLike, mask:ArrayLike):
        p, m = _array(pred), _array(mask)
        if p.shape != m.shape:
            raise ShapeError(f"pr histogram: prediction {p.shape} and mask {m.shape} differ")
        p = p.astype(np.float64).reshape(-1)
        truth = m.reshape(-1) > 0.5
        # number of thresholds <= p, minus one; uses the same comparisons as a direct scan
        bins = np.searchsorted(THRESHOLDS, p, side="right") - 1
        bins = np.clip(bins, 0, NUM_THRESHOLDS - 1)
        self.positive += np.bincount(bins[truth], minlength=NUM_THRESHOLDS)
        self.negative += np.bincount(bins[~truth], minlength=NUM_THRESHOLDS)

    def __iadd__(self, other:"PrHistogram"):
        self.positive += other.positive
        self.negative += other.negative
        return self

    def confusions(self) -> List[Confusion]:
        tp = np.cumsum(self.positive[::-1])[::-1]
        fp = np.cumsum(self.negative[::-1])[::-1]
        n_pos, n_neg = int(self.positive.sum()), int(self.negative.sum())
        return [Confusion(int(tp[i]), int(fp[i]), n_pos - int(tp[i]), n_neg - int(fp[i]))
            for i in range(NUM_THRESHOLDS)]

    def curve(self) -> List[Tuple[float, float, float]]:
        if self.positive.sum() == 0 or self.negative.sum() == 0:
            raise MetricsError("PR curve needs at least one positive and one negative pixel")
        res = []
        for t, c in zip(THRESHOLDS, self.confusions()):
            res.append((float(t), _ratio(c.tp, c.tp + c.fp), _ratio(c.tp, c.tp + c.fn)))
        return res


def pr_curve(stream:Iterable[Tuple[ArrayLike, ArrayLike]]) -> List[Tuple[float, float, float]]:
    """(threshold, precision, recall) at thresholds i/255, aggregated over the stream."""
    hist = PrHistogram()
    for pred, mask in stream:
        hist.add(pred, mask)
    return hist.curve()


def auc_pr(curve:List[Tuple[float, float, float]]) -> float:
    """Trapezoidal area under precision over recall.

    Points are walked from the highest threshold down, which orders them by
    non-decreasing recall, starting from (recall 0, precision 1) so a perfect
    predictor scores 1.
    """
    points = sorted(curve, key=lambda c: -c[0])
    r = np.array([0.0] + [r for _, _, r in points])
    p = np.array([1.0] + [p for _, p, _ in points])
    return float(np.sum((r[1:] - r[:-1]) * (p[1:] + p[:-1]) / 2))


def write_report(report:EvalReport, path:Path):
    c = report.confusion
    rows = [
        ("threshold", report.threshold_used),
        ("precision", report.precision),
        ("recall", report.recall),
        ("f_measure", report.f_measure),
        ("error_rate", report.error_rate),
        ("tp", c.tp), ("fp", c.fp), ("fn", c.fn), ("tn", c.tn),
    ]
    if report.auc is not None:
        rows.append(("auc_pr", report.auc))
    with open(path, "w", encoding="utf-8") as f:
        for k, v in rows:
            f.write(f"{k}={v!r}\n")


def read_report(path:Path) -> EvalReport:
    values = {}
    with open(path, "r", encoding="utf-8") as f:
        for line in f:
            line = line.strip()
            if line and "=" in line:
                k, v = line.split("=", 1)
                values[k] = v
    c = Confusion(*(int(values[k]) for k in ("tp", "fp", "fn", "tn")))
    return EvalReport(c, float(values["precision"]), float(values["recall"]), float(values["f_measure"]),
        float(values["error_rate"]), float(values["threshold"]),
        auc=float(values["auc_pr"]) if "auc_pr" in values else None)


def write_pr_curve(curve:List[Tuple[float, float, float]], path:Path):
    with open(path, "w", encoding="utf-8", newline="") as f:
        w = csv.writer(f)
        w.writerow(["threshold", "precision", "recall"])
        for t, p, r in curve:
            w.writerow([repr(t), repr(p), repr(r)])


def read_pr_curve(path:Path) -> List[Tuple[float, float, float]]:
    with open(path, "r", encoding="utf-8", newline="") as f:
        r = csv.reader(f)
        next(r)
        return [(float(a), float(b), float(c)) for a, b, c in r]
