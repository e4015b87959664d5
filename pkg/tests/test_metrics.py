# Copyright: (c) 2024, ucloudnet contributors
# GNU General Public License v3.0+ (see COPYING or https://www.gnu.org/licenses/gpl-3.0.txt)

import numpy as np
import pytest

from ucloudnet.errors import MetricsError, ShapeError
from ucloudnet.metrics import (THRESHOLDS, PrHistogram, auc_pr, confusion, pr_curve, read_pr_curve,
    read_report, scalar_metrics, write_pr_curve, write_report)
from ucloudnet.objects.confusion import Confusion


def naive_confusions(pred, mask):
    return [confusion(pred, mask, t) for t in THRESHOLDS]


def naive_auc(pred, mask):
    points = []
    for t in THRESHOLDS[::-1]:
        c = confusion(pred, mask, t)
        p = c.tp / (c.tp + c.fp) if c.tp + c.fp else 0.0
        r = c.tp / (c.tp + c.fn) if c.tp + c.fn else 0.0
        points.append((r, p))
    area, prev = 0.0, (0.0, 1.0)
    for r, p in points:
        area += (r - prev[0]) * (p + prev[1]) / 2
        prev = (r, p)
    return area


def random_case(size, seed):
    rng = np.random.default_rng(seed)
    pred = rng.uniform(size=(1, 1, size, size)).astype(np.float32)
    # include exact threshold values to exercise ties
    pred.reshape(-1)[:16] = THRESHOLDS[rng.integers(0, 256, size=16)]
    mask = (rng.uniform(size=(1, 1, size, size)) > 0.4).astype(np.float32)
    return pred, mask


# ---- confusion & scalar metrics ------------------------------------------

def test_confusion_hand_example():
    pred = np.array([0.9, 0.4, 0.6, 0.1])
    mask = np.array([1, 1, 0, 0])
    assert confusion(pred, mask, 0.5) == Confusion(tp=1, fp=1, fn=1, tn=1)


def test_confusion_saturated():
    c = confusion(np.full((4, 4), 0.9), np.ones((4, 4)), 0.5)
    assert c == Confusion(tp=16)


def test_threshold_zero_predicts_everything_positive():
    rng = np.random.default_rng(1)
    c = confusion(rng.uniform(size=100), rng.integers(0, 2, size=100), 0.0)
    assert c.fn == 0 and c.tn == 0


def test_exact_tie_counts_positive():
    assert confusion(np.array([0.5]), np.array([1]), 0.5) == Confusion(tp=1)


def test_confusion_rejects_shape_mismatch():
    with pytest.raises(ShapeError):
        confusion(np.zeros(4), np.zeros(5), 0.5)


def test_scalar_metrics_hand_example():
    r = scalar_metrics(Confusion(tp=3, fp=1, fn=2, tn=4))
    assert r.precision == pytest.approx(0.75)
    assert r.recall == pytest.approx(0.6)
    assert r.f_measure == pytest.approx(0.666667, abs=1e-6)
    assert r.error_rate == pytest.approx(0.3)


def test_scalar_metrics_perfect():
    r = scalar_metrics(Confusion(tp=5, tn=7))
    assert (r.precision, r.recall, r.f_measure, r.error_rate) == (1.0, 1.0, 1.0, 0.0)


def test_scalar_metrics_degenerate_is_zero():
    r = scalar_metrics(Confusion(tn=10))
    assert (r.precision, r.recall, r.f_measure, r.error_rate) == (0.0, 0.0, 0.0, 0.0)


@pytest.mark.parametrize("seed", range(5))
def test_scalar_metric_properties(seed):
    pred, mask = random_case(16, seed)
    c = confusion(pred, mask, 0.5)
    r = scalar_metrics(c)
    assert r.error_rate == pytest.approx(1 - (c.tp + c.tn) / c.total)
    assert min(r.precision, r.recall) <= r.f_measure <= max(r.precision, r.recall)
    assert r.f_measure == pytest.approx(2*r.precision*r.recall / (r.precision + r.recall))


def test_confusion_merge_equals_whole():
    pred, mask = random_case(16, 3)
    whole = confusion(pred, mask, 0.5)
    merged = Confusion()
    for i in range(4):
        merged += confusion(pred[..., 4*i:4*i + 4, :], mask[..., 4*i:4*i + 4, :], 0.5)
    assert merged == whole


# ---- pr curve ------------------------------------------------------------

@pytest.mark.parametrize("size,seed", [(8, 0), (8, 1), (8, 2), (64, 3)])
def test_histogram_equals_naive_scan(size, seed):
    pred, mask = random_case(size, seed)
    hist = PrHistogram()
    hist.add(pred, mask)
    assert hist.confusions() == naive_confusions(pred, mask)


def test_histogram_accumulates_over_a_stream():
    pred, mask = random_case(16, 4)
    a, b = PrHistogram(), PrHistogram()
    a.add(pred[..., :8, :], mask[..., :8, :])
    b.add(pred[..., 8:, :], mask[..., 8:, :])
    a += b
    assert a.confusions() == naive_confusions(pred, mask)


def test_curve_thresholds_and_recall_monotone():
    pred, mask = random_case(32, 5)
    curve = pr_curve([(pred, mask)])
    assert len(curve) == 256
    assert curve[0][0] == 0.0 and curve[-1][0] == 1.0
    assert curve[0][2] == 1.0
    recalls = [r for _, _, r in curve]
    assert all(a >= b for a, b in zip(recalls, recalls[1:]))


def test_curve_refuses_single_class_stream():
    with pytest.raises(MetricsError):
        pr_curve([(np.full((4, 4), 0.3), np.ones((4, 4)))])


def test_perfect_predictor_auc_is_one():
    _, mask = random_case(16, 6)
    assert auc_pr(pr_curve([(mask, mask)])) == pytest.approx(1.0)


def test_constant_predictor_is_no_skill():
    mask = np.zeros((8, 8))
    mask[:, :4] = 1
    curve = pr_curve([(np.full((8, 8), 0.5), mask)])
    for t, p, r in curve:
        if t <= 0.5:
            assert (p, r) == (0.5, 1.0)


def test_auc_matches_brute_force():
    pred, mask = random_case(32, 7)
    assert auc_pr(pr_curve([(pred, mask)])) == pytest.approx(naive_auc(pred, mask), abs=1e-12)


# ---- files ---------------------------------------------------------------

def test_report_and_curve_files(tmp_path):
    pred, mask = random_case(16, 8)
    report = scalar_metrics(confusion(pred, mask, 0.5))
    report.pr_curve = pr_curve([(pred, mask)])
    report.auc = auc_pr(report.pr_curve)

    write_report(report, tmp_path / "eval_report.txt")
    write_pr_curve(report.pr_curve, tmp_path / "pr_curve.csv")
    back = read_report(tmp_path / "eval_report.txt")
    assert back.confusion == report.confusion
    assert (back.precision, back.recall, back.f_measure, back.error_rate, back.auc) == \
        (report.precision, report.recall, report.f_measure, report.error_rate, report.auc)
    assert (tmp_path / "pr_curve.csv").read_text(encoding="utf-8").startswith("threshold,precision,recall")
    assert read_pr_curve(tmp_path / "pr_curve.csv") == report.pr_curve
