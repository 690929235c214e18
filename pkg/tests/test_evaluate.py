import math

import pytest

from polarformer.head import PolarBox
from polarformer.pipeline.evaluate import average_precision, evaluate, mark_matches, match, write_metrics_csv
from polarformer.pipeline.forward import Detection


def gt_box(rho, phi, label=0, score=1.0):
    return PolarBox(rho, phi, 0.0, 2.0, 1.0, 1.5, scores=(score,), label=label)


def brute_force_ap(tp_in_score_order, n_gt):
    """Interpolated precision on recall points 0.01..1.00, evaluated prefix by prefix."""
    prefixes = []
    hits = 0
    for i, t in enumerate(tp_in_score_order, start=1):
        hits += t
        prefixes.append((hits / n_gt, hits / i))
    total = 0.0
    for r in range(1, 101):
        ok = [p for rec, p in prefixes if rec >= r / 100 - 1e-12]
        total += max(ok) if ok else 0.0
    return total / 100


def test_gt_as_detections_is_perfect():
    gts = [gt_box(5 + 5 * i, -3 + 0.7 * i, label=i % 3) for i in range(9)]
    res = evaluate(gts, gts)
    for bucket in ("near", "medium", "far", "all"):
        for t in (0.5, 1.0, 2.0, 4.0):
            assert res[bucket][t] == 1.0
    assert res["mean"] == 1.0


def test_no_detections():
    gts = [gt_box(10, 0.0), gt_box(30, 1.0)]
    res = evaluate([], gts)
    assert all(v == 0.0 for v in res["all"].values()) and res["mean"] == 0.0


def test_half_match():
    gts = [gt_box(10, 0.0), gt_box(20, 1.0)]
    res = evaluate([gt_box(10, 0.0)], gts)
    assert all(v == 0.5 for v in res["all"].values())


def test_bucket_without_ground_truth_is_nan():
    res = evaluate([gt_box(10, 0.0)], [gt_box(10, 0.0)])
    assert math.isnan(res["far"][1.0]) and res["near"][1.0] == 1.0


def test_class_aware_matching():
    gts = [gt_box(10, 0.0, label=1)]
    assert average_precision([gt_box(10, 0.0, label=2)], gts, 4.0) == 0.0
    assert average_precision([gt_box(10, 0.0, label=1)], gts, 4.0) == 1.0


def test_threshold_in_meters():
    gts = [gt_box(10, 0.0)]
    det = PolarBox(10.0, 0.0, 0.0, 2.0, 1.0, 1.5, scores=(0.9,), label=0)
    shifted = PolarBox(math.hypot(1.5, 10.0), math.atan2(1.5, 10.0), 0.0, 2.0, 1.0, 1.5, scores=(0.9,), label=0)
    assert average_precision([det], gts, 0.5) == 1.0
    assert average_precision([shifted], gts, 1.0) == 0.0 and average_precision([shifted], gts, 2.0) == 1.0


def test_one_to_one_and_score_order():
    gts = [gt_box(10, 0.0)]
    strong = gt_box(10, 0.0, score=0.9)
    weak = gt_box(10, 0.0, score=0.3)
    assert match([weak, strong], gts, 1.0) == [False, True]


def test_matches_brute_force_oracle(rng):
    for _ in range(30):
        gts = [gt_box(rng.uniform(2, 50), rng.uniform(-3, 3), label=int(rng.integers(2))) for _ in range(6)]
        dets = []
        for g in gts:
            if rng.uniform() < 0.7:
                dx, dy = rng.normal(0, 1.0, 2)
                x, y = g.x + dx, g.y + dy
                dets.append(PolarBox(math.hypot(x, y), math.atan2(x, y), 0, 1, 1, 1,
                                     scores=(rng.uniform(),), label=g.label))
        for _ in range(int(rng.integers(0, 5))):
            dets.append(gt_box(rng.uniform(2, 50), rng.uniform(-3, 3), label=int(rng.integers(2)), score=rng.uniform()))
        for t in (0.5, 1.0, 2.0, 4.0):
            tp = match(dets, gts, t)
            order = sorted(range(len(dets)), key=lambda i: -dets[i].score)
            expected = brute_force_ap([tp[i] for i in order], len(gts)) if dets else 0.0
            assert average_precision(dets, gts, t) == pytest.approx(expected, abs=1e-12)


def test_permutation_invariance(rng):
    gts = [gt_box(rng.uniform(2, 50), rng.uniform(-3, 3)) for _ in range(8)]
    dets = [gt_box(g.rho + rng.normal(0, 0.5), g.phi, score=s) for g, s in zip(gts, rng.permutation(8) / 10 + 0.05)]
    base = evaluate(dets, gts)
    for _ in range(5):
        perm = [dets[i] for i in rng.permutation(len(dets))]
        assert evaluate(perm, gts) == base


def test_mark_matches_and_csv(tmp_path):
    gts = [gt_box(10, 0.0), gt_box(40, 2.0)]
    dets = [Detection(gt_box(10, 0.0)), Detection(gt_box(25, 1.0), bucket="medium")]
    marked = mark_matches(dets, gts, 1.0)
    assert [d.matched for d in marked] == [True, False]
    write_metrics_csv(tmp_path / "m.csv", evaluate(dets, gts))
    lines = (tmp_path / "m.csv").read_text().splitlines()
    assert lines[0] == "bucket,threshold_m,ap" and lines[-1].startswith("mean,")
    assert len(lines) == 1 + 4 * 4 + 1
