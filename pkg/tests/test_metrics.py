import itertools

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from geostream.geometry import Box3D
from geostream.metrics import (
    Detection,
    ap_from_matches,
    ap_r40,
    clip_convex,
    evaluate,
    greedy_match,
    iou_3d,
    iou_bev,
    polygon_area,
)

from oracles import brute_force_ap40, monte_carlo_iou_3d


def cube(x=0.0, y=0.0, z=10.0, theta=0.0, s=2.0):
    return Box3D([x, y, z], h=s, w=s, l=s, theta=theta)


def test_iou_examples():
    assert iou_3d(cube(), cube()) == pytest.approx(1.0, abs=1e-12)
    assert iou_3d(cube(), cube(x=5)) == 0.0
    assert iou_bev(cube(), cube(x=1)) == pytest.approx(1 / 3, abs=1e-12)
    assert iou_3d(cube(), cube(x=1)) == pytest.approx(1 / 3, abs=1e-12)
    assert iou_3d(cube(), cube(y=1)) == pytest.approx(1 / 3, abs=1e-12)
    assert iou_bev(cube(), cube(y=1)) == pytest.approx(1.0, abs=1e-12)


def test_polygon_helpers():
    sq = np.array([[0, 0], [1, 0], [1, 1], [0, 1]], float)
    assert polygon_area(sq) == pytest.approx(1.0)
    assert polygon_area(sq[::-1]) == pytest.approx(1.0)
    shifted = sq + 0.5
    assert polygon_area(clip_convex(sq, shifted)) == pytest.approx(0.25)
    assert polygon_area(clip_convex(sq, sq + 3)) == 0.0


box_st = st.builds(
    lambda x, y, z, h, w, l, t: Box3D([x, y, z], h=h, w=w, l=l, theta=t),
    st.floats(-3, 3), st.floats(-1, 1), st.floats(8, 14),
    st.floats(0.5, 3), st.floats(0.5, 3), st.floats(0.5, 5), st.floats(-np.pi, np.pi),
)


@given(box_st, box_st)
def test_iou_symmetric_bounded(a, b):
    for fn in (iou_3d, iou_bev):
        v = fn(a, b)
        assert 0.0 <= v <= 1.0 + 1e-12
        assert v == pytest.approx(fn(b, a), abs=1e-12)
    assert iou_3d(a, a) == pytest.approx(1.0, abs=1e-9)


@given(box_st, box_st, st.floats(-np.pi, np.pi))
def test_iou_bev_rotation_invariant(a, b, phi):
    # rotate both boxes about the vertical axis through the camera
    c, s = np.cos(phi), np.sin(phi)

    def rot(box):
        x, y, z = box.center
        return Box3D([c * x + s * z, y, -s * x + c * z], h=box.h, w=box.w, l=box.l, theta=box.theta + phi)

    assert iou_bev(rot(a), rot(b)) == pytest.approx(iou_bev(a, b), abs=1e-9)
    assert iou_3d(rot(a), rot(b)) == pytest.approx(iou_3d(a, b), abs=1e-9)


def test_iou_monte_carlo(rng):
    for k in range(10):
        a = Box3D([0, 0.8, 15], h=1.5, w=1.7, l=4.0, theta=rng.uniform(-np.pi, np.pi))
        b = Box3D(a.center + rng.uniform(-1, 1, 3) * [1.5, 0.3, 1.5], h=1.6, w=1.8, l=3.8,
                  theta=a.theta + rng.uniform(-0.6, 0.6))
        assert abs(iou_3d(a, b) - monte_carlo_iou_3d(a, b, n=400_000, seed=k)) < 3e-3


def test_ap_examples():
    gt = [cube()]
    assert ap_r40([Detection(cube(), 0.9)], gt).ap == 1.0
    assert ap_r40([Detection(cube(x=5), 0.9)], gt).ap == 0.0
    # two GTs, one matched: recall 1/2, precision 1 for the first 20 points
    gts = [cube(), cube(x=10)]
    rep = ap_r40([Detection(cube(), 0.9)], gts)
    assert rep.ap == 0.5
    assert list(rep.precision) == [1.0] * 20 + [0.0] * 20
    assert ap_r40([], gts).ap == 0.0
    assert ap_r40([Detection(cube(), 0.9)], []).ap == 0.0


def test_greedy_prefers_higher_score_then_best_iou():
    iou = np.array([[0.8, 0.9], [0.95, 0.0]])
    assert list(greedy_match([0.5, 0.9], iou, 0.7)) == [1, 0]
    assert list(greedy_match([0.9, 0.5], iou, 0.7)) == [1, 0]
    assert list(greedy_match([0.9, 0.5], [[0.9, 0.0], [0.8, 0.0]], 0.7)) == [0, -1]


def test_evaluate_modes():
    gts = [cube()]
    dets = [Detection(cube(y=0.5), 0.7)]
    rep = evaluate([(dets, gts)], 0.7)
    # BEV identical, 3D overlap 0.6
    assert rep["bev"].ap == 1.0 and rep["3d"].ap == 0.0
    assert rep["3d"].as_dict()["n_gt"] == 1


LABELS = ("fp", 0, 1)


def _frame_from_labels(labels, scores):
    """Detections labelled as FP or as a perfect hit on GT 0/1 of a two-GT frame."""
    iou = np.zeros((len(labels), 2))
    for d, lab in enumerate(labels):
        if lab != "fp":
            iou[d, lab] = 1.0
    return list(scores), iou


def _compare(frames, thr=0.5):
    ap, prec, _ = ap_from_matches([(s, iou) for s, iou, _ in frames], thr)
    ap_bf, prec_bf = brute_force_ap40([(s, iou.tolist(), n) for s, iou, n in frames], thr)
    assert ap == ap_bf
    assert list(prec) == prec_bf


def test_ap_exhaustive_small():
    scores_pool = [0.9, 0.8, 0.7, 0.7, 0.5, 0.4, 0.3, 0.2]
    for n in range(0, 6):
        for labels in itertools.product(LABELS, repeat=n):
            s, iou = _frame_from_labels(labels, scores_pool[:n])
            _compare([(s, iou, 2)])


@settings(max_examples=300, deadline=None)
@given(st.lists(st.tuples(st.sampled_from(LABELS), st.sampled_from([0.1, 0.3, 0.5, 0.7, 0.9])),
                max_size=8),
       st.lists(st.tuples(st.sampled_from(LABELS), st.sampled_from([0.2, 0.5, 0.9])), max_size=4))
def test_ap_matches_brute_force_with_ties(frame_a, frame_b):
    frames = []
    for fr in (frame_a, frame_b):
        labels = [lab for lab, _ in fr]
        s, iou = _frame_from_labels(labels, [sc for _, sc in fr])
        frames.append((s, iou, 2))
    _compare(frames)


def test_ap_random_iou_matrices(rng):
    for _ in range(300):
        frames = []
        for _ in range(rng.integers(1, 4)):
            n_det, n_gt = rng.integers(0, 11), rng.integers(0, 5)
            iou = rng.choice([0.0, 0.3, 0.55, 0.72, 0.9], size=(n_det, n_gt))
            scores = rng.choice([0.1, 0.2, 0.4, 0.6, 0.8], size=n_det)
            frames.append((scores.tolist(), iou, n_gt))
        _compare(frames, thr=0.5)
        _compare(frames, thr=0.7)


def test_removing_false_positive_never_hurts(rng):
    for _ in range(200):
        n = rng.integers(1, 10)
        labels = [LABELS[i] for i in rng.integers(0, 3, n)]
        scores = rng.uniform(0, 1, n)
        s, iou = _frame_from_labels(labels, scores)
        ap = ap_from_matches([(s, iou)], 0.5)[0]
        assign = greedy_match(s, iou, 0.5)
        for d in np.flatnonzero(assign < 0):
            keep = np.arange(n) != d
            ap2 = ap_from_matches([(np.asarray(s)[keep], iou[keep])], 0.5)[0]
            assert ap2 >= ap


def test_ap_invariant_to_monotone_rescaling(rng):
    for _ in range(100):
        n = rng.integers(1, 10)
        labels = [LABELS[i] for i in rng.integers(0, 3, n)]
        scores = rng.choice([0.1, 0.4, 0.6, 0.9], n)
        s, iou = _frame_from_labels(labels, scores)
        a = ap_from_matches([(s, iou)], 0.5)[0]
        b = ap_from_matches([(np.exp(3 * np.asarray(s)) + 7, iou)], 0.5)[0]
        assert a == b
