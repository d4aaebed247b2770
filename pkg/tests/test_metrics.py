import numpy as np
import pytest

from phaseseg.metrics import ClassMetrics, dsc, evaluate_label_maps, iou


def pixel_count_oracle(pred, gt):
    """Independent overlap counting: plain Python loop over pixels."""
    inter = pa = pb = 0
    for a, b in zip(pred.ravel().tolist(), gt.ravel().tolist()):
        if a:
            pa += 1
        if b:
            pb += 1
        if a and b:
            inter += 1
    union = pa + pb - inter
    o_iou = 1.0 if union == 0 else inter / union
    o_dsc = 1.0 if pa + pb == 0 else 2.0 * inter / (pa + pb)
    return o_iou, o_dsc


def test_identical_masks():
    m = np.zeros((5, 5), dtype=bool)
    m[1:4, 1:4] = True
    assert iou(m, m) == 1.0
    assert dsc(m, m) == 1.0


def test_disjoint_masks():
    a = np.zeros((5, 5), dtype=bool)
    b = np.zeros((5, 5), dtype=bool)
    a[0, 0] = True
    b[4, 4] = True
    assert iou(a, b) == 0.0
    assert dsc(a, b) == 0.0


def test_both_empty_scores_one():
    e = np.zeros((6, 6), dtype=bool)
    assert iou(e, e) == 1.0
    assert dsc(e, e) == 1.0


def test_partial_overlap_hand_counts():
    # 3x3 squares sharing a 2x3 block: inter 6, union 12, sizes 9+9
    a = np.zeros((6, 6), dtype=bool)
    b = np.zeros((6, 6), dtype=bool)
    a[0:3, 0:3] = True
    b[1:4, 0:3] = True
    assert iou(a, b) == pytest.approx(6 / 12)
    assert dsc(a, b) == pytest.approx(12 / 18)


def test_matches_pixel_counting_oracle():
    rng = np.random.default_rng(23)
    for _ in range(100):
        a = rng.random((16, 16)) > rng.uniform(0.2, 0.9)
        b = rng.random((16, 16)) > rng.uniform(0.2, 0.9)
        o_iou, o_dsc = pixel_count_oracle(a, b)
        assert iou(a, b) == o_iou
        assert dsc(a, b) == o_dsc


def test_dsc_iou_identity_and_ordering():
    rng = np.random.default_rng(29)
    for _ in range(200):
        a = rng.random((12, 12)) > rng.uniform(0.2, 0.9)
        b = rng.random((12, 12)) > rng.uniform(0.2, 0.9)
        i, d = iou(a, b), dsc(a, b)
        assert abs(d - 2 * i / (1 + i)) < 1e-12
        assert d >= i
        assert (d == i) == (i in (0.0, 1.0))


def test_shape_mismatch_rejected():
    with pytest.raises(ValueError, match="shape"):
        iou(np.zeros((3, 3), dtype=bool), np.zeros((4, 4), dtype=bool))


def test_evaluate_label_maps_hand_example():
    # frame 0: class 1 exact match; class 2 absent from both
    # frame 1: class 1 half-row overlap; class 2 predicted only
    g0 = np.zeros((4, 4), dtype=np.int64); g0[0, :2] = 1
    p0 = g0.copy()
    g1 = np.zeros((4, 4), dtype=np.int64); g1[1, :2] = 1
    p1 = np.zeros((4, 4), dtype=np.int64); p1[1, 1:3] = 1; p1[3, 3] = 2
    res = evaluate_label_maps([p0, p1], [g0, g1], num_classes=2)
    c1 = res.score_for(1)
    c2 = res.score_for(2)
    assert c1.support_frames == 2
    assert c1.iou == pytest.approx((1.0 + 1 / 3) / 2)
    assert c1.dsc == pytest.approx((1.0 + 0.5) / 2)
    assert c2.support_frames == 1
    assert c2.iou == 0.0 and c2.dsc == 0.0
    assert res.mean_dsc == pytest.approx((c1.dsc + c2.dsc) / 2)
    assert res.aggregation_protocol == "per_frame"
    assert res.num_frames == 2


def test_absent_class_excluded_from_means():
    g = np.zeros((4, 4), dtype=np.int64); g[0, 0] = 1
    p = g.copy()
    res = evaluate_label_maps([p], [g], num_classes=3)
    assert [s.class_id for s in res.per_class] == [1]
    assert res.mean_dsc == 1.0


def test_all_background_match_is_vacuously_perfect():
    z = np.zeros((4, 4), dtype=np.int64)
    res = evaluate_label_maps([z], [z], num_classes=2)
    assert res.per_class == ()
    assert res.mean_iou == 1.0 and res.mean_dsc == 1.0


def test_pooled_protocol_differs_from_per_frame_on_unequal_frames():
    # class 1: one tiny perfect frame, one large total miss
    g0 = np.zeros((8, 8), dtype=np.int64); g0[0, 0] = 1
    p0 = g0.copy()
    g1 = np.zeros((8, 8), dtype=np.int64); g1[2:7, 2:7] = 1
    p1 = np.zeros((8, 8), dtype=np.int64)
    per_frame = evaluate_label_maps([p0, p1], [g0, g1], 1, protocol="per_frame")
    pooled = evaluate_label_maps([p0, p1], [g0, g1], 1, protocol="pooled")
    assert per_frame.score_for(1).dsc == pytest.approx(0.5)
    assert pooled.score_for(1).dsc == pytest.approx(2 * 1 / (1 + 26))
    assert per_frame.mean_dsc != pooled.mean_dsc


def test_evaluate_errors():
    z = np.zeros((4, 4), dtype=np.int64)
    with pytest.raises(ValueError, match="predictions vs"):
        evaluate_label_maps([z], [z, z], 1)
    with pytest.raises(ValueError, match="zero frames"):
        evaluate_label_maps([], [], 1)
    with pytest.raises(ValueError, match="ids outside"):
        evaluate_label_maps([z + 5], [z], num_classes=2)
    with pytest.raises(ValueError, match="protocol"):
        evaluate_label_maps([z], [z], 1, protocol="micro")


def test_class_metrics_json_roundtrip():
    g = np.zeros((4, 4), dtype=np.int64); g[0, :2] = 1; g[2, :3] = 2
    p = np.zeros((4, 4), dtype=np.int64); p[0, 1:3] = 1; p[2, :3] = 2
    res = evaluate_label_maps([p], [g], num_classes=2)
    assert ClassMetrics.from_json(res.to_json()) == res
