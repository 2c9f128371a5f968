import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

import balicodec as bc
from balicodec.errors import ValidationError


def ibug_pair(rng, grid=None):
    grid = grid or bc.GridSpec(128, 128)
    gt = bc.synthetic_face(rng, grid)
    pred = gt.with_points(gt.points + rng.normal(0, 0.5, gt.points.shape))
    return pred, gt


# ---------------------------------------------------------------------------
# nme
# ---------------------------------------------------------------------------

def test_nme_zero_on_identical(rng):
    pred, gt = ibug_pair(rng)
    assert bc.nme(gt, gt, bc.Normalization(bc.NormKind.INTEROCULAR)) == 0.0


def test_nme_definition_two_points():
    grid = bc.GridSpec(128, 128)
    box = bc.Normalization(bc.NormKind.BOX_GEOMEAN, (0.0, 0.0, 25.0, 25.0))  # d = 25
    gt = bc.LandmarkSet(bc.Scheme.CUSTOM, np.array([[10.0, 10.0], [50.0, 50.0]]), grid)
    pred = gt.with_points(gt.points + np.array([[25.0, 0.0], [0.0, 25.0]]))
    assert abs(bc.nme(pred, gt, box) - 1.0) < 1e-12


def test_nme_interocular_hand_case(rng):
    # interocular distance forced to 50 px, every landmark shifted by (3, 4)
    grid = bc.GridSpec(128, 128)
    gt = bc.synthetic_face(rng, grid)
    pts = gt.points.copy()
    pts[36] = (30.0, 60.0)
    pts[45] = (80.0, 60.0)
    gt = gt.with_points(pts)
    pred = gt.with_points(gt.points + np.array([3.0, 4.0]))
    got = bc.nme(pred, gt, bc.Normalization(bc.NormKind.INTEROCULAR))
    assert abs(got - 0.1) < 1e-12


def test_nme_interpupil_uses_eye_centroids():
    grid = bc.GridSpec(128, 128)
    pts = np.zeros((68, 2))
    pts[36:42] = [40.0, 60.0]  # left eye centroid
    pts[42:48] = [88.0, 60.0]  # right eye centroid: d = 48
    gt = bc.LandmarkSet(bc.Scheme.IBUG68, pts, grid)
    pred = gt.with_points(gt.points + np.array([0.0, 4.8]))
    got = bc.nme(pred, gt, bc.Normalization(bc.NormKind.INTERPUPIL))
    assert abs(got - 0.1) < 1e-12


def test_nme_box_diag():
    grid = bc.GridSpec(128, 128)
    norm = bc.Normalization(bc.NormKind.BOX_DIAG, (0.0, 0.0, 30.0, 40.0))  # d = 50
    gt = bc.LandmarkSet(bc.Scheme.CUSTOM, np.array([[10.0, 10.0]]), grid)
    pred = gt.with_points(gt.points + np.array([[3.0, 4.0]]))
    assert abs(bc.nme(pred, gt, norm) - 0.1) < 1e-12


def test_nme_other_schemes_define_eyes():
    grid = bc.GridSpec(128, 128)
    for scheme, n in ((bc.Scheme.WFLW98, 98), (bc.Scheme.AFLW19, 19)):
        pts = np.linspace(10, 100, 2 * n).reshape(n, 2)
        gt = bc.LandmarkSet(scheme, pts, grid)
        d = bc.Normalization(bc.NormKind.INTEROCULAR).distance(gt)
        assert d > 0


def test_nme_degenerate_distance_rejected():
    grid = bc.GridSpec(128, 128)
    gt = bc.LandmarkSet(bc.Scheme.IBUG68, np.zeros((68, 2)), grid)
    with pytest.raises(ValidationError):
        bc.nme(gt, gt, bc.Normalization(bc.NormKind.INTEROCULAR))


def test_nme_count_mismatch_rejected(rng):
    grid = bc.GridSpec(128, 128)
    a = bc.random_landmarks(rng, grid, n_points=5)
    b = bc.random_landmarks(rng, grid, n_points=6)
    with pytest.raises(ValidationError):
        bc.nme(a, b, bc.Normalization(bc.NormKind.BOX_DIAG, (0, 0, 10, 10)))


def test_normalization_requires_box():
    with pytest.raises(ValidationError):
        bc.Normalization(bc.NormKind.BOX_GEOMEAN)
    with pytest.raises(ValidationError):
        bc.Normalization(bc.NormKind.BOX_DIAG, (0.0, 0.0, -5.0, 10.0))


def test_nme_similarity_invariance(rng):
    pred, gt = ibug_pair(rng)
    base = bc.nme(pred, gt, bc.Normalization(bc.NormKind.INTEROCULAR))
    t = (
        bc.AffineTransform.translation(7.0, -4.0)
        .compose(bc.AffineTransform.rotation(23.0, (63.5, 63.5)))
        .compose(bc.AffineTransform.scaling(1.7, (0.0, 0.0)))
    )
    moved = bc.nme(
        bc.apply_affine(t, pred), bc.apply_affine(t, gt), bc.Normalization(bc.NormKind.INTEROCULAR)
    )
    assert abs(moved - base) < 1e-9 * max(base, 1.0)


# ---------------------------------------------------------------------------
# auc / failure_rate
# ---------------------------------------------------------------------------

def test_auc_extremes():
    assert bc.auc([0.0, 0.0, 0.0], 0.08) == 1.0
    assert bc.auc([0.09, 0.5, 1.0], 0.08) == 0.0


def test_auc_hand_case_step_integration():
    # CDF is 0.5 on [0.02, 0.06) and 1.0 on [0.06, 0.08]:
    # area = 0.04 * 0.5 + 0.02 * 1.0 = 0.04; AUC = 0.04 / 0.08
    assert abs(bc.auc([0.02, 0.06], 0.08) - 0.5) < 1e-12


@given(
    errors=st.lists(st.floats(0.0, 0.3), min_size=1, max_size=40),
    tau=st.floats(0.01, 0.2),
)
@settings(max_examples=60)
def test_auc_matches_riemann_oracle(errors, tau):
    got = bc.auc(errors, tau)
    xs = (np.arange(20001) + 0.5) / 20001 * tau
    cdf = (np.asarray(errors)[None, :] <= xs[:, None]).mean(axis=1)
    assert abs(got - cdf.mean()) < 5e-4


@given(errors=st.lists(st.floats(0.0, 0.3), min_size=1, max_size=20))
def test_auc_monotone_in_single_error(errors):
    base = bc.auc(errors, 0.1)
    worse = list(errors)
    worse[0] = worse[0] + 0.05
    assert bc.auc(worse, 0.1) <= base + 1e-12
    assert bc.failure_rate(worse, 0.1) >= bc.failure_rate(errors, 0.1) - 1e-12


def test_failure_rate_cases():
    assert bc.failure_rate([0.0, 0.0], 0.1) == 0.0
    assert abs(bc.failure_rate([0.03, 0.05, 0.12], 0.10) - 1.0 / 3.0) < 1e-12
    # strict inequality: an error exactly at tau is not a failure
    assert bc.failure_rate([0.1, 0.1], 0.1) == 0.0


def test_empty_lists_rejected():
    with pytest.raises(ValidationError):
        bc.auc([], 0.1)
    with pytest.raises(ValidationError):
        bc.failure_rate([], 0.1)


# ---------------------------------------------------------------------------
# evaluate
# ---------------------------------------------------------------------------

def test_evaluate_identical_lists(rng):
    gts = [ibug_pair(rng)[1] for _ in range(5)]
    report = bc.evaluate(gts, gts, bc.Normalization(bc.NormKind.INTEROCULAR), tau=0.08)
    assert report.mean_nme == 0.0
    assert report.auc == 1.0
    assert report.fr == 0.0


def test_evaluate_report_recomputes(rng):
    preds, gts = zip(*(ibug_pair(rng) for _ in range(6)))
    report = bc.evaluate(list(preds), list(gts), bc.Normalization(bc.NormKind.INTEROCULAR))
    assert report.mean_nme == pytest.approx(np.mean(report.per_sample_nme), abs=1e-15)
    assert report.auc == pytest.approx(bc.auc(report.per_sample_nme, report.tau), abs=1e-15)
    assert report.fr == pytest.approx(
        bc.failure_rate(report.per_sample_nme, report.tau), abs=1e-15
    )


def test_evaluate_length_mismatch(rng):
    pred, gt = ibug_pair(rng)
    with pytest.raises(ValidationError):
        bc.evaluate([pred], [gt, gt], bc.Normalization(bc.NormKind.INTEROCULAR))


def test_evaluate_round_trip_suite(rng):
    # encode -> decode of synthetic faces scored end to end
    grid = bc.GridSpec(128, 128)
    preds, gts = [], []
    for _ in range(50):
        face = bc.synthetic_face(rng, grid)
        stack = bc.render_landmark_heatmaps(face, bc.KernelSpec.gaussian(1.5))
        field = bc.encode_field(face, r_support=5)
        preds.append(bc.decode_all(stack, field, bc.DecodeConfig(3)).landmarks)
        gts.append(face)
    report = bc.evaluate(preds, gts, bc.Normalization(bc.NormKind.INTEROCULAR), tau=0.08)
    assert report.mean_nme < 1e-5
    assert report.auc > 1.0 - 1e-9
    assert report.fr == 0.0
