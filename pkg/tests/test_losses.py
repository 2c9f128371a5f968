import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from hypothesis.extra import numpy as npst

import balicodec as bc
from balicodec.errors import ValidationError
from balicodec.losses import EPS, field_crop_js, stack_js


def toy_sample(rng, grid=None, n_points=2, with_intermediate=False):
    """A tiny labeled paired sample on a 32x32 grid with 2 landmarks."""
    grid = grid or bc.GridSpec(32, 32)
    pts = rng.uniform(8, grid.width - 9, size=(n_points, 2))
    l = bc.LandmarkSet(bc.Scheme.CUSTOM, pts, grid)
    scheme = bc.BoundaryScheme((tuple(range(n_points)),), n_points)
    stack, comp = bc.encode_composite(l, scheme, r_support=3)
    stages_h = (stack,)
    stages_b = (comp.boundary,)
    if with_intermediate:
        small = bc.GridSpec(16, 16)
        l_small = bc.LandmarkSet(bc.Scheme.CUSTOM, pts / 2.0, small)
        stack_s, comp_s = bc.encode_composite(l_small, scheme, r_support=2)
        stages_h = (stack_s, stack)
        stages_b = (comp_s.boundary, comp.boundary)
    return l, bc.StageOutputs(stages_h, stages_b, comp.field)


def identical_sample(rng, d=None, with_intermediate=False):
    d = d or bc.Disturbance.noise_gaussian(0.05, seed=1)
    l, out = toy_sample(rng, with_intermediate=with_intermediate)
    return bc.SupervisedSample(
        pred=(out, out), gt=(out, out), pred_landmarks=(l, l), gt_landmarks=(l, l), disturbance=d
    )


# ---------------------------------------------------------------------------
# normalize
# ---------------------------------------------------------------------------

def test_normalize_keeps_normalized_maps(rng):
    h = rng.random((8, 8))
    h /= h.sum()
    assert np.abs(bc.normalize(h) - h).max() < 1e-7


def test_normalize_all_zero_gives_uniform():
    out = bc.normalize(np.zeros((4, 4)))
    assert np.allclose(out, 1.0 / 16.0)


def test_normalize_scale_invariant(rng):
    h = rng.random((8, 8))
    assert np.abs(bc.normalize(10.0 * h) - bc.normalize(h)).max() < 1e-9


# ---------------------------------------------------------------------------
# js_divergence
# ---------------------------------------------------------------------------

def test_js_zero_on_identical(rng):
    p = bc.normalize(rng.random((8, 8)))
    assert bc.js_divergence(p, p) == 0.0


def test_js_hand_value():
    # m = (0.75, 0.25); KL(p||m) = ln(4/3); KL(q||m) = (ln(2/3) + ln 2) / 2
    expect = 0.5 * math.log(4 / 3) + 0.5 * (0.5 * math.log(2 / 3) + 0.5 * math.log(2))
    assert math.isclose(expect, 0.21576155433883565, abs_tol=1e-15)
    got = bc.js_divergence(np.array([1.0, 0.0]), np.array([0.5, 0.5]))
    assert abs(got - 0.21576155433883565) < 1e-12


def test_js_disjoint_support_hits_upper_bound():
    p = np.array([1.0, 0.0, 0.0])
    q = np.array([0.0, 0.5, 0.5])
    assert abs(bc.js_divergence(p, q) - math.log(2)) < 1e-12


def test_js_shape_mismatch_rejected():
    with pytest.raises(ValidationError):
        bc.js_divergence(np.ones(3) / 3, np.ones(4) / 4)
    with pytest.raises(ValidationError):
        bc.js_divergence(np.array([2.0, 1.0]), np.array([0.5, 0.5]))


@given(
    a=npst.arrays(np.float64, (8, 8), elements=st.floats(0.0, 1.0)),
    b=npst.arrays(np.float64, (8, 8), elements=st.floats(0.0, 1.0)),
)
@settings(max_examples=100)
def test_js_axioms(a, b):
    p, q = bc.normalize(a), bc.normalize(b)
    js_pq = bc.js_divergence(p, q)
    js_qp = bc.js_divergence(q, p)
    assert abs(js_pq - js_qp) < 1e-12
    assert -1e-15 <= js_pq <= math.log(2) + 1e-12
    # reference computation straight from the definition
    m = 0.5 * (p + q)
    ref = 0.0
    for x, mm in ((p, m), (q, m)):
        for xi, mi in zip(x.ravel(), mm.ravel()):
            if xi > 0:
                ref += 0.5 * xi * math.log(xi / mi)
    assert abs(js_pq - ref) < 1e-10
    if np.abs(p - q).max() < 1e-15:
        assert js_pq < 1e-12


# ---------------------------------------------------------------------------
# loss_org
# ---------------------------------------------------------------------------

def test_loss_org_zero_on_exact_match(rng):
    s = identical_sample(rng)
    w = bc.LossWeights()
    assert bc.loss_org(s.pred, s.gt, w, s.gt_landmarks) == 0.0


def test_loss_org_nonnegative_on_random(rng):
    l, out = toy_sample(rng)
    l2, out2 = toy_sample(rng)
    w = bc.LossWeights()
    assert bc.loss_org((out, out), (out2, out2), w, (l2, l2)) >= 0.0


def test_loss_org_increases_under_single_channel_perturbation(rng):
    l, out = toy_sample(rng)
    w = bc.LossWeights()
    base = bc.loss_org((out, out), (out, out), w, (l, l))
    bumped = out.landmark_stages[0].channels.copy()
    bumped[0] = np.clip(bumped[0] + 0.05, 0.0, 1.0)
    stack = bc.HeatmapStack(bumped, out.landmark_stages[0].grid, bc.HeatmapKind.LANDMARK)
    pred = bc.StageOutputs((stack,), out.boundary_stages, out.field)
    assert bc.loss_org((pred, pred), (out, out), w, (l, l)) > base + 1e-6


def test_loss_org_requires_both_members(rng):
    l, out = toy_sample(rng)
    with pytest.raises(ValidationError):
        bc.loss_org((out,), (out,), bc.LossWeights(), (l,))


# ---------------------------------------------------------------------------
# loss_scl
# ---------------------------------------------------------------------------

def test_loss_scl_zero_when_beta_is_transferred_alpha(rng):
    l, out = toy_sample(rng)
    d = bc.Disturbance.rotate(17.0)
    perm = bc.FlipPermutation(tuple(range(2)))
    bperm = bc.FlipPermutation((0,))
    beta = bc.StageOutputs(
        (bc.transfer_heatmap(d, out.landmark_stages[0], flip_perm=perm),),
        (bc.transfer_heatmap(d, out.boundary_stages[0], flip_perm=bperm),),
        out.field,
    )
    got = bc.loss_scl(out, beta, d, landmark_perm=perm, boundary_perm=bperm)
    assert got < 1e-6


def test_loss_scl_zero_for_texture_on_identical(rng):
    _, out = toy_sample(rng)
    d = bc.Disturbance.noise_salt(0.02, seed=3)
    assert bc.loss_scl(out, out, d) == 0.0


def test_loss_scl_increases_with_extra_rotation(rng):
    l, out = toy_sample(rng)
    d = bc.Disturbance.rotate(17.0)
    perm = bc.FlipPermutation(tuple(range(2)))
    bperm = bc.FlipPermutation((0,))
    beta_stack = bc.transfer_heatmap(d, out.landmark_stages[0], flip_perm=perm)
    beta_bound = bc.transfer_heatmap(d, out.boundary_stages[0], flip_perm=bperm)
    extra = bc.Disturbance.rotate(10.0)
    beta = bc.StageOutputs(
        (bc.transfer_heatmap(extra, beta_stack, flip_perm=perm),),
        (bc.transfer_heatmap(extra, beta_bound, flip_perm=bperm),),
        out.field,
    )
    base = bc.loss_scl(
        out,
        bc.StageOutputs((beta_stack,), (beta_bound,), out.field),
        d,
        landmark_perm=perm,
        boundary_perm=bperm,
    )
    rotated = bc.loss_scl(out, beta, d, landmark_perm=perm, boundary_perm=bperm)
    assert rotated > base + 1e-3


def test_loss_scl_stage_bound_switch(rng):
    _, out = toy_sample(rng, with_intermediate=True)
    d = bc.Disturbance.noise_gaussian(0.05, seed=5)
    _, out_other = toy_sample(rng, with_intermediate=True)
    full = bc.loss_scl(out, out_other, d, include_final=True)
    inter = bc.loss_scl(out, out_other, d, include_final=False)
    assert 0.0 < inter < full


# ---------------------------------------------------------------------------
# loss_coor
# ---------------------------------------------------------------------------

def test_loss_coor_zero_and_hand_value(rng, grid128):
    l = bc.random_landmarks(rng, grid128, n_points=5)
    assert bc.loss_coor(l, l) == 0.0
    pts = l.points.copy()
    pts[2, 0] += 0.1 * (grid128.width - 1)  # 0.1 in normalized units
    moved = l.with_points(pts)
    assert abs(bc.loss_coor(moved, l) - 0.01) < 1e-12


def test_loss_coor_quadratic_homogeneity(rng, grid128):
    gt = bc.random_landmarks(rng, grid128, n_points=7)
    delta = rng.normal(0, 1.0, size=gt.points.shape)
    one = bc.loss_coor(gt.with_points(gt.points + delta), gt)
    two = bc.loss_coor(gt.with_points(gt.points + 2 * delta), gt)
    assert abs(two - 4.0 * one) < 1e-9 * max(1.0, two)


def test_loss_coor_count_mismatch(rng, grid128):
    a = bc.random_landmarks(rng, grid128, n_points=5)
    b = bc.random_landmarks(rng, grid128, n_points=6)
    with pytest.raises(ValidationError):
        bc.loss_coor(a, b)


# ---------------------------------------------------------------------------
# loss_overall / loss_semi
# ---------------------------------------------------------------------------

def test_loss_overall_zero_when_all_components_zero(rng):
    s = identical_sample(rng)
    out = bc.loss_overall(s)
    assert out.total == 0.0
    assert all(v == 0.0 for v in out.breakdown.values())


def test_loss_overall_breakdown_sums_to_total(rng):
    la, pa = toy_sample(rng, with_intermediate=True)
    lb, pb = toy_sample(rng, with_intermediate=True)
    ga, gta = toy_sample(rng, with_intermediate=True)
    gb, gtb = toy_sample(rng, with_intermediate=True)
    s = bc.SupervisedSample(
        pred=(pa, pb),
        gt=(gta, gtb),
        pred_landmarks=(la, lb),
        gt_landmarks=(ga, gb),
        disturbance=bc.Disturbance.noise_salt(0.02, seed=2),
    )
    out = bc.loss_overall(s, bc.LossWeights(1.0, 16.0, 40.0, 4.0))
    assert abs(out.total - sum(out.breakdown.values())) < 1e-9
    assert set(out.breakdown) == {
        "lambda1_final_heatmaps",
        "eta_intermediate_heatmaps",
        "lambda2_field_crops",
        "gamma_coordinates",
        "eta_self_calibrated",
    }


def test_loss_overall_terms_scale_linearly_in_weights(rng):
    la, pa = toy_sample(rng)
    lb, pb = toy_sample(rng)
    s = bc.SupervisedSample(
        pred=(pa, pa),
        gt=(pb, pb),
        pred_landmarks=(la, la),
        gt_landmarks=(lb, lb),
        disturbance=bc.Disturbance.noise_salt(0.02, seed=2),
    )
    one = bc.loss_overall(s, bc.LossWeights(1.0, 1.0, 1.0, 1.0), scl_include_final=True)
    three = bc.loss_overall(s, bc.LossWeights(3.0, 3.0, 3.0, 3.0), scl_include_final=True)
    for key, v in one.breakdown.items():
        assert abs(three.breakdown[key] - 3.0 * v) < 1e-9 * max(1.0, abs(v))


def test_loss_semi_reduces_to_overall_with_no_unlabeled(rng):
    la, pa = toy_sample(rng)
    lb, pb = toy_sample(rng)
    s = bc.SupervisedSample(
        pred=(pa, pa),
        gt=(pb, pb),
        pred_landmarks=(la, la),
        gt_landmarks=(lb, lb),
        disturbance=bc.Disturbance.noise_salt(0.02, seed=2),
    )
    assert bc.loss_semi([s], []) == bc.loss_overall(s).total


def test_loss_semi_unlabeled_contributions(rng):
    _, a1 = toy_sample(rng, with_intermediate=True)
    _, b1 = toy_sample(rng, with_intermediate=True)
    _, a2 = toy_sample(rng, with_intermediate=True)
    d = bc.Disturbance.noise_gaussian(0.05, seed=7)
    # perfectly consistent pair contributes nothing
    assert bc.loss_semi([], [(a1, a1, d)]) == 0.0
    # contributions add across pairs
    one = bc.loss_semi([], [(a1, b1, d)])
    other = bc.loss_semi([], [(a2, b1, d)])
    both = bc.loss_semi([], [(a1, b1, d), (a2, b1, d)])
    assert abs(both - (one + other)) < 1e-12


# ---------------------------------------------------------------------------
# l2 losses
# ---------------------------------------------------------------------------

def test_l2_zero_on_identical(rng):
    _, out = toy_sample(rng)
    d = bc.Disturbance.noise_salt(0.02, seed=1)
    org, scl, scm = bc.l2_losses([out, out], [out, out], [(out, out, d)])
    assert org == scl == scm == 0.0


def test_l2_hand_value_two_by_two():
    grid = bc.GridSpec(8, 8)
    a = np.zeros((1, 8, 8))
    b = np.zeros((1, 8, 8))
    a[0, :2, :2] = 0.5  # differs from b by 0.5 on a 2x2 patch: sum = 4 * 0.25
    sa = bc.HeatmapStack(a, grid, bc.HeatmapKind.LANDMARK)
    sb = bc.HeatmapStack(b, grid, bc.HeatmapKind.LANDMARK)
    zero_b = bc.HeatmapStack(np.zeros((1, 8, 8)), grid, bc.HeatmapKind.BOUNDARY)
    pred = bc.StageOutputs((sa,), (zero_b,))
    gt = bc.StageOutputs((sb,), (zero_b,))
    org, scl, scm = bc.l2_losses([pred], [gt], [], eta=4.0, lam=1.0)
    assert abs(org - 1.0) < 1e-12
    assert scl == 0.0
    assert abs(scm - 1.0) < 1e-12


def test_l2_lambda_zero_ignores_ground_truth(rng):
    _, out = toy_sample(rng)
    _, gt1 = toy_sample(rng)
    _, gt2 = toy_sample(rng)
    _, beta = toy_sample(rng)
    d = bc.Disturbance.blur(2)
    pairs = [(out, beta, d)]
    _, _, scm1 = bc.l2_losses([out], [gt1], pairs, eta=4.0, lam=0.0)
    _, _, scm2 = bc.l2_losses([out], [gt2], pairs, eta=4.0, lam=0.0)
    assert scm1 == scm2 > 0.0


# ---------------------------------------------------------------------------
# attention gate
# ---------------------------------------------------------------------------

def test_attention_gate_limits(rng):
    q = rng.random((4, 8, 8))
    near_zero = bc.attention_gate(q, np.full(q.shape, -1e9))
    assert np.abs(near_zero - q).max() < 1e-6
    half = bc.attention_gate(q, np.zeros(q.shape))
    assert np.allclose(half, 1.5 * q)
    full = bc.attention_gate(q, np.full(q.shape, 1e9))
    assert np.allclose(full, 2.0 * q)


@given(
    q=npst.arrays(np.float64, (3, 5), elements=st.floats(0.0, 10.0)),
    logits=npst.arrays(np.float64, (3, 5), elements=st.floats(-50.0, 50.0)),
)
def test_attention_gate_bounded(q, logits):
    p = bc.attention_gate(q, logits)
    assert np.all(p >= q - 1e-12)
    assert np.all(p <= 2.0 * q + 1e-12)


def test_attention_gate_shape_mismatch():
    with pytest.raises(ValidationError):
        bc.attention_gate(np.zeros((2, 2)), np.zeros((3, 3)))


# ---------------------------------------------------------------------------
# finiteness and crop behavior
# ---------------------------------------------------------------------------

def test_losses_finite_on_arbitrary_finite_input(rng):
    p = bc.normalize(np.zeros((6, 6)))
    q = bc.normalize(rng.random((6, 6)) * 1e6)
    assert np.isfinite(bc.js_divergence(p, q))


def test_field_crop_js_ignores_off_grid_landmarks(rng):
    grid = bc.GridSpec(32, 32)
    pts = np.array([[16.0, 16.0], [-100.0, -100.0]])
    l = bc.LandmarkSet(bc.Scheme.CUSTOM, pts, grid)
    f = bc.encode_field(l, r_support=3)
    assert field_crop_js(f, f, l, r_crop=3) == 0.0


def test_stack_js_shape_mismatch():
    with pytest.raises(ValidationError):
        stack_js(np.zeros((1, 4, 4)), np.zeros((2, 4, 4)))


def test_scl_discriminates_geometry_through_resampling(rng):
    # Beta produced by freshly encoding the transferred landmarks (the way
    # ground truth for the disturbed twin is built) is not bit-equal to the
    # warped alpha tensors, so the loss is resampling-limited rather than
    # zero; it must still sit far below the loss against wrong geometry.
    grid = bc.GridSpec(128, 128)
    face = bc.synthetic_face(rng, grid)
    scheme = bc.default_boundary_scheme(bc.Scheme.IBUG68)
    d = bc.Disturbance.rotate(30.0)
    stack, comp = bc.encode_composite(face, scheme)
    alpha = bc.StageOutputs((stack,), (comp.boundary,), comp.field)

    def encode_of(landmarks):
        s, c = bc.encode_composite(landmarks, scheme)
        return bc.StageOutputs((s,), (c.boundary,), c.field)

    consistent = bc.loss_scl(alpha, encode_of(bc.transfer_landmarks(d, face)), d)
    wrong = bc.loss_scl(
        alpha, encode_of(bc.transfer_landmarks(bc.Disturbance.rotate(40.0), face)), d
    )
    assert 0.0 < consistent < 2.0  # resampling floor, measured well under 1
    assert wrong > 5.0 * consistent
