import numpy as np
import pytest
from hypothesis import given, strategies as st
from hypothesis.extra import numpy as hnp
from scipy.optimize import minimize
from scipy.spatial.transform import Rotation

from posecast.metrics import (MetricReport, accel_error, mpjpe, mpvpe, pa_mpjpe, per_frame_accel_error,
                              procrustes_align, read_report_text, sequence_metrics, similarity_transform)

coords = st.floats(-1, 1, allow_nan=False, width=64)
cloud = hnp.arrays(np.float64, (14, 3), elements=coords)


def similarity(rng):
    return rng.uniform(0.3, 3.0), Rotation.random(random_state=rng.integers(1 << 31)).as_matrix(), rng.normal(size=3)


def sse(a, b):
    return float(np.sum((a - b) ** 2))


def test_procrustes_matches_numerical_optimum(rng):
    """Oracle: generic optimiser over (rotvec, log scale, translation)."""
    for _ in range(20):
        gt = rng.normal(size=(14, 3))
        pred = gt @ Rotation.random(random_state=rng.integers(1 << 31)).as_matrix().T * 0.7 + rng.normal(
            size=(14, 3)) * 0.2
        ours = sse(procrustes_align(pred, gt), gt)

        def f(x):
            R = Rotation.from_rotvec(x[:3]).as_matrix()
            return sse(np.exp(x[3]) * pred @ R.T + x[4:], gt)
        best = min(minimize(f, np.r_[rng.normal(size=3), 0.0, np.zeros(3)], method="BFGS").fun for _ in range(4))
        assert ours <= best + 1e-9
        assert ours == pytest.approx(best, rel=1e-5, abs=1e-10)


def test_procrustes_recovers_exact_similarity(rng):
    gt = rng.normal(size=(14, 3))
    s, R, t = similarity(rng)
    pred = (gt - t) @ R / s          # gt = s R pred + t
    s2, R2, t2, _ = similarity_transform(pred, gt)
    assert s2 == pytest.approx(s, rel=1e-12)
    np.testing.assert_allclose(R2, R, atol=1e-12)
    np.testing.assert_allclose(procrustes_align(pred, gt), gt, atol=1e-12)


def test_procrustes_never_reflects(rng):
    gt = rng.normal(size=(14, 3))
    mirrored = gt * np.array([-1.0, 1.0, 1.0])
    _, R, _, _ = similarity_transform(mirrored, gt)
    assert np.linalg.det(R) == pytest.approx(1.0)


def test_degenerate_prediction_gets_translation_only():
    gt = np.random.default_rng(0).normal(size=(14, 3))
    out = procrustes_align(np.ones((14, 3)), gt)
    np.testing.assert_allclose(out, np.broadcast_to(gt.mean(0), (14, 3)))


@given(cloud, cloud, st.floats(0.1, 10), hnp.arrays(np.float64, 3, elements=coords),
       hnp.arrays(np.float64, 3, elements=coords))
def test_pa_mpjpe_similarity_invariance(gt, pred, s, rv, t):
    if np.ptp(pred, axis=0).max() < 1e-3:
        return
    R = Rotation.from_rotvec(rv).as_matrix()
    a = pa_mpjpe(pred[None], gt[None])
    b = pa_mpjpe((s * pred @ R.T + t)[None], gt[None])
    assert abs(a - b) <= 1e-8


@given(cloud, cloud)
def test_procrustes_sum_of_squares_never_exceeds_root_alignment(gt, pred):
    # the least-squares statement is a theorem: root alignment is one feasible similarity
    p = pred - pred[0]
    g = gt - gt[0]
    assert sse(procrustes_align(p, g), g) <= sse(p, g) + 1e-9


def test_pa_mpjpe_below_mpjpe_on_noisy_sequences(body, rng):
    from posecast.body import forward_kinematics
    for sigma in (0.02, 0.1, 0.3):
        theta = 0.3 * rng.normal(size=(40, 45, 24, 3))
        beta = rng.normal(size=(40, 1, 10)).repeat(45, axis=1)
        gt, _ = forward_kinematics(body, theta, beta)
        noisy, _ = forward_kinematics(body, theta + sigma * rng.normal(size=theta.shape), beta)
        for p, g in zip(noisy, gt):
            assert pa_mpjpe(p, g, body.eval_joints) <= mpjpe(p, g, body.eval_joints)


def test_pa_mpjpe_can_exceed_mpjpe_for_a_single_outlier():
    # mean-of-distances is not what Procrustes minimises, so the ordering is not a theorem
    gt = np.random.default_rng(0).normal(size=(1, 14, 3)) * 0.3
    gt[0, 0] = 0.0
    pred = gt.copy()
    pred[0, 5, 0] += 0.5
    assert pa_mpjpe(pred, gt) > mpjpe(pred, gt)


def test_mpjpe_hand_computed():
    gt = np.zeros((1, 3, 3))
    pred = np.array([[[0, 0, 0], [0.003, 0.004, 0], [0, 0, 0.010]]], dtype=float)
    assert mpjpe(pred, gt) == pytest.approx((0 + 5 + 10) / 3)


def test_mpjpe_is_root_aligned(rng):
    gt = rng.normal(size=(4, 10, 3))
    assert mpjpe(gt + rng.normal(size=(4, 1, 3)), gt) == pytest.approx(0.0, abs=1e-12)


def test_mpvpe_root_aligned(rng):
    gj, gv = rng.normal(size=(2, 5, 3)), rng.normal(size=(2, 8, 3))
    shift = np.array([1.0, 2.0, 3.0])
    assert mpvpe(gv + shift, gv, gj + shift, gj) == pytest.approx(0.0, abs=1e-12)


def test_accel_zero_for_affine_drift(rng):
    gt = rng.normal(size=(30, 14, 3))
    t = np.arange(30)[:, None, None]
    drift = rng.normal(size=(1, 14, 3)) + t * rng.normal(size=(1, 14, 3))
    # float64 rounding of gt + drift only; about 1e-12 of the drift magnitude
    assert accel_error(gt + drift, gt, fps=25) <= 1e-6
    dyadic = 0.25 + t * np.array([0.5, -0.125, 1.0])
    assert accel_error(np.zeros((30, 1, 3)) + dyadic, np.zeros((30, 1, 3)), fps=25) == 0.0


@pytest.mark.parametrize("c,fps", [(1e-3, 25.0), (2.5e-4, 30.0), (0.02, 1.0)])
def test_accel_quadratic_drift(rng, c, fps):
    gt = rng.normal(size=(40, 14, 3))
    u = rng.normal(size=3)
    u /= np.linalg.norm(u)
    t = np.arange(40)[:, None, None]
    pred = gt + c * t ** 2 * u
    expect = 2 * c * 1000.0 * fps ** 2      # c in meters per frame^2, result in mm/s^2
    got = accel_error(pred, gt, fps=fps)
    assert abs(got - expect) <= 1e-9 * expect


def test_accel_trace_length_and_self_zero(rng):
    gt = rng.normal(size=(12, 5, 3))
    tr = per_frame_accel_error(gt, gt, fps=25)
    assert tr.shape == (10,) and np.all(tr == 0)


def test_accel_needs_three_frames():
    with pytest.raises(ValueError):
        accel_error(np.zeros((2, 3, 3)), np.zeros((2, 3, 3)))


def test_shape_mismatch_rejected():
    with pytest.raises(ValueError):
        mpjpe(np.zeros((2, 3, 3)), np.zeros((2, 4, 3)))


def test_report_text_and_csv_round_trip(tmp_path, rng):
    rows = [sequence_metrics(f"s{i}", rng.normal(size=(10, 24, 3)), rng.normal(size=(10, 24, 3)),
                             rng.normal(size=(10, 8, 3)), rng.normal(size=(10, 8, 3)), 25.0, np.arange(14))
            for i in range(3)]
    rep = MetricReport.aggregate(rows, 25.0, skipped_frames=4)
    txt, csv = rep.write(tmp_path / "r")
    back = read_report_text(txt)
    for k, v in rep.summary().items():
        assert back[k] == v
    lines = csv.read_text().splitlines()
    assert len(lines) == 5 and lines[-1].startswith("ALL,30,")
    assert rep.mpjpe_mm == pytest.approx(np.mean([r.mpjpe_mm for r in rows]))
