import json
import math

import numpy as np
import pytest

from posecast.ablation import AblationResult, RunRecord, ablate, run_one
from posecast.body import BodyParams
from posecast.config import ConfigError, RunConfig, load_config, save_config
from posecast.evaluate import (Predictions, SequencePrediction, accel_traces, evaluate, evaluate_predictions,
                               export_plotdata, ground_truth_predictions, predict_split, spike_count)
from posecast.gradcheck import tiny_run_config
from posecast.metrics import accel_error
from posecast.model import CheckpointError, TemporalPoseModel, load_checkpoint, save_checkpoint
from posecast.optim import Adam, PlateauSchedule
from posecast.smoothing import slerp_average, smooth_params, smooth_predictions
from posecast.synth import DatasetError, SynthConfig, current_offset, generate_dataset
from posecast.train import TrainingAborted, WindowSampler, train, train_step


def small_config(**temporal):
    cfg = tiny_run_config(feature_dim=128, **temporal)
    cfg.epochs, cfg.batch_size, cfg.window_stride, cfg.lr = 2, 16, 4, 1e-3
    return cfg.validate()


@pytest.fixture(scope="module")
def data():
    return generate_dataset(SynthConfig(n_train=6, n_val=2, n_eval=3, frames=24), 3)


@pytest.fixture(scope="module")
def trained(data):
    return train(small_config(), data)


def test_sampler_counts_and_targets(data):
    a = data.arrays("train")
    s = WindowSampler(a, 6)
    assert len(s) == 6 * (24 - 6 + 1)
    feats, tg = s.batch(np.array([0, 20]))
    seq, start = s.index[20]
    c = start + current_offset(6)
    np.testing.assert_array_equal(feats[1], a.features[seq, start:start + 6])
    np.testing.assert_array_equal(tg["current"].joints[1], a.joints[seq, c])
    np.testing.assert_array_equal(tg["prev"].beta[1], a.beta[seq, c - 1])
    np.testing.assert_array_equal(tg["next"].cam[1], a.cam[seq, c + 1])


def test_epoch_subset_size(data):
    s = WindowSampler(data.arrays("train"), 6)
    order = s.epoch_order(np.random.default_rng(0), 4)
    assert len(order) == math.ceil(len(s) / 4)
    assert len(np.unique(order)) == len(order)


def _fixed_batch(data, cfg):
    s = WindowSampler(data.arrays("train"), cfg.temporal.seq_len)
    return s.batch(np.arange(16))


def test_zero_lr_leaves_weights_bit_identical(data, body):
    cfg = small_config()
    cfg.lr = 0.0
    model = TemporalPoseModel(cfg, data.joint_count, data.shape_dim, data.mean_params)
    before = model.state_dict()
    opt = Adam(model.named_parameters(), lr=0.0)
    feats, tg = _fixed_batch(data, cfg)
    for _ in range(3):
        train_step(model, opt, feats, tg, body)
    after = model.state_dict()
    for k in before:
        np.testing.assert_array_equal(before[k], after[k])


def test_loss_decreases_on_fixed_batch(data, body):
    cfg = small_config()
    model = TemporalPoseModel(cfg, data.joint_count, data.shape_dim, data.mean_params)
    opt = Adam(model.named_parameters(), lr=1e-3)
    feats, tg = _fixed_batch(data, cfg)
    losses = [train_step(model, opt, feats, tg, body)[0] for _ in range(11)]
    assert all(b < a for a, b in zip(losses, losses[1:]))
    assert losses[10] < 0.9 * losses[0]


def test_plateau_drops_on_flat_validation(data):
    cfg = small_config()
    cfg.epochs, cfg.plateau_patience, cfg.window_stride = 11, 5, 50
    res = train(cfg, data, val_hook=lambda epoch: 1.0)
    assert res.lr_drops == [5, 10]
    lrs = [row["lr_next"] for row in res.log]
    assert lrs[4] == pytest.approx(1e-3) and lrs[5] == pytest.approx(1e-4) and lrs[10] == pytest.approx(1e-5)
    assert res.best_epoch == 0


def test_plateau_schedule_resets_on_improvement():
    s = PlateauSchedule(1.0, patience=2, factor=0.5)
    lrs = [s.observe(v, e) for e, v in enumerate([3, 3, 2, 2, 2, 2])]
    assert lrs == [1.0, 1.0, 1.0, 1.0, 0.5, 0.5]


def test_ground_truth_oracle_scores_zero(data):
    preds = ground_truth_predictions(data, "eval", T=16)
    rep = evaluate_predictions(preds, data, "eval")
    assert rep.mpjpe_mm == 0 and rep.pa_mpjpe_mm == pytest.approx(0, abs=1e-9)
    assert rep.mpvpe_mm == 0 and rep.accel_err_mm_s2 == 0
    assert rep.frame_count == 3 * (24 - 16 + 1)
    assert rep.skipped_frames == 3 * 15


def test_eval_frame_count_and_branches(data, trained):
    model = trained.model
    model.regressor.calls.clear()
    rep, preds = evaluate(model, data, "eval")
    assert rep.frame_count == sum(len(m) - 6 + 1 for m, _ in data.sequences("eval"))
    assert set(model.regressor.calls) == {"int"}
    c = current_offset(6)
    np.testing.assert_array_equal(preds.sequences[0].frames, np.arange(24 - 5) + c)


def test_unknown_sequence_rejected(data):
    bad = Predictions([SequencePrediction("nope", np.arange(2), data.sequences("eval")[0][0].params[:2])], 25.0)
    with pytest.raises(DatasetError):
        evaluate_predictions(bad, data, "eval")


def test_training_is_deterministic(data, trained):
    again = train(small_config(), data)
    for k, v in trained.best_state.items():
        np.testing.assert_array_equal(v, again.best_state[k])
    assert [r["train_loss"] for r in trained.log] == [r["train_loss"] for r in again.log]
    a = evaluate(trained.model, data)[0].to_text()
    b = evaluate(again.model, data)[0].to_text()
    assert a == b


def test_seed_changes_weights(data, trained):
    cfg = small_config()
    cfg.seed = 1
    other = train(cfg, data)
    k = next(iter(trained.best_state))
    assert not np.array_equal(trained.best_state[k], other.best_state[k])


def test_checkpoint_round_trip(data, trained, tmp_path):
    opt = Adam(trained.model.named_parameters(), lr=5e-4)
    path = save_checkpoint(tmp_path / "c.npz", trained.model, opt, epoch=3, best_val=12.5)
    model, meta, opt_arrays = load_checkpoint(path)
    for k, v in trained.model.state_dict().items():
        np.testing.assert_array_equal(v, model.state_dict()[k])
    assert meta["epoch"] == 3 and meta["best_val_pa_mpjpe"] == 12.5 and meta["opt_lr"] == 5e-4
    assert model.config == trained.model.config
    assert set(opt_arrays) == set(opt.state_arrays())
    np.testing.assert_array_equal(model.mean_params.theta, data.mean_params.theta)
    p1 = predict_split(trained.model, data).sequences[0].params.theta
    p2 = predict_split(model, data).sequences[0].params.theta
    np.testing.assert_array_equal(p1, p2)
    save_checkpoint(tmp_path / "d.npz", model, opt, epoch=3, best_val=12.5)
    assert (tmp_path / "d.npz").read_bytes() == path.read_bytes()


def test_checkpoint_version_rejected(trained, tmp_path):
    path = save_checkpoint(tmp_path / "c.npz", trained.model)
    with np.load(path) as z:
        arrays = {k: z[k] for k in z.files}
    meta = json.loads(str(arrays["meta"]))
    meta["version"] = 999
    arrays["meta"] = np.array(json.dumps(meta))
    np.savez(tmp_path / "bad.npz", **arrays)
    with pytest.raises(CheckpointError):
        load_checkpoint(tmp_path / "bad.npz")


def test_checkpoint_written_by_train(data, tmp_path):
    res = train(small_config(), data, out_dir=tmp_path)
    model, meta, _ = load_checkpoint(res.checkpoint)
    assert meta["epoch"] == res.best_epoch
    for k, v in res.best_state.items():
        np.testing.assert_array_equal(v, model.state_dict()[k])


def test_feature_dim_mismatch_rejected(data):
    cfg = tiny_run_config()   # feature_dim 8
    with pytest.raises(DatasetError, match="8"):
        train(cfg, data)


def test_non_finite_training_aborts(data):
    cfg = small_config()
    cfg.lr = 1e300
    cfg.max_bad_batches = 2
    with np.errstate(all="ignore"), pytest.raises(TrainingAborted):
        train(cfg, data)


def test_too_short_sequences_abort():
    short = generate_dataset(SynthConfig(n_train=2, n_val=1, n_eval=1, frames=10), 0)
    with pytest.raises(TrainingAborted, match="no training windows"):
        train(RunConfig(epochs=1), short)


def test_predictions_round_trip(trained, data, tmp_path):
    preds = predict_split(trained.model, data)
    back = Predictions.load(preds.save(tmp_path / "p.npz"))
    assert back.fps == preds.fps
    for a, b in zip(preds.sequences, back.sequences):
        assert a.name == b.name
        np.testing.assert_array_equal(a.frames, b.frames)
        np.testing.assert_array_equal(a.params.theta, b.params.theta)
        np.testing.assert_array_equal(a.params.cam, b.params.cam)


def test_export_plotdata(trained, data, tmp_path):
    preds = predict_split(trained.model, data)
    traces = accel_traces(preds, data)
    path = export_plotdata({"model": traces, "oracle": accel_traces(ground_truth_predictions(data, T=6), data)},
                           tmp_path / "p.tsv")
    lines = path.read_text().splitlines()
    assert lines[0].split("\t") == ["method", "sequence", "frame", "accel_err_mm_s2"]
    n = sum(len(v) for _, v in traces.values())
    assert len(lines) == 1 + 2 * n
    assert all(float(line.split("\t")[3]) == 0 for line in lines if line.startswith("oracle"))
    assert spike_count(np.array([1, 1, 1, 10.0])) == 1


# smoothing


def _params(theta):
    n = len(theta)
    return BodyParams(theta, np.zeros((n, 10)), np.tile([0.9, 0.0, 0.0], (n, 1)))


def test_smooth_window_one_is_identity(rng):
    p = _params(rng.normal(size=(12, 24, 3)))
    out = smooth_params(p, 1)
    np.testing.assert_array_equal(out.theta, p.theta)


@pytest.mark.parametrize("window", [0, 2, 4, -3])
def test_smooth_rejects_bad_window(rng, window):
    with pytest.raises(ValueError, match="odd"):
        smooth_params(_params(rng.normal(size=(5, 24, 3))), window)


def test_smooth_constant_sequence_unchanged(rng):
    theta = np.tile(0.5 * rng.normal(size=(24, 3)), (10, 1, 1))
    out = smooth_params(_params(theta), 5)
    np.testing.assert_allclose(out.theta, theta, atol=1e-12)


def test_slerp_average_of_two_is_midpoint():
    from posecast.rotations import axis_angle_to_quaternion, quaternion_to_axis_angle
    q = axis_angle_to_quaternion(np.array([[0, 0, 0.0], [0, 0, 1.0]]))
    np.testing.assert_allclose(quaternion_to_axis_angle(slerp_average(q)), [0, 0, 0.5], atol=1e-12)
    q3 = axis_angle_to_quaternion(np.array([[0, 0, 0.0], [0, 0, 0.3], [0, 0, 0.9]]))
    np.testing.assert_allclose(quaternion_to_axis_angle(slerp_average(q3)), [0, 0, 0.4], atol=1e-12)


def test_smoothing_reduces_jitter(data, body):
    from posecast.body import forward_kinematics
    m = data.sequences("eval")[0][0]
    rng = np.random.default_rng(0)
    noisy = BodyParams(m.params.theta + 0.05 * rng.normal(size=m.params.theta.shape), m.params.beta, m.params.cam)
    sm = smooth_params(noisy, 5)
    j_noisy = forward_kinematics(body, noisy.theta, noisy.beta, with_vertices=False)[0]
    j_sm = forward_kinematics(body, sm.theta, sm.beta, with_vertices=False)[0]
    assert accel_error(j_sm, m.joints, 25) < 0.5 * accel_error(j_noisy, m.joints, 25)


def test_smoothing_edges_shrink_symmetrically(rng):
    theta = 0.3 * rng.normal(size=(7, 24, 3))
    out = smooth_params(_params(theta), 5)
    np.testing.assert_allclose(out.theta[0], theta[0], atol=1e-12)
    np.testing.assert_allclose(out.theta[-1], theta[-1], atol=1e-12)
    ref = smooth_params(_params(theta[:3]), 3).theta[1]
    np.testing.assert_allclose(out.theta[1], ref, atol=1e-12)


def test_smooth_predictions_requires_contiguous(data):
    p = data.sequences("eval")[0][0].params
    preds = Predictions([SequencePrediction("s", np.array([0, 1, 3]), p[:3])], 25.0)
    with pytest.raises(ValueError, match="contiguous"):
        smooth_predictions(preds, 3)


# config


def test_config_round_trip(tmp_path):
    cfg = RunConfig().replace(**{"temporal.use_residual": True, "lr": 2e-3, "loss.supervision_target": "adjacent"})
    save_config(cfg, tmp_path / "c.json")
    back = load_config(tmp_path / "c.json")
    assert back == cfg
    assert back.temporal.use_residual and back.loss.supervision_target == "adjacent"


@pytest.mark.parametrize("doc,match", [
    ({"lr": -1.0}, "lr"),
    ({"epochs": 0}, "epochs"),
    ({"plateau_factor": 1.5}, "plateau_factor"),
    ({"temporal": {"seq_len": 3}}, "seq_len"),
    ({"bogus": 1}, "unknown"),
    ({"temporal": {"bogus": 1}}, "unknown"),
])
def test_config_validation(tmp_path, doc, match):
    (tmp_path / "c.json").write_text(json.dumps(doc))
    with pytest.raises(ConfigError, match=match):
        load_config(tmp_path / "c.json")


def test_replace_rejects_unknown_key():
    with pytest.raises(ConfigError):
        RunConfig().replace(**{"temporal.nope": 1})


# ablation bookkeeping


def test_ablation_marks_failed_cells():
    res = AblationResult([
        RunRecord("a", 0, {"pa_mpjpe_mm": 1.0, "mpjpe_mm": 2.0, "mpvpe_mm": 3.0, "accel_err_mm_s2": 4.0}),
        RunRecord("a", 1, {"pa_mpjpe_mm": 3.0, "mpjpe_mm": 2.0, "mpvpe_mm": 3.0, "accel_err_mm_s2": 4.0}),
        RunRecord("b", 0, error="TrainingAborted: boom"),
    ])
    assert res.stats("a", "pa_mpjpe_mm") == (2.0, pytest.approx(np.sqrt(2)))
    assert res.stats("b", "pa_mpjpe_mm") is None and math.isnan(res.mean("b", "mpjpe_mm"))
    table = res.table().splitlines()
    assert "failed" in table[3] and "failed" not in table[2]
    back = AblationResult.from_json(res.to_json())
    assert back.runs == res.runs


def test_run_one_captures_failure(data):
    rec = run_one(small_config(), {"temporal.feature_dim": 8}, "broken", 0, data)
    assert rec.metrics is None and "DatasetError" in rec.error


def test_ablate_writes_outputs(data, tmp_path):
    cfg = small_config(hidden_dim=64)
    cfg.epochs = 1
    variants = {"+res -PF": {"temporal.use_residual": True, "temporal.poseforecast": False}}
    res = ablate(cfg, data, seeds=(0,), variants=variants, out_dir=tmp_path)
    assert res.runs[0].error is None
    for f in ("ablation.json", "ablation.txt", "manifest.json", "+res_-PF/seed0/report.txt",
              "+res_-PF/seed0/predictions.npz", "+res_-PF/seed0/manifest.json"):
        assert (tmp_path / f).exists(), f
    assert AblationResult.from_json((tmp_path / "ablation.json").read_text()).runs == res.runs
