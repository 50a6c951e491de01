"""Sliding-window inference, the predictions file, and metric reports."""
from __future__ import annotations

import logging
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .body import BodyParams, default_model, forward_kinematics
from .metrics import MetricReport, per_frame_accel_error, sequence_metrics
from .synth import DatasetError, current_offset, window_starts

log = logging.getLogger(__name__)


@dataclass
class SequencePrediction:
    name: str
    frames: np.ndarray      # (F,) 0-based frame indices into the source sequence
    params: BodyParams      # theta (F, J, 3), beta (F, B), cam (F, 3)


@dataclass
class Predictions:
    sequences: list
    fps: float

    def save(self, path):
        arrays = {"fps": np.array(self.fps), "names": np.array([s.name for s in self.sequences])}
        for i, s in enumerate(self.sequences):
            arrays[f"{i}/frames"] = s.frames
            arrays[f"{i}/theta"] = s.params.theta
            arrays[f"{i}/beta"] = s.params.beta
            arrays[f"{i}/cam"] = s.params.cam
        path = Path(path)
        path.parent.mkdir(parents=True, exist_ok=True)
        with open(path, "wb") as fh:
            np.savez(fh, **arrays)
        return path

    @classmethod
    def load(cls, path):
        with np.load(path, allow_pickle=False) as z:
            names = [str(n) for n in z["names"]]
            seqs = [SequencePrediction(n, z[f"{i}/frames"],
                                       BodyParams(z[f"{i}/theta"], z[f"{i}/beta"], z[f"{i}/cam"]))
                    for i, n in enumerate(names)]
            return cls(seqs, float(z["fps"]))


def check_compatible(model, dataset):
    t = model.config.temporal
    if t.feature_dim != dataset.feature_dim:
        raise DatasetError(f"model feature_dim {t.feature_dim} does not match dataset feature_dim "
                           f"{dataset.feature_dim}")
    if (model.regressor.joint_count, model.regressor.shape_dim) != (dataset.joint_count, dataset.shape_dim):
        raise DatasetError(f"model body ({model.regressor.joint_count} joints, {model.regressor.shape_dim} "
                           f"shape) vs dataset ({dataset.joint_count}, {dataset.shape_dim})")


def predict_split(model, dataset, split="eval", limit=None, batch=256):
    """One integrated estimate per frame that has full window context (stride 1)."""
    check_compatible(model, dataset)
    T = model.config.temporal.seq_len
    c = current_offset(T)
    out = []
    seqs = dataset.sequences(split)[:limit]
    for motion, feats in seqs:
        starts = window_starts(len(motion), T, 1)
        if not len(starts):
            log.warning("%s: shorter than the window, no predictions", motion.name)
            continue
        win = np.stack([feats.features[s:s + T] for s in starts])
        parts = []
        for b in range(0, len(win), batch):
            pred, _ = model.predict(win[b:b + batch])
            parts.append(pred.to_params())
        params = BodyParams(*(np.concatenate([getattr(p, k) for p in parts]) for k in ("theta", "beta", "cam")))
        out.append(SequencePrediction(motion.name, starts + c, params))
    return Predictions(out, dataset.fps)


def ground_truth_predictions(dataset, split="eval", T=16):
    """The oracle: ground-truth parameters on the frames the model would predict."""
    c = current_offset(T)
    out = []
    for motion, _ in dataset.sequences(split):
        frames = window_starts(len(motion), T, 1) + c
        out.append(SequencePrediction(motion.name, frames, motion.params[frames]))
    return Predictions(out, dataset.fps)


def evaluate_predictions(preds, dataset, split="eval", body=None):
    body = body or default_model()
    gt = {m.name: m for m, _ in dataset.sequences(split)}
    rows, skipped = [], 0
    for sp in preds.sequences:
        if sp.name not in gt:
            raise DatasetError(f"prediction for unknown sequence {sp.name!r}")
        m = gt[sp.name]
        skipped += len(m) - len(sp.frames)
        pj, pv = forward_kinematics(body, sp.params.theta, sp.params.beta)
        rows.append(sequence_metrics(sp.name, pj, m.joints[sp.frames], pv, m.vertices[sp.frames],
                                     dataset.fps, body.eval_joints))
    return MetricReport.aggregate(rows, dataset.fps, skipped_frames=skipped)


def evaluate(model, dataset, split="eval", limit=None):
    """Returns ``(MetricReport, Predictions)``."""
    preds = predict_split(model, dataset, split, limit)
    return evaluate_predictions(preds, dataset, split), preds


def accel_traces(preds, dataset, split="eval", body=None):
    """Per-frame acceleration error (mm/s^2) per sequence: {name: (frames, values)}."""
    body = body or default_model()
    gt = {m.name: m for m, _ in dataset.sequences(split)}
    out = {}
    for sp in preds.sequences:
        m = gt[sp.name]
        pj, _ = forward_kinematics(body, sp.params.theta, sp.params.beta, with_vertices=False)
        g = m.joints[sp.frames]
        p = pj - pj[:, :1]
        g = g - g[:, :1]
        vals = per_frame_accel_error(p, g, fps=dataset.fps, joints=body.eval_joints)
        out[sp.name] = (sp.frames[1:-1], vals)
    return out


def spike_count(values, ratio=3.0):
    """Frames whose value exceeds ``ratio`` times the trace median."""
    values = np.asarray(values)
    return int(np.sum(values > ratio * np.median(values)))


def export_plotdata(traces_by_method, path):
    """Text table, one row per frame per method: method, sequence, frame, accel."""
    lines = ["method\tsequence\tframe\taccel_err_mm_s2"]
    for method, traces in traces_by_method.items():
        for name, (frames, vals) in traces.items():
            lines += [f"{method}\t{name}\t{int(f)}\t{float(v)!r}" for f, v in zip(frames, vals)]
    Path(path).parent.mkdir(parents=True, exist_ok=True)
    Path(path).write_text("\n".join(lines) + "\n")
    return path
