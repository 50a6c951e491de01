"""Per-frame and temporal error metrics.

Inputs are in meters; reported values are in millimeters.  All joint sets
are root-aligned (joint 0 of the full skeleton) before any subset is taken.
"""
from __future__ import annotations

import csv
import io
import logging
from dataclasses import asdict, dataclass, field
from pathlib import Path

import numpy as np

log = logging.getLogger(__name__)

M_TO_MM = 1000.0


def similarity_transform(pred, gt):
    """Closed-form least-squares similarity (scale, R, t) mapping ``pred`` onto ``gt``.

    pred, gt: (N, 3).  Returns ``(scale, R, t, degenerate)``; a degenerate
    prediction (all points equal) gets a translation-only fit.
    """
    pred = np.asarray(pred, dtype=np.float64)
    gt = np.asarray(gt, dtype=np.float64)
    if pred.shape != gt.shape or pred.ndim != 2:
        raise ValueError(f"procrustes: shapes {pred.shape} and {gt.shape} differ")
    if pred.shape[0] < 3:
        raise ValueError(f"procrustes: need at least 3 points, got {pred.shape[0]}")
    mu_p = pred.mean(axis=0)
    mu_g = gt.mean(axis=0)
    X = pred - mu_p
    Y = gt - mu_g
    var = np.sum(X * X)
    if var < 1e-24:
        return 0.0, np.eye(3), mu_g, True
    K = X.T @ Y
    U, s, Vt = np.linalg.svd(K)
    Z = np.eye(3)
    Z[-1, -1] = np.sign(np.linalg.det(Vt.T @ U.T)) or 1.0
    R = Vt.T @ Z @ U.T
    scale = np.trace(R @ K) / var
    t = mu_g - scale * R @ mu_p
    return scale, R, t, False


def procrustes_align(pred, gt):
    scale, R, t, degenerate = similarity_transform(pred, gt)
    if degenerate:
        log.debug("procrustes: degenerate prediction, translation-only alignment")
        return np.broadcast_to(t, np.shape(pred)).copy()
    return scale * np.asarray(pred) @ R.T + t


def _root_align(x, root=0):
    x = np.asarray(x, dtype=np.float64)
    return x - x[..., root:root + 1, :]


def per_frame_mpjpe(pred, gt, joints=None):
    """Mean joint error per frame (mm).  pred, gt: (F, J, 3) meters."""
    pred, gt = np.asarray(pred), np.asarray(gt)
    if pred.shape != gt.shape:
        raise ValueError(f"mpjpe: prediction {pred.shape} vs ground truth {gt.shape}")
    p, g = _root_align(pred), _root_align(gt)
    if joints is not None:
        p, g = p[..., joints, :], g[..., joints, :]
    return np.linalg.norm(p - g, axis=-1).mean(axis=-1) * M_TO_MM


def mpjpe(pred, gt, joints=None):
    return float(np.mean(per_frame_mpjpe(pred, gt, joints)))


def mpvpe(pred_verts, gt_verts, pred_joints, gt_joints):
    """Vertex error after the same root alignment as the joints (mm)."""
    pv, gv = np.asarray(pred_verts), np.asarray(gt_verts)
    if pv.shape != gv.shape:
        raise ValueError(f"mpvpe: prediction {pv.shape} vs ground truth {gv.shape}")
    pv = pv - np.asarray(pred_joints)[..., 0:1, :]
    gv = gv - np.asarray(gt_joints)[..., 0:1, :]
    return float(np.linalg.norm(pv - gv, axis=-1).mean() * M_TO_MM)


def per_frame_pa_mpjpe(pred, gt, joints=None):
    pred, gt = np.asarray(pred), np.asarray(gt)
    if pred.shape != gt.shape:
        raise ValueError(f"pa-mpjpe: prediction {pred.shape} vs ground truth {gt.shape}")
    if joints is not None:
        pred, gt = pred[..., joints, :], gt[..., joints, :]
    flat_p = pred.reshape(-1, pred.shape[-2], 3)
    flat_g = gt.reshape(-1, gt.shape[-2], 3)
    errs = np.array([
        np.linalg.norm(procrustes_align(p, g) - g, axis=-1).mean() for p, g in zip(flat_p, flat_g)
    ])
    return errs.reshape(pred.shape[:-2]) * M_TO_MM


def pa_mpjpe(pred, gt, joints=None):
    return float(np.mean(per_frame_pa_mpjpe(pred, gt, joints)))


def second_difference(x):
    x = np.asarray(x, dtype=np.float64)
    return x[2:] - 2.0 * x[1:-1] + x[:-2]


def per_frame_accel_error(pred, gt, fps=1.0, joints=None):
    """Acceleration error at each interior frame, mm/s^2 (mm/frame^2 when fps=1).

    pred, gt: (F, J, 3) meters, F >= 3.  Result has length F - 2.
    """
    pred, gt = np.asarray(pred), np.asarray(gt)
    if pred.shape != gt.shape:
        raise ValueError(f"accel: prediction {pred.shape} vs ground truth {gt.shape}")
    if pred.shape[0] < 3:
        raise ValueError(f"accel: need at least 3 frames, got {pred.shape[0]}")
    if joints is not None:
        pred, gt = pred[:, joints], gt[:, joints]
    diff = second_difference(pred) - second_difference(gt)
    return np.linalg.norm(diff, axis=-1).mean(axis=-1) * M_TO_MM * fps * fps


def accel_error(pred, gt, fps=1.0, joints=None):
    return float(np.mean(per_frame_accel_error(pred, gt, fps, joints)))


@dataclass
class SequenceMetrics:
    sequence: str
    frames: int
    mpjpe_mm: float
    pa_mpjpe_mm: float
    mpvpe_mm: float
    accel_err_mm_s2: float
    accel_err_mm_frame2: float


def sequence_metrics(name, pred_joints, gt_joints, pred_verts, gt_verts, fps, eval_joints):
    """All metrics for one time-aligned sequence of predictions (meters in, mm out)."""
    frames = len(pred_joints)
    mv = float("nan")
    if pred_verts is not None and np.asarray(pred_verts).shape[-2] > 0:
        mv = mpvpe(pred_verts, gt_verts, pred_joints, gt_joints)
    acc = float("nan")
    if frames >= 3:
        # accel on root-aligned eval joints, as for the position errors
        p = _root_align(pred_joints)
        g = _root_align(gt_joints)
        acc = accel_error(p, g, fps=1.0, joints=eval_joints)
    return SequenceMetrics(
        sequence=name, frames=frames,
        mpjpe_mm=mpjpe(pred_joints, gt_joints, eval_joints),
        pa_mpjpe_mm=pa_mpjpe(pred_joints, gt_joints, eval_joints),
        mpvpe_mm=mv,
        accel_err_mm_s2=acc * fps * fps,
        accel_err_mm_frame2=acc,
    )


REPORT_FIELDS = ("sequence", "frames", "mpjpe_mm", "pa_mpjpe_mm", "mpvpe_mm",
                 "accel_err_mm_s2", "accel_err_mm_frame2")


@dataclass
class MetricReport:
    mpjpe_mm: float
    pa_mpjpe_mm: float
    mpvpe_mm: float
    accel_err_mm_s2: float
    accel_err_mm_frame2: float
    frame_count: int
    sequence_count: int
    fps: float
    skipped_frames: int = 0
    aggregation: str = "mean over frames within a sequence, then mean over sequences"
    per_sequence: list = field(default_factory=list)

    @classmethod
    def aggregate(cls, rows, fps, skipped_frames=0):
        if not rows:
            raise ValueError("no sequences to aggregate")

        def avg(key):
            vals = np.array([getattr(r, key) for r in rows], dtype=np.float64)
            vals = vals[np.isfinite(vals)]
            return float(vals.mean()) if vals.size else float("nan")
        return cls(
            mpjpe_mm=avg("mpjpe_mm"), pa_mpjpe_mm=avg("pa_mpjpe_mm"), mpvpe_mm=avg("mpvpe_mm"),
            accel_err_mm_s2=avg("accel_err_mm_s2"), accel_err_mm_frame2=avg("accel_err_mm_frame2"),
            frame_count=int(sum(r.frames for r in rows)), sequence_count=len(rows), fps=float(fps),
            skipped_frames=int(skipped_frames), per_sequence=list(rows),
        )

    def summary(self):
        d = asdict(self)
        d.pop("per_sequence")
        return d

    def to_text(self):
        """``key = value`` lines; floats in repr form so a reload is exact."""
        lines = []
        for k, v in self.summary().items():
            lines.append(f"{k} = {v!r}" if isinstance(v, float) else f"{k} = {v}")
        return "\n".join(lines) + "\n"

    def to_csv(self):
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(REPORT_FIELDS)
        for r in self.per_sequence:
            w.writerow([getattr(r, f) if not isinstance(getattr(r, f), float) else repr(getattr(r, f))
                        for f in REPORT_FIELDS])
        w.writerow(["ALL", self.frame_count] + [repr(getattr(self, f)) for f in REPORT_FIELDS[2:]])
        return buf.getvalue()

    def write(self, path_stem):
        """Write ``<stem>.txt`` (key-value summary) and ``<stem>.csv`` (per-sequence table)."""
        stem = Path(path_stem)
        stem.parent.mkdir(parents=True, exist_ok=True)
        txt = stem.with_suffix(".txt")
        tbl = stem.with_suffix(".csv")
        txt.write_text(self.to_text())
        tbl.write_text(self.to_csv())
        return txt, tbl


def read_report_text(path):
    out = {}
    for line in open(path):
        if "=" not in line:
            continue
        k, v = (s.strip() for s in line.split("=", 1))
        try:
            out[k] = int(v)
        except ValueError:
            try:
                out[k] = float(v)
            except ValueError:
                out[k] = v
    return out
