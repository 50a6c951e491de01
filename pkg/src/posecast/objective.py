"""Training loss over the past / future / integrated outputs."""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import autodiff as ad
from .body import forward_kinematics_rotmat, project_weak_perspective

SUPERVISION_TARGETS = ("current", "adjacent", "none")
OUTPUTS = ("past", "future", "int")
TERMS = ("pose", "shape", "j3d", "j2d")


@dataclass
class LossWeights:
    w_pose: float = 60.0
    w_shape: float = 0.06
    w_j3d: float = 300.0
    w_j2d: float = 300.0
    supervision_target: str = "current"

    def validate(self):
        ws = (self.w_pose, self.w_shape, self.w_j3d, self.w_j2d)
        if any(w < 0 for w in ws):
            raise ValueError(f"loss weights must be nonnegative, got {ws}")
        if not any(w > 0 for w in ws):
            raise ValueError("at least one loss weight must be positive")
        if self.supervision_target not in SUPERVISION_TARGETS:
            raise ValueError(f"supervision_target {self.supervision_target!r} not in {SUPERVISION_TARGETS}")
        return self

    def weight(self, term):
        return getattr(self, f"w_{term}")


@dataclass
class Targets:
    """Ground truth for one frame of each window in a batch."""

    rotmat: np.ndarray   # (N, J, 3, 3)
    beta: np.ndarray     # (N, B)
    cam: np.ndarray      # (N, 3)
    joints: np.ndarray   # (N, J, 3)

    def __len__(self):
        return self.beta.shape[0]

    def valid_rows(self):
        ok = np.isfinite(self.beta).all(-1) & np.isfinite(self.cam).all(-1)
        ok &= np.isfinite(self.rotmat).all((-1, -2, -3)) & np.isfinite(self.joints).all((-1, -2))
        return ok


def target_frame_for(output, supervision_target):
    """Which ground-truth frame supervises ``output``; None means unsupervised."""
    if output == "int":
        return "current"
    if supervision_target == "none":
        return None
    if supervision_target == "adjacent":
        return "prev" if output == "past" else "next"
    return "current"


def window_loss(preds, targets, model, weights):
    """Weighted sum of squared errors, averaged over the windows of the batch.

    preds:   {"past"|"future"|"int": regressor Prediction}; missing keys are skipped
    targets: {"current"|"prev"|"next": Targets}
    Returns ``(total Tensor, breakdown dict)``.  Breakdown values are floats
    keyed ``"<output>/<term>"`` (already weighted), plus ``"skipped"``.
    """
    weights.validate()
    plan = []
    for out in OUTPUTS:
        if out not in preds:
            continue
        frame = target_frame_for(out, weights.supervision_target)
        if frame is None:
            continue
        if frame not in targets:
            raise KeyError(f"no ground truth for frame {frame!r} (needed by output {out!r})")
        plan.append((out, frame))
    if not plan:
        raise ValueError("nothing to supervise")

    n = len(next(iter(targets.values())))
    valid = np.ones(n, dtype=bool)
    for _, frame in plan:
        valid &= targets[frame].valid_rows()
    skipped = int(n - valid.sum())
    keep = np.flatnonzero(valid)
    if keep.size == 0:
        return ad.Tensor(0.0), {"skipped": skipped}
    rows = keep if skipped else slice(None)
    denom = float(keep.size)

    # one FK pass over all supervised outputs stacked on the batch axis
    rot = ad.concat([preds[o].rotmat[rows] for o, _ in plan], axis=0)
    beta = ad.concat([preds[o].beta[rows] for o, _ in plan], axis=0)
    cam = ad.concat([preds[o].cam[rows] for o, _ in plan], axis=0)
    gt = {k: _gather([targets[f] for _, f in plan], k, rows) for k in ("rotmat", "beta", "cam", "joints")}
    joints, _ = forward_kinematics_rotmat(model, rot, beta, with_vertices=False)

    rel_pred = joints - joints[:, 0:1]
    rel_gt = gt["joints"] - gt["joints"][:, 0:1]
    j2d_gt = project_weak_perspective(gt["joints"], gt["cam"][:, 0], gt["cam"][:, 1:3])
    j2d_pred = project_weak_perspective(joints, cam[:, 0], cam[:, 1:3])

    residuals = {
        "pose": (rot - gt["rotmat"], (1, 2, 3)),
        "shape": (beta - gt["beta"], (1,)),
        "j3d": (rel_pred - rel_gt, (1, 2)),
        "j2d": (j2d_pred - j2d_gt, (1, 2)),
    }
    m = keep.size
    total = None
    breakdown = {"skipped": skipped}
    for term in TERMS:
        w = weights.weight(term)
        if w == 0:
            continue
        res, axes = residuals[term]
        per_row = ad.sqnorm(res, axis=axes)              # (len(plan) * m,)
        for i, (out, _) in enumerate(plan):
            part = ad.sum(per_row[i * m:(i + 1) * m]) * (w / denom)
            breakdown[f"{out}/{term}"] = float(part.value)
            total = part if total is None else total + part
    return total, breakdown


def _gather(items, name, rows):
    return np.concatenate([getattr(t, name)[rows] for t in items], axis=0)
