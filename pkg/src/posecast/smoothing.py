"""Average-filter smoothing of predicted parameters.

Joint rotations are averaged in quaternion space by a running slerp
(the k-th sample enters with weight 1/k); shape and camera use a plain
moving average.  Windows are centred and shrink symmetrically at the edges.
"""
from __future__ import annotations

import numpy as np

from .body import BodyParams
from .evaluate import Predictions, SequencePrediction
from .rotations import axis_angle_to_quaternion, quaternion_to_axis_angle, slerp


def slerp_average(quats):
    """Left-fold slerp mean of ``quats`` (n, ..., 4): q <- slerp(q, q_k, 1/k)."""
    quats = np.asarray(quats, dtype=np.float64)
    q = quats[0]
    for k in range(2, len(quats) + 1):
        q = slerp(q, quats[k - 1], 1.0 / k)
    return q


def _half_widths(n, half):
    t = np.arange(n)
    return np.minimum(half, np.minimum(t, n - 1 - t))


def smooth_params(params, window):
    """Smooth one sequence of ``BodyParams`` (F leading) with an odd ``window``."""
    if window < 1 or window % 2 == 0:
        raise ValueError(f"smoothing window must be odd and >= 1, got {window}")
    if window == 1:
        return BodyParams(params.theta.copy(), params.beta.copy(), params.cam.copy())
    n = len(params)
    half_w = _half_widths(n, window // 2)
    quats = axis_angle_to_quaternion(params.theta)            # (F, J, 4)
    q_out = np.empty_like(quats)
    beta = np.empty_like(params.beta)
    cam = np.empty_like(params.cam)
    for h in np.unique(half_w):
        t = np.flatnonzero(half_w == h)
        offs = np.arange(-h, h + 1)
        q_out[t] = slerp_average(np.stack([quats[t + o] for o in offs]))
        beta[t] = np.mean([params.beta[t + o] for o in offs], axis=0)
        cam[t] = np.mean([params.cam[t + o] for o in offs], axis=0)
    return BodyParams(quaternion_to_axis_angle(q_out), beta, cam)


def smooth_predictions(preds, window):
    out = []
    for sp in preds.sequences:
        if len(sp.frames) > 1 and np.any(np.diff(sp.frames) != 1):
            raise ValueError(f"{sp.name}: predicted frames are not contiguous")
        out.append(SequencePrediction(sp.name, sp.frames.copy(), smooth_params(sp.params, window)))
    return Predictions(out, preds.fps)
