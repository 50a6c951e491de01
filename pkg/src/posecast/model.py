"""Temporal encoder + shared regressor, and the checkpoint file."""
from __future__ import annotations

import json
from pathlib import Path

import numpy as np

from . import autodiff as ad
from .body import BodyParams
from .config import RunConfig
from .layers import Module
from .regressor import Regressor, mean_params_vector
from .temporal import TemporalEncoder

CHECKPOINT_VERSION = 1


class CheckpointError(ValueError):
    pass


class TemporalPoseModel(Module):
    def __init__(self, config, joint_count, shape_dim, mean_params, seed=None):
        self.config = config
        rng = np.random.default_rng(config.seed if seed is None else seed)
        self.mean_params = mean_params
        self.encoder = TemporalEncoder(config.temporal, rng)
        self.regressor = Regressor(config.temporal.integ_dim, joint_count, shape_dim,
                                   mean_params_vector(mean_params), rng, config.regressor)

    @property
    def outputs(self):
        return ("past", "future", "int") if self.config.temporal.poseforecast else ("int",)

    def forward_train(self, features):
        """All supervised outputs for a batch of windows, one stacked regressor call."""
        tf = self.encoder(features)
        if not self.config.temporal.poseforecast:
            return {"int": self.regressor(tf.gp_int, branch="int")}, tf
        n = tf.gp_int.shape[0]
        stacked = ad.concat([tf.gp_past, tf.gp_future, tf.gp_int], axis=0)
        pred = self.regressor(stacked, branch=("past", "future", "int"))
        return {o: pred.rows(slice(i * n, (i + 1) * n)) for i, o in enumerate(("past", "future", "int"))}, tf

    def predict(self, features, attention_override=None):
        """Inference: only the integrated feature reaches the regressor."""
        tf = self.encoder(features, attention_override=attention_override)
        return self.regressor(tf.gp_int, branch="int"), tf


def save_checkpoint(path, model, optimizer=None, epoch=0, best_val=float("inf"), extra=None):
    arrays = {f"w/{k}": v for k, v in model.state_dict().items()}
    if optimizer is not None:
        arrays.update({f"opt/{k}": v for k, v in optimizer.state_arrays().items()})
        arrays["opt_lr"] = np.array(optimizer.lr)
    mp = model.mean_params
    arrays["mean/theta"] = mp.theta
    arrays["mean/beta"] = mp.beta
    arrays["mean/cam"] = mp.cam
    meta = {"version": CHECKPOINT_VERSION, "epoch": int(epoch), "best_val_pa_mpjpe": float(best_val),
            "joint_count": model.regressor.joint_count, "shape_dim": model.regressor.shape_dim,
            "config": model.config.to_dict(), "extra": extra or {}}
    arrays["meta"] = np.array(json.dumps(meta, sort_keys=True))
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "wb") as fh:
        np.savez(fh, **arrays)
    return path


def load_checkpoint(path):
    """Returns ``(model, meta, optimizer_arrays)``."""
    with np.load(path, allow_pickle=False) as z:
        arrays = {k: z[k] for k in z.files}
    meta = json.loads(str(arrays.pop("meta")))
    if meta.get("version") != CHECKPOINT_VERSION:
        raise CheckpointError(f"{path}: checkpoint version {meta.get('version')}, expected {CHECKPOINT_VERSION}")
    config = RunConfig.from_dict(meta["config"])
    mean = BodyParams(arrays["mean/theta"], arrays["mean/beta"], arrays["mean/cam"])
    model = TemporalPoseModel(config, meta["joint_count"], meta["shape_dim"], mean)
    model.load_state_dict({k[2:]: v for k, v in arrays.items() if k.startswith("w/")})
    opt = {k[4:]: v for k, v in arrays.items() if k.startswith("opt/")}
    if "opt_lr" in arrays:
        meta["opt_lr"] = float(arrays["opt_lr"])
    return model, meta, opt
