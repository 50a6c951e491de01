"""Training loop: windows -> three estimates -> loss -> Adam, plateau schedule on validation."""
from __future__ import annotations

import logging
import math
import time
from dataclasses import dataclass, field

import numpy as np

from . import autodiff as ad
from .body import default_model
from .evaluate import check_compatible, evaluate
from .model import TemporalPoseModel, save_checkpoint
from .objective import Targets, window_loss
from .optim import Adam, PlateauSchedule
from .synth import current_offset, window_starts

log = logging.getLogger(__name__)


class TrainingAborted(RuntimeError):
    pass


class WindowSampler:
    """Gathers batches of training windows straight from the stacked split arrays."""

    def __init__(self, arrays, T):
        self.a = arrays
        self.T = T
        self.c = current_offset(T)
        S, N = arrays.features.shape[:2]
        starts = window_starts(N, T, 1)
        self.index = np.array([(s, t) for s in range(S) for t in starts], dtype=np.int64)

    def __len__(self):
        return len(self.index)

    def epoch_order(self, rng, stride):
        """Random subset of about ``1/stride`` of the windows, shuffled."""
        n = len(self.index)
        keep = rng.permutation(n)[: max(1, math.ceil(n / stride))]
        return keep

    def batch(self, rows):
        seq, start = self.index[rows, 0], self.index[rows, 1]
        feats = self.a.features[seq[:, None], start[:, None] + np.arange(self.T)]
        targets = {}
        for name, off in (("current", 0), ("prev", -1), ("next", 1)):
            k = start + self.c + off
            targets[name] = Targets(rotmat=self.a.rotmat[seq, k], beta=self.a.beta[seq, k],
                                    cam=self.a.cam[seq, k], joints=self.a.joints[seq, k])
        return feats, targets


@dataclass
class TrainResult:
    model: TemporalPoseModel
    best_state: dict
    best_val: float
    best_epoch: int
    log: list = field(default_factory=list)
    lr_drops: list = field(default_factory=list)
    checkpoint: str = ""


def train_step(model, optimizer, feats, targets, body):
    preds, _ = model.forward_train(feats)
    loss, parts = window_loss(preds, targets, body, model.config.loss)
    if not np.isfinite(loss.value):
        return float("nan"), parts
    optimizer.zero_grad()
    ad.backward(loss)
    optimizer.step()
    return float(loss.value), parts


def train(config, dataset, out_dir=None, val_hook=None, progress=None):
    """Train one model.  ``val_hook(epoch) -> float`` may replace the validation metric."""
    config.validate()
    body = default_model()
    model = TemporalPoseModel(config, dataset.joint_count, dataset.shape_dim, dataset.mean_params)
    check_compatible(model, dataset)
    sampler = WindowSampler(dataset.arrays("train"), config.temporal.seq_len)
    if not len(sampler):
        raise TrainingAborted("no training windows (sequences shorter than the window)")
    rng = np.random.default_rng(np.random.SeedSequence(config.seed, spawn_key=(1,)))
    opt = Adam(model.named_parameters(), lr=config.lr)
    sched = PlateauSchedule(config.lr, patience=config.plateau_patience, factor=config.plateau_factor)
    val_split = "val" if dataset.sequences("val") else "eval"
    val_limit = config.val_sequences or None

    best_val, best_epoch, best_state = float("inf"), -1, model.state_dict()
    history = []
    bad_run = 0
    for epoch in range(config.epochs):
        t0 = time.perf_counter()
        order = sampler.epoch_order(rng, config.window_stride)
        losses, skipped = [], 0
        for b in range(0, len(order), config.batch_size):
            feats, targets = sampler.batch(order[b:b + config.batch_size])
            try:
                loss, _ = train_step(model, opt, feats, targets, body)
            except FloatingPointError as exc:
                loss = float("nan")
                log.warning("epoch %d batch %d: %s", epoch, b // config.batch_size, exc)
            if not math.isfinite(loss):
                skipped += 1
                bad_run += 1
                log.warning("epoch %d batch %d: non-finite loss, batch skipped", epoch, b // config.batch_size)
                if bad_run >= config.max_bad_batches:
                    raise TrainingAborted(f"{bad_run} consecutive non-finite batches at epoch {epoch}")
                continue
            bad_run = 0
            losses.append(loss)
        if val_hook is not None:
            val = float(val_hook(epoch))
        else:
            try:
                val = evaluate(model, dataset, val_split, val_limit)[0].pa_mpjpe_mm
            except FloatingPointError as exc:
                raise TrainingAborted(f"validation failed at epoch {epoch}: {exc}") from exc
        if val < best_val:
            best_val, best_epoch, best_state = val, epoch, model.state_dict()
        opt.lr = sched.observe(val, epoch)
        row = {"epoch": epoch, "train_loss": float(np.mean(losses)) if losses else float("nan"),
               "val_pa_mpjpe_mm": val, "lr_next": opt.lr, "skipped_batches": skipped,
               "seconds": round(time.perf_counter() - t0, 2)}
        history.append(row)
        log.info("epoch %d loss %.4f val PA-MPJPE %.3f mm lr %.2g", epoch, row["train_loss"], val, opt.lr)
        if progress:
            progress(row)

    model.load_state_dict(best_state)
    res = TrainResult(model, best_state, best_val, best_epoch, history, list(sched.history))
    if out_dir is not None:
        res.checkpoint = str(save_checkpoint(f"{out_dir}/checkpoint.npz", model, opt, epoch=best_epoch,
                                             best_val=best_val))
    return res
