"""Temporal encoders and attention-based feature integration.

Frame indexing is 0-based internally.  With T frames the current frame is
``c = T // 2 - 1`` (the ``T//2``-th frame counting from one), so for T=16:

* the all-frames forward GRU reads frames 0..7 (8 steps), the backward GRU
  reads 15..7 (9 steps);
* the past encoder reads 0..6 (7 frames), the future encoder reads 15..8
  (8 frames, newest first).
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from . import autodiff as ad
from .autodiff import Tensor
from .layers import GRUCell, Linear, Module


@dataclass
class TemporalConfig:
    seq_len: int = 16
    feature_dim: int = 128
    hidden_dim: int = 64          # per direction; g_all has 2 * hidden_dim
    forecast_dim: int = 64        # g_past / g_future
    integ_dim: int = 128          # g'_* width
    bottleneck_dim: int = 16      # shared FC before attention
    attention_hidden: tuple = (16,)
    use_residual: bool = False
    poseforecast: bool = True
    poseforecast_includes_current: bool = False

    def __post_init__(self):
        self.attention_hidden = tuple(self.attention_hidden)

    @classmethod
    def paper_scale(cls, **kw):
        base = dict(seq_len=16, feature_dim=2048, hidden_dim=1024, forecast_dim=1024,
                    integ_dim=2048, bottleneck_dim=256, attention_hidden=(256,))
        base.update(kw)
        return cls(**base)

    @property
    def current_index(self):
        return self.seq_len // 2 - 1

    @property
    def all_dim(self):
        return 2 * self.hidden_dim

    def frame_ranges(self):
        """Frame indices read by each encoder, in reading order."""
        T, c = self.seq_len, self.current_index
        extra = 1 if self.poseforecast_includes_current else 0
        return {
            "all_forward": list(range(0, c + 1)),
            "all_backward": list(range(T - 1, c - 1, -1)),
            "past": list(range(0, c + extra)),
            "future": list(range(T - 1, c - extra, -1)),
        }

    def validate(self):
        dims = ("feature_dim", "hidden_dim", "forecast_dim", "integ_dim", "bottleneck_dim")
        for name in dims:
            if getattr(self, name) <= 0:
                raise ValueError(f"TemporalConfig.{name} must be positive")
        if any(h <= 0 for h in self.attention_hidden):
            raise ValueError("TemporalConfig.attention_hidden entries must be positive")
        if self.seq_len < 4:
            raise ValueError(f"TemporalConfig.seq_len={self.seq_len}: need T >= 4 so past and "
                             "future windows are non-empty")
        if self.use_residual and self.feature_dim != self.all_dim:
            raise ValueError(f"use_residual needs feature_dim == 2*hidden_dim "
                             f"({self.feature_dim} != {self.all_dim})")
        return self


@dataclass
class TemporalFeatures:
    g_all: Tensor
    g_past: Tensor | None
    g_future: Tensor | None
    gp_all: Tensor
    gp_past: Tensor | None
    gp_future: Tensor | None
    gp_int: Tensor
    attention: Tensor
    extras: dict = field(default_factory=dict)


class TemporalEncoder(Module):
    def __init__(self, config, rng):
        self.config = config.validate()
        c = config
        self.gru_fwd = GRUCell(c.feature_dim, c.hidden_dim, rng)
        self.gru_bwd = GRUCell(c.feature_dim, c.hidden_dim, rng)
        self.fc_all = Linear(c.all_dim, c.integ_dim, rng)
        if c.poseforecast:
            self.gru_past = GRUCell(c.feature_dim, c.forecast_dim, rng)
            self.gru_future = GRUCell(c.feature_dim, c.forecast_dim, rng)
            self.fc_past = Linear(c.forecast_dim, c.integ_dim, rng)
            self.fc_future = Linear(c.forecast_dim, c.integ_dim, rng)
            self.fc_shared = Linear(c.integ_dim, c.bottleneck_dim, rng)
            widths = (3 * c.bottleneck_dim,) + c.attention_hidden + (3,)
            self.attention = [Linear(a, b, rng) for a, b in zip(widths[:-1], widths[1:])]

    def _check(self, features):
        f = ad.as_tensor(features)
        c = self.config
        if f.ndim != 3 or f.shape[1] != c.seq_len or f.shape[2] != c.feature_dim:
            raise ad.ShapeError(f"window of shape {f.shape}, expected (batch, {c.seq_len}, {c.feature_dim})")
        return f

    def encode_all(self, features):
        f = self._check(features)
        r = self.config.frame_ranges()
        h_f = self.gru_fwd.rollout(f[:, r["all_forward"]])
        h_b = self.gru_bwd.rollout(f[:, r["all_backward"]])
        g = ad.concat([h_f, h_b], axis=-1)
        if self.config.use_residual:
            g = g + f[:, self.config.current_index]
        return g

    def encode_past(self, features):
        f = self._check(features)
        return self.gru_past.rollout(f[:, self.config.frame_ranges()["past"]])

    def encode_future(self, features):
        f = self._check(features)
        return self.gru_future.rollout(f[:, self.config.frame_ranges()["future"]])

    def attention_logits(self, codes):
        x = codes
        for i, layer in enumerate(self.attention):
            if i:
                x = ad.relu(x)
            x = layer(x)
        return x

    def integrate(self, g_all, g_past=None, g_future=None, attention_override=None):
        gp_all = self.fc_all(ad.relu(g_all))
        if not self.config.poseforecast:
            a = Tensor(np.tile([1.0, 0.0, 0.0], (gp_all.shape[0], 1)))
            return TemporalFeatures(g_all, None, None, gp_all, None, None, gp_all, a)
        gp_past = self.fc_past(ad.relu(g_past))
        gp_future = self.fc_future(ad.relu(g_future))
        if attention_override is not None:
            a = ad.as_tensor(np.broadcast_to(np.asarray(attention_override, dtype=np.float64),
                                             (gp_all.shape[0], 3)))
        else:
            codes = ad.concat([self.fc_shared(gp_all), self.fc_shared(gp_past),
                               self.fc_shared(gp_future)], axis=-1)
            a = ad.softmax(self.attention_logits(codes), axis=-1)
        gp_int = a[:, 0:1] * gp_all + a[:, 1:2] * gp_past + a[:, 2:3] * gp_future
        return TemporalFeatures(g_all, g_past, g_future, gp_all, gp_past, gp_future, gp_int, a)

    def __call__(self, features, attention_override=None):
        f = self._check(features)
        g_all = self.encode_all(f)
        if not self.config.poseforecast:
            return self.integrate(g_all)
        return self.integrate(g_all, self.encode_past(f), self.encode_future(f),
                              attention_override=attention_override)
