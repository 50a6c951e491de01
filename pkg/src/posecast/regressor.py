"""Iterative body-parameter regressor shared by every temporal feature.

The running estimate lives in the 6D rotation layout
``[J*6 pose | B shape | 3 camera]``; each iteration adds an MLP correction
computed from ``[feature, estimate]``.
"""
from __future__ import annotations

from collections import Counter
from dataclasses import dataclass

import numpy as np

from . import autodiff as ad
from .autodiff import Tensor
from .body import BodyParams
from .layers import Linear, Module
from .rotations import axis_angle_to_matrix, matrix_to_axis_angle, matrix_to_rot6d, rot6d_to_matrix


class NonFiniteOutput(FloatingPointError):
    def __init__(self, rows):
        self.rows = list(rows)
        super().__init__(f"regressor produced non-finite values for windows {self.rows}")


@dataclass
class RegressorConfig:
    n_iter: int = 3
    hidden: tuple | None = None     # default: two layers of 2 * feature width
    final_gain: float = 0.01

    def __post_init__(self):
        if self.hidden is not None:
            self.hidden = tuple(self.hidden)


@dataclass
class Prediction:
    """Differentiable regressor output for a batch of windows."""

    rot6d: Tensor    # (N, J, 6)
    rotmat: Tensor   # (N, J, 3, 3)
    beta: Tensor     # (N, B)
    cam: Tensor      # (N, 3)

    def to_params(self):
        return BodyParams(theta=matrix_to_axis_angle(self.rotmat.value),
                          beta=self.beta.value.copy(), cam=self.cam.value.copy())

    def rows(self, sl):
        return Prediction(self.rot6d[sl], self.rotmat[sl], self.beta[sl], self.cam[sl])


def mean_params_vector(mean_params):
    """Pack a (J,3)/(B,)/(3,) mean ``BodyParams`` into the 6D layout."""
    rot6d = matrix_to_rot6d(axis_angle_to_matrix(np.asarray(mean_params.theta)))
    return np.concatenate([rot6d.ravel(), mean_params.beta, mean_params.cam])


class Regressor(Module):
    def __init__(self, feature_dim, joint_count, shape_dim, mean_vector, rng, config=None):
        self.config = config or RegressorConfig()
        self.feature_dim = feature_dim
        self.joint_count = joint_count
        self.shape_dim = shape_dim
        self.out_dim = 6 * joint_count + shape_dim + 3
        mean_vector = np.asarray(mean_vector, dtype=np.float64)
        if mean_vector.shape != (self.out_dim,):
            raise ad.ShapeError(f"mean vector {mean_vector.shape}, expected ({self.out_dim},)")
        self.mean = mean_vector.copy()
        hidden = self.config.hidden or (2 * feature_dim, 2 * feature_dim)
        widths = (feature_dim + self.out_dim,) + tuple(hidden) + (self.out_dim,)
        self.layers = [Linear(a, b, rng) for a, b in zip(widths[:-1], widths[1:])]
        last = self.layers[-1]
        last.weight.value *= self.config.final_gain
        last.bias.value[...] = 0.0
        self.calls = Counter()

    def delta(self, x):
        for i, layer in enumerate(self.layers):
            if i:
                x = ad.relu(x)
            x = layer(x)
        return x

    def __call__(self, feature, branch="int"):
        """Regress a batch of features ``(N, feature_dim)``.

        ``branch`` is only bookkeeping: it is tallied in ``self.calls``.
        Callers may pass a tuple of names when several branches are stacked
        into one batch.
        """
        feature = ad.as_tensor(feature)
        if feature.ndim != 2 or feature.shape[1] != self.feature_dim:
            raise ad.ShapeError(f"regressor feature {feature.shape}, expected (N, {self.feature_dim})")
        for b in ((branch,) if isinstance(branch, str) else branch):
            self.calls[b] += 1
        n = feature.shape[0]
        est = Tensor(np.tile(self.mean, (n, 1)))
        for _ in range(self.config.n_iter):
            est = est + self.delta(ad.concat([feature, est], axis=-1))
        if not np.all(np.isfinite(est.value)):
            raise NonFiniteOutput(np.flatnonzero(~np.all(np.isfinite(est.value), axis=1)))
        J, B = self.joint_count, self.shape_dim
        rot6d = ad.reshape(est[:, :6 * J], (n, J, 6))
        return Prediction(rot6d=rot6d, rotmat=rot6d_to_matrix(rot6d),
                          beta=est[:, 6 * J:6 * J + B], cam=est[:, 6 * J + B:])
