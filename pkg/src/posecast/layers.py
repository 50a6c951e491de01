"""Parameter containers and the two building blocks everything else uses:
fully connected layers and the GRU cell."""
from __future__ import annotations

import numpy as np

from . import autodiff as ad
from .autodiff import Tensor


class Module:
    """Anything holding ``Tensor`` parameters, directly or through sub-modules."""

    def named_parameters(self, prefix=""):
        out = {}
        for key, val in vars(self).items():
            name = f"{prefix}{key}"
            if isinstance(val, Tensor) and val.requires_grad:
                out[name] = val
            elif isinstance(val, Module):
                out.update(val.named_parameters(name + "."))
            elif isinstance(val, (list, tuple)):
                for i, item in enumerate(val):
                    if isinstance(item, Module):
                        out.update(item.named_parameters(f"{name}.{i}."))
        return out

    def state_dict(self):
        return {k: p.value.copy() for k, p in self.named_parameters().items()}

    def load_state_dict(self, arrays):
        params = self.named_parameters()
        missing = sorted(set(params) - set(arrays))
        if missing:
            raise KeyError(f"state dict lacks {missing[:5]}{'...' if len(missing) > 5 else ''}")
        for k, p in params.items():
            a = np.asarray(arrays[k], dtype=np.float64)
            if a.shape != p.value.shape:
                raise ad.ShapeError(f"{k}: checkpoint shape {a.shape}, model shape {p.value.shape}")
            p.value[...] = a


def uniform_param(rng, shape, bound, name=None):
    return Tensor(rng.uniform(-bound, bound, size=shape), requires_grad=True, name=name)


class Linear(Module):
    def __init__(self, d_in, d_out, rng, gain=1.0):
        bound = gain / np.sqrt(d_in)
        self.weight = uniform_param(rng, (d_in, d_out), bound)
        self.bias = uniform_param(rng, (d_out,), bound)

    @property
    def shape(self):
        return self.weight.shape

    def __call__(self, x):
        x = ad.as_tensor(x)
        if x.shape[-1] != self.weight.shape[0]:
            raise ad.ShapeError(f"Linear: input {x.shape}, weight {self.weight.shape}")
        return ad.matmul(x, self.weight) + self.bias

    def zero_(self):
        self.weight.value[...] = 0.0
        self.bias.value[...] = 0.0


class GRUCell(Module):
    """h' = (1 - z) * n + z * h,  n = tanh(W_n x + b_n + r * (U_n h)).

    Gate blocks are stored side by side in the order (reset, update, candidate).
    """

    def __init__(self, d_in, d_h, rng):
        self.d_in = d_in
        self.d_h = d_h
        bound = 1.0 / np.sqrt(d_h)
        self.w_in = uniform_param(rng, (d_in, 3 * d_h), bound)
        self.w_hid = uniform_param(rng, (d_h, 3 * d_h), bound)
        self.bias = uniform_param(rng, (3 * d_h,), bound)

    def zero_(self):
        for p in (self.w_in, self.w_hid, self.bias):
            p.value[...] = 0.0

    def project_inputs(self, x):
        """Input half of the gates for a whole (batch, steps, d_in) sequence at once."""
        x = ad.as_tensor(x)
        if x.shape[-1] != self.d_in:
            raise ad.ShapeError(f"GRUCell: input dim {x.shape[-1]}, expected {self.d_in}")
        return ad.matmul(x, self.w_in) + self.bias

    def step_projected(self, xp, h):
        d = self.d_h
        hp = ad.matmul(h, self.w_hid)
        rz = ad.sigmoid(xp[..., :2 * d] + hp[..., :2 * d])
        r = rz[..., :d]
        z = rz[..., d:]
        n = ad.tanh(xp[..., 2 * d:] + r * hp[..., 2 * d:])
        return n + z * (h - n)

    def __call__(self, x, h):
        h = ad.as_tensor(h)
        if h.shape[-1] != self.d_h:
            raise ad.ShapeError(f"GRUCell: hidden dim {h.shape[-1]}, expected {self.d_h}")
        return self.step_projected(self.project_inputs(x), h)

    def rollout(self, seq):
        """Run from a zero hidden state over ``seq`` (batch, steps, d_in); return the final state."""
        seq = ad.as_tensor(seq)
        if seq.ndim != 3 or seq.shape[1] == 0:
            raise ad.ShapeError(f"GRUCell.rollout: need (batch, steps>0, d_in), got {seq.shape}")
        xp = self.project_inputs(seq)
        h = Tensor(np.zeros((seq.shape[0], self.d_h)))
        for s in range(seq.shape[1]):
            h = self.step_projected(xp[:, s], h)
        return h
