"""Adam with bias correction, plus the plateau learning-rate schedule."""
from __future__ import annotations

import logging
from dataclasses import dataclass, field

import numpy as np

log = logging.getLogger(__name__)


@dataclass
class AdamState:
    m: np.ndarray
    v: np.ndarray
    step_count: int = 0
    lr: float = 1e-3
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    skipped: int = 0

    @classmethod
    def fresh(cls, like, **hyper):
        return cls(m=np.zeros_like(like), v=np.zeros_like(like), **hyper)


def adam_step(param, grad, state):
    """One Adam update.  Returns ``(new_param, state)``.

    A non-finite gradient leaves both param and moments untouched and bumps
    ``state.skipped`` instead of ``step_count``.
    """
    param = np.asarray(param)
    grad = np.asarray(grad)
    if param.shape != grad.shape or state.m.shape != param.shape:
        raise ValueError(f"adam_step: param {param.shape}, grad {grad.shape}, "
                         f"moments {state.m.shape}")
    if not np.all(np.isfinite(grad)):
        state.skipped += 1
        return param, state
    state.step_count += 1
    t = state.step_count
    state.m = state.beta1 * state.m + (1.0 - state.beta1) * grad
    state.v = state.beta2 * state.v + (1.0 - state.beta2) * grad * grad
    m_hat = state.m / (1.0 - state.beta1 ** t)
    v_hat = state.v / (1.0 - state.beta2 ** t)
    update = state.lr * m_hat / (np.sqrt(v_hat) + state.eps)
    return param - update, state


class Adam:
    """Adam over a dict of named ``Tensor`` parameters, updated in place."""

    def __init__(self, params, lr=1e-3, beta1=0.9, beta2=0.999, eps=1e-8):
        self.params = dict(params)
        self.lr = lr
        self.states = {
            name: AdamState.fresh(p.value, lr=lr, beta1=beta1, beta2=beta2, eps=eps)
            for name, p in self.params.items()
        }

    def zero_grad(self):
        for p in self.params.values():
            p.grad = None

    def grads_finite(self):
        return all(p.grad is None or np.all(np.isfinite(p.grad)) for p in self.params.values())

    def step(self):
        """Apply one update.  Returns False (and changes nothing) on a non-finite gradient."""
        if not self.grads_finite():
            for st in self.states.values():
                st.skipped += 1
            log.warning("non-finite gradient, update skipped")
            return False
        for name, p in self.params.items():
            if p.grad is None:
                continue
            st = self.states[name]
            st.lr = self.lr
            new_value, _ = adam_step(p.value, p.grad, st)
            p.value[...] = new_value
        return True

    def state_arrays(self):
        out = {}
        for name, st in self.states.items():
            out[f"adam_m/{name}"] = st.m
            out[f"adam_v/{name}"] = st.v
            out[f"adam_t/{name}"] = np.array(st.step_count)
        return out

    def load_state_arrays(self, arrays):
        for name, st in self.states.items():
            st.m = np.array(arrays[f"adam_m/{name}"], dtype=np.float64)
            st.v = np.array(arrays[f"adam_v/{name}"], dtype=np.float64)
            st.step_count = int(arrays[f"adam_t/{name}"])


@dataclass
class PlateauSchedule:
    """Divide the learning rate by ``1/factor`` after ``patience`` epochs without improvement."""

    lr: float
    patience: int = 5
    factor: float = 0.1
    best: float = float("inf")
    since_best: int = 0
    history: list = field(default_factory=list)

    def observe(self, metric, epoch):
        """Feed one validation value (lower is better); returns the lr for the next epoch."""
        if metric < self.best:
            self.best = metric
            self.since_best = 0
        else:
            self.since_best += 1
            if self.since_best >= self.patience:
                self.lr *= self.factor
                self.since_best = 0
                self.history.append(epoch)
                log.info("plateau at epoch %d, lr -> %g", epoch, self.lr)
        return self.lr
