"""Central finite-difference checks for every differentiable op and the full chain.

Each check draws random inputs, forms the scalar ``sum(w * f(x))`` with a
random weighting ``w``, and compares the autodiff gradient with central
differences.  The error of one instance is normwise:
``max|g_auto - g_num| / max(max|g_num|, 1e-8)``.
"""
from __future__ import annotations

import time
from dataclasses import dataclass

import numpy as np

from . import autodiff as ad
from .autodiff import Tensor

STEP = 1e-5
TOLERANCE = 1e-4


@dataclass
class CheckResult:
    name: str
    instances: int
    max_rel_err: float
    seconds: float

    @property
    def passed(self):
        return self.max_rel_err <= TOLERANCE

    def line(self):
        flag = "ok  " if self.passed else "FAIL"
        return f"{flag} {self.name:<28} n={self.instances:<3d} max rel err {self.max_rel_err:.2e}"


def numeric_grad(f, x, h=STEP, coords=None):
    """Central differences of scalar ``f`` at array ``x`` over ``coords`` (flat indices)."""
    x = np.array(x, dtype=np.float64)
    flat = x.reshape(-1)
    coords = range(flat.size) if coords is None else coords
    g = np.zeros(flat.size)
    for i in coords:
        old = flat[i]
        flat[i] = old + h
        fp = f(x)
        flat[i] = old - h
        fm = f(x)
        flat[i] = old
        g[i] = (fp - fm) / (2 * h)
    return g.reshape(x.shape)


def rel_err(auto, num, coords=None):
    a, n = np.ravel(auto), np.ravel(num)
    if coords is not None:
        a, n = a[list(coords)], n[list(coords)]
    return float(np.max(np.abs(a - n)) / max(np.max(np.abs(n)), 1e-8))


def check_function(fn, inputs, rng, max_coords=None):
    """Gradient check of ``fn(*tensors)`` (any output shape) w.r.t. all ``inputs``."""
    out_shape = np.shape(fn(*[Tensor(x) for x in inputs]).value)
    w = rng.normal(size=out_shape)

    def scalar(*ts):
        return ad.sum(fn(*ts) * w)

    grads = ad.grad_of(scalar, *inputs)
    worst = 0.0
    for k, x in enumerate(inputs):
        coords = None
        if max_coords is not None and np.size(x) > max_coords:
            coords = rng.choice(np.size(x), max_coords, replace=False)

        def f(xk, k=k):
            args = [Tensor(v) for v in inputs]
            args[k] = Tensor(xk)
            return float(scalar(*args).value)
        num = numeric_grad(f, x, coords=coords)
        worst = max(worst, rel_err(grads[k], num, coords))
    return worst


def _run(name, make, n, fn, rng, max_coords=None):
    t0 = time.perf_counter()
    worst = 0.0
    for _ in range(n):
        worst = max(worst, check_function(fn, make(rng), rng, max_coords))
    return CheckResult(name, n, worst, time.perf_counter() - t0)


def _away_from_zero(rng, shape, margin=0.1):
    x = rng.normal(size=shape)
    return np.where(np.abs(x) < margin, np.sign(x + 1e-12) * margin, x)


def op_suite(n=20, seed=0):
    from .body import default_model, forward_kinematics, project_weak_perspective
    from .rotations import axis_angle_to_matrix, rot6d_to_matrix

    rng = np.random.default_rng(seed)
    N = lambda *s: (lambda r: [r.normal(size=s)])  # noqa: E731
    two = lambda s1, s2: (lambda r: [r.normal(size=s1), r.normal(size=s2)])  # noqa: E731
    body = default_model()
    cases = [
        ("add (broadcast)", two((3, 4), (4,)), lambda a, b: a + b),
        ("sub (broadcast)", two((3, 1), (3, 4)), lambda a, b: a - b),
        ("mul (broadcast)", two((2, 3, 4), (3, 1)), lambda a, b: a * b),
        ("div", lambda r: [r.normal(size=(3, 4)), r.uniform(0.5, 2, size=(3, 4))], lambda a, b: a / b),
        ("neg", N(5), lambda a: -a),
        ("power", lambda r: [r.uniform(0.5, 2, size=(4,))], lambda a: a ** 3),
        ("sigmoid", N(3, 5), ad.sigmoid),
        ("tanh", N(3, 5), ad.tanh),
        ("relu", lambda r: [_away_from_zero(r, (3, 5))], ad.relu),
        ("exp", N(3, 5), ad.exp),
        ("log", lambda r: [r.uniform(0.5, 3, size=(6,))], ad.log),
        ("sqrt", lambda r: [r.uniform(0.5, 3, size=(6,))], ad.sqrt),
        ("sin", N(6), ad.sin),
        ("cos", N(6), ad.cos),
        ("softmax", N(4, 3), lambda a: ad.softmax(a, axis=-1)),
        ("matmul (batched)", two((2, 3, 4), (4, 5)), ad.matmul),
        ("matmul (vector)", two((3, 4), (4,)), ad.matmul),
        ("cross", two((5, 3), (5, 3)), ad.cross),
        ("concat", two((2, 3), (2, 4)), lambda a, b: ad.concat([a, b], axis=-1)),
        ("stack", two((2, 3), (2, 3)), lambda a, b: ad.stack([a, b], axis=1)),
        ("index (basic)", N(4, 5), lambda a: a[1:3, ::2]),
        ("index (fancy, repeats)", N(4, 5), lambda a: a[np.array([0, 2, 2, 3])]),
        ("reshape", N(2, 6), lambda a: ad.reshape(a, (3, 4)) * 1.0),
        ("swapaxes", N(2, 3, 4), lambda a: ad.swapaxes(a, 0, 2)),
        ("expand_dims", N(3, 4), lambda a: ad.expand_dims(a, 1)),
        ("sum (axis)", N(3, 4), lambda a: ad.sum(a, axis=1)),
        ("mean (axis)", N(3, 4), lambda a: ad.mean(a, axis=0, keepdims=True)),
        ("sqnorm (axis)", N(3, 4), lambda a: ad.sqnorm(a, axis=1)),
        ("rot6d_to_matrix", N(5, 6), rot6d_to_matrix),
        ("axis_angle_to_matrix", N(5, 3), axis_angle_to_matrix),
        ("forward_kinematics", lambda r: [0.3 * r.normal(size=(2, 24, 3)), r.normal(size=(2, 10))],
         lambda th, be: ad.concat([ad.reshape(t, (2, -1)) for t in forward_kinematics(body, th, be)], axis=-1)),
        ("weak_perspective", lambda r: [r.normal(size=(2, 5, 3)), r.uniform(0.5, 1.5, size=(2,)),
                                        r.normal(size=(2, 2))], project_weak_perspective),
    ]
    return [_run(name, make, n, fn, rng) for name, make, fn in cases]


def tiny_run_config(**temporal):
    from .config import RunConfig
    from .regressor import RegressorConfig
    from .temporal import TemporalConfig
    t = dict(seq_len=6, feature_dim=8, hidden_dim=4, forecast_dim=4, integ_dim=6,
             bottleneck_dim=3, attention_hidden=(4,))
    t.update(temporal)
    return RunConfig(temporal=TemporalConfig(**t), regressor=RegressorConfig(n_iter=2, hidden=(8,), final_gain=0.5))


def module_suite(n=20, seed=0):
    from .layers import GRUCell, Linear

    rng = np.random.default_rng(seed + 1)

    def cell_from(w_in, w_hid, b):
        cell = GRUCell.__new__(GRUCell)
        cell.d_in, cell.d_h = w_in.shape[0], w_hid.shape[0]
        cell.w_in, cell.w_hid, cell.bias = w_in, w_hid, b
        return cell

    def gru_make(steps):
        def make(r):
            cell = GRUCell(3, 4, r)
            return [cell.w_in.value, cell.w_hid.value, cell.bias.value,
                    r.normal(size=(2, steps, 3)), r.normal(size=(2, 4))]
        return make

    def lin_make(r):
        layer = Linear(5, 3, r)
        return [layer.weight.value, layer.bias.value, r.normal(size=(4, 5))]

    def lin_fn(w, b, x):
        layer = Linear.__new__(Linear)
        layer.weight, layer.bias = w, b
        return layer(x)

    return [
        _run("gru step", gru_make(1), n, lambda w, u, b, x, h: cell_from(w, u, b)(x[:, 0], h), rng),
        _run("gru rollout", gru_make(5), n, lambda w, u, b, x, h: cell_from(w, u, b).rollout(x) + 0 * h, rng),
        _run("linear", lin_make, n, lin_fn, rng),
    ]


def _param_check(name, build, n, rng, coords_per_instance=4):
    """Check d loss / d (every parameter tensor and the input) on random coordinates."""
    t0 = time.perf_counter()
    worst = 0.0
    for i in range(n):
        model, inputs, loss_fn = build(rng, i)
        leaves = dict(model.named_parameters())
        x = Tensor(inputs, requires_grad=True)
        loss = loss_fn(model, x)
        for p in leaves.values():
            p.grad = None
        ad.backward(loss)
        targets = list(leaves.items()) + [("input", x)]
        for _, t in targets:
            k = min(coords_per_instance, t.value.size)
            coords = rng.choice(t.value.size, k, replace=False)

            def f(v, t=t):
                saved, t.value = t.value, v
                try:
                    return float(loss_fn(model, Tensor(x.value)).value)
                finally:
                    t.value = saved
            num = numeric_grad(f, t.value, coords=coords)
            auto = t.grad if t.grad is not None else np.zeros_like(t.value)
            worst = max(worst, rel_err(auto, num, coords))
    return CheckResult(name, n, worst, time.perf_counter() - t0)


def chain_suite(n=20, seed=0):
    from .body import BodyParams, default_model, forward_kinematics
    from .model import TemporalPoseModel
    from .objective import LossWeights, Targets, window_loss
    from .rotations import axis_angle_to_matrix

    body = default_model()
    J, B = body.joint_count, body.shape_dim
    rng = np.random.default_rng(seed + 2)
    mean = BodyParams(np.zeros((J, 3)), np.zeros(B), np.array([0.9, 0.0, 0.0]))

    def targets(r, m):
        theta = 0.2 * r.normal(size=(m, J, 3))
        beta = r.normal(size=(m, B))
        cam = np.column_stack([r.uniform(0.7, 1.1, m), 0.1 * r.normal(size=(m, 2))])
        joints, _ = forward_kinematics(body, theta, beta, with_vertices=False)
        return Targets(axis_angle_to_matrix(theta), beta, cam, joints)

    def build_with(temporal, supervision="current"):
        def build(r, i):
            cfg = tiny_run_config(**temporal)
            cfg.seed = int(r.integers(1 << 30))
            cfg.loss = LossWeights(supervision_target=supervision)
            model = TemporalPoseModel(cfg, J, B, mean)
            tg = {k: targets(r, 2) for k in ("current", "prev", "next")}
            feats = r.normal(size=(2, cfg.temporal.seq_len, cfg.temporal.feature_dim))

            def loss_fn(m, x):
                preds, _ = m.forward_train(x)
                return window_loss(preds, tg, body, m.config.loss)[0]
            return model, feats, loss_fn
        return build

    def encoder_build(r, i):
        cfg = tiny_run_config()
        cfg.seed = int(r.integers(1 << 30))
        model = TemporalPoseModel(cfg, J, B, mean)
        w = r.normal(size=cfg.temporal.integ_dim)
        feats = r.normal(size=(2, cfg.temporal.seq_len, cfg.temporal.feature_dim))

        def loss_fn(m, x):
            return ad.sum(m.encoder(x).gp_int * w)
        return model, feats, loss_fn

    return [
        _param_check("encoder + integration", encoder_build, n, rng),
        _param_check("chain (-res +PF)", build_with({}), n, rng),
        _param_check("chain (+res -PF)", build_with({"use_residual": True, "poseforecast": False}), n, rng),
        _param_check("chain (adjacent targets)", build_with({}, "adjacent"), n, rng),
    ]


def full_suite(n=20, seed=0):
    return op_suite(n, seed) + module_suite(n, seed) + chain_suite(n, seed)
