"""Simplified articulated body: kinematic tree, shape-dependent bone offsets,
rigidly attached surface points, and weak-perspective projection.

Stands in for SMPL with the same parameter layout (24 axis-angle joints,
10 shape coefficients) but rigid vertex attachment instead of skinning.
"""
from __future__ import annotations

import json
from dataclasses import dataclass, field
from importlib import resources
from pathlib import Path

import numpy as np

from . import autodiff as ad
from .autodiff import Tensor
from .rotations import axis_angle_to_matrix


class BodyModelError(ValueError):
    pass


@dataclass(frozen=True)
class BodyParams:
    """Per-frame body parameters, batched over leading axes.

    theta: (..., J, 3) axis-angle, joint 0 is the global orientation
    beta:  (..., B) shape coefficients
    cam:   (..., 3) weak-perspective (s, tx, ty)
    """

    theta: np.ndarray
    beta: np.ndarray
    cam: np.ndarray

    @property
    def scale(self):
        return self.cam[..., 0]

    @property
    def trans(self):
        return self.cam[..., 1:3]

    def as_vector(self):
        lead = self.beta.shape[:-1]
        return np.concatenate([self.theta.reshape(lead + (-1,)), self.beta, self.cam], axis=-1)

    @classmethod
    def from_vector(cls, vec, joint_count, shape_dim):
        vec = np.asarray(vec, dtype=np.float64)
        lead = vec.shape[:-1]
        n = 3 * joint_count
        return cls(theta=vec[..., :n].reshape(lead + (joint_count, 3)),
                   beta=vec[..., n:n + shape_dim],
                   cam=vec[..., n + shape_dim:n + shape_dim + 3])

    def __getitem__(self, key):
        return BodyParams(self.theta[key], self.beta[key], self.cam[key])

    def __len__(self):
        return self.beta.shape[0]


@dataclass(frozen=True, eq=False)
class BodyModel:
    names: tuple
    parents: np.ndarray          # (J,), parents[0] == -1
    rest_offsets: np.ndarray     # (J, 3) meters, in the parent frame
    shape_basis: np.ndarray      # (J, B, 3) meters per unit coefficient
    vertex_joint: np.ndarray     # (V,)
    vertex_offsets: np.ndarray   # (V, 3) meters, in the joint frame
    eval_joints: np.ndarray      # indices used by the joint metrics
    levels: tuple = field(repr=False, default=())

    @property
    def joint_count(self):
        return len(self.names)

    @property
    def shape_dim(self):
        return self.shape_basis.shape[1]

    @property
    def vertex_count(self):
        return len(self.vertex_joint)

    @property
    def param_dim(self):
        return 3 * self.joint_count + self.shape_dim + 3

    def bone_offsets(self, beta):
        """Rest offset plus shape deltas, (..., J, 3).  Works on arrays and Tensors."""
        J, B = self.joint_count, self.shape_dim
        basis = self.shape_basis.transpose(1, 0, 2).reshape(B, 3 * J)
        if isinstance(beta, Tensor):
            lead = beta.shape[:-1]
            return ad.reshape(ad.matmul(beta, basis), lead + (J, 3)) + self.rest_offsets
        beta = np.asarray(beta, dtype=np.float64)
        return (beta @ basis).reshape(beta.shape[:-1] + (J, 3)) + self.rest_offsets

    def to_dict(self):
        return {
            "joints": [
                {"name": n, "parent": int(p), "rest_offset": self.rest_offsets[j].tolist(),
                 "shape_basis": self.shape_basis[j].tolist()}
                for j, (n, p) in enumerate(zip(self.names, self.parents))
            ],
            "vertices": [
                {"joint": self.names[j], "offset": o.tolist()}
                for j, o in zip(self.vertex_joint, self.vertex_offsets)
            ],
            "eval_joints": [self.names[j] for j in self.eval_joints],
        }


def _tree_levels(parents):
    """Group joints by depth; raises on cycles or dangling parents."""
    J = len(parents)
    depth = np.full(J, -1)
    depth[0] = 0
    for j in range(J):
        chain, k = [], j
        while depth[k] < 0:
            chain.append(k)
            k = parents[k]
            if k < 0 or k >= J:
                raise BodyModelError(f"joints[{chain[-1]}].parent: {k} is not a joint index")
            if k in chain:
                raise BodyModelError(f"joints[{j}].parent: cycle through joint {k}")
        for c in reversed(chain):
            depth[c] = depth[parents[c]] + 1
    return tuple(np.flatnonzero(depth == d) for d in range(depth.max() + 1))


def model_from_dict(doc):
    joints = doc.get("joints")
    if not joints:
        raise BodyModelError("joints: missing or empty")
    names = tuple(j["name"] for j in joints)
    if len(set(names)) != len(names):
        raise BodyModelError("joints.name: duplicate names")
    lookup = {n: i for i, n in enumerate(names)}
    parents = []
    for i, j in enumerate(joints):
        p = j.get("parent")
        if isinstance(p, str):
            p = lookup.get(p, None)
            if p is None:
                raise BodyModelError(f"joints[{i}].parent: unknown joint name {j['parent']!r}")
        if p is None:
            raise BodyModelError(f"joints[{i}].parent: missing")
        parents.append(int(p))
    if parents[0] not in (-1, 0):
        raise BodyModelError(f"joints[0].parent: root must be -1 (or itself), got {parents[0]}")
    parents[0] = -1
    for i, p in enumerate(parents[1:], start=1):
        if p == -1:
            raise BodyModelError(f"joints[{i}].parent: only joint 0 may be a root")
    parents = np.array(parents, dtype=np.int64)
    levels = _tree_levels(parents)

    rest = np.array([j.get("rest_offset", None) for j in joints], dtype=np.float64)
    if rest.shape != (len(names), 3):
        raise BodyModelError(f"joints.rest_offset: expected {len(names)} x 3, got {rest.shape}")
    widths = {len(j.get("shape_basis", [])) for j in joints}
    if len(widths) != 1:
        raise BodyModelError(f"joints.shape_basis: inconsistent shape dimension across joints {sorted(widths)}")
    B = widths.pop()
    basis = np.array([j.get("shape_basis") for j in joints], dtype=np.float64).reshape(len(names), B, -1)
    if basis.shape[2] != 3:
        raise BodyModelError("joints.shape_basis: each column must be a 3-vector")

    verts = doc.get("vertices") or []
    vj, vo = [], []
    for i, v in enumerate(verts):
        j = v.get("joint")
        j = lookup.get(j, None) if isinstance(j, str) else j
        if j is None or not 0 <= int(j) < len(names):
            raise BodyModelError(f"vertices[{i}].joint: unknown joint {v.get('joint')!r}")
        off = v.get("offset")
        if off is None or len(off) != 3:
            raise BodyModelError(f"vertices[{i}].offset: expected 3 numbers")
        vj.append(int(j))
        vo.append(off)

    ev = doc.get("eval_joints")
    if ev is None:
        ev = list(names)
    try:
        eval_idx = np.array([lookup[n] if isinstance(n, str) else int(n) for n in ev], dtype=np.int64)
    except KeyError as exc:
        raise BodyModelError(f"eval_joints: unknown joint {exc.args[0]!r}") from None

    return BodyModel(
        names=names, parents=parents, rest_offsets=rest, shape_basis=basis,
        vertex_joint=np.array(vj, dtype=np.int64),
        vertex_offsets=np.array(vo, dtype=np.float64).reshape(-1, 3),
        eval_joints=eval_idx, levels=levels,
    )


def load_model(path):
    with open(path) as fh:
        return model_from_dict(json.load(fh))


def save_model(model, path):
    Path(path).write_text(json.dumps(model.to_dict(), indent=1))


def default_model():
    """The bundled 24-joint, 10-coefficient, 64-vertex model."""
    text = resources.files("posecast.assets").joinpath("body24.json").read_text()
    return model_from_dict(json.loads(text))


def forward_kinematics(model, theta, beta, with_vertices=True):
    """Axis-angle pose ``(..., J, 3)`` and shape ``(..., B)`` to joints and vertices."""
    return forward_kinematics_rotmat(model, axis_angle_to_matrix(theta), beta, with_vertices)


def forward_kinematics_rotmat(model, rotmats, beta, with_vertices=True):
    """Same as :func:`forward_kinematics` but from local rotation matrices ``(..., J, 3, 3)``.

    Returns ``(joints (..., J, 3), vertices (..., V, 3))``, Tensors if any input is one.
    """
    is_tensor = isinstance(rotmats, Tensor) or isinstance(beta, Tensor)
    R = ad.as_tensor(rotmats)
    b = ad.as_tensor(beta)
    J = model.joint_count
    if R.shape[-3:] != (J, 3, 3):
        raise ad.ShapeError(f"forward_kinematics: rotations {R.shape}, expected (..., {J}, 3, 3)")
    if b.shape[-1] != model.shape_dim:
        raise ad.ShapeError(f"forward_kinematics: beta {b.shape}, expected (..., {model.shape_dim})")
    lead = R.shape[:-3]
    n = int(np.prod(lead)) if lead else 1
    R = ad.reshape(R, (n, J, 3, 3))
    b = ad.reshape(b, (n, model.shape_dim))
    offsets = ad.expand_dims(model.bone_offsets(b), -1)          # (n, J, 3, 1)

    # walk the tree one depth level at a time
    order = np.concatenate(model.levels)
    slot = np.empty(J, dtype=np.int64)
    slot[order] = np.arange(J)
    root = model.levels[0]
    G_lv = [R[:, root]]
    P_lv = [ad.reshape(offsets[:, root], (n, len(root), 3))]
    for prev, idx in zip(model.levels[:-1], model.levels[1:]):
        local = np.searchsorted(prev, model.parents[idx])
        Gp = G_lv[-1][:, local]
        Pp = P_lv[-1][:, local]
        step = ad.reshape(ad.matmul(Gp, offsets[:, idx]), (n, len(idx), 3))
        P_lv.append(Pp + step)
        G_lv.append(ad.matmul(Gp, R[:, idx]))
    G_all = ad.concat(G_lv, axis=1)[:, slot]
    P_all = ad.concat(P_lv, axis=1)[:, slot]

    joints = ad.reshape(P_all, lead + (J, 3))
    if model.vertex_count and with_vertices:
        Gv = G_all[:, model.vertex_joint]
        vo = model.vertex_offsets[None, :, :, None]
        verts = ad.reshape(ad.matmul(Gv, vo), (n, model.vertex_count, 3)) + P_all[:, model.vertex_joint]
        verts = ad.reshape(verts, lead + (model.vertex_count, 3))
    else:
        verts = Tensor(np.zeros(lead + (0, 3)))
    if is_tensor:
        return joints, verts
    return joints.value, verts.value


def project_weak_perspective(points, scale, trans):
    """``s * (x, y) + t`` per point.  points (..., P, 3), scale (...,), trans (..., 2)."""
    if any(isinstance(x, Tensor) for x in (points, scale, trans)):
        points, scale, trans = ad.as_tensor(points), ad.as_tensor(scale), ad.as_tensor(trans)
        s = ad.expand_dims(ad.expand_dims(scale, -1), -1)
        return s * points[..., 0:2] + ad.expand_dims(trans, -2)
    points = np.asarray(points, dtype=np.float64)
    scale = np.asarray(scale, dtype=np.float64)
    trans = np.asarray(trans, dtype=np.float64)
    return scale[..., None, None] * points[..., :2] + trans[..., None, :]
