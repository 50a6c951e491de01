"""Author the bundled 24-joint body model (src/posecast/assets/body24.json).

Topology follows the usual 24-joint SMPL ordering; offsets are rough adult
proportions in meters (y up, x toward the body's left).  Deterministic.
"""
import json
from pathlib import Path

import numpy as np

JOINTS = [
    # name, parent, rest offset from parent
    ("pelvis", -1, (0.0, 0.0, 0.0)),
    ("left_hip", 0, (0.09, -0.06, 0.0)),
    ("right_hip", 0, (-0.09, -0.06, 0.0)),
    ("spine1", 0, (0.0, 0.11, -0.02)),
    ("left_knee", 1, (0.02, -0.38, 0.0)),
    ("right_knee", 2, (-0.02, -0.38, 0.0)),
    ("spine2", 3, (0.0, 0.13, 0.0)),
    ("left_ankle", 4, (0.0, -0.40, -0.03)),
    ("right_ankle", 5, (0.0, -0.40, -0.03)),
    ("spine3", 6, (0.0, 0.06, 0.02)),
    ("left_foot", 7, (0.01, -0.05, 0.12)),
    ("right_foot", 8, (-0.01, -0.05, 0.12)),
    ("neck", 9, (0.0, 0.21, -0.03)),
    ("left_collar", 9, (0.07, 0.12, -0.01)),
    ("right_collar", 9, (-0.07, 0.12, -0.01)),
    ("head", 12, (0.0, 0.09, 0.05)),
    ("left_shoulder", 13, (0.11, 0.04, -0.01)),
    ("right_shoulder", 14, (-0.11, 0.04, -0.01)),
    ("left_elbow", 16, (0.26, 0.0, -0.02)),
    ("right_elbow", 17, (-0.26, 0.0, -0.02)),
    ("left_wrist", 18, (0.25, 0.01, 0.0)),
    ("right_wrist", 19, (-0.25, 0.01, 0.0)),
    ("left_hand", 20, (0.08, -0.01, -0.01)),
    ("right_hand", 21, (-0.08, -0.01, -0.01)),
]

EVAL_JOINTS = [
    "right_ankle", "right_knee", "right_hip", "left_hip", "left_knee", "left_ankle",
    "right_wrist", "right_elbow", "right_shoulder", "left_shoulder", "left_elbow", "left_wrist",
    "neck", "head",
]

LEG = {"left_knee", "right_knee", "left_ankle", "right_ankle", "left_foot", "right_foot"}
TORSO = {"spine1", "spine2", "spine3", "neck", "head"}
ARM = {"left_shoulder", "right_shoulder", "left_elbow", "right_elbow", "left_wrist", "right_wrist"}

SHAPE_DIM = 10
VERTEX_COUNT = 64


def build(seed=0):
    rng = np.random.default_rng(seed)
    basis = np.zeros((len(JOINTS), SHAPE_DIM, 3))
    for k, (name, _, off) in enumerate(JOINTS):
        off = np.asarray(off)
        basis[k, 0] = 0.04 * off                      # overall stature
        basis[k, 1] = 0.03 * off * (name in LEG)      # leg length
        basis[k, 2] = 0.03 * off * (name in TORSO)    # torso length
        basis[k, 3] = 0.03 * off * (name in ARM)      # arm length
        basis[k, 4:] = rng.normal(0.0, 0.003, size=(SHAPE_DIM - 4, 3))
    basis[0] = 0.0

    children = {k: [c for c, j in enumerate(JOINTS) if j[1] == k] for k in range(len(JOINTS))}
    vertices = []
    # two points along every bone, in the frame of the joint that drives it
    for c, (name, parent, off) in enumerate(JOINTS):
        if parent < 0:
            continue
        for frac in (0.3, 0.7):
            radial = rng.normal(0.0, 0.04, size=3)
            vertices.append({"joint": JOINTS[parent][0],
                             "offset": (frac * np.asarray(off) + radial).round(5).tolist()})
    leaves = [k for k in range(len(JOINTS)) if not children[k]]
    k = 0
    while len(vertices) < VERTEX_COUNT:
        j = leaves[k % len(leaves)]
        vertices.append({"joint": JOINTS[j][0],
                         "offset": rng.normal(0.0, 0.05, size=3).round(5).tolist()})
        k += 1

    joints = [
        {"name": n, "parent": p, "rest_offset": list(o), "shape_basis": basis[i].round(6).tolist()}
        for i, (n, p, o) in enumerate(JOINTS)
    ]
    return {"joints": joints, "vertices": vertices, "eval_joints": EVAL_JOINTS}


if __name__ == "__main__":
    out = Path(__file__).resolve().parents[1] / "src" / "posecast" / "assets" / "body24.json"
    out.write_text(json.dumps(build(), indent=1) + "\n")
    print(f"wrote {out}")
