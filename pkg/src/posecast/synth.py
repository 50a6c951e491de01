"""Synthetic motion, synthetic static features, windowing, and the dataset file.

Motion: every pose channel is a sum of a few sinusoids whose frequencies sit
exactly on the DFT grid of the sequence, so the band limit is exact.
Features: a frozen random two-layer map of the ground-truth parameters plus
per-frame Gaussian noise, with occasional outlier frames whose noise is
scaled up.  This mimics a per-frame image encoder with jitter.
"""
from __future__ import annotations

import hashlib
import json
import logging
from dataclasses import asdict, dataclass, field
from pathlib import Path

import numpy as np

from .body import BodyParams, default_model, forward_kinematics
from .rotations import axis_angle_to_matrix

log = logging.getLogger(__name__)

FORMAT_NAME = "posecast-dataset"
FORMAT_VERSION = 1
SPLITS = ("train", "val", "eval")


class DatasetError(ValueError):
    pass


@dataclass
class SynthConfig:
    n_train: int = 200
    n_val: int = 20
    n_eval: int = 40
    frames: int = 60
    fps: float = 25.0
    max_freq_hz: float = 1.5
    n_components: int = 3
    amplitude: float = 0.1          # rad, scales every pose channel incl. the static offset
    root_amplitude: float = 0.08
    camera_motion: float = 0.05
    beta_std: float = 1.0
    feature_dim: int = 128
    feature_hidden: int = 128
    feature_gain: float = 0.3       # first-layer weight scale of the feature map
    noise_std: float = 0.1
    outlier_prob: float = 0.05
    outlier_factor: float = 5.0

    def split_sizes(self):
        return {"train": self.n_train, "val": self.n_val, "eval": self.n_eval}

    def validate(self, param_dim):
        if self.feature_dim < param_dim:
            raise DatasetError(f"feature_dim {self.feature_dim} < parameter dimension {param_dim}: "
                               "features could not carry the pose")
        if self.frames < 3 or self.fps <= 0:
            raise DatasetError("need frames >= 3 and fps > 0")
        if not 0 <= self.outlier_prob <= 1:
            raise DatasetError("outlier_prob must lie in [0, 1]")
        return self


@dataclass
class MotionSequence:
    name: str
    params: BodyParams      # theta (N, J, 3), beta (N, B), cam (N, 3)
    joints: np.ndarray      # (N, J, 3)
    vertices: np.ndarray    # (N, V, 3)
    fps: float

    def __len__(self):
        return len(self.joints)


@dataclass
class FeatureSequence:
    features: np.ndarray                     # (N, d_f)
    meta: dict = field(default_factory=dict)  # seed, noise level, outlier frames

    def __len__(self):
        return len(self.features)


def sequence_rng(master_seed, split, index, stream):
    """Independent generator per (split, sequence, stream) from one master seed."""
    key = (SPLITS.index(split) if isinstance(split, str) else int(split), int(index), int(stream))
    return np.random.Generator(np.random.PCG64(np.random.SeedSequence(master_seed, spawn_key=key)))


def _band_limited(rng, n_frames, fps, max_freq_hz, n_components, channels):
    """Sum of sinusoids on DFT bins 1..k_max; returns (n_frames, channels) with unit-ish scale."""
    k_max = max(1, int(np.floor(max_freq_hz * n_frames / fps)))
    t = np.arange(n_frames)
    out = np.zeros((n_frames, channels))
    for _ in range(n_components):
        k = rng.integers(1, k_max + 1, size=channels)
        phase = rng.uniform(0, 2 * np.pi, size=channels)
        amp = rng.uniform(0.3, 1.0, size=channels) / n_components
        out += amp * np.sin(2 * np.pi * k * t[:, None] / n_frames + phase)
    return out


def generate_motion(config, seed, model=None, name="seq", split="train", index=0):
    """One motion sequence, fully determined by ``(config, seed, split, index)``."""
    model = model or default_model()
    rng = sequence_rng(seed, split, index, stream=0)
    N, J = config.frames, model.joint_count
    static = rng.normal(0.0, 0.5, size=(J, 3))
    wave = _band_limited(rng, N, config.fps, config.max_freq_hz, config.n_components, 3 * J).reshape(N, J, 3)
    scale = np.full((J, 1), config.amplitude)
    scale[0] = config.root_amplitude
    theta = scale * (static + wave)
    beta = np.clip(rng.normal(0.0, config.beta_std, size=model.shape_dim), -3.0, 3.0)
    cam_wave = _band_limited(rng, N, config.fps, config.max_freq_hz / 3, 1, 3)
    cam = np.array([0.9, 0.0, 0.0]) + config.camera_motion * cam_wave
    betas = np.tile(beta, (N, 1))
    joints, verts = forward_kinematics(model, theta, betas)
    return MotionSequence(name=name, params=BodyParams(theta, betas, cam), joints=joints,
                          vertices=verts, fps=config.fps)


class FeatureMap:
    """Frozen random two-layer map from the parameter vector to feature space."""

    def __init__(self, param_dim, config, seed):
        config.validate(param_dim)
        rng = np.random.default_rng(np.random.SeedSequence(seed, spawn_key=(99,)))
        self.w1 = rng.normal(0.0, config.feature_gain / np.sqrt(param_dim), size=(param_dim, config.feature_hidden))
        self.b1 = rng.normal(0.0, 0.1, size=config.feature_hidden)
        self.w2 = rng.normal(0.0, 1.0 / np.sqrt(config.feature_hidden), size=(config.feature_hidden, config.feature_dim))
        # per-block normalisation so pose, shape and camera all register
        self.offset = None
        self.scale = None

    def normalise(self, vec, joint_count, shape_dim):
        n = 3 * joint_count
        out = vec.copy()
        out[..., :n] /= 0.1
        out[..., n:n + shape_dim] /= 1.0
        out[..., n + shape_dim] = (out[..., n + shape_dim] - 0.9) / 0.05
        out[..., n + shape_dim + 1:] /= 0.05
        return out

    def __call__(self, params, joint_count, shape_dim):
        p = self.normalise(params.as_vector(), joint_count, shape_dim)
        return np.tanh(p @ self.w1 + self.b1) @ self.w2


def encode_features(motion, config, seed, feature_map=None, model=None, split="train", index=0):
    """Static features for every frame: phi(params) + noise, with outlier frames."""
    model = model or default_model()
    fmap = feature_map or FeatureMap(model.param_dim, config, seed)
    clean = fmap(motion.params, model.joint_count, model.shape_dim)
    rng = sequence_rng(seed, split, index, stream=1)
    noise = rng.normal(0.0, config.noise_std, size=clean.shape)
    outliers = rng.random(len(clean)) < config.outlier_prob
    noise[outliers] *= config.outlier_factor
    meta = {"seed": int(seed), "noise_std": config.noise_std, "outlier_prob": config.outlier_prob,
            "outlier_factor": config.outlier_factor, "outlier_frames": np.flatnonzero(outliers).tolist()}
    return FeatureSequence(clean + noise, meta)


# ------------------------------------------------------------------- dataset

@dataclass
class Dataset:
    config: SynthConfig
    master_seed: int
    splits: dict            # split -> list[(MotionSequence, FeatureSequence)]
    mean_params: BodyParams  # theta (J, 3), beta (B,), cam (3,)
    joint_count: int
    shape_dim: int
    vertex_count: int

    @property
    def feature_dim(self):
        return self.config.feature_dim

    @property
    def fps(self):
        return self.config.fps

    def sequences(self, split):
        return self.splits[split]

    def arrays(self, split):
        """Stacked arrays for fast window gathering (all sequences share a length)."""
        seqs = self.splits[split]
        return SplitArrays(
            names=[m.name for m, _ in seqs],
            features=np.stack([f.features for _, f in seqs]),
            theta=np.stack([m.params.theta for m, _ in seqs]),
            beta=np.stack([m.params.beta for m, _ in seqs]),
            cam=np.stack([m.params.cam for m, _ in seqs]),
            joints=np.stack([m.joints for m, _ in seqs]),
            vertices=np.stack([m.vertices for m, _ in seqs]),
            fps=self.fps,
        )


@dataclass
class SplitArrays:
    names: list
    features: np.ndarray   # (S, N, d_f)
    theta: np.ndarray      # (S, N, J, 3)
    beta: np.ndarray       # (S, N, B)
    cam: np.ndarray        # (S, N, 3)
    joints: np.ndarray     # (S, N, J, 3)
    vertices: np.ndarray   # (S, N, V, 3)
    fps: float
    _rotmat: np.ndarray = field(default=None, repr=False)

    @property
    def rotmat(self):
        if self._rotmat is None:
            self._rotmat = axis_angle_to_matrix(self.theta)
        return self._rotmat

    @property
    def frames(self):
        return self.features.shape[1]


def generate_dataset(config, master_seed, model=None):
    model = model or default_model()
    config.validate(model.param_dim)
    fmap = FeatureMap(model.param_dim, config, master_seed)
    splits = {}
    for split, count in config.split_sizes().items():
        seqs = []
        for i in range(count):
            motion = generate_motion(config, master_seed, model, name=f"{split}_{i:03d}", split=split, index=i)
            feats = encode_features(motion, config, master_seed, fmap, model, split=split, index=i)
            seqs.append((motion, feats))
        splits[split] = seqs
    train = splits["train"] or splits["eval"]
    mean = BodyParams(
        theta=np.mean([m.params.theta.mean(axis=0) for m, _ in train], axis=0),
        beta=np.mean([m.params.beta.mean(axis=0) for m, _ in train], axis=0),
        cam=np.mean([m.params.cam.mean(axis=0) for m, _ in train], axis=0),
    )
    return Dataset(config, int(master_seed), splits, mean, model.joint_count, model.shape_dim, model.vertex_count)


# ------------------------------------------------------------------- windows

@dataclass
class SequenceWindow:
    sequence: str
    start: int                 # first frame of the window (0-based)
    current_frame: int         # 0-based index of the window's current frame in the sequence
    features: np.ndarray       # (T, d_f)
    current: BodyParams
    prev: BodyParams
    next: BodyParams
    current_joints: np.ndarray


def current_offset(T):
    """0-based position of the current frame inside a window of T frames."""
    return T // 2 - 1


def window_starts(n_frames, T, stride=1):
    if n_frames < T:
        return np.zeros(0, dtype=np.int64)
    return np.arange(0, n_frames - T + 1, stride)


def make_windows(features, motion, T, stride=1):
    if len(features) != len(motion):
        raise DatasetError(f"feature sequence has {len(features)} frames, motion has {len(motion)}")
    starts = window_starts(len(motion), T, stride)
    if not len(starts):
        log.warning("sequence %s: %d frames < window length %d, no windows", motion.name, len(motion), T)
    c = current_offset(T)
    out = []
    for s in starts:
        k = s + c
        out.append(SequenceWindow(
            sequence=motion.name, start=int(s), current_frame=int(k),
            features=features.features[s:s + T],
            current=motion.params[k], prev=motion.params[k - 1], next=motion.params[k + 1],
            current_joints=motion.joints[k],
        ))
    return out


# --------------------------------------------------------------- file format

def _record_layout(J, B, V, d_f):
    return [["params", 3 * J + B + 3], ["joints", 3 * J], ["vertices", 3 * V], ["features", d_f]]


def save_dataset(dataset, path):
    """Text header line (JSON) followed by little-endian float64 frame records."""
    J, B, V, d_f = dataset.joint_count, dataset.shape_dim, dataset.vertex_count, dataset.feature_dim
    chunks, split_meta = [], {}
    for split in SPLITS:
        metas = []
        for motion, feats in dataset.splits.get(split, []):
            n = len(motion)
            rec = np.concatenate([
                motion.params.as_vector(), motion.joints.reshape(n, -1),
                motion.vertices.reshape(n, -1), feats.features,
            ], axis=1)
            chunks.append(np.ascontiguousarray(rec, dtype="<f8").tobytes())
            metas.append({"name": motion.name, "frames": n, "features": feats.meta})
        split_meta[split] = metas
    payload = b"".join(chunks)
    header = {
        "format": FORMAT_NAME, "version": FORMAT_VERSION,
        "config": asdict(dataset.config), "master_seed": dataset.master_seed,
        "feature_dim": d_f, "joint_count": J, "shape_dim": B, "vertex_count": V,
        "fps": dataset.fps, "byte_order": "little", "dtype": "float64",
        "record_layout": _record_layout(J, B, V, d_f),
        "mean_params": {"theta": dataset.mean_params.theta.tolist(),
                        "beta": dataset.mean_params.beta.tolist(),
                        "cam": dataset.mean_params.cam.tolist()},
        "splits": split_meta,
        "payload_bytes": len(payload),
        "sha256": hashlib.sha256(payload).hexdigest(),
    }
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "wb") as fh:
        fh.write(json.dumps(header, sort_keys=True).encode() + b"\n")
        fh.write(payload)
    return path


def read_header(path):
    with open(path, "rb") as fh:
        line = fh.readline()
    try:
        return json.loads(line)
    except json.JSONDecodeError as exc:
        raise DatasetError(f"{path}: unreadable header ({exc})") from None


def load_dataset(path, expect_feature_dim=None):
    with open(path, "rb") as fh:
        line = fh.readline()
        payload = fh.read()
    try:
        header = json.loads(line)
    except json.JSONDecodeError as exc:
        raise DatasetError(f"{path}: unreadable header ({exc})") from None
    if header.get("format") != FORMAT_NAME or header.get("version") != FORMAT_VERSION:
        raise DatasetError(f"{path}: format {header.get('format')!r} version {header.get('version')!r}, "
                           f"expected {FORMAT_NAME!r} version {FORMAT_VERSION}")
    if len(payload) != header["payload_bytes"] or hashlib.sha256(payload).hexdigest() != header["sha256"]:
        raise DatasetError(f"{path}: checksum mismatch (file truncated or corrupted)")
    d_f = header["feature_dim"]
    if expect_feature_dim is not None and expect_feature_dim != d_f:
        raise DatasetError(f"{path}: dataset feature_dim {d_f} does not match model feature_dim {expect_feature_dim}")
    J, B, V = header["joint_count"], header["shape_dim"], header["vertex_count"]
    width = sum(w for _, w in header["record_layout"])
    data = np.frombuffer(payload, dtype="<f8").astype(np.float64)
    cfg = SynthConfig(**header["config"])
    splits, pos = {}, 0
    p_dim = 3 * J + B + 3
    for split in SPLITS:
        seqs = []
        for meta in header["splits"].get(split, []):
            n = meta["frames"]
            rec = data[pos:pos + n * width].reshape(n, width)
            pos += n * width
            params = BodyParams.from_vector(rec[:, :p_dim], J, B)
            o = p_dim
            joints = rec[:, o:o + 3 * J].reshape(n, J, 3)
            o += 3 * J
            verts = rec[:, o:o + 3 * V].reshape(n, V, 3)
            o += 3 * V
            feats = rec[:, o:o + d_f]
            seqs.append((MotionSequence(meta["name"], params, joints, verts, header["fps"]),
                         FeatureSequence(feats, meta["features"])))
        splits[split] = seqs
    mp = header["mean_params"]
    mean = BodyParams(np.array(mp["theta"]), np.array(mp["beta"]), np.array(mp["cam"]))
    return Dataset(cfg, header["master_seed"], splits, mean, J, B, V)
