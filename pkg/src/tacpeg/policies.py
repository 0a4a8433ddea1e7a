"""Policies: random baseline, privileged expert, and ridge behavior cloning.

A policy maps one observation (composite image + prompt text) to one
corrective Action. The expert is privileged: the engine hands it the true
pose error instead of the image. Behavior cloning featurizes the 616 x 616
composite into 28 x 28 block means (largest-remainder partition, here
uniform 22 x 22 blocks), standardizes per feature with constants frozen at
training time, appends a bias, and solves the ridge normal equations

    W = (F^T F + lam I)^{-1} F^T A

for the 785 x 3 weight matrix. Models persist to a little-endian binary
file with a magic header and version.
"""

import hashlib
import struct
from dataclasses import dataclass, replace
from pathlib import Path

import numpy as np

from . import kernels
from .geometry import PegShape, ClearanceSpec, PoseError, is_insertable
from .labeling import (
    Action, LabelParams, label_action, detokenize_action, clamp_action, _clip,
)

FEATURE_GRID = 28
FEATURE_DIM = FEATURE_GRID * FEATURE_GRID  # 784 block means
WEIGHT_ROWS = FEATURE_DIM + 1  # plus bias

BC_MAGIC = b"TPBC1"
BC_FORMAT_VERSION = 1

SIGMA_FLOOR = 1e-8


class PolicyError(RuntimeError):
    """A policy failed to produce an action (crash, timeout, bad reply)."""


class Policy:
    """Base contract. Subclasses override act(); privileged ones override
    act_privileged() and set privileged = True."""

    name = "policy"
    deterministic = True
    privileged = False

    def reset(self, episode_seed: int) -> None:
        """Called by the engine at episode start; default is stateless."""

    def clone_for_episode(self, episode_seed: int) -> "Policy":
        """Episode-local handle; stateful policies return a fresh instance
        so parallel episodes cannot interleave their streams."""
        self.reset(episode_seed)
        return self

    def act(self, composite: np.ndarray, instruction: str) -> Action:
        raise NotImplementedError

    def act_privileged(self, pose_error: PoseError, shape: PegShape,
                       clearance: ClearanceSpec) -> Action:
        raise NotImplementedError

    def close(self) -> None:
        pass


class ZeroPolicy(Policy):
    name = "zero"

    def act(self, composite, instruction) -> Action:
        return Action(0.0, 0.0, 0.0)


class RandomPolicy(Policy):
    """Uniform actions in [-delta, delta]^2 x [-rz_cap, rz_cap].

    Each episode re-seeds the stream from (seed, episode_seed), so batch
    results do not depend on episode execution order.
    """

    name = "random"
    deterministic = False

    def __init__(self, seed: int = 0, delta_mm: float = 1.0, rz_cap_deg: float = 1.5):
        self.seed = int(seed)
        self.delta_mm = delta_mm
        self.rz_cap_deg = rz_cap_deg
        self._rng = np.random.default_rng([self.seed % (2 ** 63)])

    def reset(self, episode_seed: int) -> None:
        self._rng = np.random.default_rng([self.seed % (2 ** 63), int(episode_seed) % (2 ** 63)])

    def clone_for_episode(self, episode_seed: int) -> "RandomPolicy":
        p = RandomPolicy(self.seed, self.delta_mm, self.rz_cap_deg)
        p.reset(episode_seed)
        return p

    def act(self, composite, instruction) -> Action:
        return Action(
            float(self._rng.uniform(-self.delta_mm, self.delta_mm)),
            float(self._rng.uniform(-self.delta_mm, self.delta_mm)),
            float(self._rng.uniform(-self.rz_cap_deg, self.rz_cap_deg)),
        )


class OraclePolicy(Policy):
    """Privileged expert: emits the label for the true pose error.

    The label formula parks translation anywhere in the [-c/2, c/2] band,
    which for non-square cross-sections can be a corner pose that still
    collides while every per-axis label is zero. When that happens the
    expert pulls straight toward exact alignment (clipped per axis) so an
    episode never stalls; labels recorded in datasets are unaffected.
    """

    name = "oracle"
    privileged = True

    def __init__(self, params: LabelParams):
        self.params = params

    def act_privileged(self, pose_error, shape, clearance) -> Action:
        p = self.params
        if clearance is not None and clearance.clearance_mm != p.clearance_mm:
            p = replace(p, clearance_mm=clearance.clearance_mm)
        a = label_action(pose_error, p)
        if (a.dx == 0.0 and a.dy == 0.0 and a.drz == 0.0
                and not is_insertable(shape, clearance, pose_error)):
            return Action(
                _clip(-pose_error.e_x, -p.delta_mm, p.delta_mm),
                _clip(-pose_error.e_y, -p.delta_mm, p.delta_mm),
                _clip(-pose_error.e_rz, -p.rz_cap_deg, p.rz_cap_deg),
            )
        return a


def featurize(composite: np.ndarray, mu: np.ndarray = None, sigma: np.ndarray = None) -> np.ndarray:
    """Block means -> standardized features with a trailing bias 1."""
    raw = kernels.block_mean(composite, FEATURE_GRID, FEATURE_GRID).ravel()
    if mu is not None:
        raw = (raw - mu) / sigma
    out = np.empty(WEIGHT_ROWS, dtype=np.float64)
    out[:FEATURE_DIM] = raw
    out[FEATURE_DIM] = 1.0
    return out


@dataclass
class BCModel:
    weights: np.ndarray  # (785, 3)
    mu: np.ndarray       # (784,)
    sigma: np.ndarray    # (784,)
    ridge_lambda: float
    delta_mm: float
    rz_cap_deg: float
    dataset_hash: str = ""

    def predict(self, composite: np.ndarray) -> Action:
        f = featurize(composite, self.mu, self.sigma)
        dx, dy, drz = f @ self.weights
        return clamp_action(Action(float(dx), float(dy), float(drz)),
                            self.delta_mm, self.rz_cap_deg)


class BCPolicy(Policy):
    name = "bc"

    def __init__(self, model: BCModel):
        self.model = model

    def act(self, composite, instruction) -> Action:
        return self.model.predict(composite)


def bc_train(manifest, manifest_dir, ridge_lambda: float = 1.0, split: str = "train") -> BCModel:
    """Fit ridge regression from composites to de-tokenized labels.

    Uses the samples tagged with the given split, or every sample when the
    manifest is unsplit. ridge_lambda must be positive.
    """
    from .tactile import load_png

    if not ridge_lambda > 0:
        raise ValueError(f"ridge_lambda must be positive, got {ridge_lambda}")
    rows = [s for s in manifest.samples if s.split == split]
    if not rows:
        rows = list(manifest.samples)
    if not rows:
        raise ValueError("no training samples in manifest")
    base = Path(manifest_dir)
    scale = manifest.config.scale
    raw = np.empty((len(rows), FEATURE_DIM), dtype=np.float64)
    targets = np.empty((len(rows), 3), dtype=np.float64)
    for i, s in enumerate(rows):
        comp = load_png(base / s.composite_path)
        raw[i] = kernels.block_mean(comp, FEATURE_GRID, FEATURE_GRID).ravel()
        targets[i] = detokenize_action(s.gt_tokens, scale).as_tuple()
    mu = raw.mean(axis=0)
    sigma = raw.std(axis=0)
    sigma[sigma < SIGMA_FLOOR] = 1.0
    feats = np.empty((len(rows), WEIGHT_ROWS), dtype=np.float64)
    feats[:, :FEATURE_DIM] = (raw - mu) / sigma
    feats[:, FEATURE_DIM] = 1.0
    gram = feats.T @ feats + ridge_lambda * np.eye(WEIGHT_ROWS)
    weights = np.linalg.solve(gram, feats.T @ targets)
    return BCModel(
        weights=weights,
        mu=mu,
        sigma=sigma,
        ridge_lambda=float(ridge_lambda),
        delta_mm=manifest.config.delta_mm,
        rz_cap_deg=manifest.config.rz_cap_deg,
        dataset_hash=_samples_hash(manifest),
    )


def _samples_hash(manifest) -> str:
    h = hashlib.sha256()
    for s in manifest.samples:
        h.update(repr(s.to_record()).encode())
    return h.hexdigest()


# Binary layout, all little-endian:
#   magic 5s | version u32 | grid u32 | feature_dim u32 |
#   ridge_lambda f64 | delta_mm f64 | rz_cap_deg f64 | hash_len u16 | hash bytes |
#   mu (784 f64) | sigma (784 f64) | weights (785*3 f64, row-major)
_HEADER = struct.Struct("<5sIII d d d H")


def save_bc(model: BCModel, path) -> None:
    hash_bytes = model.dataset_hash.encode()
    blob = _HEADER.pack(BC_MAGIC, BC_FORMAT_VERSION, FEATURE_GRID, FEATURE_DIM,
                        model.ridge_lambda, model.delta_mm, model.rz_cap_deg,
                        len(hash_bytes))
    blob += hash_bytes
    blob += model.mu.astype("<f8").tobytes()
    blob += model.sigma.astype("<f8").tobytes()
    blob += np.ascontiguousarray(model.weights).astype("<f8").tobytes()
    Path(path).write_bytes(blob)


def load_bc(path) -> BCModel:
    data = Path(path).read_bytes()
    if len(data) < _HEADER.size or not data.startswith(BC_MAGIC):
        raise ValueError(f"{path}: not a BC model file (bad magic)")
    magic, version, grid, fdim, lam, delta, rz_cap, hash_len = _HEADER.unpack_from(data)
    if version != BC_FORMAT_VERSION:
        raise ValueError(f"{path}: unsupported model version {version}")
    if grid != FEATURE_GRID or fdim != FEATURE_DIM:
        raise ValueError(f"{path}: unexpected feature spec {grid}x{grid} ({fdim})")
    off = _HEADER.size
    ds_hash = data[off:off + hash_len].decode()
    off += hash_len
    mu = np.frombuffer(data, dtype="<f8", count=FEATURE_DIM, offset=off).copy()
    off += FEATURE_DIM * 8
    sigma = np.frombuffer(data, dtype="<f8", count=FEATURE_DIM, offset=off).copy()
    off += FEATURE_DIM * 8
    weights = np.frombuffer(data, dtype="<f8", count=WEIGHT_ROWS * 3, offset=off)
    weights = weights.reshape(WEIGHT_ROWS, 3).copy()
    return BCModel(weights=weights, mu=mu, sigma=sigma, ridge_lambda=lam,
                   delta_mm=delta, rz_cap_deg=rz_cap, dataset_hash=ds_hash)
