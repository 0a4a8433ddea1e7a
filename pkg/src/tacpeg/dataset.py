"""Sample records, instruction text, and dataset generation.

An instruction record is one chat-formatted training line:

    <|im_start|>user\n<|vision_start|>PATH<|vision_end|>Please insert the
    WORD peg into the target hole based on the tactile observation.
    <|im_end|>\n<|im_start|>assistant\n[tx, ty, trz]<|im_end|>

(no literal newlines beyond the two shown as \n; WORD is the shape's
adjective form). Parsing is strict about the special tokens and the
sentence but lenient about whitespace inside the action array.

generate_dataset draws each sample independently: a colliding pose from the
configured ranges, its contact summary, eight tactile frames plus the
composite, the expert label, and its tokens. All per-sample randomness
derives from (seed, sample index), so regeneration is byte-identical.
The manifest is a sorted-key JSON file with relative paths.
"""

import hashlib
import json
import re
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path

from . import __version__ as _tool_version
from .geometry import (
    PegShape, ClearanceSpec, PoseError, contact_state, sample_pose_error,
)
from .labeling import (
    Action, TokenizedAction, LabelParams, label_action, tokenize_action, detokenize_action,
)
from .tactile import (
    ImprintParams, render_frame_set, compose_grid, save_png,
    frame_filename, composite_filename, SIDES, TIME_STEPS,
)

MANIFEST_NAME = "manifest.json"
MANIFEST_FORMAT_VERSION = 1
SAMPLE_DIR = "samples"

SHAPE_WORDS = {
    "square": "square",
    "triangle": "triangular",
    "round": "round",
    "hexagon": "hexagonal",
}
WORD_SHAPES = {w: k for k, w in SHAPE_WORDS.items()}

_USER_OPEN = "<|im_start|>user\n"
_VISION_OPEN = "<|vision_start|>"
_VISION_CLOSE = "<|vision_end|>"
_SENTENCE_PRE = "Please insert the "
_SENTENCE_POST = " peg into the target hole based on the tactile observation."
_TURN_CLOSE = "<|im_end|>"
_ASSISTANT_OPEN = "\n<|im_start|>assistant\n"

_ACTION_RE = re.compile(r"^\[\s*(-?\d+)\s*,\s*(-?\d+)\s*,\s*(-?\d+)\s*\]$")


class InstructionParseError(ValueError):
    pass


def format_query(shape_kind: str, composite_path: str) -> str:
    """The user turn plus assistant opener, i.e. the policy prompt."""
    word = SHAPE_WORDS.get(shape_kind)
    if word is None:
        raise ValueError(f"unknown shape kind {shape_kind!r}")
    return (f"{_USER_OPEN}{_VISION_OPEN}{composite_path}{_VISION_CLOSE}"
            f"{_SENTENCE_PRE}{word}{_SENTENCE_POST}{_TURN_CLOSE}{_ASSISTANT_OPEN}")


def format_instruction(shape_kind: str, composite_path: str, tokens: TokenizedAction) -> str:
    return (format_query(shape_kind, composite_path)
            + f"[{tokens.tx}, {tokens.ty}, {tokens.trz}]{_TURN_CLOSE}")


def parse_instruction(text: str):
    """Parse a full instruction record -> (shape_kind, composite_path, tokens).

    Raises InstructionParseError naming the first missing or malformed piece.
    """
    rest = text
    for token, name in ((_USER_OPEN, "<|im_start|>user"), (_VISION_OPEN, _VISION_OPEN)):
        if not rest.startswith(token):
            raise InstructionParseError(f"missing {name}")
        rest = rest[len(token):]
    cut = rest.find(_VISION_CLOSE)
    if cut < 0:
        raise InstructionParseError(f"missing {_VISION_CLOSE}")
    composite_path = rest[:cut]
    rest = rest[cut + len(_VISION_CLOSE):]
    if not rest.startswith(_SENTENCE_PRE):
        raise InstructionParseError("missing instruction sentence")
    rest = rest[len(_SENTENCE_PRE):]
    cut = rest.find(_SENTENCE_POST)
    if cut < 0:
        raise InstructionParseError("missing instruction sentence tail")
    word = rest[:cut]
    shape_kind = WORD_SHAPES.get(word)
    if shape_kind is None:
        raise InstructionParseError(f"unknown shape word {word!r}")
    rest = rest[cut + len(_SENTENCE_POST):]
    closer = _TURN_CLOSE + _ASSISTANT_OPEN
    if not rest.startswith(closer):
        raise InstructionParseError("missing <|im_end|> after user turn")
    rest = rest[len(closer):]
    if not rest.endswith(_TURN_CLOSE):
        raise InstructionParseError("missing <|im_end|> after assistant turn")
    body = rest[:-len(_TURN_CLOSE)]
    m = _ACTION_RE.match(body.strip())
    if m is None:
        raise InstructionParseError(f"malformed action array {body!r}")
    return shape_kind, composite_path, TokenizedAction(int(m.group(1)), int(m.group(2)), int(m.group(3)))


@dataclass
class Sample:
    sample_id: str
    shape_kind: str
    size_mm: float
    clearance_mm: float
    pose_error: PoseError
    frame_paths: list
    composite_path: str
    instruction_path: str
    gt_tokens: TokenizedAction
    split: str = None

    def to_record(self) -> dict:
        return {
            "sample_id": self.sample_id,
            "shape": self.shape_kind,
            "size_mm": self.size_mm,
            "clearance_mm": self.clearance_mm,
            "pose_error": list(self.pose_error.as_tuple()),
            "frames": list(self.frame_paths),
            "composite": self.composite_path,
            "instruction": self.instruction_path,
            "gt_tokens": list(self.gt_tokens.as_tuple()),
            "split": self.split,
        }

    @classmethod
    def from_record(cls, rec: dict) -> "Sample":
        return cls(
            sample_id=rec["sample_id"],
            shape_kind=rec["shape"],
            size_mm=rec["size_mm"],
            clearance_mm=rec["clearance_mm"],
            pose_error=PoseError(*rec["pose_error"]),
            frame_paths=list(rec["frames"]),
            composite_path=rec["composite"],
            instruction_path=rec["instruction"],
            gt_tokens=TokenizedAction(*rec["gt_tokens"]),
            split=rec.get("split"),
        )


@dataclass
class DataConfig:
    n_samples: int
    shapes: tuple = ("square",)
    clearance_mm: float = 2.0
    size_mm: float = 25.0
    max_xy_mm: float = 3.0
    max_rz_deg: float = 6.0
    seed: int = 0
    delta_mm: float = 1.0
    rz_cap_deg: float = 1.5
    scale: tuple = (100.0, 100.0, 100.0)
    imprint: ImprintParams = field(default_factory=ImprintParams)

    def label_params(self) -> LabelParams:
        return LabelParams(self.clearance_mm, self.delta_mm, self.rz_cap_deg, tuple(self.scale))

    def to_dict(self) -> dict:
        d = {
            "n_samples": self.n_samples,
            "shapes": list(self.shapes),
            "clearance_mm": self.clearance_mm,
            "size_mm": self.size_mm,
            "max_xy_mm": self.max_xy_mm,
            "max_rz_deg": self.max_rz_deg,
            "seed": self.seed,
            "delta_mm": self.delta_mm,
            "rz_cap_deg": self.rz_cap_deg,
            "scale": list(self.scale),
            "imprint": {
                "k_shift": self.imprint.k_shift,
                "k_rot": self.imprint.k_rot,
                "k_press": self.imprint.k_press,
                "noise_sigma": self.imprint.noise_sigma,
                "ellipse_rx": self.imprint.ellipse_rx,
                "ellipse_ry": self.imprint.ellipse_ry,
                "base_intensity": self.imprint.base_intensity,
            },
        }
        return d

    @classmethod
    def from_dict(cls, d: dict) -> "DataConfig":
        imp = d.get("imprint", {})
        return cls(
            n_samples=d["n_samples"],
            shapes=tuple(d["shapes"]),
            clearance_mm=d["clearance_mm"],
            size_mm=d["size_mm"],
            max_xy_mm=d["max_xy_mm"],
            max_rz_deg=d["max_rz_deg"],
            seed=d["seed"],
            delta_mm=d["delta_mm"],
            rz_cap_deg=d["rz_cap_deg"],
            scale=tuple(d["scale"]),
            imprint=ImprintParams(**imp),
        )


@dataclass
class Manifest:
    config: DataConfig
    samples: list
    format_version: int = MANIFEST_FORMAT_VERSION
    tool_version: str = _tool_version

    def to_json(self) -> str:
        obj = {
            "format_version": self.format_version,
            "tool_version": self.tool_version,
            "config": self.config.to_dict(),
            "samples": [s.to_record() for s in self.samples],
        }
        return json.dumps(obj, indent=1, sort_keys=True)

    @classmethod
    def from_json(cls, text: str) -> "Manifest":
        obj = json.loads(text)
        return cls(
            config=DataConfig.from_dict(obj["config"]),
            samples=[Sample.from_record(r) for r in obj["samples"]],
            format_version=obj["format_version"],
            tool_version=obj["tool_version"],
        )

    def save(self, path) -> None:
        Path(path).write_text(self.to_json() + "\n", encoding="utf-8")

    @classmethod
    def load(cls, path) -> "Manifest":
        return cls.from_json(Path(path).read_text(encoding="utf-8"))

    def split_samples(self, split: str) -> list:
        return [s for s in self.samples if s.split == split]


def manifest_sha256(path) -> str:
    return hashlib.sha256(Path(path).read_bytes()).hexdigest()


def _generate_one(cfg: DataConfig, index: int, sample_dir: Path, label_params: LabelParams):
    shape = PegShape(cfg.shapes[index % len(cfg.shapes)], cfg.size_mm)
    clearance = ClearanceSpec(cfg.clearance_mm)
    rng_seed = [cfg.seed % (2 ** 63), index]
    pose = sample_pose_error(rng_seed, cfg.max_xy_mm, cfg.max_rz_deg,
                             reject_insertable=True, shape=shape, clearance=clearance)
    contact = contact_state(shape, clearance, pose)
    frames = render_frame_set(contact, cfg.imprint, seed=(cfg.seed, index))
    composite = compose_grid(frames)
    episode, attempt = index, 1
    frame_paths = []
    k = 0
    for t in range(TIME_STEPS):
        for side in SIDES:
            name = frame_filename(episode, attempt, side, t)
            save_png(frames[k], sample_dir / name)
            frame_paths.append(f"{SAMPLE_DIR}/{name}")
            k += 1
    comp_name = composite_filename(episode, attempt)
    save_png(composite, sample_dir / comp_name)
    composite_path = f"{SAMPLE_DIR}/{comp_name}"

    tokens = tokenize_action(label_action(pose, label_params), label_params.scale)
    instruction = format_instruction(shape.kind, composite_path, tokens)
    inst_name = f"ep{episode}_att{attempt}_instruction.txt"
    (sample_dir / inst_name).write_text(instruction, encoding="utf-8")

    return Sample(
        sample_id=f"ep{episode}_att{attempt}",
        shape_kind=shape.kind,
        size_mm=cfg.size_mm,
        clearance_mm=cfg.clearance_mm,
        pose_error=pose,
        frame_paths=frame_paths,
        composite_path=composite_path,
        instruction_path=f"{SAMPLE_DIR}/{inst_name}",
        gt_tokens=tokens,
    )


def generate_dataset(cfg: DataConfig, out_dir, jobs: int = 1) -> Manifest:
    out = Path(out_dir)
    sample_dir = out / SAMPLE_DIR
    sample_dir.mkdir(parents=True, exist_ok=True)
    label_params = cfg.label_params()
    if jobs > 1:
        with ThreadPoolExecutor(max_workers=jobs) as pool:
            samples = list(pool.map(
                lambda i: _generate_one(cfg, i, sample_dir, label_params),
                range(cfg.n_samples)))
    else:
        samples = [_generate_one(cfg, i, sample_dir, label_params)
                   for i in range(cfg.n_samples)]
    manifest = Manifest(config=cfg, samples=samples)
    manifest.save(out / MANIFEST_NAME)
    return manifest


def split_dataset(manifest: Manifest, train_fraction: float, seed: int) -> Manifest:
    """Tag samples train/test by a seeded shuffle; train count is round(n * fraction)."""
    if not 0.0 <= train_fraction <= 1.0:
        raise ValueError(f"train_fraction must lie in [0, 1], got {train_fraction}")
    import numpy as np
    n = len(manifest.samples)
    perm = np.random.default_rng(seed).permutation(n)
    n_train = int(round(train_fraction * n))
    train_ids = set(perm[:n_train].tolist())
    for i, s in enumerate(manifest.samples):
        s.split = "train" if i in train_ids else "test"
    return manifest


def gt_action(sample: Sample, scale) -> Action:
    return detokenize_action(sample.gt_tokens, scale)
