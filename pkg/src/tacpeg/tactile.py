"""Synthetic tactile frames and the composite observation image.

Each sensor frame is a 224 x 224 grayscale image in [0, 1] holding one
elliptical Gaussian imprint. The imprint at rest sits centered; under
contact it drifts with the time index t in {0, 1, 2, 3}:

  - horizontal shift   k_shift * reaction_x * penetration * (t / 3) pixels
  - rotation           k_rot * reaction_rz * (t / 3) degrees
  - peak intensity     base * (1 + s * k_press * reaction_y * penetration * (t / 3)),
                       s = +1 for the left sensor, -1 for the right,
                       clamped to [0, 1]

so t = 0 is always the rest imprint and a contact-free pose renders the
rest imprint at every t. Optional zero-mean Gaussian pixel noise is seeded
deterministically from (seed, side, t).

A composite stacks eight frames (left then right for t = 0..3, row-major)
into a 3 x 3 grid of 616 x 616 pixels; cell edges follow the largest-
remainder partition of 616 into 3 -> {205, 205, 206}, frames are resized
bilinearly to their cell, and the unused bottom-right cell is white.
"""

import io
from dataclasses import dataclass

import numpy as np
from PIL import Image

from . import kernels
from .geometry import ContactInfo

FRAME_SIZE = 224
COMPOSITE_SIZE = 616
GRID = 3
# Largest-remainder partition of 616 into 3 parts.
CELL_BOUNDS = tuple(int(i * COMPOSITE_SIZE) // GRID for i in range(GRID + 1))

SIDES = ("left", "right")

TIME_STEPS = 4


@dataclass(frozen=True)
class ImprintParams:
    k_shift: float = 20.0
    k_rot: float = 15.0
    k_press: float = 0.3
    noise_sigma: float = 0.0
    ellipse_rx: float = 70.0
    ellipse_ry: float = 45.0
    base_intensity: float = 0.5

    def __post_init__(self):
        if self.noise_sigma < 0:
            raise ValueError("noise_sigma must be >= 0")
        if self.ellipse_rx <= 0 or self.ellipse_ry <= 0:
            raise ValueError("ellipse radii must be positive")
        if not (0 < self.base_intensity <= 1):
            raise ValueError("base_intensity must lie in (0, 1]")


def _noise_rng(seed, side_index: int, t: int) -> np.random.Generator:
    parts = list(seed) if isinstance(seed, (tuple, list)) else [seed]
    parts = [int(p) % (2 ** 63) for p in parts] + [side_index, t]
    return np.random.default_rng(parts)


def render_frame(contact: ContactInfo, side: str, t: int,
                 params: ImprintParams = ImprintParams(), seed=0) -> np.ndarray:
    if side not in SIDES:
        raise ValueError(f"side must be one of {SIDES}, got {side!r}")
    if not 0 <= t < TIME_STEPS:
        raise ValueError(f"t must be in [0, {TIME_STEPS}), got {t}")
    frac = t / 3.0
    sgn = 1.0 if side == "left" else -1.0
    shift = params.k_shift * contact.reaction_x * contact.penetration_mm * frac
    rot = params.k_rot * contact.reaction_rz * frac
    gain = 1.0 + sgn * params.k_press * contact.reaction_y * contact.penetration_mm * frac
    amp = min(max(params.base_intensity * gain, 0.0), 1.0)
    center = (FRAME_SIZE - 1) / 2.0
    img = kernels.gauss_ellipse(FRAME_SIZE, FRAME_SIZE, center + shift, center,
                                rot, params.ellipse_rx, params.ellipse_ry, amp)
    if params.noise_sigma > 0:
        rng = _noise_rng(seed, SIDES.index(side), t)
        img = img + rng.normal(0.0, params.noise_sigma, img.shape)
    return np.clip(img, 0.0, 1.0)


def render_frame_set(contact: ContactInfo, params: ImprintParams = ImprintParams(),
                     seed=0) -> list:
    """The eight frames of one observation: left, right for each t = 0..3."""
    return [render_frame(contact, side, t, params, seed)
            for t in range(TIME_STEPS) for side in SIDES]


def compose_grid(frames) -> np.ndarray:
    """Stack eight frames into the 616 x 616 composite; see module docstring."""
    if len(frames) != 8:
        raise ValueError(f"compose_grid needs exactly 8 frames, got {len(frames)}")
    for f in frames:
        if f.shape != (FRAME_SIZE, FRAME_SIZE):
            raise ValueError(f"frames must be {FRAME_SIZE}x{FRAME_SIZE}, got {f.shape}")
    out = np.empty((COMPOSITE_SIZE, COMPOSITE_SIZE), dtype=np.float64)
    for cell in range(9):
        r, c = divmod(cell, GRID)
        r0, r1 = CELL_BOUNDS[r], CELL_BOUNDS[r + 1]
        c0, c1 = CELL_BOUNDS[c], CELL_BOUNDS[c + 1]
        if cell == 8:
            out[r0:r1, c0:c1] = 1.0
        else:
            out[r0:r1, c0:c1] = kernels.bilinear_resize(frames[cell], r1 - r0, c1 - c0)
    return out


def to_uint8(img: np.ndarray) -> np.ndarray:
    return np.rint(np.clip(img, 0.0, 1.0) * 255.0).astype(np.uint8)


def save_png(img: np.ndarray, path) -> None:
    Image.fromarray(to_uint8(img), mode="L").save(path, format="PNG")


def png_bytes(img: np.ndarray) -> bytes:
    buf = io.BytesIO()
    Image.fromarray(to_uint8(img), mode="L").save(buf, format="PNG")
    return buf.getvalue()


def load_png(path) -> np.ndarray:
    with Image.open(path) as im:
        arr = np.asarray(im.convert("L"), dtype=np.float64)
    return arr / 255.0


def decode_png(data: bytes) -> np.ndarray:
    with Image.open(io.BytesIO(data)) as im:
        arr = np.asarray(im.convert("L"), dtype=np.float64)
    return arr / 255.0


def frame_filename(episode: int, attempt: int, side: str, t: int) -> str:
    return f"ep{episode}_att{attempt}_{'l' if side == 'left' else 'r'}{t}.png"


def composite_filename(episode: int, attempt: int) -> str:
    return f"ep{episode}_att{attempt}_composite.png"
