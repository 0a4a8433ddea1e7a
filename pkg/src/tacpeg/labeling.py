"""Expert action labels and token conversion.

The corrector pulls each translational error toward the half-clearance band
[-c/2, c/2], at most delta_mm per step, and the rotational error toward
zero, at most rz_cap_deg per step:

    dx = clip(-e_x + c/2, -delta, 0)   if e_x >= 0
         clip(-e_x - c/2, 0, delta)    if e_x <  0
    dy analogous; drz = clip(-e_rz, -rz_cap, rz_cap)

One step therefore maps e_x >= c/2 to max(c/2, e_x - delta) exactly, leaves
|e_x| < c/2 unchanged, and contracts e_rz to sign(e_rz) * max(0, |e_rz| -
rz_cap). Tokens are the action components scaled per axis and rounded half
away from zero.
"""

import math
from dataclasses import dataclass

DEFAULT_DELTA_MM = 1.0
DEFAULT_RZ_CAP_DEG = 1.5
DEFAULT_SCALE = (100.0, 100.0, 100.0)


@dataclass(frozen=True)
class Action:
    """Corrective motion: dx/dy in millimeters, drz in degrees."""

    dx: float
    dy: float
    drz: float

    def as_tuple(self):
        return (self.dx, self.dy, self.drz)


@dataclass(frozen=True)
class TokenizedAction:
    tx: int
    ty: int
    trz: int

    def as_tuple(self):
        return (self.tx, self.ty, self.trz)


@dataclass(frozen=True)
class LabelParams:
    clearance_mm: float
    delta_mm: float = DEFAULT_DELTA_MM
    rz_cap_deg: float = DEFAULT_RZ_CAP_DEG
    scale: tuple = DEFAULT_SCALE

    def __post_init__(self):
        if not (self.clearance_mm > 0 and math.isfinite(self.clearance_mm)):
            raise ValueError(f"clearance_mm must be finite and positive, got {self.clearance_mm}")
        if not (self.delta_mm > 0 and self.rz_cap_deg > 0):
            raise ValueError("delta_mm and rz_cap_deg must be positive")
        if len(self.scale) != 3 or any(s <= 0 for s in self.scale):
            raise ValueError(f"scale must be three positive factors, got {self.scale!r}")


def _clip(x, lo, hi):
    return lo if x < lo else (hi if x > hi else x)


def _translation_step(e, half_clearance, delta):
    if e >= 0:
        return _clip(-e + half_clearance, -delta, 0.0)
    return _clip(-e - half_clearance, 0.0, delta)


def label_action(e, params: LabelParams) -> Action:
    half = params.clearance_mm / 2.0
    return Action(
        _translation_step(e.e_x, half, params.delta_mm),
        _translation_step(e.e_y, half, params.delta_mm),
        _clip(-e.e_rz, -params.rz_cap_deg, params.rz_cap_deg),
    )


def _round_half_away(x: float) -> int:
    if x >= 0:
        return int(math.floor(x + 0.5))
    return -int(math.floor(-x + 0.5))


def tokenize_action(action: Action, scale=DEFAULT_SCALE) -> TokenizedAction:
    return TokenizedAction(
        _round_half_away(action.dx * scale[0]),
        _round_half_away(action.dy * scale[1]),
        _round_half_away(action.drz * scale[2]),
    )


def detokenize_action(tokens: TokenizedAction, scale=DEFAULT_SCALE) -> Action:
    return Action(
        tokens.tx / scale[0],
        tokens.ty / scale[1],
        tokens.trz / scale[2],
    )


def clamp_action(action: Action, delta_mm=DEFAULT_DELTA_MM, rz_cap_deg=DEFAULT_RZ_CAP_DEG) -> Action:
    return Action(
        _clip(action.dx, -delta_mm, delta_mm),
        _clip(action.dy, -delta_mm, delta_mm),
        _clip(action.drz, -rz_cap_deg, rz_cap_deg),
    )
