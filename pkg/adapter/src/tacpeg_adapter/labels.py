"""Expert corrective-action math on true pose errors.

The corrector pulls each translational error toward the half-clearance band
[-c/2, c/2], at most delta mm per step, and the rotational error toward
zero, at most the cap per step. The transparency check compares episode
records across the process boundary with exact float equality, so the clip
and step expressions below must keep the engine's exact shapes and
evaluation order.
"""


def clip(x: float, lo: float, hi: float) -> float:
    return lo if x < lo else (hi if x > hi else x)


def translation_step(e: float, half_clearance: float, delta: float) -> float:
    if e >= 0:
        return clip(-e + half_clearance, -delta, 0.0)
    return clip(-e - half_clearance, 0.0, delta)


def expert_action(pose_error, clearance_mm: float, delta_mm: float,
                  rz_cap_deg: float) -> list:
    """Corrective [dx mm, dy mm, drz deg] for a true pose error [x, y, rz]."""
    ex, ey, erz = (float(v) for v in pose_error)
    half = float(clearance_mm) / 2.0
    delta = float(delta_mm)
    cap = float(rz_cap_deg)
    return [
        translation_step(ex, half, delta),
        translation_step(ey, half, delta),
        clip(-erz, -cap, cap),
    ]
