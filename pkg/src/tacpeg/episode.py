"""Insertion episodes: the attempt loop, records, and batch runs.

An episode starts from a random pose error and iterates attempts. An
attempt whose pose is insertable ends the episode successfully. Otherwise
the peg is in contact: the engine summarizes the contact, renders the
tactile observation when the policy needs one, queries the policy, applies
the (clamped) action additively to the persistent pose, and moves on. The
final allowed attempt never queries the policy. A policy failure aborts
the episode, which is reported distinctly from an ordinary task failure.

In collection mode every collided attempt additionally persists its eight
frames, composite, and instruction record, mirroring how demonstration
data is gathered, one sample per collided attempt.
"""

import json
from dataclasses import dataclass, field
from pathlib import Path

from .geometry import (
    PegShape, ClearanceSpec, PoseError, is_insertable, contact_state, sample_pose_error,
)
from .labeling import LabelParams, Action, label_action, tokenize_action, clamp_action
from .policies import Policy, PolicyError
from .tactile import (
    ImprintParams, render_frame_set, compose_grid, save_png,
    frame_filename, composite_filename, SIDES, TIME_STEPS,
)
from .dataset import Sample, format_instruction, format_query, SAMPLE_DIR

MAX_ATTEMPTS = 15


@dataclass
class EpisodeConfig:
    shape: PegShape
    clearance_mm: float = 2.0
    max_xy_mm: float = 3.0
    max_rz_deg: float = 3.0
    max_attempts: int = MAX_ATTEMPTS
    seed: int = 0
    reject_insertable_start: bool = False
    delta_mm: float = 1.0
    rz_cap_deg: float = 1.5
    scale: tuple = (100.0, 100.0, 100.0)
    imprint: ImprintParams = field(default_factory=ImprintParams)

    def label_params(self) -> LabelParams:
        return LabelParams(self.clearance_mm, self.delta_mm, self.rz_cap_deg, tuple(self.scale))


@dataclass
class AttemptRecord:
    attempt_index: int  # 1-based
    pre_error: PoseError
    collided: bool
    action_taken: Action = None
    frame_paths: list = None
    composite_path: str = None

    def to_record(self) -> dict:
        return {
            "attempt_index": self.attempt_index,
            "pre_error": list(self.pre_error.as_tuple()),
            "collided": self.collided,
            "action_taken": list(self.action_taken.as_tuple()) if self.action_taken else None,
            "frames": self.frame_paths,
            "composite": self.composite_path,
        }


@dataclass
class EpisodeRecord:
    episode_id: int
    shape_kind: str
    clearance_mm: float
    seed: int
    success: bool
    steps: int
    attempts: list
    aborted: bool = False
    abort_reason: str = None

    def to_record(self) -> dict:
        return {
            "episode_id": self.episode_id,
            "shape": self.shape_kind,
            "clearance_mm": self.clearance_mm,
            "seed": self.seed,
            "success": self.success,
            "steps": self.steps,
            "aborted": self.aborted,
            "abort_reason": self.abort_reason,
            "attempts": [a.to_record() for a in self.attempts],
        }


def _write_sidecar(path, episode_id, attempt_index, e, config):
    row = {
        "episode_id": episode_id,
        "attempt_index": attempt_index,
        "pose_error": list(e.as_tuple()),
        "clearance_mm": config.clearance_mm,
        "delta_mm": config.delta_mm,
        "rz_cap_deg": config.rz_cap_deg,
        "scale": list(config.scale),
    }
    with open(path, "a", encoding="utf-8") as fh:
        fh.write(json.dumps(row, sort_keys=True) + "\n")


def run_episode(policy: Policy, config: EpisodeConfig, episode_id: int = 0,
                collect_dir=None, sidecar_path=None, initial_error: PoseError = None):
    """Run one episode. Returns (EpisodeRecord, [Sample]) where the sample
    list is empty unless collect_dir is given. initial_error overrides the
    seeded starting pose (for pinned-scenario tests)."""
    if initial_error is not None:
        e = initial_error
    else:
        rng_seed = [config.seed % (2 ** 63), episode_id]
        e = sample_pose_error(rng_seed, config.max_xy_mm, config.max_rz_deg,
                              reject_insertable=config.reject_insertable_start,
                              shape=config.shape, clearance=ClearanceSpec(config.clearance_mm))
    clearance = ClearanceSpec(config.clearance_mm)
    label_params = config.label_params()
    needs_image = (not getattr(policy, "privileged", False)) or collect_dir is not None
    sample_dir = None
    if collect_dir is not None:
        sample_dir = Path(collect_dir) / SAMPLE_DIR
        sample_dir.mkdir(parents=True, exist_ok=True)

    attempts = []
    samples = []
    success = False
    aborted = False
    abort_reason = None

    for attempt in range(1, config.max_attempts + 1):
        if is_insertable(config.shape, clearance, e):
            attempts.append(AttemptRecord(attempt, e, collided=False))
            success = True
            break

        rec = AttemptRecord(attempt, e, collided=True)
        contact = composite = None
        if needs_image:
            contact = contact_state(config.shape, clearance, e)
            frames = render_frame_set(contact, config.imprint, seed=(config.seed, episode_id, attempt))
            composite = compose_grid(frames)
            if sample_dir is not None:
                rec.frame_paths = []
                for k, (t, side) in enumerate(
                        [(t, s) for t in range(TIME_STEPS) for s in SIDES]):
                    name = frame_filename(episode_id, attempt, side, t)
                    save_png(frames[k], sample_dir / name)
                    rec.frame_paths.append(f"{SAMPLE_DIR}/{name}")
                comp_name = composite_filename(episode_id, attempt)
                save_png(composite, sample_dir / comp_name)
                rec.composite_path = f"{SAMPLE_DIR}/{comp_name}"
                tokens = tokenize_action(label_action(e, label_params), label_params.scale)
                instruction = format_instruction(config.shape.kind, rec.composite_path, tokens)
                inst_name = f"ep{episode_id}_att{attempt}_instruction.txt"
                (sample_dir / inst_name).write_text(instruction, encoding="utf-8")
                samples.append(Sample(
                    sample_id=f"ep{episode_id}_att{attempt}",
                    shape_kind=config.shape.kind,
                    size_mm=config.shape.size_mm,
                    clearance_mm=config.clearance_mm,
                    pose_error=e,
                    frame_paths=list(rec.frame_paths),
                    composite_path=rec.composite_path,
                    instruction_path=f"{SAMPLE_DIR}/{inst_name}",
                    gt_tokens=tokens,
                ))

        if attempt == config.max_attempts:
            attempts.append(rec)
            break

        try:
            if getattr(policy, "privileged", False):
                action = policy.act_privileged(e, config.shape, clearance)
            else:
                if sidecar_path is not None:
                    _write_sidecar(sidecar_path, episode_id, attempt, e, config)
                if hasattr(policy, "set_context"):
                    policy.set_context(episode_id, attempt)
                virtual_name = composite_filename(episode_id, attempt)
                action = policy.act(composite, format_query(config.shape.kind, virtual_name))
        except PolicyError as err:
            attempts.append(rec)
            aborted = True
            abort_reason = str(err)
            break

        action = clamp_action(action, config.delta_mm, config.rz_cap_deg)
        rec.action_taken = action
        attempts.append(rec)
        e = PoseError(e.e_x + action.dx, e.e_y + action.dy, e.e_rz + action.drz)

    record = EpisodeRecord(
        episode_id=episode_id,
        shape_kind=config.shape.kind,
        clearance_mm=config.clearance_mm,
        seed=config.seed,
        success=success,
        steps=len(attempts),
        attempts=attempts,
        aborted=aborted,
        abort_reason=abort_reason,
    )
    return record, samples


def run_batch(policy: Policy, config: EpisodeConfig, n_episodes: int,
              collect_dir=None, sidecar_path=None, jobs: int = 1):
    """Run n episodes with per-episode seeds derived from (config.seed, index).

    Results are independent of jobs because episodes share no mutable state;
    parallel runs require a policy safe for concurrent queries.
    """
    records = []
    all_samples = []
    if jobs > 1 and collect_dir is None:
        from concurrent.futures import ThreadPoolExecutor

        def one(i):
            p = policy.clone_for_episode(i)
            return run_episode(p, config, episode_id=i, sidecar_path=sidecar_path)

        with ThreadPoolExecutor(max_workers=jobs) as pool:
            out = list(pool.map(one, range(n_episodes)))
        for rec, smp in out:
            records.append(rec)
            all_samples.extend(smp)
    else:
        for i in range(n_episodes):
            p = policy.clone_for_episode(i)
            rec, smp = run_episode(p, config, episode_id=i,
                                   collect_dir=collect_dir, sidecar_path=sidecar_path)
            records.append(rec)
            all_samples.extend(smp)
    return records, all_samples
