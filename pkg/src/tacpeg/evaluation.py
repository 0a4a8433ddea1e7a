"""Metrics and evaluation harnesses.

Per-dimension correctness of an action a against a pose error e: the
action strictly reduces that dimension's error (|e_d + a_d| < |e_d| -
1e-9), or it is exactly zero while the error already sits inside the
dimension's tolerance band. The bands are half the clearance for x and y
and zero for rz, because the expert emits zero exactly there and must
score 100%. GCR is the percentage of samples correct in all three
dimensions at once.

L1 is measured per dimension on the token grid: predictions pass through
tokenize/detokenize with the dataset's scale before comparison against the
de-tokenized ground truth, mirroring a pipeline whose policies emit
integer tokens. By default it averages over the GCR-correct samples only
and is undefined (None) when there are none; mode="all" averages over
every sample instead.
"""

import json
from dataclasses import dataclass, field
from pathlib import Path

from . import __version__ as _tool_version
from .geometry import PegShape, ClearanceSpec, PoseError
from .labeling import Action, LabelParams, tokenize_action, detokenize_action
from .episode import EpisodeConfig, run_batch

CORRECT_EPS = 1e-9


def _dim_correct(e_d: float, a_d: float, band: float) -> bool:
    if abs(e_d + a_d) < abs(e_d) - CORRECT_EPS:
        return True
    return a_d == 0.0 and abs(e_d) <= band


def action_correct(e: PoseError, a: Action, clearance_mm: float):
    """(correct_x, correct_y, correct_rz) for one sample."""
    band_xy = clearance_mm / 2.0
    return (
        _dim_correct(e.e_x, a.dx, band_xy),
        _dim_correct(e.e_y, a.dy, band_xy),
        _dim_correct(e.e_rz, a.drz, 0.0),
    )


@dataclass
class PredictionSet:
    """Aligned rows of (pose error, raw prediction, de-tokenized ground truth)."""

    pose_errors: list
    predictions: list
    ground_truth: list
    label_params: LabelParams
    meta: dict = field(default_factory=dict)

    def __post_init__(self):
        if not (len(self.pose_errors) == len(self.predictions) == len(self.ground_truth)):
            raise ValueError("pose_errors, predictions, ground_truth must align")

    def correctness(self):
        c = self.label_params.clearance_mm
        return [action_correct(e, a, c)
                for e, a in zip(self.pose_errors, self.predictions)]

    def quantized_predictions(self):
        s = self.label_params.scale
        return [detokenize_action(tokenize_action(a, s), s) for a in self.predictions]


def gcr(pset: PredictionSet) -> float:
    """Percentage of samples whose raw prediction is correct in x, y, and rz."""
    rows = pset.correctness()
    if not rows:
        return 0.0
    return 100.0 * sum(all(r) for r in rows) / len(rows)


def l1_metrics(pset: PredictionSet, mode: str = "correct"):
    """Per-dimension mean |quantized prediction - ground truth|.

    mode="correct" restricts to GCR-correct samples and returns
    (None, None, None) when no sample qualifies; mode="all" uses every row.
    """
    if mode not in ("correct", "all"):
        raise ValueError(f"mode must be 'correct' or 'all', got {mode!r}")
    quant = pset.quantized_predictions()
    if mode == "correct":
        keep = [i for i, r in enumerate(pset.correctness()) if all(r)]
    else:
        keep = list(range(len(quant)))
    if not keep:
        return (None, None, None)
    sums = [0.0, 0.0, 0.0]
    for i in keep:
        p = quant[i].as_tuple()
        g = pset.ground_truth[i].as_tuple()
        for d in range(3):
            sums[d] += abs(p[d] - g[d])
    n = len(keep)
    return tuple(s / n for s in sums)


@dataclass
class EvalReport:
    policy_name: str
    task: dict
    n_samples: int
    gcr_percent: float = None
    l1: tuple = None
    l1_mode: str = "correct"
    success_percent: float = None
    avg_steps: float = None
    n_aborted: int = 0
    seed: int = None
    tool_version: str = _tool_version

    def to_dict(self) -> dict:
        return {
            "tool_version": self.tool_version,
            "policy": self.policy_name,
            "task": self.task,
            "n_samples": self.n_samples,
            "gcr_percent": self.gcr_percent,
            "l1": list(self.l1) if self.l1 is not None else None,
            "l1_mode": self.l1_mode,
            "success_percent": self.success_percent,
            "avg_steps": self.avg_steps,
            "n_aborted": self.n_aborted,
            "seed": self.seed,
        }

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=1, sort_keys=True)


def _fmt(v, digits=3):
    if v is None:
        return "N/A"
    return f"{v:.{digits}f}"


def render_offline_table(reports) -> str:
    head = f"{'policy':<12} {'n':>6} {'GCR%':>8} {'L1 x':>8} {'L1 y':>8} {'L1 rz':>8}"
    lines = [head, "-" * len(head)]
    for r in reports:
        l1 = r.l1 if r.l1 is not None else (None, None, None)
        lines.append(f"{r.policy_name:<12} {r.n_samples:>6} {_fmt(r.gcr_percent, 1):>8} "
                     f"{_fmt(l1[0]):>8} {_fmt(l1[1]):>8} {_fmt(l1[2]):>8}")
    return "\n".join(lines)


def render_online_table(reports) -> str:
    head = (f"{'policy':<12} {'task':<18} {'episodes':>8} {'Suc%':>7} "
            f"{'Step':>7} {'aborted':>8}")
    lines = [head, "-" * len(head)]
    for r in reports:
        task = f"{r.task.get('shape', '?')} c={r.task.get('clearance_mm', '?')}"
        lines.append(f"{r.policy_name:<12} {task:<18} {r.n_samples:>8} "
                     f"{_fmt(r.success_percent, 1):>7} {_fmt(r.avg_steps, 2):>7} "
                     f"{r.n_aborted:>8}")
    return "\n".join(lines)


def evaluate_predictions(pset: PredictionSet, policy_name: str,
                         l1_mode: str = "correct", seed=None) -> EvalReport:
    return EvalReport(
        policy_name=policy_name,
        task=dict(pset.meta),
        n_samples=len(pset.pose_errors),
        gcr_percent=gcr(pset),
        l1=l1_metrics(pset, l1_mode),
        l1_mode=l1_mode,
        seed=seed,
    )


def eval_offline(policy, manifest, manifest_dir, split: str = None,
                 l1_mode: str = "correct", return_pset: bool = False):
    """Query the policy on stored composites and score against stored labels.

    split=None evaluates the test split when the manifest is split, else
    every sample. Privileged policies receive the stored pose error.
    """
    from .tactile import load_png

    rows = manifest.samples
    if split is None and any(s.split for s in manifest.samples):
        split = "test"
    if split is not None:
        rows = [s for s in manifest.samples if s.split == split]
    if not rows:
        raise ValueError(f"no samples to evaluate (split={split!r})")
    base = Path(manifest_dir)
    cfg = manifest.config
    params = cfg.label_params()
    pose_errors, predictions, ground_truth = [], [], []
    privileged = getattr(policy, "privileged", False)
    clearance = ClearanceSpec(cfg.clearance_mm)
    for s in rows:
        if privileged:
            pred = policy.act_privileged(s.pose_error, PegShape(s.shape_kind, s.size_mm),
                                         clearance)
        else:
            from .dataset import format_query
            comp = load_png(base / s.composite_path)
            pred = policy.act(comp, format_query(s.shape_kind, s.composite_path))
        pose_errors.append(s.pose_error)
        predictions.append(pred)
        ground_truth.append(detokenize_action(s.gt_tokens, params.scale))
    pset = PredictionSet(pose_errors, predictions, ground_truth, params,
                         meta={"manifest": str(Path(manifest_dir) / "manifest.json"),
                               "split": split, "clearance_mm": cfg.clearance_mm})
    report = evaluate_predictions(pset, getattr(policy, "name", "policy"),
                                  l1_mode=l1_mode, seed=cfg.seed)
    if return_pset:
        return report, pset
    return report


def dump_predictions(pset: PredictionSet, path) -> None:
    """One JSON object per line: pose error, raw and quantized prediction,
    ground truth, and per-dimension correctness (for deviation plots)."""
    quant = pset.quantized_predictions()
    rows = pset.correctness()
    with open(path, "w", encoding="utf-8") as fh:
        for e, a, q, g, c in zip(pset.pose_errors, pset.predictions, quant,
                                 pset.ground_truth, rows):
            fh.write(json.dumps({
                "pose_error": list(e.as_tuple()),
                "prediction": list(a.as_tuple()),
                "prediction_tokens_mm_deg": list(q.as_tuple()),
                "ground_truth": list(g.as_tuple()),
                "correct": list(c),
                "all_correct": all(c),
            }, sort_keys=True) + "\n")


def eval_online(policy, shape: PegShape, clearance_mm: float, n_episodes: int,
                seed: int = 0, max_xy_mm: float = 3.0, max_rz_deg: float = 3.0,
                imprint=None, jobs: int = 1, config: EpisodeConfig = None,
                sidecar_path=None, return_records: bool = False):
    from .tactile import ImprintParams

    if config is None:
        config = EpisodeConfig(
            shape=shape,
            clearance_mm=clearance_mm,
            max_xy_mm=max_xy_mm,
            max_rz_deg=max_rz_deg,
            seed=seed,
            imprint=imprint if imprint is not None else ImprintParams(),
        )
    records, _ = run_batch(policy, config, n_episodes, jobs=jobs,
                           sidecar_path=sidecar_path)
    successes = [r for r in records if r.success]
    aborted = [r for r in records if r.aborted]
    report = EvalReport(
        policy_name=getattr(policy, "name", "policy"),
        task={"shape": shape.kind, "clearance_mm": clearance_mm,
              "max_xy_mm": max_xy_mm, "max_rz_deg": max_rz_deg},
        n_samples=n_episodes,
        success_percent=100.0 * len(successes) / n_episodes if n_episodes else None,
        avg_steps=(sum(r.steps for r in successes) / len(successes)) if successes else None,
        n_aborted=len(aborted),
        seed=seed,
    )
    if return_records:
        return report, records
    return report


def eval_online_tasks(policy, tasks, n_per_task: int, seed: int = 0,
                      max_xy_mm: float = 3.0, max_rz_deg: float = 3.0,
                      jobs: int = 1) -> list:
    """One EvalReport per (shape, clearance_mm) task, shared seed."""
    reports = []
    for task in tasks:
        shape = task["shape"]
        if not isinstance(shape, PegShape):
            shape = PegShape(shape, task.get("size_mm", 25.0))
        reports.append(eval_online(
            policy, shape, task["clearance_mm"], n_per_task, seed=seed,
            max_xy_mm=max_xy_mm, max_rz_deg=max_rz_deg, jobs=jobs))
    return reports
