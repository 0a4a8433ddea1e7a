"""Command-line entry point.

Subcommands map 1:1 onto the library: gen-data, split, train-bc,
eval-offline, eval-online, render-composite, serve-check, allowance.

Exit codes: 0 ok, 2 usage, 3 I/O or data, 4 protocol violation,
5 policy failure. Errors print a single line to stderr in the form
"tacpeg: error: <category>: <message>".

When the environment variable TACPEG_OUT_ROOT is set, relative output
paths are resolved under it.

Presets bundle the counts used throughout the docs: "desk" is a
minutes-scale run (700 samples split 500 train / 200 test, 20 episodes)
and "paper" is the full-scale run (8000 samples split 3:1, 50 episodes).
"""

import argparse
import json
import os
import sys
from pathlib import Path

from . import __version__
from .bridge import ExternalPolicy, ProtocolError, run_conformance
from .dataset import (DataConfig, Manifest, generate_dataset, split_dataset)
from .episode import EpisodeConfig
from .evaluation import (eval_offline, eval_online, dump_predictions,
                         render_offline_table, render_online_table)
from .geometry import (ClearanceSpec, PegShape, PoseError, RejectionCapError,
                       SHAPE_KINDS, allowable_deviation, contact_state)
from .labeling import LabelParams
from .policies import (BCPolicy, OraclePolicy, PolicyError, RandomPolicy,
                       ZeroPolicy, bc_train, load_bc, save_bc)
from .tactile import ImprintParams, compose_grid, render_frame_set, save_png

PRESETS = {
    "desk": {"n_samples": 700, "train_fraction": 5.0 / 7.0, "episodes": 20},
    "paper": {"n_samples": 8000, "train_fraction": 0.75, "episodes": 50},
}


class CliError(Exception):
    def __init__(self, category: str, message: str, code: int):
        super().__init__(message)
        self.category = category
        self.code = code


def _usage(msg: str) -> CliError:
    return CliError("usage", msg, 2)


def _io(msg: str) -> CliError:
    return CliError("io", msg, 3)


def _resolve_out(path_str: str) -> Path:
    p = Path(path_str)
    root = os.environ.get("TACPEG_OUT_ROOT")
    if root and not p.is_absolute():
        p = Path(root) / p
    return p


def _parse_triple(text: str, caster, flag: str):
    parts = [s.strip() for s in text.split(",")]
    if len(parts) != 3:
        raise _usage(f"{flag} expects three comma-separated values, got {text!r}")
    try:
        return tuple(caster(s) for s in parts)
    except ValueError:
        raise _usage(f"{flag} expects three numbers, got {text!r}")


def _build_policy(spec: str, *, scale, shape_kind: str, clearance_mm: float,
                  seed: int, delta_mm: float, rz_cap_deg: float,
                  timeout_s: float):
    if spec == "zero":
        return ZeroPolicy()
    if spec == "random":
        p = RandomPolicy(seed=seed, delta_mm=delta_mm, rz_cap_deg=rz_cap_deg)
        p.reset(0)
        return p
    if spec == "oracle":
        return OraclePolicy(LabelParams(clearance_mm, delta_mm, rz_cap_deg, scale))
    if spec.startswith("bc:"):
        path = Path(spec[3:])
        if not path.exists():
            raise _io(f"model file not found: {path}")
        return BCPolicy(load_bc(path))
    if spec.startswith("external:"):
        return ExternalPolicy(spec[len("external:"):], scale=scale,
                              shape_kind=shape_kind, clearance_mm=clearance_mm,
                              timeout_s=timeout_s)
    raise _usage(f"unknown policy spec {spec!r}; expected "
                 "zero | random | oracle | bc:<path> | external:<cmd|host:port>")


def _preset(args) -> dict:
    return PRESETS[args.preset] if getattr(args, "preset", None) else {}


def _imprint_from_args(args) -> ImprintParams:
    base = ImprintParams()
    return ImprintParams(
        k_shift=base.k_shift if args.k_shift is None else args.k_shift,
        k_rot=base.k_rot if args.k_rot is None else args.k_rot,
        k_press=base.k_press if args.k_press is None else args.k_press,
        noise_sigma=base.noise_sigma if args.noise_sigma is None else args.noise_sigma,
    )


def _cmd_gen_data(args) -> int:
    preset = _preset(args)
    n = args.n if args.n is not None else preset.get("n_samples")
    if n is None:
        raise _usage("gen-data needs --n or --preset")
    if args.out is None:
        raise _usage("gen-data needs --out")
    shapes = tuple(s.strip() for s in args.shape.split(","))
    for s in shapes:
        if s not in SHAPE_KINDS:
            raise _usage(f"unknown shape {s!r}; expected one of {', '.join(SHAPE_KINDS)}")
    cfg = DataConfig(
        n_samples=n,
        shapes=shapes,
        clearance_mm=args.clearance,
        size_mm=args.size,
        max_xy_mm=args.max_xy,
        max_rz_deg=args.max_rz,
        seed=args.seed,
        delta_mm=args.delta,
        rz_cap_deg=args.rz_cap,
        scale=_parse_triple(args.scale, float, "--scale"),
        imprint=_imprint_from_args(args),
    )
    out_dir = _resolve_out(args.out)
    manifest = generate_dataset(cfg, out_dir, jobs=args.jobs)
    frac = args.train_fraction if args.train_fraction is not None \
        else preset.get("train_fraction")
    if frac is not None:
        manifest = split_dataset(manifest, frac, args.seed)
        manifest.save(out_dir / "manifest.json")
        n_train = sum(1 for s in manifest.samples if s.split == "train")
        print(f"wrote {len(manifest.samples)} samples "
              f"({n_train} train / {len(manifest.samples) - n_train} test) "
              f"to {out_dir}")
    else:
        print(f"wrote {len(manifest.samples)} samples to {out_dir}")
    return 0


def _load_manifest(path_str: str):
    path = Path(path_str)
    if path.is_dir():
        path = path / "manifest.json"
    if not path.exists():
        raise _io(f"manifest not found: {path}")
    return Manifest.load(path), path


def _cmd_split(args) -> int:
    manifest, path = _load_manifest(args.manifest)
    manifest = split_dataset(manifest, args.train_fraction, args.seed)
    manifest.save(path)
    n_train = sum(1 for s in manifest.samples if s.split == "train")
    print(f"split {len(manifest.samples)} samples into "
          f"{n_train} train / {len(manifest.samples) - n_train} test")
    return 0


def _cmd_train_bc(args) -> int:
    manifest, path = _load_manifest(args.manifest)
    model = bc_train(manifest, path.parent, ridge_lambda=args.ridge_lambda,
                     split=args.split)
    out = _resolve_out(args.out)
    out.parent.mkdir(parents=True, exist_ok=True)
    save_bc(model, out)
    print(f"trained ridge model (lambda={args.ridge_lambda}) on "
          f"{args.split} split; wrote {out}")
    return 0


def _cmd_eval_offline(args) -> int:
    manifest, path = _load_manifest(args.manifest)
    if not manifest.samples:
        raise _io("empty test set")
    cfg = manifest.config
    policy = _build_policy(
        args.policy, scale=tuple(cfg.scale), shape_kind=cfg.shapes[0],
        clearance_mm=cfg.clearance_mm, seed=args.seed, delta_mm=cfg.delta_mm,
        rz_cap_deg=cfg.rz_cap_deg, timeout_s=args.timeout)
    try:
        report, pset = eval_offline(policy, manifest, path.parent,
                                    split=args.split, l1_mode=args.l1_mode,
                                    return_pset=True)
    finally:
        policy.close()
    print(render_offline_table([report]))
    if args.dump:
        dump_path = _resolve_out(args.dump)
        dump_path.parent.mkdir(parents=True, exist_ok=True)
        dump_predictions(pset, dump_path)
        print(f"wrote per-sample predictions to {dump_path}")
    if args.out:
        out = _resolve_out(args.out)
        out.parent.mkdir(parents=True, exist_ok=True)
        out.write_text(report.to_json() + "\n")
        print(f"wrote report to {out}")
    return 0


def _cmd_eval_online(args) -> int:
    preset = _preset(args)
    n = args.n if args.n is not None else preset.get("episodes", 20)
    shape = PegShape(args.shape, args.size)
    policy = _build_policy(
        args.policy, scale=_parse_triple(args.scale, float, "--scale"),
        shape_kind=args.shape, clearance_mm=args.clearance, seed=args.seed,
        delta_mm=args.delta, rz_cap_deg=args.rz_cap, timeout_s=args.timeout)
    config = EpisodeConfig(
        shape=shape, clearance_mm=args.clearance, max_xy_mm=args.max_xy,
        max_rz_deg=args.max_rz, max_attempts=args.max_attempts,
        seed=args.seed, delta_mm=args.delta, rz_cap_deg=args.rz_cap,
        scale=_parse_triple(args.scale, float, "--scale"))
    try:
        report, records = eval_online(
            policy, shape, args.clearance, n, seed=args.seed,
            max_xy_mm=args.max_xy, max_rz_deg=args.max_rz, jobs=args.jobs,
            config=config, sidecar_path=_resolve_out(args.sidecar) if args.sidecar else None,
            return_records=True)
    finally:
        policy.close()
    print(render_online_table([report]))
    if args.out:
        out = _resolve_out(args.out)
        out.parent.mkdir(parents=True, exist_ok=True)
        batch = {
            "tool_version": __version__,
            "seed": args.seed,
            "config": {
                "shape": args.shape, "size_mm": args.size,
                "clearance_mm": args.clearance, "n_episodes": n,
                "max_xy_mm": args.max_xy, "max_rz_deg": args.max_rz,
                "max_attempts": args.max_attempts, "policy": args.policy,
            },
            "report": report.to_dict(),
            "episodes": [r.to_record() for r in records],
        }
        out.write_text(json.dumps(batch, indent=1, sort_keys=True) + "\n")
        print(f"wrote episode batch to {out}")
    return 0


def _cmd_render_composite(args) -> int:
    if args.out is None:
        raise _usage("render-composite needs --out")
    pose = PoseError(*_parse_triple(args.pose, float, "--pose"))
    shape = PegShape(args.shape, args.size)
    contact = contact_state(shape, ClearanceSpec(args.clearance), pose)
    frames = render_frame_set(contact, ImprintParams(), seed=args.seed)
    composite = compose_grid(frames)
    out = _resolve_out(args.out)
    out.parent.mkdir(parents=True, exist_ok=True)
    save_png(composite, out)
    print(f"wrote {out} (in_contact={contact.in_contact}, "
          f"penetration={contact.penetration_mm:.3f} mm)")
    return 0


def _cmd_serve_check(args) -> int:
    tokens = _parse_triple(args.tokens, int, "--tokens")
    failures = run_conformance(args.cmd, expected_tokens=tokens,
                               timeout_s=args.timeout)
    target = args.cmd or "internal reference server"
    if failures:
        for f in failures:
            print(f"FAIL {f}")
        raise CliError("protocol", f"conformance failed for {target}: "
                       f"{len(failures)} step(s)", 4)
    print(f"conformance OK: {target} (5 steps, byte-exact)")
    return 0


def _cmd_allowance(args) -> int:
    shape = PegShape(args.shape, args.size)
    spec = ClearanceSpec(args.clearance)
    axes = ("x+", "x-", "y+", "y-", "rz") if args.axis == "all" else (args.axis,)
    result = {ax: allowable_deviation(shape, spec, ax) for ax in axes}
    print(json.dumps(result, sort_keys=True))
    return 0


def _add_common(p, *, seed=True, out=False):
    if seed:
        p.add_argument("--seed", type=int, default=0, help="master RNG seed")
    if out:
        p.add_argument("--out", help="output path (relative paths resolve "
                                     "under TACPEG_OUT_ROOT when set)")


def _add_task_flags(p):
    p.add_argument("--shape", default="square", help="peg shape kind")
    p.add_argument("--size", type=float, default=25.0, help="peg size in mm")
    p.add_argument("--clearance", type=float, default=2.0,
                   help="total clearance c in mm")


def _add_label_flags(p):
    p.add_argument("--delta", type=float, default=1.0,
                   help="translation step bound in mm")
    p.add_argument("--rz-cap", type=float, default=1.5,
                   help="rotation step bound in deg")
    p.add_argument("--scale", default="100,100,100",
                   help="token scale factors sx,sy,srz")


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(
        prog="tacpeg",
        description="Peg-in-hole tactile insertion: data generation, "
                    "baseline policies, and evaluation.")
    ap.add_argument("--version", action="version", version=f"tacpeg {__version__}")
    sub = ap.add_subparsers(dest="command", required=True)

    p = sub.add_parser("gen-data", help="generate a tactile-action dataset")
    _add_common(p, out=True)
    _add_task_flags(p)
    _add_label_flags(p)
    p.add_argument("--n", type=int, help="number of samples")
    p.add_argument("--max-xy", type=float, default=3.0)
    p.add_argument("--max-rz", type=float, default=6.0)
    p.add_argument("--train-fraction", type=float,
                   help="tag a train/test split after generation")
    p.add_argument("--preset", choices=sorted(PRESETS))
    p.add_argument("--jobs", type=int, default=1)
    p.add_argument("--k-shift", type=float, default=None)
    p.add_argument("--k-rot", type=float, default=None)
    p.add_argument("--k-press", type=float, default=None)
    p.add_argument("--noise-sigma", type=float, default=None)
    p.set_defaults(func=_cmd_gen_data)

    p = sub.add_parser("split", help="tag train/test rows in a manifest")
    _add_common(p)
    p.add_argument("--manifest", required=True)
    p.add_argument("--train-fraction", type=float, required=True)
    p.set_defaults(func=_cmd_split)

    p = sub.add_parser("train-bc", help="fit the ridge-regression baseline")
    _add_common(p)
    p.add_argument("--manifest", required=True)
    p.add_argument("--out", default="model.bin")
    p.add_argument("--ridge-lambda", type=float, default=1.0)
    p.add_argument("--split", default="train")
    p.set_defaults(func=_cmd_train_bc)

    p = sub.add_parser("eval-offline", help="score a policy on a dataset")
    _add_common(p, out=True)
    p.add_argument("--manifest", required=True)
    p.add_argument("--policy", required=True)
    p.add_argument("--split", default=None,
                   help="row subset (defaults to 'test' when the manifest is split)")
    p.add_argument("--l1-mode", choices=("correct", "all"), default="correct")
    p.add_argument("--dump", help="write per-sample predictions (JSON lines)")
    p.add_argument("--timeout", type=float, default=30.0)
    p.set_defaults(func=_cmd_eval_offline)

    p = sub.add_parser("eval-online", help="run closed-loop episodes")
    _add_common(p, out=True)
    _add_task_flags(p)
    _add_label_flags(p)
    p.add_argument("--policy", required=True)
    p.add_argument("--n", type=int, help="number of episodes")
    p.add_argument("--max-xy", type=float, default=3.0)
    p.add_argument("--max-rz", type=float, default=3.0)
    p.add_argument("--max-attempts", type=int, default=15)
    p.add_argument("--preset", choices=sorted(PRESETS))
    p.add_argument("--jobs", type=int, default=1)
    p.add_argument("--sidecar", help="append true pose errors per query "
                                     "(JSON lines) for transparency tests")
    p.add_argument("--timeout", type=float, default=30.0)
    p.set_defaults(func=_cmd_eval_online)

    p = sub.add_parser("render-composite", help="render one composite image")
    _add_common(p, out=True)
    _add_task_flags(p)
    p.add_argument("--pose", required=True, help="pose error ex,ey,erz")
    p.set_defaults(func=_cmd_render_composite)

    p = sub.add_parser("serve-check", help="run the bridge conformance suite")
    p.add_argument("--cmd", help="adapter command line (default: self-test "
                                 "against the internal reference server)")
    p.add_argument("--tokens", default="0,0,0",
                   help="expected action tokens tx,ty,trz")
    p.add_argument("--timeout", type=float, default=30.0)
    p.set_defaults(func=_cmd_serve_check)

    p = sub.add_parser("allowance", help="print per-axis feasible deviations")
    _add_task_flags(p)
    p.add_argument("--axis", default="all",
                   choices=("all", "x+", "x-", "y+", "y-", "rz"))
    p.set_defaults(func=_cmd_allowance)

    return ap


def _one_line(msg: str) -> str:
    return " ".join(str(msg).split())


def main(argv=None) -> int:
    ap = build_parser()
    args = ap.parse_args(argv)
    try:
        return args.func(args)
    except CliError as err:
        print(f"tacpeg: error: {err.category}: {_one_line(err)}", file=sys.stderr)
        return err.code
    except ProtocolError as err:
        print(f"tacpeg: error: protocol: {_one_line(err)}", file=sys.stderr)
        return 4
    except PolicyError as err:
        print(f"tacpeg: error: policy: {_one_line(err)}", file=sys.stderr)
        return 5
    except RejectionCapError as err:
        print(f"tacpeg: error: usage: {_one_line(err)}", file=sys.stderr)
        return 2
    except ValueError as err:
        print(f"tacpeg: error: usage: {_one_line(err)}", file=sys.stderr)
        return 2
    except OSError as err:
        print(f"tacpeg: error: io: {_one_line(err)}", file=sys.stderr)
        return 3


if __name__ == "__main__":
    sys.exit(main())
