"""Command-line front end.

Subcommands mirror the pipeline stages: ``phantom`` and ``ingest`` create
study bundles, ``detect`` proposes candidates, ``render`` dumps the exact
PNGs a prompt would carry, ``filter`` runs the false-positive screen,
``evaluate`` scores against ground truth, ``ablate`` sweeps the strategy
toggles, ``losses selftest`` checks the loss gradients, and ``serve`` starts
the REST service.

Exit codes: 0 success, 1 input/usage error, 2 backend failure.
"""

from __future__ import annotations

import argparse
import json
import sys
from dataclasses import replace
from pathlib import Path
from typing import Optional, Sequence

import numpy as np

from .config import AppConfig, load_config, make_backend, strategy_from_label
from .evaluate import emit_report, metrics_to_json, report_text, truth_flags_for
from .gateway import BackendConfigError, ReplayMissError, TransportFailure
from .losses import gradient_selftest
from .model import CtVolume, LobeMap, StudyBundle, ValidationError
from .pipeline import (
    apply_filter_run,
    backend_ablation,
    evaluate_study,
    filter_study,
    run_studies_ablation,
)
from .prompts import ablation_configs, render_specs_for
from .render import render_slice
from .store import IntegrityError, load_study, save_study_dir, truth_from_json
from .synth import (
    DetectorParams,
    baseline_detect,
    describe_truth,
    generate_phantom,
    ingest_candidates,
    load_spec,
)

EXIT_OK = 0
EXIT_INPUT = 1
EXIT_BACKEND = 2


class _UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    # argparse exits with 2 on bad flags; the contract here is exit 1
    def error(self, message: str):
        raise _UsageError(f"{self.format_usage()}{self.prog}: error: {message}")


def _app_config(args) -> AppConfig:
    overrides = {}
    if getattr(args, "backend", None):
        overrides["backend"] = args.backend
    if getattr(args, "cassette", None):
        overrides["cassette_path"] = args.cassette
    return load_config(getattr(args, "config", None), **overrides)


def cmd_phantom(args) -> int:
    spec = load_spec(args.spec)
    out = Path(args.out)
    study_id = args.id or out.name
    bundle = generate_phantom(spec, study_id=study_id)
    bundle.description = args.description or describe_truth(bundle)
    save_study_dir(bundle, out)
    print(f"wrote phantom study {study_id} -> {out}")
    return EXIT_OK


def cmd_detect(args) -> int:
    bundle = load_study(args.study)
    params = DetectorParams(
        hu_threshold=args.hu_threshold,
        min_volume_mm3=args.min_volume,
        max_volume_mm3=args.max_volume,
        connectivity=args.connectivity,
    )
    bundle.candidates = baseline_detect(bundle.volume, bundle.lobes, params)
    bundle.verdicts = []  # stale against the new candidate set
    save_study_dir(bundle, args.study)
    print(f"{len(bundle.candidates)} candidates")
    return EXIT_OK


def cmd_ingest(args) -> int:
    dims = tuple(args.dims)
    spacing = tuple(args.spacing)
    nx, ny, nz = dims
    vol_bytes = Path(args.volume).read_bytes()
    lobe_bytes = Path(args.lobes).read_bytes()
    if len(vol_bytes) != nx * ny * nz * 2:
        raise ValidationError(
            f"volume raw holds {len(vol_bytes)} bytes; dims {dims} need {nx*ny*nz*2}"
        )
    if len(lobe_bytes) != nx * ny * nz:
        raise ValidationError(
            f"lobes raw holds {len(lobe_bytes)} bytes; dims {dims} need {nx*ny*nz}"
        )
    voxels = np.frombuffer(vol_bytes, dtype="<i2").reshape(nz, ny, nx)
    labels = np.frombuffer(lobe_bytes, dtype=np.uint8).reshape(nz, ny, nx)
    out = Path(args.out)
    study_id = args.id or out.name
    candidates = ingest_candidates(args.candidates, dims) if args.candidates else []
    truth = None
    if args.truth:
        entries = json.loads(Path(args.truth).read_text(encoding="utf-8"))
        truth = [truth_from_json(e) for e in entries]
    bundle = StudyBundle(
        study_id=study_id,
        volume=CtVolume(dims=dims, spacing=spacing, voxels=voxels),
        lobes=LobeMap(dims=dims, labels=labels),
        candidates=candidates,
        truth=truth,
        description=args.description,
    )
    save_study_dir(bundle, out)
    print(f"wrote study {study_id} -> {out} ({len(candidates)} candidates)")
    return EXIT_OK


def cmd_render(args) -> int:
    bundle = load_study(args.study)
    try:
        candidate = bundle.candidate_by_id(args.candidate)
    except KeyError:
        raise ValidationError(f"study has no candidate {args.candidate!r}") from None
    config = strategy_from_label(args.strategy, rng_seed=args.seed)
    out_dir = Path(args.out_dir) if args.out_dir else Path(args.study) / "renders"
    out_dir.mkdir(parents=True, exist_ok=True)
    paths = []
    for i, spec in enumerate(render_specs_for(bundle, candidate, config), start=1):
        png = render_slice(bundle.volume, bundle.lobes, candidate, spec)
        path = out_dir / f"{candidate.id}_{i}.png"
        path.write_bytes(png)
        paths.append(path)
    print("\n".join(str(p) for p in paths))
    return EXIT_OK


def cmd_filter(args) -> int:
    cfg = _app_config(args)
    bundle = load_study(args.study)
    strategy = strategy_from_label(args.strategy, rng_seed=args.seed)
    cfg = replace(cfg, mock=replace(cfg.mock, rng_seed=args.seed))
    backend = make_backend(cfg, study=bundle)
    run = filter_study(bundle, strategy, backend)
    apply_filter_run(bundle, run)
    save_study_dir(bundle, args.study)
    for outcome in run.outcomes:
        print(f"{outcome.candidate_id}  {outcome.verdict.decision.value}  prefilter={outcome.prefilter.value}")
    return EXIT_OK


def cmd_evaluate(args) -> int:
    bundle = load_study(args.study)
    counts, report = evaluate_study(bundle)
    payload = metrics_to_json(report)
    out = Path(args.study) / "metrics.json"
    out.write_text(json.dumps(payload, indent=2, sort_keys=True) + "\n", encoding="utf-8")
    for name in ("fdr", "fp_per_scan", "sensitivity", "specificity", "f1", "reject_rate"):
        print(f"{name:12s} {payload[name]:.3f}")
    if payload["dice3d_mean"] is not None:
        print(f"{'dice3d_mean':12s} {payload['dice3d_mean']:.4f}")
    print(f"metrics -> {out}")
    return EXIT_OK


def cmd_ablate(args) -> int:
    cfg = _app_config(args)
    studies = [load_study(d) for d in args.study]
    for bundle in studies:
        if bundle.truth is None:
            raise ValidationError(f"study {bundle.study_id} has no ground truth")
    configs = ablation_configs(rng_seed=args.seed)
    if cfg.backend == "mock":
        params = replace(cfg.mock, rng_seed=args.seed)
        rows = run_studies_ablation(studies, params, configs=configs)
    else:
        backend = make_backend(cfg)
        flags = {
            b.study_id: truth_flags_for(b.candidates, b.truth, b.volume.spacing, cfg.match_policy)
            for b in studies
        }
        rows = backend_ablation(studies, backend, flags, configs=configs)
    text_path, csv_path = emit_report(rows, args.out_dir)
    sys.stdout.write(report_text(rows))
    print(f"reports -> {text_path}, {csv_path}")
    return EXIT_OK


def cmd_losses_selftest(args) -> int:
    results = gradient_selftest(points_per_loss=args.points)
    failed = False
    for name, worst, passed in results:
        print(f"{name:14s} max_rel_err={worst:.3e}  {'PASS' if passed else 'FAIL'}")
        failed = failed or not passed
    return EXIT_INPUT if failed else EXIT_OK


def cmd_serve(args) -> int:
    import uvicorn

    from .service import create_app

    cfg = _app_config(args)
    if args.store:
        cfg = replace(cfg, store_dir=Path(args.store))
    if args.port:
        cfg = replace(cfg, port=args.port)
    if args.host:
        cfg = replace(cfg, host=args.host)
    app = create_app(cfg)
    uvicorn.run(app, host=cfg.host, port=cfg.port, log_level="warning")
    return EXIT_OK


def build_parser() -> _Parser:
    parser = _Parser(prog="nodulescreen", description="Lung nodule candidate screening toolkit")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("phantom", help="generate a synthetic study from a phantom spec")
    p.add_argument("--spec", required=True, help="phantom spec JSON")
    p.add_argument("--out", required=True, help="study bundle directory to write")
    p.add_argument("--id", help="study id (default: the output directory name)")
    p.add_argument("--description", help="clinical description (default: derived from truth)")
    p.set_defaults(func=cmd_phantom)

    p = sub.add_parser("detect", help="run the baseline candidate detector")
    p.add_argument("--study", required=True, help="study bundle directory")
    p.add_argument("--hu-threshold", type=int, default=DetectorParams.hu_threshold)
    p.add_argument("--min-volume", type=float, default=DetectorParams.min_volume_mm3)
    p.add_argument("--max-volume", type=float, default=DetectorParams.max_volume_mm3)
    p.add_argument("--connectivity", type=int, choices=(6, 26), default=DetectorParams.connectivity)
    p.set_defaults(func=cmd_detect)

    p = sub.add_parser("ingest", help="assemble a study bundle from raw volume files")
    p.add_argument("--volume", required=True, help="int16 little-endian HU voxels, x fastest")
    p.add_argument("--lobes", required=True, help="uint8 lobe labels, same order")
    p.add_argument("--dims", required=True, type=int, nargs=3, metavar=("NX", "NY", "NZ"))
    p.add_argument("--spacing", required=True, type=float, nargs=3, metavar=("SX", "SY", "SZ"))
    p.add_argument("--out", required=True, help="study bundle directory to write")
    p.add_argument("--id", help="study id (default: the output directory name)")
    p.add_argument("--candidates", help="candidates JSON from any detector")
    p.add_argument("--truth", help="ground-truth nodules JSON")
    p.add_argument("--description", help="clinical description text")
    p.set_defaults(func=cmd_ingest)

    p = sub.add_parser("render", help="emit the prompt PNGs for one candidate")
    p.add_argument("--study", required=True)
    p.add_argument("--candidate", required=True, help="candidate id")
    p.add_argument("--strategy", default="all_on", help='e.g. "all_on" or "highlight_roi_off"')
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out-dir", help="default: <study>/renders")
    p.set_defaults(func=cmd_render)

    p = sub.add_parser("filter", help="run the false-positive screen over a study")
    p.add_argument("--study", required=True)
    p.add_argument("--backend", choices=("mock", "replay", "record", "chat", "messages"))
    p.add_argument("--cassette", help="cassette path for replay/record backends")
    p.add_argument("--strategy", default="all_on")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--config", help="AppConfig JSON file")
    p.set_defaults(func=cmd_filter)

    p = sub.add_parser("evaluate", help="score verdicts against ground truth")
    p.add_argument("--study", required=True)
    p.set_defaults(func=cmd_evaluate)

    p = sub.add_parser("ablate", help="sweep the strategy toggles and emit reports")
    p.add_argument("--study", required=True, nargs="+", help="one or more study bundle dirs")
    p.add_argument("--backend", choices=("mock", "replay"))
    p.add_argument("--cassette")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out-dir", default=".")
    p.add_argument("--config", help="AppConfig JSON file")
    p.set_defaults(func=cmd_ablate)

    p = sub.add_parser("losses", help="loss function utilities")
    losses_sub = p.add_subparsers(dest="losses_command", required=True)
    p2 = losses_sub.add_parser("selftest", help="gradient checks for every loss")
    p2.add_argument("--points", type=int, default=200)
    p2.set_defaults(func=cmd_losses_selftest)

    p = sub.add_parser("serve", help="start the REST service")
    p.add_argument("--store", help="study store root directory")
    p.add_argument("--host")
    p.add_argument("--port", type=int)
    p.add_argument("--config", help="AppConfig JSON file")
    p.set_defaults(func=cmd_serve)

    return parser


def main(argv: Optional[Sequence[str]] = None) -> int:
    try:
        args = build_parser().parse_args(argv)
        return args.func(args)
    except _UsageError as exc:
        print(exc, file=sys.stderr)
        return EXIT_INPUT
    except (BackendConfigError, ReplayMissError, TransportFailure) as exc:
        print(f"backend error: {exc}", file=sys.stderr)
        return EXIT_BACKEND
    except (ValidationError, IntegrityError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INPUT
    except FileNotFoundError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INPUT
    except json.JSONDecodeError as exc:
        print(f"error: invalid JSON: {exc}", file=sys.stderr)
        return EXIT_INPUT


if __name__ == "__main__":
    sys.exit(main())
