"""Command-line orchestration of the full experiment.

Every run writes a manifest (command, effective config, input and output
digests) next to its outputs so results can be reproduced exactly.
"""
from __future__ import annotations

import argparse
import hashlib
import json
import sys
from dataclasses import replace
from pathlib import Path

from . import cohort as cohort_mod
from .cohort import load_cohort, save_cohort
from .config import RunConfig, load_config, save_config
from .debias import export_matched_csv
from .evaluate import GtmSet, MissingGtm, export_disagreements_csv, train_gtms
from .experiment import holdout_split, train_pipelines
from .evaluate import evaluate_pipelines
from .pipeline import (
    Pipeline,
    TreeStage,
    export_bundle,
    import_bundle,
    reference_pipelines,
)
from .policytree import TreeNode
from .synthgen import GeneratorConfig, generate, save_ground_truth


def _sha256(path: Path) -> str:
    h = hashlib.sha256()
    with open(path, "rb") as fh:
        for chunk in iter(lambda: fh.read(1 << 20), b""):
            h.update(chunk)
    return h.hexdigest()


def _write_json(doc: dict, path: Path) -> None:
    with open(path, "w") as fh:
        json.dump(doc, fh, indent=2, sort_keys=True)
        fh.write("\n")


def _write_manifest(path: Path, command: str, config_doc: dict, inputs, outputs) -> None:
    _write_json(
        {
            "command": command,
            "config": config_doc,
            "inputs": {str(p): _sha256(Path(p)) for p in inputs},
            "outputs": {str(p): _sha256(Path(p)) for p in outputs},
        },
        path,
    )


_OVERRIDE_FLAGS = ("seed", "alpha", "keep_fraction", "buckets", "weighting", "doctor_outcome")


def _load_run_config(args) -> RunConfig:
    config = load_config(args.config) if args.config else RunConfig()
    overrides = {
        name: getattr(args, name)
        for name in _OVERRIDE_FLAGS
        if getattr(args, name, None) is not None
    }
    return replace(config, **overrides) if overrides else config


def _add_config_flags(parser) -> None:
    parser.add_argument("--config", default=None, help="declarative config JSON")
    parser.add_argument("--seed", type=int, default=None)
    parser.add_argument("--alpha", type=float, default=None)
    parser.add_argument("--keep-fraction", dest="keep_fraction", type=float, default=None)
    parser.add_argument("--buckets", type=int, default=None)
    parser.add_argument("--weighting", choices=("sample_weight", "reward_penalty"), default=None)
    parser.add_argument(
        "--doctor-outcome", dest="doctor_outcome", choices=("observed", "gtm"), default=None
    )


def cmd_synth(args) -> int:
    cfg = GeneratorConfig(
        n_visits=args.n,
        seed=args.seed if args.seed is not None else 42,
        confounding_strength=args.confounding,
        noise_sd=args.noise_sd,
    )
    cohort, gt = generate(cfg)
    out = Path(args.out)
    truth = Path(args.truth_out) if args.truth_out else out.with_suffix(".truth.csv")
    save_cohort(cohort, out)
    save_ground_truth(gt, truth)
    _write_manifest(
        out.parent / (out.stem + ".manifest.json"),
        "synth",
        {
            "n_visits": cfg.n_visits,
            "seed": cfg.seed,
            "confounding_strength": cfg.confounding_strength,
            "noise_sd": cfg.noise_sd,
            "decrease_fraction": cfg.decrease_fraction,
            "group_mix": list(cfg.group_mix),
        },
        inputs=[],
        outputs=[out, truth],
    )
    print(f"wrote {len(cohort)} visits to {out} (ground truth: {truth})")
    return 0


def cmd_filter(args) -> int:
    cohort = load_cohort(args.cohort)
    kept = cohort_mod.inclusion_filter(cohort)
    save_cohort(kept, args.out)
    _write_manifest(
        Path(args.out).parent / (Path(args.out).stem + ".manifest.json"),
        "filter",
        {},
        inputs=[args.cohort],
        outputs=[args.out],
    )
    print(f"kept {len(kept)} of {len(cohort)} visits")
    return 0


def cmd_reference(args) -> int:
    bundle = export_bundle(reference_pipelines())
    _write_json(bundle, Path(args.out))
    print(f"wrote {len(bundle['pipelines'])} reference pipelines to {args.out}")
    return 0


def cmd_train(args) -> int:
    config = _load_run_config(args)
    out_dir = Path(args.out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    cohort = load_cohort(args.cohort)
    train_main, _ = holdout_split(cohort, config)
    result = train_pipelines(train_main, config)

    outputs = []
    bundle = export_bundle(result.pipelines)
    pipelines_path = out_dir / "pipelines.json"
    _write_json(bundle, pipelines_path)
    outputs.append(pipelines_path)

    balance = {}
    for cid, art in sorted(result.contrasts.items()):
        matched_path = out_dir / f"matched_{cid}.csv"
        export_matched_csv(art.matched, matched_path)
        outputs.append(matched_path)
        d = art.matched.diagnostics
        balance[cid] = {
            "n_before": list(d.n_before),
            "n_after": list(d.n_after),
            "score_smd_before": d.score_smd_before,
            "score_smd_after": d.score_smd_after,
            "features": d.features,
        }
    balance_path = out_dir / "balance.json"
    _write_json(balance, balance_path)
    outputs.append(balance_path)

    config_path = out_dir / "config.json"
    save_config(config, config_path)
    outputs.append(config_path)

    _write_manifest(
        out_dir / "manifest.json",
        "train",
        config.to_json(),
        inputs=[args.cohort],
        outputs=outputs,
    )
    print(f"trained {len(result.pipelines)} pipelines into {out_dir}")
    return 0


def cmd_evaluate(args) -> int:
    config = _load_run_config(args)
    out_dir = Path(args.out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    cohort = load_cohort(args.cohort)
    with open(args.pipelines) as fh:
        pipelines = import_bundle(json.load(fh))
    train_main, test_eval = holdout_split(cohort, config)
    if args.gtms:
        with open(args.gtms) as fh:
            gtms = GtmSet.from_json(json.load(fh))
    else:
        gtms = train_gtms(
            train_main, config.forest, seed=config.seed, min_visits=config.gtm_min_visits
        )
    if not gtms.models:
        raise MissingGtm(
            "no ground-truth model could be trained "
            f"(every pair has fewer than {gtms.min_visits} training visits)"
        )
    report = evaluate_pipelines(
        pipelines, gtms, test_eval, doctor_outcome=config.doctor_outcome
    )

    outputs = []
    report_json = out_dir / "report.json"
    _write_json(report.to_json(), report_json)
    outputs.append(report_json)
    report_txt = out_dir / "report.txt"
    report_txt.write_text(report.to_text() + "\n")
    outputs.append(report_txt)
    rows_csv = out_dir / "disagreements.csv"
    export_disagreements_csv(report, rows_csv)
    outputs.append(rows_csv)
    gtms_path = out_dir / "gtms.json"
    _write_json(gtms.to_json(), gtms_path)
    outputs.append(gtms_path)

    _write_manifest(
        out_dir / "evaluate.manifest.json",
        "evaluate",
        config.to_json(),
        inputs=[args.cohort, args.pipelines],
        outputs=outputs,
    )
    print(report.to_text())
    return 0


def _render_tree(node: TreeNode, indent: str, lines: list[str]) -> None:
    if node.is_leaf:
        lines.append(f"{indent}recommend {node.action}")
        return
    lines.append(f"{indent}if {node.feature} >= {node.threshold}:")
    _render_tree(node.right, indent + "    ", lines)
    lines.append(f"{indent}else:")
    _render_tree(node.left, indent + "    ", lines)


def render_rules(pipelines: dict[str, Pipeline]) -> str:
    lines: list[str] = []
    for group in sorted(pipelines):
        p = pipelines[group]
        lines.append(f"pipeline for patients on {group}:")
        for stage in p.stages:
            if isinstance(stage, TreeStage):
                lines.append(f"  stage {stage.name} (fires on {stage.step_action}):")
                _render_tree(stage.tree.root, "    ", lines)
            else:
                lines.append(f"  stage {stage.name} (router):")
                _render_tree(stage.router.root, "    ", lines)
                lines.append("    on first-line therapy, choose:")
                _render_tree(stage.resolver.root, "      ", lines)
        lines.append(f"  otherwise: stay on {p.terminal_action}")
        lines.append("")
    return "\n".join(lines)


def cmd_export(args) -> int:
    with open(args.pipelines) as fh:
        pipelines = import_bundle(json.load(fh))
    text = render_rules(pipelines)
    if args.out:
        Path(args.out).write_text(text)
        print(f"wrote rules to {args.out}")
    else:
        print(text)
    return 0


def cmd_serve(args) -> int:
    import uvicorn

    from .service import create_app

    with open(args.pipelines) as fh:
        bundle = json.load(fh)
    gtms = None
    if args.gtms:
        with open(args.gtms) as fh:
            gtms = GtmSet.from_json(json.load(fh))
    app = create_app(bundle, gtms)
    uvicorn.run(app, host=args.host, port=args.port, log_level="warning")
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="t2dpolicy",
        description="Treatment-progression policy pipelines for type 2 diabetes",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("synth", help="generate a synthetic confounded cohort")
    p.add_argument("--n", type=int, required=True)
    p.add_argument("--seed", type=int, default=None)
    p.add_argument("--confounding", type=float, default=1.0)
    p.add_argument("--noise-sd", type=float, default=0.35)
    p.add_argument("--out", required=True)
    p.add_argument("--truth-out", default=None)
    p.set_defaults(func=cmd_synth)

    p = sub.add_parser("filter", help="apply the inclusion criteria")
    p.add_argument("--cohort", required=True)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_filter)

    p = sub.add_parser("reference", help="emit the published reference pipelines")
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_reference)

    p = sub.add_parser("train", help="emulate trials and train policy pipelines")
    p.add_argument("--cohort", required=True)
    p.add_argument("--out-dir", required=True)
    _add_config_flags(p)
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("evaluate", help="train GTMs and score pipelines vs doctors")
    p.add_argument("--cohort", required=True)
    p.add_argument("--pipelines", required=True)
    p.add_argument("--out-dir", required=True)
    p.add_argument("--gtms", default=None, help="load GTMs instead of training")
    _add_config_flags(p)
    p.set_defaults(func=cmd_evaluate)

    p = sub.add_parser("export", help="render pipelines as if-then rules")
    p.add_argument("--pipelines", required=True)
    p.add_argument("--out", default=None)
    p.set_defaults(func=cmd_export)

    p = sub.add_parser("serve", help="start the recommendation service")
    p.add_argument("--pipelines", required=True)
    p.add_argument("--gtms", default=None)
    p.add_argument("--host", default="127.0.0.1")
    p.add_argument("--port", type=int, default=8000)
    p.set_defaults(func=cmd_serve)

    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except Exception as exc:  # single-line machine-parseable failure
        print(f"error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
