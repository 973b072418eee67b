"""Command-line entry point: ``citl <subcommand> ...``.

Exit codes: 0 success, 1 usage error, 2 data error, 3 numeric error.
"""

from __future__ import annotations

import argparse
import csv
import json
import logging
import sys
from pathlib import Path

import numpy as np

from . import pipeline
from .dfc import build_dfc_set, load_cohort, write_cohort
from .errors import CheckpointError, IngestionError, NumericError
from .nncore import Rng
from .synth import SyntheticCohortSpec, synth_cohorts
from .transfer import generate_pseudo_labels, load_checkpoint, save_checkpoint, train_transfernet

EXIT_OK, EXIT_USAGE, EXIT_DATA, EXIT_NUMERIC = 0, 1, 2, 3
DIRECTIONS = ("a-to-b", "b-to-a")


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_USAGE, f"{self.prog}: error: {message}\n")


def _read_json(path, what: str) -> dict:
    try:
        doc = json.loads(Path(path).read_text())
    except FileNotFoundError:
        raise UsageError(f"{what} file not found: {path}") from None
    except json.JSONDecodeError as exc:
        raise UsageError(f"{path}: invalid JSON at byte offset {exc.pos}: {exc.msg}") from None
    if not isinstance(doc, dict):
        raise UsageError(f"{path}: {what} must be a JSON object")
    return doc


def _run_config(args) -> pipeline.RunConfig:
    d = _read_json(args.config, "config") if getattr(args, "config", None) else {}
    if getattr(args, "seed", None) is not None:
        d["seed"] = args.seed
    if getattr(args, "mode", None) is not None:
        d["ablation_mode"] = args.mode
    try:
        return pipeline.RunConfig.from_dict(d)
    except (TypeError, ValueError) as exc:
        raise UsageError(f"bad config: {exc}") from None


def _write_rows(path, header, rows) -> None:
    out = open(path, "w", newline="") if path else sys.stdout
    try:
        w = csv.writer(out, lineterminator="\n")
        w.writerow(header)
        w.writerows(rows)
    finally:
        if path:
            out.close()


def cmd_synth(args) -> int:
    d = _read_json(args.spec, "synthetic spec") if args.spec else {}
    try:
        spec = SyntheticCohortSpec(**d)
    except (TypeError, ValueError) as exc:
        raise UsageError(f"bad synthetic spec: {exc}") from None
    seed = 0 if args.seed is None else args.seed
    a, b = synth_cohorts(spec, Rng(seed))
    out = Path(args.out)
    write_cohort(a, out / "cohort_a")
    write_cohort(b, out / "cohort_b")
    (out / "spec.json").write_text(json.dumps({"seed": seed, **spec.to_dict()}, sort_keys=True, indent=1) + "\n")
    print(f"wrote {len(a)} + {len(b)} subjects to {out}")
    return EXIT_OK


def cmd_dfc(args) -> int:
    cfg = _run_config(args)
    rows = []
    for s in load_cohort(args.manifest):
        d = build_dfc_set(s, cfg.window)
        off = d.matrices[:, ~np.eye(d.n_regions, dtype=bool)]
        rows.append([s.subject_id, s.label, s.n_timepoints, s.n_regions, len(d),
                     f"{off.mean():.6f}", f"{np.abs(off).mean():.6f}", len(d.warnings)])
        for w in d.warnings:
            logging.warning(w)
    _write_rows(args.out, ["subject_id", "label", "T", "R", "n_windows", "mean_r", "mean_abs_r", "n_warnings"], rows)
    return EXIT_OK


def cmd_train_transfer(args) -> int:
    cfg = _run_config(args)
    source = load_cohort(args.manifest)
    sets = [build_dfc_set(s, cfg.window) for s in source]
    model = train_transfernet(sets, cfg.transfer_config(), Rng(cfg.seed).child(1),
                              source_tag=args.tag or Path(args.manifest).parent.name)
    save_checkpoint(model, args.out)
    print(f"best validation accuracy {model.best_val_acc:.4f}; checkpoint written to {args.out}")
    return EXIT_OK


def cmd_pseudo_label(args) -> int:
    cfg = _run_config(args)
    model = load_checkpoint(args.checkpoint)
    rows = []
    for s in load_cohort(args.manifest):
        pl = generate_pseudo_labels(model, build_dfc_set(s, cfg.window))
        n_dis, n_norm = pl.sizes
        rows.append([s.subject_id, s.label, n_dis, n_norm, "disease" if n_dis >= n_norm else "normal"])
    _write_rows(args.out, ["subject_id", "label", "n_disease", "n_normal", "chosen_set"], rows)
    return EXIT_OK


def _cohort_paths(args) -> tuple[Path | None, Path]:
    if args.data:
        a = Path(args.data) / "cohort_a" / "manifest.csv"
        b = Path(args.data) / "cohort_b" / "manifest.csv"
        return (a, b) if args.direction == "a-to-b" else (b, a)
    if not args.target:
        raise UsageError("give --data DIR, or --target MANIFEST (plus --source MANIFEST unless --mode no_transfer)")
    return (Path(args.source) if args.source else None), Path(args.target)


def cmd_run(args) -> int:
    cfg = _run_config(args)
    src_path, tgt_path = _cohort_paths(args)
    if src_path is None and cfg.ablation_mode != "no_transfer":
        raise UsageError(f"mode {cfg.ablation_mode} needs a source cohort")
    source = load_cohort(src_path) if src_path is not None and cfg.ablation_mode != "no_transfer" else None
    target = load_cohort(tgt_path)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    dump = out / "optimization_fc" if args.dump_fc else None
    report = pipeline.run_citl(cfg, source, target, dump_dir=dump)
    report.extra["direction"] = args.direction if args.data else None
    pipeline.save_report(report, out / "report.json")
    print(report.summary())
    return EXIT_OK


def cmd_report(args) -> int:
    print(pipeline.load_report(args.report).summary())
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    p = _Parser(prog="citl", description="Comorbidity-informed transfer learning on dynamic connectivity.")
    p.add_argument("-v", "--verbose", action="store_true", help="debug logging")
    sub = p.add_subparsers(dest="command", required=True, parser_class=_Parser)

    def common(sp, seed=True, mode=False):
        sp.add_argument("--config", help="JSON run configuration")
        if seed:
            sp.add_argument("--seed", type=int, help="overrides the config seed")
        if mode:
            sp.add_argument("--mode", choices=pipeline.MODES, help="ablation mode (default full)")

    sp = sub.add_parser("synth", help="write two synthetic cohorts")
    sp.add_argument("--out", required=True, help="output directory")
    sp.add_argument("--seed", type=int)
    sp.add_argument("--spec", help="JSON synthetic cohort spec")
    sp.set_defaults(func=cmd_synth)

    sp = sub.add_parser("dfc", help="per-subject dFC summary of a cohort")
    sp.add_argument("manifest")
    sp.add_argument("--out", help="CSV path (default stdout)")
    common(sp, seed=False)
    sp.set_defaults(func=cmd_dfc)

    sp = sub.add_parser("train-transfer", help="train the source model and write a checkpoint")
    sp.add_argument("manifest", help="source cohort manifest")
    sp.add_argument("--out", required=True, help="checkpoint path")
    sp.add_argument("--tag", help="source tag stored in the checkpoint")
    common(sp)
    sp.set_defaults(func=cmd_train_transfer)

    sp = sub.add_parser("pseudo-label", help="per-subject disease/normal window counts")
    sp.add_argument("checkpoint")
    sp.add_argument("manifest", help="target cohort manifest")
    sp.add_argument("--out", help="CSV path (default stdout)")
    common(sp, seed=False)
    sp.set_defaults(func=cmd_pseudo_label)

    sp = sub.add_parser("run", help="cross-validated pipeline run")
    sp.add_argument("--data", help="directory written by 'synth' (cohort_a/, cohort_b/)")
    sp.add_argument("--direction", choices=DIRECTIONS, default="a-to-b", help="source-to-target direction for --data")
    sp.add_argument("--source", help="source cohort manifest")
    sp.add_argument("--target", help="target cohort manifest")
    sp.add_argument("--out", required=True, help="output directory for report.json")
    sp.add_argument("--dump-fc", action="store_true", help="write per-fold optimised matrices (full mode)")
    common(sp, mode=True)
    sp.set_defaults(func=cmd_run)

    sp = sub.add_parser("report", help="print a report file")
    sp.add_argument("report")
    sp.set_defaults(func=cmd_report)
    return p


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.DEBUG if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        return args.func(args)
    except UsageError as exc:
        print(f"citl: usage error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except NumericError as exc:
        print(f"citl: numeric error: {exc}", file=sys.stderr)
        return EXIT_NUMERIC
    except (IngestionError, CheckpointError, ValueError, OSError) as exc:
        print(f"citl: data error: {exc}", file=sys.stderr)
        return EXIT_DATA


if __name__ == "__main__":
    sys.exit(main())
