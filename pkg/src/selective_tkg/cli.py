"""Command line entry point: ``selective-tkg {evaluate,calibrate,ablate,synth,dump-validate}``."""
from __future__ import annotations

import argparse
import csv
import sys
from dataclasses import fields
from pathlib import Path

from .data import MODES, SPLITS, load_dataset, split_queries, write_dataset
from .errors import TKGError
from .estimators import ESTIMATORS
from .history import ABSOLUTE, RELATIVE
from .pipeline import RunConfig, Session, run_metadata, write_json
from .reasoner import DumpReasoner, read_dump, write_dump
from .synthetic import SyntheticParams, generate_synthetic, planted_signal_case

# flag name -> RunConfig field
RUN_FLAGS = {
    "dataset": dict(help="dataset directory (default: bundled synthetic corpus)"),
    "mode": dict(choices=MODES),
    "inverse_augment": dict(action=argparse.BooleanOptionalAction,
                            help="add inverse facts (default: on for entity mode)"),
    "reasoner": dict(choices=("frequency", "dump")),
    "dump_path": dict(help="prediction dump replayed by the 'dump' reasoner"),
    "decay_lambda": dict(type=float),
    "smoothing": dict(type=float),
    "backoff_weight": dict(type=float),
    "filtered_ranks": dict(action=argparse.BooleanOptionalAction),
    "estimator": dict(choices=ESTIMATORS),
    "beta": dict(type=float, help="aggregation weight; omitted = calibrate on validation"),
    "beta_grid_step": dict(type=float),
    "delta": dict(type=float, help="Hawkes decay rate"),
    "short_window": dict(type=int),
    "long_window": dict(type=int),
    "time_mode": dict(choices=(ABSOLUTE, RELATIVE)),
    "alpha": dict(type=float, help="risk parameter (>= 1)"),
    "warmup": dict(type=int, help="timestamps before the evaluated split fed to the accuracy store"),
    "output_dir": dict(help="directory for reports"),
    "seed": dict(type=int),
    "workers": dict(type=int),
}


def _add_run_flags(p: argparse.ArgumentParser) -> None:
    p.add_argument("--config", help="JSON run config; its values override flags")
    for name, kw in RUN_FLAGS.items():
        p.add_argument("--" + name.replace("_", "-"), dest=name, default=None, **kw)


def config_from_args(args) -> RunConfig:
    values = {f.name: getattr(args, f.name) for f in fields(RunConfig)
              if getattr(args, f.name, None) is not None}
    cfg = RunConfig(**values)
    if args.config:
        cfg = RunConfig.from_dict({**cfg.to_dict(), **RunConfig.from_file(args.config).to_dict()})
    return cfg.validate()


class Outputs:
    """Tracks written files so a failed command leaves nothing half-written behind."""

    def __init__(self, root):
        self.root = Path(root)
        self.written: list[Path] = []

    def path(self, name: str) -> Path:
        self.root.mkdir(parents=True, exist_ok=True)
        p = self.root / name
        self.written.append(p)
        return p

    def csv(self, name: str, header, rows) -> None:
        with open(self.path(name), "w", encoding="utf-8", newline="") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(header)
            w.writerows(rows)

    def cleanup(self) -> None:
        for p in self.written:
            p.unlink(missing_ok=True)


def _fmt(x) -> str:
    return repr(float(x)) if isinstance(x, float) or hasattr(x, "dtype") else str(x)


def write_reports(out: Outputs, reports) -> None:
    header = ["mode", "subject", "relation", "object", "timestamp", "gt_rank", "certainty",
              "historical", "rank_c", "rank_a", "confidence"]
    with open(out.path("reports.tsv"), "w", encoding="utf-8") as fh:
        fh.write("\t".join(header) + "\n")
        for r in reports:
            s, rel, o, t = r.query.fact
            cols = [r.query.mode, s, rel, o, t, r.gt_rank, r.certainty,
                    "" if r.historical is None else r.historical,
                    "" if r.rank_c is None else r.rank_c,
                    "" if r.rank_a is None else r.rank_a, r.confidence]
            fh.write("\t".join(_fmt(c) for c in cols) + "\n")


def print_summary(label: str, summary: dict) -> None:
    print(f"{label}: n={summary['n']}  AUC={summary['auc']:.2f}")
    levels = [k for k in summary if k.startswith("coverage@")]
    print("  " + "  ".join(f"{k}={100 * summary[k]:.2f}%" for k in levels))


def cmd_evaluate(cfg: RunConfig, out: Outputs) -> int:
    session = Session(cfg)
    ev = session.evaluate()
    write_reports(out, ev.reports)
    out.csv("curve.csv", ["coverage", "risk"],
            ([_fmt(c), _fmt(r)] for c, r in zip(ev.curve.coverages, ev.curve.risks)))
    keys = list(ev.summary)
    out.csv("summary.csv", ["estimator", "beta", *keys],
            [[cfg.estimator, "" if ev.beta is None else _fmt(ev.beta), *(_fmt(ev.summary[k]) for k in keys)]])
    with open(out.path("config.json"), "w", encoding="utf-8") as fh:
        fh.write(cfg.dumps())
    extra = {"command": "evaluate", "beta": ev.beta}
    if ev.calibration is not None:
        extra["calibration"] = [list(row) for row in ev.calibration.table]
    write_json(out.path("run.json"), _jsonable(run_metadata(cfg, session.dataset, extra)))
    print_summary(cfg.estimator if ev.beta is None else f"{cfg.estimator} (beta={ev.beta:g})", ev.summary)
    return 0


def cmd_calibrate(cfg: RunConfig, out: Outputs) -> int:
    session = Session(cfg)
    cal = session.calibrate()
    out.csv("calibration.csv", ["beta", "auc"], ([_fmt(b), _fmt(a)] for b, a in cal.table))
    write_json(out.path("run.json"), _jsonable(run_metadata(
        cfg, session.dataset, {"command": "calibrate", "beta": cal.beta})))
    for b, a in cal.table:
        print(f"beta={b:<4g} validation AUC={a:.3f}")
    print(f"chosen beta: {cal.beta:g}")
    return 0


def cmd_ablate(cfg: RunConfig, out: Outputs) -> int:
    session = Session(cfg)
    rows = session.ablate()
    out.csv("ablation.csv", ["variant", "auc"], ([k, _fmt(v)] for k, v in rows.items()))
    beta, _ = session.beta()
    write_json(out.path("run.json"), _jsonable(run_metadata(
        cfg, session.dataset, {"command": "ablate", "beta": beta})))
    for name, auc in rows.items():
        print(f"{name:<6} AUC={auc:.3f}")
    return 0


def cmd_synth(args) -> int:
    out = Path(args.out)
    if args.planted:
        dataset, records = planted_signal_case(args.planted, args.seed)
        write_dataset(dataset, out)
        write_dump(records, out / "dump.tsv")
    else:
        overrides = {f: getattr(args, f) for f in SyntheticParams.__dataclass_fields__
                     if getattr(args, f, None) is not None}
        write_dataset(generate_synthetic(args.seed, **overrides), out)
        dataset = load_dataset(out)
    counts = dataset.counts()
    print(" ".join(f"{k}={v}" for k, v in counts.items()))
    return 0


def cmd_dump_validate(args) -> int:
    records = read_dump(args.dump)
    reasoner = DumpReasoner(records)
    augment = args.mode == "entity" if args.inverse_augment is None else args.inverse_augment
    dataset = load_dataset(args.dataset, inverse_augment=augment)
    missing_total = 0
    for split in args.splits.split(","):
        if split not in dataset.splits:
            continue
        queries = split_queries(dataset, split, args.mode)
        missing = [q for q in queries if q not in reasoner]
        missing_total += len(missing)
        print(f"{split}: {len(queries) - len(missing)}/{len(queries)} queries covered")
        for q in missing[:5]:
            print(f"  missing {q.key}")
    print(f"{len(records)} valid rows")
    return 1 if missing_total else 0


def _jsonable(obj):
    if isinstance(obj, dict):
        return {str(k): _jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_jsonable(v) for v in obj]
    if hasattr(obj, "item"):
        return obj.item()
    return obj


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="selective-tkg", description=__doc__)
    sub = parser.add_subparsers(dest="command", required=True)
    for name, help_ in (("evaluate", "score confidences and write risk-coverage reports"),
                        ("calibrate", "choose the aggregation weight on the validation split"),
                        ("ablate", "AUC of every estimator variant")):
        _add_run_flags(sub.add_parser(name, help=help_))

    p = sub.add_parser("synth", help="write a synthetic corpus")
    p.add_argument("--out", required=True)
    p.add_argument("--seed", type=int, default=7)
    p.add_argument("--planted", choices=("history", "certainty"),
                   help="write a calibration corpus with a prediction dump instead")
    for f in SyntheticParams.__dataclass_fields__.values():
        p.add_argument("--" + f.name.replace("_", "-"), dest=f.name, type=type(f.default), default=None)

    p = sub.add_parser("dump-validate", help="check a prediction dump against a dataset")
    p.add_argument("--dataset", required=True)
    p.add_argument("--dump", required=True)
    p.add_argument("--mode", choices=MODES, default="entity")
    p.add_argument("--inverse-augment", action=argparse.BooleanOptionalAction, default=None)
    p.add_argument("--splits", default="valid,test", help=f"comma-separated subset of {SPLITS}")
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        if args.command == "synth":
            return cmd_synth(args)
        if args.command == "dump-validate":
            return cmd_dump_validate(args)
        cfg = config_from_args(args)
    except (TKGError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    out = Outputs(cfg.output_dir)
    command = {"evaluate": cmd_evaluate, "calibrate": cmd_calibrate, "ablate": cmd_ablate}[args.command]
    try:
        return command(cfg, out)
    except (TKGError, OSError) as exc:
        out.cleanup()
        print(f"error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
