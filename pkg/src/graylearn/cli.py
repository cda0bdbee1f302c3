"""Command-line front end.

    graylearn train       --config exp.ini --out results/
    graylearn ablate      --config exp.ini --out results/
    graylearn sweep-alpha --config exp.ini --out results/ [--alphas 0.05:0.5:0.05]
    graylearn calibrate   --config exp.ini --out results/
    graylearn mix         --config exp.ini --out results/
    graylearn eval        --checkpoint model.glck --data test.csv --out results/
    graylearn bounds      --inputs bounds.csv --out results/

Exit codes: 0 success, 2 bad configuration or input, 3 numeric failure.
Every CSV starts with a ``#`` comment carrying the command, a digest of the
configuration and the seed list; reruns with the same inputs are byte-identical.
Wall-clock times go to the log (stderr) only.
"""

from __future__ import annotations

import argparse
import csv
import io
import logging
import math
import os
import sys
from concurrent.futures import ThreadPoolExecutor
from dataclasses import replace
from pathlib import Path

from graylearn import bounds as bc
from graylearn.config import ConfigError, RunSettings, digest_of, load_config, parse_alphas, parse_list
from graylearn.data import DataError, Labeling, load_csv, save_csv
from graylearn.experiment import CellResult, mean_std, prepare, run_cell
from graylearn.losses import GL, NL, STANDARD, STANDARD_PLUS_NL
from graylearn.metrics import evaluate, reliability_rows
from graylearn.numerics import NumericError
from graylearn.train import CheckpointError, checkpoint_load, checkpoint_save

log = logging.getLogger("graylearn")

RUN_COLUMNS = ["method", "alpha", "labeling", "seed", "accuracy", "ece", "confidence_gap"]
SUMMARY_COLUMNS = ["method", "alpha", "labeling", "n_seeds", "accuracy_mean", "accuracy_std", "ece_mean", "ece_std", "gap_mean", "gap_std"]
BIN_COLUMNS = ["bin_low", "bin_high", "count", "mean_confidence", "accuracy"]


class UsageError(ValueError):
    pass


def _fmt(v) -> str:
    if isinstance(v, float):
        return "nan" if math.isnan(v) else repr(v)
    return str(v)


def write_csv(path: Path, header_comment: str, columns, rows) -> None:
    """Write atomically (temp file, then rename)."""
    buf = io.StringIO()
    buf.write(f"# {header_comment}\n")
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(columns)
    for row in rows:
        w.writerow([_fmt(v) for v in row])
    tmp = path.with_name(path.name + ".tmp")
    tmp.write_text(buf.getvalue(), encoding="utf-8")
    os.replace(tmp, path)


def _comment(cmd: str, settings: RunSettings) -> str:
    seeds = ",".join(str(s) for s in settings.experiment.seeds)
    return f"graylearn {cmd} config={settings.digest} seeds={seeds}"


def _run_row(c: CellResult) -> list:
    return [c.method, c.alpha, c.labeling, c.seed, c.accuracy, c.ece, c.gap]


def _summary_rows(cells: list[CellResult]) -> list[list]:
    groups: dict[tuple, list[CellResult]] = {}
    for c in cells:
        groups.setdefault((c.method, c.alpha, c.labeling), []).append(c)
    rows = []
    for (method, alpha, labeling), group in groups.items():
        acc = mean_std(c.accuracy for c in group)
        ece = mean_std(c.ece for c in group)
        gap = mean_std(c.gap for c in group)
        rows.append([method, alpha, labeling, len(group), *acc, *ece, *gap])
    return rows


def _map(fn, items, threads: int):
    items = list(items)
    if threads <= 1:
        return [fn(i) for i in items]
    with ThreadPoolExecutor(max_workers=threads) as pool:
        return list(pool.map(fn, items))


def _cells(settings: RunSettings, methods, threads: int, alpha=None, labeling=None) -> list[CellResult]:
    exp = settings.experiment
    jobs = []
    for seed in exp.seeds:
        datasets = prepare(exp, seed, alpha, labeling)
        jobs += [(m, seed, datasets) for m in methods]

    def one(job):
        m, seed, datasets = job
        cell = run_cell(exp, m, seed, alpha, labeling, datasets=datasets)
        log.info("%s seed=%d alpha=%s acc=%.4f ece=%.4f (%.2fs)", cell.method, seed, cell.alpha, cell.accuracy, cell.ece, cell.wall_clock)
        return cell

    return _map(one, jobs, threads)


# --- commands -------------------------------------------------------------

def cmd_train(settings: RunSettings, out: Path, threads: int) -> None:
    exp = settings.experiment
    cells = _cells(settings, [exp.train.method], threads)
    for c in cells:
        checkpoint_save(c.record.params, out / f"model_seed{c.seed}.glck")
    write_csv(out / "train.csv", _comment("train", settings), RUN_COLUMNS, [_run_row(c) for c in cells])


def cmd_ablate(settings: RunSettings, out: Path, threads: int) -> None:
    methods = settings.methods or (GL, STANDARD, NL, STANDARD_PLUS_NL)
    cells = _cells(settings, methods, threads)
    cells.sort(key=lambda c: ([str(m) for m in methods].index(c.method), c.seed))
    write_csv(out / "ablate_runs.csv", _comment("ablate", settings), RUN_COLUMNS, [_run_row(c) for c in cells])
    write_csv(out / "ablate.csv", _comment("ablate", settings), SUMMARY_COLUMNS, _summary_rows(cells))


def cmd_sweep_alpha(settings: RunSettings, out: Path, threads: int) -> None:
    methods = settings.methods or (GL, STANDARD)
    cells = []
    for alpha in settings.alphas:
        for labeling in (Labeling.SPECIFIC, Labeling.RANDOM):
            cells += _cells(settings, methods, threads, alpha, labeling)
    write_csv(out / "sweep_alpha_runs.csv", _comment("sweep-alpha", settings), RUN_COLUMNS, [_run_row(c) for c in cells])
    write_csv(out / "sweep_alpha.csv", _comment("sweep-alpha", settings), SUMMARY_COLUMNS, _summary_rows(cells))


def cmd_calibrate(settings: RunSettings, out: Path, threads: int) -> None:
    methods = settings.methods or (GL, STANDARD)
    cells = _cells(settings, methods, threads)
    rows = []
    for c in cells:
        for b in reliability_rows(c.report.bins):
            rows.append([c.method, c.seed, *b])
    write_csv(out / "reliability.csv", _comment("calibrate", settings), ["method", "seed", *BIN_COLUMNS], rows)
    write_csv(out / "calibration.csv", _comment("calibrate", settings), SUMMARY_COLUMNS, _summary_rows(cells))


def cmd_mix(settings: RunSettings, out: Path, threads: int) -> None:
    for seed in settings.experiment.seeds:
        train_set, test = prepare(settings.experiment, seed)
        save_csv(train_set, out / f"train_seed{seed}.csv")
        save_csv(test, out / f"test_seed{seed}.csv")


def cmd_eval(checkpoint: Path, data_path: Path, label_column: str, has_header: bool, out: Path) -> None:
    params = checkpoint_load(checkpoint)
    data = load_csv(data_path, label_column, has_header)
    if data.num_classes > params.layout[-1]:
        raise UsageError(f"{data_path} has {data.num_classes} classes, the network predicts {params.layout[-1]}")
    data = replace(data, num_classes=params.layout[-1])
    report = evaluate(params, data)
    comment = f"graylearn eval checkpoint={checkpoint.name} data={digest_of(data_path.read_text(encoding='utf-8'))}"
    write_csv(out / "eval.csv", comment, ["n", "accuracy", "ece"], [[report.n, report.accuracy, report.ece]])
    write_csv(out / "eval_reliability.csv", comment, BIN_COLUMNS, reliability_rows(report.bins))


BOUND_FIELDS = ["alpha", "n_id", "n_ood", "B", "L", "c", "depth", "M", "K", "lambda", "z", "delta", "d_h"]


def _bound_inputs(row: dict) -> bc.BoundInputs:
    missing = [f for f in BOUND_FIELDS if f != "d_h" and not (row.get(f) or "").strip()]
    if missing:
        raise ValueError(f"missing field(s): {', '.join(missing)}")
    return bc.BoundInputs(
        alpha=float(row["alpha"]), n_id=int(row["n_id"]), n_ood=int(row["n_ood"]), B=float(row["B"]),
        L=float(row["L"]), c=float(row["c"]), depth=int(row["depth"]), M=parse_list(row["M"], float),
        K=int(row["K"]), lam=float(row["lambda"]), z=float(row["z"]), delta=float(row["delta"]),
        d_h=float(row.get("d_h") or 0.0),
    )


def cmd_bounds(inputs: Path, out: Path) -> int:
    """One output row per input row; malformed rows get an error entry.

    Input columns: alpha, n_id, n_ood, B, L, c, depth, M (``;``-separated),
    K, lambda, z, delta, d_h (optional, default 0).
    """
    text = inputs.read_text(encoding="utf-8")
    lines = [ln for ln in text.splitlines() if ln.strip() and not ln.lstrip().startswith("#")]
    reader = csv.DictReader(lines)
    unknown = set(reader.fieldnames or []) - set(BOUND_FIELDS)
    if unknown:
        raise UsageError(f"{inputs}: unknown column(s) {sorted(unknown)}")
    rows, failures = [], 0
    for i, row in enumerate(reader, 1):
        try:
            inp = _bound_inputs(row)
            std = bc.bound_standard(inp)
            gl = bc.bound_gl(inp)
            thr = bc.lambda_threshold(inp.B, inp.depth, inp.M, inp.L, inp.K, inp.z)
            rows.append([i, std, gl, thr, bc.lambda_crossover(inp), str(inp.lam <= thr).lower(), str(gl <= std).lower(), ""])
        except (ValueError, TypeError, OverflowError) as exc:
            failures += 1
            rows.append([i, "", "", "", "", "", "", f"row {i}: {exc}"])
    comment = f"graylearn bounds inputs={digest_of(text)}"
    columns = ["row", "bound_standard", "bound_gl", "lambda_threshold", "lambda_crossover", "within_threshold", "gl_tighter", "error"]
    write_csv(out / "bounds.csv", comment, columns, rows)
    return 2 if failures else 0


# --- entry point ----------------------------------------------------------

def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("-v", "--verbose", action="store_true", help="log per-run metrics and timings")
    p = argparse.ArgumentParser(prog="graylearn", description=__doc__.split("\n\n")[0])
    sub = p.add_subparsers(dest="command", required=True)
    for name in ("train", "ablate", "sweep-alpha", "calibrate", "mix"):
        s = sub.add_parser(name, parents=[common])
        s.add_argument("--config", required=True, type=Path)
        s.add_argument("--out", default=Path("results"), type=Path)
        s.add_argument("--seeds", help="comma-separated seed list overriding [run] seeds")
        s.add_argument("--threads", type=int, default=1)
        if name == "sweep-alpha":
            s.add_argument("--alphas", help="list or start:stop:step overriding [run] alphas")
    s = sub.add_parser("bounds", parents=[common])
    s.add_argument("--inputs", "--config", dest="inputs", required=True, type=Path)
    s.add_argument("--out", default=Path("results"), type=Path)
    s = sub.add_parser("eval", parents=[common])
    s.add_argument("--checkpoint", required=True, type=Path)
    s.add_argument("--data", required=True, type=Path)
    s.add_argument("--label-column", default="-1")
    s.add_argument("--no-header", action="store_true")
    s.add_argument("--out", default=Path("results"), type=Path)
    return p


COMMANDS = {"train": cmd_train, "ablate": cmd_ablate, "sweep-alpha": cmd_sweep_alpha, "calibrate": cmd_calibrate, "mix": cmd_mix}


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(levelname)s %(message)s")
    try:
        args.out.mkdir(parents=True, exist_ok=True)
        if args.command == "bounds":
            return cmd_bounds(args.inputs, args.out)
        if args.command == "eval":
            cmd_eval(args.checkpoint, args.data, args.label_column, not args.no_header, args.out)
            return 0
        settings = load_config(args.config)
        if args.seeds:
            seeds = parse_list(args.seeds, int)
            settings = replace(settings, experiment=replace(settings.experiment, seeds=seeds))
        if getattr(args, "alphas", None):
            alphas = parse_alphas(args.alphas)
            if any(not 0.0 <= a <= 1.0 for a in alphas):
                raise UsageError("--alphas: every alpha must lie in [0, 1]")
            settings = replace(settings, alphas=alphas)
        COMMANDS[args.command](settings, args.out, max(1, args.threads))
        return 0
    except NumericError as exc:
        print(f"graylearn: numeric failure: {exc}", file=sys.stderr)
        return 3
    except (ConfigError, DataError, CheckpointError, UsageError, OSError, ValueError) as exc:
        print(f"graylearn: error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
