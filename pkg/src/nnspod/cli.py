"""Command-line front end: ``gen``, ``offline``, ``online`` and ``report``.

Exit codes: 0 success, 1 numerical failure, 2 I/O or configuration failure.
"""

from __future__ import annotations

import argparse
import csv
import json
import logging
import os
import sys
import warnings
from pathlib import Path

import numpy as np

from . import __version__
from ._container import ModelFormatError
from .config import PRESETS, ConfigError, PipelineConfig, load_config
from .neuralnet import DivergenceError
from .pipeline import load_data, run_offline
from .rom import RomModel, predict, rel_l2
from .snapshots import SnapshotFormatError, SnapshotSet, load_snapshots, save_snapshots
from .testcases import GENERATORS

log = logging.getLogger("nnspod")

EXIT_OK, EXIT_NUMERIC, EXIT_IO = 0, 1, 2
OUTPUT_ROOT_ENV = "NNSPOD_OUTPUT_ROOT"

RUN_FILES = ("config.ini", "report.json", "model.nrom", "spectrum.csv", "errors_train.csv")


class CliError(Exception):
    def __init__(self, message: str, code: int = EXIT_IO):
        super().__init__(message)
        self.code = code


# helpers ---------------------------------------------------------------------


def _output_dir(arg: str | None, cfg: PipelineConfig | None, default_name: str) -> Path:
    if arg:
        return Path(arg)
    if cfg is not None and cfg.output:
        return Path(cfg.output)
    return Path(os.environ.get(OUTPUT_ROOT_ENV, "runs")) / default_name


def _config_from_args(args) -> PipelineConfig:
    overrides = list(args.set or [])
    if getattr(args, "seed", None) is not None:
        overrides.append(f"run.seed={args.seed}")
    return load_config(args.config, args.preset, overrides)


def _write_csv(path: Path, header: list[str], rows) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(header)
        for row in rows:
            w.writerow(["" if v is None else (repr(float(v)) if isinstance(v, (float, np.floating)) else v)
                        for v in row])


def _read_csv(path: Path) -> tuple[list[str], list[list[str]]]:
    with open(path, newline="") as fh:
        rows = list(csv.reader(fh))
    if not rows:
        raise CliError(f"{path}: empty file")
    return rows[0], rows[1:]


def _error_rows(model: RomModel, data: SnapshotSet, indices, split: str):
    pred = predict(model, data.params)
    rows = []
    for k, (mu, u, up) in enumerate(zip(data.params, data.fields, pred)):
        err = rel_l2(u, up)
        if not np.isfinite(err):
            raise CliError(f"non-finite error for parameter {mu}", EXIT_NUMERIC)
        rows.append([split, int(indices[k]), *[float(v) for v in mu], err])
    return rows, pred


def _mean(rows) -> float | None:
    vals = [r[-1] for r in rows if r[-1] is not None]
    return float(np.mean(vals)) if vals else None


# gen -------------------------------------------------------------------------


def cmd_gen(args) -> int:
    overrides = [f"case.generator={args.case}"] + list(args.set or [])
    cfg = load_config(args.config, None, overrides)
    data = load_data(cfg)
    out = _output_dir(args.out, None, f"snapshots_{args.case}")
    if args.format == "binary" and out.suffix == "":
        out = out.with_suffix(".srom")
    try:
        path = save_snapshots(data, out, args.format)
    except OSError as exc:
        raise CliError(f"cannot write snapshots to {out}: {exc}") from None
    print(f"wrote {len(data)} snapshots x {data.grid.n} nodes to {path}")
    return EXIT_OK


# offline ---------------------------------------------------------------------


def cmd_offline(args) -> int:
    cfg = _config_from_args(args)
    out = _output_dir(args.out, cfg, args.preset or "run")
    data = load_data(cfg)
    try:
        res = run_offline(cfg, data)
    except DivergenceError as exc:
        raise CliError(f"offline failed during training: {exc}", EXIT_NUMERIC) from None
    except np.linalg.LinAlgError as exc:
        raise CliError(f"offline failed during ROM build: {exc}", EXIT_NUMERIC) from None
    if not np.all(np.isfinite(res.train_errors)):
        raise CliError("non-finite training error", EXIT_NUMERIC)

    p = data.params.shape[1]
    rows = [["train", int(i), *[float(v) for v in data.params[i]], float(e)]
            for i, e in zip(res.train_idx, res.train_errors)]
    try:
        out.mkdir(parents=True, exist_ok=True)
        (out / "config.ini").write_text(cfg.to_ini())
        res.model.save(out / "model.nrom")
        _write_csv(out / "spectrum.csv", ["k", "pod", "nnspod"],
                   [[int(k), a, b] for k, a, b in res.spectrum])
        _write_csv(out / "errors_train.csv", ["split", "index", *[f"mu{k}" for k in range(p)], "rel_l2"],
                   rows)
        report = {
            "config_hash": cfg.config_hash(),
            "seed": cfg.seed,
            "preset": args.preset,
            "timings": res.timings,
            "losses": res.model.shift_model.report,
            "rank": res.model.basis.rank,
            "energy": res.model.basis.energy,
            "split": {"train": [int(i) for i in res.train_idx], "test": [int(i) for i in res.test_idx]},
            "mean_errors": {"train": _mean(rows)},
        }
        (out / "report.json").write_text(json.dumps(report, indent=2, sort_keys=True) + "\n")
    except OSError as exc:
        raise CliError(f"cannot write run directory {out}: {exc}") from None

    print(f"offline run written to {out}")
    print(f"  rank {res.model.basis.rank}, energy {res.model.basis.energy:.6f}, "
          f"mean train rel-L2 {_mean(rows):.3e}")
    return EXIT_OK


# online ----------------------------------------------------------------------


def _parse_params(text: str, p: int) -> np.ndarray:
    try:
        rows = [[float(v) for v in chunk.split(",")] for chunk in text.split(";") if chunk.strip()]
    except ValueError as exc:
        raise CliError(f"--params: {exc}") from None
    arr = np.array(rows, dtype=float)
    if arr.ndim != 2 or arr.shape[1] != p:
        raise CliError(f"--params: each entry needs {p} comma-separated values")
    return arr


def cmd_online(args) -> int:
    run = Path(args.run)
    model_path = Path(args.model) if args.model else run / "model.nrom"
    if not model_path.is_file():
        raise CliError(f"model file not found: {model_path}")
    model = RomModel.load(model_path)
    p = model.rbf.centers.shape[1]
    out = Path(args.out) if args.out else run

    split_rows: list[list] = []
    fields: list[np.ndarray] = []
    params: list[np.ndarray] = []
    means: dict[str, float | None] = {}

    if args.params:
        mu = _parse_params(args.params, p)
        pred = predict(model, mu)
        for k, m in enumerate(mu):
            split_rows.append(["new", k, *[float(v) for v in m], None])
        fields.extend(pred)
        params.extend(mu)
        means["new"] = None

    if args.truth:
        truth = load_snapshots(args.truth)
        if truth.grid.n != model.grid.n or not truth.grid.same_as(model.grid):
            raise CliError(f"{args.truth}: grid does not match the model grid "
                           f"({truth.grid.n} vs {model.grid.n} nodes)")
        if truth.params.shape[1] != p:
            raise CliError(f"{args.truth}: {truth.params.shape[1]} parameters, model expects {p}")
        rows, pred = _error_rows(model, truth, np.arange(len(truth)), "truth")
        split_rows += rows
        fields.extend(pred)
        params.extend(truth.params)
        means["truth"] = _mean(rows)

    for split in args.split or []:
        cfg_path = run / "config.ini"
        rep_path = run / "report.json"
        if not cfg_path.is_file() or not rep_path.is_file():
            raise CliError(f"--split needs an offline run directory; missing {cfg_path} or {rep_path}")
        cfg = load_config(cfg_path)
        data = load_data(cfg)
        idx = np.array(json.loads(rep_path.read_text())["split"][split], dtype=int)
        if not data.grid.same_as(model.grid):
            raise CliError("snapshot grid does not match the model grid")
        rows, pred = _error_rows(model, data.subset(idx), idx, split)
        split_rows += rows
        fields.extend(pred)
        params.extend(data.params[idx])
        means[split] = _mean(rows)

    if not split_rows:
        raise CliError("nothing to predict: give --params, --truth or --split")

    try:
        out.mkdir(parents=True, exist_ok=True)
        names = [f"mu{k}" for k in range(p)]
        _write_csv(out / "errors_online.csv", ["split", "index", *names, "rel_l2"], split_rows)
        _write_csv(out / "predictions.csv",
                   ["split", "index", *names, *[f"u_{j}" for j in range(model.grid.n)]],
                   [[r[0], r[1], *m, *f] for r, m, f in zip(split_rows, params, fields)])
        rep_path = out / "report.json"
        report = json.loads(rep_path.read_text()) if rep_path.is_file() else {}
        report.setdefault("mean_errors", {}).update(means)
        rep_path.write_text(json.dumps(report, indent=2, sort_keys=True) + "\n")
    except OSError as exc:
        raise CliError(f"cannot write online outputs to {out}: {exc}") from None

    for split, m in means.items():
        print(f"{split}: {sum(r[0] == split for r in split_rows)} predictions"
              + (f", mean rel-L2 {m:.3e}" if m is not None else ""))
    return EXIT_OK


# report ----------------------------------------------------------------------


def cmd_report(args) -> int:
    runs = [Path(r) for r in args.runs]
    reports = []
    for run in runs:
        missing = [f for f in RUN_FILES if not (run / f).is_file()]
        if missing:
            raise CliError(f"{run}: missing run artifacts: {', '.join(missing)} "
                           f"(expected {', '.join(RUN_FILES)})")
        reports.append(json.loads((run / "report.json").read_text()))
    hashes = {r["config_hash"] for r in reports}
    if len(hashes) > 1:
        detail = ", ".join(f"{run} ({rep['config_hash']}, seed {rep['seed']})"
                           for run, rep in zip(runs, reports))
        raise CliError(f"config-hash mismatch, refusing to merge: {detail}")

    out = Path(args.out) if args.out else runs[0]
    spectrum_rows, error_rows = [], []
    for run in runs:
        _, rows = _read_csv(run / "spectrum.csv")
        spectrum_rows += [[str(run), *r] for r in rows]
        for name in ("errors_train.csv", "errors_online.csv"):
            if (run / name).is_file():
                header, rows = _read_csv(run / name)
                error_rows += [[str(run), r[0], r[1], ";".join(r[2:-1]), r[-1]] for r in rows]

    try:
        out.mkdir(parents=True, exist_ok=True)
        _write_csv(out / "summary_spectrum.csv", ["run", "k", "pod", "nnspod"], spectrum_rows)
        _write_csv(out / "summary_errors.csv", ["run", "split", "index", "mu", "rel_l2"], error_rows)
        lines = ["# NNsPOD run summary", ""]
        for run, rep in zip(runs, reports):
            lines += [f"## {run}", "",
                      f"- config hash: `{rep['config_hash']}`, seed {rep['seed']}",
                      f"- POD rank {rep['rank']}, retained energy {rep['energy']:.6f}"]
            for phase, sec in sorted(rep.get("timings", {}).items()):
                lines.append(f"- time {phase}: {sec:.2f} s")
            for split, m in sorted(rep.get("mean_errors", {}).items()):
                if m is not None:
                    lines.append(f"- mean rel-L2 ({split}): {m:.3e}")
            lines.append("")
        lines += ["## Spectrum", "", "| run | k | POD | NNsPOD |", "|---|---|---|---|"]
        lines += [f"| {r[0]} | {r[1]} | {float(r[2]):.3e} | {float(r[3]):.3e} |" for r in spectrum_rows]
        lines.append("")
        (out / "summary.md").write_text("\n".join(lines))
    except OSError as exc:
        raise CliError(f"cannot write summary to {out}: {exc}") from None
    print(f"summary written to {out / 'summary.md'}")
    return EXIT_OK


# entry point -----------------------------------------------------------------


def _add_config_args(p: argparse.ArgumentParser, preset: bool = True) -> None:
    p.add_argument("--config", help="INI config file")
    if preset:
        p.add_argument("--preset", choices=sorted(PRESETS), help="hyperparameter preset")
    p.add_argument("--set", action="append", metavar="SECTION.KEY=VALUE",
                   help="override a config entry (repeatable)")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="nnspod", description=__doc__.splitlines()[0])
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    parser.add_argument("-v", "--verbose", action="store_true", help="log training progress")
    sub = parser.add_subparsers(dest="command", required=True)

    g = sub.add_parser("gen", help="generate a synthetic snapshot database")
    g.add_argument("case", choices=sorted(GENERATORS))
    g.add_argument("--format", choices=("csv", "binary"), default="csv")
    g.add_argument("--out", help="output directory (csv) or file (binary)")
    _add_config_args(g, preset=False)
    g.set_defaults(func=cmd_gen)

    o = sub.add_parser("offline", help="train the shift model and build the ROM")
    _add_config_args(o)
    o.add_argument("--seed", type=int, help="shortcut for --set run.seed=N")
    o.add_argument("--out", help=f"run directory (default ${OUTPUT_ROOT_ENV}/<preset>)")
    o.set_defaults(func=cmd_offline)

    on = sub.add_parser("online", help="predict fields from a trained ROM")
    on.add_argument("run", help="offline run directory")
    on.add_argument("--model", help="model file (default RUN/model.nrom)")
    on.add_argument("--params", help="parameter vectors, ';' between vectors, ',' between components")
    on.add_argument("--split", action="append", choices=("train", "test"),
                    help="evaluate on a split of the run's database (repeatable)")
    on.add_argument("--truth", help="snapshot file/directory with reference fields")
    on.add_argument("--out", help="output directory (default RUN)")
    on.set_defaults(func=cmd_online)

    r = sub.add_parser("report", help="merge run artifacts into a summary")
    r.add_argument("runs", nargs="+", help="run directories")
    r.add_argument("--out", help="summary directory (default first run)")
    r.set_defaults(func=cmd_report)
    return parser


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.ERROR,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        with warnings.catch_warnings():
            if not args.verbose:
                warnings.simplefilter("ignore", RuntimeWarning)
            return args.func(args)
    except CliError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return exc.code
    except (ConfigError, SnapshotFormatError, ModelFormatError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_IO
    except (FileNotFoundError, PermissionError, IsADirectoryError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_IO
    except (DivergenceError, np.linalg.LinAlgError) as exc:
        print(f"error: numerical failure: {exc}", file=sys.stderr)
        return EXIT_NUMERIC


if __name__ == "__main__":
    sys.exit(main())
