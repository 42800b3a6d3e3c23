"""Command-line entry point.

Subcommands:
  bench         sweep merge budgets over a model and report FLOPs/drift
  analyze       spectral and redundancy diagnostics for a CSV
  trace         run the configured schedule once and dump its merge trace
  ingest-check  validate a CSV and report its shape

Exit codes: 0 success, 2 configuration error, 3 data error, 4 internal
error.  Errors are printed to stderr as one JSON object with fields
"error" (machine-readable code) and "message".
"""

from __future__ import annotations

import argparse
import csv
import json
import sys
from dataclasses import replace
from pathlib import Path
from typing import Sequence

import numpy as np

from .core import LayerSchedule, MergeTrace, TokenMatrix
from .errors import ConfigError, DataError, SeqMergeError
from .models import (
    FlopLedger,
    ModelConfig,
    decoder_forward,
    encoder_forward,
    ssm_forward,
    tokenize,
    tokenize_timestep,
)
from .signals import analyze_series
from . import report as rep


def ingest_csv(path: str) -> tuple[list[str], np.ndarray]:
    """Load a CSV of one timestamp/index column plus numeric variates.

    Returns (variate names, (rows, variates) float array).  The first
    column is skipped; rows are counted from 1 at the header so error
    messages match what an editor shows.
    """
    try:
        fh = open(path, "r", encoding="utf-8", newline="")
    except OSError as exc:
        raise DataError(f"cannot read data file {path}: {exc}") from exc
    with fh:
        reader = csv.reader(fh)
        try:
            header = next(reader)
        except StopIteration:
            raise DataError(f"{path}: file is empty") from None
        except (csv.Error, UnicodeDecodeError) as exc:
            raise DataError(f"{path}: {exc}") from exc
        ncols = len(header)
        if ncols < 2:
            raise DataError(
                f"{path}: need a timestamp column plus at least one variate, "
                f"got {ncols} column(s)"
            )
        values: list[list[float]] = []
        try:
            for line_no, row in enumerate(reader, start=2):
                if len(row) != ncols:
                    raise DataError(
                        f"{path}: ragged row {line_no}: expected {ncols} fields, "
                        f"got {len(row)}"
                    )
                parsed = []
                for col_no, cell in enumerate(row[1:], start=2):
                    try:
                        v = float(cell)
                    except ValueError:
                        raise DataError(
                            f"{path}: non-numeric value {cell!r} at row {line_no}, "
                            f"column {col_no}"
                        ) from None
                    if not np.isfinite(v):
                        raise DataError(
                            f"{path}: non-finite value {cell!r} at row {line_no}, "
                            f"column {col_no}"
                        )
                    parsed.append(v)
                values.append(parsed)
        except (csv.Error, UnicodeDecodeError) as exc:
            raise DataError(f"{path}: {exc}") from exc
    if not values:
        raise DataError(f"{path}: no data rows after the header")
    return header[1:], np.asarray(values, dtype=np.float64)


def _parse_sweep(text: str) -> list[int]:
    """Parse --r-sweep: either a single integer or half-open a:b:step."""
    try:
        if ":" not in text:
            vals = [int(text)]
        else:
            parts = text.split(":")
            if len(parts) != 3:
                raise ValueError("expected a:b:step")
            a, b, step = (int(p) for p in parts)
            if step < 1:
                raise ValueError("step must be >= 1")
            vals = list(range(a, b, step))
    except ValueError as exc:
        raise ConfigError(f"bad --r-sweep {text!r}: {exc}") from exc
    if not vals:
        raise ConfigError(f"--r-sweep {text!r} selects no values")
    if any(v < 0 for v in vals):
        raise ConfigError(f"--r-sweep {text!r} contains negative values")
    return vals


def _override_schedule(
    config: ModelConfig,
    *,
    r: int | None,
    tau: float | None,
    k: int | None,
    q: int | None,
    metric: str | None,
) -> ModelConfig:
    """Rebuild the encoder schedule from flags, keeping per-layer defaults."""
    entries = []
    try:
        for sched in config.schedule:
            entries.append(
                LayerSchedule(
                    mode="dynamic-tau" if tau is not None else "fixed-r",
                    r=sched.r if r is None else r,
                    tau=tau if tau is not None else sched.tau,
                    k=sched.k if k is None else k,
                    q=sched.q if q is None else q,
                    metric=sched.metric if metric is None else metric,
                )
            )
    except SeqMergeError as exc:
        raise ConfigError(f"invalid schedule override: {exc}") from exc
    return replace(config, schedule=tuple(entries))


def _check_data_shape(config: ModelConfig, series: np.ndarray, path: str) -> None:
    rows, cols = series.shape
    if cols != config.n:
        raise DataError(
            f"{path}: config expects n={config.n} variates, file has {cols}"
        )
    if rows < config.m:
        raise DataError(
            f"{path}: config expects m={config.m} rows, file has only {rows}"
        )


def _forward_pipeline(
    config: ModelConfig, series: np.ndarray
) -> tuple[np.ndarray, MergeTrace, FlopLedger]:
    """Run the configured model on the leading m samples.

    after-attention: encoder plus causal decoder, output is the (p, n)
    forecast.  after-operator: state-space stack, output is the size-
    weighted mean of the surviving tokens.
    """
    x = tokenize(series[: config.m], config)
    if config.merge_hook == "after-attention":
        enc_out, enc_trace, enc_ledger = encoder_forward(x, config)
        queries = tokenize_timestep(
            np.zeros((config.p, config.n)), config.d, config.seed
        )
        forecast, _, dec_ledger = decoder_forward(queries, enc_out, config)
        return forecast, enc_trace, enc_ledger.merged_with(dec_ledger)
    out, trace, ledger = ssm_forward(x, config)
    w = out.sizes.astype(np.float64)
    pooled = (w[:, None] * out.tokens).sum(axis=0) / w.sum()
    return pooled, trace, ledger


def bench_run(
    config: ModelConfig,
    series: np.ndarray,
    out_dir: Path,
    r_values: Sequence[int] | None,
    tau: float | None,
    k: int | None,
    q: int | None,
    metric: str | None,
) -> dict:
    """Sweep merge budgets, writing report.json/.csv/.png and trace files.

    The merge-free baseline (r = 0 everywhere) supplies flops_ref and the
    reference output for output_delta_L2.  With --tau the sweep is a
    single dynamic-threshold point recorded with r = null.
    """
    out_dir.mkdir(parents=True, exist_ok=True)
    base = _override_schedule(config, r=0, tau=None, k=k, q=q, metric=metric)
    ref_out, _, ref_ledger = _forward_pipeline(base, series)
    flops_ref = ref_ledger.total

    points: list[tuple[int | None, ModelConfig, str]] = []
    if tau is not None:
        cfg = _override_schedule(config, r=None, tau=tau, k=k, q=q, metric=metric)
        points.append((None, cfg, "trace_dynamic.json"))
    else:
        for r in r_values or [0]:
            cfg = _override_schedule(config, r=r, tau=None, k=k, q=q, metric=metric)
            points.append((r, cfg, f"trace_r{r}.json"))

    rows = []
    for r, cfg, trace_name in points:
        out, trace, ledger = _forward_pipeline(cfg, series)
        rep.write_json(out_dir / trace_name, trace.to_dict())
        rows.append(
            {
                "r": r,
                "flops_total": ledger.total,
                "flops_ref": flops_ref,
                "speedup": flops_ref / ledger.total,
                "output_delta_L2": float(np.linalg.norm(out - ref_out)),
                "trace_path": trace_name,
            }
        )

    payload = {
        "kind": "bench",
        "config": config.to_dict(),
        "tau": tau,
        "sweep": rows,
        "data_rows": int(series.shape[0]),
        "data_variates": int(series.shape[1]),
    }
    rep.write_json(out_dir / "report.json", payload)
    rep.write_csv(
        out_dir / "report.csv",
        ["r", "flops_total", "flops_ref", "speedup", "output_delta_L2", "trace_path"],
        [
            [
                "" if row["r"] is None else row["r"],
                row["flops_total"],
                row["flops_ref"],
                repr(row["speedup"]),
                repr(row["output_delta_L2"]),
                row["trace_path"],
            ]
            for row in rows
        ],
    )
    rep.bench_figure(out_dir / "report.png", rows)
    return payload


def analyze_run(
    names: list[str],
    series: np.ndarray,
    out_dir: Path,
    seed: int,
    k: int,
    metric: str,
) -> dict:
    """Per-variate diagnostics written as signals.json/.csv/.png."""
    out_dir.mkdir(parents=True, exist_ok=True)
    reports = [
        analyze_series(name, series[:, i], seed=seed, k=k, metric=metric).to_dict()
        for i, name in enumerate(names)
    ]
    payload = {"kind": "analyze", "seed": seed, "k": k, "metric": metric,
               "variates": reports}
    rep.write_json(out_dir / "signals.json", payload)
    csv_rows = []
    for r in reports:
        for tau, frac in r["redundancy"]:
            csv_rows.append([r["name"], repr(tau), repr(frac)])
    rep.write_csv(
        out_dir / "signals.csv", ["variate", "threshold", "fraction"], csv_rows
    )
    rep.analyze_figure(out_dir / "signals.png", names, series, reports)
    return payload


def trace_run(config: ModelConfig, series: np.ndarray, out_dir: Path) -> dict:
    """Single run at the configured schedule; dumps trace and clusters."""
    out_dir.mkdir(parents=True, exist_ok=True)
    _, trace, _ = _forward_pipeline(config, series)
    payload = trace.to_dict()
    rep.write_json(out_dir / "trace.json", payload)
    rep.write_csv(
        out_dir / "clusters.csv",
        ["position", "token"],
        [[pos, tok] for pos, tok in enumerate(trace.final_map)],
    )
    per_pos = config.patch_len if config.tokenizer == "patch" else 1
    rep.trace_figure(
        out_dir / "trace.png",
        series[: config.m, 0],
        trace.final_map,
        int(per_pos or 1),
    )
    return payload


def _build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="seqmerge",
        description="Token-merging benchmarks and diagnostics for sequence models.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    bench = sub.add_parser("bench", help="sweep merge budgets and report FLOPs")
    bench.add_argument("--config", required=True, help="model config JSON")
    bench.add_argument("--data", required=True, help="input CSV")
    bench.add_argument("--out", required=True, help="output directory")
    bench.add_argument("--seed", type=int, default=None, help="override config seed")
    bench.add_argument(
        "--r-sweep",
        default="0:1:1",
        help="merge budgets as a:b:step (half-open, like range) or one integer",
    )
    bench.add_argument("--tau", type=float, default=None,
                       help="dynamic threshold (replaces the r sweep)")
    bench.add_argument("--k", type=int, default=None, help="band width override")
    bench.add_argument("--q", type=int, default=None, help="survivor floor override")
    bench.add_argument("--metric", choices=["cosine", "l1", "l2"], default=None)

    analyze = sub.add_parser("analyze", help="spectral/redundancy diagnostics")
    analyze.add_argument("--data", required=True)
    analyze.add_argument("--out", required=True)
    analyze.add_argument("--seed", type=int, default=0)
    analyze.add_argument("--k", type=int, default=1)
    analyze.add_argument("--metric", choices=["cosine", "l1", "l2"], default="cosine")

    trace = sub.add_parser("trace", help="dump the merge trace for a config")
    trace.add_argument("--config", required=True)
    trace.add_argument("--data", required=True)
    trace.add_argument("--out", required=True)
    trace.add_argument("--seed", type=int, default=None)

    ingest = sub.add_parser("ingest-check", help="validate a CSV input")
    ingest.add_argument("--data", required=True)
    return parser


def _load_config(path: str, seed: int | None) -> ModelConfig:
    config = ModelConfig.from_json(path)
    if seed is not None:
        config = replace(config, seed=seed)
    return config


def main(argv: Sequence[str] | None = None) -> int:
    parser = _build_parser()
    args = parser.parse_args(argv)
    try:
        if args.command == "bench":
            config = _load_config(args.config, args.seed)
            names, series = ingest_csv(args.data)
            _check_data_shape(config, series, args.data)
            r_values = None if args.tau is not None else _parse_sweep(args.r_sweep)
            bench_run(
                config,
                series,
                Path(args.out),
                r_values,
                args.tau,
                args.k,
                args.q,
                args.metric,
            )
        elif args.command == "analyze":
            names, series = ingest_csv(args.data)
            if args.k < 1:
                raise ConfigError(f"--k must be >= 1, got {args.k}")
            analyze_run(names, series, Path(args.out), args.seed, args.k, args.metric)
        elif args.command == "trace":
            config = _load_config(args.config, args.seed)
            names, series = ingest_csv(args.data)
            _check_data_shape(config, series, args.data)
            trace_run(config, series, Path(args.out))
        elif args.command == "ingest-check":
            names, series = ingest_csv(args.data)
            print(
                json.dumps(
                    {
                        "rows": int(series.shape[0]),
                        "variates": names,
                        "ok": True,
                    },
                    sort_keys=True,
                )
            )
        return 0
    except SeqMergeError as exc:
        print(
            json.dumps({"error": exc.code, "message": str(exc)}, sort_keys=True),
            file=sys.stderr,
        )
        return exc.exit_code
    except Exception as exc:  # noqa: BLE001 - last-resort mapping to exit 4
        print(
            json.dumps({"error": "internal", "message": f"{type(exc).__name__}: {exc}"},
                       sort_keys=True),
            file=sys.stderr,
        )
        return 4


if __name__ == "__main__":
    sys.exit(main())
