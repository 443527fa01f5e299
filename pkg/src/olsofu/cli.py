"""Command-line entry point: pretrain, run, sweep, validate.

Exit codes: 0 ok, 1 validation failure, 2 config error, 3 training
divergence, 4 runtime error. All outputs are written atomically (temp file
plus rename) so failed invocations never leave partial files.
"""

from __future__ import annotations

import argparse
import concurrent.futures
import dataclasses
import json
import os
import sys
import tempfile
from pathlib import Path

import numpy as np

from .config import iter_schema_keys, load_config, scenario_from_config
from .errors import ConfigError, RunError, TrainingDivergedError, UndefinedCorrelationError
from .harness import improvement_check, pretrain, run_online
from .models import accuracy, load_model, save_model, train_supervised
from .synthdata import make_source_data

EXIT_OK = 0
EXIT_VALIDATION = 1
EXIT_CONFIG = 2
EXIT_TRAINING = 3
EXIT_RUNTIME = 4


def write_atomic(path: Path, data) -> None:
    """Write bytes or text via a temp file in the same directory + rename."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    mode = "wb" if isinstance(data, bytes) else "w"
    fd, tmp = tempfile.mkstemp(dir=path.parent, prefix=f".{path.name}.")
    try:
        with os.fdopen(fd, mode) as fh:
            fh.write(data)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def save_model_atomic(model, path: Path) -> None:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    fd, tmp = tempfile.mkstemp(dir=path.parent, prefix=f".{path.name}.")
    os.close(fd)
    try:
        save_model(model, tmp)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def _out_dir(args) -> Path:
    env = os.environ.get("OLSOFU_OUT")
    return Path(env) if env else Path(args.out)


def _config_epilog() -> str:
    lines = ["config keys (default) - description:"]
    for path, key in iter_schema_keys():
        default = json.dumps(key.default)
        lines.append(f"  {path} ({default}): {key.help}")
    return "\n".join(lines)


def cmd_pretrain(args) -> int:
    cfg = load_config(args.config)
    out = _out_dir(args)
    sc = scenario_from_config(cfg)
    try:
        train, val, _, _ = make_source_data(sc.data, sc.data_seed)
        model = train_supervised(
            train,
            sc.train_cfg,
            k=sc.data.k,
            ssl_kind=sc.pretrain_ssl,
            ssl_weight=sc.pretrain_ssl_weight,
            hidden=sc.hidden,
            activation=sc.activation,
            infonce_temperature=sc.ssl.infonce_temperature,
            augment_noise=sc.ssl.augment_noise,
        )
    except TrainingDivergedError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_TRAINING
    pre = pretrain(sc, model=model)
    save_model_atomic(model, out / "checkpoint.npz")
    sidecar = {
        "train_accuracy": accuracy(pre.model, train),
        "val_accuracy": accuracy(pre.model, val),
        "sigma_min": pre.sigma_min,
        "temperature": pre.model.temperature,
        "config": cfg,
    }
    write_atomic(out / "checkpoint.meta.json", json.dumps(sidecar, indent=2))
    print(
        f"pretrained: val_accuracy={sidecar['val_accuracy']:.4f} "
        f"sigma_min={sidecar['sigma_min']:.4f} -> {out / 'checkpoint.npz'}"
    )
    return EXIT_OK


def _load_scenario(args):
    cfg = load_config(args.config)
    sc = scenario_from_config(cfg, run_seed=args.seed, order=args.order)
    model = None
    if cfg["checkpoint"] is not None:
        path = Path(cfg["checkpoint"])
        if not path.exists():
            raise ConfigError(f"checkpoint not found: {path}")
        model = load_model(path)
    return cfg, sc, model


def cmd_run(args) -> int:
    cfg, sc, model = _load_scenario(args)
    out = _out_dir(args)
    pre = pretrain(sc, model=model)
    trace = run_online(sc, pre)
    summary = {
        "algorithm": sc.algorithm,
        "ssl": sc.ssl.kind,
        "order": sc.order,
        "avg_error": trace.avg_error,
        "shift_severity": trace.shift_severity,
        "horizon": trace.horizon,
        "batch_size": trace.batch_size,
        "seeds": {"data": sc.data_seed, "shift": sc.shift_seed, "run": sc.run_seed},
    }
    if cfg["improvement_check"]:
        lhs, rhs, holds = improvement_check(sc, pre)
        summary["improvement_check"] = {"lhs": round(lhs, 4), "rhs": round(rhs, 4), "holds": holds}
    import io

    # Render the CSV into memory so the write is atomic.
    buf = io.StringIO()
    _render_trace_csv(trace, buf)
    write_atomic(out / "trace.csv", buf.getvalue())
    write_atomic(out / "summary.json", json.dumps(summary, indent=2))
    print(json.dumps(summary))
    return EXIT_OK


def _render_trace_csv(trace, fh) -> None:
    import csv as _csv

    k = trace.q.shape[1]
    writer = _csv.writer(fh)
    writer.writerow(
        ["t"]
        + [f"q{i}" for i in range(k)]
        + [f"s{i}" for i in range(k)]
        + ["errors", "cum_errors"]
    )
    cum = trace.cum_errors
    for t in range(trace.horizon):
        writer.writerow(
            [t + 1]
            + [repr(float(v)) for v in trace.q[t]]
            + [repr(float(v)) for v in trace.s[t]]
            + [int(trace.errors[t]), int(cum[t])]
        )


def _sweep_combos(cfg) -> list[dict]:
    axes = cfg["sweep"]
    combos = []
    for algo in axes["algorithm"]:
        for ssl in axes["ssl"]:
            for shift in axes["shift"]:
                for corr in axes["corruption"]:
                    combos.append(
                        {"algorithm": algo, "ssl": ssl, "shift": shift,
                         "corruption": corr}
                    )
    combos.sort(key=lambda c: (c["algorithm"], c["ssl"], c["shift"], c["corruption"]))
    return combos


def _combo_key(combo: dict) -> str:
    return "|".join(
        f"{k}={combo[k]}" for k in ("algorithm", "ssl", "shift", "corruption")
    )


def _sweep_cell(payload):
    """Run one sweep cell; executed in a worker process."""
    cfg, combo, seed_override, order_override = payload
    key = _combo_key(combo)
    try:
        sc = scenario_from_config(cfg, run_seed=seed_override, order=order_override)
        if combo["ssl"] == cfg["ssl"]["kind"]:
            ba = cfg["ssl"]["ba"]
        else:
            ba = 50 if combo["ssl"] == "infonce" else 1
        sc = dataclasses.replace(
            sc,
            algorithm=combo["algorithm"],
            ssl=dataclasses.replace(sc.ssl, kind=combo["ssl"], ba=ba),
            shift=dataclasses.replace(sc.shift, kind=combo["shift"]),
            corruption=dataclasses.replace(sc.corruption, kind=combo["corruption"]),
        )
        pre = pretrain(sc)
        errors, vts = [], []
        oracle_pair = None
        for i in range(cfg["sweep"]["replicates"]):
            rep = dataclasses.replace(
                sc,
                shift_seed=sc.shift_seed + i,
                run_seed=sc.run_seed + i,
            )
            trace = run_online(rep, pre)
            errors.append(trace.avg_error)
            vts.append(trace.shift_severity)
            if cfg["sweep"]["improvement_check"] and combo["ssl"] != "none" and oracle_pair is None:
                lhs, rhs, _ = improvement_check(rep, pre)
                oracle_pair = (lhs, rhs)
        row = {
            "key": key,
            **combo,
            "status": "ok",
            "replicates": cfg["sweep"]["replicates"],
            "avg_error_mean": float(np.mean(errors)),
            "avg_error_std": float(np.std(errors, ddof=1)) if len(errors) > 1 else 0.0,
            "shift_severity_mean": float(np.mean(vts)),
            "oracle_updated": "" if oracle_pair is None else round(oracle_pair[0], 4),
            "oracle_frozen": "" if oracle_pair is None else round(oracle_pair[1], 4),
        }
        return row
    except Exception as exc:  # noqa: BLE001 - per-row status, sweep continues
        return {
            "key": key,
            **combo,
            "status": f"error: {exc}",
            "replicates": 0,
            "avg_error_mean": "",
            "avg_error_std": "",
            "shift_severity_mean": "",
            "oracle_updated": "",
            "oracle_frozen": "",
        }


SWEEP_COLUMNS = [
    "key", "algorithm", "ssl", "shift", "corruption", "status", "replicates",
    "avg_error_mean", "avg_error_std", "shift_severity_mean", "oracle_updated", "oracle_frozen",
    "delta_error", "pearson_gain_vs_delta",
]


def cmd_sweep(args) -> int:
    cfg = load_config(args.config)
    out = _out_dir(args)
    combos = _sweep_combos(cfg)
    payloads = [(cfg, combo, args.seed, args.order) for combo in combos]
    if args.jobs > 1:
        with concurrent.futures.ProcessPoolExecutor(max_workers=args.jobs) as pool:
            rows = list(pool.map(_sweep_cell, payloads))
    else:
        rows = [_sweep_cell(p) for p in payloads]
    rows.sort(key=lambda r: r["key"])

    # Improvement columns: plain OLS minus its OLS-OFU counterpart.
    by_combo = {
        (r["algorithm"], r["ssl"], r["shift"], r["corruption"]): r for r in rows
    }
    deltas, oracle_gains = [], []
    for row in rows:
        row["delta_error"] = ""
        if row["status"] != "ok" or row["ssl"] == "none":
            continue
        base = by_combo.get((row["algorithm"], "none", row["shift"], row["corruption"]))
        if base is None or base["status"] != "ok":
            continue
        delta = base["avg_error_mean"] - row["avg_error_mean"]
        row["delta_error"] = round(delta, 6)
        if row["oracle_updated"] != "":
            deltas.append(delta)
            oracle_gains.append(row["oracle_frozen"] - row["oracle_updated"])
    coeff = ""
    if len(deltas) >= 2:
        from .harness import pearson

        try:
            coeff = round(pearson(oracle_gains, deltas), 4)
        except UndefinedCorrelationError:
            coeff = ""
    for row in rows:
        row["pearson_gain_vs_delta"] = coeff if row.get("delta_error", "") != "" else ""

    import csv as _csv
    import io

    buf = io.StringIO()
    writer = _csv.DictWriter(buf, fieldnames=SWEEP_COLUMNS)
    writer.writeheader()
    for row in rows:
        writer.writerow({c: row.get(c, "") for c in SWEEP_COLUMNS})
    write_atomic(out / "sweep.csv", buf.getvalue())
    ok = sum(1 for r in rows if r["status"] == "ok")
    print(f"sweep: {ok}/{len(rows)} cells ok -> {out / 'sweep.csv'}")
    return EXIT_OK if ok >= 1 else EXIT_RUNTIME


def cmd_validate(args) -> int:
    from .validate import run_checks

    results = run_checks(only=args.only)
    width = max(len(r.name) for r in results)
    failures = 0
    for r in results:
        status = "PASS" if r.passed else "FAIL"
        failures += not r.passed
        print(f"{r.name:<{width}}  {r.value:<32} {r.threshold:<28} {status}  ({r.seconds:.1f}s)")
    print(f"{len(results) - failures}/{len(results)} checks passed")
    return EXIT_OK if failures == 0 else EXIT_VALIDATION


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="olsofu",
        description=(
            "Online label shift adaptation with online feature updates: "
            "synthetic-scale simulator and validation suite."
        ),
        epilog=_config_epilog(),
        formatter_class=argparse.RawDescriptionHelpFormatter,
    )
    sub = parser.add_subparsers(dest="command", required=True)

    def add_common(p, config_required=True):
        p.add_argument("--config", required=config_required, help="JSON config path")
        p.add_argument("--out", default=".", help="output directory (env OLSOFU_OUT overrides)")
        p.add_argument("--seed", type=int, default=None, help="override the run seed")
        p.add_argument(
            "--order",
            choices=["predict_first", "update_first"],
            default=None,
            help="override prediction/update order",
        )

    p_pre = sub.add_parser("pretrain", help="train the offline model and write a checkpoint")
    add_common(p_pre)
    p_run = sub.add_parser("run", help="run one online scenario; write trace and summary")
    add_common(p_run)
    p_sweep = sub.add_parser("sweep", help="run a grid of scenarios; write a summary CSV")
    add_common(p_sweep)
    p_sweep.add_argument("--jobs", type=int, default=1, help="parallel workers")
    p_val = sub.add_parser("validate", help="run the acceptance checks")
    p_val.add_argument("--only", default=None,
                       help="comma-separated subset, e.g. P1,P2 (default: all)")
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        if args.command == "pretrain":
            return cmd_pretrain(args)
        if args.command == "run":
            return cmd_run(args)
        if args.command == "sweep":
            return cmd_sweep(args)
        return cmd_validate(args)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except TrainingDivergedError as exc:
        print(f"training error: {exc}", file=sys.stderr)
        return EXIT_TRAINING
    except RunError as exc:
        print(f"runtime error: {exc}", file=sys.stderr)
        return EXIT_RUNTIME
    except Exception as exc:  # noqa: BLE001 - uniform runtime exit code
        print(f"runtime error: {exc}", file=sys.stderr)
        return EXIT_RUNTIME


if __name__ == "__main__":
    sys.exit(main())
