"""Command-line interface.

Subcommands:
  generate   integrate a system and write the trajectory as CSV
  qrc        fit and score the quantum reservoir on one seed
  qpinn      train and score the variational model on one seed
  esn        fit and score the echo-state baseline on one seed
  ablate     window-length ablation with a shared reservoir (exact probabilities)
  bench      multi-seed aggregate runs with JSON/CSV reports

Defaults can come from a JSON config file (--config); explicit flags win
over the file, which wins over built-in defaults.
"""

from __future__ import annotations

import argparse
import json
import sys
from dataclasses import asdict, replace

import numpy as np

from . import bench, dynamics, qpinn, qrc
from .bench import (
    EsnConfig,
    ProtocolConfig,
    QpinnConfig,
    QrcConfig,
    RunConfig,
    aggregate,
    check_bands,
    prepare_experiment,
    run_seeds,
)


def _parse_seeds(text: str) -> tuple[int, ...]:
    """Seed lists like '0,1,2' or ranges like '0-9'."""
    if "-" in text and "," not in text:
        lo, hi = text.split("-", 1)
        return tuple(range(int(lo), int(hi) + 1))
    return tuple(int(s) for s in text.split(","))


def _load_config(path) -> dict:
    try:
        with open(path) as fh:
            return json.load(fh)
    except (OSError, json.JSONDecodeError) as exc:
        raise SystemExit(f"cannot read config {path}: {exc}")


def _merge(section: dict, overrides: dict) -> dict:
    merged = dict(section)
    merged.update({k: v for k, v in overrides.items() if v is not None})
    return merged


def _build_run_config(args, method: str) -> RunConfig:
    file_cfg = _load_config(args.config) if args.config else {}
    protocol = ProtocolConfig(**file_cfg.get("protocol", {}))
    method_overrides = {
        "qrc": {
            "n_qubits": getattr(args, "qubits", None),
            "n_layers": getattr(args, "layers", None),
            "window": getattr(args, "window", None),
            "shots": getattr(args, "shots", None),
            "exact_probs": True if getattr(args, "exact_probs", False) else None,
            "alpha": getattr(args, "alpha", None),
        },
        "esn": {
            "n_neurons": getattr(args, "neurons", None),
            "spectral_radius": getattr(args, "spectral_radius", None),
            "input_scaling": getattr(args, "input_scaling", None),
            "leak_rate": getattr(args, "leak", None),
            "connectivity": getattr(args, "connectivity", None),
            "window": getattr(args, "window", None),
            "alpha": getattr(args, "alpha", None),
        },
        "qpinn": {
            "iterations": getattr(args, "iterations", None),
            "learning_rate": getattr(args, "lr", None),
            "decay": getattr(args, "decay", None),
            "clip_threshold": getattr(args, "clip", None),
            "patience": getattr(args, "patience", None),
            "tolerance": getattr(args, "tolerance", None),
            "lambda_boundary": getattr(args, "lambda_boundary", None),
            "mu_data": getattr(args, "mu", None),
            "collocation_points": getattr(args, "collocation_points", None),
        },
    }
    sections = {}
    for name, cls in (("qrc", QrcConfig), ("esn", EsnConfig), ("qpinn", QpinnConfig)):
        merged = _merge(file_cfg.get(name, {}), method_overrides.get(name, {}))
        try:
            sections[name] = cls(**merged)
        except TypeError as exc:
            raise SystemExit(f"invalid config section {name!r}: {exc}")
    seeds = _parse_seeds(args.seeds) if getattr(args, "seeds", None) else None
    if seeds is None:
        seeds = tuple(file_cfg.get("seeds", (getattr(args, "seed", 0),)))
    system = getattr(args, "system", None) or file_cfg.get("system", "lorenz")
    try:
        return RunConfig(
            system=system,
            method=method,
            seeds=seeds,
            workers=getattr(args, "workers", None) or file_cfg.get("workers", 1),
            protocol=protocol,
            **sections,
        )
    except ValueError as exc:
        raise SystemExit(str(exc))


def _cmd_generate(args) -> int:
    makers = {"lorenz": dynamics.lorenz, "rossler": dynamics.rossler, "lorenz96": dynamics.lorenz96}
    if args.system not in makers:
        raise SystemExit(f"unknown system {args.system!r}")
    system = makers[args.system]()
    if args.x0:
        x0 = np.array([float(v) for v in args.x0.split(",")])
    else:
        x0 = bench.initial_state(args.system)
    traj = dynamics.integrate(system, x0, args.dt, args.t_end)
    dynamics.trajectory_to_csv(traj, args.out)
    print(f"wrote {len(traj)} points to {args.out}")
    return 0


def _single_seed_run(args, method: str) -> int:
    config = _build_run_config(args, method)
    exp = prepare_experiment(config.system, config.protocol)
    reports = run_seeds(config, exp)
    agg = aggregate(reports, config.system, config.method)
    for r in reports:
        status = "FAILED" if r.failed else "ok"
        print(
            f"seed {r.seed}: train_mse={r.train_mse:.6g} test_mse={r.test_mse:.6g} "
            f"time={r.train_time_s:.3g}s [{status}]"
        )
    print(
        f"{config.method} on {config.system}: train {agg.train_mse_mean:.6g} +- {agg.train_mse_std:.6g}, "
        f"test {agg.test_mse_mean:.6g} +- {agg.test_mse_std:.6g}"
    )
    if args.out:
        bench.save_report(args.out, bench.report_payload(config, reports, agg))
        print(f"wrote report to {args.out}")
    return 0


def _cmd_qrc(args) -> int:
    if args.save_model:
        config = _build_run_config(args, "qrc")
        exp = prepare_experiment(config.system, config.protocol)
        cfg = config.qrc
        seed = config.seeds[0]
        reservoir = qrc.build_reservoir(cfg.n_qubits, cfg.n_layers, seed)
        enc = bench.encoding_for(exp, cfg.n_qubits)
        shots = None if cfg.exact_probs else cfg.shots
        readout, _ = qrc.qrc_fit(exp.split, reservoir, enc, cfg.window, shots, cfg.alpha, seed)
        qrc.save_model(args.save_model, reservoir, enc, cfg.window, readout)
        print(f"saved model to {args.save_model}")
    return _single_seed_run(args, "qrc")


def _cmd_qpinn(args) -> int:
    if args.trace_out:
        config = _build_run_config(args, "qpinn")
        exp = prepare_experiment(config.system, config.protocol)
        cfg = config.qpinn
        spec = qpinn.AnsatzSpec(
            n_qubits=cfg.n_qubits,
            n_layers=cfg.n_layers,
            n_outputs=exp.system.dim,
            t_max=config.protocol.test_end,
        )
        weights = qpinn.LossWeights(
            lambda_boundary=cfg.lambda_boundary, mu_data=cfg.mu_data, fd_step=cfg.fd_step
        )
        train_cfg = qpinn.TrainConfig(
            iterations=cfg.iterations,
            learning_rate=cfg.learning_rate,
            decay=cfg.decay,
            clip_threshold=cfg.clip_threshold,
            patience=cfg.patience,
            tolerance=cfg.tolerance,
            collocation_times=bench._collocation_times(exp, cfg.collocation_points),
            seed=config.seeds[0],
        )
        _, trace = qpinn.train(
            spec,
            bench.observable_map_for(exp),
            weights,
            train_cfg,
            exp.split.train[0].coords,
            split=exp.split,
            system=exp.system,
        )
        trace.to_csv(args.trace_out)
        print(f"wrote training trace to {args.trace_out}")
    return _single_seed_run(args, "qpinn")


def _cmd_esn(args) -> int:
    return _single_seed_run(args, "esn")


def _cmd_ablate(args) -> int:
    windows = tuple(int(w) for w in args.windows.split(","))
    exp = prepare_experiment(args.system)
    rows = bench.ablate_window(exp, windows, args.seed)
    print("window,feature_dim,train_mse")
    lines = ["window,feature_dim,train_mse"]
    for row in rows:
        line = f"{row.window},{row.feature_dim},{row.train_mse:.6g}"
        print(line)
        lines.append(line)
    if args.out:
        with open(args.out, "w") as fh:
            fh.write("\n".join(lines) + "\n")
    return 0


def _cmd_bench(args) -> int:
    systems = args.systems.split(",") if args.systems else ["lorenz", "rossler", "lorenz96"]
    methods = args.methods.split(",") if args.methods else ["qrc", "esn", "qpinn"]
    base = _build_run_config(args, methods[0])
    if args.paper_budget:
        base = replace(base, qpinn=replace(base.qpinn, iterations=bench.PAPER_BUDGET_ITERATIONS))
    aggregates = []
    violations = []
    for system in systems:
        exp = prepare_experiment(system, base.protocol)
        for method in methods:
            if method == "qpinn" and exp.system.dim > base.qpinn.n_qubits:
                print(f"skipping qpinn on {system}: {exp.system.dim} outputs exceed the ansatz")
                continue
            config = replace(base, system=system, method=method)
            reports = run_seeds(config, exp)
            agg = aggregate(reports, system, method)
            aggregates.append(agg)
            print(
                f"{system}/{method}: train {agg.train_mse_mean:.6g} +- {agg.train_mse_std:.6g}, "
                f"test {agg.test_mse_mean:.6g} +- {agg.test_mse_std:.6g} "
                f"({agg.n_seeds} seeds, {agg.n_failed} failed)"
            )
            if args.out_dir:
                bench.save_report(
                    f"{args.out_dir}/{system}_{method}.json",
                    bench.report_payload(config, reports, agg),
                )
            if args.check:
                violations.extend(check_bands(agg))
    if args.out_dir:
        bench.write_aggregate_csv(f"{args.out_dir}/aggregate.csv", aggregates)
        print(f"wrote {args.out_dir}/aggregate.csv")
    per_system = {}
    for agg in aggregates:
        per_system.setdefault(agg.system, []).append(agg)
    for system, aggs in per_system.items():
        for row in bench.compare(aggs):
            if row["test_mse_reduction_pct"] is not None:
                print(
                    f"{system}: {row['method']} vs {row['baseline']}: "
                    f"test MSE reduction {row['test_mse_reduction_pct']:.1f}%"
                )
    if args.check and violations:
        for v in violations:
            print(f"BAND VIOLATION: {v}", file=sys.stderr)
        return 1
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="qchaos", description=__doc__)
    sub = parser.add_subparsers(dest="command", required=True)

    gen = sub.add_parser("generate", help="integrate a system and write CSV")
    gen.add_argument("--system", default="lorenz")
    gen.add_argument("--dt", type=float, default=0.01)
    gen.add_argument("--t-end", type=float, default=4.0, dest="t_end")
    gen.add_argument("--x0", default=None, help="comma-separated initial state")
    gen.add_argument("--out", required=True)
    gen.set_defaults(func=_cmd_generate)

    def common(p):
        p.add_argument("--system", default=None)
        p.add_argument("--seed", type=int, default=0)
        p.add_argument("--seeds", default=None, help="comma list or lo-hi range")
        p.add_argument("--config", default=None, help="JSON config file")
        p.add_argument("--workers", type=int, default=None)
        p.add_argument("--out", default=None, help="JSON report path")

    q = sub.add_parser("qrc", help="quantum reservoir, one or more seeds")
    common(q)
    q.add_argument("--qubits", type=int, default=None)
    q.add_argument("--layers", type=int, default=None)
    q.add_argument("--window", type=int, default=None)
    q.add_argument("--shots", type=int, default=None)
    q.add_argument("--exact-probs", action="store_true", dest="exact_probs")
    q.add_argument("--alpha", type=float, default=None)
    q.add_argument("--save-model", default=None, dest="save_model")
    q.set_defaults(func=_cmd_qrc)

    p = sub.add_parser("qpinn", help="variational model, one or more seeds")
    common(p)
    p.add_argument("--iterations", type=int, default=None)
    p.add_argument("--lr", type=float, default=None)
    p.add_argument("--decay", type=float, default=None)
    p.add_argument("--clip", type=float, default=None)
    p.add_argument("--patience", type=int, default=None)
    p.add_argument("--tolerance", type=float, default=None)
    p.add_argument("--lambda", type=float, default=None, dest="lambda_boundary")
    p.add_argument("--mu", type=float, default=None)
    p.add_argument("--collocation-points", type=int, default=None, dest="collocation_points")
    p.add_argument("--trace-out", default=None, dest="trace_out")
    p.set_defaults(func=_cmd_qpinn)

    e = sub.add_parser("esn", help="echo-state baseline, one or more seeds")
    common(e)
    e.add_argument("--neurons", type=int, default=None)
    e.add_argument("--spectral-radius", type=float, default=None, dest="spectral_radius")
    e.add_argument("--input-scaling", type=float, default=None, dest="input_scaling")
    e.add_argument("--leak", type=float, default=None)
    e.add_argument("--connectivity", type=float, default=None)
    e.add_argument("--window", type=int, default=None)
    e.add_argument("--alpha", type=float, default=None)
    e.set_defaults(func=_cmd_esn)

    a = sub.add_parser("ablate", help="window-length ablation, exact probabilities")
    a.add_argument("--system", default="lorenz")
    a.add_argument("--windows", default="1,3,5")
    a.add_argument("--seed", type=int, default=0)
    a.add_argument("--out", default=None)
    a.set_defaults(func=_cmd_ablate)

    b = sub.add_parser("bench", help="multi-seed aggregate benchmark")
    common(b)
    b.add_argument("--systems", default=None, help="comma list, default all three")
    b.add_argument("--methods", default=None, help="comma list, default qrc,esn,qpinn")
    b.add_argument("--out-dir", default=None, dest="out_dir")
    b.add_argument("--check", action="store_true", help="exit nonzero if a band is violated")
    b.add_argument("--paper-budget", action="store_true", dest="paper_budget",
                   help="full 200-iteration variational budget instead of the 50-iteration desk budget")
    b.set_defaults(func=_cmd_bench)
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    return args.func(args)


if __name__ == "__main__":
    sys.exit(main())
