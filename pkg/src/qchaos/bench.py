"""Multi-seed benchmark harness with JSON/CSV reporting.

One `RunConfig` pins a system, a method, the sampling protocol, and the
method hyperparameters; `run_seeds` executes it over a seed list (optionally
with a thread pool), `aggregate` reduces the per-seed reports, and
`check_bands` compares an aggregate against the shipped acceptance bands.
"""

from __future__ import annotations

import json
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import asdict, dataclass, field, replace
from datetime import datetime, timezone
from typing import Optional, Sequence

import numpy as np

from . import dynamics, esn, qpinn, qrc

SYSTEM_NAMES = ("lorenz", "rossler", "lorenz96")
METHOD_NAMES = ("qrc", "esn", "qpinn")

# Transient integration time discarded before t = 0, per system.
TRANSIENTS = {"lorenz96": 5.0}

PAPER_BUDGET_ITERATIONS = 200

# Mean-over-seeds bands the shipped default configs are expected to hit.
ACCEPTANCE_BANDS = {
    ("lorenz", "qrc"): {"train_mse_mean": (9.8, 39.2), "test_mse_mean": (1.0, 6.0)},
    ("rossler", "qrc"): {"test_mse_mean": (0.5, 4.0)},
    ("lorenz96", "qrc"): {"test_mse_mean": (5.0, 25.0)},
    ("lorenz", "esn"): {"train_mse_mean": (0.0, 1.0), "test_mse_mean": (0.5, 5.0)},
}


@dataclass(frozen=True)
class ProtocolConfig:
    """Integration grid and train/test sampling protocol."""

    dt: float = 0.01
    n_train: int = 50
    train_end: float = 3.0
    n_test: int = 20
    test_end: float = 4.0


@dataclass(frozen=True)
class QrcConfig:
    n_qubits: int = 5
    n_layers: int = 2
    window: int = 5
    shots: int = 1024
    exact_probs: bool = False
    alpha: float = 1.0


@dataclass(frozen=True)
class EsnConfig:
    n_neurons: int = 500
    spectral_radius: float = 0.9
    input_scaling: float = 0.1
    leak_rate: float = 0.3
    connectivity: float = 0.1
    window: int = 5
    alpha: float = 1.0


@dataclass(frozen=True)
class QpinnConfig:
    n_qubits: int = 4
    n_layers: int = 3
    iterations: int = 50
    learning_rate: float = 0.05
    decay: float = 0.99
    clip_threshold: float = 1.0
    patience: int = 30
    tolerance: float = 1e-4
    lambda_boundary: float = 10.0
    mu_data: float = 0.0
    fd_step: float = 1e-3
    collocation_points: Optional[int] = None


@dataclass(frozen=True)
class RunConfig:
    system: str = "lorenz"
    method: str = "qrc"
    seeds: tuple[int, ...] = tuple(range(10))
    workers: int = 1
    protocol: ProtocolConfig = field(default_factory=ProtocolConfig)
    qrc: QrcConfig = field(default_factory=QrcConfig)
    esn: EsnConfig = field(default_factory=EsnConfig)
    qpinn: QpinnConfig = field(default_factory=QpinnConfig)

    def __post_init__(self):
        if self.system not in SYSTEM_NAMES:
            raise ValueError(f"unknown system {self.system!r}, expected one of {SYSTEM_NAMES}")
        if self.method not in METHOD_NAMES:
            raise ValueError(f"unknown method {self.method!r}, expected one of {METHOD_NAMES}")
        if self.workers < 1:
            raise ValueError(f"workers must be >= 1, got {self.workers}")
        object.__setattr__(self, "seeds", tuple(int(s) for s in self.seeds))


def config_from_dict(data: dict) -> RunConfig:
    """Build a RunConfig from a parsed config file; unknown keys are errors."""
    data = dict(data)
    try:
        kwargs = {}
        for name, cls in (("protocol", ProtocolConfig), ("qrc", QrcConfig),
                          ("esn", EsnConfig), ("qpinn", QpinnConfig)):
            if name in data:
                kwargs[name] = cls(**data.pop(name))
        if "seeds" in data:
            data["seeds"] = tuple(data["seeds"])
        return RunConfig(**data, **kwargs)
    except TypeError as exc:
        raise ValueError(f"invalid config: {exc}") from exc


@dataclass(frozen=True)
class SeedReport:
    seed: int
    train_mse: float
    test_mse: float
    train_time_s: float
    failed: bool = False
    diagnostics: dict = field(default_factory=dict)


@dataclass(frozen=True)
class AggregateReport:
    system: str
    method: str
    n_seeds: int
    n_failed: int
    train_mse_mean: float
    train_mse_std: float
    test_mse_mean: float
    test_mse_std: float
    train_time_s_mean: float
    single_seed: bool = False


@dataclass(frozen=True)
class Experiment:
    """A prepared system: trajectory plus samples, reused across seeds."""

    system: dynamics.SystemSpec
    trajectory: dynamics.Trajectory
    split: dynamics.SampleSplit
    protocol: ProtocolConfig


def initial_state(system_name: str) -> np.ndarray:
    """Protocol initial condition; Lorenz-96 perturbs one site of the fixed point."""
    if system_name in ("lorenz", "rossler"):
        return np.array([1.0, 1.0, 1.0])
    x0 = np.full(8, 8.0)
    x0[0] += 0.01
    return x0


def prepare_experiment(system_name: str, protocol: Optional[ProtocolConfig] = None) -> Experiment:
    """Integrate the system (discarding any transient) and draw the split."""
    protocol = protocol or ProtocolConfig()
    makers = {"lorenz": dynamics.lorenz, "rossler": dynamics.rossler, "lorenz96": dynamics.lorenz96}
    if system_name not in makers:
        raise ValueError(f"unknown system {system_name!r}, expected one of {SYSTEM_NAMES}")
    system = makers[system_name]()
    x0 = initial_state(system_name)
    transient = TRANSIENTS.get(system_name, 0.0)
    if transient > 0:
        warmup = dynamics.integrate(system, x0, protocol.dt, transient)
        x0 = warmup.states[-1]
    traj = dynamics.integrate(system, x0, protocol.dt, protocol.test_end)
    split = dynamics.make_split(
        traj, protocol.n_train, protocol.train_end, protocol.n_test, protocol.test_end
    )
    return Experiment(system=system, trajectory=traj, split=split, protocol=protocol)


def encoding_for(exp: Experiment, n_qubits: int) -> qrc.EncodingSpec:
    """Fixed attractor ranges for Lorenz; train-sample ranges elsewhere."""
    if exp.system.kind == "lorenz":
        return qrc.EncodingSpec.lorenz_default()
    return qrc.EncodingSpec.from_samples(exp.split.train_states(), n_qubits)


def observable_map_for(exp: Experiment) -> qpinn.ObservableMap:
    if exp.system.kind == "lorenz":
        return qpinn.ObservableMap.lorenz_default()
    states = exp.split.train_states()
    lo, hi = states.min(axis=0), states.max(axis=0)
    pad = np.where(hi - lo > 0, 0.1 * (hi - lo), 0.5)
    return qpinn.ObservableMap(
        lo=lo - pad, hi=hi + pad, qubits=tuple(range(states.shape[1]))
    )


def _run_qrc_seed(exp: Experiment, cfg: QrcConfig, seed: int) -> SeedReport:
    reservoir = qrc.build_reservoir(cfg.n_qubits, cfg.n_layers, seed)
    enc = encoding_for(exp, cfg.n_qubits)
    shots = None if cfg.exact_probs else cfg.shots
    start = time.perf_counter()
    readout, train_mse = qrc.qrc_fit(
        exp.split, reservoir, enc, cfg.window, shots, cfg.alpha, seed
    )
    train_time = time.perf_counter() - start
    test_mse = qrc.qrc_evaluate(readout, exp.split, reservoir, enc, cfg.window, shots, seed)
    return SeedReport(
        seed=seed,
        train_mse=train_mse,
        test_mse=test_mse,
        train_time_s=train_time,
        diagnostics={"feature_dim": cfg.window * reservoir.n_features},
    )


def _run_esn_seed(exp: Experiment, cfg: EsnConfig, seed: int) -> SeedReport:
    spec = esn.EsnSpec(
        n_neurons=cfg.n_neurons,
        spectral_radius=cfg.spectral_radius,
        input_scaling=cfg.input_scaling,
        leak_rate=cfg.leak_rate,
        connectivity=cfg.connectivity,
        seed=seed,
    )
    start = time.perf_counter()
    train_mse, test_mse = esn.esn_fit_evaluate(spec, exp.split, cfg.window, cfg.alpha)
    train_time = time.perf_counter() - start
    return SeedReport(
        seed=seed,
        train_mse=train_mse,
        test_mse=test_mse,
        train_time_s=train_time,
        diagnostics={"feature_dim": cfg.window * cfg.n_neurons},
    )


def _collocation_times(exp: Experiment, n_points: Optional[int]) -> np.ndarray:
    times = exp.split.train_times()
    if n_points is None or n_points >= len(times):
        return times
    idx = np.unique(np.round(np.linspace(0, len(times) - 1, n_points)).astype(int))
    return times[idx]


def _run_qpinn_seed(exp: Experiment, cfg: QpinnConfig, seed: int) -> SeedReport:
    spec = qpinn.AnsatzSpec(
        n_qubits=cfg.n_qubits,
        n_layers=cfg.n_layers,
        n_outputs=exp.system.dim,
        t_max=exp.protocol.test_end,
    )
    obs_map = observable_map_for(exp)
    weights = qpinn.LossWeights(
        lambda_boundary=cfg.lambda_boundary, mu_data=cfg.mu_data, fd_step=cfg.fd_step
    )
    config = qpinn.TrainConfig(
        iterations=cfg.iterations,
        learning_rate=cfg.learning_rate,
        decay=cfg.decay,
        clip_threshold=cfg.clip_threshold,
        patience=cfg.patience,
        tolerance=cfg.tolerance,
        collocation_times=_collocation_times(exp, cfg.collocation_points),
        seed=seed,
    )
    u0 = exp.split.train[0].coords
    start = time.perf_counter()
    theta, trace = qpinn.train(
        spec, obs_map, weights, config, u0, split=exp.split, system=exp.system
    )
    train_time = time.perf_counter() - start
    train_mse = qpinn.qpinn_mse(spec, theta, obs_map, exp.split.train)
    test_mse = qpinn.qpinn_mse(spec, theta, obs_map, exp.split.test)
    grad_norms = [r.grad_norm for r in trace.records]
    return SeedReport(
        seed=seed,
        train_mse=train_mse,
        test_mse=test_mse,
        train_time_s=train_time,
        failed=trace.failed,
        diagnostics={
            "stop_reason": trace.stop_reason,
            "iterations_run": len(trace.records),
            "initial_loss": trace.records[0].total if trace.records else None,
            "final_loss": trace.records[-1].total if trace.records else None,
            "final_grad_norm": grad_norms[-1] if grad_norms else None,
            "min_grad_norm": min(grad_norms) if grad_norms else None,
            "budget_limited": cfg.iterations < PAPER_BUDGET_ITERATIONS,
        },
    )


_RUNNERS = {"qrc": _run_qrc_seed, "esn": _run_esn_seed, "qpinn": _run_qpinn_seed}


def run_one_seed(config: RunConfig, exp: Experiment, seed: int) -> SeedReport:
    """Run one seed, converting any failure into a failed report."""
    runner = _RUNNERS[config.method]
    method_cfg = getattr(config, config.method)
    try:
        return runner(exp, method_cfg, seed)
    except Exception as exc:
        return SeedReport(
            seed=seed,
            train_mse=float("nan"),
            test_mse=float("nan"),
            train_time_s=0.0,
            failed=True,
            diagnostics={"error": f"{type(exc).__name__}: {exc}"},
        )


def run_seeds(config: RunConfig, exp: Optional[Experiment] = None) -> list[SeedReport]:
    """Run every seed of a config; reports come back in the config's seed order."""
    if not config.seeds:
        raise ValueError("config needs at least one seed")
    exp = exp or prepare_experiment(config.system, config.protocol)
    if config.workers == 1:
        return [run_one_seed(config, exp, seed) for seed in config.seeds]
    with ThreadPoolExecutor(max_workers=config.workers) as pool:
        futures = [pool.submit(run_one_seed, config, exp, seed) for seed in config.seeds]
        return [f.result() for f in futures]


def aggregate(reports: Sequence[SeedReport], system: str, method: str) -> AggregateReport:
    """Mean and sample (n-1) std over the non-failed seed reports."""
    if not reports:
        raise ValueError("cannot aggregate an empty report list")
    ok = [r for r in reports if not r.failed]
    if not ok:
        raise RuntimeError(f"all {len(reports)} seeds failed for {method} on {system}")
    train = np.array([r.train_mse for r in ok])
    test = np.array([r.test_mse for r in ok])
    times = np.array([r.train_time_s for r in ok])
    single = len(ok) == 1
    return AggregateReport(
        system=system,
        method=method,
        n_seeds=len(ok),
        n_failed=len(reports) - len(ok),
        train_mse_mean=float(train.mean()),
        train_mse_std=0.0 if single else float(train.std(ddof=1)),
        test_mse_mean=float(test.mean()),
        test_mse_std=0.0 if single else float(test.std(ddof=1)),
        train_time_s_mean=float(times.mean()),
        single_seed=single,
    )


@dataclass(frozen=True)
class AblationRow:
    window: int
    feature_dim: int
    train_mse: float


def ablate_window(
    exp: Experiment, windows: Sequence[int], seed: int, cfg: Optional[QrcConfig] = None
) -> list[AblationRow]:
    """Train MSE per window length with one shared reservoir and exact
    probabilities, so only the windowing varies."""
    cfg = cfg or QrcConfig()
    if not windows:
        raise ValueError("need at least one window length")
    reservoir = qrc.build_reservoir(cfg.n_qubits, cfg.n_layers, seed)
    enc = encoding_for(exp, cfg.n_qubits)
    states = exp.split.train_states()
    feats = np.stack(
        [qrc.extract_features(reservoir, enc, p) for p in exp.split.train]
    )
    rows = []
    for w in windows:
        F = qrc.window_features(feats, w)[:-1]
        S = states[w:]
        readout = qrc.fit_ridge(F, S, cfg.alpha)
        mse = float(np.mean((readout.predict(F) - S) ** 2))
        rows.append(AblationRow(window=w, feature_dim=F.shape[1], train_mse=mse))
    return rows


def compare(aggregates: Sequence[AggregateReport]) -> list[dict]:
    """Pairwise MSE reductions and training-time ratios; zero baselines give None."""

    def reduction(a: float, b: float) -> Optional[float]:
        return None if b == 0 else (1.0 - a / b) * 100.0

    def ratio(a: float, b: float) -> Optional[float]:
        return None if b == 0 else a / b

    rows = []
    for a in aggregates:
        for b in aggregates:
            if a is b:
                continue
            rows.append(
                {
                    "system": a.system,
                    "method": a.method,
                    "baseline": b.method,
                    "train_mse_reduction_pct": reduction(a.train_mse_mean, b.train_mse_mean),
                    "test_mse_reduction_pct": reduction(a.test_mse_mean, b.test_mse_mean),
                    "train_time_ratio": ratio(a.train_time_s_mean, b.train_time_s_mean),
                }
            )
    return rows


def check_bands(agg: AggregateReport) -> list[str]:
    """Violations of the shipped acceptance bands; empty means in-band."""
    bands = ACCEPTANCE_BANDS.get((agg.system, agg.method), {})
    violations = []
    for metric, (lo, hi) in bands.items():
        value = getattr(agg, metric)
        if not lo <= value <= hi:
            violations.append(f"{agg.system}/{agg.method} {metric}={value:.4g} outside [{lo}, {hi}]")
    return violations


def report_payload(config: RunConfig, reports: Sequence[SeedReport], agg: AggregateReport) -> dict:
    return {
        "created_at": datetime.now(timezone.utc).isoformat(),
        "config": asdict(config),
        "seed_reports": [asdict(r) for r in reports],
        "aggregate": asdict(agg),
    }


def save_report(path, payload: dict) -> None:
    """Canonical JSON: sorted keys, fixed layout, trailing newline."""
    with open(path, "w") as fh:
        json.dump(payload, fh, indent=2, sort_keys=True)
        fh.write("\n")


def load_report(path) -> dict:
    with open(path) as fh:
        return json.load(fh)


def write_aggregate_csv(path, aggregates: Sequence[AggregateReport]) -> None:
    """One row per aggregate with the columns downstream tables expect."""
    header = "system,method,seeds,train_mse_mean,train_mse_std,test_mse_mean,test_mse_std,train_time_s"
    lines = [header]
    for a in aggregates:
        lines.append(
            f"{a.system},{a.method},{a.n_seeds},{a.train_mse_mean:.6g},{a.train_mse_std:.6g},"
            f"{a.test_mse_mean:.6g},{a.test_mse_std:.6g},{a.train_time_s_mean:.6g}"
        )
    with open(path, "w") as fh:
        fh.write("\n".join(lines) + "\n")
