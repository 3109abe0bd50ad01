"""Variational quantum model trained against ODE physics residuals.

Time enters through a fixed encoding layer (RY on qubit 0, RZ on qubit 1,
RX on qubit 2, all at angle 2*pi*t/t_max); trainable layers apply per-qubit
RX/RY/RZ rotations followed by a CNOT chain, plus a final refinement layer
of rotations on the output qubits. Per-qubit <Z> expectations are mapped
affinely onto phase-space boxes to give the model state u(t).

The loss is
    sum_i ||du/dt(t_i) - f(u(t_i))||^2
    + lambda * ||u(0) - u0||^2
    + mu * sum_i ||u(t_i) - u*_i||^2
with du/dt from central finite differences (one-sided at the domain
endpoints). Gradients are exact in the circuit parameters: each parameter
appears in a single rotation, so du/d theta_k follows the two-point
parameter-shift rule and is chained through the loss analytically.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass, field
from typing import Optional, Sequence

import numpy as np

from . import dynamics
from .dynamics import PhasePoint, SampleSplit, SystemSpec
from .qsim import (
    Circuit,
    GateOp,
    apply_cnot_batch,
    apply_rotation_batch,
    expect_z,
    expect_z_batch,
    run,
)

ADAM_BETA1 = 0.9
ADAM_BETA2 = 0.999
ADAM_EPS = 1e-8

_ENCODING_KINDS = ("RY", "RZ", "RX")
_AXIS_KINDS = ("RX", "RY", "RZ")


@dataclass(frozen=True)
class AnsatzSpec:
    """Circuit shape: qubit count, trainable layers, outputs, time normalization."""

    n_qubits: int = 4
    n_layers: int = 3
    n_outputs: int = 3
    t_max: float = 4.0

    def __post_init__(self):
        if self.n_qubits < 3:
            raise ValueError(f"time encoding needs at least 3 qubits, got {self.n_qubits}")
        if self.n_layers < 1:
            raise ValueError(f"need at least one layer, got {self.n_layers}")
        if not 1 <= self.n_outputs <= self.n_qubits:
            raise ValueError(f"n_outputs {self.n_outputs} out of range for {self.n_qubits} qubits")
        if self.t_max <= 0 or not np.isfinite(self.t_max):
            raise ValueError(f"t_max must be positive and finite, got {self.t_max}")

    @property
    def param_layout(self) -> tuple[tuple[int, int, int], ...]:
        """(layer, qubit, axis) triple for every parameter, refinement layer last."""
        layout = [
            (layer, q, axis)
            for layer in range(self.n_layers)
            for q in range(self.n_qubits)
            for axis in range(3)
        ]
        layout += [(self.n_layers, q, axis) for q in range(self.n_outputs) for axis in range(3)]
        return tuple(layout)

    @property
    def n_params(self) -> int:
        return 3 * self.n_qubits * self.n_layers + 3 * self.n_outputs


@dataclass(frozen=True)
class ObservableMap:
    """Affine map from output-qubit <Z> values onto per-variable boxes.

    u_d = ((<Z_d> + 1) / 2) * (hi_d - lo_d) + lo_d, so outputs always lie
    inside [lo, hi].
    """

    lo: np.ndarray
    hi: np.ndarray
    qubits: tuple[int, ...]

    def __post_init__(self):
        lo = np.asarray(self.lo, dtype=float)
        hi = np.asarray(self.hi, dtype=float)
        if lo.shape != hi.shape or lo.ndim != 1:
            raise ValueError("lo and hi must be 1-d arrays of equal length")
        if np.any(hi <= lo):
            raise ValueError("every output range must satisfy hi > lo")
        if len(self.qubits) != len(lo):
            raise ValueError("need one output qubit per variable")
        lo.setflags(write=False)
        hi.setflags(write=False)
        object.__setattr__(self, "lo", lo)
        object.__setattr__(self, "hi", hi)
        object.__setattr__(self, "qubits", tuple(self.qubits))

    @property
    def dim(self) -> int:
        return len(self.lo)

    @classmethod
    def lorenz_default(cls) -> "ObservableMap":
        return cls(lo=(-20.0, -30.0, 0.0), hi=(20.0, 30.0, 50.0), qubits=(0, 1, 2))

    def to_state(self, z) -> np.ndarray:
        z = np.asarray(z, dtype=float)
        return 0.5 * (z + 1.0) * (self.hi - self.lo) + self.lo


@dataclass(frozen=True)
class LossWeights:
    """Weights of the three loss terms and the time-derivative step."""

    lambda_boundary: float = 10.0
    mu_data: float = 0.0
    fd_step: float = 1e-3

    def __post_init__(self):
        if self.lambda_boundary < 0 or self.mu_data < 0:
            raise ValueError("loss weights must be nonnegative")
        if self.fd_step <= 0:
            raise ValueError(f"fd_step must be positive, got {self.fd_step}")


@dataclass(frozen=True)
class TrainConfig:
    """Adam training schedule and stopping rules."""

    iterations: int = 200
    learning_rate: float = 0.05
    decay: float = 0.99
    clip_threshold: float = 1.0
    patience: int = 30
    tolerance: float = 1e-4
    collocation_times: Optional[Sequence[float]] = None
    seed: int = 0

    def __post_init__(self):
        if self.iterations < 1:
            raise ValueError(f"iterations must be >= 1, got {self.iterations}")
        if self.learning_rate <= 0:
            raise ValueError(f"learning rate must be positive, got {self.learning_rate}")
        if not 0 < self.decay <= 1:
            raise ValueError(f"decay must be in (0, 1], got {self.decay}")
        if self.clip_threshold <= 0:
            raise ValueError(f"clip threshold must be positive, got {self.clip_threshold}")
        if self.patience < 1:
            raise ValueError(f"patience must be >= 1, got {self.patience}")


@dataclass(frozen=True)
class LossBreakdown:
    """Total loss plus its unweighted components."""

    total: float
    physics: float
    boundary: float
    data: float


@dataclass(frozen=True)
class TraceRecord:
    iteration: int
    total: float
    physics: float
    boundary: float
    data: float
    grad_norm: float
    learning_rate: float


@dataclass(frozen=True)
class TrainTrace:
    """Per-iteration training history. grad_norm is the raw, pre-clip norm."""

    records: tuple[TraceRecord, ...]
    final_theta: np.ndarray
    stop_reason: str
    failed: bool = False

    def __post_init__(self):
        object.__setattr__(self, "records", tuple(self.records))
        theta = np.asarray(self.final_theta, dtype=float)
        theta.setflags(write=False)
        object.__setattr__(self, "final_theta", theta)

    def to_csv(self, path) -> None:
        with open(path, "w", newline="") as fh:
            writer = csv.writer(fh)
            writer.writerow(["iter", "total", "physics", "boundary", "data", "grad_norm", "lr"])
            for r in self.records:
                writer.writerow(
                    [r.iteration, f"{r.total:.17g}", f"{r.physics:.17g}", f"{r.boundary:.17g}",
                     f"{r.data:.17g}", f"{r.grad_norm:.17g}", f"{r.learning_rate:.17g}"]
                )


def encode_time(t: float, t_max: float) -> float:
    """Normalized time angle 2*pi*t/t_max."""
    if t_max <= 0 or not np.isfinite(t_max):
        raise ValueError(f"t_max must be positive and finite, got {t_max}")
    return 2.0 * np.pi * t / t_max


def init_params(spec: AnsatzSpec, seed: int) -> np.ndarray:
    """Uniform random parameters in [-pi, pi)."""
    rng = np.random.default_rng(seed)
    return rng.uniform(-np.pi, np.pi, size=spec.n_params)


def ansatz_circuit(spec: AnsatzSpec, theta, t: float) -> Circuit:
    """The full circuit for one time encoding and one parameter vector."""
    theta = _check_theta(spec, theta)
    angle = encode_time(t, spec.t_max)
    ops = [GateOp(kind, target=q, angle=angle) for q, kind in enumerate(_ENCODING_KINDS)]
    k = 0
    for _layer in range(spec.n_layers):
        for q in range(spec.n_qubits):
            for kind in _AXIS_KINDS:
                ops.append(GateOp(kind, target=q, angle=theta[k]))
                k += 1
        for q in range(spec.n_qubits - 1):
            ops.append(GateOp("CNOT", target=q + 1, control=q))
    for q in range(spec.n_outputs):
        for kind in _AXIS_KINDS:
            ops.append(GateOp(kind, target=q, angle=theta[k]))
            k += 1
    return Circuit(n_qubits=spec.n_qubits, ops=tuple(ops))


def _check_theta(spec: AnsatzSpec, theta) -> np.ndarray:
    theta = np.asarray(theta, dtype=float)
    if theta.shape != (spec.n_params,):
        raise ValueError(f"theta has shape {theta.shape}, ansatz expects ({spec.n_params},)")
    return theta


def qpinn_forward(spec: AnsatzSpec, theta, obs_map: ObservableMap, t: float) -> PhasePoint:
    """Model state u(t) as a PhasePoint, via the gate-by-gate simulator."""
    state = run(ansatz_circuit(spec, theta, t))
    z = np.array([expect_z(state, q) for q in obs_map.qubits])
    return PhasePoint(coords=obs_map.to_state(z), t=float(t))


def _forward_states(spec: AnsatzSpec, theta, obs_map: ObservableMap, times: np.ndarray) -> np.ndarray:
    """u(t) for a batch of times at once; rows follow `times`.

    Matches qpinn_forward per row (only the time-encoding angles differ
    across rows, so all trainable gates are applied batch-wide).
    """
    theta = _check_theta(spec, theta)
    n = spec.n_qubits
    batch = len(times)
    psis = np.zeros((batch, 2**n), dtype=np.complex128)
    psis[:, 0] = 1.0
    angles = 2.0 * np.pi * np.asarray(times, dtype=float) / spec.t_max
    for q, kind in enumerate(_ENCODING_KINDS):
        psis = apply_rotation_batch(psis, n, q, kind, angles)
    k = 0
    for _layer in range(spec.n_layers):
        for q in range(n):
            for kind in _AXIS_KINDS:
                psis = apply_rotation_batch(psis, n, q, kind, theta[k])
                k += 1
        for q in range(n - 1):
            psis = apply_cnot_batch(psis, n, q, q + 1)
    for q in range(spec.n_outputs):
        for kind in _AXIS_KINDS:
            psis = apply_rotation_batch(psis, n, q, kind, theta[k])
            k += 1
    z = np.stack([expect_z_batch(psis, n, q) for q in obs_map.qubits], axis=1)
    return obs_map.to_state(z)


@dataclass(frozen=True)
class _EvalPlan:
    """Deduplicated evaluation times with finite-difference index wiring."""

    times: np.ndarray
    boundary_idx: int
    colloc_idx: np.ndarray
    plus_idx: np.ndarray
    minus_idx: np.ndarray
    denoms: np.ndarray


def _build_plan(times, t_max: float, h: float) -> _EvalPlan:
    times = np.atleast_1d(np.asarray(times, dtype=float))
    if np.any(times < 0) or np.any(times > t_max):
        raise ValueError("collocation times must lie within [0, t_max]")
    registry: dict[float, int] = {}

    def index_of(t: float) -> int:
        t = float(t)
        if t not in registry:
            registry[t] = len(registry)
        return registry[t]

    boundary_idx = index_of(0.0)
    colloc, plus, minus, denoms = [], [], [], []
    for t in times:
        colloc.append(index_of(t))
        if t - h >= 0 and t + h <= t_max:
            minus.append(index_of(t - h))
            plus.append(index_of(t + h))
            denoms.append(2.0 * h)
        elif t - h < 0:
            minus.append(index_of(t))
            plus.append(index_of(t + h))
            denoms.append(h)
        else:
            minus.append(index_of(t - h))
            plus.append(index_of(t))
            denoms.append(h)
    all_times = np.array(sorted(registry, key=registry.get))
    return _EvalPlan(
        times=all_times,
        boundary_idx=boundary_idx,
        colloc_idx=np.array(colloc, dtype=int),
        plus_idx=np.array(plus, dtype=int),
        minus_idx=np.array(minus, dtype=int),
        denoms=np.array(denoms),
    )


def _loss_terms(
    u: np.ndarray,
    plan: _EvalPlan,
    system: SystemSpec,
    weights: LossWeights,
    u0: np.ndarray,
    targets: Optional[np.ndarray],
) -> LossBreakdown:
    physics = 0.0
    if len(plan.colloc_idx):
        du = (u[plan.plus_idx] - u[plan.minus_idx]) / plan.denoms[:, None]
        f = np.stack([dynamics.rhs(system, u[i]) for i in plan.colloc_idx])
        residual = du - f
        physics = float(np.sum(residual**2))
    boundary = float(np.sum((u[plan.boundary_idx] - u0) ** 2))
    data = 0.0
    if weights.mu_data > 0 and targets is not None:
        data = float(np.sum((u[plan.colloc_idx] - targets) ** 2))
    total = physics + weights.lambda_boundary * boundary + weights.mu_data * data
    if not np.isfinite(total):
        bad = _first_bad_collocation(u, plan)
        raise RuntimeError(f"non-finite loss (first bad collocation point: t = {bad})")
    return LossBreakdown(total=total, physics=physics, boundary=boundary, data=data)


def _first_bad_collocation(u: np.ndarray, plan: _EvalPlan):
    for i, idx in enumerate(plan.colloc_idx):
        if not np.all(np.isfinite(u[idx])):
            return plan.times[idx]
    return plan.times[plan.boundary_idx]


def _loss_adjoint(
    u: np.ndarray,
    plan: _EvalPlan,
    system: SystemSpec,
    weights: LossWeights,
    u0: np.ndarray,
    targets: Optional[np.ndarray],
) -> np.ndarray:
    """d(total loss)/du at every evaluation point."""
    g = np.zeros_like(u)
    if len(plan.colloc_idx):
        du = (u[plan.plus_idx] - u[plan.minus_idx]) / plan.denoms[:, None]
        f = np.stack([dynamics.rhs(system, u[i]) for i in plan.colloc_idx])
        residual = du - f
        scaled = 2.0 * residual / plan.denoms[:, None]
        np.add.at(g, plan.plus_idx, scaled)
        np.add.at(g, plan.minus_idx, -scaled)
        for i, idx in enumerate(plan.colloc_idx):
            jac = dynamics.rhs_jacobian(system, u[idx])
            g[idx] += -2.0 * (jac.T @ residual[i])
    g[plan.boundary_idx] += 2.0 * weights.lambda_boundary * (u[plan.boundary_idx] - u0)
    if weights.mu_data > 0 and targets is not None:
        np.add.at(g, plan.colloc_idx, 2.0 * weights.mu_data * (u[plan.colloc_idx] - targets))
    return g


def physics_loss(
    spec: AnsatzSpec,
    theta,
    obs_map: ObservableMap,
    weights: LossWeights,
    times,
    u0,
    targets=None,
    system: Optional[SystemSpec] = None,
    forward_fn=None,
) -> LossBreakdown:
    """Evaluate the physics-informed loss at one parameter vector.

    `forward_fn(times) -> (len(times), dim)` replaces the circuit forward
    when given, which lets an exact ODE solution stand in for the model.
    """
    system = system if system is not None else dynamics.lorenz()
    u0 = np.asarray(u0, dtype=float)
    plan = _build_plan(times, spec.t_max, weights.fd_step)
    if forward_fn is None:
        u = _forward_states(spec, theta, obs_map, plan.times)
    else:
        u = np.asarray(forward_fn(plan.times), dtype=float)
    targets = None if targets is None else np.asarray(targets, dtype=float)
    return _loss_terms(u, plan, system, weights, u0, targets)


def gradient(
    spec: AnsatzSpec,
    theta,
    obs_map: ObservableMap,
    weights: LossWeights,
    times,
    u0,
    targets=None,
    system: Optional[SystemSpec] = None,
) -> np.ndarray:
    """d(loss)/d(theta) via the parameter-shift rule chained through the loss."""
    system = system if system is not None else dynamics.lorenz()
    theta = _check_theta(spec, theta)
    u0 = np.asarray(u0, dtype=float)
    plan = _build_plan(times, spec.t_max, weights.fd_step)
    targets = None if targets is None else np.asarray(targets, dtype=float)
    u = _forward_states(spec, theta, obs_map, plan.times)
    g_u = _loss_adjoint(u, plan, system, weights, u0, targets)
    return _shift_chain(spec, theta, obs_map, plan.times, g_u)


def _shift_chain(
    spec: AnsatzSpec, theta: np.ndarray, obs_map: ObservableMap, times: np.ndarray, g_u: np.ndarray
) -> np.ndarray:
    grad = np.zeros(spec.n_params)
    for k in range(spec.n_params):
        shifted = theta.copy()
        shifted[k] = theta[k] + 0.5 * np.pi
        u_plus = _forward_states(spec, shifted, obs_map, times)
        shifted[k] = theta[k] - 0.5 * np.pi
        u_minus = _forward_states(spec, shifted, obs_map, times)
        grad[k] = 0.5 * np.sum(g_u * (u_plus - u_minus))
    return grad


def clip_gradient(grad: np.ndarray, threshold: float) -> np.ndarray:
    """Rescale to L2 norm `threshold` when the norm exceeds it; direction is kept."""
    norm = float(np.linalg.norm(grad))
    if norm > threshold:
        return grad * (threshold / norm)
    return grad


def train(
    spec: AnsatzSpec,
    obs_map: ObservableMap,
    weights: LossWeights,
    config: TrainConfig,
    u0,
    split: Optional[SampleSplit] = None,
    system: Optional[SystemSpec] = None,
) -> tuple[np.ndarray, TrainTrace]:
    """Adam training loop with decayed learning rate, gradient clipping, and
    patience-based early stopping.

    Collocation times default to the train-split sample times. A non-finite
    loss aborts with the trace so far and the failure flag set; early stopping
    leaves theta exactly as it was when the stall was detected.
    """
    system = system if system is not None else dynamics.lorenz()
    if config.collocation_times is not None:
        times = np.asarray(config.collocation_times, dtype=float)
    elif split is not None:
        times = split.train_times()
    else:
        raise ValueError("need collocation times, either explicit or from a split")
    u0 = np.asarray(u0, dtype=float)
    targets = None
    if weights.mu_data > 0:
        if split is None:
            raise ValueError("mu_data > 0 requires a split with train targets")
        targets = split.train_states()

    plan = _build_plan(times, spec.t_max, weights.fd_step)
    theta = init_params(spec, config.seed)
    m = np.zeros_like(theta)
    v = np.zeros_like(theta)
    lr = config.learning_rate
    records: list[TraceRecord] = []
    best = np.inf
    stall = 0
    stop_reason = "max_iterations"
    failed = False

    for it in range(config.iterations):
        try:
            u = _forward_states(spec, theta, obs_map, plan.times)
            parts = _loss_terms(u, plan, system, weights, u0, targets)
        except RuntimeError:
            stop_reason = "non_finite_loss"
            failed = True
            break
        g_u = _loss_adjoint(u, plan, system, weights, u0, targets)
        grad = _shift_chain(spec, theta, obs_map, plan.times, g_u)
        grad_norm = float(np.linalg.norm(grad))
        records.append(
            TraceRecord(
                iteration=it,
                total=parts.total,
                physics=parts.physics,
                boundary=parts.boundary,
                data=parts.data,
                grad_norm=grad_norm,
                learning_rate=lr,
            )
        )
        if best - parts.total < config.tolerance:
            stall += 1
        else:
            stall = 0
        best = min(best, parts.total)
        if stall >= config.patience:
            stop_reason = "early_stop"
            break
        step = clip_gradient(grad, config.clip_threshold)
        m = ADAM_BETA1 * m + (1.0 - ADAM_BETA1) * step
        v = ADAM_BETA2 * v + (1.0 - ADAM_BETA2) * step**2
        t = it + 1
        m_hat = m / (1.0 - ADAM_BETA1**t)
        v_hat = v / (1.0 - ADAM_BETA2**t)
        theta = theta - lr * m_hat / (np.sqrt(v_hat) + ADAM_EPS)
        lr *= config.decay

    trace = TrainTrace(
        records=tuple(records), final_theta=theta, stop_reason=stop_reason, failed=failed
    )
    return theta, trace


def qpinn_mse(spec: AnsatzSpec, theta, obs_map: ObservableMap, points: Sequence[PhasePoint]) -> float:
    """Mean squared error of u(t) against sampled ground truth, averaged over
    points and components."""
    if not points:
        raise ValueError("need at least one point to score")
    times = np.array([p.t for p in points])
    targets = np.stack([p.coords for p in points])
    u = _forward_states(spec, theta, obs_map, times)
    return float(np.mean((u - targets) ** 2))
