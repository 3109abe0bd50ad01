"""Quantum reservoir computing for one-step-ahead prediction.

A state is angle-encoded into RY rotations, pushed through a frozen random
layered circuit (per-qubit rotations, a CNOT ring, per-qubit RZ coupling),
and read out as the full bitstring-probability vector. Probability vectors
from consecutive samples are concatenated over a sliding window and mapped
to the next sample by a closed-form ridge readout. Only the readout is
trained; the reservoir never changes after construction.

`window_features` and `fit_ridge` are deliberately method-agnostic: the
echo-state baseline reuses them unchanged.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from typing import Optional, Sequence, Union

import numpy as np

from .dynamics import PhasePoint, SampleSplit
from .qsim import Circuit, GateOp, probabilities, run, sample_shots

MODEL_FORMAT_VERSION = 1

_STAGE_TRAIN = 0
_STAGE_TEST = 1


@dataclass(frozen=True)
class EncodingSpec:
    """Per-variable angle-encoding ranges and the qubit each variable drives.

    A value s in [lo, hi] maps to the RY angle 2*pi*(s - lo)/(hi - lo);
    values outside the range are clamped first.
    """

    lo: np.ndarray
    hi: np.ndarray
    qubit_assignment: tuple[int, ...]

    def __post_init__(self):
        lo = np.asarray(self.lo, dtype=float)
        hi = np.asarray(self.hi, dtype=float)
        if lo.shape != hi.shape or lo.ndim != 1:
            raise ValueError("lo and hi must be 1-d arrays of equal length")
        if not (np.all(np.isfinite(lo)) and np.all(np.isfinite(hi))):
            raise ValueError("encoding ranges must be finite")
        if np.any(hi <= lo):
            raise ValueError("every encoding range must satisfy hi > lo")
        if len(self.qubit_assignment) != len(lo):
            raise ValueError("need one target qubit per encoded variable")
        lo.setflags(write=False)
        hi.setflags(write=False)
        object.__setattr__(self, "lo", lo)
        object.__setattr__(self, "hi", hi)
        object.__setattr__(self, "qubit_assignment", tuple(self.qubit_assignment))

    @property
    def dim(self) -> int:
        return len(self.lo)

    @classmethod
    def lorenz_default(cls) -> "EncodingSpec":
        """Fixed attractor-covering ranges for the Lorenz system."""
        return cls(lo=(-20.0, -30.0, 0.0), hi=(20.0, 30.0, 50.0), qubit_assignment=(0, 1, 2))

    @classmethod
    def from_samples(cls, states, n_qubits: int, margin: float = 0.1) -> "EncodingSpec":
        """Ranges from per-variable sample min/max widened by a relative margin.

        A variable that is constant in the samples gets a fixed +-0.5 pad so
        its range stays nondegenerate. Variables are assigned to qubits
        round-robin: variable d drives qubit d mod n_qubits.
        """
        arr = np.asarray(states, dtype=float)
        lo = arr.min(axis=0)
        hi = arr.max(axis=0)
        span = hi - lo
        pad = np.where(span > 0, margin * span, 0.5)
        dim = arr.shape[1]
        return cls(
            lo=lo - pad,
            hi=hi + pad,
            qubit_assignment=tuple(d % n_qubits for d in range(dim)),
        )


def encode_state(enc: EncodingSpec, state) -> np.ndarray:
    """RY angles in [0, 2*pi] for one state, clamping out-of-range values."""
    coords = state.coords if isinstance(state, PhasePoint) else np.asarray(state, dtype=float)
    if coords.shape != (enc.dim,):
        raise ValueError(f"state has shape {coords.shape}, encoding expects ({enc.dim},)")
    clamped = np.clip(coords, enc.lo, enc.hi)
    return 2.0 * np.pi * (clamped - enc.lo) / (enc.hi - enc.lo)


@dataclass(frozen=True)
class ReservoirSpec:
    """A frozen random reservoir circuit: all angles fixed at construction."""

    n_qubits: int
    n_layers: int
    seed: int
    rot_angles: np.ndarray
    ring_rz: np.ndarray

    def __post_init__(self):
        rot = np.asarray(self.rot_angles, dtype=float)
        ring = np.asarray(self.ring_rz, dtype=float)
        if rot.shape != (self.n_layers, self.n_qubits, 3):
            raise ValueError(f"rot_angles shape {rot.shape} does not match layout")
        if ring.shape != (self.n_layers, self.n_qubits):
            raise ValueError(f"ring_rz shape {ring.shape} does not match layout")
        rot.setflags(write=False)
        ring.setflags(write=False)
        object.__setattr__(self, "rot_angles", rot)
        object.__setattr__(self, "ring_rz", ring)

    @property
    def n_features(self) -> int:
        return 2**self.n_qubits


def build_reservoir(n_qubits: int, n_layers: int, seed: int) -> ReservoirSpec:
    """Draw all reservoir angles uniformly from [0, 2*pi) with a seeded generator."""
    if n_qubits < 2:
        raise ValueError(f"reservoir needs at least 2 qubits, got {n_qubits}")
    if n_layers < 1:
        raise ValueError(f"reservoir needs at least 1 layer, got {n_layers}")
    rng = np.random.default_rng(seed)
    rot = rng.uniform(0.0, 2.0 * np.pi, size=(n_layers, n_qubits, 3))
    ring = rng.uniform(0.0, 2.0 * np.pi, size=(n_layers, n_qubits))
    return ReservoirSpec(
        n_qubits=n_qubits, n_layers=n_layers, seed=int(seed), rot_angles=rot, ring_rz=ring
    )


def reservoir_circuit(res: ReservoirSpec, enc: EncodingSpec, state) -> Circuit:
    """Encoding RYs followed by the frozen reservoir layers."""
    for q in enc.qubit_assignment:
        if q >= res.n_qubits:
            raise ValueError(f"encoding targets qubit {q}, reservoir has {res.n_qubits}")
    angles = encode_state(enc, state)
    ops = [
        GateOp("RY", target=q, angle=angles[d]) for d, q in enumerate(enc.qubit_assignment)
    ]
    n = res.n_qubits
    for layer in range(res.n_layers):
        for q in range(n):
            ops.append(GateOp("RX", target=q, angle=res.rot_angles[layer, q, 0]))
            ops.append(GateOp("RY", target=q, angle=res.rot_angles[layer, q, 1]))
            ops.append(GateOp("RZ", target=q, angle=res.rot_angles[layer, q, 2]))
        for q in range(n):
            ops.append(GateOp("CNOT", target=(q + 1) % n, control=q))
        for q in range(n):
            ops.append(GateOp("RZ", target=q, angle=res.ring_rz[layer, q]))
    return Circuit(n_qubits=n, ops=tuple(ops))


def extract_features(
    res: ReservoirSpec,
    enc: EncodingSpec,
    state,
    shots: Optional[int] = None,
    rng=None,
) -> np.ndarray:
    """Bitstring-probability feature vector for one state.

    With `shots=None` the exact probability vector is returned; otherwise
    multinomial frequencies from that many shots, drawn from `rng`.
    """
    final = run(reservoir_circuit(res, enc, state))
    probs = probabilities(final)
    if shots is None:
        return probs
    if rng is None:
        raise ValueError("shot sampling requires an rng or seed")
    return sample_shots(probs, shots, rng).frequencies()


def window_features(features, w: int) -> np.ndarray:
    """Concatenate each feature row with its w-1 predecessors.

    Input rows f_0..f_{T-1} produce T-w+1 output rows; output row r is
    [f_r, f_{r+1}, ..., f_{r+w-1}], i.e. the window ending at sample r+w-1
    ordered oldest first.
    """
    feats = np.asarray(features, dtype=float)
    if feats.ndim != 2:
        raise ValueError("features must be a 2-d array")
    if w < 1:
        raise ValueError(f"window must be >= 1, got {w}")
    if len(feats) < w:
        raise ValueError(f"cannot window {len(feats)} rows with w={w}")
    rows = len(feats) - w + 1
    return np.hstack([feats[i : i + rows] for i in range(w)])


@dataclass(frozen=True)
class RidgeReadout:
    """Linear readout y = F @ W.T + b fit by ridge regression."""

    W: np.ndarray
    b: np.ndarray
    alpha: float

    def __post_init__(self):
        W = np.asarray(self.W, dtype=float)
        b = np.asarray(self.b, dtype=float)
        if W.ndim != 2 or b.shape != (W.shape[0],):
            raise ValueError("W must be (out, features) with matching intercept")
        W.setflags(write=False)
        b.setflags(write=False)
        object.__setattr__(self, "W", W)
        object.__setattr__(self, "b", b)

    @property
    def n_features(self) -> int:
        return self.W.shape[1]

    def predict(self, F) -> np.ndarray:
        F = np.asarray(F, dtype=float)
        if F.shape[-1] != self.n_features:
            raise ValueError(f"features have {F.shape[-1]} columns, readout expects {self.n_features}")
        return F @ self.W.T + self.b


def fit_ridge(F, S, alpha: float) -> RidgeReadout:
    """Closed-form ridge fit of targets S on features F.

    For alpha > 0 the normal equations are solved on column-centered data and
    the intercept restores the means, so alpha penalizes slopes only. For
    alpha = 0 the raw (uncentered) normal equations are solved, which requires
    full-column-rank features; centering would make them singular whenever the
    constant vector lies in the column span.
    """
    F = np.asarray(F, dtype=float)
    S = np.asarray(S, dtype=float)
    if F.ndim != 2 or S.ndim != 2:
        raise ValueError("F and S must be 2-d arrays")
    if len(F) != len(S) or len(F) < 1:
        raise ValueError(f"row mismatch: {len(F)} feature rows vs {len(S)} target rows")
    if alpha < 0 or not np.isfinite(alpha):
        raise ValueError(f"alpha must be nonnegative and finite, got {alpha}")

    f_mean = F.mean(axis=0)
    s_mean = S.mean(axis=0)
    if alpha == 0:
        if np.linalg.matrix_rank(F) < F.shape[1]:
            raise np.linalg.LinAlgError(
                "features are rank-deficient and alpha = 0 leaves the system singular"
            )
        design, targets = F, S
    else:
        design, targets = F - f_mean, S - s_mean
    gram = design.T @ design + alpha * np.eye(F.shape[1])
    coef = np.linalg.solve(gram, design.T @ targets)
    b = s_mean - f_mean @ coef
    return RidgeReadout(W=coef.T, b=b, alpha=float(alpha))


def _feature_rng(seed: int, stage: int, index: int) -> np.random.Generator:
    # Streams are keyed per (run seed, stage, sample) so appending samples
    # never shifts the noise of earlier ones.
    return np.random.default_rng(np.random.SeedSequence([seed, stage, index]))


def _sequence_features(
    res: ReservoirSpec,
    enc: EncodingSpec,
    points: Sequence[PhasePoint],
    shots: Optional[int],
    seed: int,
    stage: int,
) -> np.ndarray:
    rows = []
    for i, point in enumerate(points):
        rng = _feature_rng(seed, stage, i) if shots is not None else None
        rows.append(extract_features(res, enc, point, shots=shots, rng=rng))
    return np.stack(rows)


def qrc_fit(
    split: SampleSplit,
    res: ReservoirSpec,
    enc: EncodingSpec,
    window: int,
    shots: Optional[int],
    alpha: float,
    seed: int,
) -> tuple[RidgeReadout, float]:
    """Fit the one-step-ahead readout on the train split.

    The window ending at sample t predicts sample t+1, so len(train) must
    exceed the window length. Returns the readout and the train MSE.
    """
    if len(split.train) <= window:
        raise ValueError(f"need more than window={window} train samples, got {len(split.train)}")
    feats = _sequence_features(res, enc, split.train, shots, seed, _STAGE_TRAIN)
    F = window_features(feats, window)[:-1]
    S = split.train_states()[window:]
    readout = fit_ridge(F, S, alpha)
    train_mse = float(np.mean((readout.predict(F) - S) ** 2))
    return readout, train_mse


def qrc_evaluate(
    readout: RidgeReadout,
    split: SampleSplit,
    res: ReservoirSpec,
    enc: EncodingSpec,
    window: int,
    shots: Optional[int],
    seed: int,
) -> float:
    """Teacher-forced one-step MSE on the test split using ground-truth windows."""
    if len(split.test) <= window:
        raise ValueError(f"need more than window={window} test samples, got {len(split.test)}")
    feats = _sequence_features(res, enc, split.test, shots, seed, _STAGE_TEST)
    F = window_features(feats, window)[:-1]
    S = split.test_states()[window:]
    return float(np.mean((readout.predict(F) - S) ** 2))


def save_model(path, res: ReservoirSpec, enc: EncodingSpec, window: int, readout: RidgeReadout) -> None:
    """Persist a fitted model as versioned JSON.

    Reservoir angles are reproduced from the stored seed on load, so a
    round-trip yields bitwise-identical predictions.
    """
    payload = {
        "format_version": MODEL_FORMAT_VERSION,
        "reservoir": {
            "n_qubits": res.n_qubits,
            "n_layers": res.n_layers,
            "seed": res.seed,
        },
        "encoding": {
            "lo": enc.lo.tolist(),
            "hi": enc.hi.tolist(),
            "qubit_assignment": list(enc.qubit_assignment),
        },
        "window": int(window),
        "readout": {
            "alpha": readout.alpha,
            "W": readout.W.tolist(),
            "b": readout.b.tolist(),
        },
    }
    with open(path, "w") as fh:
        json.dump(payload, fh, indent=2)


def load_model(path) -> tuple[ReservoirSpec, EncodingSpec, int, RidgeReadout]:
    """Load a model saved by `save_model`."""
    with open(path) as fh:
        payload = json.load(fh)
    version = payload.get("format_version")
    if version != MODEL_FORMAT_VERSION:
        raise ValueError(f"unsupported model format version {version}")
    res = build_reservoir(**payload["reservoir"])
    enc_raw = payload["encoding"]
    enc = EncodingSpec(
        lo=enc_raw["lo"], hi=enc_raw["hi"], qubit_assignment=tuple(enc_raw["qubit_assignment"])
    )
    readout_raw = payload["readout"]
    readout = RidgeReadout(
        W=np.array(readout_raw["W"]), b=np.array(readout_raw["b"]), alpha=readout_raw["alpha"]
    )
    return res, enc, int(payload["window"]), readout
