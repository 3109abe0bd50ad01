"""Classical echo-state network baseline.

A leaky tanh reservoir driven by ground-truth states, read out with the same
windowing and ridge code paths as the quantum reservoir so that the two
methods differ only in how features are produced.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .dynamics import SampleSplit
from .qrc import fit_ridge, window_features


@dataclass(frozen=True)
class EsnSpec:
    """Reservoir hyperparameters."""

    n_neurons: int = 500
    spectral_radius: float = 0.9
    input_scaling: float = 0.1
    leak_rate: float = 0.3
    connectivity: float = 0.1
    seed: int = 0

    def __post_init__(self):
        if self.n_neurons < 1:
            raise ValueError(f"need at least one neuron, got {self.n_neurons}")
        if self.spectral_radius <= 0:
            raise ValueError(f"spectral radius must be positive, got {self.spectral_radius}")
        if not 0 < self.leak_rate <= 1:
            raise ValueError(f"leak rate must be in (0, 1], got {self.leak_rate}")
        if not 0 < self.connectivity <= 1:
            raise ValueError(f"connectivity must be in (0, 1], got {self.connectivity}")


@dataclass(frozen=True)
class EsnReservoir:
    """Frozen recurrent and input weights plus the spec that produced them."""

    W_rec: np.ndarray
    W_in: np.ndarray
    spec: EsnSpec

    def __post_init__(self):
        w_rec = np.asarray(self.W_rec, dtype=float)
        w_in = np.asarray(self.W_in, dtype=float)
        n = self.spec.n_neurons
        if w_rec.shape != (n, n):
            raise ValueError(f"W_rec shape {w_rec.shape} does not match {n} neurons")
        if w_in.ndim != 2 or w_in.shape[0] != n:
            raise ValueError(f"W_in shape {w_in.shape} does not match {n} neurons")
        w_rec.setflags(write=False)
        w_in.setflags(write=False)
        object.__setattr__(self, "W_rec", w_rec)
        object.__setattr__(self, "W_in", w_in)

    @property
    def input_dim(self) -> int:
        return self.W_in.shape[1]


def build_esn(spec: EsnSpec, input_dim: int) -> EsnReservoir:
    """Draw a sparse recurrent matrix, rescale it to the target spectral
    radius, and draw scaled input weights.

    A draw whose spectral radius is zero (so rescaling is impossible) is
    retried up to three times with a derived seed.
    """
    if input_dim < 1:
        raise ValueError(f"input dimension must be positive, got {input_dim}")
    for attempt in range(3):
        rng = np.random.default_rng(np.random.SeedSequence([spec.seed, attempt]))
        w_rec = rng.uniform(-1.0, 1.0, size=(spec.n_neurons, spec.n_neurons))
        w_rec *= rng.random(size=w_rec.shape) < spec.connectivity
        radius = float(np.max(np.abs(np.linalg.eigvals(w_rec))))
        if radius > 0:
            w_rec *= spec.spectral_radius / radius
            w_in = rng.uniform(-1.0, 1.0, size=(spec.n_neurons, input_dim)) * spec.input_scaling
            return EsnReservoir(W_rec=w_rec, W_in=w_in, spec=spec)
    raise RuntimeError(f"recurrent matrix kept a zero spectral radius after 3 draws (seed {spec.seed})")


def esn_step(res: EsnReservoir, state: np.ndarray, u, leak: float) -> np.ndarray:
    """One leaky update: x' = (1 - leak) * x + leak * tanh(W_rec x + W_in u)."""
    u = np.asarray(u, dtype=float)
    if u.shape != (res.input_dim,):
        raise ValueError(f"input has shape {u.shape}, reservoir expects ({res.input_dim},)")
    return (1.0 - leak) * state + leak * np.tanh(res.W_rec @ state + res.W_in @ u)


def _drive(
    res: EsnReservoir, inputs: np.ndarray, x0: np.ndarray = None
) -> tuple[np.ndarray, np.ndarray]:
    """Drive the reservoir along an input sequence; row t is the state after
    input t. Returns the state sequence and the final state."""
    x = np.zeros(res.spec.n_neurons) if x0 is None else x0
    states = np.empty((len(inputs), res.spec.n_neurons))
    for t, u in enumerate(inputs):
        x = esn_step(res, x, u, res.spec.leak_rate)
        states[t] = x
    return states, x


def esn_features(res: EsnReservoir, split: SampleSplit, w: int) -> np.ndarray:
    """Windowed reservoir states for the train sequence (w * n_neurons columns).

    The drive starts from the zero state; windowing discards the first w-1
    rows, which doubles as the washout.
    """
    states, _ = _drive(res, split.train_states())
    return window_features(states, w)


def esn_fit_evaluate(
    spec: EsnSpec, split: SampleSplit, w: int, alpha: float
) -> tuple[float, float]:
    """Fit the one-step-ahead readout on train, score on test; same
    teacher-forced protocol as the quantum reservoir. Returns (train, test) MSE.

    The test drive continues from the reservoir state reached at the end of
    the train drive: the test interval abuts the train interval in time, and
    a cold restart would leave zero-state transient in the test features.
    """
    if len(split.train) <= w or len(split.test) <= w:
        raise ValueError(f"both splits must be longer than the window w={w}")
    res = build_esn(spec, input_dim=split.train_states().shape[1])
    train_drive, x_end = _drive(res, split.train_states())
    F = window_features(train_drive, w)[:-1]
    S = split.train_states()[w:]
    readout = fit_ridge(F, S, alpha)
    train_mse = float(np.mean((readout.predict(F) - S) ** 2))

    test_drive, _ = _drive(res, split.test_states(), x_end)
    F_test = window_features(test_drive, w)[:-1]
    S_test = split.test_states()[w:]
    test_mse = float(np.mean((readout.predict(F_test) - S_test) ** 2))
    return train_mse, test_mse
