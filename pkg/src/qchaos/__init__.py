"""Quantum reservoir, variational quantum, and echo-state baselines for
chaotic time-series prediction."""

from .dynamics import (
    IntegrationDivergedError,
    PhasePoint,
    SampleSplit,
    SystemSpec,
    Trajectory,
    integrate,
    lorenz,
    lorenz96,
    make_split,
    rhs,
    rossler,
)
from .esn import EsnReservoir, EsnSpec, build_esn, esn_features, esn_fit_evaluate, esn_step
from .qpinn import (
    AnsatzSpec,
    LossWeights,
    ObservableMap,
    TrainConfig,
    TrainTrace,
    gradient,
    physics_loss,
    qpinn_forward,
    qpinn_mse,
    train,
)
from .qrc import (
    EncodingSpec,
    ReservoirSpec,
    RidgeReadout,
    build_reservoir,
    encode_state,
    extract_features,
    fit_ridge,
    qrc_evaluate,
    qrc_fit,
    window_features,
)
from .qsim import Circuit, GateOp, QubitState, apply, expect_z, probabilities, run, sample_shots

__version__ = "0.1.0"
