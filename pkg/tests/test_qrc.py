"""Reservoir, windowing, ridge readout, and pipeline tests."""

import numpy as np
import pytest

from qchaos.dynamics import integrate, lorenz, lorenz96, make_split
from qchaos.qrc import (
    EncodingSpec,
    build_reservoir,
    encode_state,
    extract_features,
    fit_ridge,
    load_model,
    qrc_evaluate,
    qrc_fit,
    reservoir_circuit,
    save_model,
    window_features,
    _sequence_features,
    _STAGE_TRAIN,
)


def lorenz_split():
    traj = integrate(lorenz(), [1.0, 1.0, 1.0], dt=0.01, t_end=4.0)
    return make_split(traj, n_train=50, train_end=3.0, n_test=20, test_end=4.0)


# ---------------------------------------------------------------------------
# Encoding
# ---------------------------------------------------------------------------


def test_encode_state_endpoints_and_midpoint():
    enc = EncodingSpec.lorenz_default()
    np.testing.assert_allclose(encode_state(enc, [-20.0, -30.0, 0.0]), [0.0, 0.0, 0.0])
    np.testing.assert_allclose(
        encode_state(enc, [20.0, 30.0, 50.0]), [2 * np.pi] * 3, rtol=1e-15
    )
    np.testing.assert_allclose(
        encode_state(enc, [0.0, 0.0, 25.0]), [np.pi] * 3, rtol=1e-15
    )


def test_encode_state_clamps_out_of_range():
    enc = EncodingSpec.lorenz_default()
    angles = encode_state(enc, [-100.0, 100.0, 25.0])
    assert angles[0] == 0.0
    assert angles[1] == pytest.approx(2 * np.pi)


def test_encoding_spec_rejects_degenerate_range():
    with pytest.raises(ValueError):
        EncodingSpec(lo=(0.0, 1.0), hi=(1.0, 1.0), qubit_assignment=(0, 1))


def test_encoding_from_samples_margin_and_assignment():
    states = np.array([[0.0, 5.0, 7.0], [10.0, -5.0, 7.0]])
    enc = EncodingSpec.from_samples(states, n_qubits=2)
    np.testing.assert_allclose(enc.lo, [-1.0, -6.0, 6.5])
    np.testing.assert_allclose(enc.hi, [11.0, 6.0, 7.5])
    assert enc.qubit_assignment == (0, 1, 0)


# ---------------------------------------------------------------------------
# Reservoir structure
# ---------------------------------------------------------------------------


def test_build_reservoir_shapes_and_range():
    res = build_reservoir(n_qubits=5, n_layers=2, seed=0)
    assert res.rot_angles.shape == (2, 5, 3)
    assert res.ring_rz.shape == (2, 5)
    assert np.all(res.rot_angles >= 0) and np.all(res.rot_angles < 2 * np.pi)
    assert np.all(res.ring_rz >= 0) and np.all(res.ring_rz < 2 * np.pi)


def test_build_reservoir_seeded():
    a = build_reservoir(5, 2, seed=3)
    b = build_reservoir(5, 2, seed=3)
    c = build_reservoir(5, 2, seed=4)
    assert np.array_equal(a.rot_angles, b.rot_angles)
    assert np.array_equal(a.ring_rz, b.ring_rz)
    assert not np.array_equal(a.rot_angles, c.rot_angles)


def test_reservoir_angles_frozen():
    res = build_reservoir(5, 2, seed=0)
    with pytest.raises(ValueError):
        res.rot_angles[0, 0, 0] = 1.0


def test_reservoir_circuit_gate_count():
    """n=5, L=2, 3 encoded variables: 3 + 2 * (15 + 5 + 5) = 53 gates."""
    res = build_reservoir(5, 2, seed=0)
    enc = EncodingSpec.lorenz_default()
    circuit = reservoir_circuit(res, enc, [0.0, 0.0, 25.0])
    assert len(circuit) == 53
    kinds = [op.kind for op in circuit.ops]
    assert kinds[:3] == ["RY", "RY", "RY"]
    assert kinds.count("CNOT") == 10
    # each layer closes with the ring of RZ coupling gates
    assert kinds[3 + 15 + 5 : 3 + 15 + 5 + 5] == ["RZ"] * 5


def test_reservoir_circuit_ring_wraps_around():
    res = build_reservoir(5, 1, seed=0)
    circuit = reservoir_circuit(res, EncodingSpec.lorenz_default(), [0.0, 0.0, 25.0])
    cnots = [(op.control, op.target) for op in circuit.ops if op.kind == "CNOT"]
    assert cnots == [(0, 1), (1, 2), (2, 3), (3, 4), (4, 0)]


def test_encoding_qubit_out_of_range_rejected():
    res = build_reservoir(2, 1, seed=0)
    enc = EncodingSpec.lorenz_default()  # targets qubit 2
    with pytest.raises(ValueError):
        reservoir_circuit(res, enc, [0.0, 0.0, 0.0])


# ---------------------------------------------------------------------------
# Features
# ---------------------------------------------------------------------------


def test_extract_features_exact_probability_vector():
    res = build_reservoir(5, 2, seed=1)
    enc = EncodingSpec.lorenz_default()
    feats = extract_features(res, enc, [1.0, 1.0, 1.0])
    assert feats.shape == (32,)
    assert np.all(feats >= 0) and np.all(feats <= 1)
    assert feats.sum() == pytest.approx(1.0, abs=1e-10)


def test_extract_features_is_deterministic_and_frozen():
    """Same state, same reservoir: bitwise-identical features on repeat calls."""
    res = build_reservoir(5, 2, seed=1)
    enc = EncodingSpec.lorenz_default()
    before = res.rot_angles.copy()
    a = extract_features(res, enc, [1.0, 2.0, 3.0])
    b = extract_features(res, enc, [1.0, 2.0, 3.0])
    assert np.array_equal(a, b)
    assert np.array_equal(res.rot_angles, before)


def test_extract_features_shot_mode():
    res = build_reservoir(5, 2, seed=1)
    enc = EncodingSpec.lorenz_default()
    freqs = extract_features(res, enc, [1.0, 1.0, 1.0], shots=1024, rng=7)
    assert freqs.sum() == pytest.approx(1.0, abs=1e-12)
    assert np.all(freqs >= 0)
    with pytest.raises(ValueError):
        extract_features(res, enc, [1.0, 1.0, 1.0], shots=1024)


def test_feature_streams_stable_under_extension():
    """Adding samples never changes the shot noise of earlier samples."""
    res = build_reservoir(5, 2, seed=2)
    enc = EncodingSpec.lorenz_default()
    split = lorenz_split()
    short = _sequence_features(res, enc, split.train[:10], 1024, seed=5, stage=_STAGE_TRAIN)
    long = _sequence_features(res, enc, split.train[:14], 1024, seed=5, stage=_STAGE_TRAIN)
    assert np.array_equal(short, long[:10])


# ---------------------------------------------------------------------------
# Windowing
# ---------------------------------------------------------------------------


def test_window_features_dims():
    """Window lengths 1, 3, 5 on 32 columns give 32, 96, 160 feature columns."""
    feats = np.arange(50 * 32, dtype=float).reshape(50, 32)
    for w, dim in ((1, 32), (3, 96), (5, 160)):
        out = window_features(feats, w)
        assert out.shape == (50 - w + 1, dim)


def test_window_features_order_oldest_first():
    feats = np.array([[0.0], [1.0], [2.0], [3.0]])
    out = window_features(feats, 3)
    np.testing.assert_array_equal(out, [[0.0, 1.0, 2.0], [1.0, 2.0, 3.0]])


def test_window_features_w1_is_identity():
    feats = np.random.default_rng(0).random((10, 4))
    np.testing.assert_array_equal(window_features(feats, 1), feats)


def test_window_features_validation():
    feats = np.zeros((3, 2))
    with pytest.raises(ValueError):
        window_features(feats, 4)
    with pytest.raises(ValueError):
        window_features(feats, 0)


# ---------------------------------------------------------------------------
# Ridge readout
# ---------------------------------------------------------------------------


def ridge_oracle(F, S, alpha):
    """Brute-force normal equations with an explicit inverse on centered data."""
    f_mean = F.mean(axis=0)
    s_mean = S.mean(axis=0)
    Fc = F - f_mean
    Sc = S - s_mean
    coef = np.linalg.inv(Fc.T @ Fc + alpha * np.eye(F.shape[1])) @ (Fc.T @ Sc)
    return coef.T, s_mean - f_mean @ coef


def test_fit_ridge_identity_unregularized():
    """F = S = I with alpha = 0 recovers W = I, b = 0 exactly."""
    eye = np.eye(6)
    readout = fit_ridge(eye, eye, alpha=0.0)
    np.testing.assert_allclose(readout.W, eye, atol=1e-12)
    np.testing.assert_allclose(readout.b, np.zeros(6), atol=1e-12)


def test_fit_ridge_matches_explicit_inverse_oracle():
    """Solver output matches the brute-force inverse on random instances."""
    rng = np.random.default_rng(21)
    for _ in range(10):
        rows, feats, outs = rng.integers(10, 30), rng.integers(2, 9), rng.integers(1, 4)
        F = rng.normal(size=(rows, feats))
        S = rng.normal(size=(rows, outs))
        alpha = float(10 ** rng.uniform(-3, 1))
        readout = fit_ridge(F, S, alpha)
        W_want, b_want = ridge_oracle(F, S, alpha)
        np.testing.assert_allclose(readout.W, W_want, atol=1e-8)
        np.testing.assert_allclose(readout.b, b_want, atol=1e-8)


def test_fit_ridge_large_alpha_predicts_means():
    rng = np.random.default_rng(4)
    F = rng.normal(size=(20, 5))
    S = rng.normal(size=(20, 2))
    readout = fit_ridge(F, S, alpha=1e12)
    preds = readout.predict(F)
    np.testing.assert_allclose(preds, np.tile(S.mean(axis=0), (20, 1)), atol=1e-6)


def test_fit_ridge_is_the_regularized_minimum():
    """No perturbation of W in 100 random directions lowers the objective."""
    rng = np.random.default_rng(9)
    F = rng.normal(size=(25, 6))
    S = rng.normal(size=(25, 3))
    alpha = 0.7
    readout = fit_ridge(F, S, alpha)
    Fc = F - F.mean(axis=0)
    Sc = S - S.mean(axis=0)

    def objective(W):
        return np.sum((Fc @ W.T - Sc) ** 2) + alpha * np.sum(W**2)

    base = objective(readout.W)
    for _ in range(100):
        delta = rng.normal(size=readout.W.shape)
        delta *= 1e-3 / np.linalg.norm(delta)
        assert objective(readout.W + delta) >= base


def test_fit_ridge_permutation_invariant():
    rng = np.random.default_rng(13)
    F = rng.normal(size=(30, 4))
    S = rng.normal(size=(30, 2))
    perm = rng.permutation(30)
    a = fit_ridge(F, S, alpha=1.0)
    b = fit_ridge(F[perm], S[perm], alpha=1.0)
    np.testing.assert_allclose(a.W, b.W, atol=1e-10)
    np.testing.assert_allclose(a.b, b.b, atol=1e-10)


def test_fit_ridge_singular_without_regularization():
    F = np.zeros((10, 3))
    F[:, 0] = np.arange(10)
    F[:, 1] = np.arange(10)  # duplicated column
    S = np.ones((10, 1))
    with pytest.raises(np.linalg.LinAlgError):
        fit_ridge(F, S, alpha=0.0)


def test_fit_ridge_validation():
    with pytest.raises(ValueError):
        fit_ridge(np.zeros((5, 2)), np.zeros((4, 1)), alpha=1.0)
    with pytest.raises(ValueError):
        fit_ridge(np.zeros((5, 2)), np.zeros((5, 1)), alpha=-1.0)


def test_readout_predict_validates_columns():
    readout = fit_ridge(np.eye(3), np.eye(3), alpha=0.5)
    with pytest.raises(ValueError):
        readout.predict(np.zeros((2, 5)))


# ---------------------------------------------------------------------------
# Fit / evaluate pipeline
# ---------------------------------------------------------------------------


def test_qrc_fit_evaluate_exact_mode_runs():
    split = lorenz_split()
    res = build_reservoir(5, 2, seed=0)
    enc = EncodingSpec.lorenz_default()
    readout, train_mse = qrc_fit(split, res, enc, window=5, shots=None, alpha=1.0, seed=0)
    assert readout.n_features == 160
    assert np.isfinite(train_mse) and train_mse > 0
    test_mse = qrc_evaluate(readout, split, res, enc, window=5, shots=None, seed=0)
    assert np.isfinite(test_mse) and test_mse > 0


def test_qrc_fit_deterministic_with_shots():
    split = lorenz_split()
    res = build_reservoir(5, 2, seed=0)
    enc = EncodingSpec.lorenz_default()
    a = qrc_fit(split, res, enc, window=5, shots=1024, alpha=1.0, seed=0)
    b = qrc_fit(split, res, enc, window=5, shots=1024, alpha=1.0, seed=0)
    assert a[1] == b[1]
    assert np.array_equal(a[0].W, b[0].W)


def test_qrc_fit_window_too_long_rejected():
    split = lorenz_split()
    res = build_reservoir(5, 2, seed=0)
    enc = EncodingSpec.lorenz_default()
    with pytest.raises(ValueError):
        qrc_fit(split, res, enc, window=50, shots=None, alpha=1.0, seed=0)
    readout, _ = qrc_fit(split, res, enc, window=5, shots=None, alpha=1.0, seed=0)
    with pytest.raises(ValueError):
        qrc_evaluate(readout, split, res, enc, window=20, shots=None, seed=0)


def test_qrc_constant_trajectory_fits_exactly():
    """A constant (fixed point) trajectory is learned to train MSE < 1e-6."""
    traj = integrate(lorenz96(), np.full(8, 8.0), dt=0.01, t_end=4.0)
    split = make_split(traj, n_train=50, train_end=3.0, n_test=20, test_end=4.0)
    res = build_reservoir(5, 2, seed=0)
    enc = EncodingSpec.from_samples(split.train_states(), n_qubits=5)
    _, train_mse = qrc_fit(split, res, enc, window=5, shots=None, alpha=1.0, seed=0)
    assert train_mse < 1e-6


def test_model_persistence_bitwise_round_trip(tmp_path):
    """Saved and reloaded models reproduce predictions bitwise."""
    split = lorenz_split()
    res = build_reservoir(5, 2, seed=0)
    enc = EncodingSpec.lorenz_default()
    readout, _ = qrc_fit(split, res, enc, window=5, shots=1024, alpha=1.0, seed=0)
    path = tmp_path / "model.json"
    save_model(path, res, enc, 5, readout)
    res2, enc2, window2, readout2 = load_model(path)
    assert window2 == 5
    assert np.array_equal(res2.rot_angles, res.rot_angles)
    assert np.array_equal(readout2.W, readout.W)
    feats = _sequence_features(res2, enc2, split.test, 1024, seed=0, stage=1)
    F = window_features(feats, window2)[:-1]
    assert np.array_equal(readout2.predict(F), readout.predict(F))


def test_load_model_rejects_unknown_version(tmp_path):
    path = tmp_path / "bad.json"
    path.write_text('{"format_version": 99}')
    with pytest.raises(ValueError):
        load_model(path)
