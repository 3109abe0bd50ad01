"""Dynamics tests: right-hand sides, RK4 convergence, sampling, CSV export."""

import numpy as np
import pytest

from qchaos.dynamics import (
    IntegrationDivergedError,
    PhasePoint,
    integrate,
    lorenz,
    lorenz96,
    make_split,
    rhs,
    rhs_jacobian,
    rossler,
    trajectory_to_csv,
)

ALL_SYSTEMS = [
    (lorenz(), np.array([1.0, 2.0, 3.0])),
    (rossler(), np.array([0.5, -1.0, 2.0])),
    (lorenz96(), np.arange(8, dtype=float) - 3.0),
]


def test_lorenz_rhs_at_ones():
    """f(1,1,1) = (0, 26, 1 - 8/3) at the classic parameters."""
    got = rhs(lorenz(), np.array([1.0, 1.0, 1.0]))
    np.testing.assert_allclose(got, [0.0, 26.0, 1.0 - 8.0 / 3.0], atol=1e-14)


def test_rossler_rhs_at_origin():
    got = rhs(rossler(), np.zeros(3))
    np.testing.assert_allclose(got, [0.0, 0.0, 0.2], atol=1e-15)


def test_lorenz96_fixed_point():
    """The all-F state is an equilibrium of Lorenz-96."""
    got = rhs(lorenz96(), np.full(8, 8.0))
    np.testing.assert_allclose(got, np.zeros(8), atol=1e-12)


def test_rhs_accepts_phase_point():
    point = PhasePoint(coords=np.array([1.0, 1.0, 1.0]), t=0.5)
    np.testing.assert_array_equal(rhs(lorenz(), point), rhs(lorenz(), point.coords))


def test_rhs_is_pure():
    """Calling rhs twice gives bitwise-equal output and never mutates the input."""
    for system, x in ALL_SYSTEMS:
        x_copy = x.copy()
        first = rhs(system, x)
        second = rhs(system, x)
        assert np.array_equal(first, second)
        assert np.array_equal(x, x_copy)


def test_jacobian_matches_finite_differences():
    """Analytic Jacobians agree with central differences on all systems."""
    h = 1e-6
    for system, x in ALL_SYSTEMS:
        jac = rhs_jacobian(system, x)
        fd = np.empty_like(jac)
        for j in range(system.dim):
            step = np.zeros(system.dim)
            step[j] = h
            fd[:, j] = (rhs(system, x + step) - rhs(system, x - step)) / (2 * h)
        np.testing.assert_allclose(jac, fd, rtol=1e-6, atol=1e-6)


def test_integrate_grid_and_initial_state():
    traj = integrate(lorenz(), [1.0, 1.0, 1.0], dt=0.01, t_end=4.0)
    assert len(traj) == 401
    np.testing.assert_array_equal(traj.states[0], [1.0, 1.0, 1.0])
    np.testing.assert_allclose(np.diff(traj.times), 0.01, rtol=1e-12)
    assert traj.times[-1] == pytest.approx(4.0, abs=1e-12)


def test_integrate_truncated_final_step():
    """A t_end off the grid is hit exactly by one shorter final step."""
    traj = integrate(lorenz(), [1.0, 1.0, 1.0], dt=0.01, t_end=0.995)
    assert traj.times[-1] == pytest.approx(0.995, abs=1e-15)
    assert len(traj) == 101
    np.testing.assert_allclose(np.diff(traj.times)[:-1], 0.01, rtol=1e-12)
    assert np.diff(traj.times)[-1] == pytest.approx(0.005, abs=1e-12)


def test_rk4_fourth_order_convergence():
    """Halving dt shrinks the endpoint error against a dt/8 oracle by >= 8x."""
    x0 = [1.0, 1.0, 1.0]
    oracle = integrate(lorenz(), x0, dt=0.00125, t_end=1.0).states[-1]
    err_coarse = np.max(np.abs(integrate(lorenz(), x0, dt=0.01, t_end=1.0).states[-1] - oracle))
    err_fine = np.max(np.abs(integrate(lorenz(), x0, dt=0.005, t_end=1.0).states[-1] - oracle))
    assert err_coarse / err_fine >= 8.0, f"ratio {err_coarse / err_fine}"


def test_lorenz_endpoint_against_refined_oracle():
    """dt=0.01 over [0, 4] stays within 1e-2 max-norm of a dt=0.0025 oracle."""
    x0 = [1.0, 1.0, 1.0]
    coarse = integrate(lorenz(), x0, dt=0.01, t_end=4.0).states[-1]
    oracle = integrate(lorenz(), x0, dt=0.0025, t_end=4.0).states[-1]
    assert np.max(np.abs(coarse - oracle)) < 1e-2


def test_integrate_deterministic():
    a = integrate(rossler(), [1.0, 1.0, 1.0], dt=0.01, t_end=2.0)
    b = integrate(rossler(), [1.0, 1.0, 1.0], dt=0.01, t_end=2.0)
    assert np.array_equal(a.states, b.states)
    assert np.array_equal(a.times, b.times)


def test_integration_divergence_raises_with_step():
    """A wildly unstable step size raises and names the failing step."""
    with np.errstate(over="ignore", invalid="ignore"):
        with pytest.raises(IntegrationDivergedError) as excinfo:
            integrate(lorenz(), [1.0, 1.0, 1.0], dt=10.0, t_end=1000.0)
    assert excinfo.value.step >= 1


def test_integrate_validation():
    with pytest.raises(ValueError):
        integrate(lorenz(), [1.0, 1.0], dt=0.01, t_end=1.0)
    with pytest.raises(ValueError):
        integrate(lorenz(), [1.0, 1.0, 1.0], dt=-0.01, t_end=1.0)
    with pytest.raises(ValueError):
        integrate(lorenz(), [1.0, 1.0, 1.0], dt=0.01, t_end=-1.0)


def test_make_split_protocol_counts_and_intervals():
    """50 train samples in [0, 3], 20 test samples in (3, 4], all on the grid."""
    traj = integrate(lorenz(), [1.0, 1.0, 1.0], dt=0.01, t_end=4.0)
    split = make_split(traj, n_train=50, train_end=3.0, n_test=20, test_end=4.0)
    assert len(split.train) == 50 and len(split.test) == 20
    train_t = split.train_times()
    test_t = split.test_times()
    assert train_t[0] == 0.0 and np.all(train_t <= 3.0 + 1e-12)
    assert np.all(test_t > 3.0) and test_t[-1] == pytest.approx(4.0, abs=1e-12)
    for t in np.concatenate([train_t, test_t]):
        assert round(t / 0.01) == pytest.approx(t / 0.01, abs=1e-9)
    # sampled coordinates are grid truth, not interpolations
    idx = int(round(test_t[0] / traj.dt))
    np.testing.assert_array_equal(split.test[0].coords, traj.states[idx])


def test_make_split_snaps_to_nearest_grid_time():
    traj = integrate(lorenz(), [1.0, 1.0, 1.0], dt=0.01, t_end=4.0)
    split = make_split(traj, n_train=2, train_end=1.234, n_test=2, test_end=4.0)
    assert split.train_times()[-1] == pytest.approx(1.23, abs=1e-12)


def test_make_split_single_train_point():
    traj = integrate(lorenz(), [1.0, 1.0, 1.0], dt=0.01, t_end=4.0)
    split = make_split(traj, n_train=1, train_end=3.0, n_test=1, test_end=4.0)
    assert split.train_times()[0] == 0.0


def test_make_split_validation():
    traj = integrate(lorenz(), [1.0, 1.0, 1.0], dt=0.01, t_end=4.0)
    with pytest.raises(ValueError):
        make_split(traj, 50, 3.0, 20, 5.0)  # beyond the trajectory
    with pytest.raises(ValueError):
        make_split(traj, 0, 3.0, 20, 4.0)
    with pytest.raises(ValueError):
        make_split(traj, 50, 3.5, 20, 3.0)  # train past test


def test_trajectory_csv_round_trips_exactly(tmp_path):
    """17 significant digits round-trip every double exactly."""
    traj = integrate(lorenz(), [1.0, 1.0, 1.0], dt=0.01, t_end=0.5)
    path = tmp_path / "traj.csv"
    trajectory_to_csv(traj, path)
    lines = path.read_text().strip().split("\n")
    assert lines[0] == "t,x0,x1,x2"
    assert len(lines) == len(traj) + 1
    parsed = np.array([[float(v) for v in line.split(",")] for line in lines[1:]])
    assert np.array_equal(parsed[:, 0], traj.times)
    assert np.array_equal(parsed[:, 1:], traj.states)
