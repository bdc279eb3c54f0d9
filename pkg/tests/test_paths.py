import numpy as np
import pytest
from scipy.integrate import quad

from fluxldp import (
    GridPath,
    JumpPath,
    TiltProtocol,
    ValidationError,
    parse_network,
    philox_stream,
    simulate,
)

NET = parse_network("0 -> A @ const(1.0); A -> 0 @ ma(2.0)")


def _toy_path():
    times = np.array([0.4, 0.9, 1.5])
    reactions = np.array([0, 0, 1])
    return JumpPath(10, np.array([10]), times, reactions, 2.0, NET.gamma_matrix)


def test_eval_before_first_event():
    path = _toy_path()
    c, w = path.eval(0.2)
    assert c.tolist() == [1.0]
    assert w.tolist() == [0.0, 0.0]


def test_eval_right_continuous_at_jump():
    path = _toy_path()
    c, w = path.eval(0.4)
    assert w.tolist() == [0.1, 0.0]
    assert c.tolist() == [1.1]


def test_continuity_equation_exact_on_simulated_path():
    path = simulate(NET, 50, np.array([50]), 1.5, seed=9)
    for t in np.linspace(0.0, 1.5, 23):
        c, w = path.eval(float(t))
        assert np.array_equal(c, path.c0 / 50 + path.gamma_matrix.T @ w)


def test_eval_outside_horizon_rejected():
    with pytest.raises(ValidationError):
        _toy_path().eval(2.5)


def test_invariant_checks_reject_bad_paths():
    with pytest.raises(ValidationError):
        JumpPath(10, np.array([10]), np.array([0.5, 0.5]), np.array([0, 0]), 1.0, NET.gamma_matrix)
    with pytest.raises(ValidationError):
        JumpPath(10, np.array([0]), np.array([0.5]), np.array([1]), 1.0, NET.gamma_matrix)


def test_to_grid_empty_events_constant():
    path = JumpPath(10, np.array([7]), np.array([]), np.array([]), 1.0, NET.gamma_matrix)
    grid = path.to_grid(8)
    assert np.all(grid.w == 0.0)
    assert np.all(grid.c == 0.7)
    assert grid.meta["tv"] == 0.0


def test_to_grid_single_event_forward_difference():
    # one event in one cell: the forward difference there is 1/(V dt)
    path = JumpPath(10, np.array([10]), np.array([0.55]), np.array([0]), 1.0, NET.gamma_matrix)
    grid = path.to_grid(10)
    fwd = np.diff(grid.w[:, 0]) / grid.dt
    assert fwd[5] == pytest.approx(1.0 / (10 * grid.dt))
    assert np.count_nonzero(fwd) == 1


def test_to_grid_refinement_consistent():
    path = simulate(NET, 30, np.array([30]), 1.0, seed=4)
    coarse = path.to_grid(10)
    fine = path.to_grid(40)
    assert np.allclose(coarse.w, fine.w[::4])
    assert coarse.meta["tv"] == fine.meta["tv"] == path.n_events / 30


def test_jump_path_json_roundtrip():
    path = simulate(NET, 25, np.array([25]), 1.0, seed=13)
    data = path.to_json()
    assert set(data) == {"V", "c0", "T", "events"}
    again = JumpPath.from_json(data, NET)
    assert np.array_equal(again.times, path.times)
    assert np.array_equal(again.reactions, path.reactions)
    assert again.volume == path.volume


def test_jump_path_binary_roundtrip():
    path = simulate(NET, 25, np.array([25]), 1.0, seed=13)
    blob = path.to_binary()
    again = JumpPath.from_binary(blob, NET)
    assert np.array_equal(again.times, path.times)
    assert np.array_equal(again.reactions, path.reactions)
    assert np.array_equal(again.c0, path.c0)
    assert again.horizon == path.horizon


def test_gridpath_csv_roundtrip():
    times = np.linspace(0, 1, 5)
    c = np.column_stack([np.exp(-times)])
    w = np.column_stack([times, times**2])
    path = GridPath(times, c, w)
    text = path.to_csv(species=["A"], comments=["hello"])
    assert text.splitlines()[1] == "t,c:A,w:0,w:1"
    again = GridPath.from_csv(text)
    assert np.array_equal(again.times, path.times)
    assert np.array_equal(again.c, path.c)
    assert np.array_equal(again.w, path.w)


def test_gridpath_json_roundtrip():
    times = np.linspace(0, 1, 4)
    path = GridPath(times, np.ones((4, 1)), np.zeros((4, 2)), meta={"tv": 0.5})
    again = GridPath.from_json(path.to_json())
    assert again.meta["tv"] == 0.5
    assert np.array_equal(again.w, path.w)


def test_gridpath_requires_uniform_grid():
    with pytest.raises(ValidationError):
        GridPath(np.array([0.0, 0.1, 0.5]), np.zeros((3, 1)), np.zeros((3, 1)))


def test_centered_differences_linear_exact():
    times = np.linspace(0, 1, 11)
    w = np.column_stack([3.0 * times])
    path = GridPath(times, np.zeros((11, 1)), w)
    assert np.allclose(path.deriv_w(), 3.0)


def test_tilt_eval_piecewise_linear():
    tilt = TiltProtocol(np.array([0.0, 1.0, 2.0]), np.array([[0.0], [2.0], [0.0]]))
    assert tilt.eval(0.5)[0] == pytest.approx(1.0)
    assert tilt.eval(1.75)[0] == pytest.approx(0.5)
    many = tilt.eval(np.array([0.0, 1.0, 2.0]))
    assert np.allclose(many[:, 0], [0.0, 2.0, 0.0])


def test_tilt_constant_value_detection():
    assert TiltProtocol.constant(np.array([0.3, -0.1]), 1.0).constant_value() is not None
    varying = TiltProtocol(np.array([0.0, 1.0]), np.array([[0.0], [1.0]]))
    assert varying.constant_value() is None


def test_tilt_compact_support_validation():
    times = np.linspace(0, 1, 11)
    zeta = np.ones((11, 1))
    with pytest.raises(ValidationError):
        TiltProtocol(times, zeta, compact_support=True, support_margin=0.2)
    zeta[:3] = 0.0
    zeta[-3:] = 0.0
    TiltProtocol(times, zeta, compact_support=True, support_margin=0.2)


def test_tilt_exp_integral_matches_quadrature():
    rng = philox_stream(77)
    times = np.linspace(0, 1.5, 16)
    zeta = rng.normal(0, 0.8, size=(16, 2))
    tilt = TiltProtocol(times, zeta)

    def z_interp(t, r):
        return np.interp(t, times, zeta[:, r])

    pairs = [(0.0, 1.5), (0.13, 0.35), (0.7, 1.41), (0.0, 0.05)]
    los = np.array([p[0] for p in pairs])
    his = np.array([p[1] for p in pairs])
    got = tilt.integrate_exp(los, his)
    for i, (a, b) in enumerate(pairs):
        # quadrature oracle applied piecewise so no kink sits inside a panel
        cuts = np.concatenate([[a], times[(times > a) & (times < b)], [b]])
        for r in range(2):
            expected = sum(
                quad(lambda t: np.exp(z_interp(t, r)), lo, hi, epsabs=1e-13, epsrel=1e-12)[0]
                for lo, hi in zip(cuts[:-1], cuts[1:])
            )
            assert got[i, r] == pytest.approx(expected, rel=1e-9, abs=1e-12)


def test_species_tilt_projects_through_gamma():
    tilt = TiltProtocol.from_species_tilt(NET, np.array([0.7]), 1.0)
    # gamma = (+1, -1): per-reaction tilt is (0.7, -0.7)
    assert np.allclose(tilt.eval(0.5), [0.7, -0.7])
