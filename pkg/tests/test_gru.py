import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from contime.gru import (
    GruCellParams,
    LagState,
    ShapeError,
    gate_derivatives,
    gate_states,
    hidden_derivative,
    hidden_state,
    vector_field,
)


def random_cell(rng, H=3, F=2, scale=1.0):
    p = GruCellParams.init(H, F, rng)
    return GruCellParams(**{k: v * scale + 0.1 * rng.normal(size=v.shape) for k, v in vars(p).items()})


def smooth_inputs(rng, H=3, F=2):
    """x(t), h_lag(t) and their exact derivatives along sinusoids."""
    wx, px = rng.uniform(0.5, 2, F), rng.uniform(0, 6, F)
    wh, ph, ah = rng.uniform(0.5, 2, H), rng.uniform(0, 6, H), rng.uniform(0.2, 1.0, H)

    def x(t):
        return np.sin(wx * t + px)

    def dx(t):
        return wx * np.cos(wx * t + px)

    def h(t):
        return ah * np.sin(wh * t + ph)

    def dh(t):
        return ah * wh * np.cos(wh * t + ph)

    return x, dx, h, dh


def test_zero_params_give_neutral_gates():
    p = GruCellParams.zeros(3, 2)
    lag = LagState(np.array([0.3, -0.2, 0.9]), np.zeros(3))
    s = gate_states(p, np.array([1.0, -1.0]), lag)
    np.testing.assert_array_equal(s.z, 0.5)
    np.testing.assert_array_equal(s.r, 0.5)
    np.testing.assert_array_equal(s.g, 0.0)
    np.testing.assert_array_equal(s.zeta, lag.h_lag)


def test_update_gate_saturates():
    p = GruCellParams.zeros(2, 1)
    p.b_z = np.full(2, 20.0)
    s = gate_states(p, np.array([0.4]), LagState(np.zeros(2), np.zeros(2)))
    assert np.all(np.abs(s.z - 1.0) < 1e-8)


def test_gate_ranges_random():
    rng = np.random.default_rng(0)
    p = random_cell(rng)
    s = gate_states(p, rng.normal(size=2), LagState(rng.normal(size=3), rng.normal(size=3)))
    assert np.all((s.z > 0) & (s.z < 1)) and np.all((s.r > 0) & (s.r < 1))
    assert np.all((s.g > -1) & (s.g < 1))


@settings(max_examples=100, deadline=None)
@given(st.integers(0, 10_000), st.floats(0.1, 30.0))
def test_gate_ranges_property(seed, magnitude):
    rng = np.random.default_rng(seed)
    p = random_cell(rng, scale=magnitude)
    s = gate_states(p, magnitude * rng.normal(size=2), LagState(rng.normal(size=3), rng.normal(size=3)))
    assert np.all((s.z >= 0) & (s.z <= 1)) and np.all((s.r >= 0) & (s.r <= 1))
    assert np.all((s.g >= -1) & (s.g <= 1))
    np.testing.assert_allclose(s.z, 1 / (1 + np.exp(-s.A)), rtol=1e-15, atol=0)


def test_constant_inputs_have_zero_derivatives():
    rng = np.random.default_rng(1)
    p = random_cell(rng)
    lag = LagState(rng.normal(size=3), np.zeros(3))
    x = rng.normal(size=2)
    d = gate_derivatives(p, x, np.zeros(2), lag, gate_states(p, x, lag))
    for v in d:
        np.testing.assert_array_equal(v, 0.0)


def test_scalar_update_gate_slope():
    p = GruCellParams.zeros(1, 1)
    p.W_z = np.array([[1.0]])
    lag = LagState(np.zeros(1), np.zeros(1))
    x = np.zeros(1)
    d = gate_derivatives(p, x, np.array([1.0]), lag, gate_states(p, x, lag))
    assert d.dz_dt[0] == 0.25


def test_hidden_derivative_special_cases():
    rng = np.random.default_rng(2)
    v = lambda: rng.normal(size=3)  # noqa: E731
    from contime.gru import GateDerivatives, GateState

    zeta, dz, dg, dh_lag = v(), v(), v(), v()
    gates = GateState(*(v() for _ in range(3)), np.zeros(3), v(), v(), zeta)
    out = hidden_derivative(gates, GateDerivatives(dz, dg, v()), LagState(v(), dh_lag))
    np.testing.assert_allclose(out, dz * zeta + dg)

    gates = gates._replace(z=np.ones(3))
    out = hidden_derivative(gates, GateDerivatives(np.zeros(3), np.zeros(3), v()), LagState(v(), dh_lag))
    np.testing.assert_array_equal(out, dh_lag)


@pytest.mark.parametrize("seed", range(5))
def test_derivatives_match_finite_differences(seed):
    rng = np.random.default_rng(seed)
    p = random_cell(rng)
    x, dx, h, dh = smooth_inputs(rng)
    eps = 1e-5

    def rel(a, b):
        return np.max(np.abs(a - b) / np.maximum(np.maximum(np.abs(a), np.abs(b)), 1e-6))

    for t in rng.uniform(-2, 2, 10):
        lag = LagState(h(t), dh(t))
        gates = gate_states(p, x(t), lag)
        d = gate_derivatives(p, x(t), dx(t), lag, gates)
        hi = gate_states(p, x(t + eps), LagState(h(t + eps), dh(t + eps)))
        lo = gate_states(p, x(t - eps), LagState(h(t - eps), dh(t - eps)))
        assert rel(d.dz_dt, (hi.z - lo.z) / (2 * eps)) < 1e-4
        assert rel(d.dg_dt, (hi.g - lo.g) / (2 * eps)) < 1e-4
        assert rel(d.dr_dt, (hi.r - lo.r) / (2 * eps)) < 1e-4
        h_hi = hidden_state(hi, LagState(h(t + eps), None))
        h_lo = hidden_state(lo, LagState(h(t - eps), None))
        assert rel(hidden_derivative(gates, d, lag), (h_hi - h_lo) / (2 * eps)) < 1e-4


def test_shape_errors():
    p = GruCellParams.zeros(3, 2)
    with pytest.raises(ShapeError):
        gate_states(p, np.zeros(4), LagState(np.zeros(3), np.zeros(3)))
    with pytest.raises(ShapeError):
        gate_states(p, np.zeros(2), LagState(np.zeros(5), np.zeros(3)))
    bad = GruCellParams.zeros(3, 2)
    bad.U_g = np.zeros((3, 2))
    with pytest.raises(ShapeError):
        bad.validate()


def lipschitz_bound(p: GruCellParams, dx, dh_lag, eta: float) -> float:
    """Sup of ||d(dh/dt)/d(h_lag)||_2 over ||h_lag||_2 <= eta, from weight norms.

    Uses |sigma'| <= 1/4, |sigma''| <= 1/(6 sqrt 3), |tanh''| <= 4/(3 sqrt 3)
    and |z|, |r|, |g| <= 1; the Jacobians of the pre-activation slopes
    dA/dt and dC/dt vanish because they are linear in the fixed dh_lag.
    """
    n = lambda M: np.linalg.norm(M, 2)  # noqa: E731
    s1, s2, t2 = 0.25, 1 / (6 * np.sqrt(3)), 4 / (3 * np.sqrt(3))
    X, D = np.linalg.norm(dx), np.linalg.norm(dh_lag)
    a = n(p.W_z) * X + n(p.U_z) * D
    c = n(p.W_r) * X + n(p.U_r) * D
    J_r, J_dr, dr = s1 * n(p.U_r), s2 * c * n(p.U_r), s1 * c
    J_B = n(p.U_g) * (1 + eta * J_r)
    dB = n(p.W_g) * X + n(p.U_g) * (dr * eta + D)
    J_dB = n(p.U_g) * (eta * J_dr + dr + D * J_r)
    J_dg = t2 * dB * J_B + J_dB
    J_z, J_dz, dz = s1 * n(p.U_z), s2 * a * n(p.U_z), s1 * a
    J_zeta, zeta = 1 + J_B, eta + 1
    return zeta * J_dz + dz * J_zeta + (D + dB) * J_z + J_dg


def test_field_is_lipschitz_in_lagged_state():
    rng = np.random.default_rng(7)
    worst = 0.0
    for _ in range(20):
        p = random_cell(rng)
        dx, dh_lag = rng.normal(size=2), rng.normal(size=3)
        x = rng.normal(size=2)
        K = lipschitz_bound(p, dx, dh_lag, eta=1.0)
        for _ in range(50):
            h1, h2 = (v / max(1.0, np.linalg.norm(v)) for v in rng.normal(size=(2, 3)))
            f1 = vector_field(p, x, dx, LagState(h1, dh_lag))
            f2 = vector_field(p, x, dx, LagState(h2, dh_lag))
            ratio = np.linalg.norm(f1 - f2) / np.linalg.norm(h1 - h2)
            assert ratio <= K
            worst = max(worst, ratio / K)
    assert worst > 0
