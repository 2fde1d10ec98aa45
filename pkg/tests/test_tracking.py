import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

from flockguide.errors import ConfigError, SingularCriticError
from flockguide.tracking import (
    TrackingParams,
    TrackingState,
    actor_policy,
    critic_value,
    initial_weights,
    push_error,
    target_policy,
    target_value,
    tracking_step,
    update_actor,
    update_critic,
    utility,
)

P = TrackingParams()
vec3 = arrays(np.float64, 3, elements=st.floats(-5, 5))


def test_push_error_shift_and_pad():
    assert push_error([1.0, 2.0, 3.0], 4.0).tolist() == [4.0, 1.0, 2.0]
    assert push_error(None, 0.7).tolist() == [0.7, 0.7, 0.7]
    w = [3.0, 2.0, 1.0]
    for _ in range(3):
        w = push_error(w, 0.0)
    assert w.tolist() == [0.0, 0.0, 0.0]


@pytest.mark.parametrize("E, u, expected", [([0, 0, 0], 0, 0.0), ([1, 0, 0], 0, 0.5), ([1, 1, 1], 2, 3.5)])
def test_utility_examples(E, u, expected):
    assert utility(E, u, P) == pytest.approx(expected)


def test_actor_examples():
    assert actor_policy([-1, 0, 0], [0.5, 0, 0]) == pytest.approx(-0.5)
    assert actor_policy([3, -2, 7], [0, 0, 0]) == 0.0
    assert actor_policy([0.2, -0.1, 0.05], [1, 2, -2]) == pytest.approx(-0.1)


def test_critic_examples():
    assert critic_value(np.eye(4), [0, 0, 0], 0) == 0.0
    assert critic_value(np.eye(4), [1, 1, 1], 1) == pytest.approx(2.0)
    assert critic_value(np.diag([2.0, 0, 0, 4]), [3, 0, 0], 1) == pytest.approx(11.0)


def _omega(uu, uE):
    W = np.eye(4)
    W[3, 3] = uu
    W[3, :3] = uE
    W[:3, 3] = uE
    return W


def test_target_policy_examples():
    assert target_policy(_omega(1.0, [0.5, 0, 0]), [2, 0, 0]) == pytest.approx(-1.0)
    assert target_policy(_omega(2.0, [1, 1, 0]), [1, 1, 1]) == pytest.approx(-1.0)
    assert target_policy(_omega(3.0, [1, 2, 3]), [0, 0, 0]) == 0.0


def test_target_policy_singular():
    with pytest.raises(SingularCriticError):
        target_policy(_omega(1e-9, [1, 0, 0]), [1, 0, 0])


def test_target_value_examples():
    assert target_value([0, 0, 0], 0, [0, 0, 0], 0, np.eye(4), P) == 0.0
    assert target_value([1, 0, 0], 0, [0, 0, 0], 0, np.eye(4), P) == pytest.approx(0.5)


def test_update_actor_examples():
    w = np.array([0.3, -0.2, 0.1])
    assert np.array_equal(update_actor(w, [1, 2, 3], 0.4, 0.4, 0.01), w)
    assert update_actor([0, 0, 0], [1, 0, 0], 1.0, 0.0, 0.01) == pytest.approx([-0.005, 0, 0])
    assert np.array_equal(update_actor(w, [0, 0, 0], 5.0, -5.0, 0.01), w)


def test_update_critic_examples():
    W = np.eye(4)
    assert np.array_equal(update_critic(W, [1, 2, 3, 4], 2.0, 2.0, 0.1), W)
    # error coefficient of 1 on z = e0
    out = update_critic(W, [1, 0, 0, 0], 1.0, 0.0, 0.1, gradient_consistent=True)
    expected = np.eye(4)
    expected[0, 0] = 0.9
    assert np.allclose(out, expected, atol=1e-15)
    assert np.array_equal(update_critic(W, [0, 0, 0, 0], 9.0, 0.0, 0.1), W)


def test_params_validation():
    with pytest.raises(ConfigError):
        TrackingParams(Q=((1, 0, 0), (0, -1, 0), (0, 0, 1)))
    with pytest.raises(ConfigError):
        TrackingParams(R=0.0)
    with pytest.raises(ConfigError):
        TrackingParams(rho_a=1.0)


def test_initial_weights_are_consistent():
    w, W = initial_weights(1.0, 2.0, 0.1)
    assert np.all(np.linalg.eigvalsh(W) > 0)
    E = np.array([0.3, -0.1, 0.2])
    assert target_policy(W, E) == pytest.approx(actor_policy(w, E))
    w0, W0 = initial_weights(0.0, 0.0, 0.1)
    assert np.array_equal(w0, np.zeros(3)) and np.array_equal(W0, np.eye(4))


def _random_pd(rng):
    A = rng.normal(size=(4, 4))
    return A @ A.T + 0.1 * np.eye(4)


def test_target_policy_is_argmin_over_grid():
    rng = np.random.default_rng(0)
    for _ in range(100):
        W = _random_pd(rng)
        E = rng.normal(size=3)
        u_star = target_policy(W, E)
        grid = u_star + np.linspace(-5, 5, 2001)
        vals = critic_value(W, np.broadcast_to(E, (len(grid), 3)), grid)
        assert critic_value(W, E, u_star) <= vals.min() + 1e-12


@pytest.mark.parametrize("gc", [False, True])
def test_omega_symmetric_after_many_updates(gc):
    rng = np.random.default_rng(1)
    W = np.eye(4)
    for _ in range(10_000):
        z = rng.normal(size=4) * 0.1
        W = update_critic(W, z, rng.normal(), rng.normal(), 1e-3, gradient_consistent=gc)
    assert np.array_equal(W, W.T)
    assert abs(W[3, 3]) >= 1e-6


@settings(max_examples=100)
@given(vec3, st.floats(-5, 5))
def test_zero_td_is_noop(E, u):
    W = np.eye(4)
    z = np.append(E, u)
    assert np.array_equal(update_critic(W, z, 1.25, 1.25, 0.5), W)
    w = np.array([0.1, 0.2, 0.3])
    assert np.array_equal(update_actor(w, E, u, u, 0.5, gradient_consistent=True), w)


def test_tracking_step_at_rest_is_noop():
    st_ = TrackingState.create(kp=1.0, kd=2.0, T=0.1)
    w0, W0 = st_.omega.copy(), st_.Omega.copy()
    u, st_ = tracking_step(st_, 0.0, 0.0, 0.0, 0.0, P)
    assert u == 0.0
    assert np.array_equal(st_.omega, w0) and np.array_equal(st_.Omega, W0)


def test_tracking_step_deterministic():
    outs = []
    for _ in range(2):
        s = TrackingState.create(kp=1.0, kd=2.0, T=0.1)
        u, s = tracking_step(s, 1.0, 0.0, 0.95, 0.0, P)
        outs.append((u, s.omega.copy(), s.Omega.copy()))
    assert outs[0][0] == outs[1][0]
    assert np.array_equal(outs[0][1], outs[1][1]) and np.array_equal(outs[0][2], outs[1][2])


def test_first_control_is_initial_policy_on_padded_window():
    s = TrackingState.create(kp=1.0, kd=2.0, T=0.1)
    w0 = s.omega.copy()
    u, _ = tracking_step(s, 2.0, 0.5, 2.0, 0.5, P)
    assert u == pytest.approx(w0 @ np.full(3, 1.5))


def test_single_agent_regulation():
    """Stationary leader at the origin, tracking term only, one axis."""
    T = 0.1
    s = TrackingState.create(kp=1.0, kd=2.0, T=T)
    p, q = 3.0, 0.0
    e0 = abs(p)
    s.observe(p)
    for _ in range(200):
        u = float(s.emit())
        p, q = p + T * q, float(np.clip(q + T * u, -10, 10))
        s.learn(p, P)
    assert abs(p) <= 0.05 * e0


def test_learn_mask_freezes_instances():
    s = TrackingState.create((2,), kp=1.0, kd=2.0, T=0.1)
    s.observe(np.array([1.0, 1.0]))
    before = s.Omega.copy()
    s.learn(np.array([0.9, 0.9]), P, mask=np.array([True, False]))
    assert np.array_equal(s.Omega[1], before[1])
    assert not np.array_equal(s.Omega[0], before[0])
    assert s.updates == 1
