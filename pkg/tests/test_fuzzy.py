import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

from flockguide.errors import ConfigError
from flockguide.fuzzy import (
    PairFuzzyUnit,
    RuleGeometry,
    SeparationParams,
    TriangularMembership,
    aggregate_separation,
    critic_value_S,
    defuzzify,
    firing_strengths,
    fuzzy_input,
    membership,
    memberships,
    reward,
    separation_step,
    td_error,
    update_pair_actor,
    update_pair_critic,
)

G = RuleGeometry()
LITERAL = RuleGeometry.symmetric(offset=1.5)


def onehot(p, n=5):
    v = np.zeros(n)
    v[p] = 1.0
    return v


def test_fuzzy_input_examples():
    assert fuzzy_input(5, 3, 2) == 0.0
    assert fuzzy_input(0, 0, 2) == -2.0
    assert fuzzy_input(20, 0, 2) == 7.5
    assert fuzzy_input(0, 20, 2) == 7.5


def test_membership_examples():
    mf = TriangularMembership(0.0, 3.0, 3.0)
    assert membership(mf, 0.0) == 1.0
    assert membership(mf, -3.0) == 0.0
    assert membership(mf, 1.5) == pytest.approx(0.5)
    assert membership(mf, 4.0) == 0.0
    with pytest.raises(ConfigError):
        TriangularMembership(0.0, 0.0, 1.0)


def test_geometry_validation():
    with pytest.raises(ConfigError):
        RuleGeometry.symmetric((0.0,), 1.0)
    with pytest.raises(ConfigError):
        RuleGeometry.symmetric((0.0, 0.0), 1.0)


def test_firing_examples():
    assert np.array_equal(firing_strengths(LITERAL, 3.0), onehot(3))
    assert firing_strengths(G, 1.5) == pytest.approx([0, 0, 0.5, 0.5, 0])
    # dead zone of the literal geometry: 1.6 is nearest to 3
    assert np.array_equal(firing_strengths(LITERAL, 1.6), onehot(3))
    # equidistant from 0 and 3: lower center wins
    assert np.array_equal(firing_strengths(LITERAL, 1.5), onehot(2))


@settings(max_examples=200)
@given(st.floats(-7.5, 7.5))
def test_dead_zone_fallback_picks_nearest(x):
    psi = firing_strengths(LITERAL, x)
    assert psi.sum() == pytest.approx(1.0)
    if memberships(LITERAL, x).sum() <= 1e-12:
        d = np.abs(np.array(LITERAL.centers) - x)
        assert np.argmax(psi) == int(np.argmin(d))


def test_partition_of_unity_on_universe_grid():
    grid = np.linspace(-7.5, 7.5, 1000)
    psi = firing_strengths(G, grid)
    assert np.max(np.abs(psi.sum(axis=-1) - 1.0)) < 1e-9
    # raw memberships already sum to 1 between the outer centers
    inner = grid[(grid >= -6) & (grid <= 6)]
    assert np.max(np.abs(memberships(G, inner).sum(axis=-1) - 1.0)) < 1e-9


def test_defuzzify_examples():
    assert defuzzify(onehot(1), [5, 7, 9, 1, 2]) == 7
    assert defuzzify([0.1, 0.2, 0.3, 0.4, 0.0], [2.5] * 5) == pytest.approx(2.5)
    assert defuzzify([0.5, 0.5, 0, 0, 0], [2, -2, 0, 0, 0]) == 0.0


@settings(max_examples=1000)
@given(
    arrays(np.float64, 5, elements=st.floats(0, 1)).filter(lambda a: a.sum() > 1e-6),
    arrays(np.float64, 5, elements=st.floats(-100, 100)),
)
def test_defuzzify_is_bounded_by_consequents(w, phi):
    psi = w / w.sum()
    out = defuzzify(psi, phi)
    assert phi.min() - 1e-9 <= out <= phi.max() + 1e-9


def test_reward_examples():
    assert reward(0.0, 2.0) == 3.0
    assert reward(1.0, 2.0) == -1.0
    assert reward(-1.0, 2.0) == -1.5


def test_reward_unique_maximum():
    grid = np.round(np.arange(-7500, 7501) * 1e-3, 12)
    r = reward(grid, 2.0)
    best = np.flatnonzero(r == r.max())
    assert len(best) == 1 and grid[best[0]] == 0.0


def test_critic_S_examples():
    assert critic_value_S(onehot(2), [1, 2, 3, 4, 5]) == 3
    assert critic_value_S([0.2] * 5, np.zeros(5)) == 0.0
    assert critic_value_S([0.25, 0.75, 0, 0, 0], [4, 0, 0, 0, 0]) == pytest.approx(1.0)


def test_td_examples():
    assert td_error(4.0, 3.0, 1.0) == 0.0
    assert td_error(1.0, 3.0, 0.0) == -2.0
    assert td_error(0.0, -1.5, 0.5) == 1.0


def test_actor_update_examples():
    phi = np.zeros(5)
    assert np.array_equal(update_pair_actor(phi, onehot(2), 0.0, 0.1), phi)
    assert update_pair_actor(phi, onehot(2), 0.7, 0.1) == pytest.approx([0, 0, -0.1, 0, 0])
    assert update_pair_actor(phi, onehot(2), -0.7, 0.1) == pytest.approx([0, 0, 0.1, 0, 0])


def test_critic_update_examples():
    Phi = np.zeros(5)
    assert np.array_equal(update_pair_critic(Phi, onehot(0), 0.0, 0.05), Phi)
    assert update_pair_critic(Phi, onehot(0), 2.0, 0.05) == pytest.approx([-0.1, 0, 0, 0, 0])
    psi = np.array([0.3, 0.7, 0, 0, 0])
    d1 = update_pair_critic(Phi, psi, 1.3, 0.05) - Phi
    d2 = update_pair_critic(Phi, psi, -1.3, 0.05) - Phi
    assert np.array_equal(d1, -d2)


@settings(max_examples=200)
@given(st.floats(-7.5, 7.5), st.floats(-100, 100))
def test_actor_step_l1_bounded(x, td):
    psi = firing_strengths(G, x)
    step = update_pair_actor(np.zeros(5), psi, td, 0.1)
    assert np.abs(step).sum() <= 0.1 + 1e-15


def test_aggregate_examples():
    assert aggregate_separation([0.4]) == pytest.approx(0.4)
    assert aggregate_separation([0.4, -0.4]) == 0.0
    assert aggregate_separation([0.19] * 19) == pytest.approx(0.19)
    assert aggregate_separation([0.4, 9.0], [True, False]) == pytest.approx(0.4)
    assert aggregate_separation([1.0, 2.0], [False, False]) == 0.0


def test_pair_at_safety_distance():
    unit = PairFuzzyUnit.create(1, 2, 0)
    u, unit, td = separation_step(unit, 0.0, 0.0, SeparationParams())
    assert u == 0.0 and td == -3.0
    assert unit.Phi == pytest.approx([0, 0, 0.15, 0, 0])
    assert unit.phi == pytest.approx([0, 0, 0.1, 0, 0])


def test_frozen_unit_only_emits():
    unit = PairFuzzyUnit.create(1, 2, 0)
    unit.phi[:] = [1, 2, 3, 4, 5]
    unit.frozen = True
    u, unit, _ = separation_step(unit, 1.5, 0.0, SeparationParams())
    assert u == pytest.approx(3.5)
    assert unit.phi.tolist() == [1, 2, 3, 4, 5] and not unit.Phi.any()


def test_pair_unit_needs_distinct_agents():
    with pytest.raises(ConfigError):
        PairFuzzyUnit.create(3, 3, 0)


def test_separation_params_validation():
    with pytest.raises(ConfigError):
        SeparationParams(d=-1.0)
    with pytest.raises(ConfigError):
        SeparationParams(alpha_a=0.0)
