import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from qalloc import agent as agent_mod
from qalloc.agent import (
    Agent,
    Experience,
    ReplayBuffer,
    act,
    exp_replay,
    explore_long,
    explore_long_short,
    normalize_long_short,
    replay_batch,
    softmax,
    weights_from_q,
)
from qalloc.config import Config
from qalloc.environment import RewardVector, State
from qalloc.qnet import QNetwork, init_network
from qalloc.weights import Regime, WeightVector


def make_exp(t, features, rewards, n=None):
    rewards = np.asarray(rewards, dtype=float)
    n = n or rewards.size
    features = np.asarray(features, dtype=float)
    action = WeightVector(np.full(n, 1.0 / n), Regime.LONG_ONLY)
    return Experience(
        State(t, features), action, State(t + 1, features + 1.0),
        RewardVector(rewards, float(action.weights @ rewards)),
    )


def tagged(k):
    # an experience whose identity is readable from its first feature
    return make_exp(k, [float(k), 0.0], [0.0, 0.0])


def zero_net(dims):
    return QNetwork(dims, 0, [np.zeros((a, b)) for a, b in zip(dims, dims[1:])],
                    [np.zeros(b) for b in dims[1:]])


# -------------------------------------------------------------- exploration


def test_explore_long_simplex(rng):
    for n in (1, 2, 5, 28):
        w = explore_long(rng, n).weights
        assert w.sum() == pytest.approx(1.0, abs=1e-9)
        assert np.all(w >= 0)


def test_explore_long_single_asset(rng):
    assert explore_long(rng, 1).weights.tolist() == [1.0]


def test_explore_long_monte_carlo_mean(rng):
    draws = np.stack([explore_long(rng, 4).weights for _ in range(100_000)])
    np.testing.assert_allclose(draws.mean(axis=0), 0.25, atol=0.01)


def test_long_short_l1_example():
    w = normalize_long_short(np.array([-0.5, 1.5]))
    np.testing.assert_allclose(w.weights, [-0.25, 0.75], rtol=1e-15)


def test_long_short_positive_draw_coincides_with_long():
    raw = np.array([0.2, 0.5, 0.3])
    np.testing.assert_array_equal(normalize_long_short(raw).weights, raw / raw.sum())


def test_long_short_gross_exposure_over_many_draws(rng):
    worst = max(abs(np.abs(explore_long_short(rng, 5).weights).sum() - 1) for _ in range(100_000))
    assert worst <= 1e-9


def test_signed_normalization_sums_to_one_and_zero_sum_is_refused():
    w = normalize_long_short(np.array([-0.5, 1.5]), "signed")
    assert w.regime is Regime.FULLY_INVESTED
    np.testing.assert_allclose(w.weights, [-0.5, 1.5])
    assert normalize_long_short(np.array([1.0, -1.0]), "signed") is None
    with pytest.raises(ValueError):
        normalize_long_short(np.array([1.0]), "bogus")


# --------------------------------------------------------------- exploiting


def test_equal_q_gives_equal_weights():
    np.testing.assert_allclose(weights_from_q(np.full(7, 0.3), Regime.LONG_ONLY).weights, 1 / 7, rtol=1e-15)


def test_long_short_q_mapping():
    np.testing.assert_array_equal(weights_from_q(np.array([1.0, -1.0]), Regime.LONG_SHORT).weights,
                                  [0.5, -0.5])


def test_all_zero_q_long_short_falls_back_to_equal():
    np.testing.assert_array_equal(weights_from_q(np.zeros(4), Regime.LONG_SHORT).weights, 0.25)


@given(st.lists(st.floats(-50, 50), min_size=1, max_size=30), st.floats(-100, 100))
@settings(max_examples=300, deadline=None)
def test_softmax_shift_invariance(q, c):
    q = np.array(q)
    np.testing.assert_allclose(softmax(q + c), softmax(q), atol=1e-12)


@given(st.lists(st.floats(-5, 5), min_size=2, max_size=30, unique=True))
@settings(max_examples=300, deadline=None)
def test_long_only_exploit_preserves_argmax(q):
    q = np.array(q)
    w = weights_from_q(q, Regime.LONG_ONLY).weights
    assert w[np.argmax(q)] == w.max()


def test_temperature_sharpens_without_reordering():
    q = np.array([1e-3, 0.0, -2e-3])
    flat, sharp = softmax(q), softmax(q, temperature=1e-3)
    assert np.argsort(flat).tolist() == np.argsort(sharp).tolist()
    assert sharp.max() > flat.max()


def test_non_finite_q_raises(rng):
    net = init_network([8, 2], seed=0)
    net.biases[-1][0] = np.nan
    with pytest.raises(FloatingPointError):
        agent_mod.exploit(net, State(0, rng.normal(size=8)), Regime.LONG_ONLY)


# ------------------------------------------------------------------- acting


def test_epsilon_one_matches_explore_stream():
    net = init_network([8, 2], seed=0)
    state = State(0, np.zeros(8))
    a, b = np.random.default_rng(3), np.random.default_rng(3)
    for _ in range(50):
        w = act(net, state, 1.0, a, Regime.LONG_ONLY)
        b.random()  # the coin flip
        np.testing.assert_array_equal(w.weights, explore_long(b, 2).weights)


def test_epsilon_zero_is_deterministic(rng):
    net = init_network([8, 2], seed=0)
    state = State(0, rng.normal(size=8))
    first = act(net, state, 0.0, rng, Regime.LONG_ONLY)
    for _ in range(20):
        assert act(net, state, 0.0, rng, Regime.LONG_ONLY) == first


def test_epsilon_half_explore_fraction(rng, monkeypatch):
    calls = []
    stub = WeightVector([0.5, 0.5], Regime.LONG_ONLY)
    monkeypatch.setattr(agent_mod, "explore", lambda *a, **k: calls.append(1) or stub)
    net = init_network([8, 2], seed=0)
    state = State(0, np.zeros(8))
    for _ in range(10_000):
        act(net, state, 0.5, rng, Regime.LONG_ONLY)
    assert len(calls) / 10_000 == pytest.approx(0.5, abs=0.02)


def test_act_rejects_bad_epsilon(rng):
    with pytest.raises(ValueError):
        act(init_network([8, 2], seed=0), State(0, np.zeros(8)), 1.5, rng, Regime.LONG_ONLY)


@pytest.mark.parametrize("regime", [Regime.LONG_ONLY, Regime.LONG_SHORT])
def test_mixed_calls_respect_regime(regime):
    rng = np.random.default_rng(5)
    net = init_network([35, 8, 5], seed=1)
    states = [State(0, rng.normal(size=35)) for _ in range(50)]
    for k in range(2_000):
        w = act(net, states[k % 50], 0.5, rng, regime).weights
        if regime is Regime.LONG_ONLY:
            assert np.all(w >= 0) and abs(w.sum() - 1) <= 1e-9
        else:
            assert abs(np.abs(w).sum() - 1) <= 1e-9


# ------------------------------------------------------------------- replay


def test_experience_must_span_one_step():
    with pytest.raises(ValueError):
        Experience(State(3, np.zeros(2)), WeightVector([1.0], Regime.LONG_ONLY),
                   State(5, np.zeros(2)), RewardVector(np.zeros(1), 0.0))


def test_buffer_evicts_oldest_after_33_pushes():
    buf = ReplayBuffer(32)
    for k in range(33):
        buf.push(tagged(k))
    assert [e.prev_state.t for e in buf] == list(range(1, 33))
    assert buf.full and len(buf) == 32


def test_push_then_read_preserves_order():
    buf = ReplayBuffer(32)
    for k in (4, 1, 9):
        buf.push(tagged(k))
    assert [e.prev_state.t for e in buf.entries()] == [4, 1, 9]


def test_buffer_matches_queue_model(rng):
    buf, model = ReplayBuffer(32), []
    for k in range(100):
        buf.push(tagged(k))
        model.append(k)
        expected = model[-min(len(model), 32):]
        assert [e.prev_state.t for e in buf] == expected


def test_replay_waits_for_full_buffer():
    net = init_network([2, 2], seed=0)
    buf = ReplayBuffer(4)
    before = net.get_flat()
    for k in range(3):
        buf.push(make_exp(k, [0.1, 0.2], [0.01, -0.02]))
        assert exp_replay(buf, net, 0.1) is None
    np.testing.assert_array_equal(net.get_flat(), before)
    buf.push(make_exp(3, [0.1, 0.2], [0.01, -0.02]))
    assert exp_replay(buf, net, 0.1) is not None


def test_gamma_zero_targets_are_rewards(rng):
    buf = ReplayBuffer(5)
    rewards = rng.normal(size=(5, 3))
    for k in range(5):
        buf.push(make_exp(k, rng.normal(size=4), rewards[k]))
    batch = replay_batch(buf, init_network([4, 3], seed=0), gamma=0.0)
    np.testing.assert_array_equal(batch.targets, rewards)


def test_zero_rewards_zero_net_zero_loss():
    buf = ReplayBuffer(3)
    for k in range(3):
        buf.push(make_exp(k, [1.0, -2.0], [0.0, 0.0]))
    assert exp_replay(buf, zero_net([2, 4, 2]), 0.1) == 0.0


def test_gamma_bootstrap_two_experiences():
    # linear net q(s) = s @ W with W = [[1, 0], [0, 2]], no bias
    net = QNetwork([2, 2], 0, [np.array([[1.0, 0.0], [0.0, 2.0]])], [np.zeros(2)])
    buf = ReplayBuffer(2)
    buf.push(make_exp(0, [0.0, 1.0], [0.1, -0.1]))   # next state (1, 2) -> q (1, 4)
    buf.push(make_exp(1, [2.0, -1.0], [0.0, 0.5]))   # next state (3, 0) -> q (3, 0)
    batch = replay_batch(buf, net, gamma=0.9)
    np.testing.assert_allclose(batch.targets, [[0.1 + 3.6, -0.1 + 3.6], [2.7, 0.5 + 2.7]], rtol=1e-15)


# ------------------------------------------------------------ agent wrapper


def test_epsilon_schedule_non_increasing_and_floored():
    cfg = Config()
    eps = [cfg.epsilon(k) for k in range(2000)]
    assert eps[0] == 1.0
    assert all(b <= a for a, b in zip(eps, eps[1:]))
    assert eps[-1] == cfg.epsilon_floor


def test_agent_runs_are_seed_deterministic(rng):
    states = [State(k, rng.normal(size=8)) for k in range(60)]
    rewards = rng.normal(scale=0.01, size=(60, 2))

    def run():
        ag = Agent(init_network([8, 4, 2], seed=9), np.random.default_rng(77), "LongOnly",
                   buffer_capacity=8, learning_rate=0.05)
        actions, losses = [], []
        for k in range(59):
            w = ag.act(states[k], 0.5)
            actions.append(w.weights.tobytes())
            ag.remember(Experience(states[k], w, states[k + 1],
                                   RewardVector(rewards[k], float(w.weights @ rewards[k]))))
            losses.append(ag.replay())
        return actions, losses, ag.net.get_flat()

    a, b = run(), run()
    assert a[0] == b[0] and a[1] == b[1]
    np.testing.assert_array_equal(a[2], b[2])
    assert a[1][:7] == [None] * 7 and a[1][7] is not None


def test_agent_action_regime():
    net = init_network([8, 2], seed=0)
    rng = np.random.default_rng(0)
    assert Agent(net, rng, "LongShort").action_regime is Regime.LONG_SHORT
    assert Agent(net, rng, "LongShort", norm="signed").action_regime is Regime.FULLY_INVESTED
    assert Agent(net, rng, "LongOnly").action_regime is Regime.LONG_ONLY


def test_buffer_rejects_zero_capacity():
    with pytest.raises(ValueError):
        ReplayBuffer(0)
