import numpy as np
import pytest

from socdiff import env
from socdiff.adversary import AttackSpec
from socdiff.graph import make_graph
from socdiff.neuralnet import AgentNet, StackedNets, forward_sequence, init_params
from socdiff.rollout import choose_actions, epsilon_greedy, play_greedy, run_episode
from socdiff.rng import stream


def population(graph, seed=0, scale=0.3):
    nets = []
    for i in range(graph.n_agents):
        net = init_params(graph.input_dim(i), 12, stream(seed, f"p/{i}"))
        net.params[:] += stream(seed, f"q/{i}").normal(0, scale, net.params.size)
        nets.append(net)
    return nets


def test_epsilon_one_is_uniform():
    q = np.tile([5.0, -5.0], (20000, 1))
    a = epsilon_greedy(q, 1.0, np.random.default_rng(0))
    assert abs(a.mean() - 0.5) < 0.02


def test_greedy_and_ties():
    rng = np.random.default_rng(1)
    assert epsilon_greedy([0.1, 0.2], 0.0, rng) == 1
    assert epsilon_greedy([0.3, 0.2], 0.0, rng) == 0
    ties = epsilon_greedy(np.zeros((20000, 2)), 0.0, rng)
    assert abs(ties.mean() - 0.5) < 0.02
    with pytest.raises(ValueError):
        epsilon_greedy([0.0, 1.0], 1.5, rng)


def test_non_greedy_frequency_is_half_epsilon():
    eps, n = 0.3, 200_000
    a = epsilon_greedy(np.tile([0.0, 1.0], (n, 1)), eps, np.random.default_rng(2))
    assert abs((a == 0).mean() - eps / 2) < 4 * np.sqrt(eps / 2 * (1 - eps / 2) / n)


def test_choose_actions_uses_supplied_draws():
    q = np.array([[0.0, 1.0], [1.0, 0.0], [2.0, 2.0]])
    a = choose_actions(q, 0.5, np.array([0.9, 0.1, 0.9]), np.array([0, 1, 0]), np.array([1, 1, 1]))
    assert a.tolist() == [1, 1, 1]


def test_observe_all_matches_observe():
    g = make_graph("barabasi_albert", 10, 3, 7)
    w = env.new_episode(g, 1.0, np.random.default_rng(0), n_episodes=4)
    env.step(w, np.random.default_rng(1).integers(0, 2, (4, 10)))
    stacked = env.observe_all(w, g)
    for i in range(10):
        d = g.input_dim(i)
        assert np.array_equal(stacked[i, :, :d], env.observe(w, g, i))
        assert np.all(stacked[i, :, d:] == 0.0)


def test_stacked_matches_per_agent_networks():
    g = make_graph("star", 6)
    nets = population(g, 4)
    traj = run_episode(g, nets, 0.05, np.random.default_rng(3), n_episodes=5)
    q_all, cache = StackedNets(nets).forward_sequence(traj.observations)
    dq = np.random.default_rng(4).normal(size=q_all.shape)
    grads = StackedNets(nets).backward(cache, dq)
    for i, net in enumerate(nets):
        q_i, c_i = forward_sequence(net, traj.observations_of(i))
        assert np.allclose(q_all[:, i], q_i, rtol=0, atol=1e-13)
        assert np.allclose(grads[i], net.backward(c_i, dq[:, i]), rtol=0, atol=1e-12)


def test_trajectory_shapes_and_utilities():
    g = make_graph("complete", 4)
    traj = run_episode(g, population(g), 0.05, np.random.default_rng(0), horizon=7, n_episodes=3)
    assert traj.horizon == 7
    assert traj.observations.shape == (7, 4, 3, 5)
    assert traj.actions.shape == traj.utilities.shape == (7, 3, 4)
    assert np.array_equal(traj.utilities, (traj.actions == traj.world.theta[None, :, None]).astype(float))
    assert traj.world.done
    # first observation carries the sentinel, later ones the previous actions
    assert np.all(traj.observations[0, :, :, 1:] == env.SENTINEL)
    assert np.array_equal(traj.observations[1, 0, :, 1], traj.actions[0, :, 0])


def test_run_episode_deterministic():
    g = make_graph("directed_ring", 5)
    nets = population(g, 2)
    a = run_episode(g, nets, 0.05, np.random.default_rng(9), n_episodes=8)
    b = run_episode(g, nets, 0.05, np.random.default_rng(9), n_episodes=8)
    assert np.array_equal(a.actions, b.actions) and np.array_equal(a.observations, b.observations)


def test_input_dim_mismatch_rejected():
    g = make_graph("complete", 4)
    with pytest.raises(ValueError):
        run_episode(g, [AgentNet(3) for _ in range(4)], 0.0, np.random.default_rng(0))


def test_play_greedy_pairs_episodes_across_attacks():
    g = make_graph("star", 5)
    nets = population(g, 1)
    base, wb = play_greedy(g, nets, 7, 300, chunk=128)
    hit, wh = play_greedy(g, nets, 7, 300, attack=AttackSpec(2.0, "fixed_node", 0), chunk=128)
    assert base.shape == (20, 300)
    for x, y in zip(wb, wh):
        assert np.array_equal(x.theta, y.theta)
        assert np.array_equal(x.clean_signals, y.clean_signals)
    zero, _ = play_greedy(g, nets, 7, 300, attack=AttackSpec(0.0, "fixed_node", 0), chunk=128)
    assert np.array_equal(base, zero)


def test_uninformed_policy_has_chance_accuracy():
    # all-zero networks give equal Q-values, so every action is a fair coin
    g = make_graph("complete", 10)
    nets = [AgentNet(g.input_dim(i)) for i in range(10)]
    acc, _ = play_greedy(g, nets, 0, 10000)
    se = acc.std(axis=1, ddof=1) / np.sqrt(acc.shape[1])
    assert np.all(np.abs(acc.mean(axis=1) - 0.5) <= 3 * se)
