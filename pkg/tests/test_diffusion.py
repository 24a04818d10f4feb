import math

import numpy as np
import pytest
from scipy import stats
from scipy.special import i0, i1

from ctpe.diffusion import (
    RewardSpec,
    Trajectory,
    integrate_path_functional,
    ornstein_uhlenbeck,
    simulate_trajectory,
    torus_brownian,
    torus_langevin,
)


def bm(d=1, sigma=1.0):
    return torus_brownian(d, sigma)


def test_small_trajectory_is_deterministic_and_on_torus():
    model = bm()
    reward = RewardSpec.from_fourier({(1,): 0.5}, noise_half_width=0.0)
    a = simulate_trajectory(model, reward, T=1.0, eta=0.1, seed=7)
    b = simulate_trajectory(model, reward, T=1.0, eta=0.1, seed=7)
    assert a.n_obs == 11
    assert np.all((a.states >= 0) & (a.states < 1))
    np.testing.assert_array_equal(a.states, b.states)
    np.testing.assert_array_equal(a.rewards, b.rewards)


def test_different_seeds_differ():
    reward = RewardSpec.constant(0.0)
    a = simulate_trajectory(bm(), reward, 1.0, 0.1, seed=1)
    b = simulate_trajectory(bm(), reward, 1.0, 0.1, seed=2)
    assert not np.array_equal(a.states, b.states)


def test_csv_is_byte_identical(tmp_path):
    reward = RewardSpec.from_fourier({(1, 0): 0.3, (0, -1): 0.2})
    for name in ("a", "b"):
        traj = simulate_trajectory(bm(2), reward, 2.0, 0.1, substeps=4, seed=3, keep_inner=True)
        traj.to_csv(tmp_path / f"{name}.csv")
        traj.inner_to_csv(tmp_path / f"{name}_inner.csv")
    assert (tmp_path / "a.csv").read_bytes() == (tmp_path / "b.csv").read_bytes()
    assert (tmp_path / "a_inner.csv").read_bytes() == (tmp_path / "b_inner.csv").read_bytes()
    header = (tmp_path / "a.csv").read_text().splitlines()[0]
    assert header == "k,t,x_0,x_1,reward"
    assert (tmp_path / "a_inner.csv").read_text().splitlines()[0] == "j,t,x_0,x_1"


def test_csv_roundtrip(tmp_path):
    traj = simulate_trajectory(bm(), RewardSpec.from_fourier({(1,): 0.4}), 3.0, 0.1, substeps=4, seed=5, keep_inner=True)
    traj.to_csv(tmp_path / "t.csv")
    traj.inner_to_csv(tmp_path / "i.csv")
    back = Trajectory.from_csv(tmp_path / "t.csv", inner_path=tmp_path / "i.csv")
    np.testing.assert_array_equal(back.states, traj.states)
    np.testing.assert_array_equal(back.rewards, traj.rewards)
    np.testing.assert_array_equal(back.inner_states, traj.inner_states)
    assert back.substeps == 4 and back.eta == pytest.approx(0.1)


def test_brownian_increment_variance():
    sigma, eta, s = 0.7, 0.1, 10
    traj = simulate_trajectory(bm(1, sigma), RewardSpec.constant(0.0), T=1000.0, eta=eta, substeps=s, seed=0, keep_inner=True)
    x = traj.inner_states[:, 0]
    inc = np.diff(x)
    inc = inc - np.round(inc)  # undo wrap; steps are far below 1/2
    assert inc.size == 100_000
    target = sigma**2 * eta / s
    var = np.mean(inc**2)
    se = np.std(inc**2, ddof=1) / math.sqrt(inc.size)
    assert abs(var - target) < 3 * se


def test_stationary_marginal_ks():
    traj = simulate_trajectory(bm(), RewardSpec.constant(0.0), T=10_000 * 0.5, eta=0.5, substeps=1, seed=11)
    x = traj.states[:10_000, 0]
    stat = stats.kstest(x, "uniform").statistic
    assert stat < 1.36 / math.sqrt(x.size)


def test_fixed_time_marginal_across_seeds():
    # marginal of X_{k eta} at a fixed k across independent replicates
    xs = np.array([simulate_trajectory(bm(), RewardSpec.constant(0.0), 0.5, 0.1, substeps=1, seed=s).states[3, 0] for s in range(2000)])
    assert stats.kstest(xs, "uniform").pvalue > 1e-3


def test_wrapped_angle_law():
    # E[cos 2 pi (X_t - X_0)] = exp(-2 pi^2 sigma^2 t)
    sigma, eta = 1.0, 0.05
    traj = simulate_trajectory(bm(1, sigma), RewardSpec.constant(0.0), 2000.0, eta, substeps=2, seed=4)
    x = traj.states[:, 0]
    c = np.cos(2 * np.pi * (x[1:] - x[:-1]))
    assert abs(c.mean() - math.exp(-2 * np.pi**2 * sigma**2 * eta)) < 4 * c.std() / math.sqrt(c.size) + 1e-3


def test_rewards_bounded_and_unbiased():
    reward = RewardSpec.from_fourier({(1,): 0.3, (0,): 0.2}, noise_half_width=0.3)
    traj = simulate_trajectory(bm(), reward, 500.0, 0.05, substeps=1, seed=9)
    assert np.max(np.abs(traj.rewards)) <= 1.0
    resid = traj.rewards - reward.mean_reward(traj.states)
    assert np.max(np.abs(resid)) <= 0.3
    assert abs(resid.mean()) < 4 * 0.3 / math.sqrt(3 * resid.size)


def test_fourier_reward_matches_direct_sum():
    reward = RewardSpec.from_fourier({(0, 0): 0.1, (1, -1): 0.2, (-1, 1): -0.1, (0, 2): 0.05})
    x = np.random.default_rng(0).random((50, 2))
    s2 = math.sqrt(2)
    ph1 = 2 * np.pi * (x[:, 0] - x[:, 1])
    direct = 0.1 + 0.2 * s2 * np.cos(ph1) - 0.1 * s2 * np.sin(ph1) + 0.05 * s2 * np.cos(4 * np.pi * x[:, 1])
    np.testing.assert_allclose(reward.mean_reward(x), direct, atol=1e-12)


def test_inadmissible_reward_rejected():
    with pytest.raises(ValueError):
        simulate_trajectory(bm(), RewardSpec.from_fourier({(1,): 0.7}, noise_half_width=0.1), 1.0, 0.1)


@pytest.mark.parametrize("T,eta", [(0.0, 0.1), (1.0, 0.0), (-1.0, 0.1), (1.0, -0.1)])
def test_bad_times_rejected(T, eta):
    with pytest.raises(ValueError):
        simulate_trajectory(bm(), RewardSpec.constant(0.0), T, eta)


def test_inner_states_consistent_with_observations():
    traj = simulate_trajectory(bm(2), RewardSpec.constant(0.0, 2), 1.0, 0.1, substeps=8, seed=2, keep_inner=True)
    np.testing.assert_array_equal(traj.inner_states[::8], traj.states)
    no_inner = simulate_trajectory(bm(2), RewardSpec.constant(0.0, 2), 1.0, 0.1, substeps=8, seed=2)
    assert no_inner.inner_states is None
    np.testing.assert_array_equal(no_inner.states, traj.states)


def test_integrate_constant_exact():
    traj = simulate_trajectory(bm(), RewardSpec.constant(0.0), 2.0, 0.1, substeps=4, seed=0, keep_inner=True)
    one = lambda x: np.ones(len(x))
    assert integrate_path_functional(traj, one, 0, 0.0, n_steps=5) == pytest.approx(0.5, abs=1e-14)


def test_integrate_exponential():
    s = 16
    traj = simulate_trajectory(bm(), RewardSpec.constant(0.0), 2.0, 0.1, substeps=s, seed=0, keep_inner=True)
    one = lambda x: np.ones(len(x))
    h = 0.1 / s
    val = integrate_path_functional(traj, one, 0, 1.0, n_steps=10)
    assert abs(val - (1 - math.exp(-1))) <= h**2


def test_integrate_richardson_self_consistency():
    fine_s, coarse_s = 160, 16
    traj = simulate_trajectory(bm(), RewardSpec.constant(0.0), 1.0, 0.1, substeps=fine_s, seed=1, keep_inner=True)
    phi = lambda x: np.cos(2 * np.pi * x[:, 0])
    fine = integrate_path_functional(traj, phi, 2, 0.5, n_steps=3)
    coarse_traj = Trajectory(traj.eta, coarse_s, traj.states, traj.rewards, traj.seed, traj.total_time,
                             traj.inner_states[:: fine_s // coarse_s])
    coarse = integrate_path_functional(coarse_traj, phi, 2, 0.5, n_steps=3)
    coarse_traj2 = Trajectory(traj.eta, coarse_s // 2, traj.states, traj.rewards, traj.seed, traj.total_time,
                              traj.inner_states[:: 2 * fine_s // coarse_s])
    coarser = integrate_path_functional(coarse_traj2, phi, 2, 0.5, n_steps=3)
    err_estimate = abs(coarser - coarse)
    assert abs(fine - coarse) <= 4 * err_estimate


def test_integrate_requires_inner_and_range():
    traj = simulate_trajectory(bm(), RewardSpec.constant(0.0), 1.0, 0.1, substeps=2, seed=0)
    with pytest.raises(ValueError):
        integrate_path_functional(traj, lambda x: x[:, 0], 0, 1.0)
    traj = simulate_trajectory(bm(), RewardSpec.constant(0.0), 1.0, 0.1, substeps=2, seed=0, keep_inner=True)
    with pytest.raises(IndexError):
        integrate_path_functional(traj, lambda x: x[:, 0], 9, 1.0, n_steps=2)


def test_brownian_model_contract():
    model = bm(3, 0.5)
    alphas = np.array([[0, 0, 0], [1, -1, 0], [0, 2, 0]])
    np.testing.assert_allclose(model.spectrum(alphas), 0.125 * 4 * np.pi**2 * np.array([0, 2, 4]))
    lam = model.diffusion_matrix(np.zeros((2, 3)))
    np.testing.assert_allclose(lam, np.broadcast_to(0.25 * np.eye(3), (2, 3, 3)))


@pytest.mark.parametrize("model", [torus_langevin(2, 0.8, 0.3), ornstein_uhlenbeck(2, 1.5, 0.6)])
def test_uniform_ellipticity(model):
    x = np.random.default_rng(0).random((20, model.dimension))
    eig = np.linalg.eigvalsh(model.diffusion_matrix(x))
    assert np.all(eig >= model.lambda_min - 1e-12) and np.all(eig <= model.lambda_max + 1e-12)


def test_langevin_stationary_mean():
    # stationary density exp(-2U/sigma^2), U = a cos(2 pi x): E[cos 2 pi X] = -I1(k)/I0(k), k = 2a/sigma^2
    sigma, a = 1.0, 0.25
    model = torus_langevin(1, sigma, a, burn_in=1.0)
    traj = simulate_trajectory(model, RewardSpec.constant(0.0), 400.0, 0.05, substeps=4, seed=3)
    c = np.cos(2 * np.pi * traj.states[:, 0])
    kappa = 2 * a / sigma**2
    expected = -i1(kappa) / i0(kappa)
    # batch-means standard error for the correlated path
    b = c[: c.size - c.size % 40].reshape(40, -1).mean(axis=1)
    assert abs(c.mean() - expected) < 4 * b.std(ddof=1) / math.sqrt(40) + 0.01


def test_ou_stationary_variance():
    theta, sigma = 1.0, 1.0
    model = ornstein_uhlenbeck(1, theta, sigma)
    traj = simulate_trajectory(model, RewardSpec.constant(0.0), 2000.0, 0.1, substeps=8, seed=5)
    x = traj.states[:, 0]
    b = (x**2)[: x.size - x.size % 40].reshape(40, -1).mean(axis=1)
    assert abs(np.mean(x**2) - sigma**2 / (2 * theta)) < 4 * b.std(ddof=1) / math.sqrt(40) + 0.02
