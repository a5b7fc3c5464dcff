import numpy as np
import pytest

from mfcpg import streams
from mfcpg.exact_pg import gradient
from mfcpg.model import PolicyParams, solve_optimal
from mfcpg.popsim import SimConfig, run_episode
from mfcpg.zograd import GradConfig, estimate_gradient, estimator_diagnostics, sample_sphere


class TestSphere:
    def test_norm_exact(self):
        rng = np.random.default_rng(0)
        for _ in range(2000):
            m, d = rng.integers(1, 5, size=2)
            r = float(rng.uniform(1e-3, 10))
            u = sample_sphere(r, m, d, rng)
            assert u.shape == (m, d)
            assert abs(np.sqrt(np.sum(u * u)) - r) <= 1e-14 * max(1.0, r)

    def test_one_dimensional_is_two_points(self):
        rng = np.random.default_rng(1)
        draws = np.array([sample_sphere(0.05, 1, 1, rng)[0, 0] for _ in range(10_000)])
        assert set(np.round(draws, 15)) == {-0.05, 0.05}
        assert abs(np.mean(draws > 0) - 0.5) <= 0.02

    def test_mean_is_zero(self):
        rng = np.random.default_rng(2)
        mean = np.mean([sample_sphere(1.0, 2, 2, rng) for _ in range(100_000)], axis=0)
        assert np.max(np.abs(mean)) <= 0.02

    def test_bad_radius(self):
        with pytest.raises(ValueError):
            sample_sphere(0.0, 1, 1, np.random.default_rng())


def test_config_invariants():
    with pytest.raises(ValueError):
        GradConfig(r=0.0)
    with pytest.raises(ValueError):
        GradConfig(Ntilde=0)
    with pytest.raises(ValueError):
        GradConfig(smoothing_dim="x")


def test_single_perturbation_formula(p1, pol_m2):
    gc = GradConfig(Ntilde=1, sim=SimConfig(seed=3))
    est = estimate_gradient(pol_m2, p1, gc, key=(7,))
    j = run_episode(PolicyParams(pol_m2.theta + est.U[0], pol_m2.zeta + est.V[0]), p1, gc.sim, key=(7, 0, 0)).j_pop
    assert est.per_episode_costs[0] == j
    np.testing.assert_array_equal(est.g_theta, (1 / gc.r**2) * (j * est.U[0]))
    np.testing.assert_array_equal(est.g_zeta, (1 / gc.r**2) * (j * est.V[0]))


def test_deterministic_per_key(p1, pol_m2):
    gc = GradConfig(Ntilde=20, sim=SimConfig(seed=11))
    a = estimate_gradient(pol_m2, p1, gc, key=(1, 2))
    b = estimate_gradient(pol_m2, p1, gc, key=(1, 2))
    c = estimate_gradient(pol_m2, p1, gc, key=(1, 3))
    np.testing.assert_array_equal(a.g_theta, b.g_theta)
    assert not np.array_equal(a.g_theta, c.g_theta)


@pytest.mark.parametrize("threads", [2, 8])
def test_threads_bit_exact(p1, pol_m2, threads):
    base = GradConfig(Ntilde=40, sim=SimConfig(seed=4))
    par = GradConfig(Ntilde=40, sim=SimConfig(seed=4, threads=threads))
    a = estimate_gradient(pol_m2, p1, base)
    b = estimate_gradient(pol_m2, p1, par)
    np.testing.assert_array_equal(a.g_theta, b.g_theta)
    np.testing.assert_array_equal(a.g_zeta, b.g_zeta)


def _noise_free(p1):
    return p1.replace(gamma=[[0.0]], gamma0=[[0.0]], x0_cov=[[0.0]])


def test_noise_free_limit_matches_two_point_average(p1):
    # N = 1 and no noise: j_pop is a deterministic function of zeta alone, and the
    # 1-D sphere is {-r, +r}, so the smoothed gradient is the central difference
    p = _noise_free(p1)
    sim = SimConfig(seed=0, N=1, n=20, lam=0.0)
    gc = GradConfig(r=0.05, Ntilde=100_000, sim=sim)
    pol = PolicyParams([[-2.0]], [[-2.0]])
    est = estimate_gradient(pol, p, gc)
    jp = run_episode(PolicyParams([[-2.0]], [[-2.0 + gc.r]]), p, sim).j_pop
    jm = run_episode(PolicyParams([[-2.0]], [[-2.0 - gc.r]]), p, sim).j_pop
    two_point = (jp - jm) / (2 * gc.r)
    terms = est.per_episode_costs * est.V[:, 0, 0] / gc.r**2
    se = terms.std(ddof=1) / np.sqrt(len(terms))
    assert abs(est.g_zeta[0, 0] - two_point) <= 4 * se
    # the costs themselves are exactly the two deterministic values
    assert set(np.round(est.per_episode_costs / jp, 12)) <= {1.0, round(jm / jp, 12)}
    # theta enters nothing when N = 1
    terms_t = est.per_episode_costs * est.U[:, 0, 0] / gc.r**2
    assert abs(est.g_theta[0, 0]) <= 4 * terms_t.std(ddof=1) / np.sqrt(len(terms_t))


def test_noise_free_limit_small_sample(p1):
    p = _noise_free(p1)
    sim = SimConfig(seed=1, N=1, lam=0.0)
    gc = GradConfig(r=0.05, Ntilde=10_000, sim=sim)
    pol = PolicyParams([[-2.0]], [[-2.0]])
    est = estimate_gradient(pol, p, gc)
    fd = (run_episode(PolicyParams([[-2.0]], [[-1.95]]), p, sim).j_pop
          - run_episode(PolicyParams([[-2.0]], [[-2.05]]), p, sim).j_pop) / 0.1
    terms = est.per_episode_costs * est.V[:, 0, 0] / gc.r**2
    assert abs(est.g_zeta[0, 0] - fd) <= 4 * terms.std(ddof=1) / 100


def test_linear_in_cost_scale(p1, pol_m2):
    sim = SimConfig(seed=2, lam=0.0, entropy_mode="analytic")
    gc = GradConfig(Ntilde=16, sim=sim)
    a = estimate_gradient(pol_m2, p1, gc)
    c = 3.5
    pc = p1.replace(Q=c * p1.Q, Qbar=c * p1.Qbar, R=c * p1.R)
    b = estimate_gradient(pol_m2, pc, gc)
    np.testing.assert_allclose(b.per_episode_costs, c * a.per_episode_costs, rtol=1e-12)
    np.testing.assert_allclose(b.g_theta, c * a.g_theta, rtol=1e-12)
    np.testing.assert_allclose(b.g_zeta, c * a.g_zeta, rtol=1e-12)


def test_smoothing_dim_multiplier():
    from conftest import random_model

    rng = np.random.default_rng(3)
    p = random_model(rng, 2, 3)
    sol = solve_optimal(p)
    sim = SimConfig(seed=0, n=10, N=5)
    a = estimate_gradient(sol.policy, p, GradConfig(Ntilde=4, sim=sim, smoothing_dim="d"))
    b = estimate_gradient(sol.policy, p, GradConfig(Ntilde=4, sim=sim, smoothing_dim="md"))
    np.testing.assert_allclose(b.g_theta, 3 * a.g_theta, rtol=1e-14)


def test_episodes_per_perturbation(p1, pol_m2):
    gc = GradConfig(Ntilde=3, episodes_per_perturbation=4, sim=SimConfig(seed=0))
    est = estimate_gradient(pol_m2, p1, gc, key=(5,))
    pol0 = PolicyParams(pol_m2.theta + est.U[0], pol_m2.zeta + est.V[0])
    js = [run_episode(pol0, p1, gc.sim, key=(5, 0, e)).j_pop for e in range(4)]
    assert est.per_episode_costs[0] == pytest.approx(np.mean(js), rel=1e-15)


def test_overflow_names_episode(p1):
    gc = GradConfig(Ntilde=5, sim=SimConfig(T=5.0, n=500))
    with pytest.raises(OverflowError, match=r"perturbation episode \d+ diverged.*step \d+"):
        estimate_gradient(PolicyParams([[400.0]], [[-2.0]]), p1, gc)


def test_stability_guard(p1):
    from mfcpg.linalg import StabilityError

    gc = GradConfig(Ntilde=5, r=0.05, check_stability=True)
    # theta sits right on the boundary of S, so some perturbations cross it
    edge = (p1.beta / 2 - p1.B[0, 0]) / p1.D[0, 0]
    with pytest.raises(StabilityError, match="episode"):
        estimate_gradient(PolicyParams([[edge]], [[-2.0]]), p1, gc)


class TestDiagnostics:
    def test_zero_gradient_at_optimum(self, p1):
        sol = solve_optimal(p1)
        gc = GradConfig(sim=SimConfig(seed=9))
        rep = estimator_diagnostics(sol.policy, p1, gc, repeats=20, sensitivity=False)
        assert np.linalg.norm(rep["exact"]) <= 1e-10
        assert np.linalg.norm(rep["mean"]) <= 3 * rep["se_norm"]

    def test_halving_r_does_not_increase_bias(self, p1, pol_m2):
        exact = np.concatenate([g.ravel() for g in gradient(pol_m2, p1)])
        out = {}
        for r in (0.05, 0.025):
            gc = GradConfig(r=r, Ntilde=10_000, sim=SimConfig(seed=12))
            est = estimate_gradient(pol_m2, p1, gc)
            g = np.concatenate([est.g_theta.ravel(), est.g_zeta.ravel()])
            terms = est.per_episode_costs[:, None] * np.concatenate(
                [est.U.reshape(len(est.U), -1), est.V.reshape(len(est.V), -1)], axis=1) / r**2
            out[r] = (np.linalg.norm(g - exact), np.linalg.norm(terms.std(axis=0, ddof=1)) / np.sqrt(len(terms)))
        assert out[0.025][0] <= out[0.05][0] + 3 * out[0.025][1]

    def test_doubling_N_shrinks_population_spread(self, p1, pol_m2):
        gc = GradConfig(Ntilde=10, sim=SimConfig(seed=5))
        rep = estimator_diagnostics(pol_m2, p1, gc, repeats=40, sensitivity=True)
        assert rep["sensitivity"]["N"]["jpop_sd"] < rep["jpop_sd"]
        assert set(rep["sensitivity"]) == {"T", "n", "N"}
