"""Acceptance criteria on the scalar benchmark (model and run tables).

Each test records one PASS/FAIL line, collected in the terminal summary.
"""

import io
import json
import time

import numpy as np
import pytest

from mfcpg import streams
from mfcpg.cli import run
from mfcpg.exact_pg import constants, cost, exact_gd, gradient, stability_check
from mfcpg.linalg import is_stable, riccati_residual, solve_lyapunov, solve_riccati
from mfcpg.model import PolicyParams, solve_optimal, table1_params
from mfcpg.oracles import fd_gradient, lyapunov_quadrature, mc_cost
from mfcpg.pgloop import MFRunConfig, StepSchedule, descent_fraction, model_free_pg, multi_seed_study
from mfcpg.popsim import SimConfig, aggregate_mean_identity, simulate_batch
from mfcpg.zograd import GradConfig, estimate_gradient

from conftest import random_model, random_spd, random_stable, random_stable_policy, record_acceptance

CONFIG = dict(Q=0.1, Qhat=0.2, B=0.1, Bhat=0.2, beta=20, gamma=0.05, gamma0=0.05, D=0.05, R=0.2,
              x0_mean=1, x0_cov=1, T=1, n=100, N=100, Ntilde=100, r=0.05, seed=0,
              rho_schedule=[[100, 0.5], [200, 0.9], [350, 1.2]], k_max=350, theta0=-2, zeta0=-2)
CONFIG["lambda"] = 0.001

P = table1_params()
START = PolicyParams([[-2.0]], [[-2.0]])


@pytest.fixture(scope="module")
def config_file(tmp_path_factory):
    path = tmp_path_factory.mktemp("cfg") / "table.json"
    path.write_text(json.dumps(CONFIG))
    return str(path)


def test_criterion_1_optimal_gains(config_file):
    out = io.StringIO()
    t0 = time.perf_counter()
    code = run(["solve", config_file], out=out)
    elapsed = time.perf_counter() - t0
    vals = dict(line.split(" = ") for line in out.getvalue().strip().splitlines())
    th, ze = float(vals["theta*"]), float(vals["zeta*"])
    ok = code == 0 and abs(th + 0.0012626) <= 1e-5 and abs(ze + 0.0025510) <= 1e-5 and elapsed < 1.0
    record_acceptance("criterion 1", ok, f"theta*={th:.7f} zeta*={ze:.7f} in {elapsed:.3f}s")
    assert ok


def test_criterion_2_optimal_costs():
    sol = solve_optimal(P)
    ok = (abs(sol.J1_opt - 0.005051) <= 5e-6 and abs(sol.J2_opt - 0.010205) <= 5e-6
          and abs(sol.J_opt - 0.015360) <= 1e-5)
    record_acceptance("criterion 2", ok, f"J1*={sol.J1_opt:.7f} J2*={sol.J2_opt:.7f} J*={sol.J_opt:.7f}")
    assert ok


def test_criterion_3_exact_pg():
    details, ok = [], True
    for rho in (0.5, 0.9, 1.2):
        t0 = time.perf_counter()
        tr = exact_gd(START, P, rho=rho, k_max=300)
        elapsed = time.perf_counter() - t0
        J = tr.column("J")
        err = tr.column("J_err_rel")
        monotone = bool(np.all(np.diff(J) <= 0))
        hit = np.flatnonzero(err < 1e-3)
        first = int(hit[0]) if hit.size else None
        this = monotone and first is not None and elapsed < 5.0
        ok &= this
        details.append(f"rho={rho}: monotone={monotone} first k with err<1e-3: {first} "
                       f"(err at 300: {err[-1]:.2e}, {elapsed:.2f}s)")
    record_acceptance("criterion 3", ok, "; ".join(details))
    assert ok


def test_criterion_4_gradient_correctness():
    worst = 0.0
    rng = np.random.default_rng(2024)
    for d in (1, 2, 3):
        for _ in range(20):
            p = random_model(rng, d, d)
            pol = random_stable_policy(rng, p, solve_optimal(p))
            ga = np.concatenate([g.ravel() for g in gradient(pol, p)])
            gf = np.concatenate([g.ravel() for g in fd_gradient(pol, p, 1e-6)])
            worst = max(worst, float(np.max(np.abs(ga - gf)) / np.max(np.abs(ga))))
    g1 = gradient(START, P)[0][0, 0]
    ok = worst <= 1e-5 and abs(g1 + 0.03978) <= 1e-6
    record_acceptance("criterion 4", ok, f"worst relative error {worst:.2e}; grad J1(-2) = {g1:.8f}")
    assert ok


def test_criterion_5_gradient_estimator():
    g1, g2 = gradient(START, P)
    gc = GradConfig(r=0.05, Ntilde=100, sim=SimConfig(T=1.0, n=100, N=100, seed=0))
    t0 = time.perf_counter()
    est = [estimate_gradient(START, P, gc, key=(streams.ITERATION, j)) for j in range(100)]
    elapsed = time.perf_counter() - t0
    gt = np.array([e.g_theta[0, 0] for e in est])
    gz = np.array([e.g_zeta[0, 0] for e in est])
    inside = int(np.sum((np.abs(gt - g1[0, 0]) <= 1e-2) & (np.abs(gz - g2[0, 0]) <= 1e-2)))
    ok = inside >= 90 and elapsed < 120
    record_acceptance(
        "criterion 5", ok,
        f"{inside}/100 estimates within 1e-2; sd(g_theta)={gt.std(ddof=1):.3f} "
        f"sd(g_zeta)={gz.std(ddof=1):.3f}; mean=({gt.mean():.4f}, {gz.mean():.4f}) "
        f"vs exact ({g1[0, 0]:.4f}, {g2[0, 0]:.4f}); {elapsed:.1f}s")
    assert ok


@pytest.fixture(scope="module")
def study():
    cfg = MFRunConfig(theta0=START, schedule=StepSchedule.benchmark(), k_max=350,
                      gc=GradConfig(r=0.05, Ntilde=100, sim=SimConfig(T=1.0, n=100, N=100)))
    t0 = time.perf_counter()
    out = multi_seed_study(cfg, P, [0, 1, 2, 3, 4], eps=0.05)
    out["elapsed"] = time.perf_counter() - t0
    return out


def test_criterion_6_model_free_pg(study):
    ok = study["successes"] >= 4 and study["elapsed"] < 1800
    ratios = ", ".join(f"{r:.4f}" for r in study["final_ratio"])
    record_acceptance("criterion 6", ok, f"{study['successes']}/5 seeds with gap ratio <= 0.05 "
                      f"at k=350 (ratios {ratios}); {study['elapsed']:.0f}s")
    assert ok


def test_invariant_descent_direction_frequency(study):
    fr = [descent_fraction(tr, P) for tr in study["traces"]]
    ok = min(fr) > 0.8
    record_acceptance("invariant descent-direction frequency", ok,
                      "fractions " + ", ".join(f"{f:.3f}" for f in fr) + " (target > 0.8)")
    assert ok


def test_criterion_7_simulator_consistency():
    mean, se = mc_cost(START, P, SimConfig(T=1.0, n=100, N=100), 200, seed=0)
    exact = cost(START, P).J
    ok = abs(mean - exact) <= 3 * se + 0.01 and abs(exact - 0.09562) <= 1e-5
    record_acceptance("criterion 7", ok, f"mc mean {mean:.5f} (SE {se:.5f}) vs analytic {exact:.5f}; "
                      f"budget {3 * se + 0.01:.5f}")
    assert ok


def test_criterion_8_solver_residuals():
    rng = np.random.default_rng(8)
    worst_l = worst_r = worst_q = 0.0
    for _ in range(100):
        d = int(rng.integers(1, 5))
        m = int(rng.integers(1, 5))
        a = random_stable(rng, d)
        c = rng.standard_normal((d, d))
        c = c + c.T
        x = solve_lyapunov(a, c)
        worst_l = max(worst_l, float(np.linalg.norm(a @ x + x @ a.T + c)))
        b = rng.standard_normal((d, d))
        dm = rng.standard_normal((d, m))
        r, q = random_spd(rng, m), random_spd(rng, d)
        beta = float(rng.uniform(0.1, 3.0))
        k = solve_riccati(b, dm, r, q, beta)
        worst_r = max(worst_r, float(np.linalg.norm(riccati_residual(k, b, dm, r, q, beta))))
        assert is_stable(b - 0.5 * beta * np.eye(d) - dm @ np.linalg.solve(r, dm.T @ k))
    for _ in range(20):
        d = int(rng.integers(1, 5))
        a = random_stable(rng, d, shift=0.5)
        c = random_spd(rng, d)
        worst_q = max(worst_q, float(np.max(np.abs(solve_lyapunov(a, c) - lyapunov_quadrature(a, c)))))
    ok = worst_l <= 1e-9 and worst_r <= 1e-9 and worst_q <= 1e-6
    record_acceptance("criterion 8", ok, f"max Lyapunov residual {worst_l:.1e}, max Riccati residual "
                      f"{worst_r:.1e}, max quadrature gap {worst_q:.1e}")
    assert ok


def _stochastic_outputs(threads):
    sim = SimConfig(T=1.0, n=50, N=30, seed=123, threads=threads)
    th = np.full((24, 1, 1), -2.0)
    eps = [r.j_pop for r in simulate_batch(th, th, P, sim, [(streams.EPISODE, i) for i in range(24)])]
    est = estimate_gradient(START, P, GradConfig(Ntilde=40, sim=sim))
    mc = mc_cost(START, P, sim, 20)
    tr = model_free_pg(MFRunConfig(theta0=START, k_max=3, gc=GradConfig(Ntilde=20, sim=sim)), P)
    return (eps, est.g_theta.tolist(), est.g_zeta.tolist(), est.per_episode_costs.tolist(), mc,
            [(r.jpop, r.J, r.theta.tolist(), r.zeta.tolist()) for r in tr.records])


def test_criterion_9_property_suite():
    sol = solve_optimal(P)
    c0 = cost(START, P)
    lv, lvh = 2 * c0.J1, 2 * c0.J2
    cs = constants(lv, lvh, P, sol)
    rng = np.random.default_rng(99)
    pts = 0
    pl_ok = bounds_ok = True
    while pts < 50:
        pol = PolicyParams(sol.theta_opt + 2 * rng.standard_normal((1, 1)),
                           sol.zeta_opt + 2 * rng.standard_normal((1, 1)))
        if not all(stability_check(pol, P)):
            continue
        c = cost(pol, P)
        if c.J1 > lv or c.J2 > lvh:
            continue
        pts += 1
        pl_ok &= c.J1 - sol.J1_opt <= cs.kappa1_corrected * np.sum(c.grad_theta**2)
        pl_ok &= c.J2 - sol.J2_opt <= cs.kappa2_corrected * np.sum(c.grad_zeta**2)
        bounds_ok &= (np.linalg.norm(c.K_theta) <= cs.Bd_K and np.linalg.norm(c.Sigma_theta) <= cs.Bd_Sigma
                      and np.linalg.norm(pol.theta) <= cs.Bd_theta
                      and np.linalg.norm(c.Lambda_zeta) <= cs.Bd_Lambda
                      and np.linalg.norm(c.SigmaHat_zeta) <= cs.Bd_SigmaHat
                      and np.linalg.norm(pol.zeta) <= cs.Bd_zeta)

    worst_id = 0.0
    sim = SimConfig(T=1.0, n=100, N=100, seed=5)
    for gains in (-2.0, sol.theta_opt[0, 0], 1.0):
        th = np.full((20, 1, 1), gains)
        res = simulate_batch(th, th, P, sim, [(streams.EPISODE, i) for i in range(20)], keep_summary=True)
        worst_id = max(worst_id, max(aggregate_mean_identity(r.summary, P) for r in res))
    rng2 = np.random.default_rng(5)
    p3 = random_model(rng2, 3, 2)
    s3 = solve_optimal(p3)
    th = np.repeat(s3.theta_opt[None], 10, axis=0)
    ze = np.repeat(s3.zeta_opt[None], 10, axis=0)
    res = simulate_batch(th, ze, p3, SimConfig(n=40, N=25, seed=1), [(0, i) for i in range(10)], keep_summary=True)
    worst_id = max(worst_id, max(aggregate_mean_identity(r.summary, p3) for r in res))

    ref = _stochastic_outputs(1)
    repro = all(_stochastic_outputs(t) == ref for t in (2, 8))

    ok = pl_ok and bounds_ok and worst_id <= 1e-12 and repro
    record_acceptance("criterion 9", ok, f"PL at 50 points: {pl_ok}; level-set bounds: {bounds_ok}; "
                      f"max mean-identity residual {worst_id:.1e}; bit-exact across 1/2/8 threads: {repro}")
    assert ok
