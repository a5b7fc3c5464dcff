import numpy as np
import pytest

from mfcpg.model import PolicyParams, table1_params


@pytest.fixture(scope="session")
def p1():
    return table1_params()


@pytest.fixture(scope="session")
def pol_m2():
    return PolicyParams([[-2.0]], [[-2.0]])


def random_stable(rng, d, shift=0.2):
    a = rng.standard_normal((d, d))
    return a - (np.max(np.linalg.eigvals(a).real) + shift + rng.random()) * np.eye(d)


def random_spd(rng, d, floor=0.1):
    g = rng.standard_normal((d, d))
    return g @ g.T + floor * np.eye(d)


def random_model(rng, d, m, lam=0.01, beta=1.5):
    from mfcpg.model import ModelParams

    g = rng.standard_normal((d, d))
    return ModelParams(
        B=0.3 * rng.standard_normal((d, d)),
        Bbar=0.3 * rng.standard_normal((d, d)),
        D=rng.standard_normal((d, m)),
        gamma=0.3 * rng.standard_normal((d, d)),
        gamma0=0.3 * rng.standard_normal((d, d)),
        Q=random_spd(rng, d, 0.5),
        Qbar=0.2 * np.eye(d),
        R=random_spd(rng, m, 0.5),
        beta=beta,
        lam=lam,
        x0_mean=rng.standard_normal(d),
        x0_cov=g @ g.T / d + 0.2 * np.eye(d),
    )


def random_stable_policy(rng, p, sol, scale=0.3, max_tries=1000):
    """theta* plus a Gaussian kick, rejected until inside S x S-hat."""
    from mfcpg.exact_pg import stability_check
    from mfcpg.model import PolicyParams

    for _ in range(max_tries):
        pol = PolicyParams(
            sol.theta_opt + scale * rng.standard_normal(sol.theta_opt.shape),
            sol.zeta_opt + scale * rng.standard_normal(sol.zeta_opt.shape),
        )
        if all(stability_check(pol, p)):
            return pol
    raise RuntimeError("no stable sample found")


ACCEPTANCE = {}


def record_acceptance(key, passed, detail):
    ACCEPTANCE[key] = (bool(passed), detail)
    print(f"{key}: {'PASS' if passed else 'FAIL'} - {detail}")


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE:
        return
    terminalreporter.section("acceptance criteria")
    for key in sorted(ACCEPTANCE, key=lambda k: (len(k), k)):
        ok, detail = ACCEPTANCE[key]
        terminalreporter.write_line(f"{key}: {'PASS' if ok else 'FAIL'} - {detail}")
