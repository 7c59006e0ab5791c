import numpy as np
import pytest

from xfwi import CovarianceSpec, HelmholtzModel1D, helmholtz_problem
from xfwi.cli import random_covariance


def make_helmholtz_instance(
    seed=0,
    n=20,
    h=0.05,
    omega=30.0,
    boundary="sommerfeld",
    receivers=(3, 9, 15),
    cov_kind="dense",
    data="random",
):
    """One random inversion instance on the 1-D grid.

    Returns (problem, m). ``data="consistent"`` synthesizes d from m so the
    objectives vanish there.
    """
    rng = np.random.default_rng(seed)
    model = HelmholtzModel1D(n=n, h=h, omega=omega, boundary=boundary)
    receivers = [int(i) for i in receivers]
    m = rng.uniform(0.2, 0.4, size=n)
    q = rng.standard_normal(n) + 1j * rng.standard_normal(n)
    if data == "consistent":
        from xfwi import assemble_A

        d = np.linalg.solve(assemble_A(model, m).matrix, q)[receivers]
    else:
        nr = len(receivers)
        d = rng.standard_normal(nr) + 1j * rng.standard_normal(nr)
    sigma_m = random_covariance(cov_kind, len(receivers), 1.0, rng)
    sigma_p = random_covariance(cov_kind, n, 1.0, rng)
    return helmholtz_problem(model, receivers, q, d, sigma_m, sigma_p), m


def scaled_problem(prob, alpha):
    """Same instance with both covariances multiplied by alpha."""
    from xfwi import Problem

    return Problem(
        A_builder=prob.A_builder,
        dA=prob.dA,
        P=prob.P,
        q=prob.q,
        d=prob.d,
        sigma_m=CovarianceSpec.dense(alpha * prob.sigma_m.to_dense()),
        sigma_p=CovarianceSpec.dense(alpha * prob.sigma_p.to_dense()),
    )


@pytest.fixture
def small_toy_config():
    # Record long enough that the slowest scanned arrival stays in-window.
    from xfwi import ToyConfig

    return ToyConfig(nt=160, dt=0.008, f0=8.0, t0=0.2, scan=(1.5, 2.5, 21))
