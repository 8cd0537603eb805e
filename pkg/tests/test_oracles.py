"""The deterministic oracles against closed forms, so the Monte Carlo tests lean on checked ground."""

import math

import numpy as np
import pytest
from scipy.linalg import expm

import oracles
from models import BROWNIAN, LEVY1, RIGHT_FACE, SYM2, boundary, model
from switchjd.model import BoundaryData

X = np.linspace(0.05, 0.95, 19)


def twin(c):
    return model(BROWNIAN, dimensions={"d": 1, "m": 2}, regimes=[{"diffusion": 0.5}] * 2,
                 switching={"rates": [["auto", c], [c, "auto"]]})


def test_linear_harmonic_function():
    xv, vals = oracles.coupled_oracle(model(BROWNIAN), 0.0, 1.0, boundary({"regimes": [RIGHT_FACE]}))
    assert np.allclose(oracles.at(xv, vals, X)[0], X, atol=1e-12)


def test_expected_exit_time_source():
    xv, vals = oracles.coupled_oracle(model(BROWNIAN), -0.5, 0.5, source=[lambda x: np.ones_like(x)])
    xs = X - 0.5
    assert np.allclose(oracles.at(xv, vals, xs)[0], oracles.brownian_exit_mean(0.5, xs, 0.5), atol=1e-10)


def test_killed_laplace_transform_converges_at_second_order():
    mdl = model(BROWNIAN, switching={"rates": [["auto"]], "killing": [3.0]})
    exact = oracles.killed_exit_laplace(X, 3.0, 0.5)
    err = []
    for grid in (200, 400):
        xv, vals = oracles.coupled_oracle(mdl, 0.0, 1.0, BoundaryData.constant(1.0, 1), grid=grid)
        err.append(np.max(np.abs(oracles.at(xv, vals, X)[0] - exact)))
    assert err[1] < 1e-5
    assert err[0] / err[1] == pytest.approx(4.0, rel=0.05)


def test_identical_regimes_reduce_to_one():
    xv, vals = oracles.coupled_oracle(twin(1.5), 0.0, 1.0, boundary({"regimes": [RIGHT_FACE]}, m=2))
    got = oracles.at(xv, vals, X)
    assert np.allclose(got, X[None, :], atol=1e-12)


def test_switching_source_splits_into_sum_and_difference():
    # f = 1 in regime 1 only: u1 + u2 = x(1-x) and u1 - u2 solves u''/2 - 2c u = -1
    c = 0.8
    xv, vals = oracles.coupled_oracle(twin(c), 0.0, 1.0, source=[np.ones_like, np.zeros_like])
    got = oracles.at(xv, vals, X)
    s = X * (1 - X)
    k = math.sqrt(4 * c)
    d = (1 - np.cosh(k * (X - 0.5)) / math.cosh(k / 2)) / (2 * c)
    assert np.allclose(got[0], (s + d) / 2, atol=1e-6)
    assert np.allclose(got[1], (s - d) / 2, atol=1e-6)


@pytest.mark.parametrize("mdl", [model(LEVY1), model(SYM2)], ids=["levy", "sym2"])
def test_constant_data_is_reproduced_with_jumps(mdl):
    xv, vals = oracles.coupled_oracle(mdl, 0.0, 1.0, BoundaryData.constant(1.0, mdl.n_regimes))
    assert np.allclose(vals, 1.0, atol=1e-10)


def test_symmetric_model_gives_mirror_symmetric_solution():
    phi = boundary({"regimes": [1.0, 0.2]}, m=2)
    xv, vals = oracles.coupled_oracle(model(SYM2), 0.0, 1.0, phi)
    assert np.allclose(vals, vals[:, ::-1], atol=1e-10)


def test_two_state_chain_marginal():
    for t in (0.1, 1.0, 2.0):
        q = np.array([[-1.0, 1.0], [1.0, -1.0]])
        assert oracles.two_state_same(t) == pytest.approx(expm(t * q)[0, 0], rel=1e-12)
