import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

import oracles
from models import BROWNIAN, BROWNIAN_2D, JUMP2, LEVY1, boundary, model
from switchjd.errors import UsageError
from switchjd.estimators import (estimate_exit_time, estimate_green, estimate_harmonic,
                                 estimate_hitting_prob, levy_system_residual)
from switchjd.families import scalar_family
from switchjd.model import BoundaryData
from switchjd.regions import Ball, interval
from switchjd.sampler import SamplerConfig, StopRule, sample_paths

CFG = SamplerConfig(step=1e-3, seed=31)
D = interval(0.0, 1.0)


def within(est, ref, k=3.0):
    return abs(est.value - ref) <= k * est.stderr


# --- exit times -----------------------------------------------------------


@pytest.mark.parametrize("cfg_model, region, init, exact", [
    (BROWNIAN, Ball([0.0], 0.5), [0.0], 0.25),
    (BROWNIAN_2D, Ball([0.0, 0.0], 1.0), [0.0, 0.0], 0.5),
    ({**BROWNIAN, "regimes": [{"diffusion": 1.0}]}, Ball([0.0], 0.5), [0.0], 0.125),
])
def test_brownian_exit_time_examples(cfg_model, region, init, exact):
    est, tail = estimate_exit_time(model(cfg_model), region, (init, 0), CFG, 20_000)
    assert within(est, exact), (est.value, est.stderr, exact)
    assert est.warning is None and est.n == 20_000 and est.seed == 31 and est.h == 1e-3
    assert tail(0.0) == 0.0 and tail(np.inf) == 1.0
    assert np.all(np.diff(tail(np.linspace(0, 2 * exact, 50))) >= 0)


def test_exit_time_is_reproducible():
    a, _ = estimate_exit_time(model(BROWNIAN), Ball([0.0], 0.3), ([0.1], 0), CFG, 2000)
    b, _ = estimate_exit_time(model(BROWNIAN), Ball([0.0], 0.3), ([0.1], 0), CFG, 2000)
    assert a.to_json().replace(f"{a.wall_time!r}", "") == b.to_json().replace(f"{b.wall_time!r}", "")
    assert (a.value, a.stderr) == (b.value, b.stderr)


def test_truncation_raises_a_warning_but_returns():
    est, _ = estimate_exit_time(model(BROWNIAN), Ball([0.0], 1.0), ([0.0], 0),
                                CFG.replace(horizon=0.05), 1000)
    assert est.truncated_fraction > 0.01
    assert est.warning is not None and math.isfinite(est.value)


def test_start_outside_region_is_rejected():
    with pytest.raises(UsageError):
        estimate_exit_time(model(BROWNIAN), Ball([0.0], 0.1), ([0.5], 0), CFG, 10)


def test_exit_time_scales_like_r_squared():
    fitted, ratios = [], []
    for r in (0.1, 0.2, 0.4):
        est, tail = estimate_exit_time(model(BROWNIAN), Ball([0.0], r), ([0.0], 0),
                                       SamplerConfig(step=1e-4 * (r / 0.1) ** 2, seed=32), 20_000)
        ratios.append((est.value / r ** 2, est.stderr / r ** 2))
        fitted.append(tail)
    for (a, sa), (b, sb) in zip(ratios, ratios[1:]):
        assert abs(a - b) <= 3 * math.hypot(sa, sb)
    # c fitted on one seed as the largest constant with P(tau <= c r^2) <= 1/2 everywhere
    grid = np.linspace(0.05, 2.0, 400)
    ok = [np.all([fitted[k](g * r * r) <= 0.5 for k, r in enumerate((0.1, 0.2, 0.4))]) for g in grid]
    c = grid[np.flatnonzero(ok)[-1]]
    for r in (0.1, 0.2, 0.4):
        n = 20_000
        _, tail = estimate_exit_time(model(BROWNIAN), Ball([0.0], r), ([0.0], 0),
                                     SamplerConfig(step=1e-4 * (r / 0.1) ** 2, seed=33), n)
        p = float(tail(c * r * r))
        assert p <= 0.5 + 3 * math.sqrt(0.25 / n)


# --- hitting probabilities ------------------------------------------------


def test_target_equal_to_container_is_hit_immediately():
    est = estimate_hitting_prob(model(BROWNIAN), interval(-1, 1), interval(-1, 1), ([0.5], 0), CFG, 500)
    assert est.value == 1.0 and est.stderr == 0.0


def test_point_target_is_polar_in_two_dimensions():
    est = estimate_hitting_prob(model(BROWNIAN_2D), Ball([0.0, 0.0], 1e-300), Ball([0.0, 0.0], 1.0),
                                ([0.5, 0.0], 0), CFG, 10_000)
    assert est.value <= 3 * math.sqrt(1.0 / 10_000)


def test_small_disc_matches_logarithmic_oracle():
    eps, n = 1e-3, 20_000
    est = estimate_hitting_prob(model(BROWNIAN_2D), Ball([0.0, 0.0], eps), Ball([0.0, 0.0], 1.0),
                                ([0.5, 0.0], 0), CFG, n)
    assert within(est, math.log(2.0) / math.log(1.0 / eps))


def test_interval_hitting_matches_two_point_oracle():
    eps, x = 0.1, 0.5
    est = estimate_hitting_prob(model(BROWNIAN), interval(-eps, eps), interval(-1, 1), ([x], 0), CFG, 20_000)
    assert within(est, (1 - x) / (1 - eps))


def test_hitting_probability_shrinks_with_the_target():
    # shared seeds in 1D: a path entering a smaller centred target also enters the larger one
    R, vals = 0.4, []
    for k in (2, 4, 8, 16, 32):
        est = estimate_hitting_prob(model(BROWNIAN), Ball([0.0], R / k), Ball([0.0], 2 * R),
                                    ([0.5 * R], 0), SamplerConfig(step=1e-4, seed=34), 5000)
        vals.append(est)
    for big, small in zip(vals, vals[1:]):
        assert small.value <= big.value
    assert vals[-1].value - 3 * vals[-1].stderr > 0


# --- harmonic functions ---------------------------------------------------


def test_constant_data_is_reproduced_exactly_without_killing():
    mdl = model(JUMP2)
    res = estimate_harmonic(mdl, D, BoundaryData.constant(0.7, 2), [([0.3], 0), ([0.8], 1)], CFG, 2000)
    for r in res:
        assert r.value == pytest.approx(0.7, abs=1e-15) and r.stderr == pytest.approx(0.0, abs=1e-15)


def test_right_face_indicator_gives_linear_function():
    phi = boundary({"regimes": [{"family": "indicator_halfspace", "normal": [1.0], "offset": 1.0}]})
    res = estimate_harmonic(model(BROWNIAN), D, phi, [([x], 0) for x in (0.2, 0.5, 0.9)], CFG, 20_000)
    for x, r in zip((0.2, 0.5, 0.9), res):
        assert within(r, x)


def test_killed_paths_contribute_zero():
    mdl = model(BROWNIAN, switching={"rates": [["auto"]], "killing": [2.0]})
    (r,) = estimate_harmonic(mdl, D, BoundaryData.constant(1.0, 1), [([0.5], 0)], CFG, 20_000)
    assert r.killed_fraction > 0
    assert within(r, float(oracles.killed_exit_laplace(0.5, 2.0, 0.5)))
    assert abs(r.value - (1 - r.killed_fraction)) < 1e-12


def test_two_regime_harmonic_matches_coupled_oracle():
    mdl = model(JUMP2)
    phi = boundary({"regimes": [{"family": "indicator_halfspace", "normal": [1.0], "offset": 0.5},
                                0.5]}, m=2)
    xv, vals = oracles.coupled_oracle(mdl, 0.0, 1.0, phi, grid=1000)
    qs = [([0.3], 0), ([0.7], 1)]
    res = estimate_harmonic(mdl, D, phi, qs, SamplerConfig(step=2e-3, seed=35), 20_000)
    for (x, i), r in zip(qs, res):
        assert within(r, float(oracles.at(xv, vals, x)[i, 0]))


def test_query_outside_region_is_rejected():
    with pytest.raises(UsageError):
        estimate_harmonic(model(BROWNIAN), D, BoundaryData.constant(1.0, 1), [([1.5], 0)], CFG, 10)


AFFINE = st.builds(lambda c, s: {"family": "affine_clamped", "offset": c, "slope": [s],
                                 "lower": -5.0, "upper": 5.0},
                   st.floats(-2, 2), st.floats(-3, 3))


@settings(max_examples=10)
@given(AFFINE, st.floats(0.0, 2.0))
def test_monotone_in_boundary_data_on_shared_seeds(spec, gap):
    lo = boundary({"regimes": [spec, spec]}, m=2)
    hi = boundary({"regimes": [{**spec, "offset": spec["offset"] + gap, "lower": -5.0 + gap,
                                "upper": 5.0 + gap}] * 2}, m=2)
    qs = [([0.3], 0), ([0.6], 1)]
    cfg = SamplerConfig(step=5e-3, seed=36)
    a = estimate_harmonic(model(JUMP2), D, lo, qs, cfg, 300)
    b = estimate_harmonic(model(JUMP2), D, hi, qs, cfg, 300)
    for r1, r2 in zip(a, b):
        assert r1.value <= r2.value + 1e-12


@settings(max_examples=10)
@given(st.floats(0.0, 1.0), st.floats(0.01, 2.0))
def test_nonnegative_data_gives_nonnegative_estimates(offset, steep):
    phi = boundary({"regimes": [{"family": "logistic", "low": 0.0, "high": offset, "direction": [1.0],
                                 "threshold": 0.5, "steepness": steep}, 0.0]}, m=2)
    killed = model(JUMP2, switching={"rates": [[-2.0, 1.0], [2.0, "auto"]]})
    res = estimate_harmonic(killed, D, phi, [([0.5], 0), ([0.5], 1)], SamplerConfig(step=5e-3, seed=37), 300)
    assert all(r.sample_min >= 0 for r in res)


# --- Green operators ------------------------------------------------------


def test_zero_integrand_gives_exact_zero():
    est = estimate_green(model(JUMP2), 0, D, 0.0, [0.5], CFG, 500)
    assert est.value == 0.0 and est.stderr == 0.0


def test_unit_integrand_without_killing_is_the_exit_time():
    mdl = model(BROWNIAN)
    g = estimate_green(mdl, 0, Ball([0.0], 0.4), 1.0, [0.1], CFG, 3000, killing=0.0)
    e, _ = estimate_exit_time(mdl, Ball([0.0], 0.4), ([0.1], 0), CFG, 3000)
    assert g.value == pytest.approx(e.value, rel=1e-12)
    assert within(g, oracles.brownian_exit_mean(0.4, 0.1, 0.5))


def test_brownian_green_of_one_is_r_squared():
    r = 0.3
    est = estimate_green(model(BROWNIAN), 0, Ball([0.0], r), 1.0, [0.0], CFG, 20_000)
    assert within(est, r * r)


def test_green_with_killing_matches_frozen_oracle():
    kappa = 3.0
    xv, vals = oracles.coupled_oracle(model(BROWNIAN), 0.0, 1.0, frozen=True, killing=kappa,
                                      source=[lambda x: np.ones_like(x)], grid=1000)
    est = estimate_green(model(BROWNIAN), 0, D, 1.0, [0.4], CFG, 20_000, killing=kappa)
    assert within(est, float(oracles.at(xv, vals, [0.4])[0, 0]))


def test_curved_integrand_matches_at_coarse_step():
    # f = x^2 on (0, 1): G f = (x - x^4) / 6; here a left-endpoint rule is 5 se low,
    # the endpoint mean leaves a boundary-layer residual near 0.015 h
    sq = scalar_family({"family": "radial", "center": [0.0], "coefficients": [0.0, 0.0, 1.0],
                        "lower": 0.0, "upper": 1.0}, 1, "f")
    est = estimate_green(model(BROWNIAN), 0, D, sq, [0.5], SamplerConfig(step=0.01, seed=39), 200_000)
    assert within(est, (0.5 - 0.5 ** 4) / 6)


@settings(max_examples=10)
@given(st.floats(-2, 2), st.floats(-2, 2), st.floats(-2, 2), st.floats(-2, 2))
def test_green_is_linear_in_the_integrand(b1, a1, b2, a2):
    def f(b, a):
        return scalar_family({"family": "radial_bump", "base": b, "amplitude": a, "center": [0.5],
                              "width": 0.3}, 1, "f")
    cfg = SamplerConfig(step=5e-3, seed=38)
    mdl = model(JUMP2)
    g1 = estimate_green(mdl, 1, D, f(b1, a1), [0.4], cfg, 200)
    g2 = estimate_green(mdl, 1, D, f(b2, a2), [0.4], cfg, 200)
    g12 = estimate_green(mdl, 1, D, f(b1 + b2, a1 + a2), [0.4], cfg, 200)
    assert g12.value == pytest.approx(g1.value + g2.value, rel=1e-9, abs=1e-12)


# --- Levy system ----------------------------------------------------------


def test_zero_kernel_has_zero_residual():
    est = levy_system_residual(model(BROWNIAN), interval(-1, 0), interval(0.1, 0.4), 0, 1.0,
                               ([-0.3], 0), CFG, 500)
    assert est.value == 0.0 and est.detail["count"] == 0.0 and est.detail["compensator"] == 0.0


def test_uniform_kernel_compensator_matches_closed_form_along_paths():
    cfg, n, lam, rad = SamplerConfig(step=1e-2, seed=39), 300, 2.0, 0.5
    a_lo, a_hi, b_lo, b_hi = -1.0, 0.0, 0.1, 0.4
    est = levy_system_residual(model(LEVY1), interval(a_lo, a_hi), interval(b_lo, b_hi), 0, 1.0,
                               ([-0.3], 0), cfg, n, nodes=4096)
    # lam |B cap [x - rad, x + rad]| / (2 rad) on the left-endpoint grid of each path
    total = 0.0
    for tr in sample_paths(model(LEVY1), ([-0.3], 0), StopRule.at_horizon(1.0), cfg, n):
        ts, xs = tr.times, tr.positions[:, 0]
        for k in range(100):
            j = np.searchsorted(ts, k * 0.01 + 1e-12, side="right") - 1
            x = -0.3 if j < 0 else xs[j]
            if a_lo <= x <= a_hi:
                overlap = max(0.0, min(x + rad, b_hi) - max(x - rad, b_lo))
                total += 0.01 * lam * overlap / (2 * rad)
    assert est.detail["compensator"] == pytest.approx(total / n, rel=1e-3)
    assert abs(est.value) <= 3 * est.stderr


def test_state_dependent_kernel_residual_refines():
    mdl = model(LEVY1, jumps=[{"regime": 1, "intensity": 2.0,
                               "ratio": {"family": "logistic", "low": 0.2, "high": 1.0,
                                         "direction": [1.0], "threshold": -0.5, "steepness": 8.0},
                               "density": {"family": "uniform_ball", "radius": 0.5}}])
    res = [levy_system_residual(mdl, interval(-1, 0), interval(0.1, 0.4), 0, 1.0, ([-0.3], 0),
                                SamplerConfig(step=h, seed=40), 50_000) for h in (4e-3, 2e-3)]
    for r in res:
        assert abs(r.value) <= 3 * r.stderr
    assert abs(res[1].value) <= abs(res[0].value) + 2 * res[1].stderr


def test_overlapping_sets_are_rejected():
    with pytest.raises(UsageError):
        levy_system_residual(model(LEVY1), interval(-1, 0.2), interval(0.1, 0.4), 0, 1.0,
                             ([-0.3], 0), CFG, 10)
