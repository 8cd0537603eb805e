import itertools

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

import oracles
from models import BROWNIAN, JUMP2, RIGHT_FACE, boundary, model
from switchjd.coupled_solver import (FrozenSamples, compare_direct, estimate_boundary_term,
                                     fixed_point_solve, green_apply)
from switchjd.errors import ConfigError, DivergenceError, UsageError
from switchjd.estimators import estimate_exit_time, estimate_harmonic
from switchjd.lattice import LatticeField, build_lattice
from switchjd.model import BoundaryData
from switchjd.regions import Ball, Box, interval
from switchjd.sampler import SamplerConfig

D = interval(0.0, 1.0)
LAT = build_lattice(D, 0.1)
CFG = SamplerConfig(step=2e-3, seed=51)


# --- lattices -------------------------------------------------------------


def test_unit_interval_quarter_spacing():
    assert np.allclose(build_lattice(D, 0.25).nodes[:, 0], [0.25, 0.5, 0.75])


def test_disc_lattice_matches_direct_enumeration():
    s = 0.5
    expected = sorted((a * s, b * s) for a, b in itertools.product(range(-2, 3), repeat=2)
                      if 1.0 - np.hypot(a * s, b * s) > s / 2)
    lat = build_lattice(Ball([0.0, 0.0], 1.0), s)
    assert [tuple(p) for p in lat.nodes] == expected
    assert len(lat) == 9


@pytest.mark.parametrize("spacing", [1.0, 2.0, -0.1, 0.0])
def test_spacing_too_large_or_nonpositive_is_rejected(spacing):
    with pytest.raises(ConfigError):
        build_lattice(D, spacing)


@settings(max_examples=20)
@given(st.floats(0.02, 0.3), st.floats(-1, 1), st.floats(0.5, 2), st.integers(0, 2 ** 16))
def test_nodes_are_interior_and_interpolation_is_exact_at_nodes(s, lo, width, seed):
    region = Box([lo, lo], [lo + width, lo + 0.8 * width])
    if s >= 2 * region.inradius:
        return
    try:
        lat = build_lattice(region, s)
    except ConfigError:
        # only when no grid point keeps the half-spacing margin
        axes = [s * np.arange(np.ceil(a / s), np.floor(b / s) + 1) for a, b in zip(region.lower, region.upper)]
        grid = np.array(list(itertools.product(*axes))).reshape(-1, 2)
        assert not np.any(region.signed_distance(grid) > s / 2)
        return
    assert np.all(region.signed_distance(lat.nodes) > s / 2)
    vals = np.random.default_rng(seed).normal(size=len(lat))
    got, ex = lat.interpolate(vals, lat.nodes)
    assert np.allclose(got, vals, rtol=0, atol=1e-12) and not ex.any()


def test_constant_extrapolation_outside_the_node_hull():
    vals = np.linspace(0.0, 1.0, len(LAT))
    got, ex = LAT.interpolate(vals, np.array([[0.02], [0.95], [0.55]]))
    assert np.allclose(got, [0.0, 1.0, 0.5625]) and ex.tolist() == [True, True, False]


def test_field_csv_roundtrip():
    fld = LatticeField(LAT, np.arange(18.0).reshape(9, 2) / 7, np.full((9, 2), 0.1))
    back = LatticeField.from_csv(fld.to_csv(), LAT)
    assert np.array_equal(back.values, fld.values) and np.array_equal(back.stderr, fld.stderr)
    assert fld.to_csv().splitlines()[0] == "node,x_1,regime,value,stderr"


def test_field_rejects_non_finite_values():
    with pytest.raises(ValueError):
        LatticeField(LAT, np.full((9, 1), np.nan))


# --- boundary term --------------------------------------------------------


def test_boundary_term_without_killing_equals_harmonic_estimate():
    phi = boundary({"regimes": [RIGHT_FACE]})
    v = estimate_boundary_term(model(BROWNIAN), 0, D, phi, LAT, CFG, 500)
    u = estimate_harmonic(model(BROWNIAN), D, phi, LAT, CFG, 500)
    assert np.array_equal(v.values, u.values)


def test_boundary_term_with_killing_is_discounted():
    kappa = 2.0
    mdl = model(BROWNIAN, switching={"rates": [["auto"]], "killing": [kappa]})
    v = estimate_boundary_term(mdl, 0, D, BoundaryData.constant(1.0, 1), LAT, CFG, 5000)
    exact = oracles.killed_exit_laplace(LAT.nodes[:, 0], kappa, 0.5)
    assert np.all(v.values[:, 0] < 1.0)
    assert np.all(np.abs(v.values[:, 0] - exact) <= 3 * v.stderr[:, 0])


def test_boundary_term_matches_frozen_oracle_in_jump_regime():
    mdl = model(JUMP2)
    phi = boundary({"regimes": [RIGHT_FACE, 0.5]}, m=2)
    xv, vals = oracles.coupled_oracle(mdl, 0.0, 1.0, phi, frozen=True, grid=1000)
    ref = oracles.at(xv, vals, LAT.nodes[:, 0])
    for i in (0, 1):
        v = estimate_boundary_term(mdl, i, D, phi, LAT, CFG, 5000)
        assert np.all(np.abs(v.values[:, 0] - ref[i]) <= 3 * v.stderr[:, 0]), i


# --- green_apply ----------------------------------------------------------


def test_green_of_zero_is_zero():
    out = green_apply(model(JUMP2), 0, D, np.zeros(len(LAT)), 1, LAT, CFG, 200)
    assert np.all(out.values == 0.0) and np.all(out.stderr == 0.0)


def test_green_of_constant_is_rate_times_exit_time_on_shared_seeds():
    c = 0.7
    mdl = model(BROWNIAN, dimensions={"d": 1, "m": 2}, regimes=[{"diffusion": 0.5}] * 2,
                switching={"rates": [[0.0, c], [c, 0.0]]})
    n = 400
    out = green_apply(mdl, 0, D, np.ones(len(LAT)), 1, LAT, CFG, n)
    for k, x in enumerate(LAT.nodes[:, 0]):
        est, _ = estimate_exit_time(model(BROWNIAN), D, ([x], 0), CFG, n, first_path=k * n)
        assert out.values[k, 0] == pytest.approx(c * est.value, rel=1e-9)


def test_green_of_affine_data_matches_frozen_oracle():
    mdl = model(JUMP2)
    g = 0.2 + 0.6 * LAT.nodes[:, 0]
    out = green_apply(mdl, 0, D, g, 1, LAT, CFG, 5000)
    lo, hi = LAT.lower[0], LAT.upper[0]
    q01 = mdl.q_row(np.zeros((1, 1)), 0)[0, 1]
    src = [lambda x: q01 * (0.2 + 0.6 * np.clip(x, lo, hi)), lambda x: np.zeros_like(x)]
    xv, vals = oracles.coupled_oracle(mdl, 0.0, 1.0, frozen=True, source=src, grid=1000)
    ref = oracles.at(xv, vals, LAT.nodes[:, 0])[0]
    assert np.all(np.abs(out.values[:, 0] - ref) <= 3 * out.stderr[:, 0])


def test_green_rejects_same_regime_and_bad_shapes():
    with pytest.raises(UsageError):
        green_apply(model(JUMP2), 0, D, np.ones(len(LAT)), 0, LAT, CFG, 10)
    with pytest.raises(UsageError):
        green_apply(model(JUMP2), 0, D, np.ones(3), 1, LAT, CFG, 10)


# --- fixed point ----------------------------------------------------------


def test_single_regime_converges_in_one_iteration():
    phi = boundary({"regimes": [RIGHT_FACE]})
    u, trace = fixed_point_solve(model(BROWNIAN), D, phi, LAT, CFG, 300)
    v = estimate_boundary_term(model(BROWNIAN), 0, D, phi, LAT, CFG, 300)
    assert trace.iterations == 1 and trace.converged
    assert np.array_equal(u.values, v.values)


def test_decoupled_regimes_keep_their_boundary_terms():
    mdl = model(JUMP2, switching={"rates": [[0.0, 0.0], [0.0, 0.0]]})
    phi = boundary({"regimes": [RIGHT_FACE, 0.5]}, m=2)
    u, trace = fixed_point_solve(mdl, D, phi, LAT, CFG, 300)
    assert trace.iterations == 1
    for i in (0, 1):
        v = estimate_boundary_term(mdl, i, D, phi, LAT, CFG, 300)
        assert np.array_equal(u.values[:, i], v.values[:, 0])


def test_growing_updates_raise_divergence():
    nn = len(LAT)
    z = np.zeros(nn)
    fs = FrozenSamples(LAT, 1, 10, np.ones(nn), 1.2 * np.eye(nn), z, np.zeros((nn, nn)),
                       np.zeros((nn, 1, 1)), z, z)
    with pytest.raises(DivergenceError):
        fixed_point_solve(model(BROWNIAN), D, None, LAT, CFG, 10, samples=fs)


def test_update_norms_contract_on_the_jump_model():
    phi = boundary({"regimes": [RIGHT_FACE, 0.5]}, m=2)
    _, trace = fixed_point_solve(model(JUMP2), D, phi, LAT, CFG, 2000, tol=1e-8)
    assert trace.converged and len(trace.ratios) >= 3
    assert all(r < 1 for r in trace.ratios)


@settings(max_examples=5)
@given(st.floats(-2, 2), st.floats(-2, 2))
def test_pipeline_is_linear_in_boundary_data(a, b):
    mdl = model(JUMP2)
    face = {**RIGHT_FACE}
    one = BoundaryData.constant(1.0, 2)
    f = boundary({"regimes": [face, face]}, m=2)
    mix = boundary({"regimes": [{**face, "inside": a + b, "outside": b}] * 2}, m=2)
    cfg = SamplerConfig(step=5e-3, seed=52)
    solve = lambda phi: fixed_point_solve(mdl, D, phi, LAT, cfg, 100, tol=1e-12)[0].values
    assert np.allclose(solve(mix), a * solve(f) + b * solve(one), rtol=1e-9, atol=1e-10)


def test_positivity_dichotomy():
    mdl = model(JUMP2)
    face = boundary({"regimes": [RIGHT_FACE, 0.0]}, m=2)
    u, _ = fixed_point_solve(mdl, D, face, LAT, CFG, 3000)
    assert np.all(u.values - 3 * u.stderr > 0)
    z, _ = fixed_point_solve(mdl, D, BoundaryData.constant(0.0, 2), LAT, CFG, 300)
    assert np.all(z.values == 0.0)


# --- direct comparison ----------------------------------------------------


def test_single_regime_direct_comparison_is_noise():
    phi = boundary({"regimes": [RIGHT_FACE]})
    u, _ = fixed_point_solve(model(BROWNIAN), D, phi, LAT, CFG, 3000)
    rep = compare_direct(u, model(BROWNIAN), D, phi, CFG.replace(seed=53), 3000)
    assert rep.max_abs_z < 4
    assert rep.to_dict()["worst"]["regime"] == 1


def test_constant_data_both_ways_equal_the_constant():
    one = BoundaryData.constant(1.0, 2)
    u, _ = fixed_point_solve(model(JUMP2), D, one, LAT, CFG, 500, tol=1e-13)
    rep = compare_direct(u, model(JUMP2), D, one, CFG.replace(seed=54), 500)
    assert np.allclose(rep.direct.values, 1.0, atol=1e-12)
    assert np.allclose(u.values, 1.0, atol=1e-9)
    assert rep.max_abs_diff < 1e-9
