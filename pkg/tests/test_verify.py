import json

import numpy as np
import pytest

import oracles
from models import (BROWNIAN, HARNACK_FAMILY, JUMP2, LEVY1, RIGHT_FACE, SYM2, boundary, model)
from switchjd.errors import UsageError
from switchjd.families import Constant
from switchjd.lattice import build_lattice
from switchjd.model import BoundaryData
from switchjd.regions import interval
from switchjd.sampler import SamplerConfig, StopRule, simulate
from switchjd.verify import (TheoremReport, check_maximum_principle, check_positivity,
                             estimate_harnack_constant, exit_time_bound_suite, hitting_lower_check,
                             levy_system_check)

D = interval(0.0, 1.0)
LAT = build_lattice(D, 0.1)
CFG = SamplerConfig(step=2e-3, seed=61)


# --- report invariants ----------------------------------------------------


def test_fail_needs_witness_and_inconclusive_needs_budget():
    with pytest.raises(UsageError):
        TheoremReport("Positivity", "fail", {}, "h", 0)
    with pytest.raises(UsageError):
        TheoremReport("Positivity", "inconclusive", {}, "h", 0)
    with pytest.raises(UsageError):
        TheoremReport("Positivity", "pass", {}, "h", 0, defect=True)
    with pytest.raises(UsageError):
        TheoremReport("Riemann", "pass", {}, "h", 0)


def test_exit_codes_and_json():
    ok = TheoremReport("Harnack", "pass", {"c": 1.5}, "abc", 3)
    bad = TheoremReport("Harnack", "fail", {}, "abc", 3, witness={"node": 1})
    bug = TheoremReport("MaxPrinciple-I", "fail", {}, "abc", 3, witness={"node": 1}, defect=True)
    unsure = TheoremReport("Harnack", "inconclusive", {}, "abc", 3, budget={"paths": 10})
    assert [r.exit_code for r in (ok, bad, bug, unsure)] == [0, 1, 4, 0]
    assert json.loads(ok.to_json())["evidence"] == {"c": 1.5}


# --- maximum principle ----------------------------------------------------


def test_constant_data_with_markovian_switching_passes():
    rep = check_maximum_principle(model(JUMP2), D, BoundaryData.constant(1.0, 2), LAT, CFG, 300)
    assert rep.verdict == "pass"
    assert rep.evidence["u_min"] == rep.evidence["u_max"] == 1.0
    assert rep.evidence["pathwise_violations"] == 0


def test_data_with_strict_gap_shows_interior_gap():
    phi = boundary({"regimes": [RIGHT_FACE, 0.5]}, m=2)
    xv, vals = oracles.coupled_oracle(model(JUMP2), 0.0, 1.0, phi, grid=1000)
    assert oracles.at(xv, vals, LAT.nodes[:, 0]).max() < 1.0
    rep = check_maximum_principle(model(JUMP2), D, phi, LAT, CFG, 2000)
    assert rep.verdict == "pass" and rep.evidence["gap_nodes"] > 0


def test_killing_gives_a_gap_below_the_constant():
    killed = model(BROWNIAN, switching={"rates": [["auto"]], "killing": [2.0]})
    rep = check_maximum_principle(killed, D, BoundaryData.constant(1.0, 1), LAT, CFG, 2000)
    assert rep.verdict == "pass" and rep.evidence["killed_fraction"] > 0


def test_wrongly_capped_data_is_a_pathwise_defect():
    capped = BoundaryData((Constant(1.0), Constant(1.0)), declared_bound=0.5)
    rep = check_maximum_principle(model(JUMP2), D, capped, LAT, CFG, 100)
    assert rep.verdict == "fail" and rep.defect and rep.exit_code == 4
    assert rep.witness["kind"] == "pathwise bound" and rep.witness["path_value"] == 1.0
    assert "x" in rep.witness and "regime" in rep.witness


def test_verdicts_are_deterministic():
    phi = boundary({"regimes": [RIGHT_FACE, 0.5]}, m=2)
    a = check_maximum_principle(model(JUMP2), D, phi, LAT, CFG, 200).to_dict()
    b = check_maximum_principle(model(JUMP2), D, phi, LAT, CFG.replace(workers=2, chunk=333), 200).to_dict()
    assert a == b


# --- positivity -----------------------------------------------------------


def test_zero_data_gives_exact_zero():
    rep = check_positivity(model(JUMP2), D, BoundaryData.constant(0.0, 2), LAT, CFG, 200)
    assert rep.verdict == "pass" and rep.evidence["u_max_abs"] == 0.0


def test_face_data_is_positive_everywhere():
    rep = check_positivity(model(JUMP2), D, boundary({"regimes": [RIGHT_FACE, 0.0]}, m=2), LAT, CFG, 2000)
    assert rep.verdict == "pass" and rep.evidence["min_lower_bound"] > 0


def test_reducible_switching_skips_the_check():
    reducible = model(JUMP2, switching={"rates": [["auto", 1.0], [0.0, "auto"]]})
    rep = check_positivity(reducible, D, boundary({"regimes": [RIGHT_FACE, 0.0]}, m=2), LAT, CFG, 200)
    assert rep.verdict == "inconclusive" and rep.budget["skipped"] is True


def test_exhausted_budget_is_inconclusive_not_fail():
    killed = model(BROWNIAN, switching={"rates": [["auto"]], "killing": [40.0]})
    rep = check_positivity(killed, D, boundary({"regimes": [RIGHT_FACE]}), LAT, CFG, 50, budget=50)
    assert rep.verdict == "inconclusive" and rep.budget["limit"] == 50
    assert rep.evidence["straddling"]


def test_negative_data_is_rejected():
    with pytest.raises(UsageError):
        check_positivity(model(JUMP2), D, BoundaryData.constant(-1.0, 2), LAT, CFG, 10)


# --- Harnack --------------------------------------------------------------


def _family(m):
    return [boundary(b, m=m) if isinstance(b, dict) else BoundaryData.constant(b, m)
            for b in HARNACK_FAMILY]


def test_constant_data_gives_unit_ratio():
    k = build_lattice(interval(0.2, 0.8), 0.1)
    phis = [BoundaryData.constant(c, 2) for c in (0.5, 1.0, 1.5, 2.0, 3.0)]
    rep = estimate_harnack_constant(model(JUMP2), D, k, phis, CFG, 100, levels=(1, 2))
    assert rep.verdict == "pass"
    assert rep.evidence["point_constant"] == pytest.approx(1.0, abs=1e-12)


def test_mirror_symmetric_data_give_equal_mirrored_values():
    k = build_lattice(interval(0.2, 0.8), 0.1)
    rep = estimate_harnack_constant(model(SYM2), D, k, _family(2), CFG, 2000, levels=(1, 2),
                                    symmetric=True, stability=1.0)
    sym = rep.evidence["symmetric_worst"]
    assert sym is not None and abs(sym["z"]) <= 3
    assert rep.evidence["point_constant"] >= 1.0


def test_harnack_needs_five_data():
    with pytest.raises(UsageError):
        estimate_harnack_constant(model(SYM2), D, LAT, _family(2)[:4], CFG, 10)


# --- exit times -----------------------------------------------------------


def test_brownian_exit_suite_passes_with_unit_ratio():
    reps = exit_time_bound_suite(model(BROWNIAN), [0.0], [0.1, 0.2, 0.4],
                                 SamplerConfig(step=1e-4, seed=62), 4000, offsets=(0.0,))
    assert [r.theorem for r in reps] == ["ExitUpper", "ExitLower", "ExitTail"]
    assert all(r.verdict == "pass" for r in reps)
    ev = reps[0].evidence
    assert ev["c_lower"] - 3 * 0.02 < 1.0 < ev["c_upper"] + 3 * 0.02


def test_bounded_drift_keeps_ratio_bounded_below():
    drifted = model(BROWNIAN, regimes=[{"diffusion": 0.5, "drift": 0.5}])
    reps = exit_time_bound_suite(drifted, [0.0], [0.1, 0.2, 0.4], SamplerConfig(step=1e-4, seed=63), 4000)
    assert reps[1].verdict == "pass" and reps[1].evidence["c_lower_bound"] > 0


def test_strong_drift_shows_a_trend_with_slope_witness():
    drifted = model(BROWNIAN, regimes=[{"diffusion": 0.5, "drift": 8.0}])
    reps = exit_time_bound_suite(drifted, [0.0], [0.05, 0.1, 0.2, 0.4], SamplerConfig(step=1e-4, seed=64),
                                 2000, offsets=(0.0,))
    assert reps[0].verdict == "fail" and reps[0].witness["kind"] == "trend"
    assert reps[0].witness["slope"] < 0


def test_exiting_jumps_only_shorten_exit_times():
    r = 0.3
    # ratio_z is an indicator of |z| > 2r up to a 1e-3-wide ramp; the density reaches 1
    jumpy = model(BROWNIAN, jumps=[{"regime": 1, "intensity": 3.0,
                                    "density": {"family": "uniform_ball", "radius": 1.0},
                                    "ratio_z": {"family": "radial", "center": [0.0],
                                                "coefficients": [-600.0, 1000.0, 0.0], "lower": 0.0,
                                                "upper": 1.0}}])
    stop = StopRule.exit_of(interval(-r, r))
    cfg = SamplerConfig(step=1e-3, seed=65)
    a = simulate(model(BROWNIAN), ([0.0], 0), stop, cfg, 3000)
    b = simulate(jumpy, ([0.0], 0), stop, cfg, 3000)
    assert np.all(b.time <= a.time + 1e-12)
    assert np.any(b.time < a.time)


# --- Levy system and hitting ----------------------------------------------


def test_levy_system_check_passes_on_uniform_kernel():
    rep = levy_system_check(model(LEVY1), [(interval(-1, 0), interval(0.1, 0.4), 0)], 1.0, ([-0.3], 0),
                            SamplerConfig(step=4e-3, seed=66), 20_000)
    assert rep.verdict == "pass"
    assert len(rep.evidence["rows"]) == 1


def test_levy_system_check_zero_kernel_is_exact():
    rep = levy_system_check(model(BROWNIAN), [(interval(-1, 0), interval(0.1, 0.4), 0)], 1.0,
                            ([-0.3], 0), SamplerConfig(step=4e-3, seed=67), 200)
    assert rep.verdict == "pass" and rep.evidence["rows"][0]["residual_h"] == 0.0


def test_hitting_lower_bound_holds_for_brownian_motion():
    rep = hitting_lower_check(model(BROWNIAN), [0.0], 0.4, [0.0], [0.3], SamplerConfig(step=5e-4, seed=68), 2000)
    assert rep.verdict == "pass"
    ps = [row["p"] for row in rep.evidence["rows"]]
    assert ps == sorted(ps, reverse=True) and ps[-1] > 0
