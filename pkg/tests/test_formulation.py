import numpy as np
import pytest

from isacbf.formulation import (
    FormulationError,
    P3Spec,
    build_p3,
    build_p4,
    extract_solution,
)
from isacbf.irm import null_eigvecs, rank_one_ratio
from isacbf.metrics import BeamformerError, BeamformerSet, rate, sinr, total_power, transmit_beampattern
from isacbf.scene import build_desired_pattern
from isacbf.sdp import ConicSolution, solve

from conftest import make_scenario


def test_structure_single_user():
    p = build_p3(make_scenario())
    assert [b.name for b in p.blocks] == ["W1", "Rd"]
    sinr_rows = [c for c in p.constraints if c.label.startswith("sinr")]
    pattern_rows = [c for c in p.constraints if c.label.startswith("pattern")]
    assert len(sinr_rows) == 1 and len(pattern_rows) == 10
    assert not p.lmis and not p.scalars


def test_structure_without_radar_covariance():
    p = build_p3(make_scenario(users=((20, 20), (45, 20)), include_radar_covariance=False))
    assert [b.name for b in p.blocks] == ["W1", "W2"]


def test_sinr_row_coefficients():
    sc = make_scenario(users=((20, 20), (45, 20)))
    spec = P3Spec.from_scenario(sc)
    p = build_p3(spec)
    row = p.constraints[0]
    rbar = 1.0
    H = spec.user_grams[0]
    assert np.allclose(row.terms["W1"], H)
    assert np.allclose(row.terms["W2"], -rbar * H)
    assert np.allclose(row.terms["Rd"], -rbar * H)
    assert row.rhs == pytest.approx(rbar * sc.users[0].noise_power)


def test_small_rate_floor_limit():
    sc = make_scenario(rate_floor=1e-12, users=((20, 20), (45, 20)))
    p = build_p3(sc)
    row = p.constraints[0]
    assert np.max(np.abs(row.terms["W2"])) < 1e-15
    assert 0 < row.rhs < 1e-11 * sc.users[0].noise_power


def test_bad_specs():
    spec = P3Spec.from_scenario(make_scenario())
    with pytest.raises(FormulationError):
        P3Spec(spec.user_grams, spec.noise, spec.sinr_threshold, (), np.array([]), np.array([]), np.array([]))
    with pytest.raises(FormulationError):
        P3Spec(spec.user_grams, spec.noise, spec.sinr_threshold, spec.pattern_grams,
               spec.upper, spec.lower, spec.angles)
    with pytest.raises(FormulationError):
        build_p4(spec, [np.eye(15)[:, :13]], 1.0)
    with pytest.raises(FormulationError):
        build_p4(spec, [np.eye(15)[:, :14]], 0.0)
    with pytest.raises(FormulationError):
        build_p3("not a scenario")


def test_fig2_solves_and_extracts(fig2):
    p = build_p3(fig2)
    sol, rep = solve(p)
    assert rep.status == "optimal"
    bf = extract_solution(sol, 1)
    assert total_power(bf) == pytest.approx(sol.objective, rel=1e-8)
    # every constraint holds when re-evaluated independently
    rbar = fig2.sinr_threshold
    assert sinr(bf, 0, fig2) >= rbar * (1 - 1e-6)
    pat = build_desired_pattern(fig2)
    B = transmit_beampattern(bf, fig2.array, pat.angles)
    tol = 1e-6 * pat.levels + 1e-8
    assert np.all(B >= pat.levels - pat.tolerances - tol)
    assert np.all(B <= pat.levels + pat.tolerances + tol)


def test_channel_metric_gives_same_optimum():
    a = make_scenario(n=10)
    b = make_scenario(n=10, pattern_metric="channel")
    sa, _ = solve(build_p3(a))
    sb, _ = solve(build_p3(b))
    assert sa.objective == pytest.approx(sb.objective, rel=1e-7)


def test_p4_structure():
    spec = P3Spec.from_scenario(make_scenario(n=8))
    p = build_p4(spec, [null_eigvecs(np.eye(8))], 2.0)
    assert len(p.lmis) == 1 and p.lmis[0].M.shape == (8, 7)
    assert p.objective["r"] == 2.0
    assert p.scalars[0].lower == 0.0


def test_p4_matches_p3_on_rank_one_instance():
    # one user and a single pattern sample at the user's own angle
    sc = make_scenario(n=6, targets=((20.0, 20.0),), beam_width=0.0, include_radar_covariance=False)
    s3, r3 = solve(build_p3(sc))
    assert r3.status == "optimal"
    W = s3.blocks["W1"]
    assert rank_one_ratio(W) < 1e-6
    s4, r4 = solve(build_p4(sc, [null_eigvecs(W)], 1.0))
    assert r4.status == "optimal"
    assert s4.objective == pytest.approx(s3.objective, rel=1e-6)
    assert s4.scalars["r"] <= 1e-6 * np.trace(W).real


def test_p4_power_is_bounded_below_by_p3():
    sc = make_scenario(n=8, targets=((-30, 20), (-60, 20)), include_radar_covariance=False)
    s3, _ = solve(build_p3(sc))
    for weight in (0.1, 1.0, 10.0):
        s4, r4 = solve(build_p4(sc, [null_eigvecs(s3.blocks["W1"])], weight))
        power = s4.objective - weight * s4.scalars["r"]
        assert power >= s3.objective - 1e-7 * s3.objective


def test_extract_identity_and_symmetrization():
    sol = ConicSolution({"W1": np.eye(3), "Rd": np.eye(3)}, {}, 6.0)
    bf = extract_solution(sol, 1)
    assert np.array_equal(bf.covariances[0], np.eye(3))
    assert np.array_equal(bf.radar_covariance, np.eye(3))
    H = np.array([[2, 1j], [-1j, 2]])
    bf = extract_solution(ConicSolution({"W1": H}, {}, 4.0), 1)
    assert np.array_equal(bf.covariances[0], H)
    assert np.array_equal(bf.radar_covariance, np.zeros((2, 2)))


def test_extract_rejects_indefinite():
    with pytest.raises(BeamformerError):
        extract_solution(ConicSolution({"W1": np.diag([1.0, -0.1]), "Rd": np.eye(2)}, {}, 0.0), 1)


def test_sinr_row_equals_rate_condition_on_rank_one_points():
    rng = np.random.default_rng(12)
    sc = make_scenario(n=5, users=((20, 20), (50, 15)), rate_floor=2.0)
    spec = P3Spec.from_scenario(sc)
    p = build_p3(spec)
    for _ in range(50):
        ws = [rng.standard_normal(5) + 1j * rng.standard_normal(5) for _ in range(2)]
        ws = [w * np.sqrt(10 ** rng.uniform(0, 6)) for w in ws]
        R = np.eye(5) * 10 ** rng.uniform(-3, 3)
        vals = {"W1": np.outer(ws[0], ws[0].conj()), "W2": np.outer(ws[1], ws[1].conj()), "Rd": R}
        bf = BeamformerSet((vals["W1"], vals["W2"]), R, tuple(ws))
        for k in range(2):
            row = p.constraints[k]
            lhs = p.evaluate(row.terms, vals) - row.rhs
            gamma = sinr(bf, k, sc, use_vectors=True)
            assert (lhs >= 0) == (gamma >= spec.sinr_threshold) or abs(gamma - spec.sinr_threshold) < 1e-9
            assert (rate(gamma) >= sc.rate_floor) == (gamma >= spec.sinr_threshold)
