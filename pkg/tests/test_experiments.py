import json
import math

import numpy as np
import pytest
import yaml

from isacbf import cli
from isacbf.experiments import (
    AngleSet,
    ExperimentError,
    ExperimentSpec,
    RunRecord,
    angle_sets,
    atomic_write,
    emit_plot_script,
    exit_code_for,
    load_experiment,
    run_scenario,
    solve_scenario,
    sweep_antennas,
    sweep_distance,
    validate_record,
    write_sweep,
)
from isacbf.metrics import component_decomposition, to_dbm
from isacbf.scene import Scenario

from conftest import make_scenario


def write_yaml(path, doc):
    path.write_text(yaml.safe_dump(doc))
    return path


@pytest.fixture(scope="module")
def fig2_run(tmp_path_factory):
    from conftest import CONFIGS

    out = tmp_path_factory.mktemp("fig2")
    record, paths = run_scenario(CONFIGS / "fig2.yaml", out)
    return record, paths, out


def active_sinr_scenario():
    """Two close users at 2 bits/s/Hz: both SINR constraints bind."""
    return make_scenario(n=10, users=((20, 20), (25, 20)), rate_floor=2.0)


# -- single runs and records ------------------------------------------------------------

def test_run_scenario_outputs(fig2_run):
    record, paths, out = fig2_run
    assert record.converged
    assert set(paths) == {"record", "beampattern", "beampattern_sdr", "trace"}
    for p in paths.values():
        assert p.is_file()
    assert not list(out.glob(".*"))  # no temp files left behind
    assert to_dbm(record.final_power_mw) - to_dbm(record.sdr_power_mw) <= 0.2
    lines = paths["beampattern"].read_text().splitlines()
    assert lines[0] == "angle_deg,total_dBm,comm_dBm,radar_dBm" and len(lines) == 182


def test_record_roundtrip_is_lossless(fig2_run):
    record, paths, _ = fig2_run
    again = RunRecord.load(paths["record"])
    assert again.to_json() == record.to_json()
    assert np.array_equal(again.covariances[0], record.covariances[0])
    assert np.array_equal(again.vectors[0], record.vectors[0])
    raw = json.loads(paths["record"].read_text())
    assert len(raw["covariances"][0][0][0]) == 2  # [re, im] pairs


def test_rerun_is_byte_identical(fig2_run, tmp_path):
    from conftest import CONFIGS

    _, paths, _ = fig2_run
    _, paths2 = run_scenario(CONFIGS / "fig2.yaml", tmp_path)
    for key in ("beampattern", "beampattern_sdr", "trace"):
        assert paths[key].read_bytes() == paths2[key].read_bytes()


def test_malformed_record():
    with pytest.raises(ExperimentError):
        RunRecord.from_json('{"status": "converged"}')
    with pytest.raises(ExperimentError):
        RunRecord.from_json("not json")


# -- validation ---------------------------------------------------------------------------

def test_fresh_record_validates(fig2_run):
    record, _, _ = fig2_run
    report = validate_record(record)
    assert report.passed, report.text()
    names = [c.name for c in report.checks]
    assert "vector:rate[1]" in names and "trace:pattern_lo[-30]" in names


def test_halved_covariance_fails_rate():
    record = solve_scenario(active_sinr_scenario())
    assert validate_record(record).passed
    record.covariances[0] = 0.5 * record.covariances[0]
    report = validate_record(record)
    failed = {c.name for c in report.checks if not c.passed}
    assert "trace:rate[1]" in failed
    assert not report.passed


def test_zeroed_radar_covariance_fails_pattern(fig2_run):
    record, paths, _ = fig2_run
    rec = RunRecord.load(paths["record"])
    assert np.trace(rec.radar_covariance).real > 0.1 * rec.final_power_mw
    rec.radar_covariance = np.zeros_like(rec.radar_covariance)
    failed = {c.name for c in validate_record(rec).checks if not c.passed}
    assert any(name.startswith("vector:pattern_lo") for name in failed)


# -- sweeps ----------------------------------------------------------------------------------

def test_sweep_antennas_rows_and_failures(tmp_path):
    base = make_scenario(n=10)
    res = sweep_antennas(base, [10])
    assert res.csv.splitlines() == ["N,power_dBm,iters", f"10,{res.csv.splitlines()[1].split(',')[1]},0"]
    res = sweep_antennas(base, [1, 10])
    rows = res.csv.splitlines()
    assert rows[1] == "1,nan,-1"
    assert math.isfinite(float(rows[2].split(",")[1]))
    paths = write_sweep(res, tmp_path, "antennas.csv")
    assert (tmp_path / "runs" / "N1" / "error.txt").is_file()
    assert paths["N10"].is_file()


def test_sweep_parallel_matches_serial():
    base = make_scenario(n=10)
    serial = sweep_antennas(base, [10, 12, 15])
    parallel = sweep_antennas(base, [10, 12, 15], workers=2)
    assert serial.csv == parallel.csv


def test_sweep_distance_layout():
    base = make_scenario(n=10, users=((20, 10),), targets=((-30, 10),))
    res = sweep_distance(base, [10, 20], [1, 5])
    lines = res.csv.splitlines()
    assert lines[0] == "swept_entity,distance_m,delta_deg,power_dBm"
    assert [l.split(",")[:3] for l in lines[1:]] == [
        ["target", "10", "1"], ["target", "20", "1"], ["target", "10", "5"], ["target", "20", "5"],
        ["user", "10", "1"], ["user", "20", "1"], ["user", "10", "5"], ["user", "20", "5"]]
    # the fixed entity sits at 10 m in every run
    for rec, (entity, d, _, _) in zip(res.records, res.rows):
        sc = rec.scenario
        assert sc["users"][0]["distance_m"] == (d if entity == "user" else 10)
        assert sc["targets"][0]["distance_m"] == (d if entity == "target" else 10)


def test_every_row_reproducible_from_record():
    base = make_scenario(n=10)
    res = sweep_antennas(base, [10, 12])
    for (n, p, it), rec in zip(res.rows, res.records):
        assert rec.scenario["num_antennas"] == n
        assert p == to_dbm(rec.final_power_mw) and it == rec.iterations
        assert rec.sdr_power_mw <= rec.final_power_mw * (1 + 1e-7)


def test_angle_sets_components():
    base = make_scenario(n=10, rate_floor=2.0)
    sets = [AngleSet("a", (20.0,), (-30.0,)), AngleSet("e", (0.0,), (0.0,))]
    res = angle_sets(base, sets)
    assert res.csv.splitlines()[0] == "set,users_deg,targets_deg,power_dBm,iters"
    assert res.csv.splitlines()[1].startswith("a,20,-30,")
    assert all(r.converged for r in res.records)


# -- experiment specs and exit codes ----------------------------------------------------

def test_experiment_spec_validation(tmp_path, configs):
    spec = load_experiment(configs / "fig3_antennas.yaml")
    assert spec.kind == "antenna_sweep" and spec.antennas == (10, 12, 15, 17, 20)
    with pytest.raises(ExperimentError):
        ExperimentSpec("antenna_sweep", spec.scenario)
    with pytest.raises(ExperimentError):
        ExperimentSpec("nonsense", spec.scenario)
    bad = write_yaml(tmp_path / "x.yaml", {"kind": "antenna_sweep", "scenario": "fig3.yaml", "extra": 1})
    with pytest.raises(ExperimentError, match="unknown"):
        load_experiment(bad)


def test_exit_codes_total():
    assert exit_code_for("converged") == 0
    assert exit_code_for("infeasible") == 3
    for status in ("max_iterations", "numerical_failure", "unbounded"):
        assert exit_code_for(status) in (3, 4)


def test_cli_solve_and_validate(tmp_path, configs, capsys):
    out = tmp_path / "o"
    assert cli.main(["solve", "-c", str(configs / "fig2.yaml"), "-o", str(out)]) == 0
    assert cli.main(["validate", str(out / "record.json")]) == 0
    assert "overall: PASS" in capsys.readouterr().out
    rec = RunRecord.load(out / "record.json")
    rec.radar_covariance = np.zeros_like(rec.radar_covariance)
    rec.save(out / "broken.json")
    assert cli.main(["validate", str(out / "broken.json")]) == 1
    assert cli.main(["validate", str(tmp_path / "missing.json")]) == 2


def test_cli_malformed_config_writes_nothing(tmp_path):
    bad = tmp_path / "bad.yaml"
    bad.write_text("num_antennas: [\n")
    out = tmp_path / "o"
    assert cli.main(["solve", "-c", str(bad), "-o", str(out)]) == 2
    assert not out.exists()
    doc = make_scenario().to_dict()
    doc["colour"] = "red"
    assert cli.main(["solve", "-c", str(write_yaml(tmp_path / "u.yaml", doc)), "-o", str(out)]) == 2
    assert not out.exists()


def test_cli_infeasible_and_non_converged(tmp_path):
    infeasible = make_scenario(n=6, sidelobe_region_enabled=True, sidelobe_level=0.0,
                               sidelobe_tolerance=1e-6).to_dict()
    p = write_yaml(tmp_path / "inf.yaml", infeasible)
    assert cli.main(["solve", "-c", str(p), "-o", str(tmp_path / "a")]) == 3
    assert RunRecord.load(tmp_path / "a" / "record.json").status == "infeasible"
    hard = make_scenario(n=10, targets=((-30, 20), (-60, 20)), include_radar_covariance=False).to_dict()
    p = write_yaml(tmp_path / "hard.yaml", hard)
    assert cli.main(["solve", "-c", str(p), "-o", str(tmp_path / "b"), "--max-irm-iterations", "1"]) == 4


def test_cli_sweeps(tmp_path, configs, capsys):
    assert cli.main(["sweep-antennas", "-c", str(configs / "fig3_antennas.yaml"), "-o", str(tmp_path),
                     "--antennas", "10,20"]) == 0
    assert (tmp_path / "antennas.csv").read_text().count("\n") == 3
    assert cli.main(["angle-sets", "-c", str(configs / "fig3_antennas.yaml"), "-o", str(tmp_path)]) == 2


# -- plotting script ---------------------------------------------------------------------

def test_plot_script(fig2_run, tmp_path):
    _, paths, _ = fig2_run
    a = emit_plot_script([paths["beampattern"]], tmp_path / "one.py")
    text = a.read_text()
    for col in ("angle_deg", "total_dBm", "comm_dBm", "radar_dBm"):
        assert f'"{col}"' in text
    compile(text, "one.py", "exec")
    b = emit_plot_script([paths["beampattern"], paths["trace"]], tmp_path / "two.py")
    assert "plt.subplots(2, 1" in b.read_text()
    c = emit_plot_script([paths["beampattern"], paths["trace"]], tmp_path / "three.py")
    assert b.read_bytes().replace(b"two.py", b"") == c.read_bytes().replace(b"three.py", b"")
    d = emit_plot_script([paths["beampattern"], paths["trace"]], tmp_path / "two.py")
    assert d.read_bytes() == b.read_bytes()
    with pytest.raises(ExperimentError):
        emit_plot_script([tmp_path / "nope.csv"], tmp_path / "x.py")
    other = tmp_path / "other.csv"
    other.write_text("a,b\n1,2\n")
    with pytest.raises(ExperimentError):
        emit_plot_script([other], tmp_path / "x.py")


def test_atomic_write(tmp_path):
    p = tmp_path / "sub" / "f.txt"
    atomic_write(p, "a\nb\n")
    assert p.read_bytes() == b"a\nb\n"
    atomic_write(p, "c\n")
    assert p.read_text() == "c\n"
    assert [x.name for x in p.parent.iterdir()] == ["f.txt"]


def test_decomposition_experiment_via_solve(tmp_path, configs):
    out = tmp_path / "dec"
    assert cli.main(["solve", "-c", str(configs / "fig4_decomposition.yaml"), "-o", str(out)]) == 0
    row = next(l for l in (out / "beampattern.csv").read_text().splitlines() if l.startswith("0,"))
    _, total, comm, radar = (float(x) for x in row.split(","))
    assert comm > radar
    assert cli.main(["solve", "-c", str(configs / "fig3_antennas.yaml"), "-o", str(tmp_path / "x")]) == 2
    assert not (tmp_path / "x").exists()


def test_fig4_components(configs):
    """Communication dominates the radar component at the user angle for
    set (a) and at the shared angle for set (e)."""
    spec = load_experiment(configs / "fig4_angle_sets.yaml")
    sets = [s for s in spec.sets if s.label in ("a", "e")]
    res = angle_sets(spec.scenario, sets)
    for s, rec in zip(sets, res.records):
        sc = Scenario.from_dict(rec.scenario)
        comm, radar, _ = component_decomposition(rec.beamformers(), sc.array, [s.users_deg[0]])
        assert comm[0] > radar[0], s.label
