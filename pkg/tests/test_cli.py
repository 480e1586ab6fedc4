import json

import numpy as np
import pytest

from main import main
from src.config import RunConfig, load_config
from src.db import ProtocolStore, SweepJournal
from src.errors import ConfigError, CorruptStateError
from src.records import ModelRecord, read_csv

PROTOCOL_HEADER = "step,t,u,mu,control_hamiltonian,case_label"


def header(path):
    lines = path.read_text(encoding="utf-8").splitlines()
    return next(line for line in lines if not line.startswith("#"))


def test_config_round_trips_losslessly(small_config):
    config = load_config(small_config())
    assert RunConfig.model_validate_json(config.model_dump_json()) == config
    assert set(config.approaches) == {"nominal", "spectral", "frobenius"}
    assert config.eps_levels[0] == 0.0


@pytest.mark.parametrize(
    "overrides",
    [
        {"horizon": -1.0},
        {"unknown_key": 1},
        {"eps_levels": [0.1, 0.0]},
        {"model": {"n_qubits": 2, "couplings_file": "j.json"}},
        {"approaches": {"qaoa": {"zeta": 0.0}}},
        {"model": {"n_qubits": 20}},
    ],
)
def test_invalid_configs_are_rejected(small_config, overrides):
    with pytest.raises(ConfigError):
        load_config(small_config(**overrides))


def test_missing_config_exits_with_config_error(tmp_path):
    assert main(["optimize", "--config", str(tmp_path / "absent.json")]) == 2


def test_invalid_config_exits_with_config_error(small_config):
    assert main(["optimize", "--config", str(small_config(horizon=0.0))]) == 2


def test_optimize_writes_protocol_report_and_resolved_config(small_config, tmp_path, capsys):
    out = tmp_path / "run"
    assert main(["optimize", "--config", str(small_config()), "--out", str(out), "-q"]) == 0
    assert header(out / "protocol.csv") == PROTOCOL_HEADER
    table = read_csv(out / "protocol.csv")
    assert len(table) == 10
    assert np.all(np.isfinite(table[["t", "u", "mu", "control_hamiltonian"]].to_numpy()))
    report = json.loads((out / "report.json").read_text())
    assert report["n_steps"] == 10
    assert {"cost", "iterations", "m_lb", "m_ub", "zeta_threshold", "created_at"} <= report.keys()
    resolved = RunConfig.model_validate_json((out / "config.resolved.json").read_text())
    assert resolved.out_dir == out
    assert "total cost" in capsys.readouterr().out


def test_output_embeds_version_seed_and_grid(small_config, tmp_path):
    out = tmp_path / "run"
    main(["optimize", "--config", str(small_config()), "--out", str(out), "--seed", "42", "-q"])
    lines = (out / "protocol.csv").read_text().splitlines()
    assert lines[0].startswith("# robust-anneal ")
    assert "# seed=42" in lines
    assert any(line.startswith("# grid horizon=2.0 n_steps=10") for line in lines)
    assert any(line.startswith("# config=") for line in lines)


def test_optimize_is_reproducible(small_config, tmp_path):
    config = str(small_config())
    main(["optimize", "--config", config, "--out", str(tmp_path / "a"), "-q"])
    main(["optimize", "--config", config, "--out", str(tmp_path / "b"), "-q"])
    assert (tmp_path / "a" / "protocol.csv").read_bytes() == (tmp_path / "b" / "protocol.csv").read_bytes()


def test_floats_survive_the_csv_round_trip(small_config, tmp_path):
    out = tmp_path / "run"
    main(["optimize", "--config", str(small_config()), "--out", str(out), "-q"])
    stored = ProtocolStore(out)
    try:
        values = next(d["values"] for d in stored.all() if d.get("kind") == "protocol")
    finally:
        stored.close()
    np.testing.assert_array_equal(read_csv(out / "protocol.csv")["u"].to_numpy(), values)


def test_qaoa_baseline_writes_a_schedule(small_config, tmp_path):
    out = tmp_path / "run"
    assert main(["optimize", "--config", str(small_config()), "--out", str(out), "--qaoa", "-q"]) == 0
    schedule = read_csv(out / "schedule.csv")
    assert list(schedule.columns) == ["segment", "start", "duration", "u"]
    assert schedule["duration"].sum() == pytest.approx(2.0)


def test_robustness_writes_curves_and_bounds(small_config, tmp_path):
    out = tmp_path / "run"
    assert main(["robustness", "--config", str(small_config()), "--out", str(out), "-q"]) == 0
    assert header(out / "curves.csv") == "eps_hat,approach,worst_fidelity,mean_objective"
    assert header(out / "bounds.csv") == "eps_hat,approach,lipschitz_L,fidelity_lower_bound"
    curves = read_csv(out / "curves.csv")
    bounds = read_csv(out / "bounds.csv")
    assert set(curves["approach"]) == {"nominal", "spectral", "frobenius", "qaoa"}
    np.testing.assert_allclose(curves.loc[curves["eps_hat"] == 0.0, "worst_fidelity"], 1.0, atol=1e-12)
    joined = curves.merge(bounds, on=["eps_hat", "approach"])
    assert np.all(joined["worst_fidelity"] >= joined["fidelity_lower_bound"])


def test_robustness_reuses_stored_protocols(small_config, tmp_path, caplog):
    out = tmp_path / "run"
    config = str(small_config())
    main(["robustness", "--config", config, "--out", str(out), "-q"])
    first = (out / "curves.csv").read_bytes()
    caplog.clear()
    main(["robustness", "--config", config, "--out", str(out)])
    assert "reusing stored protocol" in caplog.text
    assert (out / "curves.csv").read_bytes() == first


def test_sweep_resume_matches_an_uninterrupted_run(small_config, tmp_path):
    config = str(small_config())
    full, partial = tmp_path / "full", tmp_path / "partial"
    assert main(["sweep", "--config", config, "--out", str(full), "-q"]) == 0
    assert main(["sweep", "--config", config, "--out", str(partial), "-q"]) == 0

    journal = partial / "models.jsonl"
    lines = journal.read_text().splitlines()
    assert len(lines) == 3
    journal.write_text(lines[0] + "\n")
    assert main(["sweep", "--config", config, "--out", str(partial), "--resume", "-q"]) == 0
    assert (full / "aggregate.csv").read_bytes() == (partial / "aggregate.csv").read_bytes()
    aggregate = read_csv(full / "aggregate.csv")
    assert set(aggregate["n_models"] + aggregate["n_failed"]) == {3}


def test_sweep_refuses_to_resume_from_a_corrupt_journal(small_config, tmp_path):
    config = str(small_config())
    out = tmp_path / "run"
    out.mkdir()
    (out / "models.jsonl").write_text("{not json\n")
    assert main(["sweep", "--config", config, "--out", str(out), "--resume", "-q"]) == 4
    assert main(["sweep", "--config", config, "--out", str(out), "--resume", "--restart", "-q"]) == 0
    assert list(out.glob("models.backup.restart.*.jsonl"))


def test_journal_rejects_records_from_another_configuration(tmp_path):
    SweepJournal(tmp_path, "aaaa").append(ModelRecord(index=0, fingerprint="aaaa", error="x"))
    assert len(SweepJournal(tmp_path, "aaaa").load()) == 1
    with pytest.raises(CorruptStateError):
        SweepJournal(tmp_path, "bbbb").load()


def test_list_formatted_store_is_rebuilt(tmp_path):
    doc = {"approach": "nominal", "fingerprint": "abc", "kind": "protocol", "values": [0.5], "horizon": 1.0}
    (tmp_path / "protocols.json").write_text(json.dumps([doc]))
    store = ProtocolStore(tmp_path)
    try:
        assert store.get("abc")["values"] == [0.5]
    finally:
        store.close()
    assert list(tmp_path.glob("protocols.backup.list.*.json"))


def test_pmp_check_passes_for_a_constant_mixer_protocol_without_couplings(small_config, tmp_path, capsys):
    couplings = tmp_path / "j.json"
    couplings.write_text(json.dumps({"couplings": [[0.0, 0.0], [0.0, 0.0]]}))
    vector = tmp_path / "u.txt"
    np.savetxt(vector, np.ones(10))
    config = small_config(model={"couplings_file": str(couplings)})
    assert main(["pmp-check", "--config", str(config), str(vector)]) == 0
    out = capsys.readouterr().out
    assert "singular fraction" in out
    assert "PASS" in out


def test_pmp_check_reads_protocol_csv(small_config, tmp_path, capsys):
    out = tmp_path / "run"
    config = str(small_config())
    main(["optimize", "--config", config, "--out", str(out), "-q"])
    capsys.readouterr()
    assert main(["pmp-check", "--config", config, str(out / "protocol.csv")]) == 0
    assert "control Hamiltonian spread" in capsys.readouterr().out


def test_pmp_check_rejects_a_malformed_vector(small_config, tmp_path):
    vector = tmp_path / "u.txt"
    vector.write_text("0.1 oops\n")
    assert main(["pmp-check", "--config", str(small_config()), str(vector), "-q"]) == 2


def test_pmp_check_missing_protocol_is_an_io_error(small_config, tmp_path):
    assert main(["pmp-check", "--config", str(small_config()), str(tmp_path / "none.csv"), "-q"]) == 4


def test_robustness_reuses_the_protocol_stored_by_optimize(small_config, tmp_path, caplog):
    out = tmp_path / "run"
    config = str(small_config())
    assert main(["optimize", "--config", config, "--out", str(out), "-q"]) == 0
    caplog.clear()
    assert main(["robustness", "--config", config, "--out", str(out)]) == 0
    assert "reusing stored protocol for 'nominal'" in caplog.text
    report = json.loads((out / "report.json").read_text())
    assert report["approach"] == "nominal"


def test_optimize_reports_the_grid_refinement_change(small_config, tmp_path):
    out = tmp_path / "run"
    assert main(["optimize", "--config", str(small_config()), "--out", str(out), "-q"]) == 0
    change = json.loads((out / "report.json").read_text())["extra"]["refinement_cost_change"]
    assert np.isfinite(change) and change >= 0.0

    unchecked = tmp_path / "unchecked"
    assert main(["optimize", "--config", str(small_config(refinement_check=False)), "--out", str(unchecked), "-q"]) == 0
    assert "refinement_cost_change" not in json.loads((unchecked / "report.json").read_text())["extra"]


def test_fidelity_bound_violation_exits_with_numerical_error(small_config, tmp_path, monkeypatch):
    monkeypatch.setattr("src.robustness.lipschitz_bound", lambda *args, **kwargs: 0.0)
    assert main(["robustness", "--config", str(small_config()), "--out", str(tmp_path / "run"), "-q"]) == 3


def test_optimize_warns_about_a_shared_sign_band_once(small_config, tmp_path, caplog):
    couplings = tmp_path / "j.json"
    couplings.write_text(json.dumps({"couplings": [[0.0, 0.0], [0.0, 0.0]]}))
    config = small_config(model={"couplings_file": str(couplings)})
    assert main(["optimize", "--config", str(config), "--out", str(tmp_path / "run"), "-q"]) == 0
    assert caplog.text.count("always a bang section") == 1
