import json

import pytest

from mindlink.cli import EXIT_CONFIG, EXIT_DATA, EXIT_OK, main
from mindlink.relay import LinkParams
from mindlink.session import SessionConfig


@pytest.fixture
def config_file(tmp_path):
    cfg = SessionConfig(link=LinkParams.from_preset("satellite", loss_probability=0.0),
                        trials_per_item=5, master_seed=1)
    path = tmp_path / "config.json"
    path.write_text(json.dumps(cfg.to_dict()))
    return path


def test_enroll_then_classify(tmp_path, config_file, capsys):
    db = tmp_path / "db"
    assert main(["enroll", "--config", str(config_file), "--db", str(db)]) == EXIT_OK
    assert (db / "1" / "NO.tpl").exists()
    trace = tmp_path / "no.csv"
    assert main(["export-trace", "--subject", "1", "--item", "NO", "--out", str(trace),
                 "--seed", "42"]) == EXIT_OK
    capsys.readouterr()
    assert main(["classify", "--db", str(db), "--trace", str(trace)]) == EXIT_OK
    decision = json.loads(capsys.readouterr().out)
    assert decision["decision"] == "match" and decision["label"] == "NO"


def test_db_from_environment(tmp_path, config_file, monkeypatch):
    monkeypatch.setenv("MINDLINK_DB", str(tmp_path / "envdb"))
    assert main(["enroll", "--config", str(config_file)]) == EXIT_OK
    assert (tmp_path / "envdb" / "1" / "manifest.json").exists()


def test_missing_db_is_config_error(tmp_path, monkeypatch):
    monkeypatch.delenv("MINDLINK_DB", raising=False)
    assert main(["classify", "--trace", str(tmp_path / "x.csv")]) == EXIT_CONFIG


def test_simulate_and_report(tmp_path, config_file, capsys):
    out = tmp_path / "report.json"
    assert main(["simulate", "--config", str(config_file), "--out", str(out)]) == EXIT_OK
    data = json.loads(out.read_text())
    assert data["subjects"][0]["name"] == "JOE"
    capsys.readouterr()
    assert main(["report", "--in", str(out)]) == EXIT_OK
    assert "template path" in capsys.readouterr().out
    assert main(["report", "--in", str(out), "--csv"]) == EXIT_OK
    assert capsys.readouterr().out.startswith("subject_id,path,true_item,decided,count")


def test_bad_config_exit_code(tmp_path):
    path = tmp_path / "bad.json"
    path.write_text('{"trials_per_item": 0}')
    assert main(["simulate", "--config", str(path), "--out", str(tmp_path / "r.json")]) == EXIT_CONFIG
    path.write_text("{not json")
    assert main(["simulate", "--config", str(path), "--out", str(tmp_path / "r.json")]) == EXIT_CONFIG


def test_corrupt_db_exit_code(tmp_path, config_file):
    db = tmp_path / "db"
    main(["enroll", "--config", str(config_file), "--db", str(db)])
    tpl = db / "1" / "YES.tpl"
    tpl.write_bytes(tpl.read_bytes()[:100])
    trace = tmp_path / "t.csv"
    main(["export-trace", "--subject", "1", "--item", "YES", "--out", str(trace)])
    assert main(["classify", "--db", str(db), "--trace", str(trace)]) == EXIT_DATA


def test_bad_report_exit_code(tmp_path):
    path = tmp_path / "r.json"
    path.write_text("[]")
    assert main(["report", "--in", str(path)]) == EXIT_DATA


def test_unknown_item_is_config_error(tmp_path):
    assert main(["export-trace", "--subject", "1", "--item", "MAYBE",
                 "--out", str(tmp_path / "x.csv")]) == EXIT_CONFIG
