import json
import subprocess
import sys

import pytest

from aiaas_monitor import cli, pipeline
from aiaas_monitor.errors import InvariantViolation

SMALL = '[[scenario]]\nid = "CrowdAnalysis"\n[scenario.params]\ntenant_count = 4\n'


@pytest.fixture
def small_cfg(tmp_path):
    path = tmp_path / "run.toml"
    path.write_text(SMALL)
    return path


def test_validate_config_ok(small_cfg, capsys):
    assert cli.main(["validate-config", "--config", str(small_cfg)]) == 0
    assert capsys.readouterr().out.startswith("ok: 1 scenarios")


def test_validate_config_errors(tmp_path):
    bad = tmp_path / "bad.toml"
    bad.write_text('level = "everything"\n')
    assert cli.main(["validate-config", "--config", str(bad)]) == 1
    assert cli.main(["validate-config", "--config", str(tmp_path / "absent.toml")]) == 1
    assert cli.main(["validate-config"]) == 1
    (tmp_path / "broken.toml").write_text("[[scenario\n")
    assert cli.main(["validate-config", "--config", str(tmp_path / "broken.toml")]) == 1


def test_simulate_run_replay(small_cfg, tmp_path, capsys):
    out = tmp_path / "run"
    assert cli.main(["run", "--config", str(small_cfg), "--out", str(out), "--seed", "4"]) == 0
    assert "1/1 labeled tenants detected" in capsys.readouterr().out
    assert cli.main(["replay", str(out / "transactions.log"), "--out", str(tmp_path / "rp")]) == 0
    assert (tmp_path / "rp" / "alerts.txt").read_bytes() == (out / "alerts.txt").read_bytes()
    sim = tmp_path / "sim"
    assert cli.main(["simulate", "--config", str(small_cfg), "--out", str(sim), "--seed", "4"]) == 0
    assert (sim / "transactions.log").read_bytes() == (out / "transactions.log").read_bytes()
    assert (sim / "labels.txt").read_bytes() == (out / "labels.txt").read_bytes()


def test_replay_malformed_and_missing(tmp_path):
    bad = tmp_path / "bad.log"
    bad.write_text("#aiaas-txnlog v1\n{not json}\n")
    assert cli.main(["replay", str(bad), "--out", str(tmp_path / "o")]) == 2
    assert cli.main(["replay", str(tmp_path / "nope.log"), "--out", str(tmp_path / "o")]) == 2
    headerless = tmp_path / "h.log"
    headerless.write_text("{}\n")
    assert cli.main(["replay", str(headerless), "--out", str(tmp_path / "o")]) == 2


def test_invariant_violation_exit_code(small_cfg, tmp_path, monkeypatch):
    def broken(*_a, **_k):
        raise InvariantViolation("report disagrees with artifacts")
    monkeypatch.setattr(pipeline, "_check_consistency", broken)
    assert cli.main(["run", "--config", str(small_cfg), "--out", str(tmp_path / "o")]) == 3


def test_bench_prints_json(small_cfg, capsys):
    assert cli.main(["bench", "--config", str(small_cfg), "--duration", "300", "--repeats", "1"]) == 0
    data = json.loads(capsys.readouterr().out)
    assert {"gateway", "audit", "detect"} == set(data["modes"])


def test_module_entry_point(small_cfg):
    proc = subprocess.run([sys.executable, "-m", "aiaas_monitor", "validate-config", "--config", str(small_cfg),
                           "--level", "metadata"], capture_output=True, text=True)
    assert proc.returncode == 0 and "level=metadata" in proc.stdout
    proc = subprocess.run([sys.executable, "-m", "aiaas_monitor", "run", "--level", "secret"],
                          capture_output=True, text=True)
    assert proc.returncode == 2  # argparse usage error
