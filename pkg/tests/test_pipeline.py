import json

import pytest

from aiaas_monitor.config import RunConfig, default_run_config, loads_run_config
from aiaas_monitor.detector import PAYLOAD_INDICATORS, RULE_INDICATORS, read_alerts
from aiaas_monitor.errors import ConfigError
from aiaas_monitor.pipeline import MonitorPipeline, bench, replay, report_from_files, run_pipeline, simulate
from aiaas_monitor.txn import MonitoringLevel, write_log
from aiaas_monitor.workload import ScenarioId

ALL_SMALL = "seed = 5\n" + "".join(
    f'[[scenario]]\nid = "{sid.value}"\n[scenario.params]\ntenant_count = {12 if sid is ScenarioId.BEHAVIOR_DRIFT else 6}\n'
    for sid in ScenarioId
)


def config(text, tmp_path, name="out"):
    return loads_run_config(text, tmp_path).with_overrides(out_dir=tmp_path / name)


@pytest.fixture(scope="module")
def full_run(tmp_path_factory):
    tmp = tmp_path_factory.mktemp("full")
    cfg = config(ALL_SMALL, tmp)
    return cfg, run_pipeline(cfg)


def test_benign_only_has_no_rule_alerts(tmp_path):
    cfg = config('[[scenario]]\nid = "BenignBaseline"\n', tmp_path)
    report = run_pipeline(cfg)
    alerts = read_alerts(tmp_path / "out" / "alerts.txt")
    assert not [a for a in alerts if a.indicator_id in RULE_INDICATORS]
    assert report.labeled == 0 and report.benign_rule_alerted == 0


def test_every_labeled_tenant_detected(full_run):
    cfg, report = full_run
    assert report.labeled == 1 * 6 + 8  # one per single-tenant scenario, eight probe accounts
    assert report.detected == report.labeled
    for sid, row in report.confusion.items():
        assert row["missed"] == [], sid
        assert row["benign_rule_alerted"] == [], sid


def test_report_matches_files(full_run):
    cfg, report = full_run
    recomputed = report_from_files(cfg.out_dir, cfg.scenarios)
    assert recomputed["confusion"] == report.confusion
    assert recomputed["indicator_counts"] == report.indicator_counts
    assert recomputed["billing"] == report.billing
    on_disk = json.loads((cfg.out_dir / "report.json").read_text())
    assert on_disk["confusion"] == report.confusion
    assert set(on_disk["digests"]) >= {"transactions.log", "alerts.txt", "bills.txt", "labels.txt"}


def test_run_is_deterministic(tmp_path):
    text = '[[scenario]]\nid = "BlacklistScreening"\n[scenario.params]\ntenant_count = 5\n'
    a = run_pipeline(config(text, tmp_path, "a"))
    b = run_pipeline(config(text, tmp_path, "b"))
    for name in ("transactions.log", "labels.txt", "bills.txt", "alerts.txt", "summary.txt", "audit_state.ckpt"):
        assert (tmp_path / "a" / name).read_bytes() == (tmp_path / "b" / name).read_bytes(), name
    assert a.digests == b.digests
    c = run_pipeline(config(text, tmp_path, "c").with_overrides(seed=99))
    assert c.digests["transactions.log"] != a.digests["transactions.log"]


def test_replay_reproduces_alerts(full_run, tmp_path):
    cfg, _ = full_run
    log = cfg.out_dir / "transactions.log"
    rep = replay(log, cfg.with_overrides(out_dir=tmp_path / "replay"))
    assert (tmp_path / "replay" / "alerts.txt").read_bytes() == (cfg.out_dir / "alerts.txt").read_bytes()
    assert rep.detected == rep.labeled


def test_metadata_replay_is_subset(full_run, tmp_path):
    cfg, _ = full_run
    replay(cfg.out_dir / "transactions.log", cfg.with_overrides(out_dir=tmp_path / "meta", level="metadata"))
    full = {a.alert_id for a in read_alerts(cfg.out_dir / "alerts.txt")}
    meta = read_alerts(tmp_path / "meta" / "alerts.txt")
    assert {a.alert_id for a in meta} <= full
    assert not [a for a in meta if a.indicator_id in PAYLOAD_INDICATORS]
    assert meta  # rate and anomaly indicators still work on metadata


def test_replay_empty_log(tmp_path):
    write_log(tmp_path / "empty.log", [])
    report = replay(tmp_path / "empty.log", RunConfig(out_dir=tmp_path / "o"))
    assert (tmp_path / "o" / "alerts.txt").read_text() == ""
    assert report.transactions == 0


def test_modes_share_gateway_output():
    cfg = default_run_config(3)
    cfg = RunConfig(scenarios=[s for s in cfg.scenarios if s.scenario_id is ScenarioId.SURVEILLANCE_RATE])
    stream, _ = simulate(cfg)
    gw = MonitorPipeline(cfg, mode="gateway")
    det = MonitorPipeline(cfg, mode="detect")
    gw.run(stream)
    det.run(stream)
    assert gw.bills == det.bills
    assert gw.alerts == [] and det.alerts
    assert gw.state.tenants == {}


def test_bench_report(tmp_path):
    cfg = config('[[scenario]]\nid = "SurveillanceRate"\n[scenario.params]\ntenant_count = 5\n', tmp_path)
    a = bench(cfg, duration_s=600, repeats=2)
    b = bench(cfg, duration_s=600, repeats=1)
    assert set(a["modes"]) == {"gateway", "audit", "detect"}
    for mode, row in a["modes"].items():
        assert {"tps", "throughput_ratio", "peak_memory_bytes", "processed"} <= set(row)
        assert row["processed"] == a["transactions"] == b["transactions"]
    assert a["modes"]["gateway"]["throughput_ratio"] == 1.0
    assert a["modes"]["gateway"]["tps"] >= a["modes"]["detect"]["tps"]


@pytest.mark.parametrize("text", [
    'level = "paranoid"\n',
    'mode = "sideways"\n',
    'seed = "x"\n',
    'bogus = 1\n',
    '[[scenario]]\nid = "Nope"\n',
    '[[scenario]]\nid = "BenignBaseline"\n[scenario.params]\ntenant_count = -3\n',
    '[[scenario]]\nid = "BenignBaseline"\nprefix = "p"\n[[scenario]]\nid = "BenignBaseline"\nprefix = "p"\n',
    'ruleset = "missing.toml"\n',
    'blacklist = "missing.txt"\n',
    'seed = \n',
])
def test_bad_configs(text, tmp_path):
    with pytest.raises(ConfigError):
        loads_run_config(text, tmp_path)


def test_seed_override_respects_pinned_seeds(tmp_path):
    text = '[[scenario]]\nid = "BenignBaseline"\nseed = 4\n[[scenario]]\nid = "BenignBaseline"\n'
    cfg = loads_run_config(text, tmp_path)
    moved = cfg.with_overrides(seed=123)
    assert moved.scenarios[0].seed == 4 == cfg.scenarios[0].seed
    assert moved.scenarios[1].seed != cfg.scenarios[1].seed
    assert cfg.with_overrides(level="derived").level is MonitoringLevel.METADATA_PLUS_DERIVED


def test_config_files_resolved_relative(tmp_path):
    (tmp_path / "rules.toml").write_text("[rules.INVERSION_PROBE]\nenabled = false\n")
    (tmp_path / "bl.txt").write_text("# comment\nPlacard\nknife\n")
    cfg = loads_run_config('ruleset = "rules.toml"\nblacklist = "bl.txt"\n', tmp_path)
    assert len(cfg.rules) == 8
    assert cfg.blacklist == {"placard", "knife"}
