"""End-to-end orchestration: simulate -> gateway -> audit -> detect -> report.

Rules are evaluated on window boundaries of stream time. Before a
transaction at time ``t`` is processed, every boundary ``B <= t`` is handled
in order: profile windows ending at ``B`` are closed, then each rule whose
window ends at ``B`` is evaluated at ``now = B - 1``. At end of stream the
last partial profile window is closed as if time had reached its end.
"""

from __future__ import annotations

import hashlib
import json
import time
import tracemalloc
from collections import Counter, defaultdict
from dataclasses import dataclass, replace
from pathlib import Path
from typing import Iterable, Sequence

from .audit import AuditState
from .config import RunConfig
from .detector import (
    RULE_INDICATORS,
    Alert,
    IndicatorId,
    IndicatorRule,
    alert_sort_key,
    evaluate_rules,
    format_alert_table,
    read_alerts,
    write_alerts,
)
from .errors import InvariantViolation
from .gateway import BillRecord, Gateway
from .txn import Transaction, read_log, write_log
from .workload import GroundTruthLabel, ScenarioSpec, generate_workload, merge_streams, read_labels, write_labels

REPORT_VERSION = 1


class MonitorPipeline:
    """Streaming composition of gateway, audit informer and detector."""

    def __init__(self, config: RunConfig, mode: str | None = None) -> None:
        self.config = config
        self.mode = mode or config.mode
        self.gateway = Gateway(config.policy)
        self.state = AuditState(config.level, config.blacklist, pseudonym_key=f"run-{config.seed}")
        self.rules: list[IndicatorRule] = list(config.rules)
        self.alerts: list[Alert] = []
        self.bills: list[BillRecord] = []
        self.decisions = Counter()
        self._seen: set[tuple] = set()
        self._next: dict[int, int] = {}
        self._by_window: dict[int, list[IndicatorRule]] = defaultdict(list)
        for rule in self.rules:
            self._by_window[rule.window_ms].append(rule)
        self._last_ts: int | None = None
        self.processed = 0

    def _emit(self, alerts: Iterable[Alert]) -> None:
        for alert in alerts:
            if alert.key not in self._seen:
                self._seen.add(alert.key)
                self.alerts.append(alert)

    def _run_boundaries(self, upto: int) -> None:
        pw = self.state.profile_window_ms
        while self._next:
            boundary = min(self._next.values())
            if boundary > upto:
                return
            if boundary % pw == 0:
                self.state.advance_to(boundary)
            due = [w for w, b in self._next.items() if b == boundary]
            rules = [r for w in sorted(due) for r in self._by_window[w]]
            self._emit(evaluate_rules(self.state, rules, boundary - 1))
            for w in due:
                self._next[w] = boundary + w

    def process(self, txn: Transaction) -> None:
        self.processed += 1
        ts = txn.timestamp
        if self.mode == "detect":
            if not self._next:
                self._next = {w: (ts // w + 1) * w for w in self._by_window}
            self._run_boundaries(ts)
        decision, record = self.gateway.process(txn)
        self.decisions[decision.kind.value] += 1
        self.bills.append(record)
        if self.mode != "gateway" and decision.admitted:
            self.state.ingest(decision.txn)
        self._last_ts = ts if self._last_ts is None else max(self._last_ts, ts)

    def finish(self) -> list[Alert]:
        if self.mode == "detect" and self._last_ts is not None:
            pw = self.state.profile_window_ms
            end = (self._last_ts // pw + 1) * pw
            self._run_boundaries(end)
            self.state.advance_to(end)
            # rules whose current window started before ``end`` but closes after it
            open_rules = [r for w, rs in self._by_window.items() if self._next[w] - w < end for r in rs]
            self._emit(evaluate_rules(self.state, open_rules, end - 1))
            # boundaries at ``end`` are done; keep later ones from firing twice
            self._next = {}
        self.alerts.sort(key=alert_sort_key)
        return self.alerts

    def run(self, txns: Iterable[Transaction]) -> list[Alert]:
        for txn in txns:
            self.process(txn)
        return self.finish()


# -- reports ---------------------------------------------------------------------


def _file_digest(path: Path) -> str:
    return hashlib.sha256(path.read_bytes()).hexdigest()


def scenario_of(tenant_id: str, prefixes: dict[str, str]) -> str:
    head = tenant_id.rsplit("-", 1)[0]
    return prefixes.get(head, "unknown")


def confusion(
    alerts: Sequence[Alert],
    labels: Sequence[GroundTruthLabel],
    tenants: Iterable[str],
    prefixes: dict[str, str],
) -> dict[str, dict]:
    """Per-scenario detection counts joined from alerts and ground-truth labels."""
    flagged: dict[str, set[str]] = defaultdict(set)
    for a in alerts:
        for tid in a.subjects:
            flagged[tid].add(a.indicator_id.value)
    labeled = {lab.tenant_id: lab for lab in labels}
    # tenants of a replayed log share a prefix with the labeled tenant of their scenario
    prefixes = {**{lab.tenant_id.rsplit("-", 1)[0]: lab.scenario_id.value for lab in labels}, **prefixes}
    out: dict[str, dict] = {}
    for tid in sorted(set(tenants) | set(labeled)):
        scen = labeled[tid].scenario_id.value if tid in labeled else scenario_of(tid, prefixes)
        row = out.setdefault(scen, {
            "labeled": 0, "detected": 0, "missed": [], "benign": 0,
            "benign_rule_alerted": [], "benign_any_alerted": 0,
        })
        if tid in labeled:
            row["labeled"] += 1
            if labeled[tid].indicator in flagged[tid]:
                row["detected"] += 1
            else:
                row["missed"].append(tid)
        else:
            row["benign"] += 1
            hits = flagged.get(tid, set())
            if hits & {i.value for i in RULE_INDICATORS}:
                row["benign_rule_alerted"].append(tid)
            if hits:
                row["benign_any_alerted"] += 1
    return out


@dataclass
class RunReport:
    confusion: dict
    indicator_counts: dict[str, int]
    billing: dict
    decisions: dict[str, int]
    throughput: dict[str, float]
    digests: dict[str, str]
    transactions: int
    level: str

    def to_json(self) -> str:
        return json.dumps(
            {
                "version": REPORT_VERSION,
                "transactions": self.transactions,
                "level": self.level,
                "confusion": self.confusion,
                "indicator_counts": self.indicator_counts,
                "billing": self.billing,
                "decisions": self.decisions,
                "throughput": self.throughput,
                "digests": self.digests,
            },
            indent=2,
            sort_keys=True,
        )

    @property
    def labeled(self) -> int:
        return sum(r["labeled"] for r in self.confusion.values())

    @property
    def detected(self) -> int:
        return sum(r["detected"] for r in self.confusion.values())

    @property
    def benign_rule_alerted(self) -> int:
        return sum(len(r["benign_rule_alerted"]) for r in self.confusion.values())


def _prefixes(scenarios: Sequence[ScenarioSpec]) -> dict[str, str]:
    return {spec.prefix: spec.scenario_id.value for spec in scenarios}


def _indicator_counts(alerts: Sequence[Alert]) -> dict[str, int]:
    counts = Counter(a.indicator_id for a in alerts)
    return {i.value: counts[i] for i in IndicatorId}


def billing_summary(bills: Sequence[BillRecord]) -> dict:
    per_tenant: dict[str, int] = defaultdict(int)
    for b in bills:
        per_tenant[b.tenant_id] += b.billable_units
    return {"total_units": sum(per_tenant.values()), "per_tenant": dict(sorted(per_tenant.items()))}


def _gateway_throughput(config: RunConfig, stream: Sequence[Transaction]) -> float:
    gw = Gateway(config.policy)
    t0 = time.perf_counter()
    for txn in stream:
        gw.process(txn)
    dt = time.perf_counter() - t0
    return len(stream) / dt if dt > 0 else float("inf")


def _write_artifacts(out: Path, pipe: MonitorPipeline, alerts: Sequence[Alert]) -> dict[str, str]:
    with open(out / "bills.txt", "w", encoding="utf-8", newline="\n") as fh:
        for b in pipe.bills:
            fh.write(b.to_line() + "\n")
    write_alerts(out / "alerts.txt", alerts)
    (out / "summary.txt").write_text(format_alert_table(alerts), encoding="utf-8")
    checkpoint = pipe.state.to_checkpoint()
    (out / "audit_state.ckpt").write_bytes(checkpoint)
    digests = {
        name: _file_digest(out / name)
        for name in ("transactions.log", "labels.txt", "bills.txt", "alerts.txt", "audit_state.ckpt")
        if (out / name).exists()
    }
    return digests


def _process(config: RunConfig, stream: Sequence[Transaction], labels: Sequence[GroundTruthLabel], out: Path) -> RunReport:
    pipe = MonitorPipeline(config)
    t0 = time.perf_counter()
    alerts = pipe.run(stream)
    elapsed = time.perf_counter() - t0
    digests = _write_artifacts(out, pipe, alerts)
    tenants = {t.tenant_id for t in stream}
    report = RunReport(
        confusion=confusion(alerts, labels, tenants, _prefixes(config.scenarios)),
        indicator_counts=_indicator_counts(alerts),
        billing=billing_summary(pipe.bills),
        decisions=dict(sorted(pipe.decisions.items())),
        throughput={
            "monitored_tps": len(stream) / elapsed if elapsed > 0 else float("inf"),
            "gateway_only_tps": _gateway_throughput(config, stream),
        },
        digests=digests,
        transactions=len(stream),
        level=config.level.value,
    )
    _check_consistency(report, out, config.scenarios)
    (out / "report.json").write_text(report.to_json() + "\n", encoding="utf-8")
    return report


def _check_consistency(report: RunReport, out: Path, scenarios: Sequence[ScenarioSpec]) -> None:
    recomputed = report_from_files(out, scenarios)
    mine = {
        "transactions": report.transactions,
        "confusion": report.confusion,
        "indicator_counts": report.indicator_counts,
        "billing": report.billing,
    }
    for key, value in mine.items():
        if recomputed[key] != value:
            raise InvariantViolation(f"report field {key!r} disagrees with the emitted files")


def simulate(config: RunConfig) -> tuple[list[Transaction], list[GroundTruthLabel]]:
    streams, labels = [], []
    for spec in config.scenarios:
        stream, lab = generate_workload(spec)
        streams.append(stream)
        labels.extend(lab)
    return merge_streams(streams), labels


def write_simulation(config: RunConfig, out: Path | None = None) -> tuple[int, int]:
    out = Path(out or config.out_dir)
    out.mkdir(parents=True, exist_ok=True)
    stream, labels = simulate(config)
    write_log(out / "transactions.log", stream)
    write_labels(out / "labels.txt", labels)
    return len(stream), len(labels)


def run_pipeline(config: RunConfig) -> RunReport:
    """Simulate the configured scenarios and push them through every stage."""
    out = Path(config.out_dir)
    out.mkdir(parents=True, exist_ok=True)
    stream, labels = simulate(config)
    write_log(out / "transactions.log", stream)
    write_labels(out / "labels.txt", labels)
    return _process(config, stream, labels, out)


def replay(log_path: str | Path, config: RunConfig) -> RunReport:
    """Re-run gateway, audit and detection over a recorded transaction log.

    Ground-truth labels are taken from a ``labels.txt`` next to the log when
    present and copied to ``config.out_dir`` with the other artifacts; the
    log itself is not copied.
    """
    log_path = Path(log_path)
    stream = read_log(log_path)
    sidecar = log_path.parent / "labels.txt"
    labels = read_labels(sidecar) if sidecar.exists() else []
    out = Path(config.out_dir)
    out.mkdir(parents=True, exist_ok=True)
    if sidecar.exists() and sidecar.resolve() != (out / "labels.txt").resolve():
        write_labels(out / "labels.txt", labels)
    return _process(config, stream, labels, out)


def report_from_files(out_dir: str | Path, scenarios: Sequence[ScenarioSpec] = ()) -> dict:
    """Recompute the content part of a run report from its artifact files.

    Every transaction has a bill line, so the tenant population comes from
    ``bills.txt`` without re-reading the log.
    """
    out = Path(out_dir)
    alerts = read_alerts(out / "alerts.txt")
    labels = read_labels(out / "labels.txt") if (out / "labels.txt").exists() else []
    with open(out / "bills.txt", encoding="utf-8") as fh:
        bills = [BillRecord.from_line(line) for line in fh if line.strip()]
    return {
        "transactions": len(bills),
        "confusion": confusion(alerts, labels, {b.tenant_id for b in bills}, _prefixes(scenarios)),
        "indicator_counts": _indicator_counts(alerts),
        "billing": billing_summary(bills),
    }


# -- overhead benchmark ------------------------------------------------------------


def bench(
    config: RunConfig,
    duration_s: int | None = None,
    modes: Sequence[str] = ("gateway", "audit", "detect"),
    repeats: int = 3,
) -> dict:
    """Measure transactions/s for increasing monitoring depth on one stream.

    ``duration_s`` overrides every scenario's simulated duration, which fixes
    the stream length. Each mode is timed ``repeats`` times and the best run
    is kept; peak derived-state memory is measured in a separate traced run.
    """
    scenarios = list(config.scenarios)
    if duration_s is not None:
        scenarios = [replace(s, params={**s.params, "duration_s": duration_s}) for s in scenarios]
    stream, _ = simulate(replace(config, scenarios=scenarios))
    result: dict = {"transactions": len(stream), "level": config.level.value, "modes": {}}
    for mode in modes:
        best = float("inf")
        for _ in range(max(1, repeats)):
            pipe = MonitorPipeline(config, mode=mode)
            t0 = time.perf_counter()
            pipe.run(stream)
            best = min(best, time.perf_counter() - t0)
        tracemalloc.start()
        pipe = MonitorPipeline(config, mode=mode)
        pipe.run(stream)
        _, peak = tracemalloc.get_traced_memory()
        tracemalloc.stop()
        result["modes"][mode] = {
            "seconds": best,
            "tps": len(stream) / best if best > 0 else float("inf"),
            "processed": pipe.processed,
            "alerts": len(pipe.alerts),
            "peak_memory_bytes": peak,
            "state_bytes": len(pipe.state.to_checkpoint()) if mode != "gateway" else 0,
        }
    base = result["modes"].get("gateway", {}).get("tps")
    for mode, row in result["modes"].items():
        row["throughput_ratio"] = row["tps"] / base if base else None
    return result
