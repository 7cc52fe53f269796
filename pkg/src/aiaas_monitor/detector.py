"""Misuse detector: indicator rules evaluated over audit state, emitting alerts.

Each rule owns an aligned evaluation window ``[k * window, (k + 1) * window)``.
:func:`evaluate_rules` computes every rule's statistic for the window that
contains ``now`` and emits at most one alert per (subjects, indicator, window).
Rules fire when their statistic reaches the threshold (``>=``); the anomaly
scores fire strictly above ``z_threshold``.
"""

from __future__ import annotations

import enum
import hashlib
import json
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Iterable, Mapping, Sequence

import numpy as np
from scipy.sparse import coo_matrix
from scipy.sparse.csgraph import connected_components

from . import defaults
from ._toml import load_toml
from .anomaly import PeerAnomalyScorer, SelfAnomalyScorer
from .audit import PROFILE_FIELDS, AuditState
from .errors import ConfigError, InsufficientHistory, InsufficientPeers, UnavailableAtMonitoringLevel
from .txn import ServiceKind


class IndicatorId(str, enum.Enum):
    HIGH_FACE_RATE = "HIGH_FACE_RATE"
    MANY_FACES_PER_INPUT = "MANY_FACES_PER_INPUT"
    MANY_DISTINCT_FACES = "MANY_DISTINCT_FACES"
    TARGET_TRACKING = "TARGET_TRACKING"
    BLACKLIST_OBJECT = "BLACKLIST_OBJECT"
    CROSS_SERVICE_COMBO = "CROSS_SERVICE_COMBO"
    SELF_ANOMALY = "SELF_ANOMALY"
    PEER_ANOMALY = "PEER_ANOMALY"
    INVERSION_PROBE = "INVERSION_PROBE"


ANOMALY_INDICATORS = frozenset({IndicatorId.SELF_ANOMALY, IndicatorId.PEER_ANOMALY})
RULE_INDICATORS = frozenset(IndicatorId) - ANOMALY_INDICATORS
PAYLOAD_INDICATORS = frozenset(
    {
        IndicatorId.MANY_FACES_PER_INPUT,
        IndicatorId.MANY_DISTINCT_FACES,
        IndicatorId.TARGET_TRACKING,
        IndicatorId.BLACKLIST_OBJECT,
        IndicatorId.CROSS_SERVICE_COMBO,
        IndicatorId.INVERSION_PROBE,
    }
)
_ORDER = {ind: i for i, ind in enumerate(IndicatorId)}


class Severity(str, enum.Enum):
    INFO = "info"
    WARN = "warn"
    CRITICAL = "critical"


@dataclass(frozen=True)
class IndicatorRule:
    indicator_id: IndicatorId
    params: Mapping[str, float]
    window_s: int
    implication: str
    severity: Severity

    def __post_init__(self) -> None:
        if self.window_s <= 0:
            raise ValueError(f"{self.indicator_id.value}: window must be positive")
        for name, value in self.params.items():
            if isinstance(value, bool) or not isinstance(value, (int, float)) or value <= 0:
                raise ValueError(f"{self.indicator_id.value}: parameter {name} must be a positive number")
        missing = set(_DEFAULT_PARAMS[self.indicator_id]) - set(self.params)
        if missing:
            raise ValueError(f"{self.indicator_id.value}: missing parameters {sorted(missing)}")

    @property
    def window_ms(self) -> int:
        return self.window_s * 1000

    def __getitem__(self, name: str) -> float:
        return self.params[name]


_DEFAULT_PARAMS: dict[IndicatorId, dict[str, float]] = {
    IndicatorId.HIGH_FACE_RATE: {"threshold_per_min": defaults.HIGH_FACE_RATE_PER_MIN, "rate_window_s": 60},
    IndicatorId.MANY_FACES_PER_INPUT: {"threshold": defaults.MANY_FACES_PER_INPUT},
    IndicatorId.MANY_DISTINCT_FACES: {"threshold": defaults.MANY_DISTINCT_FACES_PER_DAY},
    IndicatorId.TARGET_TRACKING: {"phi": defaults.TARGET_TRACKING_PHI, "min_calls": defaults.TARGET_TRACKING_MIN_CALLS},
    IndicatorId.BLACKLIST_OBJECT: {"threshold": defaults.BLACKLIST_MATCHES_PER_HOUR},
    IndicatorId.CROSS_SERVICE_COMBO: {"min_faces": defaults.CROSS_SERVICE_MIN_FACES},
    IndicatorId.SELF_ANOMALY: {
        "z_threshold": defaults.SELF_ANOMALY_Z,
        "min_history": defaults.SELF_ANOMALY_MIN_HISTORY,
        "sigma_floor_fraction": defaults.SIGMA_FLOOR_FRACTION,
        "sigma_floor_min": defaults.SIGMA_FLOOR_MIN,
    },
    IndicatorId.PEER_ANOMALY: {
        "z_threshold": defaults.PEER_ANOMALY_Z,
        "min_peers": defaults.PEER_ANOMALY_MIN_PEERS,
        "sigma_floor_fraction": defaults.SIGMA_FLOOR_FRACTION,
        "sigma_floor_min": defaults.SIGMA_FLOOR_MIN,
    },
    IndicatorId.INVERSION_PROBE: {
        "max_hamming": defaults.INVERSION_MAX_HAMMING,
        "min_accounts": defaults.INVERSION_MIN_ACCOUNTS,
        "min_queries": defaults.INVERSION_MIN_QUERIES,
    },
}

_DEFAULT_META: dict[IndicatorId, tuple[int, str, Severity]] = {
    IndicatorId.HIGH_FACE_RATE: (60, "Population surveillance", Severity.WARN),
    IndicatorId.MANY_FACES_PER_INPUT: (3600, "Population surveillance", Severity.WARN),
    IndicatorId.MANY_DISTINCT_FACES: (86400, "Population surveillance", Severity.WARN),
    IndicatorId.TARGET_TRACKING: (86400, "Privacy threats to an individual", Severity.WARN),
    IndicatorId.BLACKLIST_OBJECT: (3600, "Controversial application", Severity.WARN),
    IndicatorId.CROSS_SERVICE_COMBO: (3600, "Controversial application", Severity.CRITICAL),
    IndicatorId.SELF_ANOMALY: (3600, "Deviation from the tenant's usage baseline", Severity.INFO),
    IndicatorId.PEER_ANOMALY: (3600, "Usage unlike the peer population", Severity.INFO),
    IndicatorId.INVERSION_PROBE: (3600, "Model inversion attack", Severity.CRITICAL),
}


def default_ruleset() -> list[IndicatorRule]:
    return [
        IndicatorRule(ind, dict(_DEFAULT_PARAMS[ind]), *_DEFAULT_META[ind])
        for ind in IndicatorId
    ]


def ruleset_from_mapping(data: Mapping, origin: str = "<ruleset>") -> list[IndicatorRule]:
    """Apply ``[rules.<INDICATOR>]`` overrides to the default ruleset.

    Keys other than ``window_s``, ``severity``, ``implication`` and ``enabled``
    override rule parameters. ``enabled = false`` drops the rule.
    """
    by_id = {r.indicator_id: r for r in default_ruleset()}
    tables = data.get("rules", {})
    unknown_top = set(data) - {"rules"}
    if unknown_top:
        raise ConfigError(origin, f"unknown ruleset keys {sorted(unknown_top)}")
    enabled = {ind: True for ind in by_id}
    for name, table in tables.items():
        try:
            ind = IndicatorId(name)
        except ValueError:
            raise ConfigError(origin, f"unknown indicator {name!r}") from None
        table = dict(table)
        rule = by_id[ind]
        enabled[ind] = bool(table.pop("enabled", True))
        kw: dict = {}
        if "window_s" in table:
            kw["window_s"] = table.pop("window_s")
        if "severity" in table:
            try:
                kw["severity"] = Severity(str(table.pop("severity")).lower())
            except ValueError:
                raise ConfigError(origin, f"{name}: unknown severity") from None
        if "implication" in table:
            kw["implication"] = str(table.pop("implication"))
        unknown = set(table) - set(rule.params)
        if unknown:
            raise ConfigError(origin, f"{name}: unknown parameters {sorted(unknown)}")
        try:
            by_id[ind] = replace(rule, params={**rule.params, **table}, **kw)
        except ValueError as exc:
            raise ConfigError(origin, str(exc)) from None
    return [by_id[ind] for ind in IndicatorId if enabled[ind]]


def load_ruleset(path: str | Path) -> list[IndicatorRule]:
    return ruleset_from_mapping(load_toml(path), str(path))


# -- alerts ------------------------------------------------------------------


def _clean(value):
    if isinstance(value, (np.floating, np.integer)):
        value = value.item()
    if isinstance(value, float):
        return round(value, 6)
    return value


@dataclass(frozen=True)
class Alert:
    """A detection outcome. ``subjects`` is one tenant, or the account set of a probe."""

    alert_id: str
    subjects: tuple[str, ...]
    indicator_id: IndicatorId
    severity: Severity
    window_start: int
    window_end: int
    evidence: Mapping[str, object] = field(default_factory=dict)
    implication: str = ""

    @property
    def tenant_id(self) -> str:
        return self.subjects[0]

    @property
    def key(self) -> tuple:
        return (self.subjects, self.indicator_id, self.window_start, self.window_end)

    def to_line(self) -> str:
        return json.dumps(
            {
                "id": self.alert_id,
                "subjects": list(self.subjects),
                "indicator": self.indicator_id.value,
                "severity": self.severity.value,
                "window": [self.window_start, self.window_end],
                "evidence": {k: self.evidence[k] for k in sorted(self.evidence)},
                "implication": self.implication,
            },
            separators=(",", ":"),
            ensure_ascii=False,
        )

    @classmethod
    def from_line(cls, line: str) -> Alert:
        obj = json.loads(line)
        return cls(
            obj["id"],
            tuple(obj["subjects"]),
            IndicatorId(obj["indicator"]),
            Severity(obj["severity"]),
            obj["window"][0],
            obj["window"][1],
            obj["evidence"],
            obj["implication"],
        )


def make_alert(rule: IndicatorRule, subjects: Sequence[str], start: int, evidence: Mapping) -> Alert:
    subjects = tuple(subjects)
    key = f"{rule.indicator_id.value}|{','.join(subjects)}|{start}|{start + rule.window_ms}"
    alert_id = hashlib.sha256(key.encode("utf-8")).hexdigest()[:16]
    return Alert(
        alert_id,
        subjects,
        rule.indicator_id,
        rule.severity,
        start,
        start + rule.window_ms,
        {k: _clean(v) for k, v in evidence.items()},
        rule.implication,
    )


def write_alerts(path: str | Path, alerts: Iterable[Alert]) -> int:
    n = 0
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        for alert in alerts:
            fh.write(alert.to_line() + "\n")
            n += 1
    return n


def read_alerts(path: str | Path) -> list[Alert]:
    with open(path, encoding="utf-8") as fh:
        return [Alert.from_line(line) for line in fh if line.strip()]


def format_alert_table(alerts: Sequence[Alert]) -> str:
    """Human-readable alert summary, one row per alert."""
    header = ("window_start", "indicator", "severity", "subjects", "implication")
    rows = [
        (
            str(a.window_start),
            a.indicator_id.value,
            a.severity.value,
            ",".join(a.subjects) if len(a.subjects) <= 3 else f"{a.subjects[0]},... ({len(a.subjects)})",
            a.implication,
        )
        for a in alerts
    ]
    widths = [max(len(h), *(len(r[i]) for r in rows)) if rows else len(h) for i, h in enumerate(header)]
    lines = ["  ".join(h.ljust(w) for h, w in zip(header, widths))]
    lines.append("  ".join("-" * w for w in widths))
    lines += ["  ".join(c.ljust(w) for c, w in zip(r, widths)) for r in rows]
    lines.append(f"{len(alerts)} alert(s)")
    return "\n".join(lines) + "\n"


# -- rule evaluation -----------------------------------------------------------


def _eval_high_face_rate(state: AuditState, rule: IndicatorRule, start: int, end: int) -> list[Alert]:
    rate_window_s = rule["rate_window_s"]
    threshold = rule["threshold_per_min"]
    out = []
    for tid in sorted(state.tenants):
        peak = state.peak_face_count(tid, start, end, int(rate_window_s * 1000))
        rate = peak * 60.0 / rate_window_s
        if peak and rate >= threshold:
            out.append(make_alert(rule, [tid], start, {"face_rate_per_min": rate, "threshold_per_min": threshold}))
    return out


def _eval_many_faces(state, rule, start, end):
    out = []
    for tid in sorted(state.tenants):
        peak = state.max_faces_in_window(tid, start, end)
        if peak and peak >= rule["threshold"]:
            out.append(make_alert(rule, [tid], start, {"faces_per_input_max": peak, "threshold": rule["threshold"]}))
    return out


def _eval_many_distinct(state, rule, start, end):
    if rule.window_ms != defaults.DAY_MS:
        raise ValueError("MANY_DISTINCT_FACES is evaluated on daily sketches; window_s must be 86400")
    out = []
    day = start // defaults.DAY_MS
    for tid in sorted(state.tenants):
        est = state.daily_distinct(tid, day)
        if est and est >= rule["threshold"]:
            _, bound = state.distinct_faces(tid, "daily")
            out.append(make_alert(rule, [tid], start, {
                "distinct_faces_estimate": est, "relative_error_bound": bound, "threshold": rule["threshold"],
            }))
    return out


def _eval_target_tracking(state, rule, start, end):
    if rule.window_ms != defaults.DAY_MS:
        raise ValueError("TARGET_TRACKING is evaluated on daily tables; window_s must be 86400")
    out = []
    day = start // defaults.DAY_MS
    for tid in sorted(state.tenants):
        calls, tops = state.daily_targets(tid, day, rule["phi"])
        if calls < rule["min_calls"] or not tops:
            continue
        target, count, error = tops[0]
        out.append(make_alert(rule, [tid], start, {
            "identification_calls": calls,
            "top_target_count": count,
            "top_target_error": error,
            "top_target_share": count / calls,
            "targets_over_phi": len(tops),
            "phi": rule["phi"],
            "min_calls": rule["min_calls"],
            "target": str(target),
        }))
    return out


def _eval_blacklist(state, rule, start, end):
    out = []
    for tid in sorted(state.tenants):
        n = state.blacklist_count(tid, start, end)
        if n and n >= rule["threshold"]:
            out.append(make_alert(rule, [tid], start, {"blacklist_matches": n, "threshold": rule["threshold"]}))
    return out


def _eval_combo(state, rule, start, end):
    out = []
    for tid in sorted(state.tenants):
        hits = [
            (iid, view) for iid, view in state.combo_inputs(tid, start, end)
            if view.blacklist_hit and view.face_count_max >= rule["min_faces"]
        ]
        if hits:
            iid, view = max(hits, key=lambda h: (h[1].face_count_max, h[0]))
            out.append(make_alert(rule, [tid], start, {
                "inputs_flagged": len(hits),
                "face_count_max": view.face_count_max,
                "blacklist_hit": 1,
                "min_faces": rule["min_faces"],
                "services": ",".join(sorted(s.value for s in view.services)),
                "input_id": iid,
            }))
    return out


def _anomaly_params(rule: IndicatorRule) -> dict:
    return {
        "z_threshold": rule["z_threshold"],
        "sigma_floor_fraction": rule["sigma_floor_fraction"],
        "sigma_floor_min": rule["sigma_floor_min"],
    }


def _check_profile_window(state: AuditState, rule: IndicatorRule) -> None:
    if rule.window_ms != state.profile_window_ms:
        raise ValueError(f"{rule.indicator_id.value} window must equal the profile window")


def _eval_self_anomaly(state, rule, start, end):
    _check_profile_window(state, rule)
    out = []
    for tid in sorted(state.tenants):
        hist = state.profile_snapshot(tid)
        if not hist or hist[-1].window_start != start:
            continue
        scorer = SelfAnomalyScorer(min_history=int(rule["min_history"]), **_anomaly_params(rule))
        try:
            scorer.fit(hist[:-1])
        except InsufficientHistory:
            continue
        comps = scorer.component_scores(hist[-1])
        score = float(comps.max())
        if score > rule["z_threshold"]:
            out.append(make_alert(rule, [tid], start, {
                "score": score,
                "z_threshold": rule["z_threshold"],
                "component": PROFILE_FIELDS[int(np.argmax(comps))],
                "history_windows": len(hist) - 1,
            }))
    return out


def _eval_peer_anomaly(state, rule, start, end):
    _check_profile_window(state, rule)
    current = {}
    for tid in sorted(state.tenants):
        hist = state.profile_snapshot(tid)
        if hist and hist[-1].window_start == start:
            current[tid] = hist[-1]
    out = []
    for tid in current:
        peers = [p for t, p in current.items() if t != tid]
        scorer = PeerAnomalyScorer(min_peers=int(rule["min_peers"]), **_anomaly_params(rule))
        try:
            scorer.fit(peers)
        except InsufficientPeers:
            break
        comps = scorer.component_scores(current[tid])
        score = float(comps.max())
        if score > rule["z_threshold"]:
            out.append(make_alert(rule, [tid], start, {
                "score": score,
                "z_threshold": rule["z_threshold"],
                "component": PROFILE_FIELDS[int(np.argmax(comps))],
                "peers": len(peers),
            }))
    return out


# -- inversion probes ----------------------------------------------------------


def _band_slices(d: int, bits: int = 64) -> list[tuple[int, int]]:
    # Split into d + 1 bands: fingerprints within Hamming distance d agree on one band.
    n = d + 1
    base, extra = divmod(bits, n)
    out, pos = [], 0
    for i in range(n):
        width = base + (1 if i < extra else 0)
        out.append((pos, width))
        pos += width
    return out


_SMALL_BUCKET = 32


def _close_pairs(fp: np.ndarray, first: np.ndarray, second: np.ndarray, d: int) -> np.ndarray:
    return np.bitwise_count(fp[first] ^ fp[second]) <= d


def near_duplicate_clusters(fingerprints: Sequence[int], max_hamming: int) -> list[list[int]]:
    """Single-linkage clusters of fingerprints joined by Hamming distance ``<= max_hamming``.

    Returns index lists, each sorted, ordered by smallest member.
    """
    n = len(fingerprints)
    if n == 0:
        return []
    arr = np.asarray(fingerprints, dtype=np.uint64)
    src, dst = [], []
    if n > 1 and max_hamming >= 0:
        for shift, width in _band_slices(max_hamming):
            keys = (arr >> np.uint64(shift)) & np.uint64((1 << width) - 1)
            order = np.argsort(keys, kind="stable")
            sk = keys[order]
            starts = np.flatnonzero(np.r_[True, sk[1:] != sk[:-1]])
            sizes = np.diff(np.r_[starts, n])
            size_at = np.repeat(sizes, sizes)
            # small buckets: compare each element with the next few in sorted order
            small = size_at <= _SMALL_BUCKET
            span = int(sizes[sizes <= _SMALL_BUCKET].max(initial=1))
            for k in range(1, span):
                a, b = order[:-k], order[k:]
                ok = small[:-k] & (sk[:-k] == sk[k:])
                ok[ok] = _close_pairs(arr, a[ok], b[ok], max_hamming)
                src.append(a[ok])
                dst.append(b[ok])
            # large buckets: blockwise dense comparison, reduced to a spanning star
            for g in np.flatnonzero(sizes > _SMALL_BUCKET):
                idx = order[starts[g]:starts[g] + sizes[g]]
                sub = arr[idx]
                rows, cols = [], []
                for r0 in range(0, len(idx), 1024):
                    rr, cc = np.nonzero(np.bitwise_count(sub[r0:r0 + 1024, None] ^ sub[None, :]) <= max_hamming)
                    rows.append(rr + r0)
                    cols.append(cc)
                rows, cols = np.concatenate(rows), np.concatenate(cols)
                adj = coo_matrix((np.ones(len(rows), dtype=np.int8), (rows, cols)), shape=(len(idx), len(idx)))
                _, labels = connected_components(adj, directed=False)
                _, head = np.unique(labels, return_index=True)
                src.append(idx[head[labels]])
                dst.append(idx)
    if src:
        src, dst = np.concatenate(src), np.concatenate(dst)
    else:
        src = dst = np.zeros(0, dtype=np.intp)
    graph = coo_matrix((np.ones(len(src), dtype=np.int8), (src, dst)), shape=(n, n))
    _, labels = connected_components(graph, directed=False)
    groups: dict[int, list[int]] = {}
    for i, label in enumerate(labels.tolist()):
        groups.setdefault(label, []).append(i)
    return sorted(groups.values(), key=lambda g: g[0])


def detect_inversion_probe(
    state: AuditState,
    rule: IndicatorRule | None = None,
    start: int | None = None,
    end: int | None = None,
) -> list[Alert]:
    """Flag clusters of near-duplicate inputs spread over many accounts.

    Fingerprints are grouped per service kind; a cluster fires when it spans
    at least ``min_accounts`` tenants and ``min_queries`` transactions within
    the window. Without ``start``/``end`` the window containing the state's
    clock is used.
    """
    if not state.level.sees_payload:
        raise UnavailableAtMonitoringLevel("inversion-probe detection needs content fingerprints")
    if rule is None:
        rule = next(r for r in default_ruleset() if r.indicator_id is IndicatorId.INVERSION_PROBE)
    if start is None:
        now = state.clock or 0
        start = now // rule.window_ms * rule.window_ms
    if end is None:
        end = start + rule.window_ms
    d = int(rule["max_hamming"])

    per_service: dict[ServiceKind, dict[int, dict[str, int]]] = {}
    for tid in sorted(state.tenants):
        for (service, fp), n in state.fingerprint_counts(tid, start, end).items():
            slot = per_service.setdefault(service, {}).setdefault(fp, {})
            slot[tid] = slot.get(tid, 0) + n

    alerts = []
    for service in sorted(per_service, key=lambda s: s.value):
        table = per_service[service]
        fps = sorted(table)
        for cluster in near_duplicate_clusters(fps, d):
            accounts: dict[str, int] = {}
            for i in cluster:
                for tid, n in table[fps[i]].items():
                    accounts[tid] = accounts.get(tid, 0) + n
            queries = sum(accounts.values())
            if len(accounts) >= rule["min_accounts"] and queries >= rule["min_queries"]:
                alerts.append(make_alert(rule, sorted(accounts), start, {
                    "accounts": len(accounts),
                    "queries": queries,
                    "distinct_fingerprints": len(cluster),
                    "service": service.value,
                    "max_hamming": d,
                    "min_accounts": rule["min_accounts"],
                    "min_queries": rule["min_queries"],
                }))
    return alerts


def _eval_inversion(state, rule, start, end):
    return detect_inversion_probe(state, rule, start, end)


_EVALUATORS = {
    IndicatorId.HIGH_FACE_RATE: _eval_high_face_rate,
    IndicatorId.MANY_FACES_PER_INPUT: _eval_many_faces,
    IndicatorId.MANY_DISTINCT_FACES: _eval_many_distinct,
    IndicatorId.TARGET_TRACKING: _eval_target_tracking,
    IndicatorId.BLACKLIST_OBJECT: _eval_blacklist,
    IndicatorId.CROSS_SERVICE_COMBO: _eval_combo,
    IndicatorId.SELF_ANOMALY: _eval_self_anomaly,
    IndicatorId.PEER_ANOMALY: _eval_peer_anomaly,
    IndicatorId.INVERSION_PROBE: _eval_inversion,
}


def evaluate_rules(state: AuditState, rules: Sequence[IndicatorRule], now: int) -> list[Alert]:
    """Evaluate ``rules`` for the windows containing ``now``.

    Payload indicators are skipped when the state runs at metadata-only
    level. The result is sorted and carries no duplicate alert keys.
    """
    seen: set[tuple] = set()
    alerts: list[Alert] = []
    for rule in rules:
        if rule.indicator_id in PAYLOAD_INDICATORS and not state.level.sees_payload:
            continue
        start = now // rule.window_ms * rule.window_ms
        for alert in _EVALUATORS[rule.indicator_id](state, rule, start, start + rule.window_ms):
            if alert.key not in seen:
                seen.add(alert.key)
                alerts.append(alert)
    alerts.sort(key=alert_sort_key)
    return alerts


def alert_sort_key(alert: Alert) -> tuple:
    return (alert.window_start, _ORDER[alert.indicator_id], alert.subjects)
