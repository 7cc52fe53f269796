"""Audit informer: per-tenant derived data built from admitted transactions.

For every tenant the informer keeps

* timestamped event logs (face-service arrivals, faces per input, blacklist
  matches, content fingerprints) covering a bounded retention horizon,
* distinct-face sketches for the session, the current day and all time,
* Space-Saving tables over identification targets, all-time and for the
  current day,
* a per-input view of which services touched each input,
* a ring of hourly usage profiles.

Transactions are redacted to the configured monitoring level on the way in,
so payload-derived structures stay empty at ``MonitoringLevel.METADATA_ONLY``.
"""

from __future__ import annotations

import bisect
import hashlib
import json
from collections import OrderedDict, deque
from dataclasses import dataclass
from typing import Iterable, Sequence

import numpy as np
from sklearn.base import BaseEstimator

from . import defaults
from .errors import ClockRegression, UnavailableAtMonitoringLevel, UnknownInput, UnknownTenant
from .sketches import DEFAULT_HH_CAPACITY, DEFAULT_PRECISION, DistinctSketch, HeavyHitterSketch, hash64
from .txn import (
    SERVICE_GROUPS,
    SERVICE_ORDER,
    MonitoringLevel,
    Pseudonymizer,
    ServiceKind,
    StatusKind,
    Transaction,
    redact,
)

CHECKPOINT_VERSION = 1

PROFILE_FIELDS: tuple[str, ...] = tuple(f"requests_{s.value}" for s in SERVICE_ORDER) + (
    "mean_faces_per_input",
    "distinct_faces_delta",
    "identification_share",
    "blacklist_matches",
)
PAYLOAD_PROFILE_FIELDS = frozenset({"mean_faces_per_input", "distinct_faces_delta", "blacklist_matches"})


@dataclass(frozen=True)
class UsageProfile:
    window_start: int
    vector: tuple[float, ...]

    def __post_init__(self) -> None:
        if len(self.vector) != len(PROFILE_FIELDS):
            raise ValueError(f"profile needs {len(PROFILE_FIELDS)} components")
        if any(v < 0 for v in self.vector):
            raise ValueError("profile components must be non-negative")

    def __getitem__(self, name: str) -> float:
        return self.vector[PROFILE_FIELDS.index(name)]

    @property
    def face_requests(self) -> float:
        return sum(self[f"requests_{s.value}"] for s in SERVICE_ORDER if s.is_face)

    @property
    def requests(self) -> float:
        return sum(self.vector[: len(SERVICE_ORDER)])

    def as_dict(self) -> dict[str, float]:
        return dict(zip(PROFILE_FIELDS, self.vector))


@dataclass(frozen=True)
class InputView:
    services: frozenset[ServiceKind]
    face_count_max: int
    blacklist_hit: bool


def blacklist_matches(
    txn: Transaction, blacklist: Iterable[str], confidence_floor: float = defaults.CONFIDENCE_FLOOR
) -> set[str]:
    """Case-folded labels of ``txn`` that appear on ``blacklist`` with enough confidence."""
    folded = {b.casefold() for b in blacklist}
    if not folded:
        return set()
    return {
        label.casefold()
        for label, conf in txn.response.detected_labels
        if conf >= confidence_floor and label.casefold() in folded
    }


def load_blacklist(path) -> frozenset[str]:
    with open(path, encoding="utf-8") as fh:
        return frozenset(
            line.strip().casefold() for line in fh if line.strip() and not line.lstrip().startswith("#")
        )


class _EventLog:
    """Timestamp-sorted parallel lists with amortised pruning."""

    __slots__ = ("ts", "val", "_pruned_at")

    def __init__(self) -> None:
        self.ts: list[int] = []
        self.val: list = []
        self._pruned_at = 0

    def append(self, ts: int, value=None) -> None:
        self.ts.append(ts)
        self.val.append(value)

    def prune(self, before: int) -> None:
        if len(self.ts) < 2 * self._pruned_at + 64:
            return
        i = bisect.bisect_left(self.ts, before)
        if i:
            del self.ts[:i]
            del self.val[:i]
        self._pruned_at = len(self.ts)

    def span(self, start: int, end: int) -> tuple[int, int]:
        return bisect.bisect_left(self.ts, start), bisect.bisect_left(self.ts, end)

    def count(self, start: int, end: int) -> int:
        i, j = self.span(start, end)
        return j - i


class _InputRecord:
    __slots__ = ("services", "face_count_max", "blacklist_hit", "last_ts")

    def __init__(self) -> None:
        self.services: set[ServiceKind] = set()
        self.face_count_max = 0
        self.blacklist_hit = False
        self.last_ts = 0


class TenantAudit:
    """Derived state for one tenant. Mutated only through :class:`AuditState`."""

    def __init__(self, cfg: AuditState) -> None:
        self.last_ts: int | None = None
        self.arrivals = {g: _EventLog() for g in SERVICE_GROUPS}
        self.face_window: deque[int] = deque()
        self.faces = _EventLog()  # value: faces in one face-service response
        self.blacklist = _EventLog()  # value: number of matched labels
        self.fingerprints = _EventLog()  # value: (service, fingerprint)
        self.distinct_total = DistinctSketch(cfg.precision)
        self.distinct_day = DistinctSketch(cfg.precision)
        self.day_index: int | None = None
        self.distinct_session = DistinctSketch(cfg.precision)
        self.session_start: int | None = None
        self.targets = HeavyHitterSketch(cfg.hh_capacity)
        self.targets_day = HeavyHitterSketch(cfg.hh_capacity)
        self.inputs: OrderedDict[str, _InputRecord] = OrderedDict()
        self.combo_inputs: set[str] = set()
        self.blacklist_log: deque[tuple[int, str, tuple[str, ...]]] = deque(maxlen=cfg.blacklist_log_size)
        self.history: deque[UsageProfile] = deque(maxlen=cfg.history)
        self.window_start: int | None = None
        self._reset_window(0.0)

    def _reset_window(self, distinct_base: float) -> None:
        self.w_requests = [0] * len(SERVICE_ORDER)
        self.w_face_txns = 0
        self.w_faces = 0
        self.w_ident = 0
        self.w_blacklist = 0
        self.w_distinct_base = distinct_base


class AuditState:
    """Derived audit data for every tenant seen so far.

    ``level`` fixes what the state may learn; it is applied to each ingested
    transaction through :func:`~aiaas_monitor.txn.redact`.
    """

    def __init__(
        self,
        level: MonitoringLevel = MonitoringLevel.FULL_CONTENT,
        blacklist: Iterable[str] = defaults.DEFAULT_BLACKLIST,
        *,
        precision: int = DEFAULT_PRECISION,
        hh_capacity: int = DEFAULT_HH_CAPACITY,
        profile_window_ms: int = defaults.PROFILE_WINDOW_MS,
        history: int = defaults.PROFILE_HISTORY,
        confidence_floor: float = defaults.CONFIDENCE_FLOOR,
        session_gap_ms: int = defaults.SESSION_GAP_MS,
        retention_ms: int = 2 * defaults.PROFILE_WINDOW_MS,
        max_inputs: int = 100_000,
        blacklist_log_size: int = 10_000,
        tolerance_ms: int = 0,
        pseudonym_key: str = "aiaas-monitor",
    ) -> None:
        self.level = MonitoringLevel(level)
        self.blacklist = frozenset(b.casefold() for b in blacklist)
        self.precision = precision
        self.hh_capacity = hh_capacity
        self.profile_window_ms = profile_window_ms
        self.history = history
        self.confidence_floor = confidence_floor
        self.session_gap_ms = session_gap_ms
        self.retention_ms = retention_ms
        self.max_inputs = max_inputs
        self.blacklist_log_size = blacklist_log_size
        self.tolerance_ms = tolerance_ms
        self.pseudonym_key = pseudonym_key
        self._pseudonymizer = Pseudonymizer(pseudonym_key)
        self.tenants: dict[str, TenantAudit] = {}
        self.clock: int | None = None

    # -- ingestion -----------------------------------------------------------

    def ingest(self, txn: Transaction) -> AuditState:
        if txn.response.status.kind is StatusKind.DENIED:
            return self
        txn = redact(txn, self.level, self._pseudonymizer)
        ta = self.tenants.get(txn.tenant_id)
        if ta is None:
            ta = self.tenants[txn.tenant_id] = TenantAudit(self)
        ts = txn.timestamp
        if ta.last_ts is not None and ts + self.tolerance_ms < ta.last_ts:
            raise ClockRegression(txn.tenant_id, ts, ta.last_ts)
        self._roll_windows(ta, ts)
        ta.last_ts = ts if ta.last_ts is None else max(ts, ta.last_ts)
        self.clock = ta.last_ts if self.clock is None else max(self.clock, ta.last_ts)

        service = txn.service
        group = service.group
        ta.arrivals[group].append(ts)
        ta.w_requests[SERVICE_ORDER.index(service)] += 1
        if service.is_identification:
            ta.w_ident += 1
        if service.is_face:
            ta.face_window.append(ts)
            cut = ts - defaults.RATE_WINDOW_MS
            while ta.face_window and ta.face_window[0] <= cut:
                ta.face_window.popleft()

        if self.level.sees_payload:
            self._ingest_payload(ta, txn)

        horizon = ts - self.retention_ms
        for log in (*ta.arrivals.values(), ta.faces, ta.blacklist, ta.fingerprints):
            log.prune(horizon)
        return self

    def _ingest_payload(self, ta: TenantAudit, txn: Transaction) -> None:
        ts = txn.timestamp
        faces = txn.response.detected_face_ids
        service = txn.service
        if service.is_face:
            ta.faces.append(ts, len(faces))
            ta.w_face_txns += 1
            ta.w_faces += len(faces)
        if faces:
            hashes = [hash64(f) for f in faces]
            for sketch in (ta.distinct_total, ta.distinct_day, ta.distinct_session):
                for h in hashes:
                    sketch.add_hash(h)
        if txn.request.target_face_id is not None:
            ta.targets.add(txn.request.target_face_id)
            ta.targets_day.add(txn.request.target_face_id)
        matched = blacklist_matches(txn, self.blacklist, self.confidence_floor)
        if matched:
            ta.blacklist.append(ts, len(matched))
            ta.w_blacklist += len(matched)
            ta.blacklist_log.append((ts, txn.txn_id, tuple(sorted(matched))))
        ta.fingerprints.append(ts, (service, txn.request.content_fingerprint))

        input_id = txn.request.input_id
        if input_id:
            rec = ta.inputs.get(input_id)
            if rec is None:
                rec = ta.inputs[input_id] = _InputRecord()
                if len(ta.inputs) > self.max_inputs:
                    old, _ = ta.inputs.popitem(last=False)
                    ta.combo_inputs.discard(old)
            else:
                ta.inputs.move_to_end(input_id)
            rec.services.add(service)
            rec.face_count_max = max(rec.face_count_max, len(faces))
            rec.blacklist_hit = rec.blacklist_hit or bool(matched)
            rec.last_ts = ts
            if rec.blacklist_hit:
                ta.combo_inputs.add(input_id)

    def _roll_windows(self, ta: TenantAudit, ts: int) -> None:
        day = ts // defaults.DAY_MS
        if ta.day_index != day:
            if ta.day_index is not None:
                ta.distinct_day = DistinctSketch(self.precision)
                ta.targets_day = HeavyHitterSketch(self.hh_capacity)
            ta.day_index = day
        if ta.session_start is None or (ta.last_ts is not None and ts - ta.last_ts > self.session_gap_ms):
            ta.distinct_session = DistinctSketch(self.precision)
            ta.session_start = ts
        self._close_profiles(ta, ts)

    def _close_profiles(self, ta: TenantAudit, now: int) -> None:
        w = self.profile_window_ms
        if ta.window_start is None:
            ta.window_start = now // w * w
            ta._reset_window(ta.distinct_total.estimate())
            return
        if now < ta.window_start + w:
            return
        ta.history.append(self._profile_of(ta))
        current = ta.distinct_total.estimate()
        target = now // w * w
        # Idle windows still count as usage: emit zero profiles, at most a full ring.
        missing = (target - ta.window_start) // w - 1
        skip = max(0, missing - self.history)
        for k in range(skip + 1, missing + 1):
            ta.history.append(UsageProfile(ta.window_start + k * w, (0.0,) * len(PROFILE_FIELDS)))
        ta.window_start = target
        ta._reset_window(current)

    def _profile_of(self, ta: TenantAudit) -> UsageProfile:
        total = sum(ta.w_requests)
        mean_faces = ta.w_faces / ta.w_face_txns if ta.w_face_txns else 0.0
        delta = max(0.0, ta.distinct_total.estimate() - ta.w_distinct_base)
        ident_share = ta.w_ident / total if total else 0.0
        vector = tuple(float(c) for c in ta.w_requests) + (
            float(mean_faces),
            float(delta),
            float(ident_share),
            float(ta.w_blacklist),
        )
        return UsageProfile(ta.window_start, vector)

    def advance_to(self, now: int) -> AuditState:
        """Close every tenant's profile windows that end at or before ``now``."""
        for ta in self.tenants.values():
            if ta.window_start is not None:
                self._close_profiles(ta, now)
        self.clock = now if self.clock is None else max(self.clock, now)
        return self

    # -- accessors -------------------------------------------------------------

    def _tenant(self, tenant_id: str) -> TenantAudit:
        try:
            return self.tenants[tenant_id]
        except KeyError:
            raise UnknownTenant(tenant_id) from None

    def _require_payload(self, what: str) -> None:
        if not self.level.sees_payload:
            raise UnavailableAtMonitoringLevel(f"{what} is not collected at level {self.level.value!r}")

    def window_rate(self, tenant_id: str, service_group: str = "face", window_s: int = 60, now: int | None = None) -> float:
        """Requests per minute over the trailing window ending at ``now`` (inclusive)."""
        if window_s not in (60, 3600):
            raise ValueError("window_s must be 60 or 3600")
        if service_group not in SERVICE_GROUPS:
            raise ValueError(f"unknown service group {service_group!r}")
        ta = self._tenant(tenant_id)
        ref = ta.last_ts if now is None else now
        if ref is None:
            return 0.0
        n = ta.arrivals[service_group].count(ref - window_s * 1000 + 1, ref + 1)
        return n * 60.0 / window_s

    def distinct_faces(self, tenant_id: str, horizon: str = "total") -> tuple[float, float]:
        self._require_payload("distinct face count")
        ta = self._tenant(tenant_id)
        sketch = {"total": ta.distinct_total, "daily": ta.distinct_day, "session": ta.distinct_session}.get(horizon)
        if sketch is None:
            raise ValueError(f"horizon must be session, daily or total, got {horizon!r}")
        return sketch.estimate(), sketch.relative_error_bound()

    def top_identification_targets(self, tenant_id: str, phi: float) -> list[tuple[str, int, int]]:
        self._require_payload("identification targets")
        return self._tenant(tenant_id).targets.frequent(phi)

    def identification_calls(self, tenant_id: str) -> int:
        self._require_payload("identification targets")
        return self._tenant(tenant_id).targets.total

    def correlate_input(self, tenant_id: str, input_id: str) -> InputView:
        self._require_payload("input correlation")
        ta = self._tenant(tenant_id)
        alias = self._pseudonymizer(input_id) if self.level is MonitoringLevel.METADATA_PLUS_DERIVED else input_id
        rec = ta.inputs.get(input_id) or ta.inputs.get(alias)
        if rec is None:
            raise UnknownInput(input_id)
        return InputView(frozenset(rec.services), rec.face_count_max, rec.blacklist_hit)

    def profile_snapshot(self, tenant_id: str) -> list[UsageProfile]:
        return list(self._tenant(tenant_id).history)

    def blacklist_log(self, tenant_id: str) -> list[tuple[int, str, tuple[str, ...]]]:
        self._require_payload("blacklist matches")
        return list(self._tenant(tenant_id).blacklist_log)

    # -- windowed statistics used by the detector ------------------------------

    def peak_face_count(self, tenant_id: str, start: int, end: int, rate_window_ms: int = defaults.RATE_WINDOW_MS) -> int:
        """Largest trailing-``rate_window_ms`` face-service count at any arrival in ``[start, end)``."""
        log = self._tenant(tenant_id).arrivals["face"]
        i, j = log.span(start, end)
        ts = log.ts
        lo = bisect.bisect_right(ts, ts[i] - rate_window_ms) if i < j else 0
        peak = 0
        for k in range(i, j):
            cut = ts[k] - rate_window_ms
            while ts[lo] <= cut:
                lo += 1
            peak = max(peak, k - lo + 1)
        return peak

    def max_faces_in_window(self, tenant_id: str, start: int, end: int) -> int:
        self._require_payload("faces per input")
        log = self._tenant(tenant_id).faces
        i, j = log.span(start, end)
        return max(log.val[i:j], default=0)

    def blacklist_count(self, tenant_id: str, start: int, end: int) -> int:
        self._require_payload("blacklist matches")
        log = self._tenant(tenant_id).blacklist
        i, j = log.span(start, end)
        return sum(log.val[i:j])

    def daily_distinct(self, tenant_id: str, day_index: int) -> float:
        self._require_payload("distinct face count")
        ta = self._tenant(tenant_id)
        return ta.distinct_day.estimate() if ta.day_index == day_index else 0.0

    def daily_targets(self, tenant_id: str, day_index: int, phi: float) -> tuple[int, list[tuple[str, int, int]]]:
        """Identification calls and targets above ``phi`` for one calendar day."""
        self._require_payload("identification targets")
        ta = self._tenant(tenant_id)
        if ta.day_index != day_index:
            return 0, []
        return ta.targets_day.total, ta.targets_day.frequent(phi)

    def combo_inputs(self, tenant_id: str, start: int, end: int) -> list[tuple[str, InputView]]:
        self._require_payload("input correlation")
        ta = self._tenant(tenant_id)
        out = []
        for input_id in sorted(ta.combo_inputs):
            rec = ta.inputs[input_id]
            if start <= rec.last_ts < end:
                out.append((input_id, InputView(frozenset(rec.services), rec.face_count_max, rec.blacklist_hit)))
        return out

    def fingerprint_counts(self, tenant_id: str, start: int, end: int) -> dict[tuple[ServiceKind, int], int]:
        self._require_payload("content fingerprints")
        log = self._tenant(tenant_id).fingerprints
        i, j = log.span(start, end)
        counts: dict[tuple[ServiceKind, int], int] = {}
        for key in log.val[i:j]:
            counts[key] = counts.get(key, 0) + 1
        return counts

    # -- checkpointing -----------------------------------------------------------

    def _config_dict(self) -> dict:
        return {
            "level": self.level.value,
            "blacklist": sorted(self.blacklist),
            "precision": self.precision,
            "hh_capacity": self.hh_capacity,
            "profile_window_ms": self.profile_window_ms,
            "history": self.history,
            "confidence_floor": self.confidence_floor,
            "session_gap_ms": self.session_gap_ms,
            "retention_ms": self.retention_ms,
            "max_inputs": self.max_inputs,
            "blacklist_log_size": self.blacklist_log_size,
            "tolerance_ms": self.tolerance_ms,
            "pseudonym_key": self.pseudonym_key,
        }

    def to_checkpoint(self) -> bytes:
        """Canonical, versioned text dump; equal states give equal bytes.

        Event logs are dumped as retained, so two states agree only if they
        saw the same transactions in the same order.
        """

        def log_dump(log: _EventLog, conv=lambda v: v) -> list:
            return [log.ts, [conv(v) for v in log.val], log._pruned_at]

        tenants = {}
        for tid in sorted(self.tenants):
            ta = self.tenants[tid]
            tenants[tid] = {
                "last_ts": ta.last_ts,
                "arrivals": {g: log_dump(ta.arrivals[g]) for g in SERVICE_GROUPS},
                "face_window": list(ta.face_window),
                "faces": log_dump(ta.faces),
                "blacklist": log_dump(ta.blacklist),
                "fingerprints": log_dump(ta.fingerprints, lambda v: [v[0].value, v[1]]),
                "distinct_total": ta.distinct_total.to_dict(),
                "distinct_day": ta.distinct_day.to_dict(),
                "day_index": ta.day_index,
                "distinct_session": ta.distinct_session.to_dict(),
                "session_start": ta.session_start,
                "targets": ta.targets.to_dict(),
                "targets_day": ta.targets_day.to_dict(),
                "inputs": [
                    [k, sorted(s.value for s in r.services), r.face_count_max, r.blacklist_hit, r.last_ts]
                    for k, r in ta.inputs.items()
                ],
                "blacklist_log": [list(e) for e in ta.blacklist_log],
                "history": [[p.window_start, list(p.vector)] for p in ta.history],
                "window_start": ta.window_start,
                "window": [ta.w_requests, ta.w_face_txns, ta.w_faces, ta.w_ident, ta.w_blacklist, ta.w_distinct_base],
            }
        doc = {"version": CHECKPOINT_VERSION, "config": self._config_dict(), "clock": self.clock, "tenants": tenants}
        return json.dumps(doc, sort_keys=True, separators=(",", ":")).encode("utf-8")

    def digest(self) -> str:
        return hashlib.sha256(self.to_checkpoint()).hexdigest()

    @classmethod
    def from_checkpoint(cls, data: bytes) -> AuditState:
        doc = json.loads(data)
        if doc.get("version") != CHECKPOINT_VERSION:
            raise ValueError(f"unsupported checkpoint version {doc.get('version')!r}")
        cfg = doc["config"]
        state = cls(MonitoringLevel(cfg.pop("level")), cfg.pop("blacklist"), **cfg)
        state.clock = doc["clock"]

        def log_load(raw, conv=lambda v: v) -> _EventLog:
            log = _EventLog()
            log.ts = list(raw[0])
            log.val = [conv(v) for v in raw[1]]
            log._pruned_at = raw[2]
            return log

        for tid, t in doc["tenants"].items():
            ta = TenantAudit(state)
            ta.last_ts = t["last_ts"]
            ta.arrivals = {g: log_load(t["arrivals"][g]) for g in SERVICE_GROUPS}
            ta.face_window = deque(t["face_window"])
            ta.faces = log_load(t["faces"])
            ta.blacklist = log_load(t["blacklist"])
            ta.fingerprints = log_load(t["fingerprints"], lambda v: (ServiceKind(v[0]), v[1]))
            ta.distinct_total = DistinctSketch.from_dict(t["distinct_total"])
            ta.distinct_day = DistinctSketch.from_dict(t["distinct_day"])
            ta.day_index = t["day_index"]
            ta.distinct_session = DistinctSketch.from_dict(t["distinct_session"])
            ta.session_start = t["session_start"]
            ta.targets = HeavyHitterSketch.from_dict(t["targets"])
            ta.targets_day = HeavyHitterSketch.from_dict(t["targets_day"])
            for k, services, fmax, hit, last in t["inputs"]:
                rec = _InputRecord()
                rec.services = {ServiceKind(s) for s in services}
                rec.face_count_max, rec.blacklist_hit, rec.last_ts = fmax, hit, last
                ta.inputs[k] = rec
                if hit:
                    ta.combo_inputs.add(k)
            ta.blacklist_log.extend((e[0], e[1], tuple(e[2])) for e in t["blacklist_log"])
            ta.history.extend(UsageProfile(ws, tuple(v)) for ws, v in t["history"])
            ta.window_start = t["window_start"]
            (ta.w_requests, ta.w_face_txns, ta.w_faces, ta.w_ident, ta.w_blacklist, ta.w_distinct_base) = t["window"]
            state.tenants[tid] = ta
        return state

    def __eq__(self, other: object) -> bool:
        if not isinstance(other, AuditState):
            return NotImplemented
        return self.to_checkpoint() == other.to_checkpoint()

    __hash__ = None  # type: ignore[assignment]


def ingest(txn: Transaction, state: AuditState, level: MonitoringLevel | None = None) -> AuditState:
    """Functional-style entry point. ``level`` must match the state's level if given."""
    if level is not None and MonitoringLevel(level) is not state.level:
        raise ValueError(f"state was built for level {state.level.value!r}, not {MonitoringLevel(level).value!r}")
    return state.ingest(txn)


class AuditInformer(BaseEstimator):
    """Estimator-style front end over :class:`AuditState`.

    ``fit`` rebuilds the state from a transaction stream, ``partial_fit``
    continues it, and ``transform`` returns each requested tenant's latest
    closed usage profile as a row of a numeric matrix.
    """

    def __init__(
        self,
        level: str = "full",
        blacklist: Sequence[str] = tuple(sorted(defaults.DEFAULT_BLACKLIST)),
        precision: int = DEFAULT_PRECISION,
        hh_capacity: int = DEFAULT_HH_CAPACITY,
        profile_window_ms: int = defaults.PROFILE_WINDOW_MS,
        history: int = defaults.PROFILE_HISTORY,
        confidence_floor: float = defaults.CONFIDENCE_FLOOR,
    ) -> None:
        self.level = level
        self.blacklist = blacklist
        self.precision = precision
        self.hh_capacity = hh_capacity
        self.profile_window_ms = profile_window_ms
        self.history = history
        self.confidence_floor = confidence_floor

    def _new_state(self) -> AuditState:
        return AuditState(
            MonitoringLevel(self.level),
            self.blacklist,
            precision=self.precision,
            hh_capacity=self.hh_capacity,
            profile_window_ms=self.profile_window_ms,
            history=self.history,
            confidence_floor=self.confidence_floor,
        )

    def fit(self, X: Iterable[Transaction], y=None) -> AuditInformer:
        self.state_ = self._new_state()
        return self.partial_fit(X)

    def partial_fit(self, X: Iterable[Transaction], y=None) -> AuditInformer:
        if not hasattr(self, "state_"):
            self.state_ = self._new_state()
        for txn in X:
            if not isinstance(txn, Transaction):
                raise TypeError(f"expected Transaction, got {type(txn).__name__}")
            self.state_.ingest(txn)
        return self

    def transform(self, tenants: Sequence[str]) -> np.ndarray:
        from sklearn.utils.validation import check_is_fitted

        check_is_fitted(self, "state_")
        rows = []
        for tid in tenants:
            hist = self.state_.profile_snapshot(tid)
            rows.append(hist[-1].vector if hist else (0.0,) * len(PROFILE_FIELDS))
        return np.asarray(rows, dtype=float).reshape(len(rows), len(PROFILE_FIELDS))

    def get_feature_names_out(self, input_features=None) -> np.ndarray:
        return np.asarray(PROFILE_FIELDS, dtype=object)
