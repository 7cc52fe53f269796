"""Deterministic synthetic workloads with ground-truth misuse labels.

Every scenario emits a benign background population plus, unless it is
``BenignBaseline``, one or more misuse tenants whose behaviour exceeds the
targeted indicator's default threshold by ``margin`` (2x by default).

Randomness comes from per-tenant ``numpy`` generators seeded from
``(seed, scenario, role, index)``, so adding a tenant never perturbs the
streams of the others and equal specs give bit-identical output.
"""

from __future__ import annotations

import enum
import heapq
import json
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Iterator, Mapping, Sequence

import numpy as np

from . import defaults
from .errors import InvalidScenarioParams, UnorderedInput
from .txn import (
    ByProducts,
    RequestDescriptor,
    ResponseDescriptor,
    ServiceKind,
    Transaction,
    TransactionMeta,
)

# 2023-11-15T00:00:00Z; aligned to hour and day boundaries.
DEFAULT_START_MS = 1_700_006_400_000
MINUTE_MS = 60_000
HOUR_MS = 3_600_000


class ScenarioId(str, enum.Enum):
    BENIGN_BASELINE = "BenignBaseline"
    SURVEILLANCE_RATE = "SurveillanceRate"
    CROWD_ANALYSIS = "CrowdAnalysis"
    DISTINCT_FACES_OVER_TIME = "DistinctFacesOverTime"
    TARGET_TRACKING = "TargetTracking"
    BLACKLIST_SCREENING = "BlacklistScreening"
    BEHAVIOR_DRIFT = "BehaviorDrift"
    INVERSION_PROBE = "InversionProbe"


_CODES = {s: i for i, s in enumerate(ScenarioId)}
_PREFIX = {
    ScenarioId.BENIGN_BASELINE: "base",
    ScenarioId.SURVEILLANCE_RATE: "surv",
    ScenarioId.CROWD_ANALYSIS: "crowd",
    ScenarioId.DISTINCT_FACES_OVER_TIME: "dist",
    ScenarioId.TARGET_TRACKING: "track",
    ScenarioId.BLACKLIST_SCREENING: "black",
    ScenarioId.BEHAVIOR_DRIFT: "drift",
    ScenarioId.INVERSION_PROBE: "probe",
}

# Indicator each scenario is built to trip.
TARGET_INDICATOR: dict[ScenarioId, str | None] = {
    ScenarioId.BENIGN_BASELINE: None,
    ScenarioId.SURVEILLANCE_RATE: "HIGH_FACE_RATE",
    ScenarioId.CROWD_ANALYSIS: "MANY_FACES_PER_INPUT",
    ScenarioId.DISTINCT_FACES_OVER_TIME: "MANY_DISTINCT_FACES",
    ScenarioId.TARGET_TRACKING: "TARGET_TRACKING",
    ScenarioId.BLACKLIST_SCREENING: "BLACKLIST_OBJECT",
    ScenarioId.BEHAVIOR_DRIFT: "SELF_ANOMALY",
    ScenarioId.INVERSION_PROBE: "INVERSION_PROBE",
}

_DESCRIPTIONS = {
    ScenarioId.BENIGN_BASELINE: "Benign tenant population with mixed vision and face usage",
    ScenarioId.SURVEILLANCE_RATE: "High request rate for face detection",
    ScenarioId.CROWD_ANALYSIS: "Large number of faces in an image/video",
    ScenarioId.DISTINCT_FACES_OVER_TIME: "Large number of different faces are analysed",
    ScenarioId.TARGET_TRACKING: "Large number of identification attempts for particular individual(s)",
    ScenarioId.BLACKLIST_SCREENING: "Detection of 'black-listed' objects",
    ScenarioId.BEHAVIOR_DRIFT: "Face-service rate jump after a stable hourly baseline",
    ScenarioId.INVERSION_PROBE: "Near-duplicate queries spread over several accounts",
}

_COMMON = {
    "duration_s": 3600,
    "tenant_count": 50,
    "benign_rate_per_min": 2.0,
    "benign_faces_max": 5,
    "distinct_face_pool": 500,
    "margin": 2.0,
    "start_ms": DEFAULT_START_MS,
}

# ``None`` marks a parameter derived from ``margin`` and the default threshold.
_SCENARIO_DEFAULTS: dict[ScenarioId, dict] = {
    ScenarioId.BENIGN_BASELINE: {},
    ScenarioId.SURVEILLANCE_RATE: {"base_rate_per_min": None},
    ScenarioId.CROWD_ANALYSIS: {"base_rate_per_min": 5.0, "faces_per_input": None, "crowd_face_pool": 2000},
    ScenarioId.DISTINCT_FACES_OVER_TIME: {"distinct_faces_per_day": None, "faces_per_input": 8},
    ScenarioId.TARGET_TRACKING: {"identification_calls": 1000, "target_query_share": 0.5},
    ScenarioId.BLACKLIST_SCREENING: {"screening_inputs_per_hour": None, "crowd_faces_min": 12, "crowd_faces_max": 30},
    ScenarioId.BEHAVIOR_DRIFT: {
        "tenant_count": 10,
        "stable_windows": 48,
        "drift_windows": 1,
        "base_rate_per_min": 10.0,
        "companion_rate_per_min": 10.0,
        "drift_multiplier": 10.0,
        "duration_s": None,
    },
    ScenarioId.INVERSION_PROBE: {
        "probe_account_count": 8,
        "probe_queries_per_hour": 2000,
        "probe_max_bit_flips": 2,
    },
}

BENIGN_LABELS = (
    "person", "car", "tree", "dog", "cat", "building", "food", "laptop", "bicycle",
    "chair", "sky", "road", "phone", "book", "table", "flower",
)
EMOTIONS = ("happy", "neutral", "surprised", "sad", "calm")
BLACKLISTED_LABELS = ("placard", "protest banner")

_BENIGN_MIX = (
    (ServiceKind.FACE_DETECT, 0.30),
    (ServiceKind.LABEL_DETECT, 0.20),
    (ServiceKind.OBJECT_DETECT, 0.15),
    (ServiceKind.FACE_IDENTIFY, 0.10),
    (ServiceKind.FACE_VERIFY, 0.05),
    (ServiceKind.FACE_SIMILARITY_SEARCH, 0.05),
    (ServiceKind.EMOTION_RECOGNIZE, 0.07),
    (ServiceKind.OTHER_VISION, 0.05),
    (ServiceKind.OTHER_NON_VISION, 0.03),
)
_MIX_KINDS = tuple(k for k, _ in _BENIGN_MIX)
_MIX_P = np.array([p for _, p in _BENIGN_MIX]) / sum(p for _, p in _BENIGN_MIX)


@dataclass(frozen=True)
class ScenarioSpec:
    scenario_id: ScenarioId
    params: Mapping[str, float] = field(default_factory=dict)
    seed: int = 0
    tenant_prefix: str | None = None

    def __post_init__(self) -> None:
        object.__setattr__(self, "scenario_id", ScenarioId(self.scenario_id))

    @property
    def prefix(self) -> str:
        return self.tenant_prefix if self.tenant_prefix is not None else _PREFIX[self.scenario_id]

    def resolved_params(self) -> dict:
        """Defaults merged with overrides and derived values filled in; validates."""
        sid = self.scenario_id
        known = {**_COMMON, **_SCENARIO_DEFAULTS[sid]}
        unknown = set(self.params) - set(known)
        if unknown:
            name = sorted(unknown)[0]
            raise InvalidScenarioParams(name, f"not a parameter of {sid.value}")
        p = {**known, **self.params}
        for name, value in p.items():
            if value is None:
                continue
            if isinstance(value, bool) or not isinstance(value, (int, float)) or not math.isfinite(value):
                raise InvalidScenarioParams(name, "must be a finite number")
            if value < 0:
                raise InvalidScenarioParams(name, "must be non-negative")
        m = p["margin"]
        if sid is ScenarioId.SURVEILLANCE_RATE and p["base_rate_per_min"] is None:
            p["base_rate_per_min"] = m * defaults.HIGH_FACE_RATE_PER_MIN
        if sid is ScenarioId.CROWD_ANALYSIS and p["faces_per_input"] is None:
            p["faces_per_input"] = math.ceil(m * defaults.MANY_FACES_PER_INPUT)
        if sid is ScenarioId.DISTINCT_FACES_OVER_TIME and p["distinct_faces_per_day"] is None:
            p["distinct_faces_per_day"] = math.ceil(m * defaults.MANY_DISTINCT_FACES_PER_DAY)
        if sid is ScenarioId.BLACKLIST_SCREENING and p["screening_inputs_per_hour"] is None:
            p["screening_inputs_per_hour"] = math.ceil(m * defaults.BLACKLIST_MATCHES_PER_HOUR)
        if sid is ScenarioId.BEHAVIOR_DRIFT and p["duration_s"] is None:
            p["duration_s"] = int(p["stable_windows"] + p["drift_windows"]) * 3600
        if p["tenant_count"] < 1:
            raise InvalidScenarioParams("tenant_count", "must be at least 1")
        if p["duration_s"] < 1:
            raise InvalidScenarioParams("duration_s", "must be at least 1")
        if p["benign_faces_max"] > p["distinct_face_pool"]:
            raise InvalidScenarioParams("benign_faces_max", "cannot exceed distinct_face_pool")
        if sid is ScenarioId.TARGET_TRACKING and not 0 < p["target_query_share"] <= 1:
            raise InvalidScenarioParams("target_query_share", "must lie in (0, 1]")
        if sid is ScenarioId.CROWD_ANALYSIS and math.ceil(1.5 * p["faces_per_input"]) > p["crowd_face_pool"]:
            raise InvalidScenarioParams("crowd_face_pool", "too small for the crowd size")
        if sid is ScenarioId.BLACKLIST_SCREENING and p["crowd_faces_min"] > p["crowd_faces_max"]:
            raise InvalidScenarioParams("crowd_faces_min", "exceeds crowd_faces_max")
        if sid is ScenarioId.INVERSION_PROBE and p["probe_account_count"] < 1:
            raise InvalidScenarioParams("probe_account_count", "must be at least 1")
        if sid is ScenarioId.BEHAVIOR_DRIFT and p["stable_windows"] < 1:
            raise InvalidScenarioParams("stable_windows", "must be at least 1")
        if int(p["start_ms"]) != p["start_ms"]:
            raise InvalidScenarioParams("start_ms", "must be an integer")
        return p


@dataclass(frozen=True)
class GroundTruthLabel:
    tenant_id: str
    scenario_id: ScenarioId
    active_start: int
    active_end: int

    def to_line(self) -> str:
        return json.dumps(
            {"tenant": self.tenant_id, "scenario": self.scenario_id.value,
             "window": [self.active_start, self.active_end]},
            separators=(",", ":"),
        )

    @classmethod
    def from_line(cls, line: str) -> GroundTruthLabel:
        obj = json.loads(line)
        return cls(obj["tenant"], ScenarioId(obj["scenario"]), obj["window"][0], obj["window"][1])

    @property
    def indicator(self) -> str | None:
        return TARGET_INDICATOR[self.scenario_id]


def scenario_catalog() -> list[tuple[ScenarioId, str, dict]]:
    """Every scenario with the indicator text it exercises and its unresolved defaults."""
    return [(sid, _DESCRIPTIONS[sid], {**_COMMON, **_SCENARIO_DEFAULTS[sid]}) for sid in ScenarioId]


# -- generation ------------------------------------------------------------------


class _TenantWriter:
    """Collects one tenant's transactions; ids are assigned after time-sorting."""

    def __init__(self, tenant_id: str, rng: np.random.Generator, ip: str) -> None:
        self.tenant_id = tenant_id
        self.rng = rng
        self.ip = ip
        self.rows: list[tuple] = []
        self._inputs = 0

    def new_input(self) -> tuple[str, int]:
        self._inputs += 1
        return f"{self.tenant_id}/in{self._inputs:06d}", int(self.rng.integers(0, 2**63)) * 2 + int(self.rng.integers(0, 2))

    def add(self, ts: int, request: RequestDescriptor, faces=(), labels=(), stages=("decode", "detect")) -> None:
        faces = tuple(faces)
        size = int(self.rng.lognormal(12.0, 0.5))
        cost = round(0.5 * request.features_requested + 0.05 * len(faces), 3)
        enc = len(faces) if request.service.is_face else 0
        self.rows.append((ts, request, faces, tuple(labels), stages, size, cost, enc))

    def build(self) -> list[Transaction]:
        self.rows.sort(key=lambda r: r[0])
        out = []
        for n, (ts, request, faces, labels, stages, size, cost, enc) in enumerate(self.rows):
            meta = TransactionMeta(f"{self.tenant_id}-{n:06d}", self.tenant_id, ts, self.ip, size, cost)
            out.append(Transaction(meta, request, ResponseDescriptor(faces, labels), ByProducts(enc, stages)))
        return out


def _arrivals(rng: np.random.Generator, rate_per_min: float, start: int, end: int) -> np.ndarray:
    """Poisson arrival times in ``[start, end)`` milliseconds, sorted."""
    if rate_per_min <= 0 or end <= start:
        return np.empty(0, dtype=np.int64)
    n = rng.poisson(rate_per_min * (end - start) / MINUTE_MS)
    return np.sort(rng.integers(start, end, size=n))


def _uniform_times(rng: np.random.Generator, n: int, start: int, end: int) -> np.ndarray:
    return np.sort(rng.integers(start, end, size=n)) if n else np.empty(0, dtype=np.int64)


def _aligned_chunks(start: int, end: int, size: int) -> Iterator[tuple[int, int]]:
    lo = start
    while lo < end:
        hi = min(end, (lo // size + 1) * size)
        yield lo, hi
        lo = hi


def _labels(rng: np.random.Generator, vocab: Sequence[str], k_max: int = 3) -> tuple[tuple[str, float], ...]:
    k = int(rng.integers(1, k_max + 1))
    picks = rng.choice(len(vocab), size=k, replace=False)
    return tuple((vocab[i], round(float(rng.uniform(0.5, 0.99)), 3)) for i in sorted(picks))


def _benign_event(w: _TenantWriter, ts: int, kind: ServiceKind, pool: int, faces_max: int, last_input) -> tuple:
    rng = w.rng
    if last_input is not None and rng.random() < 0.25:
        input_id, fp = last_input
    else:
        input_id, fp = w.new_input()
    features = int(rng.integers(1, 4))
    faces: tuple[str, ...] = ()
    labels: tuple = ()
    target = None
    tag = None
    stages = ("decode", "classify")
    if kind in (ServiceKind.FACE_DETECT, ServiceKind.EMOTION_RECOGNIZE):
        k = int(rng.integers(0, faces_max + 1))
        faces = tuple(f"{w.tenant_id}/face{j:05d}" for j in sorted(rng.choice(pool, size=k, replace=False)))
        stages = ("decode", "detect", "encode")
        if kind is ServiceKind.EMOTION_RECOGNIZE and faces:
            labels = _labels(rng, EMOTIONS, 1)
    elif kind.is_identification:
        target = f"{w.tenant_id}/face{int(rng.integers(0, pool)):05d}"
        faces = (target,) if rng.random() < 0.5 else ()
        stages = ("decode", "detect", "encode", "match")
    elif kind in (ServiceKind.OBJECT_DETECT, ServiceKind.LABEL_DETECT, ServiceKind.OTHER_VISION):
        labels = _labels(rng, BENIGN_LABELS)
    else:
        tag = ("speech", "text", "translate")[int(rng.integers(0, 3))]
        stages = ("ingest", "process")
    request = RequestDescriptor(kind, features, input_id, fp, target, tag)
    w.add(ts, request, faces, labels, stages)
    return input_id, fp


def _benign_tenant(w: _TenantWriter, p: dict, start: int, end: int) -> None:
    rng = w.rng
    rate = p["benign_rate_per_min"] * rng.uniform(0.5, 1.5)
    times = _arrivals(rng, rate, start, end)
    kinds = rng.choice(len(_MIX_KINDS), size=len(times), p=_MIX_P)
    last = None
    for ts, ki in zip(times.tolist(), kinds.tolist()):
        last = _benign_event(w, ts, _MIX_KINDS[ki], int(p["distinct_face_pool"]), int(p["benign_faces_max"]), last)


def _face_detect(w: _TenantWriter, ts: int, faces: Sequence[str], input_=None) -> None:
    input_id, fp = input_ or w.new_input()
    features = int(w.rng.integers(1, 3))
    w.add(ts, RequestDescriptor(ServiceKind.FACE_DETECT, features, input_id, fp), faces, (), ("decode", "detect", "encode"))


def _pool_faces(w: _TenantWriter, pool: int, k: int, tag: str = "face") -> list[str]:
    return [f"{w.tenant_id}/{tag}{j:05d}" for j in sorted(w.rng.choice(pool, size=k, replace=False))]


def _surveillance(w: _TenantWriter, p: dict, start: int, end: int) -> list[tuple[int, int]]:
    for ts in _arrivals(w.rng, p["base_rate_per_min"], start, end).tolist():
        k = int(w.rng.integers(0, int(p["benign_faces_max"]) + 1))
        _face_detect(w, ts, _pool_faces(w, int(p["distinct_face_pool"]), k))
    return [(start, end)]


def _crowd(w: _TenantWriter, p: dict, start: int, end: int) -> list[tuple[int, int]]:
    lo = int(p["faces_per_input"])
    hi = max(lo, math.ceil(1.5 * lo))
    times = _arrivals(w.rng, p["base_rate_per_min"], start, end)
    if len(times) == 0:
        times = _uniform_times(w.rng, 1, start, end)
    for ts in times.tolist():
        k = int(w.rng.integers(lo, hi + 1))
        _face_detect(w, ts, _pool_faces(w, int(p["crowd_face_pool"]), k, "crowd"))
    return [(start, end)]


def _distinct(w: _TenantWriter, p: dict, start: int, end: int) -> list[tuple[int, int]]:
    per_input = max(1, int(p["faces_per_input"]))
    target = int(p["distinct_faces_per_day"])
    serial = 0
    for lo, hi in _aligned_chunks(start, end, defaults.DAY_MS):
        n_req = math.ceil(target / per_input)
        for i, ts in enumerate(_uniform_times(w.rng, n_req, lo, hi).tolist()):
            k = min(per_input, target - i * per_input)
            faces = [f"{w.tenant_id}/face{serial + j:07d}" for j in range(k)]
            serial += k
            _face_detect(w, ts, faces)
    return [(start, end)]


def _tracking(w: _TenantWriter, p: dict, start: int, end: int) -> list[tuple[int, int]]:
    rng = w.rng
    n = int(p["identification_calls"])
    n_target = round(p["target_query_share"] * n)
    victim = f"{w.tenant_id}/victim"
    is_target = np.zeros(n, dtype=bool)
    is_target[:n_target] = True
    rng.shuffle(is_target)
    pool = int(p["distinct_face_pool"])
    kinds = (ServiceKind.FACE_IDENTIFY, ServiceKind.FACE_SIMILARITY_SEARCH)
    for ts, hit in zip(_uniform_times(rng, n, start, end).tolist(), is_target.tolist()):
        kind = kinds[int(rng.random() < 0.3)]
        # every call comes from a fresh input: the target is sought across many contexts
        input_id, fp = w.new_input()
        target = victim if hit else f"{w.tenant_id}/face{int(rng.integers(0, pool)):05d}"
        faces = (target,) if rng.random() < 0.4 else ()
        request = RequestDescriptor(kind, 1, input_id, fp, target)
        w.add(ts, request, faces, (), ("decode", "detect", "encode", "match"))
    return [(start, end)]


def _screening(w: _TenantWriter, p: dict, start: int, end: int) -> list[tuple[int, int]]:
    rng = w.rng
    per_hour = int(p["screening_inputs_per_hour"])
    for lo, hi in _aligned_chunks(start, end, HOUR_MS):
        for ts in _uniform_times(rng, per_hour, lo, hi).tolist():
            input_ = w.new_input()
            bad = BLACKLISTED_LABELS[int(rng.integers(0, len(BLACKLISTED_LABELS)))]
            labels = ((bad, round(float(rng.uniform(0.7, 0.99)), 3)), ("person", round(float(rng.uniform(0.6, 0.99)), 3)))
            request = RequestDescriptor(ServiceKind.OBJECT_DETECT, 1, input_[0], input_[1])
            w.add(ts, request, (), tuple(sorted(labels)), ("decode", "classify"))
            k = int(rng.integers(int(p["crowd_faces_min"]), int(p["crowd_faces_max"]) + 1))
            _face_detect(w, min(ts + 1, hi - 1) if hi - 1 > ts else ts, _pool_faces(w, 2000, k, "crowd"), input_)
    # Background use of ordinary vision services.
    last = None
    for ts in _arrivals(rng, p["benign_rate_per_min"], start, end).tolist():
        last = _benign_event(w, ts, ServiceKind.LABEL_DETECT, int(p["distinct_face_pool"]), 0, last)
    return [(start, end)]


def _drift(w: _TenantWriter, p: dict, start: int, end: int) -> list[tuple[int, int]]:
    rng = w.rng
    stable_end = start + int(p["stable_windows"]) * HOUR_MS
    drift_end = min(end, stable_end + int(p["drift_windows"]) * HOUR_MS)
    pool = int(p["distinct_face_pool"])
    faces_max = int(p["benign_faces_max"])
    segments = (
        (start, stable_end, p["base_rate_per_min"]),
        (stable_end, drift_end, p["base_rate_per_min"] * p["drift_multiplier"]),
        (drift_end, end, p["base_rate_per_min"]),
    )
    for lo, hi, rate in segments:
        for ts in _arrivals(rng, rate, lo, hi).tolist():
            k = int(rng.integers(0, faces_max + 1))
            _face_detect(w, ts, _pool_faces(w, pool, k))
    last = None
    for ts in _arrivals(rng, p["companion_rate_per_min"], start, end).tolist():
        last = _benign_event(w, ts, ServiceKind.LABEL_DETECT, pool, 0, last)
    return [(stable_end, drift_end)]


def _probe_base(seed: int) -> int:
    rng = np.random.default_rng(np.random.SeedSequence([seed, _CODES[ScenarioId.INVERSION_PROBE], 9, 0]))
    return int(rng.integers(0, 2**63)) * 2 + int(rng.integers(0, 2))


def _probe_account(w: _TenantWriter, p: dict, start: int, end: int, share: int, base: int) -> None:
    rng = w.rng
    flips = int(p["probe_max_bit_flips"])
    victim = "probe/victim"
    for lo, hi in _aligned_chunks(start, end, HOUR_MS):
        for ts in _uniform_times(rng, share, lo, hi).tolist():
            fp = base
            for bit in rng.choice(64, size=int(rng.integers(0, flips + 1)), replace=False).tolist():
                fp ^= 1 << bit
            input_id = w.new_input()[0]
            request = RequestDescriptor(ServiceKind.FACE_IDENTIFY, 1, input_id, fp, victim)
            labels = (("identity confidence", round(float(rng.uniform(0.0, 1.0)), 3)),)
            w.add(ts, request, (), labels, ("decode", "detect", "encode", "match"))


_GENERATORS = {
    ScenarioId.SURVEILLANCE_RATE: _surveillance,
    ScenarioId.CROWD_ANALYSIS: _crowd,
    ScenarioId.DISTINCT_FACES_OVER_TIME: _distinct,
    ScenarioId.TARGET_TRACKING: _tracking,
    ScenarioId.BLACKLIST_SCREENING: _screening,
    ScenarioId.BEHAVIOR_DRIFT: _drift,
}


def _writer(spec: ScenarioSpec, role: int, idx: int, tenant_id: str) -> _TenantWriter:
    rng = np.random.default_rng(np.random.SeedSequence([spec.seed % 2**64, _CODES[spec.scenario_id], role, idx]))
    ip = f"10.{_CODES[spec.scenario_id] * 16 + role}.{idx // 250}.{idx % 250 + 1}"
    return _TenantWriter(tenant_id, rng, ip)


def generate_workload(spec: ScenarioSpec) -> tuple[list[Transaction], list[GroundTruthLabel]]:
    """Generate a timestamp-ordered stream and one label per misuse tenant."""
    p = spec.resolved_params()
    start = int(p["start_ms"])
    end = start + int(p["duration_s"] * 1000)
    writers: list[_TenantWriter] = []
    labels: list[GroundTruthLabel] = []

    for i in range(int(p["tenant_count"])):
        w = _writer(spec, 0, i, f"{spec.prefix}-b{i:03d}")
        _benign_tenant(w, p, start, end)
        writers.append(w)

    sid = spec.scenario_id
    if sid in _GENERATORS:
        w = _writer(spec, 1, 0, f"{spec.prefix}-m00")
        for lo, hi in _GENERATORS[sid](w, p, start, end):
            labels.append(GroundTruthLabel(w.tenant_id, sid, lo, hi))
        writers.append(w)
    elif sid is ScenarioId.INVERSION_PROBE:
        n_acc = int(p["probe_account_count"])
        total = int(p["probe_queries_per_hour"])
        base = _probe_base(spec.seed % 2**64)
        for i in range(n_acc):
            w = _writer(spec, 1, i, f"{spec.prefix}-m{i:02d}")
            share = total // n_acc + (1 if i < total % n_acc else 0)
            _probe_account(w, p, start, end, share, base)
            labels.append(GroundTruthLabel(w.tenant_id, sid, start, end))
            writers.append(w)

    stream = [t for w in writers for t in w.build()]
    stream.sort(key=lambda t: (t.timestamp, t.txn_id))
    return stream, labels


def merge_streams(streams: Sequence[Iterable[Transaction]]) -> list[Transaction]:
    """Stable timestamp merge; ties keep input-stream order."""
    lists = [list(s) for s in streams]
    for k, s in enumerate(lists):
        for a, b in zip(s, s[1:]):
            if b.timestamp < a.timestamp:
                raise UnorderedInput(f"stream {k} goes back in time at txn {b.txn_id!r}")
    return list(heapq.merge(*lists, key=lambda t: t.timestamp))


def write_labels(path: str | Path, labels: Iterable[GroundTruthLabel]) -> int:
    n = 0
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        for label in labels:
            fh.write(label.to_line() + "\n")
            n += 1
    return n


def read_labels(path: str | Path) -> list[GroundTruthLabel]:
    with open(path, encoding="utf-8") as fh:
        return [GroundTruthLabel.from_line(line) for line in fh if line.strip()]
