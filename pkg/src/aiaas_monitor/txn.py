"""Transaction records, tenant-facing service kinds, and the line codec.

A transaction bundles four groups of information: call metadata, the
request descriptor, the response descriptor, and processing by-products.
Records are immutable and validate their invariants on construction.

The transaction log format is one JSON object per line, with a header line
``#aiaas-txnlog v1``. Field order is fixed so encoding is byte-deterministic.
"""

from __future__ import annotations

import enum
import hashlib
import hmac
import json
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Iterable, Iterator

from .errors import InvariantViolation, MalformedRecord

SCHEMA_VERSION = 1
LOG_HEADER = f"#aiaas-txnlog v{SCHEMA_VERSION}"
FINGERPRINT_BITS = 64


class ServiceKind(str, enum.Enum):
    FACE_DETECT = "FaceDetect"
    FACE_IDENTIFY = "FaceIdentify"
    FACE_VERIFY = "FaceVerify"
    FACE_SIMILARITY_SEARCH = "FaceSimilaritySearch"
    OBJECT_DETECT = "ObjectDetect"
    LABEL_DETECT = "LabelDetect"
    EMOTION_RECOGNIZE = "EmotionRecognize"
    OTHER_VISION = "OtherVision"
    OTHER_NON_VISION = "OtherNonVision"

    @property
    def is_face(self) -> bool:
        return self in FACE_SERVICES

    @property
    def is_identification(self) -> bool:
        return self in IDENTIFICATION_SERVICES

    @property
    def group(self) -> str:
        return service_group(self)


FACE_SERVICES = frozenset(
    {
        ServiceKind.FACE_DETECT,
        ServiceKind.FACE_IDENTIFY,
        ServiceKind.FACE_VERIFY,
        ServiceKind.FACE_SIMILARITY_SEARCH,
    }
)
IDENTIFICATION_SERVICES = frozenset(
    {ServiceKind.FACE_IDENTIFY, ServiceKind.FACE_VERIFY, ServiceKind.FACE_SIMILARITY_SEARCH}
)
SERVICE_ORDER: tuple[ServiceKind, ...] = tuple(ServiceKind)
SERVICE_GROUPS = ("face", "vision", "other")


def service_group(kind: ServiceKind) -> str:
    """Map a service kind onto its metering group: ``face``, ``vision`` or ``other``."""
    if kind in FACE_SERVICES:
        return "face"
    if kind is ServiceKind.OTHER_NON_VISION:
        return "other"
    return "vision"


class MonitoringLevel(str, enum.Enum):
    METADATA_ONLY = "metadata"
    METADATA_PLUS_DERIVED = "derived"
    FULL_CONTENT = "full"

    @property
    def sees_payload(self) -> bool:
        return self is not MonitoringLevel.METADATA_ONLY

    @property
    def rank(self) -> int:
        return _LEVEL_RANK[self]


_LEVEL_RANK = {
    MonitoringLevel.METADATA_ONLY: 0,
    MonitoringLevel.METADATA_PLUS_DERIVED: 1,
    MonitoringLevel.FULL_CONTENT: 2,
}


class StatusKind(str, enum.Enum):
    OK = "ok"
    DENIED = "denied"
    TRUNCATED = "truncated"


@dataclass(frozen=True)
class Status:
    kind: StatusKind = StatusKind.OK
    reason: str | None = None
    cap: int | None = None

    def __post_init__(self) -> None:
        if self.kind is StatusKind.DENIED and not self.reason:
            raise InvariantViolation("Denied status requires a reason")
        if self.kind is StatusKind.TRUNCATED and (self.cap is None or self.cap < 1):
            raise InvariantViolation("Truncated status requires a positive cap")
        if self.kind is StatusKind.OK and (self.reason is not None or self.cap is not None):
            raise InvariantViolation("Ok status carries no reason or cap")

    @classmethod
    def denied(cls, reason: str) -> Status:
        return cls(StatusKind.DENIED, reason=reason)

    @classmethod
    def truncated(cls, cap: int) -> Status:
        return cls(StatusKind.TRUNCATED, cap=cap)


OK = Status()


@dataclass(frozen=True)
class TransactionMeta:
    txn_id: str
    tenant_id: str
    timestamp: int
    client_ip: str
    input_size_bytes: int
    resource_cost: float

    def __post_init__(self) -> None:
        if not self.txn_id:
            raise InvariantViolation("txn_id must be non-empty")
        if not self.tenant_id:
            raise InvariantViolation("tenant_id must be non-empty")
        if self.timestamp < 0:
            raise InvariantViolation(f"timestamp must be >= 0, got {self.timestamp}")
        if self.input_size_bytes < 0:
            raise InvariantViolation("input_size_bytes must be >= 0")
        if self.resource_cost < 0:
            raise InvariantViolation("resource_cost must be >= 0")


@dataclass(frozen=True)
class RequestDescriptor:
    service: ServiceKind
    features_requested: int = 1
    input_id: str = ""
    content_fingerprint: int = 0
    target_face_id: str | None = None
    service_tag: str | None = None

    def __post_init__(self) -> None:
        if self.features_requested < 1:
            raise InvariantViolation("features_requested must be >= 1")
        if not 0 <= self.content_fingerprint < (1 << FINGERPRINT_BITS):
            raise InvariantViolation("content_fingerprint must fit in 64 bits")
        if (self.service_tag is not None) != (self.service is ServiceKind.OTHER_NON_VISION):
            raise InvariantViolation("service_tag is required for OtherNonVision and only there")


@dataclass(frozen=True)
class ResponseDescriptor:
    detected_face_ids: tuple[str, ...] = ()
    detected_labels: tuple[tuple[str, float], ...] = ()
    status: Status = OK

    def __post_init__(self) -> None:
        for label, conf in self.detected_labels:
            if not 0.0 <= conf <= 1.0:
                raise InvariantViolation(f"confidence {conf} for {label!r} outside [0, 1]")


@dataclass(frozen=True)
class ByProducts:
    face_encodings_count: int = 0
    pipeline_stage_tags: tuple[str, ...] = ()

    def __post_init__(self) -> None:
        if self.face_encodings_count < 0:
            raise InvariantViolation("face_encodings_count must be >= 0")


@dataclass(frozen=True)
class Transaction:
    """One API call. ``level`` records how much payload the record still carries."""

    meta: TransactionMeta
    request: RequestDescriptor
    response: ResponseDescriptor = field(default_factory=ResponseDescriptor)
    by_products: ByProducts = field(default_factory=ByProducts)
    level: MonitoringLevel = MonitoringLevel.FULL_CONTENT

    def __post_init__(self) -> None:
        # Payload-coupled invariants only bind records that still carry payload.
        if self.level is MonitoringLevel.METADATA_ONLY:
            return
        has_target = self.request.target_face_id is not None
        if has_target != self.request.service.is_identification:
            raise InvariantViolation(
                f"target_face_id presence must match identification service ({self.request.service.value})"
            )
        status = self.response.status
        n_faces = len(self.response.detected_face_ids)
        if status.kind is StatusKind.TRUNCATED and n_faces != status.cap:
            raise InvariantViolation(f"Truncated({status.cap}) but {n_faces} face ids")
        if status.kind is StatusKind.OK and self.by_products.face_encodings_count > n_faces:
            raise InvariantViolation("face_encodings_count exceeds detected faces")

    @property
    def txn_id(self) -> str:
        return self.meta.txn_id

    @property
    def tenant_id(self) -> str:
        return self.meta.tenant_id

    @property
    def timestamp(self) -> int:
        return self.meta.timestamp

    @property
    def service(self) -> ServiceKind:
        return self.request.service

    @property
    def denied(self) -> bool:
        return self.response.status.kind is StatusKind.DENIED


# -- codec -------------------------------------------------------------------

_FIELDS = (
    "v", "id", "tenant", "ts", "ip", "size", "cost", "svc", "svc_tag", "features",
    "input", "fp", "target", "faces", "labels", "status", "status_arg", "enc",
    "stages", "level",
)


def encode_txn(txn: Transaction) -> str:
    """Encode a transaction as a single newline-free line."""
    m, rq, rs, bp = txn.meta, txn.request, txn.response, txn.by_products
    st = rs.status
    record = {
        "v": SCHEMA_VERSION,
        "id": m.txn_id,
        "tenant": m.tenant_id,
        "ts": m.timestamp,
        "ip": m.client_ip,
        "size": m.input_size_bytes,
        "cost": m.resource_cost,
        "svc": rq.service.value,
        "svc_tag": rq.service_tag,
        "features": rq.features_requested,
        "input": rq.input_id,
        "fp": f"{rq.content_fingerprint:016x}",
        "target": rq.target_face_id,
        "faces": list(rs.detected_face_ids),
        "labels": [[label, conf] for label, conf in rs.detected_labels],
        "status": st.kind.value,
        "status_arg": st.reason if st.kind is StatusKind.DENIED else st.cap,
        "enc": bp.face_encodings_count,
        "stages": list(bp.pipeline_stage_tags),
        "level": txn.level.value,
    }
    return json.dumps(record, separators=(",", ":"), ensure_ascii=False, allow_nan=False)


def _expect(record: dict, key: str, types: type | tuple[type, ...], nullable: bool = False):
    value = record[key]
    if value is None and nullable:
        return None
    # bool is an int subclass; never accept it where a number is expected
    if isinstance(value, bool) or not isinstance(value, types):
        raise MalformedRecord(key, f"expected {types}, got {type(value).__name__}")
    return value


def decode_txn(record: str) -> Transaction:
    """Inverse of :func:`encode_txn`.

    Raises :class:`MalformedRecord` on schema violations (``position`` is a
    character offset for JSON syntax errors, a field name otherwise) and
    :class:`InvariantViolation` for well-formed records breaking invariants.
    """
    try:
        obj = json.loads(record)
    except json.JSONDecodeError as exc:
        raise MalformedRecord(exc.pos, exc.msg) from None
    if not isinstance(obj, dict):
        raise MalformedRecord(0, "record is not an object")
    missing = [k for k in _FIELDS if k not in obj]
    if missing:
        raise MalformedRecord(missing[0], "missing field")
    extra = sorted(set(obj) - set(_FIELDS))
    if extra:
        raise MalformedRecord(extra[0], "unknown field")
    if obj["v"] != SCHEMA_VERSION:
        raise MalformedRecord("v", f"unsupported schema version {obj['v']!r}")
    try:
        service = ServiceKind(_expect(obj, "svc", str))
        level = MonitoringLevel(_expect(obj, "level", str))
        status_kind = StatusKind(_expect(obj, "status", str))
    except ValueError as exc:
        raise MalformedRecord("svc/level/status", str(exc)) from None
    fp_hex = _expect(obj, "fp", str)
    if len(fp_hex) != 16:
        raise MalformedRecord("fp", "fingerprint must be 16 hex digits")
    try:
        fingerprint = int(fp_hex, 16)
    except ValueError:
        raise MalformedRecord("fp", "fingerprint is not hex") from None
    faces = _expect(obj, "faces", list)
    if not all(isinstance(f, str) for f in faces):
        raise MalformedRecord("faces", "face ids must be strings")
    labels = []
    for item in _expect(obj, "labels", list):
        if (
            not isinstance(item, list)
            or len(item) != 2
            or not isinstance(item[0], str)
            or isinstance(item[1], bool)
            or not isinstance(item[1], (int, float))
        ):
            raise MalformedRecord("labels", "label entries must be [label, confidence]")
        labels.append((item[0], float(item[1])))
    stages = _expect(obj, "stages", list)
    if not all(isinstance(s, str) for s in stages):
        raise MalformedRecord("stages", "stage tags must be strings")

    if status_kind is StatusKind.DENIED:
        status = Status.denied(_expect(obj, "status_arg", str))
    elif status_kind is StatusKind.TRUNCATED:
        status = Status.truncated(_expect(obj, "status_arg", int))
    else:
        if obj["status_arg"] is not None:
            raise MalformedRecord("status_arg", "ok status takes no argument")
        status = OK

    cost = _expect(obj, "cost", (int, float))
    meta = TransactionMeta(
        txn_id=_expect(obj, "id", str),
        tenant_id=_expect(obj, "tenant", str),
        timestamp=_expect(obj, "ts", int),
        client_ip=_expect(obj, "ip", str),
        input_size_bytes=_expect(obj, "size", int),
        resource_cost=float(cost),
    )
    request = RequestDescriptor(
        service=service,
        features_requested=_expect(obj, "features", int),
        input_id=_expect(obj, "input", str),
        content_fingerprint=fingerprint,
        target_face_id=_expect(obj, "target", str, nullable=True),
        service_tag=_expect(obj, "svc_tag", str, nullable=True),
    )
    response = ResponseDescriptor(tuple(faces), tuple(labels), status)
    by_products = ByProducts(_expect(obj, "enc", int), tuple(stages))
    return Transaction(meta, request, response, by_products, level)


def write_log(path: str | Path, txns: Iterable[Transaction]) -> int:
    """Write a transaction log; returns the number of records written."""
    n = 0
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        fh.write(LOG_HEADER + "\n")
        for txn in txns:
            fh.write(encode_txn(txn) + "\n")
            n += 1
    return n


def iter_log(path: str | Path) -> Iterator[Transaction]:
    """Stream transactions from a log file.

    Every bad record, schema or invariant, surfaces as :class:`MalformedRecord`
    with a ``line:offset`` position.
    """
    with open(path, encoding="utf-8", newline="\n") as fh:
        header = fh.readline()
        if header.rstrip("\n") != LOG_HEADER:
            raise MalformedRecord("1:0", f"expected header {LOG_HEADER!r}")
        for lineno, line in enumerate(fh, start=2):
            if not line.endswith("\n"):
                raise MalformedRecord(f"{lineno}:{len(line)}", "record not LF-terminated")
            try:
                yield decode_txn(line[:-1])
            except MalformedRecord as exc:
                raise MalformedRecord(f"{lineno}:{exc.position}", exc.reason) from None
            except InvariantViolation as exc:
                # a well-formed line with impossible values is still bad input
                raise MalformedRecord(f"{lineno}:0", f"invariant violated: {exc}") from None


def read_log(path: str | Path) -> list[Transaction]:
    return list(iter_log(path))


# -- redaction ---------------------------------------------------------------


class Pseudonymizer:
    """Keyed one-way mapping from identity tokens to stable pseudonyms.

    Equal tokens always map to equal pseudonyms for one key. Distinct tokens
    are kept distinct by checking each new pseudonym against those already
    issued and extending the digest on the (astronomically rare) clash.
    """

    def __init__(self, key: bytes | str = b"aiaas-monitor") -> None:
        self._key = key.encode() if isinstance(key, str) else key
        self._issued: dict[str, str] = {}
        self._owners: dict[str, str] = {}

    def __call__(self, token: str) -> str:
        if token in self._issued:
            return self._issued[token]
        digest = hmac.new(self._key, token.encode("utf-8"), hashlib.sha256).hexdigest()
        width = 16
        while "p:" + digest[:width] in self._owners:
            width += 4
        alias = "p:" + digest[:width]
        self._issued[token] = alias
        self._owners[alias] = token
        return alias


def redact(
    txn: Transaction, level: MonitoringLevel, pseudonymizer: Pseudonymizer | None = None
) -> Transaction:
    """Strip a transaction down to what ``level`` may expose.

    FullContent returns the record unchanged. MetadataPlusDerived replaces
    identity tokens (face ids, target id, input id) with pseudonyms and keeps
    counts, labels and fingerprint. MetadataOnly keeps the metadata, the
    service kind and the billable feature count; everything else becomes a
    neutral placeholder. Redaction never raises the exposure of a record.
    """
    if level.rank >= txn.level.rank:
        return txn
    if level is MonitoringLevel.METADATA_PLUS_DERIVED:
        alias = pseudonymizer or Pseudonymizer()
        rq, rs = txn.request, txn.response
        request = replace(
            rq,
            input_id=alias(rq.input_id) if rq.input_id else "",
            target_face_id=alias(rq.target_face_id) if rq.target_face_id is not None else None,
        )
        response = replace(rs, detected_face_ids=tuple(alias(f) for f in rs.detected_face_ids))
        return replace(txn, request=request, response=response, level=level)
    request = RequestDescriptor(
        service=txn.request.service,
        features_requested=txn.request.features_requested,
        service_tag=txn.request.service_tag,
    )
    return Transaction(
        txn.meta, request, ResponseDescriptor(status=txn.response.status), ByProducts(), level
    )
