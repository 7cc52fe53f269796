"""Small constructors for hand-built transactions."""

from __future__ import annotations

from aiaas_monitor.txn import (
    ByProducts,
    RequestDescriptor,
    ResponseDescriptor,
    ServiceKind,
    Transaction,
    TransactionMeta,
)

T0 = 1_700_006_400_000

_counter = iter(range(10**9))


def txn(
    service: ServiceKind = ServiceKind.FACE_DETECT,
    ts: int = T0,
    tenant: str = "t1",
    faces=(),
    labels=(),
    features: int = 1,
    input_id: str = "",
    fp: int = 0,
    target: str | None = None,
    txn_id: str | None = None,
) -> Transaction:
    if target is None and service.is_identification:
        target = "victim"
    tag = "speech" if service is ServiceKind.OTHER_NON_VISION else None
    faces = tuple(faces)
    return Transaction(
        TransactionMeta(txn_id or f"x{next(_counter):08d}", tenant, ts, "10.0.0.1", 1000, 1.0),
        RequestDescriptor(service, features, input_id, fp, target, tag),
        ResponseDescriptor(faces, tuple(labels)),
        ByProducts(len(faces) if service.is_face else 0, ("decode",)),
    )
