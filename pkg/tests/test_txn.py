import json

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from aiaas_monitor.errors import InvariantViolation, MalformedRecord
from aiaas_monitor.txn import (
    FACE_SERVICES,
    LOG_HEADER,
    ByProducts,
    MonitoringLevel,
    Pseudonymizer,
    RequestDescriptor,
    ResponseDescriptor,
    ServiceKind,
    Status,
    Transaction,
    TransactionMeta,
    decode_txn,
    encode_txn,
    iter_log,
    read_log,
    redact,
    write_log,
)
from helpers import txn

ident = st.text(alphabet="abcdefghijklmnopqrstuvwxyz0123456789/-_", min_size=1, max_size=12)


@st.composite
def transactions(draw):
    service = draw(st.sampled_from(list(ServiceKind)))
    faces = tuple(draw(st.lists(ident, max_size=6)))
    status = draw(st.sampled_from(["ok", "denied", "truncated"]))
    if status == "truncated" and faces:
        st_obj = Status.truncated(len(faces))
    elif status == "denied":
        st_obj = Status.denied(draw(st.sampled_from(["RATE_LIMITED", "FACE_CAP"])))
    else:
        st_obj = Status()
    enc = draw(st.integers(0, len(faces))) if st_obj.kind.value != "denied" else draw(st.integers(0, 10))
    labels = tuple(
        (lab, conf)
        for lab, conf in draw(
            st.lists(st.tuples(ident, st.floats(0, 1, allow_nan=False)), max_size=4)
        )
    )
    return Transaction(
        TransactionMeta(
            draw(ident), draw(ident), draw(st.integers(0, 2**53)), "192.168.0.1",
            draw(st.integers(0, 10**9)), draw(st.floats(0, 1e6, allow_nan=False)),
        ),
        RequestDescriptor(
            service,
            draw(st.integers(1, 20)),
            draw(st.one_of(st.just(""), ident)),
            draw(st.integers(0, 2**64 - 1)),
            draw(ident) if service.is_identification else None,
            draw(ident) if service is ServiceKind.OTHER_NON_VISION else None,
        ),
        ResponseDescriptor(faces, labels, st_obj),
        ByProducts(enc, tuple(draw(st.lists(ident, max_size=3)))),
    )


def test_face_services_are_closed_subset():
    assert FACE_SERVICES == {
        ServiceKind.FACE_DETECT, ServiceKind.FACE_IDENTIFY, ServiceKind.FACE_VERIFY,
        ServiceKind.FACE_SIMILARITY_SEARCH,
    }
    assert all(k.group == "face" for k in FACE_SERVICES)
    assert ServiceKind.OTHER_NON_VISION.group == "other"
    assert ServiceKind.EMOTION_RECOGNIZE.group == "vision"


def test_minimal_round_trip():
    t = txn(ServiceKind.FACE_DETECT)
    line = encode_txn(t)
    assert "\n" not in line
    assert decode_txn(line) == t


def test_round_trip_with_faces_and_labels():
    t = txn(faces=["a", "b", "c"], labels=[("person", 0.9), ("hat", 0.25)])
    assert decode_txn(encode_txn(t)) == t


@settings(max_examples=300)
@given(transactions())
def test_round_trip_property(t):
    assert decode_txn(encode_txn(t)) == t


def test_distinct_txns_distinct_records():
    a, b = txn(txn_id="a"), txn(txn_id="b")
    assert encode_txn(a) != encode_txn(b)


def test_confidence_out_of_range_is_invariant_violation():
    obj = json.loads(encode_txn(txn(labels=[("x", 0.5)])))
    obj["labels"] = [["x", 1.5]]
    with pytest.raises(InvariantViolation):
        decode_txn(json.dumps(obj))


def test_truncated_line_is_malformed():
    line = encode_txn(txn())
    with pytest.raises(MalformedRecord):
        decode_txn(line[: len(line) // 2])


@pytest.mark.parametrize("mutate", [
    lambda o: o.pop("svc"),
    lambda o: o.update(extra=1),
    lambda o: o.update(ts="12"),
    lambda o: o.update(ts=True),
    lambda o: o.update(fp="zz"),
    lambda o: o.update(svc="Teleport"),
    lambda o: o.update(v=2),
])
def test_schema_errors_are_malformed(mutate):
    obj = json.loads(encode_txn(txn()))
    mutate(obj)
    with pytest.raises(MalformedRecord):
        decode_txn(json.dumps(obj))


def test_invariants():
    with pytest.raises(InvariantViolation):
        RequestDescriptor(ServiceKind.FACE_DETECT, features_requested=0)
    with pytest.raises(InvariantViolation):
        txn(ServiceKind.FACE_DETECT, target="someone")
    with pytest.raises(InvariantViolation):
        Transaction(
            TransactionMeta("a", "t", 0, "1.1.1.1", 0, 0),
            RequestDescriptor(ServiceKind.FACE_IDENTIFY),
        )
    with pytest.raises(InvariantViolation):
        Transaction(
            TransactionMeta("a", "t", 0, "1.1.1.1", 0, 0),
            RequestDescriptor(ServiceKind.FACE_DETECT),
            ResponseDescriptor(("f1",), (), Status.truncated(2)),
        )
    with pytest.raises(InvariantViolation):
        TransactionMeta("a", "t", -1, "1.1.1.1", 0, 0)


def test_log_file_round_trip_and_positions(tmp_path):
    ts = [txn(ts=1000 + i, faces=[f"f{i}"]) for i in range(5)]
    path = tmp_path / "log.txt"
    assert write_log(path, ts) == 5
    assert read_log(path) == ts
    text = path.read_text().splitlines()
    text[3] = text[3][:10]
    path.write_text("\n".join(text) + "\n")
    with pytest.raises(MalformedRecord) as exc:
        read_log(path)
    assert str(exc.value.position).startswith("4:")


def test_log_needs_header(tmp_path):
    path = tmp_path / "log.txt"
    path.write_text(encode_txn(txn()) + "\n")
    with pytest.raises(MalformedRecord):
        list(iter_log(path))
    path.write_text(LOG_HEADER + "\n")
    assert read_log(path) == []


def test_redact_full_is_identity():
    t = txn(faces=["a", "b"], input_id="in1")
    assert redact(t, MonitoringLevel.FULL_CONTENT) is t


def test_redact_metadata_only_strips_payload():
    t = txn(faces=["a", "b"], labels=[("placard", 0.9)], input_id="in1", fp=77, features=3)
    r = redact(t, MonitoringLevel.METADATA_ONLY)
    assert r.meta == t.meta
    assert r.service is t.service
    assert r.request.features_requested == 3
    assert r.response.detected_face_ids == ()
    assert r.response.detected_labels == ()
    assert r.request.input_id == "" and r.request.content_fingerprint == 0
    assert r.by_products.face_encodings_count == 0
    assert r.level is MonitoringLevel.METADATA_ONLY
    assert decode_txn(encode_txn(r)) == r


def test_redact_derived_pseudonyms_are_stable():
    alias = Pseudonymizer("k")
    a = redact(txn(faces=["alice", "bob"], input_id="in1"), MonitoringLevel.METADATA_PLUS_DERIVED, alias)
    b = redact(txn(faces=["bob"]), MonitoringLevel.METADATA_PLUS_DERIVED, alias)
    assert a.response.detected_face_ids[1] == b.response.detected_face_ids[0]
    assert "bob" not in a.response.detected_face_ids
    assert a.request.input_id.startswith("p:")
    # a fresh pseudonymizer with the same key agrees
    again = Pseudonymizer("k")
    assert again("bob") == b.response.detected_face_ids[0]
    assert Pseudonymizer("other")("bob") != again("bob")


@given(transactions(), st.sampled_from(list(MonitoringLevel)), st.sampled_from(list(MonitoringLevel)))
def test_redaction_never_raises_exposure(t, first, second):
    once = redact(t, first)
    twice = redact(once, second)
    assert twice.level.rank == min(first.rank, second.rank)
    if second.rank >= first.rank:
        assert twice == once
    assert len(twice.response.detected_face_ids) <= len(t.response.detected_face_ids)
    assert twice.meta == t.meta and twice.service is t.service


def test_pseudonyms_distinct_for_distinct_tokens():
    alias = Pseudonymizer()
    out = {alias(f"face{i}") for i in range(5000)}
    assert len(out) == 5000
