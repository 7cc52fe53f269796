import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from aiaas_monitor.errors import ClockRegression, ConfigError
from aiaas_monitor.gateway import (
    FACE_CAP,
    RATE_LIMITED,
    BreachAction,
    DecisionKind,
    Gateway,
    LimitPolicy,
    MeterState,
    PolicySet,
    admit,
    bill,
    load_policy,
    meter_snapshot,
    policy_from_mapping,
)
from aiaas_monitor.txn import ServiceKind, StatusKind
from helpers import T0, txn


def brute_force_max_in_window(times, window_ms=60_000):
    """Largest number of times inside any half-open window of ``window_ms``."""
    best = 0
    for t in times:
        best = max(best, sum(1 for u in times if t - window_ms < u <= t))
    return best


def test_truncate_101_faces_to_100():
    t = txn(faces=[f"f{i}" for i in range(101)])
    d = admit(t, LimitPolicy(), MeterState())
    assert d.kind is DecisionKind.TRUNCATE and d.cap == 100
    assert d.txn.response.detected_face_ids == t.response.detected_face_ids[:100]
    assert d.txn.response.status.kind is StatusKind.TRUNCATED
    assert d.txn.by_products.face_encodings_count == 100


def test_exactly_100_faces_untouched():
    t = txn(faces=[f"f{i}" for i in range(100)])
    d = admit(t, LimitPolicy(), MeterState())
    assert d.kind is DecisionKind.ADMIT and d.txn is t


def test_face_cap_deny_action():
    t = txn(faces=[f"f{i}" for i in range(150)])
    d = admit(t, LimitPolicy(action_on_breach=BreachAction.DENY), MeterState())
    assert d.kind is DecisionKind.DENY and d.reason == FACE_CAP
    assert bill(d.txn).billable_units == 0


def test_first_txn_admitted_and_101st_denied():
    state = MeterState()
    policy = LimitPolicy(rate_limit_per_min=100)
    decisions = [admit(txn(ts=T0 + i * 100), policy, state) for i in range(101)]
    assert decisions[0].kind is DecisionKind.ADMIT
    assert all(d.admitted for d in decisions[:100])
    assert decisions[100].kind is DecisionKind.DENY and decisions[100].reason == RATE_LIMITED
    # the window slides: 60 s after the first admission there is room again
    assert admit(txn(ts=T0 + 60_000), policy, state).admitted


def test_rate_limit_only_counts_face_services():
    state = MeterState()
    policy = LimitPolicy(rate_limit_per_min=2)
    for i in range(5):
        assert admit(txn(ServiceKind.LABEL_DETECT, ts=T0 + i), policy, state).admitted
    assert admit(txn(ts=T0 + 10), policy, state).admitted
    assert admit(txn(ServiceKind.FACE_VERIFY, ts=T0 + 11), policy, state).admitted
    assert not admit(txn(ServiceKind.FACE_IDENTIFY, ts=T0 + 12), policy, state).admitted


@settings(max_examples=80, deadline=None)
@given(
    st.lists(st.integers(0, 180_000), min_size=1, max_size=300),
    st.integers(1, 20),
)
def test_sliding_window_admissions_bounded(offsets, limit):
    state = MeterState()
    policy = LimitPolicy(rate_limit_per_min=limit)
    admitted = []
    for off in sorted(offsets):
        d = admit(txn(ts=T0 + off), policy, state)
        if d.admitted:
            admitted.append(T0 + off)
    assert brute_force_max_in_window(admitted) <= limit
    # the limiter is work-conserving: a denial only happens when the window is full
    assert len(admitted) >= min(limit, len(offsets))


def test_bill_counts_features():
    assert bill(txn(features=3)).billable_units == 3


def test_denied_bill_is_zero():
    state = MeterState()
    policy = LimitPolicy(rate_limit_per_min=1)
    admit(txn(ts=T0), policy, state)
    d = admit(txn(ts=T0 + 1, features=4), policy, state)
    assert not d.admitted
    assert bill(d.txn).billable_units == 0


@settings(max_examples=40, deadline=None)
@given(st.integers(0, 2**32 - 1))
def test_billing_conservation_randomized(seed):
    rng = np.random.default_rng(seed)
    gw = Gateway(LimitPolicy(rate_limit_per_min=int(rng.integers(1, 30))))
    times = np.sort(rng.integers(0, 300_000, size=200))
    expected = total = 0
    for ts in times.tolist():
        svc = list(ServiceKind)[int(rng.integers(0, len(ServiceKind)))]
        t = txn(svc, ts=T0 + ts, tenant=f"t{int(rng.integers(0, 3))}", features=int(rng.integers(1, 6)))
        d, record = gw.process(t)
        total += record.billable_units
        if d.admitted:
            expected += t.request.features_requested
    assert total == expected
    assert sum(gw.state.units(t) for t in gw.state.tenants) == expected


def test_meter_snapshot():
    state = MeterState()
    assert meter_snapshot(state) == {}
    policy = LimitPolicy()
    for i in range(7):
        admit(txn(ts=T0 + i * 1000, features=2), policy, state)
    snap = meter_snapshot(state)
    assert snap["t1"]["face"] == {"trailing": 7, "units": 14}
    assert snap["t1"]["vision"] == {"trailing": 0, "units": 0}
    assert meter_snapshot(state) == snap
    assert meter_snapshot(state, now=T0 + 10**6)["t1"]["face"]["trailing"] == 0


def test_clock_regression():
    state = MeterState()
    admit(txn(ts=T0 + 5000), LimitPolicy(), state)
    with pytest.raises(ClockRegression):
        admit(txn(ts=T0), LimitPolicy(), state)
    # other tenants have their own clock
    assert admit(txn(ts=T0, tenant="t2"), LimitPolicy(), state).admitted
    tolerant = MeterState(tolerance_ms=10_000)
    admit(txn(ts=T0 + 5000), LimitPolicy(), tolerant)
    assert admit(txn(ts=T0), LimitPolicy(), tolerant).admitted


def test_policy_overrides(tmp_path):
    path = tmp_path / "policy.toml"
    path.write_text(
        'rate_limit_per_min = 50\n'
        '[tenants.vip]\nrate_limit_per_min = "unlimited"\nmax_faces_per_image = 500\n'
    )
    ps = load_policy(path)
    assert ps.for_tenant("anyone").rate_limit_per_min == 50
    assert ps.for_tenant("vip").rate_limit_per_min is None
    assert ps.for_tenant("vip").max_faces_per_image == 500
    assert PolicySet().for_tenant("x").max_faces_per_image == 100


@pytest.mark.parametrize("table", [
    {"rate_limit_per_min": 0},
    {"action_on_breach": "explode"},
    {"bogus": 1},
])
def test_bad_policy_is_config_error(table):
    with pytest.raises(ConfigError):
        policy_from_mapping(table)
