"""Operational monitor: admission control and per-feature billing.

Each transaction passes through :func:`admit`, which enforces a sliding
60 s request-rate limit over the tenant's face services and a per-image
face cap. Admitted work is billed one unit per requested feature.
"""

from __future__ import annotations

import enum
import json
from collections import defaultdict, deque
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Iterable, Mapping

from . import defaults
from ._toml import load_toml
from .errors import ClockRegression, ConfigError
from .txn import SERVICE_GROUPS, ByProducts, ServiceKind, Status, StatusKind, Transaction

RATE_LIMITED = "RATE_LIMITED"
FACE_CAP = "FACE_CAP"


class BreachAction(str, enum.Enum):
    DENY = "deny"
    TRUNCATE = "truncate"


@dataclass(frozen=True)
class LimitPolicy:
    """``None`` disables a limit."""

    rate_limit_per_min: int | None = None
    max_faces_per_image: int | None = defaults.MAX_FACES_PER_IMAGE
    action_on_breach: BreachAction = BreachAction.TRUNCATE

    def __post_init__(self) -> None:
        for name in ("rate_limit_per_min", "max_faces_per_image"):
            value = getattr(self, name)
            if value is not None and (isinstance(value, bool) or not isinstance(value, int) or value < 1):
                raise ValueError(f"{name} must be a positive integer or unlimited, got {value!r}")


@dataclass(frozen=True)
class PolicySet:
    """A default policy plus per-tenant overrides."""

    default: LimitPolicy = field(default_factory=LimitPolicy)
    overrides: Mapping[str, LimitPolicy] = field(default_factory=dict)

    def for_tenant(self, tenant_id: str) -> LimitPolicy:
        return self.overrides.get(tenant_id, self.default)


def _policy_from_table(table: Mapping, base: LimitPolicy, origin: str) -> LimitPolicy:
    kwargs = {}
    for name in ("rate_limit_per_min", "max_faces_per_image"):
        if name in table:
            value = table[name]
            kwargs[name] = None if value == "unlimited" else value
    if "action_on_breach" in table:
        try:
            kwargs["action_on_breach"] = BreachAction(str(table["action_on_breach"]).lower())
        except ValueError:
            raise ConfigError(origin, f"unknown action_on_breach {table['action_on_breach']!r}") from None
    unknown = set(table) - {"rate_limit_per_min", "max_faces_per_image", "action_on_breach", "tenants"}
    if unknown:
        raise ConfigError(origin, f"unknown policy keys {sorted(unknown)}")
    try:
        return replace(base, **kwargs)
    except ValueError as exc:
        raise ConfigError(origin, str(exc)) from None


def policy_from_mapping(data: Mapping, origin: str = "<policy>") -> PolicySet:
    default = _policy_from_table(data, LimitPolicy(), origin)
    overrides = {
        str(tenant): _policy_from_table(table, default, f"{origin}:tenants.{tenant}")
        for tenant, table in data.get("tenants", {}).items()
    }
    return PolicySet(default, overrides)


def load_policy(path: str | Path) -> PolicySet:
    return policy_from_mapping(load_toml(path), str(path))


class DecisionKind(str, enum.Enum):
    ADMIT = "admit"
    DENY = "deny"
    TRUNCATE = "truncate"


@dataclass(frozen=True)
class Decision:
    """Gateway outcome; ``txn`` is the transaction as delivered to the client."""

    kind: DecisionKind
    txn: Transaction
    reason: str | None = None
    cap: int | None = None

    @property
    def admitted(self) -> bool:
        return self.kind is not DecisionKind.DENY


@dataclass(frozen=True)
class BillRecord:
    txn_id: str
    tenant_id: str
    billable_units: int
    service: ServiceKind

    def to_line(self) -> str:
        return json.dumps(
            {"txn": self.txn_id, "tenant": self.tenant_id, "units": self.billable_units,
             "svc": self.service.value},
            separators=(",", ":"),
        )

    @classmethod
    def from_line(cls, line: str) -> BillRecord:
        obj = json.loads(line)
        return cls(obj["txn"], obj["tenant"], obj["units"], ServiceKind(obj["svc"]))


class MeterState:
    """Per-tenant sliding request counters and cumulative billable units."""

    def __init__(self, window_ms: int = defaults.RATE_WINDOW_MS, tolerance_ms: int = 0) -> None:
        self.window_ms = window_ms
        self.tolerance_ms = tolerance_ms
        self._recent: dict[tuple[str, str], deque[int]] = defaultdict(deque)
        self._units: dict[tuple[str, str], int] = defaultdict(int)
        self._high_water: dict[str, int] = {}

    @property
    def tenants(self) -> list[str]:
        return sorted(self._high_water)

    def high_water(self, tenant_id: str) -> int | None:
        return self._high_water.get(tenant_id)

    def check_clock(self, txn: Transaction) -> None:
        mark = self._high_water.get(txn.tenant_id)
        if mark is not None and txn.timestamp + self.tolerance_ms < mark:
            raise ClockRegression(txn.tenant_id, txn.timestamp, mark)

    def trailing_count(self, tenant_id: str, group: str, now: int) -> int:
        q = self._recent.get((tenant_id, group))
        if not q:
            return 0
        cut = now - self.window_ms
        return sum(1 for t in q if t > cut)

    def _evict(self, q: deque[int], now: int) -> None:
        cut = now - self.window_ms
        while q and q[0] <= cut:
            q.popleft()

    def record(self, txn: Transaction, units: int) -> None:
        key = (txn.tenant_id, txn.service.group)
        q = self._recent[key]
        self._evict(q, txn.timestamp)
        q.append(txn.timestamp)
        self._units[key] += units
        self._high_water[txn.tenant_id] = max(txn.timestamp, self._high_water.get(txn.tenant_id, 0))

    def units(self, tenant_id: str) -> int:
        return sum(self._units.get((tenant_id, g), 0) for g in SERVICE_GROUPS)


def _truncate(txn: Transaction, cap: int) -> Transaction:
    response = replace(
        txn.response,
        detected_face_ids=txn.response.detected_face_ids[:cap],
        status=Status.truncated(cap),
    )
    by_products = ByProducts(
        min(txn.by_products.face_encodings_count, cap), txn.by_products.pipeline_stage_tags
    )
    return replace(txn, response=response, by_products=by_products)


def _deny(txn: Transaction, reason: str) -> Transaction:
    return replace(txn, response=replace(txn.response, status=Status.denied(reason)))


def admit(txn: Transaction, policy: LimitPolicy, state: MeterState) -> Decision:
    """Admit, deny, or truncate one transaction and update ``state`` in place.

    Only admitted and truncated transactions touch the state; denied ones
    leave counters and the clock high-water mark unchanged.
    """
    state.check_clock(txn)
    if policy.rate_limit_per_min is not None and txn.service.is_face:
        q = state._recent.get((txn.tenant_id, "face"))
        if q:
            state._evict(q, txn.timestamp)
            if len(q) + 1 > policy.rate_limit_per_min:
                return Decision(DecisionKind.DENY, _deny(txn, RATE_LIMITED), reason=RATE_LIMITED)

    decision = Decision(DecisionKind.ADMIT, txn)
    cap = policy.max_faces_per_image
    if cap is not None and len(txn.response.detected_face_ids) > cap:
        if policy.action_on_breach is BreachAction.DENY:
            return Decision(DecisionKind.DENY, _deny(txn, FACE_CAP), reason=FACE_CAP)
        decision = Decision(DecisionKind.TRUNCATE, _truncate(txn, cap), cap=cap)
    state.record(decision.txn, bill(decision.txn).billable_units)
    return decision


def bill(txn: Transaction) -> BillRecord:
    """One billable unit per feature applied to the input; nothing for denied calls."""
    units = 0 if txn.response.status.kind is StatusKind.DENIED else txn.request.features_requested
    return BillRecord(txn.txn_id, txn.tenant_id, units, txn.service)


def meter_snapshot(state: MeterState, now: int | None = None) -> dict[str, dict[str, dict[str, int]]]:
    """Read-only usage summary: tenant -> group -> ``trailing`` count and ``units``.

    Trailing counts are taken at ``now`` or, by default, at each tenant's
    latest admitted timestamp.
    """
    out: dict[str, dict[str, dict[str, int]]] = {}
    for tenant in state.tenants:
        ref = state.high_water(tenant) if now is None else now
        out[tenant] = {
            g: {
                "trailing": state.trailing_count(tenant, g, ref),
                "units": state._units.get((tenant, g), 0),
            }
            for g in SERVICE_GROUPS
        }
    return out


class Gateway:
    """Stateful wrapper binding a :class:`PolicySet` to a :class:`MeterState`."""

    def __init__(self, policies: PolicySet | LimitPolicy | None = None, state: MeterState | None = None) -> None:
        if policies is None:
            policies = PolicySet()
        elif isinstance(policies, LimitPolicy):
            policies = PolicySet(policies)
        self.policies = policies
        self.state = state or MeterState()

    def process(self, txn: Transaction) -> tuple[Decision, BillRecord]:
        decision = admit(txn, self.policies.for_tenant(txn.tenant_id), self.state)
        return decision, bill(decision.txn)

    def run(self, txns: Iterable[Transaction]) -> list[tuple[Decision, BillRecord]]:
        return [self.process(t) for t in txns]

    def snapshot(self, now: int | None = None) -> dict:
        return meter_snapshot(self.state, now)
