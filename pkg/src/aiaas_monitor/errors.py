"""Exception hierarchy shared across the pipeline stages."""

from __future__ import annotations


class MonitorError(Exception):
    """Base class for every error raised by this package."""


class MalformedRecord(MonitorError):
    """A line record does not conform to the documented schema."""

    def __init__(self, position: int | str, reason: str) -> None:
        super().__init__(f"malformed record at {position}: {reason}")
        self.position = position
        self.reason = reason


class InvariantViolation(MonitorError):
    """A well-formed value breaks a type invariant."""


class ClockRegression(MonitorError):
    def __init__(self, tenant_id: str, timestamp: int, high_water: int) -> None:
        super().__init__(
            f"tenant {tenant_id!r}: timestamp {timestamp} precedes high-water mark {high_water}"
        )
        self.tenant_id = tenant_id
        self.timestamp = timestamp
        self.high_water = high_water


class UnknownTenant(MonitorError, KeyError):
    pass


class UnknownInput(MonitorError, KeyError):
    pass


class UnavailableAtMonitoringLevel(MonitorError):
    """The requested payload-derived data is not collected at the configured level."""


class InvalidScenarioParams(MonitorError, ValueError):
    def __init__(self, name: str, reason: str) -> None:
        super().__init__(f"invalid scenario parameter {name!r}: {reason}")
        self.name = name
        self.reason = reason


class UnorderedInput(MonitorError, ValueError):
    pass


class InsufficientHistory(MonitorError, ValueError):
    def __init__(self, min_required: int, got: int) -> None:
        super().__init__(f"need at least {min_required} history windows, got {got}")
        self.min_required = min_required
        self.got = got


class InsufficientPeers(MonitorError, ValueError):
    def __init__(self, min_required: int, got: int) -> None:
        super().__init__(f"need at least {min_required} peers, got {got}")
        self.min_required = min_required
        self.got = got


class ConfigError(MonitorError):
    def __init__(self, path: str, reason: str) -> None:
        super().__init__(f"{path}: {reason}")
        self.path = path
        self.reason = reason
