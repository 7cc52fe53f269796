"""Provider-side monitoring for AI service APIs: metering, audit data and misuse alerts."""

from .anomaly import PeerAnomalyScorer, SelfAnomalyScorer, peer_anomaly_score, self_anomaly_score
from .audit import AuditInformer, AuditState, UsageProfile, ingest
from .config import RunConfig, load_run_config
from .detector import Alert, IndicatorId, IndicatorRule, Severity, default_ruleset, detect_inversion_probe, evaluate_rules
from .errors import (
    ClockRegression,
    ConfigError,
    InsufficientHistory,
    InsufficientPeers,
    InvalidScenarioParams,
    InvariantViolation,
    MalformedRecord,
    MonitorError,
    UnavailableAtMonitoringLevel,
    UnknownInput,
    UnknownTenant,
    UnorderedInput,
)
from .gateway import Gateway, LimitPolicy, MeterState, PolicySet, admit, bill, meter_snapshot
from .pipeline import MonitorPipeline, RunReport, bench, replay, run_pipeline
from .sketches import DistinctSketch, HeavyHitterSketch
from .txn import MonitoringLevel, ServiceKind, Transaction, decode_txn, encode_txn, read_log, redact, write_log
from .workload import GroundTruthLabel, ScenarioId, ScenarioSpec, generate_workload, merge_streams, scenario_catalog

__version__ = "0.1.0"

__all__ = [
    "Alert",
    "AuditInformer",
    "AuditState",
    "ClockRegression",
    "ConfigError",
    "DistinctSketch",
    "Gateway",
    "GroundTruthLabel",
    "HeavyHitterSketch",
    "IndicatorId",
    "IndicatorRule",
    "InsufficientHistory",
    "InsufficientPeers",
    "InvalidScenarioParams",
    "InvariantViolation",
    "LimitPolicy",
    "MalformedRecord",
    "MeterState",
    "MonitorError",
    "MonitorPipeline",
    "MonitoringLevel",
    "PeerAnomalyScorer",
    "PolicySet",
    "RunConfig",
    "RunReport",
    "ScenarioId",
    "ScenarioSpec",
    "SelfAnomalyScorer",
    "ServiceKind",
    "Severity",
    "Transaction",
    "UnavailableAtMonitoringLevel",
    "UnknownInput",
    "UnknownTenant",
    "UnorderedInput",
    "UsageProfile",
    "admit",
    "bench",
    "bill",
    "decode_txn",
    "default_ruleset",
    "detect_inversion_probe",
    "encode_txn",
    "evaluate_rules",
    "generate_workload",
    "ingest",
    "load_run_config",
    "merge_streams",
    "meter_snapshot",
    "peer_anomaly_score",
    "read_log",
    "redact",
    "replay",
    "run_pipeline",
    "scenario_catalog",
    "self_anomaly_score",
    "write_log",
]
