"""Run configuration: one TOML file naming scenarios, policy, rules and outputs.

Example::

    seed = 7
    level = "full"            # metadata | derived | full
    mode = "detect"           # gateway | audit | detect
    out = "out"
    ruleset = "rules.toml"    # optional, relative to this file
    blacklist = "blacklist.txt"

    [policy]
    max_faces_per_image = 100
    action_on_breach = "truncate"

    [[scenario]]
    id = "SurveillanceRate"
    [scenario.params]
    tenant_count = 50
"""

from __future__ import annotations

from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Mapping, Sequence

import numpy as np

from . import defaults
from ._toml import load_toml, loads_toml
from .audit import load_blacklist
from .detector import IndicatorRule, default_ruleset, load_ruleset
from .errors import ConfigError, InvalidScenarioParams
from .gateway import PolicySet, policy_from_mapping
from .txn import MonitoringLevel
from .workload import ScenarioId, ScenarioSpec

MODES = ("gateway", "audit", "detect")
_TOP_KEYS = {"seed", "level", "mode", "out", "ruleset", "blacklist", "policy", "scenario"}


@dataclass(frozen=True)
class RunConfig:
    scenarios: Sequence[ScenarioSpec] = ()
    policy: PolicySet = field(default_factory=PolicySet)
    rules: Sequence[IndicatorRule] = field(default_factory=default_ruleset)
    blacklist: frozenset[str] = defaults.DEFAULT_BLACKLIST
    level: MonitoringLevel = MonitoringLevel.FULL_CONTENT
    out_dir: Path = Path("out")
    seed: int = 0
    mode: str = "detect"
    ruleset_path: Path | None = None
    blacklist_path: Path | None = None
    # scenarios whose seed was pinned in the file; the others follow the run seed
    explicit_seeds: tuple[bool, ...] = ()

    def __post_init__(self) -> None:
        if self.mode not in MODES:
            raise ConfigError("mode", f"must be one of {MODES}, got {self.mode!r}")

    def with_overrides(self, *, seed: int | None = None, level: str | None = None,
                       out_dir: str | Path | None = None, mode: str | None = None) -> RunConfig:
        cfg = self
        if seed is not None:
            explicit = cfg.explicit_seeds or (False,) * len(cfg.scenarios)
            cfg = replace(cfg, seed=seed, scenarios=_reseed(list(zip(cfg.scenarios, explicit)), seed))
        if level is not None:
            cfg = replace(cfg, level=_level(level, "--level"))
        if out_dir is not None:
            cfg = replace(cfg, out_dir=Path(out_dir))
        if mode is not None:
            cfg = replace(cfg, mode=mode)
        return cfg


def derive_seed(run_seed: int, index: int) -> int:
    return int(np.random.SeedSequence([run_seed % 2**64, index]).generate_state(1, np.uint64)[0])


def _reseed(raw: list[tuple[ScenarioSpec, bool]], run_seed: int) -> list[ScenarioSpec]:
    return [spec if explicit else replace(spec, seed=derive_seed(run_seed, i))
            for i, (spec, explicit) in enumerate(raw)]


def _level(value, origin: str) -> MonitoringLevel:
    try:
        return MonitoringLevel(str(value).lower())
    except ValueError:
        raise ConfigError(origin, f"level must be metadata, derived or full, got {value!r}") from None


def scenarios_from_mapping(
    tables: Sequence[Mapping], run_seed: int, origin: str
) -> tuple[list[ScenarioSpec], tuple[bool, ...]]:
    raw = []
    for i, table in enumerate(tables):
        where = f"{origin}:scenario[{i}]"
        unknown = set(table) - {"id", "seed", "prefix", "params"}
        if unknown:
            raise ConfigError(where, f"unknown keys {sorted(unknown)}")
        try:
            sid = ScenarioId(table["id"])
        except (KeyError, ValueError):
            raise ConfigError(where, f"unknown or missing scenario id {table.get('id')!r}") from None
        prefix = table.get("prefix", f"{i:02d}{sid.value[:5].lower()}")
        spec = ScenarioSpec(sid, dict(table.get("params", {})), int(table.get("seed", 0)), str(prefix))
        try:
            spec.resolved_params()
        except InvalidScenarioParams as exc:
            raise ConfigError(where, str(exc)) from None
        raw.append((spec, "seed" in table))
    prefixes = [s.prefix for s, _ in raw]
    if len(set(prefixes)) != len(prefixes):
        raise ConfigError(origin, "scenario prefixes must be unique")
    return _reseed(raw, run_seed), tuple(explicit for _, explicit in raw)


def config_from_mapping(data: Mapping, base_dir: Path, origin: str = "<config>") -> RunConfig:
    unknown = set(data) - _TOP_KEYS
    if unknown:
        raise ConfigError(origin, f"unknown keys {sorted(unknown)}")
    seed = data.get("seed", 0)
    if isinstance(seed, bool) or not isinstance(seed, int):
        raise ConfigError(origin, "seed must be an integer")
    rules = default_ruleset()
    ruleset_path = None
    if "ruleset" in data:
        ruleset_path = (base_dir / data["ruleset"]).resolve()
        rules = load_ruleset(ruleset_path)
    blacklist = defaults.DEFAULT_BLACKLIST
    blacklist_path = None
    if "blacklist" in data:
        blacklist_path = (base_dir / data["blacklist"]).resolve()
        try:
            blacklist = load_blacklist(blacklist_path)
        except OSError as exc:
            raise ConfigError(str(blacklist_path), exc.strerror or "cannot read") from None
    mode = data.get("mode", "detect")
    if mode not in MODES:
        raise ConfigError(origin, f"mode must be one of {MODES}")
    scenarios, explicit = scenarios_from_mapping(data.get("scenario", []), seed, origin)
    return RunConfig(
        scenarios=scenarios,
        explicit_seeds=explicit,
        policy=policy_from_mapping(data.get("policy", {}), f"{origin}:policy"),
        rules=rules,
        blacklist=blacklist,
        level=_level(data.get("level", "full"), origin),
        out_dir=(base_dir / data.get("out", "out")),
        seed=seed,
        mode=mode,
        ruleset_path=ruleset_path,
        blacklist_path=blacklist_path,
    )


def default_run_config(seed: int = 0) -> RunConfig:
    """Every catalog scenario at its default parameters."""
    tables = [{"id": sid.value} for sid in ScenarioId]
    scenarios, explicit = scenarios_from_mapping(tables, seed, "<default>")
    return RunConfig(scenarios=scenarios, explicit_seeds=explicit, seed=seed)


def load_run_config(path: str | Path) -> RunConfig:
    path = Path(path)
    return config_from_mapping(load_toml(path), path.parent, str(path))


def loads_run_config(text: str, base_dir: str | Path = ".") -> RunConfig:
    return config_from_mapping(loads_toml(text), Path(base_dir))
