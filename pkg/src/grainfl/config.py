"""Experiment configuration: defaults, key=value config files, CLI overrides.

Every knob of the pipeline lives in one flat ExperimentConfig. Values come
from three layers with increasing precedence: built-in defaults, a
plain-text config file (`key = value` lines, `#` comments), and explicit
command-line flags.
"""
from __future__ import annotations

import dataclasses
from dataclasses import dataclass, fields

from .federation import FederationConfig
from .granulation import GranulationConfig
from .metrics import MetricConfig
from .attack import AttackConfig


class ConfigError(ValueError):
    """A configuration file or value cannot be interpreted."""


@dataclass
class ExperimentConfig:
    # run
    seed: int = 0
    out: str = "run"
    threads: int = 1
    figures: bool = True
    # dataset paths
    images: str = ""
    labels: str = ""
    test_images: str = ""
    test_labels: str = ""
    cifar: str = ""
    graphs: str = ""
    test_graphs: str = ""
    limit: int = 0
    test_limit: int = 0
    train_count: int = 2000
    test_count: int = 500
    # granulation
    gray_thr: float = 0.08
    purity_thr: float = 0.9
    var_thr: float = 0.01
    symmetric_purity: bool = False
    axis_order: str = "xy"
    # federation
    clients: int = 5
    rounds: int = 20
    local_epochs: int = 8
    batch_size: int = 16
    lr: float = 1.5
    mu: float = 0.01
    model: str = "gcn"
    hidden: int = 96
    weighted_aggregate: bool = False
    # attack
    iterations: int = 300
    history: int = 10
    alpha: float = 1.0
    samples: int = 100
    checkpoint: str = ""
    # metrics
    phi: float = 3e6
    upload_only_traffic: bool = False
    # bench
    sizes: str = "100,200,224,500"
    repeats: int = 3

    def granulation(self) -> GranulationConfig:
        return GranulationConfig(
            gray_thr=self.gray_thr, purity_thr=self.purity_thr,
            var_thr=self.var_thr, symmetric_purity=self.symmetric_purity,
            axis_order=self.axis_order)

    def federation(self) -> FederationConfig:
        return FederationConfig(
            num_clients=self.clients, rounds=self.rounds,
            local_epochs=self.local_epochs, batch_size=self.batch_size,
            lr=self.lr, mu=self.mu, seed=self.seed, model=self.model,
            hidden=self.hidden, weighted_aggregate=self.weighted_aggregate,
            threads=self.threads)

    def attack(self) -> AttackConfig:
        return AttackConfig(iterations=self.iterations, history=self.history,
                            alpha=self.alpha, init_seed=self.seed)

    def metric(self) -> MetricConfig:
        return MetricConfig(phi=self.phi,
                            upload_only_traffic=self.upload_only_traffic)

    def bench_sizes(self) -> list[int]:
        parts = [p.strip() for p in self.sizes.split(",") if p.strip()]
        if not parts:
            raise ConfigError("the benchmark size list is empty")
        try:
            out = [int(p) for p in parts]
        except ValueError as exc:
            raise ConfigError(f"bad size list {self.sizes!r}") from exc
        if any(s <= 0 for s in out):
            raise ConfigError("benchmark sizes must be positive")
        return out


_FIELDS = {f.name: f for f in fields(ExperimentConfig)}


def _parse_value(field: dataclasses.Field, raw: str):
    if type(field.default) is bool:
        lowered = raw.strip().lower()
        if lowered in ("1", "true", "yes", "on"):
            return True
        if lowered in ("0", "false", "no", "off"):
            return False
        raise ConfigError(f"{field.name}: expected a boolean, got {raw!r}")
    kind = type(field.default)
    try:
        return kind(raw.strip())
    except ValueError as exc:
        raise ConfigError(f"{field.name}: cannot parse {raw!r}") from exc


def load_config_file(path) -> dict:
    """Parse `key = value` lines into typed overrides."""
    overrides = {}
    with open(path, "r", encoding="utf-8") as f:
        for lineno, line in enumerate(f, start=1):
            stripped = line.strip()
            if not stripped or stripped.startswith("#"):
                continue
            if "=" not in stripped:
                raise ConfigError(f"{path}:{lineno}: expected key=value")
            key, _, raw = stripped.partition("=")
            key = key.strip()
            if key not in _FIELDS:
                raise ConfigError(f"{path}:{lineno}: unknown key {key!r}")
            overrides[key] = _parse_value(_FIELDS[key], raw)
    return overrides


def build_config(file_path: str | None = None, cli_overrides: dict | None = None
                 ) -> ExperimentConfig:
    """defaults < config file < command-line flags."""
    values = {}
    if file_path:
        values.update(load_config_file(file_path))
    if cli_overrides:
        values.update({k: v for k, v in cli_overrides.items()
                       if k in _FIELDS and v is not None})
    return ExperimentConfig(**values)


def config_to_text(config: ExperimentConfig) -> str:
    """Snapshot of every effective value, readable back by load_config_file."""
    lines = [f"{f.name} = {getattr(config, f.name)}"
             for f in fields(ExperimentConfig)]
    return "\n".join(lines) + "\n"
