"""Run configuration: dataclasses, validation, and JSON round-trip."""
from __future__ import annotations

import dataclasses
import json
from dataclasses import dataclass, field
from pathlib import Path

from .aggregation import TrimConfig, is_trim_feasible
from .errors import ConfigurationError
from .ledger import GasTable
from .privacy import DpConfig
from .trainer import TrainConfig


@dataclass(frozen=True)
class DataConfig:
    """Synthetic blob corpus by default; IDX files when paths are given."""

    kind: str = "blobs"
    num_classes: int = 4
    samples_per_class: int = 400
    test_per_class: int = 100
    input_dim: int = 8
    center_scale: float = 3.0
    spread: float = 0.6
    idx_images: str | None = None
    idx_labels: str | None = None
    idx_test_images: str | None = None
    idx_test_labels: str | None = None

    def __post_init__(self) -> None:
        if self.kind not in ("blobs", "idx"):
            raise ConfigurationError(f"unknown dataset kind {self.kind!r}")
        if self.kind == "idx" and (self.idx_images is None or self.idx_labels is None):
            raise ConfigurationError("idx datasets need image and label paths")
        if self.num_classes < 2:
            raise ConfigurationError("need at least two classes")
        if self.samples_per_class < 1 or self.test_per_class < 1 or self.input_dim < 1:
            raise ConfigurationError("dataset sizes must be positive")


@dataclass(frozen=True)
class RunConfig:
    num_peers: int = 8
    num_clusters: int = 2
    beta: float = 0.5
    seed: int = 42
    duration_ticks: int = 500
    leader_period: int = 50
    seal_period: int = 10
    interval_min: int = 3
    interval_max: int = 8
    fanout: int = 2
    deterministic: bool = True
    cluster_dp: bool = False
    paillier_bits: int = 1024
    fixed_point_scale: int = 10**6
    initial_tokens: int = 1000
    reward_amount: int = 10
    penalty_amount: int = 10
    penalty_loss_delta: float = 0.5
    byzantine_peers: tuple[int, ...] = ()
    byzantine_scale: float = 1000.0
    audit: bool = True
    out_dir: str = "runs/default"
    cas_dir: str | None = None
    metrics_out: str | None = None
    ledger_out: str | None = None
    data: DataConfig = field(default_factory=DataConfig)
    dp: DpConfig = field(default_factory=DpConfig)
    trim: TrimConfig = field(default_factory=TrimConfig)
    train: TrainConfig = field(default_factory=TrainConfig)
    gas_overrides: dict | None = None

    def __post_init__(self) -> None:
        if self.num_peers < 1:
            raise ConfigurationError("num_peers must be >= 1")
        if not 1 <= self.num_clusters <= self.num_peers:
            raise ConfigurationError("num_clusters must lie in [1, num_peers]")
        if self.num_clusters > self.data.num_classes:
            raise ConfigurationError("more clusters than output units to segment")
        if self.beta <= 0:
            raise ConfigurationError("beta must be positive")
        if self.duration_ticks < 0:
            raise ConfigurationError("duration_ticks must be >= 0")
        if self.leader_period < 1 or self.seal_period < 1:
            raise ConfigurationError("periods must be >= 1")
        if not 1 <= self.interval_min <= self.interval_max:
            raise ConfigurationError("need 1 <= interval_min <= interval_max")
        if self.fanout < 0:
            raise ConfigurationError("fanout must be >= 0")
        if self.trim.trim_ratio > 0 and not is_trim_feasible(
            self.fanout + 1, self.trim.trim_ratio
        ):
            raise ConfigurationError(
                "trim_ratio is infeasible for fanout+1 gossip updates"
            )
        if self.paillier_bits < 256:
            raise ConfigurationError("paillier_bits must be >= 256")
        if min(self.initial_tokens, self.reward_amount, self.penalty_amount) < 0:
            raise ConfigurationError("token amounts must be >= 0")
        if self.penalty_loss_delta < 0:
            raise ConfigurationError("penalty_loss_delta must be >= 0")
        for pid in self.byzantine_peers:
            if not 0 <= pid < self.num_peers:
                raise ConfigurationError(f"byzantine peer {pid} out of range")

    def gas_table(self) -> GasTable:
        if not self.gas_overrides:
            return GasTable()
        return dataclasses.replace(GasTable(), **self.gas_overrides)

    def resolve_out_dir(self) -> Path:
        return Path(self.out_dir)

    def resolve_cas_dir(self) -> Path:
        return Path(self.cas_dir) if self.cas_dir else self.resolve_out_dir() / "cas"

    def resolve_metrics_out(self) -> Path:
        return Path(self.metrics_out) if self.metrics_out else self.resolve_out_dir() / "metrics.csv"

    def resolve_ledger_out(self) -> Path:
        return Path(self.ledger_out) if self.ledger_out else self.resolve_out_dir() / "ledger.txt"


def config_to_dict(cfg: RunConfig) -> dict:
    out = dataclasses.asdict(cfg)
    out["byzantine_peers"] = list(cfg.byzantine_peers)
    return out


def config_from_dict(raw: dict) -> RunConfig:
    data = dict(raw)
    nested = {
        "data": DataConfig,
        "dp": DpConfig,
        "trim": TrimConfig,
        "train": TrainConfig,
    }
    kwargs: dict = {}
    for key, value in data.items():
        if key in nested:
            kwargs[key] = nested[key](**value) if isinstance(value, dict) else value
        elif key == "byzantine_peers":
            kwargs[key] = tuple(value)
        else:
            kwargs[key] = value
    known = {f.name for f in dataclasses.fields(RunConfig)}
    unknown = set(kwargs) - known
    if unknown:
        raise ConfigurationError(f"unknown config keys: {sorted(unknown)}")
    return RunConfig(**kwargs)


def save_config(cfg: RunConfig, path: str | Path) -> None:
    Path(path).write_text(
        json.dumps(config_to_dict(cfg), indent=2, sort_keys=True) + "\n",
        encoding="utf-8",
    )


def load_config(path: str | Path) -> RunConfig:
    try:
        raw = json.loads(Path(path).read_text(encoding="utf-8"))
    except json.JSONDecodeError as exc:
        raise ConfigurationError(f"config file is not valid JSON: {exc}") from exc
    if not isinstance(raw, dict):
        raise ConfigurationError("config file must hold a JSON object")
    return config_from_dict(raw)
