"""Training configuration: a flat, typed record loadable from TOML."""
from __future__ import annotations

import dataclasses
import sys
from dataclasses import dataclass, fields

if sys.version_info >= (3, 11):
    import tomllib
else:
    import tomli as tomllib


class ConfigError(ValueError):
    pass


FUSION_MODES = ("bsam", "add", "multiply", "concatDim", "cross")


@dataclass(frozen=True)
class TrainConfig:
    # optimisation (defaults from the published tuning)
    epochs: int = 4000
    lr: float = 0.005
    dropout: float = 0.5
    beta1: float = 0.03
    beta2: float = 0.03
    knn: int = 8
    # not published; chosen defaults
    gamma: float = 1.0
    dim: int = 64
    heads: int = 4
    blocks: int = 2
    sample_size: int = 15
    gcn_layers: int = 2
    optimizer: str = "adam"
    pos_weight: float = 0.0  # <= 0 means #train negatives / #train positives
    sum_reduction: bool = False
    residual: bool = True
    soft_bias: bool = True
    seed: int = 0
    test_fraction: float = 0.1
    test_negatives: str = "balanced"
    # ablations
    no_trans: bool = False
    no_gnn: bool = False
    attention_swap: bool = False
    gcn_swap: bool = False
    no_adv_drug: bool = False
    no_adv_microbe: bool = False
    adv_close: bool = False
    fusion: str = "bsam"

    def validate(self) -> "TrainConfig":
        if self.epochs < 1:
            raise ConfigError("epochs must be >= 1")
        if self.lr < 0:
            raise ConfigError("lr must be non-negative")
        if not 0 <= self.dropout < 1:
            raise ConfigError("dropout must lie in [0, 1)")
        if self.beta1 < 0 or self.beta2 < 0 or self.gamma < 0:
            raise ConfigError("beta1, beta2 and gamma must be non-negative")
        if self.dim < 1 or self.heads < 1 or self.dim % self.heads:
            raise ConfigError(f"dim ({self.dim}) must be a positive multiple of heads ({self.heads})")
        if self.blocks < 1 or self.sample_size < 1 or self.gcn_layers < 1 or self.knn < 0:
            raise ConfigError("blocks, sample_size and gcn_layers must be >= 1; knn >= 0")
        if self.optimizer not in ("adam", "sgd"):
            raise ConfigError(f"unknown optimizer {self.optimizer!r}")
        if self.fusion not in FUSION_MODES:
            raise ConfigError(f"unknown fusion mode {self.fusion!r}; expected one of {FUSION_MODES}")
        if self.test_negatives not in ("balanced", "all"):
            raise ConfigError(f"unknown test-negative protocol {self.test_negatives!r}")
        if not 0 < self.test_fraction < 1:
            raise ConfigError("test_fraction must lie in (0, 1)")
        return self

    def replace(self, **changes) -> "TrainConfig":
        return with_overrides(self, changes)

    def to_dict(self) -> dict:
        return dataclasses.asdict(self)


_TYPES = {f.name: f.type for f in fields(TrainConfig)}


def _coerce(key: str, value):
    kind = _TYPES.get(key)
    if kind is None:
        raise ConfigError(f"unknown config key {key!r}")
    if kind == "bool":
        if not isinstance(value, bool):
            raise ConfigError(f"{key}: expected bool, got {value!r}")
        return value
    if kind == "int":
        if isinstance(value, bool) or not isinstance(value, int):
            raise ConfigError(f"{key}: expected int, got {value!r}")
        return value
    if kind == "float":
        if isinstance(value, bool) or not isinstance(value, (int, float)):
            raise ConfigError(f"{key}: expected float, got {value!r}")
        return float(value)
    if not isinstance(value, str):
        raise ConfigError(f"{key}: expected string, got {value!r}")
    return value


def with_overrides(cfg: TrainConfig, changes: dict) -> TrainConfig:
    clean = {k: _coerce(k, v) for k, v in changes.items() if v is not None}
    return dataclasses.replace(cfg, **clean).validate()


def load_config(path=None, overrides: dict | None = None) -> TrainConfig:
    """Defaults, then the TOML file (flat keys), then ``overrides``."""
    cfg = TrainConfig()
    if path is not None:
        try:
            with open(path, "rb") as fh:
                raw = tomllib.load(fh)
        except (OSError, tomllib.TOMLDecodeError) as exc:
            raise ConfigError(f"cannot read config {path}: {exc}") from None
        nested = [k for k, v in raw.items() if isinstance(v, dict)]
        if nested:
            raise ConfigError(f"config must be flat; found tables {nested}")
        cfg = with_overrides(cfg, raw)
    return with_overrides(cfg, overrides or {})


def dump_config(cfg: TrainConfig) -> str:
    lines = []
    for k, v in cfg.to_dict().items():
        if isinstance(v, bool):
            lines.append(f"{k} = {'true' if v else 'false'}")
        elif isinstance(v, str):
            lines.append(f'{k} = "{v}"')
        elif isinstance(v, float):
            lines.append(f"{k} = {v!r}")
        else:
            lines.append(f"{k} = {v}")
    return "\n".join(lines) + "\n"


# ablation labels -> config changes
SCENARIOS: dict[str, dict] = {
    "full": {},
    "-Trans": {"no_trans": True},
    "-GNN": {"no_gnn": True},
    "Attention": {"attention_swap": True},
    "GCN": {"gcn_swap": True},
    "-drug": {"no_adv_drug": True},
    "-micro": {"no_adv_microbe": True},
    "-drug microbe": {"no_adv_drug": True, "no_adv_microbe": True},
    "close": {"adv_close": True},
    **{f"fusion:{m}": {"fusion": m} for m in FUSION_MODES},
}


def apply_scenario(cfg: TrainConfig, scenario: str) -> TrainConfig:
    try:
        changes = SCENARIOS[scenario]
    except KeyError:
        raise ConfigError(f"unknown scenario {scenario!r}; expected one of {sorted(SCENARIOS)}") from None
    return with_overrides(cfg, changes)
