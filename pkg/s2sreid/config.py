"""Configuration management for s2sreid."""

import copy
import os
from dataclasses import dataclass, field, fields
from pathlib import Path
from typing import Any, Optional

import yaml

from .data.synthetic import SyntheticSpec
from .errors import ConfigurationError, S2SError
from .evaluation.ranking import Aggregation, QueryProtocol
from .loss.direction import DirectionMode, DirectionWeights
from .loss.objective import MarginConfig, TripletForm
from .mining.miner import MiningConfig
from .nn.network import (
    PartNetwork,
    ScaleConfig,
    build_linear_network,
    build_part_network,
    init_params,
)
from .training.trainer import Objective, Schedule, TrainConfig, WeightUpdate


@dataclass
class TrainSection:
    """Optimizer and loop settings."""

    learning_rate: float = 0.01  # omega
    iterations: int = 2000  # H
    momentum: float = 0.0
    schedule: str = "constant"  # constant | inverse
    objective: str = "s2s"  # s2s | p2p
    triplet_form: str = "symmetric"  # symmetric | conventional
    weight_update: str = "batch"  # batch | unit
    snapshot_every: int = 0
    test_fraction: float = 0.5  # identities held out for evaluation
    log_every: int = 100


@dataclass
class LossSection:
    """Margins and term weights."""

    m_c: float = 0.1
    m_t: float = 1.0
    c_p: float = 0.175
    m_p: float = 0.325
    alpha: float = 0.1
    beta: float = 0.01
    lam: float = 0.15
    pooled_centers: bool = False
    frozen_centers: bool = False


@dataclass
class DirectionSection:
    """Initial direction-control weights; psi = (mu + nu) / 2."""

    mu: float = 0.6
    nu: float = 0.4
    eta: float = 0.001
    momentum: float = 0.0
    mode: str = "positive"  # positive | analytic


@dataclass
class MiningSection:
    ids_per_batch: int = 8
    samples_per_view: int = 4
    triplets_per_anchor: int = 2
    k_marginal: int = 2
    symmetric: bool = False


@dataclass
class NetworkSection:
    """Network sizes. ``builder``: part | full | linear."""

    builder: str = "part"
    global_filters: int = 8
    global_kernel: int = 3
    global_padding: int = 0
    global_pool: int = 3
    global_pool_stride: int = 1
    stripes: int = 4
    local_filters: int = 4
    local_kernel: int = 3
    local_pool: int = 3
    local_pool_stride: int = 1
    d_fc: int = 8
    linear_dim: int = 16  # output dim of the linear builder
    conv_std: float = 0.01
    fc_std: float = 0.001


@dataclass
class SyntheticSection:
    identities: int = 20
    per_view: int = 4
    shape: list[int] = field(default_factory=lambda: [1, 24, 8])
    separation: float = 10.0
    sigma: float = 0.5
    shift: float = 1.0


@dataclass
class EvalSection:
    protocol: str = "single"  # single | multi
    trials: int = 10
    all_shot: bool = False
    aggregation: str = "mean"  # mean | max


@dataclass
class RunConfig:
    """Main configuration: one section per component plus run-wide keys."""

    train: TrainSection = field(default_factory=TrainSection)
    loss: LossSection = field(default_factory=LossSection)
    direction: DirectionSection = field(default_factory=DirectionSection)
    mining: MiningSection = field(default_factory=MiningSection)
    network: NetworkSection = field(default_factory=NetworkSection)
    synthetic: SyntheticSection = field(default_factory=SyntheticSection)
    eval: EvalSection = field(default_factory=EvalSection)
    seed: int = 0
    threads: int = 1

    def margins(self) -> MarginConfig:
        s = self.loss
        return MarginConfig(m_c=s.m_c, m_t=s.m_t, c_p=s.c_p, m_p=s.m_p,
                            alpha=s.alpha, beta=s.beta, lam=s.lam)

    def direction_weights(self) -> DirectionWeights:
        d = self.direction
        return DirectionWeights.from_mu_nu(d.mu, d.nu, eta=d.eta, momentum=d.momentum,
                                           mode=_enum(DirectionMode, d.mode, "direction.mode"))

    def mining_config(self) -> MiningConfig:
        m = self.mining
        return MiningConfig(
            ids_per_batch=m.ids_per_batch, samples_per_view=m.samples_per_view,
            triplets_per_anchor=m.triplets_per_anchor, k_marginal=m.k_marginal,
            seed=self.seed, symmetric=m.symmetric,
        )

    def train_config(self) -> TrainConfig:
        t = self.train
        return TrainConfig(
            learning_rate=t.learning_rate,
            max_iterations=t.iterations,
            momentum=t.momentum,
            schedule=_enum(Schedule, t.schedule, "train.schedule"),
            margins=self.margins(),
            direction=self.direction_weights(),
            mining=self.mining_config(),
            snapshot_every=t.snapshot_every,
            seed=self.seed,
            objective=_enum(Objective, t.objective, "train.objective"),
            triplet_form=_enum(TripletForm, t.triplet_form, "train.triplet_form"),
            weight_update=_enum(WeightUpdate, t.weight_update, "train.weight_update"),
            pooled_centers=self.loss.pooled_centers,
            frozen_centers=self.loss.frozen_centers,
            threads=self.threads,
            log_every=t.log_every,
        )

    def scale_config(self, input_shape: tuple[int, ...]) -> ScaleConfig:
        """Part-network sizes for samples of ``input_shape`` (C, H, W)."""
        n = self.network
        if len(input_shape) != 3:
            raise ConfigurationError(
                f"the part network needs (C, H, W) samples, got shape {input_shape}", "input"
            )
        c, h, w = input_shape
        return ScaleConfig(
            input_channels=c, input_height=h, input_width=w,
            global_filters=n.global_filters, global_kernel=n.global_kernel,
            global_padding=n.global_padding, global_pool=n.global_pool,
            global_pool_stride=n.global_pool_stride, stripes=n.stripes,
            local_filters=n.local_filters, local_kernel=n.local_kernel,
            local_pool=n.local_pool, local_pool_stride=n.local_pool_stride, d_fc=n.d_fc,
        )

    def build_network(self, sample_shape: tuple[int, ...], seed: Optional[int] = None) -> PartNetwork:
        """Initialized network for samples of ``sample_shape``."""
        n = self.network
        if n.builder == "full":
            net = build_part_network(ScaleConfig.full())
        elif n.builder == "linear":
            net = build_linear_network(tuple(sample_shape), n.linear_dim)
        else:
            net = build_part_network(self.scale_config(tuple(sample_shape)))
        if net.input_shape != tuple(sample_shape):
            raise ConfigurationError(
                f"samples are {tuple(sample_shape)} but the network expects {net.input_shape}",
                "input",
            )
        return init_params(net, self.seed if seed is None else seed, n.conv_std, n.fc_std)

    def synthetic_spec(self, seed: Optional[int] = None) -> SyntheticSpec:
        s = self.synthetic
        return SyntheticSpec(
            identities=s.identities, per_view=s.per_view, sample_shape=tuple(s.shape),
            separation=s.separation, sigma=s.sigma, cross_view_shift=s.shift,
            seed=self.seed if seed is None else seed,
        )

    def query_protocol(self) -> QueryProtocol:
        return _enum(QueryProtocol, self.eval.protocol, "eval.protocol")

    def aggregation(self) -> Aggregation:
        return _enum(Aggregation, self.eval.aggregation, "eval.aggregation")

    def validate(self) -> None:
        """Build every component config once so their invariants run now."""
        try:
            self.train_config()
            self.synthetic_spec().validate()
            self.query_protocol()
            self.aggregation()
        except ConfigurationError:
            raise
        except S2SError as e:
            raise ConfigurationError(str(e)) from e
        if self.network.builder not in ("part", "full", "linear"):
            raise ConfigurationError(f"network.builder must be part, full or linear, "
                                     f"got {self.network.builder!r}")
        if not 0.0 <= self.train.test_fraction <= 1.0:
            raise ConfigurationError(f"train.test_fraction must be in [0, 1], "
                                     f"got {self.train.test_fraction}")
        if self.eval.trials < 1:
            raise ConfigurationError(f"eval.trials must be at least 1, got {self.eval.trials}")


SECTIONS = ("train", "loss", "direction", "mining", "network", "synthetic", "eval")
TOP_LEVEL = ("seed", "threads")


def _enum(kind: Any, value: str, key: str) -> Any:
    try:
        return kind(value)
    except ValueError:
        choices = ", ".join(m.value for m in kind)
        raise ConfigurationError(f"{key} must be one of {choices}, got {value!r}") from None


def _coerce(value: Any, default: Any, key: str) -> Any:
    if isinstance(default, bool):
        if not isinstance(value, bool):
            raise ConfigurationError(f"{key} must be true or false, got {value!r}")
        return value
    if isinstance(default, int):
        if isinstance(value, bool) or not isinstance(value, int):
            raise ConfigurationError(f"{key} must be an integer, got {value!r}")
        return value
    if isinstance(default, float):
        if isinstance(value, bool) or not isinstance(value, (int, float)):
            raise ConfigurationError(f"{key} must be a number, got {value!r}")
        return float(value)
    if isinstance(default, list):
        if not isinstance(value, list):
            raise ConfigurationError(f"{key} must be a list, got {value!r}")
        if default:
            return [_coerce(item, default[0], f"{key}[{i}]") for i, item in enumerate(value)]
        return value
    if not isinstance(value, str):
        raise ConfigurationError(f"{key} must be a string, got {value!r}")
    return value


def _apply(section: Any, data: Any, name: str) -> None:
    if not isinstance(data, dict):
        raise ConfigurationError(f"section '{name}' must be a mapping")
    known = {f.name for f in fields(section)}
    for key, value in data.items():
        if key not in known:
            raise ConfigurationError(f"unknown key '{name}.{key}'")
        setattr(section, key, _coerce(value, getattr(section, key), f"{name}.{key}"))


def config_from_dict(data: dict) -> RunConfig:
    """Overlay a parsed mapping on the defaults; unknown keys are rejected."""
    config = RunConfig()
    for key, value in data.items():
        if key in SECTIONS:
            _apply(getattr(config, key), value, key)
        elif key in TOP_LEVEL:
            setattr(config, key, _coerce(value, getattr(config, key), key))
        else:
            raise ConfigurationError(f"unknown key '{key}'")
    config.validate()
    return config


def override(config: RunConfig, key: str, value: Any) -> RunConfig:
    """
    Copy of ``config`` with one key replaced and the result re-validated.

    Args:
        config: Base configuration, left unchanged
        key: ``section.key`` or a top-level key such as ``seed``
        value: Parsed value, checked like a config-file value

    Raises:
        ConfigurationError: unknown key, wrong value type, or a violated invariant
    """
    updated = copy.deepcopy(config)
    section, _, name = key.rpartition(".")
    if section:
        if section not in SECTIONS:
            raise ConfigurationError(f"unknown key '{key}'")
        _apply(getattr(updated, section), {name: value}, section)
    elif key in TOP_LEVEL:
        setattr(updated, key, _coerce(value, getattr(updated, key), key))
    else:
        raise ConfigurationError(f"unknown key '{key}'")
    updated.validate()
    return updated


def get_config_path() -> Path:
    """Get the configuration file path."""
    xdg_config = os.environ.get("XDG_CONFIG_HOME", os.path.expanduser("~/.config"))
    return Path(xdg_config) / "s2sreid" / "config.yaml"


def load_config(config_path: Optional[Path] = None) -> RunConfig:
    """
    Load configuration from a YAML file.

    ``None`` returns the defaults. Unlike an absent default path, an
    explicitly named file must exist.

    Raises:
        ConfigurationError: missing file, YAML syntax error, unknown key,
            wrong value type, or a violated component invariant
    """
    if config_path is None:
        config = RunConfig()
        config.validate()
        return config

    if not config_path.exists():
        raise ConfigurationError(f"config file not found: {config_path}")
    try:
        with open(config_path, encoding="utf-8") as f:
            data = yaml.safe_load(f) or {}
    except yaml.YAMLError as e:
        raise ConfigurationError(f"{config_path}: {e}") from e
    if not isinstance(data, dict):
        raise ConfigurationError(f"{config_path}: top level must be a mapping")
    return config_from_dict(data)


def describe_defaults() -> str:
    """Every config key with its default, one ``section.key = value`` per line."""
    config = RunConfig()
    lines = []
    for name in SECTIONS:
        section = getattr(config, name)
        for f in fields(section):
            lines.append(f"  {name}.{f.name} = {getattr(section, f.name)}")
    for name in TOP_LEVEL:
        lines.append(f"  {name} = {getattr(config, name)}")
    return "\n".join(lines)


def save_default_config(config_path: Optional[Path] = None) -> Path:
    """Save a default configuration file."""
    if config_path is None:
        config_path = get_config_path()

    config_path.parent.mkdir(parents=True, exist_ok=True)

    default_config = """\
# s2sreid configuration
# Values shown are the defaults. CLI flags override anything set here.

seed: 0
threads: 1

train:
  learning_rate: 0.01    # omega, initial step size
  iterations: 2000       # H
  momentum: 0.0
  schedule: constant     # constant | inverse (omega / (1 + h/H))
  objective: s2s         # s2s | p2p (triplet term only)
  triplet_form: symmetric  # symmetric | conventional
  weight_update: batch   # batch | unit
  snapshot_every: 0      # 0 disables snapshots
  test_fraction: 0.5
  log_every: 100

loss:
  m_c: 0.1               # class-identity margin
  m_t: 1.0               # triplet margin
  c_p: 0.175             # pairwise margins: m_p > c_p > 0
  m_p: 0.325
  alpha: 0.1             # class-identity weight
  beta: 0.01             # regularization weight
  lam: 0.15              # pairwise weight
  pooled_centers: false
  frozen_centers: false

direction:
  mu: 0.6
  nu: 0.4
  eta: 0.001
  momentum: 0.0
  mode: positive         # positive | analytic

mining:
  ids_per_batch: 8
  samples_per_view: 4
  triplets_per_anchor: 2
  k_marginal: 2
  symmetric: false

network:
  builder: part          # part | full | linear
  d_fc: 8
  stripes: 4

synthetic:
  identities: 20
  per_view: 4
  shape: [1, 24, 8]
  separation: 10.0
  sigma: 0.5
  shift: 1.0

eval:
  protocol: single       # single | multi
  trials: 10
  all_shot: false
  aggregation: mean      # mean | max
"""

    with open(config_path, "w", encoding="utf-8") as f:
        f.write(default_config)
    return config_path
