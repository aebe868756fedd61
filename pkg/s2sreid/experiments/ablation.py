"""
Direction-control ablation and parameter sweeps at desk scale.

Trains the same network under several (mu, nu, eta) / objective settings,
or under each value of one swept config key, over a list of seeds and
compares Top-1 and mAP on the held-out identities.
"""

import logging
from dataclasses import dataclass, replace
from pathlib import Path
from typing import Any, Optional, Sequence, Union

import numpy as np
import yaml
from rich.table import Table

from ..config import RunConfig, override
from ..data.dataset import Dataset
from ..data.split import split_protocol
from ..errors import UsageError
from ..evaluation.ranking import evaluate
from ..loss.direction import DirectionWeights
from ..training.trainer import Objective, train

logger = logging.getLogger("s2sreid.ablation")


@dataclass(frozen=True)
class Setting:
    """One column of the comparison."""

    name: str
    mu: float
    nu: float
    eta: float
    objective: Objective = Objective.S2S


CONVENTIONAL = Setting("mu=1.0 nu=0.0 eta=0", 1.0, 0.0, 0.0)
SYMMETRIC = Setting("mu=0.6 nu=0.4 eta=0.001", 0.6, 0.4, 0.001)
P2P = Setting("p2p", 0.6, 0.4, 0.001, Objective.P2P)

DEFAULT_SETTINGS = (CONVENTIONAL, SYMMETRIC)


@dataclass(frozen=True)
class AblationRow:
    setting: str
    seed: int
    top1: float
    map: float


@dataclass(frozen=True)
class Sweep:
    """One config key and the values it takes, in order."""

    key: str
    values: tuple[Any, ...]

    @classmethod
    def parse(cls, text: str) -> "Sweep":
        """
        Parse ``section.key=v1,v2,...``; each value is read as a YAML scalar.

        Raises:
            UsageError: missing ``=``, an empty key or value, or unreadable YAML
        """
        key, sep, raw = text.partition("=")
        items = [item.strip() for item in raw.split(",")]
        if not sep or not key.strip() or not all(items):
            raise UsageError(f"sweep must look like section.key=v1,v2,..., got {text!r}")
        values = []
        for item in items:
            try:
                values.append(yaml.safe_load(item))
            except yaml.YAMLError as e:
                raise UsageError(f"sweep value {item!r} is not a scalar: {e}") from e
        return cls(key.strip(), tuple(values))

    def label(self, value: Any) -> str:
        return f"{self.key}={value}"


def run_setting(dataset: Dataset, config: RunConfig, setting: Setting, seed: int) -> AblationRow:
    """Split, train and evaluate one (setting, seed) cell."""
    split = split_protocol(dataset, 1.0 - config.train.test_fraction, seed)
    train_config = config.train_config()
    direction = DirectionWeights.from_mu_nu(
        setting.mu, setting.nu, eta=setting.eta,
        momentum=train_config.direction.momentum, mode=train_config.direction.mode,
    )
    train_config = replace(
        train_config,
        direction=direction,
        objective=setting.objective,
        seed=seed,
        mining=replace(train_config.mining, seed=seed),
    )
    net = config.build_network(dataset.sample_shape, seed)
    net, _ = train(split.train, net, train_config)
    result = evaluate(split.probe, split.gallery, net, config.query_protocol(),
                      trials=config.eval.trials, seed=seed, all_shot=config.eval.all_shot,
                      aggregation=config.aggregation())
    row = AblationRow(setting.name, seed, result.cmc.top(1), result.map)
    logger.info("%s seed %d: top-1 %.4f  mAP %.4f", setting.name, seed, row.top1, row.map)
    return row


def run_ablation(
    dataset: Dataset,
    config: RunConfig,
    seeds: Sequence[int],
    settings: Sequence[Setting] = DEFAULT_SETTINGS,
) -> list[AblationRow]:
    """Every setting over every seed, setting-major."""
    return [run_setting(dataset, config, s, seed) for s in settings for seed in seeds]


def config_setting(config: RunConfig, name: str) -> Setting:
    """The direction weights and objective a config trains with, as a setting."""
    d = config.direction
    return Setting(name, d.mu, d.nu, d.eta, config.train_config().objective)


def run_sweep(
    dataset: Dataset,
    config: RunConfig,
    sweep: Sweep,
    seeds: Sequence[int],
) -> list[AblationRow]:
    """
    Train and evaluate once per swept value and seed, value-major.

    Every value is applied to a copy of ``config`` and validated before
    any training starts.

    Raises:
        ConfigurationError: unknown key or a value the config rejects
    """
    configs = [override(config, sweep.key, value) for value in sweep.values]
    rows = []
    for value, swept in zip(sweep.values, configs):
        setting = config_setting(swept, sweep.label(value))
        rows += [run_setting(dataset, swept, setting, seed) for seed in seeds]
    return rows


def summarize(rows: Sequence[AblationRow]) -> dict[str, tuple[float, float]]:
    """Mean (top-1, mAP) per setting, in first-seen order."""
    groups: dict[str, list[AblationRow]] = {}
    for row in rows:
        groups.setdefault(row.setting, []).append(row)
    return {
        name: (float(np.mean([r.top1 for r in group])), float(np.mean([r.map for r in group])))
        for name, group in groups.items()
    }


def write_csv(rows: Sequence[AblationRow], path: Union[str, Path]) -> Path:
    """``setting,seed,top1,map``."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    lines = ["setting,seed,top1,map"]
    lines += [f"{r.setting},{r.seed},{r.top1:.4f},{r.map:.4f}" for r in rows]
    path.write_text("\n".join(lines) + "\n", encoding="utf-8")
    return path


def comparison_table(rows: Sequence[AblationRow], title: Optional[str] = None) -> Table:
    table = Table(title=title or "Direction-control ablation")
    table.add_column("setting")
    table.add_column("seeds", justify="right")
    table.add_column("mean Top-1", justify="right")
    table.add_column("mean mAP", justify="right")
    seeds: dict[str, int] = {}
    for row in rows:
        seeds[row.setting] = seeds.get(row.setting, 0) + 1
    for name, (top1, mean_ap) in summarize(rows).items():
        table.add_row(name, str(seeds[name]), f"{100 * top1:.2f}", f"{100 * mean_ap:.2f}")
    return table
