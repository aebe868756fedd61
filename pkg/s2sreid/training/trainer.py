"""S2S gradient descent."""

import logging
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field, replace
from enum import Enum
from pathlib import Path
from typing import Optional

import numpy as np

from ..data.dataset import Dataset
from ..errors import NumericalError, UsageError
from ..loss.batch import SetBatch
from ..loss.direction import DirectionWeights, active_triplets, update_direction_weights
from ..loss.objective import LossReport, MarginConfig, TripletForm, total_loss
from ..mining.miner import MiningConfig, build_minibatch, mine
from ..nn.network import PartNetwork, Tape, backward, forward
from ..nn.serialize import save_model
from .history import IterationRecord, TrainHistory

logger = logging.getLogger("s2sreid.train")


class Schedule(Enum):
    CONSTANT = "constant"  # tau_h = omega
    INVERSE = "inverse"  # tau_h = omega / (1 + h/H)


class Objective(Enum):
    S2S = "s2s"
    P2P = "p2p"  # triplet term only


class WeightUpdate(Enum):
    BATCH = "batch"  # one phi update per mini-batch
    UNIT = "unit"  # experimental: one phi update per active triplet, in order


@dataclass(frozen=True)
class TrainConfig:
    """Hyperparameters of one training run."""

    learning_rate: float = 0.01
    max_iterations: int = 2000
    momentum: float = 0.0
    schedule: Schedule = Schedule.CONSTANT
    margins: MarginConfig = field(default_factory=MarginConfig)
    direction: DirectionWeights = field(default_factory=DirectionWeights)
    mining: MiningConfig = field(default_factory=MiningConfig)
    snapshot_every: int = 0
    seed: int = 0
    objective: Objective = Objective.S2S
    triplet_form: TripletForm = TripletForm.SYMMETRIC
    weight_update: WeightUpdate = WeightUpdate.BATCH
    pooled_centers: bool = False
    frozen_centers: bool = False
    threads: int = 1
    log_every: int = 100

    def __post_init__(self) -> None:
        if self.learning_rate < 0:
            raise UsageError(f"learning rate must be non-negative, got {self.learning_rate}")
        if self.max_iterations < 1:
            raise UsageError(f"max_iterations must be at least 1, got {self.max_iterations}")
        if not 0.0 <= self.momentum < 1.0:
            raise UsageError(f"momentum must be in [0, 1), got {self.momentum}")
        if self.snapshot_every < 0:
            raise UsageError(f"snapshot_every must be non-negative, got {self.snapshot_every}")
        if self.threads < 1:
            raise UsageError(f"threads must be at least 1, got {self.threads}")

    @property
    def effective_margins(self) -> MarginConfig:
        """Margins with the set terms switched off for the P2P objective."""
        if self.objective == Objective.P2P:
            return replace(self.margins, alpha=0.0, lam=0.0)
        return self.margins

    def step_size(self, iteration: int) -> float:
        """tau_h for 1-based iteration ``h``."""
        if self.schedule == Schedule.INVERSE:
            return self.learning_rate / (1.0 + (iteration - 1) / self.max_iterations)
        return self.learning_rate


@dataclass
class OptimizerState:
    velocity: Optional[np.ndarray] = None
    iteration: int = 0


def step(
    net: PartNetwork,
    grads: np.ndarray,
    state: OptimizerState,
    lr: float,
    momentum: float = 0.0,
) -> tuple[PartNetwork, OptimizerState]:
    """
    One parameter update.

    Without momentum ``params - lr*g``; with momentum ``v = m*v - lr*g`` and
    ``params + v``.

    Raises:
        UsageError: gradient length differs from the parameter count
        NumericalError: non-finite gradient (index of the first one)
    """
    grads = np.asarray(grads, dtype=np.float64)
    if grads.shape != net.params.shape:
        raise UsageError(f"gradient has {grads.size} entries, network has {net.param_count}")
    bad = np.flatnonzero(~np.isfinite(grads))
    if bad.size:
        raise NumericalError("non-finite gradient", iteration=state.iteration + 1,
                             term="params", index=int(bad[0]))

    if momentum == 0.0:
        params = net.params - lr * grads
        velocity = state.velocity
    else:
        previous = state.velocity if state.velocity is not None else np.zeros_like(grads)
        velocity = momentum * previous - lr * grads
        params = net.params + velocity
    return net.with_params(params), OptimizerState(velocity, state.iteration + 1)


def _embed_sets(net: PartNetwork, batch: SetBatch, threads: int) -> tuple[np.ndarray, list[Tape]]:
    """Forward every identity's 2*M samples as one chunk, in identity order."""
    n, _, m = batch.embeddings.shape[:3]
    chunks = [batch.embeddings[i].reshape((2 * m,) + net.input_shape) for i in range(n)]
    if threads > 1:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            results = list(pool.map(lambda x: forward(net, x), chunks))
    else:
        results = [forward(net, x) for x in chunks]
    embeddings = np.stack([emb.reshape(2, m, -1) for emb, _ in results])
    return embeddings, [tape for _, tape in results]


def _backward_sets(net: PartNetwork, tapes: list[Tape], grad: np.ndarray, threads: int) -> np.ndarray:
    """Back-propagate per identity and sum parameter gradients in identity order."""
    n, _, m, d = grad.shape
    jobs = [(tapes[i], grad[i].reshape(2 * m, d)) for i in range(n)]
    if threads > 1:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            parts = list(pool.map(lambda job: backward(net, job[0], job[1])[0], jobs))
    else:
        parts = [backward(net, tape, g)[0] for tape, g in jobs]
    total = np.zeros(net.param_count)
    for part in parts:
        total += part
    return total


def _check_finite(report: LossReport, iteration: int) -> None:
    for term, value in (("total", report.total), *report.terms().items()):
        if not np.isfinite(value):
            raise NumericalError("non-finite loss", iteration=iteration, term=term)
    bad = np.flatnonzero(~np.isfinite(report.grad_embeddings.ravel()))
    if bad.size:
        raise NumericalError("non-finite embedding gradient", iteration=iteration,
                             term="embeddings", index=int(bad[0]))


def _update_weights(weights: DirectionWeights, batch: SetBatch, triplets: list, m_t: float,
                    mode: WeightUpdate) -> DirectionWeights:
    if weights.eta == 0.0:
        return weights
    if mode == WeightUpdate.BATCH:
        return update_direction_weights(weights, *active_triplets(batch, triplets, weights, m_t))
    for unit in triplets:
        d_ap, d_an, d_pn = active_triplets(batch, [unit], weights, m_t)
        if d_ap.size:
            weights = update_direction_weights(weights, d_ap, d_an, d_pn)
    return weights


def train(
    dataset: Dataset,
    net: PartNetwork,
    config: TrainConfig,
    out_dir: Optional[Path] = None,
) -> tuple[PartNetwork, TrainHistory]:
    """
    Run ``max_iterations`` iterations of S2S gradient descent.

    Each iteration draws a set batch, embeds it, mines triplets and
    marginal pairs, updates the direction weights, evaluates the
    objective, back-propagates, and steps the parameters. Per-identity
    work may run on ``config.threads`` workers; gradients are always
    summed in identity order, so results do not depend on the thread count.

    Args:
        dataset: Training data (both views per identity)
        net: Initialized network
        config: Hyperparameters
        out_dir: Where snapshots go; ``None`` disables snapshots

    Returns:
        Tuple of (trained network, history)

    Raises:
        DataError: the dataset cannot fill a batch
        NumericalError: a loss or gradient became non-finite
    """
    dataset.validate()
    rng = np.random.default_rng(config.seed)
    margins = config.effective_margins
    weights = config.direction
    state = OptimizerState()
    history = TrainHistory()

    logger.info(
        "training %d parameters for %d iterations (lr=%g, objective=%s, %d threads)",
        net.param_count, config.max_iterations, config.learning_rate,
        config.objective.value, config.threads,
    )
    for h in range(1, config.max_iterations + 1):
        batch = build_minibatch(dataset, config.mining, rng)
        embeddings, tapes = _embed_sets(net, batch, config.threads)
        emb_batch = batch.with_embeddings(embeddings)
        mined = mine(emb_batch, embeddings, config.mining, rng)

        if config.triplet_form == TripletForm.SYMMETRIC:
            weights = _update_weights(weights, emb_batch, mined.triplets, margins.m_t,
                                      config.weight_update)

        report = total_loss(
            emb_batch, mined.triplets, mined.pairs, net.params, margins, weights,
            triplet_form=config.triplet_form,
            pooled_centers=config.pooled_centers,
            frozen_centers=config.frozen_centers,
        )
        _check_finite(report, h)

        grads = _backward_sets(net, tapes, report.grad_embeddings, config.threads)
        grads += report.grad_params
        lr = config.step_size(h)
        net, state = step(net, grads, state, lr, config.momentum)

        record = IterationRecord(
            iteration=h, total=report.total, l_c=report.l_c, l_t=report.l_t, l_p=report.l_p,
            reg=report.reg, mu=weights.mu, nu=weights.nu,
            active_t=report.active["triplet"], active_p=report.active["pair"],
            step=lr, timestamp=time.time(),
        )
        history.append(record)
        logger.debug("iter %d total=%.6f", h, report.total)
        if config.log_every and (h % config.log_every == 0 or h == config.max_iterations):
            logger.info(
                "iter %5d  total %.4f  L_C %.4f  L_T %.4f  L_P %.4f  mu %.4f  nu %.4f  "
                "active t=%d p=%d",
                h, report.total, report.l_c, report.l_t, report.l_p, weights.mu, weights.nu,
                record.active_t, record.active_p,
            )

        if out_dir is not None and config.snapshot_every and h % config.snapshot_every == 0:
            path = save_model(net, Path(out_dir) / f"snapshot-{h:06d}.s2sm")
            logger.info("snapshot %s", path)

    return net, history
