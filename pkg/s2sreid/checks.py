"""
Gradient-check suites for every loss term and for a loss chained
through a small network.

Direct suites perturb the embeddings of random set batches; the network
suite perturbs the parameters of a random three-layer net. Random
instances whose hinges sit within ``KINK_GAP`` of their margins are
redrawn, since a central difference straddling a kink measures nothing.
"""

import logging
from dataclasses import dataclass
from enum import Enum
from typing import Callable

import numpy as np

from .errors import VerificationError
from .loss.batch import SetBatch
from .loss.direction import DirectionWeights
from .loss.objective import MarginConfig, total_loss
from .loss.terms import (
    class_identity_loss,
    conventional_triplet_loss,
    marginal_pairwise_loss,
    regularization,
    symmetric_triplet_loss,
)
from .mining.miner import MiningConfig, sample_triplets, select_marginal_pairs
from .nn import layers
from .nn.gradcheck import DEFAULT_EPS, check_gradient
from .nn.network import SequentialConfig, backward, build_sequential_network, forward, init_params

logger = logging.getLogger("s2sreid.checks")

KINK_GAP = 1e-3
DIRECT_THRESHOLD = 1e-6
NETWORK_THRESHOLD = 1e-4
# Relative-error denominator floor for the suites, in place of DEFAULT_FLOOR: components at
# the rounding level of the central difference compare absolutely.
SUITE_DENOMINATOR_FLOOR = 1e-4


class Term(Enum):
    CLASS = "class"
    TRIPLET = "triplet"
    CONVENTIONAL = "conventional"
    PAIRWISE = "pairwise"
    REGULARIZATION = "regularization"
    NETWORK = "network"

    @property
    def threshold(self) -> float:
        return NETWORK_THRESHOLD if self == Term.NETWORK else DIRECT_THRESHOLD


@dataclass(frozen=True)
class CheckResult:
    term: Term
    max_error: float
    instances: int
    threshold: float

    @property
    def passed(self) -> bool:
        return self.max_error < self.threshold


MARGINS = MarginConfig()
WEIGHTS = DirectionWeights()
MINING = MiningConfig(ids_per_batch=3, samples_per_view=2, triplets_per_anchor=2, k_marginal=2)


def _random_batch(rng: np.random.Generator, n: int = 3, m: int = 2, d: int = 4) -> SetBatch:
    return SetBatch(rng.normal(size=(n, 2, m, d)), tuple(range(n)))


def _sq(x: np.ndarray) -> np.ndarray:
    return np.einsum("...d,...d->...", x, x)


def _hinges(batch: SetBatch, triplets: list, pairs: list) -> np.ndarray:
    """Every hinge argument of the batch (their distance from zero is the kink gap)."""
    e = batch.embeddings
    values = [(_sq(e - e.mean(axis=2, keepdims=True)) - MARGINS.m_c).ravel()]
    for t in triplets:
        a = e[t.anchor.identity, t.anchor.view, t.anchor.index]
        p = e[t.positive.identity, t.positive.view, t.positive.index]
        neg = e[t.negative.identity, t.negative.view, t.negative.index]
        d_ap, d_an, d_pn = _sq(a - p), _sq(a - neg), _sq(p - neg)
        values.append(np.array([MARGINS.m_t - (WEIGHTS.mu * d_an + WEIGHTS.nu * d_pn - d_ap),
                                MARGINS.m_t - (d_an - d_ap)]))
    for pr in pairs:
        a = e[pr.a.identity, pr.a.view, pr.a.index]
        b = e[pr.b.identity, pr.b.view, pr.b.index]
        values.append(np.array([MARGINS.c_p - pr.g * (MARGINS.m_p - _sq(a - b))]))
    return np.concatenate(values)


def _instance(rng: np.random.Generator) -> tuple[SetBatch, list, list]:
    while True:
        batch = _random_batch(rng)
        triplets = sample_triplets(batch, MINING, rng)
        pairs, _ = select_marginal_pairs(batch, batch.embeddings, MINING)
        if np.min(np.abs(_hinges(batch, triplets, pairs))) > KINK_GAP:
            return batch, triplets, pairs


def _embedding_loss(term: Term, batch: SetBatch, triplets: list,
                    pairs: list) -> Callable[[np.ndarray], tuple[float, np.ndarray]]:
    def func(e: np.ndarray) -> tuple[float, np.ndarray]:
        b = batch.with_embeddings(e)
        if term == Term.CLASS:
            result = class_identity_loss(b, MARGINS.m_c)
        elif term == Term.TRIPLET:
            result = symmetric_triplet_loss(b, triplets, WEIGHTS.mu, WEIGHTS.nu, MARGINS.m_t)
        elif term == Term.CONVENTIONAL:
            result = conventional_triplet_loss(b, triplets, MARGINS.m_t)
        else:
            result = marginal_pairwise_loss(b, pairs, MARGINS.c_p, MARGINS.m_p)
        return result.loss, result.grad

    return func


NETWORK = SequentialConfig((6,), (layers.fully_connected(5), layers.relu(), layers.fully_connected(4)))
NETWORK_MINING = MiningConfig(ids_per_batch=2, samples_per_view=1, triplets_per_anchor=1,
                              k_marginal=1)


def _network_instance(rng: np.random.Generator, eps: float) -> float:
    """Total S2S loss through a random fc-relu-fc net on a batch of 4 samples."""
    template = SetBatch(np.zeros((2, 2, 1, 4)), (0, 1))
    mining = NETWORK_MINING
    while True:
        net = init_params(build_sequential_network(NETWORK), int(rng.integers(2**31)),
                          conv_std=0.5, fc_std=0.5)
        net = net.with_params(net.params + rng.normal(0.0, 0.1, size=net.param_count))
        inputs = rng.normal(size=(2, 2, 1, 6))
        triplets = sample_triplets(template, mining, rng)

        hidden = inputs.reshape(4, 6) @ net.weight("layer0_fully_connected").T \
            + net.bias("layer0_fully_connected")
        emb, _ = forward(net, inputs.reshape(4, 6))
        batch = template.with_embeddings(emb.reshape(2, 2, 1, 4))
        pairs, _ = select_marginal_pairs(batch, batch.embeddings, mining)
        gaps = np.concatenate([np.abs(hidden).ravel(), np.abs(_hinges(batch, triplets, pairs))])
        if gaps.min() > KINK_GAP:
            break

    def closure(params: np.ndarray) -> tuple[float, np.ndarray]:
        candidate = net.with_params(params)
        emb, tape = forward(candidate, inputs.reshape(4, 6))
        batch = template.with_embeddings(emb.reshape(2, 2, 1, 4))
        pairs, _ = select_marginal_pairs(batch, batch.embeddings, mining)
        report = total_loss(batch, triplets, pairs, params, MARGINS, WEIGHTS)
        grad, _ = backward(candidate, tape, report.grad_embeddings.reshape(4, 4))
        return report.total, grad + report.grad_params

    return check_gradient(closure, np.array(net.params), eps, floor=SUITE_DENOMINATOR_FLOOR)


def run_check(term: Term, instances: int = 50, eps: float = DEFAULT_EPS, seed: int = 0) -> CheckResult:
    """Max relative error of one term over ``instances`` random instances."""
    rng = np.random.default_rng(seed)
    worst = 0.0
    for _ in range(instances):
        if term == Term.NETWORK:
            error = _network_instance(rng, eps)
        elif term == Term.REGULARIZATION:
            error = check_gradient(regularization, rng.normal(size=16), eps,
                                   floor=SUITE_DENOMINATOR_FLOOR)
        else:
            batch, triplets, pairs = _instance(rng)
            func = _embedding_loss(term, batch, triplets, pairs)
            error = check_gradient(func, batch.embeddings, eps, floor=SUITE_DENOMINATOR_FLOOR)
        worst = max(worst, error)
    result = CheckResult(term, worst, instances, term.threshold)
    logger.debug("%s: max relative error %.3e over %d instances", term.value, worst, instances)
    return result


def run_checks(terms: list[Term], instances: int = 50, eps: float = DEFAULT_EPS,
               seed: int = 0) -> list[CheckResult]:
    return [run_check(t, instances, eps, seed) for t in terms]


def require_passed(results: list[CheckResult]) -> None:
    """Raise for the first failing term."""
    for result in results:
        if not result.passed:
            raise VerificationError(
                f"gradient check failed for '{result.term.value}': max relative error "
                f"{result.max_error:.3e} >= {result.threshold:g}",
                term=result.term.value,
            )
