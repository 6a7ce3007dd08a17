"""This module models the excess of a vertex in the end phase as a walk.

Each incoming signal moves the walk up with probability beta and down
otherwise; the vertex activates if the walk ever reaches level k.
"""
from dataclasses import dataclass
import logging
import math
import numpy as np
from perclab import config
from perclab.exception import InvalidParameter

logger = logging.getLogger(__name__)

_RETURN_PROBABILITY = 1e-9
_CHUNK = 100_000


@dataclass(frozen=True)
class WalkSpec:
    """A walk started at 0 with up-step probability ``beta``.

    :param beta: Probability of an up-step.
    :type beta: float
    :param k: Level to hit.
    :type k: int
    :param step_cap: Maximum number of steps per walk,
        defaults to :data:`config.WALK_STEP_CAP`.
    :type step_cap: int, optional
    """
    beta: float
    k: int
    step_cap: int = config.WALK_STEP_CAP

    def __post_init__(self) -> None:
        _check(self.beta, self.k)
        if self.step_cap < 1:
            raise InvalidParameter('step_cap should be at least 1.')

    @property
    def barrier(self) -> float:
        """Depth at which a walk is treated as lost.

        From below ``-barrier`` the chance of ever reaching k is under
        1e-9. Walks with ``beta >= 1/2`` have no barrier.

        :return: Barrier depth, or infinity.
        :rtype: float
        """
        if self.beta >= 0.5:
            return math.inf
        if self.beta == 0.0:
            return 1
        ratio = self.beta / (1.0 - self.beta)
        levels = math.ceil(math.log(_RETURN_PROBABILITY) / math.log(ratio))
        return max(1, levels - self.k)


def _check(beta: float, k: int) -> None:
    if not 0.0 <= beta <= 1.0:
        raise InvalidParameter(f'beta should be in [0, 1], got {beta}.')
    if k < 1:
        raise InvalidParameter(f'k should be at least 1, got {k}.')


def hitting_probability(beta: float, k: int) -> float:
    """Return the probability that the walk ever reaches level k.

    :param beta: Probability of an up-step.
    :type beta: float
    :param k: Level to hit.
    :type k: int
    :return: ``min(1, (beta/(1-beta))^k)``.
    :rtype: float
    """
    _check(beta, k)
    if beta == 0.0:
        return 0.0
    if beta >= 0.5:
        return 1.0
    return min(1.0, (beta / (1.0 - beta)) ** k)


def _hits(spec: WalkSpec, rng: np.random.Generator, walks: int) -> int:
    """Run ``walks`` walks in lockstep and count those reaching k."""
    position = np.zeros(walks, dtype=np.int64)
    hits = 0
    for _ in range(spec.step_cap):
        up = rng.random(len(position)) < spec.beta
        position += 2 * up.astype(np.int64) - 1
        reached = position >= spec.k
        hits += int(np.count_nonzero(reached))
        position = position[~reached & (position > -spec.barrier)]
        if len(position) == 0:
            break
    return hits


def simulate_hit(spec: WalkSpec, seed: int, trials: int) -> float:
    """Estimate the hitting probability by simulation.

    Walks are split in chunks, each with its own child of
    ``SeedSequence(seed)``.

    :param spec: Walk to simulate.
    :type spec: WalkSpec
    :param seed: Seed of the simulation.
    :type seed: int
    :param trials: Number of walks.
    :type trials: int
    :raises InvalidParameter: trials is smaller than 1.
    :return: Fraction of walks reaching k within the step cap.
    :rtype: float
    """
    if trials < 1:
        raise InvalidParameter('trials should be at least 1.')
    chunks = math.ceil(trials / _CHUNK)
    children = np.random.SeedSequence(seed).spawn(chunks)
    hits = 0
    for number, child in enumerate(children):
        walks = min(_CHUNK, trials - number * _CHUNK)
        hits += _hits(spec, np.random.default_rng(child), walks)
    logger.debug('beta=%.4g k=%d: %d of %d walks hit.', spec.beta, spec.k,
                 hits, trials)
    return hits / trials


def drift_check(beta: float, length: int = 10_000, walks: int = 10_000,
                seed: int = 0) -> np.ndarray:
    """Sample the normalised end point ``Z_length / length`` of many walks.

    :param beta: Probability of an up-step.
    :type beta: float
    :param length: Steps per walk, defaults to 10000.
    :type length: int, optional
    :param walks: Number of walks, defaults to 10000.
    :type walks: int, optional
    :param seed: Seed, defaults to 0.
    :type seed: int, optional
    :return: One value per walk; concentrates at ``2*beta - 1``.
    :rtype: numpy.ndarray
    """
    _check(beta, 1)
    rng = np.random.default_rng(seed)
    ups = rng.binomial(length, beta, size=walks)
    return (2 * ups - length) / length
