"""This module runs the round-based process.

In every round all inactive vertices whose excitatory excess is at least k
activate together. Their signals become visible in the next round.
"""
from dataclasses import dataclass, field
import logging
from typing import Optional
import numpy as np
from perclab.exception import InvalidParameter
from perclab.realization import Realization
from perclab.realization import VertexSign
from perclab.realization import for_params
from perclab.theory import ModelParams
from perclab.trajectory import Engine
from perclab.trajectory import Termination
from perclab.trajectory import TrajectoryRecord

logger = logging.getLogger(__name__)


@dataclass
class SyncState:
    """Mutable state of a synchronous run.

    Arrays are indexed by vertex label; slot 0 is unused.
    """
    params: ModelParams
    round: int
    active: np.ndarray
    s_plus: np.ndarray
    s_minus: np.ndarray
    order: list = field(default_factory=list)
    times: list = field(default_factory=list)
    signs: list = field(default_factory=list)
    counts: list = field(default_factory=list)

    @classmethod
    def start(cls, params: ModelParams,
              realization: Realization) -> 'SyncState':
        """Activate the starting set ``1..a0`` in round 0.

        :param params: Model parameters.
        :type params: ModelParams
        :param realization: Source of signs and edges.
        :type realization: Realization
        :return: State after round 0.
        :rtype: SyncState
        """
        size = params.n + 1
        state = cls(params, 0, np.zeros(size, dtype=bool),
                    np.zeros(size, dtype=np.int64),
                    np.zeros(size, dtype=np.int64))
        state.activate(np.arange(1, params.a0 + 1), realization)
        state.counts.append(params.a0)
        return state

    @property
    def excess(self) -> np.ndarray:
        return self.s_plus - self.s_minus

    @property
    def active_count(self) -> int:
        return len(self.order)

    def candidates(self) -> np.ndarray:
        """Return inactive vertices whose excess is at least k, ascending.

        :return: Vertex labels.
        :rtype: numpy.ndarray
        """
        ready = (self.excess >= self.params.k) & ~self.active
        ready[0] = False
        return np.flatnonzero(ready)

    def activate(self, vertices: np.ndarray,
                 realization: Realization) -> None:
        """Activate vertices in the given order and deliver their signals.

        :param vertices: Labels, in activation-index order.
        :type vertices: numpy.ndarray
        :param realization: Source of signs and edges.
        :type realization: Realization
        """
        excitatory, inhibitory = [], []
        for vertex in vertices.tolist():
            index = len(self.order) + 1
            sign = realization.sign(index, vertex)
            batch = realization.out_edges(index, sign, vertex)
            self.order.append(vertex)
            self.times.append(self.round)
            self.signs.append(sign.value)
            if sign is VertexSign.EXCITATORY:
                excitatory.append(batch.targets)
            else:
                inhibitory.append(batch.targets)
        self.active[vertices] = True

        size = self.params.n + 1
        if excitatory:
            self.s_plus += np.bincount(np.concatenate(excitatory),
                                       minlength=size)
        if inhibitory:
            self.s_minus += np.bincount(np.concatenate(inhibitory),
                                        minlength=size)


def step(state: SyncState, realization: Realization) -> tuple:
    """Execute one round.

    :param state: Current state; updated in place.
    :type state: SyncState
    :param realization: Source of signs and edges.
    :type realization: Realization
    :return: The state and the number of newly active vertices.
    :rtype: tuple[SyncState, int]
    """
    candidates = state.candidates()
    state.round += 1
    if len(candidates) == 0:
        return state, 0
    state.activate(candidates, realization)
    state.counts.append(state.active_count)
    return state, len(candidates)


def run(params: ModelParams, realization: Optional[Realization] = None,
        round_cap: Optional[int] = None,
        keep_state: bool = False) -> TrajectoryRecord:
    """Run the synchronous process until it stops.

    :param params: Model parameters.
    :type params: ModelParams
    :param realization: Source of signs and edges, defaults to a lazy
        realization of ``params``.
    :type realization: Realization, optional
    :param round_cap: Maximum number of rounds, defaults to n.
    :type round_cap: int, optional
    :param keep_state: Attach the final :class:`SyncState` to the record,
        defaults to False.
    :type keep_state: bool, optional
    :raises InvalidParameter: round_cap is smaller than 1.
    :return: Record of the run.
    :rtype: TrajectoryRecord
    """
    realization = for_params(params, realization)
    if round_cap is None:
        round_cap = params.n
    if round_cap < 1:
        raise InvalidParameter('round_cap should be at least 1.')

    state = SyncState.start(params, realization)
    while True:
        if state.active_count == params.n:
            termination = Termination.ALL_ACTIVE
            break
        if state.round >= round_cap:
            if len(state.candidates()):
                termination = Termination.ROUND_CAP
            else:
                termination = Termination.STOPPED
            break
        _, newly = step(state, realization)
        if newly == 0:
            termination = Termination.STOPPED
            break

    if termination.truncated:
        logger.warning('Synchronous run hit the round cap %d with %d active.',
                       round_cap, state.active_count)
    logger.debug('Synchronous run ended (%s) after %d rounds, a*=%d.',
                 termination.value, state.round, state.active_count)
    return TrajectoryRecord(
        engine=Engine.SYNC,
        params=params,
        order=state.order,
        times=state.times,
        signs=state.signs,
        counts=state.counts,
        termination=termination,
        diagnostics={'rounds_executed': state.round},
        state=state if keep_state else None,
    )


def audit_counters(record: TrajectoryRecord, realization: Realization,
                   sample: Optional[int] = 100, seed: int = 0) -> list:
    """Recompute excess counters from scratch and compare with the run's.

    :param record: Record produced with ``keep_state=True``.
    :type record: TrajectoryRecord
    :param realization: Realization the run read.
    :type realization: Realization
    :param sample: Number of vertices to compare, defaults to 100;
        None compares all.
    :type sample: int, optional
    :param seed: Seed of the vertex sample, defaults to 0.
    :type seed: int, optional
    :raises InvalidParameter: The record carries no state.
    :return: Labels whose counters disagree; empty if the audit passes.
    :rtype: list
    """
    state = record.state
    if state is None:
        raise InvalidParameter('Audit needs a record run with keep_state.')
    n = record.params.n
    excess = np.zeros(n + 1, dtype=np.int64)
    for index, (vertex, weight) in enumerate(zip(record.order, record.signs),
                                             start=1):
        batch = realization.out_edges(index, VertexSign(weight), vertex)
        excess[batch.targets] += weight

    vertices = np.arange(1, n + 1)
    if sample is not None and sample < n:
        vertices = np.random.default_rng(seed).choice(vertices, sample,
                                                      replace=False)
    observed = state.excess
    return [int(v) for v in vertices if excess[v] != observed[v]]


def growth_bounds(state: SyncState) -> tuple:
    """Count the vertices beyond the starting set near the threshold.

    :param state: A synchronous state.
    :type state: SyncState
    :return: ``(L, U)`` where L counts vertices with exactly k excitatory
        and no inhibitory signals, and U those with at least k excitatory
        signals.
    :rtype: tuple[int, int]
    """
    k = state.params.k
    beyond = slice(state.params.a0 + 1, None)
    plus, minus = state.s_plus[beyond], state.s_minus[beyond]
    lower = int(np.count_nonzero((plus == k) & (minus == 0)))
    upper = int(np.count_nonzero(plus >= k))
    return lower, upper
