"""This module runs the event-driven process with random edge delays.

Each activated vertex sends one signal per out-edge, arriving after the
edge's delay. The arrivals of one sender are sorted once and merged with all
other senders through a heap keyed by ``(time, target, source_index)``.
Arrivals sharing time and target are applied together, then the target
activates if its excess has reached k.
"""
from dataclasses import dataclass, field
from enum import Enum
import heapq
import logging
import math
from typing import Optional
import numpy as np
import pandas as pd
from perclab import config
from perclab.exception import InvalidParameter
from perclab.realization import DelayKind
from perclab.realization import DelayLaw
from perclab.realization import Realization
from perclab.realization import VertexSign
from perclab.realization import for_params
from perclab.theory import ModelParams
from perclab.trajectory import Engine
from perclab.trajectory import Termination
from perclab.trajectory import TrajectoryRecord

logger = logging.getLogger(__name__)

#: Column order of the event-log CSV.
EVENT_COLUMNS = ['event_index', 'time', 'target', 'polarity', 'source_index',
                 'caused_activation']


class Polarity(Enum):
    """Effect of a signal on the excess of its target."""
    PLUS = 'PLUS'
    MINUS = 'MINUS'


@dataclass(frozen=True)
class SignalEvent:
    """One signal in flight."""
    arrival_time: float
    target: int
    polarity: Polarity
    source_index: int


@dataclass
class AsyncState:
    """Mutable state of an asynchronous run.

    ``pending`` maps a sender's activation index to its remaining arrivals
    ``(times, targets, weight)``; ``heap`` holds the next arrival of every
    sender.
    """
    params: ModelParams
    clock: float = 0.0
    heap: list = field(default_factory=list)
    pending: dict = field(default_factory=dict)
    s_plus: list = field(default_factory=list)
    s_minus: list = field(default_factory=list)
    active: Optional[np.ndarray] = None
    order: list = field(default_factory=list)
    times: list = field(default_factory=list)
    signs: list = field(default_factory=list)

    def __post_init__(self) -> None:
        size = self.params.n + 1
        if not self.s_plus:
            self.s_plus = [0] * size
            self.s_minus = [0] * size
        if self.active is None:
            self.active = np.zeros(size, dtype=bool)

    @property
    def active_count(self) -> int:
        return len(self.order)

    def next_event(self) -> Optional[SignalEvent]:
        """Return the earliest pending signal without consuming it.

        :return: The event, or None if nothing is in flight.
        :rtype: Optional[SignalEvent]
        """
        if not self.heap:
            return None
        time, target, source, _ = self.heap[0]
        weight = self.pending[source][2]
        polarity = Polarity.PLUS if weight > 0 else Polarity.MINUS
        return SignalEvent(time, target, polarity, source)


class _Run:
    """One asynchronous run; keeps the hot loop on local attributes."""

    def __init__(self, params: ModelParams, realization: Realization,
                 delay_law: Optional[DelayLaw], event_log: bool) -> None:
        self.params = params
        self.realization = realization
        self.delay_law = delay_law
        self.event_log = event_log
        self.state = AsyncState(params)
        self.events = [] if event_log else None
        self.prefiltered = 0

    def activate(self, vertex: int, time: float) -> None:
        state = self.state
        index = len(state.order) + 1
        sign = self.realization.sign(index, vertex)
        batch = self.realization.out_edges(index, sign, vertex,
                                           self.delay_law)
        state.active[vertex] = True
        state.order.append(vertex)
        state.times.append(time)
        state.signs.append(sign.value)

        targets, delays = batch.targets, batch.delays
        if not self.event_log and len(targets):
            keep = ~state.active[targets]
            self.prefiltered += len(targets) - int(keep.sum())
            targets, delays = targets[keep], delays[keep]
        if len(targets) == 0:
            return
        arrivals = time + delays
        perm = np.lexsort((targets, arrivals))
        arrivals, targets = arrivals[perm].tolist(), targets[perm].tolist()
        state.pending[index] = (arrivals, targets, sign.value)
        heapq.heappush(state.heap, (arrivals[0], targets[0], index, 0))

    def start(self) -> None:
        a0 = self.params.a0
        self.state.active[1:a0 + 1] = True
        for vertex in range(1, a0 + 1):
            self.activate(vertex, 0.0)

    def loop(self, time_cap: float, active_cap: int) -> tuple:
        state = self.state
        heap, pending = state.heap, state.pending
        s_plus, s_minus, active = state.s_plus, state.s_minus, state.active
        order, times = state.order, state.times
        events = self.events
        n, k = self.params.n, self.params.k
        processed = discarded = tied = 0

        if len(order) == n:
            return Termination.ALL_ACTIVE, processed, discarded, tied
        if len(order) >= active_cap:
            return Termination.ACTIVE_CAP, processed, discarded, tied

        termination = Termination.STOPPED
        while heap:
            time, target = heap[0][0], heap[0][1]
            if time > time_cap:
                termination = Termination.TIME_CAP
                break
            assert time >= state.clock, 'event queue went back in time'
            state.clock = time

            plus = minus = 0
            while heap and heap[0][0] == time and heap[0][1] == target:
                _, _, source, pos = heap[0]
                arrivals, targets, weight = pending[source]
                if weight > 0:
                    plus += 1
                else:
                    minus += 1
                if events is not None:
                    events.append([len(events) + 1, time, target,
                                   'PLUS' if weight > 0 else 'MINUS',
                                   source, 0])
                pos += 1
                if pos < len(arrivals):
                    heapq.heapreplace(
                        heap, (arrivals[pos], targets[pos], source, pos))
                else:
                    heapq.heappop(heap)
                    del pending[source]
            processed += plus + minus

            if active[target]:
                discarded += plus + minus
                continue
            s_plus[target] += plus
            s_minus[target] += minus
            if s_plus[target] - s_minus[target] >= k:
                if times[-1] == time:
                    tied += 1
                self.activate(target, time)
                if events is not None:
                    events[-1][5] = 1
                if len(order) == n:
                    termination = Termination.ALL_ACTIVE
                    break
                if len(order) >= active_cap:
                    termination = Termination.ACTIVE_CAP
                    break
        return termination, processed, discarded, tied


def run(params: ModelParams, realization: Optional[Realization] = None,
        delay_law: Optional[DelayLaw] = None,
        time_cap: float = config.ASYNC_TIME_CAP,
        active_cap: Optional[int] = None, event_log: bool = False,
        keep_state: bool = False) -> TrajectoryRecord:
    """Run the asynchronous process until it stops or a cap is reached.

    :param params: Model parameters.
    :type params: ModelParams
    :param realization: Source of signs and edges, defaults to a lazy
        realization of ``params``.
    :type realization: Realization, optional
    :param delay_law: Delay law; defaults to the realization's law, or to
        EXPONENTIAL when no realization is given.
    :type delay_law: DelayLaw, optional
    :param time_cap: Signals arriving later are not processed,
        defaults to :data:`config.ASYNC_TIME_CAP`.
    :type time_cap: float, optional
    :param active_cap: Stop once this many vertices are active,
        defaults to n.
    :type active_cap: int, optional
    :param event_log: Record every processed signal, defaults to False.
        Signals to vertices that are already active are then kept in flight
        instead of being dropped at sending time.
    :type event_log: bool, optional
    :param keep_state: Attach the final :class:`AsyncState` to the record,
        defaults to False.
    :type keep_state: bool, optional
    :raises InvalidParameter: A cap is not positive.
    :return: Record of the run.
    :rtype: TrajectoryRecord
    """
    if realization is None and delay_law is None:
        delay_law = DelayLaw.exponential()
    realization = for_params(params, realization, delay_law)
    if delay_law is None:
        delay_law = realization.delay_law
    if active_cap is None:
        active_cap = params.n
    if not time_cap > 0 or active_cap < 1:
        raise InvalidParameter('Caps should be positive.')

    engine_run = _Run(params, realization, delay_law, event_log)
    engine_run.start()
    termination, processed, discarded, tied = engine_run.loop(time_cap,
                                                              active_cap)
    state = engine_run.state
    if termination.truncated:
        logger.warning('Asynchronous run hit %s at t=%.4g with %d active.',
                       termination.value, state.clock, state.active_count)
    assert not (tied and delay_law.kind is DelayKind.EXPONENTIAL), \
        f'{tied} activations tied under exponential delays'
    logger.debug('Asynchronous run ended (%s) at t=%.4g, a*=%d.',
                 termination.value, state.clock, state.active_count)
    return TrajectoryRecord(
        engine=Engine.ASYNC,
        params=params,
        order=state.order,
        times=state.times,
        signs=state.signs,
        termination=termination,
        diagnostics={
            'events_processed': processed,
            'discarded': discarded,
            'prefiltered': engine_run.prefiltered,
            'tied_activations': tied,
            'clock': state.clock,
            'delay_law': delay_law.kind.value,
        },
        events=engine_run.events,
        state=state if keep_state else None,
    )


def time_to_reach(record: TrajectoryRecord, s: int) -> float:
    """Return the activation time of the ``s``-th vertex.

    :param record: Record of an asynchronous run.
    :type record: TrajectoryRecord
    :param s: Number of active vertices, at least 1.
    :type s: int
    :return: ``t_s``, or ``math.inf`` if fewer than s vertices activated.
    :rtype: float
    """
    return record.time_to_reach(s)


def time_between(record: TrajectoryRecord, low: int, high: int) -> float:
    """Return ``t_high - t_low``, or infinity if ``high`` was not reached.

    :param record: Record of an asynchronous run.
    :type record: TrajectoryRecord
    :param low: Smaller active count.
    :type low: int
    :param high: Larger active count.
    :type high: int
    :return: Elapsed time.
    :rtype: float
    """
    end = record.time_to_reach(high)
    if math.isinf(end):
        return math.inf
    return end - record.time_to_reach(low)


def event_frame(record: TrajectoryRecord) -> pd.DataFrame:
    """Return the event log of a run made with ``event_log=True``.

    :param record: Record of an asynchronous run.
    :type record: TrajectoryRecord
    :raises InvalidParameter: The run kept no event log.
    :return: Frame with :data:`EVENT_COLUMNS`.
    :rtype: pandas.DataFrame
    """
    if record.events is None:
        raise InvalidParameter('Run was made without event_log.')
    return pd.DataFrame(record.events, columns=EVENT_COLUMNS)


def audit_activations(record: TrajectoryRecord, realization: Realization,
                      delay_law: Optional[DelayLaw] = None) -> list:
    """Replay every signal and check each activation time.

    For every vertex outside the starting set, the first instant at which
    its replayed excess reaches k must be its recorded activation time. When
    the run was not truncated, no inactive vertex may reach k.

    :param record: Record of an asynchronous run.
    :type record: TrajectoryRecord
    :param realization: Realization the run read.
    :type realization: Realization
    :param delay_law: Delay law of the run, defaults to the law in the
        record's diagnostics.
    :type delay_law: DelayLaw, optional
    :return: Labels whose replay disagrees; empty if the audit passes.
    :rtype: list
    """
    params = record.params
    if delay_law is None:
        kind = record.diagnostics.get('delay_law', DelayKind.UNIT.value)
        if kind == DelayKind.INJECTED.value:
            delay_law = realization.delay_law
        else:
            delay_law = DelayLaw.from_name(kind)

    targets, arrivals, weights = [], [], []
    for index, (vertex, time, weight) in enumerate(
            zip(record.order, record.times, record.signs), start=1):
        batch = realization.out_edges(index, VertexSign(weight), vertex,
                                      delay_law)
        targets.append(batch.targets)
        arrivals.append(time + batch.delays)
        weights.append(np.full(len(batch), weight, dtype=np.int64))
    if not targets:
        return []
    signals = pd.DataFrame({
        'target': np.concatenate(targets),
        'time': np.concatenate(arrivals),
        'weight': np.concatenate(weights),
    })

    excess = signals.groupby(['target', 'time'])['weight'].sum()
    excess = excess.groupby(level='target').cumsum()
    crossed = excess[excess >= params.k].reset_index()
    first_crossing = crossed.groupby('target')['time'].min()

    mismatches = []
    a0 = params.a0
    for vertex, time in zip(record.order[a0:], record.times[a0:]):
        if first_crossing.get(vertex) != time:
            mismatches.append(vertex)
    if not record.truncated:
        activated = set(record.order)
        mismatches.extend(int(v) for v in first_crossing.index
                          if v not in activated)
    return mismatches
