"""This module defines the record every engine run produces."""
from dataclasses import dataclass, field
from enum import Enum
import math
from typing import Any, Optional
import numpy as np
import pandas as pd
from perclab.exception import InvalidParameter
from perclab.theory import ModelParams

#: Column order of the per-trial trajectory CSV.
CSV_COLUMNS = ['trial', 'step', 'time', 'active_total', 'active_excit',
               'active_inhib', 'newly_active']


class Engine(Enum):
    """Percolation process to simulate."""
    SYNC = 'sync'
    ASYNC = 'async'


class Termination(Enum):
    """Reason a run stopped."""
    STOPPED = 'STOPPED'
    ALL_ACTIVE = 'ALL_ACTIVE'
    ROUND_CAP = 'ROUND_CAP'
    TIME_CAP = 'TIME_CAP'
    ACTIVE_CAP = 'ACTIVE_CAP'

    @property
    def truncated(self) -> bool:
        return self in (Termination.ROUND_CAP, Termination.TIME_CAP,
                        Termination.ACTIVE_CAP)


@dataclass
class TrajectoryRecord:
    """Time series of one run.

    Position ``s-1`` of ``order``, ``times`` and ``signs`` describes the
    vertex with activation index ``s``. For the synchronous engine ``times``
    holds activation rounds and ``counts`` holds ``a_t`` per round; for the
    asynchronous engine ``times`` holds activation instants.
    """
    engine: Engine
    params: ModelParams
    order: list = field(default_factory=list)
    times: list = field(default_factory=list)
    signs: list = field(default_factory=list)
    counts: list = field(default_factory=list)
    termination: Termination = Termination.STOPPED
    diagnostics: dict = field(default_factory=dict)
    events: Optional[list] = field(default=None, repr=False)
    state: Optional[Any] = field(default=None, repr=False, compare=False)

    @property
    def truncated(self) -> bool:
        return self.termination.truncated

    @property
    def final_size(self) -> int:
        return len(self.order)

    @property
    def fully_percolated(self) -> bool:
        return self.final_size == self.params.n

    @property
    def excitatory_count(self) -> int:
        return sum(1 for sign in self.signs if sign > 0)

    @property
    def inhibitory_count(self) -> int:
        return self.final_size - self.excitatory_count

    @property
    def duration(self) -> float:
        """Rounds executed (sync) or the last activation time (async).

        :return: Length of the run.
        :rtype: float
        """
        if self.engine is Engine.SYNC:
            return float(len(self.counts) - 1)
        return float(self.times[-1]) if self.times else 0.0

    def time_to_reach(self, s: int) -> float:
        """Return the time at which the ``s``-th vertex activated.

        :param s: Number of active vertices, at least 1.
        :type s: int
        :raises InvalidParameter: s is smaller than 1.
        :return: ``t_s``, or infinity if fewer than s vertices activated.
        :rtype: float
        """
        if s < 1:
            raise InvalidParameter(f's should be at least 1, got {s}.')
        if s > len(self.times):
            return math.inf
        return float(self.times[s - 1])

    def active_after(self, time: float) -> set:
        """Return the vertices active at a given round or instant.

        :param time: Round (sync) or instant (async).
        :type time: float
        :return: Labels of the active vertices.
        :rtype: set
        """
        return {v for v, t in zip(self.order, self.times) if t <= time}

    def to_frame(self, trial: int = 0) -> pd.DataFrame:
        """Convert the record to the trajectory CSV layout.

        Synchronous runs give one row per round; asynchronous runs give one
        row for the starting set and one per later activation.

        :param trial: Trial number written in the first column,
            defaults to 0.
        :type trial: int, optional
        :return: Frame with :data:`CSV_COLUMNS`.
        :rtype: pandas.DataFrame
        """
        excit = np.cumsum(np.asarray(self.signs, dtype=np.int64) > 0)
        excit = np.concatenate([[0], excit])
        a0 = self.params.a0

        if self.engine is Engine.SYNC:
            totals = np.asarray(self.counts, dtype=np.int64)
            steps = np.arange(len(totals))
            times = steps.astype(float)
            newly = np.diff(totals, prepend=0)
        else:
            totals = np.arange(a0, self.final_size + 1, dtype=np.int64)
            steps = totals
            times = np.array([0.0] + [float(t) for t in self.times[a0:]])
            newly = np.ones(len(totals), dtype=np.int64)
            newly[0] = a0

        frame = pd.DataFrame({
            'trial': trial,
            'step': steps,
            'time': times,
            'active_total': totals,
            'active_excit': excit[totals],
            'active_inhib': totals - excit[totals],
            'newly_active': newly,
        })
        return frame[CSV_COLUMNS]
