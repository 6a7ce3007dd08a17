"""This module runs seeded trials and compares them with the predictions.

Trial ``i`` of a batch uses seed ``base_seed ^ i``. Trials may run in a
process pool, but results are always reduced in trial order, so a batch is
reproducible from its base seed alone.
"""
from dataclasses import asdict, dataclass, field, replace
import logging
import math
from multiprocessing import Pool
import os
from typing import Optional, Sequence
import numpy as np
import pandas as pd
from tqdm import tqdm
from perclab import async_engine
from perclab import config
from perclab import sync_engine
from perclab.exception import InvalidParameter
from perclab.exception import OutOfRegime
from perclab.exception import RegimeError
from perclab.realization import DelayLaw
from perclab.realization import LazyRealization
from perclab.theory import ModelParams
from perclab.theory import TheoryReport
from perclab.theory import check_chaotic_inputs
from perclab.theory import compute_threshold
from perclab.theory import expected_trajectory
from perclab.theory import pair_across
from perclab.theory import plateau_table
from perclab.theory import predict_final_size
from perclab.theory import stopping_size
from perclab.theory import theory_report
from perclab.trajectory import Engine
from perclab.trajectory import TrajectoryRecord

logger = logging.getLogger(__name__)


@dataclass(frozen=True)
class RunOptions:
    """Engine settings shared by every trial of a batch."""
    delay_law: Optional[DelayLaw] = None
    round_cap: Optional[int] = None
    time_cap: float = config.ASYNC_TIME_CAP
    active_cap: Optional[int] = None
    fixed_signs: bool = False


def trial_seed(base_seed: int, trial: int) -> int:
    """Return the seed of one trial.

    :param base_seed: Seed of the batch.
    :type base_seed: int
    :param trial: Trial number, starting at 0.
    :type trial: int
    :return: ``base_seed ^ trial``.
    :rtype: int
    """
    return base_seed ^ trial


def run_one(params: ModelParams, engine: Engine,
            options: Optional[RunOptions] = None) -> TrajectoryRecord:
    """Run one trial on a fresh lazy realization of ``params``.

    :param params: Model parameters, including the trial's seed.
    :type params: ModelParams
    :param engine: Engine to run.
    :type engine: Engine
    :param options: Engine settings, defaults to :class:`RunOptions`.
    :type options: RunOptions, optional
    :return: Record of the run.
    :rtype: TrajectoryRecord
    """
    options = options or RunOptions()
    match engine:
        case Engine.SYNC:
            realization = LazyRealization(params,
                                          fixed_signs=options.fixed_signs)
            return sync_engine.run(params, realization, options.round_cap)
        case Engine.ASYNC:
            delay_law = options.delay_law or DelayLaw.exponential()
            realization = LazyRealization(params, delay_law,
                                          fixed_signs=options.fixed_signs)
            return async_engine.run(params, realization, delay_law,
                                    options.time_cap, options.active_cap)


def _run_task(task: tuple) -> TrajectoryRecord:
    return run_one(*task)


def _resolve_jobs(jobs: Optional[int], trials: int) -> int:
    if jobs is None:
        jobs = os.cpu_count() or 1
    if jobs < 1:
        raise InvalidParameter('jobs should be at least 1.')
    return min(jobs, trials)


def run_records(params: ModelParams, engine: Engine, trials: int,
                base_seed: Optional[int] = None,
                options: Optional[RunOptions] = None,
                jobs: Optional[int] = 1, progress: bool = False) -> list:
    """Run independent trials and return their records in trial order.

    :param params: Model parameters; the seed is replaced per trial.
    :type params: ModelParams
    :param engine: Engine to run.
    :type engine: Engine
    :param trials: Number of trials.
    :type trials: int
    :param base_seed: Seed of the batch, defaults to ``params.seed``.
    :type base_seed: int, optional
    :param options: Engine settings, defaults to :class:`RunOptions`.
    :type options: RunOptions, optional
    :param jobs: Worker processes; None uses every CPU, defaults to 1.
    :type jobs: int, optional
    :param progress: Show a progress bar, defaults to False.
    :type progress: bool, optional
    :raises InvalidParameter: trials is smaller than 1.
    :return: One record per trial.
    :rtype: list[TrajectoryRecord]
    """
    if trials < 1:
        raise InvalidParameter('trials should be at least 1.')
    if base_seed is None:
        base_seed = params.seed
    options = options or RunOptions()
    tasks = [(params.with_seed(trial_seed(base_seed, trial)), engine, options)
             for trial in range(trials)]
    jobs = _resolve_jobs(jobs, trials)

    bar_options = {'total': trials, 'disable': not progress,
                   'desc': f'{engine.value} trials', 'unit': 'trial'}
    if jobs == 1:
        records = [_run_task(task) for task in tqdm(tasks, **bar_options)]
    else:
        with Pool(jobs) as pool:
            records = list(tqdm(pool.imap(_run_task, tasks), **bar_options))
    for trial, record in enumerate(records):
        logger.debug('Trial %d: a*=%d (%s).', trial, record.final_size,
                     record.termination.value)
    return records


@dataclass
class TrialSummary:
    """Statistics of the final sizes of a batch of trials."""
    params: ModelParams
    engine: Engine
    trials: int
    base_seed: int
    final_sizes: list
    mean_final: float
    sd_final: float
    sd_defined: bool
    q05: float
    q50: float
    q95: float
    mean_rounds_or_time: float
    fraction_fully_percolated: float
    truncated_count: int
    theory: Optional[TheoryReport] = None

    @property
    def standard_error(self) -> float:
        if not self.sd_defined:
            return math.nan
        return self.sd_final / math.sqrt(self.trials)

    def to_dict(self) -> dict:
        """Return the summary with JSON-friendly values.

        Undefined statistics are exported as None.

        :return: Summary fields.
        :rtype: dict
        """
        summary = {}
        for name, value in asdict(self).items():
            if isinstance(value, float) and math.isnan(value):
                value = None
            summary[name] = value
        summary['engine'] = self.engine.value
        summary['theory'] = self.theory.to_dict() if self.theory else None
        return summary


def _theory_or_none(params: ModelParams) -> Optional[TheoryReport]:
    try:
        return theory_report(params)
    except (InvalidParameter, RegimeError) as e:
        logger.debug('No theory report for %s: %s', params, e)
        return None


def summarize(params: ModelParams, engine: Engine, records: Sequence,
              base_seed: Optional[int] = None) -> TrialSummary:
    """Aggregate the records of a batch.

    :param params: Model parameters of the batch.
    :type params: ModelParams
    :param engine: Engine that produced the records.
    :type engine: Engine
    :param records: Records in trial order.
    :type records: Sequence[TrajectoryRecord]
    :param base_seed: Seed of the batch, defaults to ``params.seed``.
    :type base_seed: int, optional
    :return: The summary; ``sd_final`` is NaN for a single trial.
    :rtype: TrialSummary
    """
    if not records:
        raise InvalidParameter('Nothing to summarize.')
    finals = pd.Series([record.final_size for record in records], dtype=float)
    durations = pd.Series([record.duration for record in records],
                          dtype=float)
    quantiles = finals.quantile([0.05, 0.5, 0.95])
    truncated = sum(record.truncated for record in records)
    if truncated:
        logger.warning('%d of %d trials were truncated.', truncated,
                       len(records))
    summary = TrialSummary(
        params=params,
        engine=engine,
        trials=len(records),
        base_seed=params.seed if base_seed is None else base_seed,
        final_sizes=[int(x) for x in finals],
        mean_final=float(finals.mean()),
        sd_final=float(finals.std(ddof=1)) if len(finals) > 1 else math.nan,
        sd_defined=len(finals) > 1,
        q05=float(quantiles[0.05]),
        q50=float(quantiles[0.5]),
        q95=float(quantiles[0.95]),
        mean_rounds_or_time=float(durations.mean()),
        fraction_fully_percolated=float(
            np.mean([record.fully_percolated for record in records])),
        truncated_count=int(truncated),
        theory=_theory_or_none(params),
    )
    logger.info('%s n=%d a0=%d: mean final %.1f over %d trials.',
                engine.value, params.n, params.a0, summary.mean_final,
                summary.trials)
    return summary


def run_trials(params: ModelParams, engine: Engine, trials: int,
               base_seed: Optional[int] = None,
               options: Optional[RunOptions] = None,
               jobs: Optional[int] = 1,
               progress: bool = False) -> TrialSummary:
    """Run a batch of trials and summarize it.

    :param params: Model parameters.
    :type params: ModelParams
    :param engine: Engine to run.
    :type engine: Engine
    :param trials: Number of trials.
    :type trials: int
    :param base_seed: Seed of the batch, defaults to ``params.seed``.
    :type base_seed: int, optional
    :param options: Engine settings.
    :type options: RunOptions, optional
    :param jobs: Worker processes, defaults to 1.
    :type jobs: int, optional
    :param progress: Show a progress bar, defaults to False.
    :type progress: bool, optional
    :return: The summary.
    :rtype: TrialSummary
    """
    if base_seed is None:
        base_seed = params.seed
    records = run_records(params, engine, trials, base_seed, options, jobs,
                          progress)
    return summarize(params, engine, records, base_seed)


@dataclass
class SweepPoint:
    """Result of one grid value of a sweep."""
    value: float
    summary: Optional[TrialSummary] = None
    error: Optional[str] = None

    def to_dict(self) -> dict:
        return {
            'value': self.value,
            'summary': self.summary.to_dict() if self.summary else None,
            'error': self.error,
        }


#: Parameters a sweep may vary.
SWEEPABLE = ('n', 'p', 'k', 'tau', 'gamma', 'a0')


def sweep(params: ModelParams, name: str, values: Sequence, engine: Engine,
          trials: int, base_seed: Optional[int] = None,
          options: Optional[RunOptions] = None, jobs: Optional[int] = 1,
          progress: bool = False) -> list:
    """Run a batch of trials for every value of one parameter.

    A value that fails validation or an engine error is recorded on its
    point and the sweep continues.

    :param params: Parameters held fixed.
    :type params: ModelParams
    :param name: Parameter to vary.
    :type name: str
    :param values: Monotone, non-empty grid.
    :type values: Sequence
    :param engine: Engine to run.
    :type engine: Engine
    :param trials: Trials per grid value.
    :type trials: int
    :param base_seed: Seed of every batch, defaults to ``params.seed``.
    :type base_seed: int, optional
    :param options: Engine settings.
    :type options: RunOptions, optional
    :param jobs: Worker processes, defaults to 1.
    :type jobs: int, optional
    :param progress: Show progress bars, defaults to False.
    :type progress: bool, optional
    :raises InvalidParameter: Unknown parameter, empty or non-monotone grid.
    :return: One point per value, in grid order.
    :rtype: list[SweepPoint]
    """
    if name not in SWEEPABLE:
        raise InvalidParameter(f'Cannot sweep over {name!r}.')
    values = list(values)
    if not values:
        raise InvalidParameter('Sweep grid is empty.')
    steps = np.diff(np.asarray(values, dtype=float))
    if not (np.all(steps >= 0) or np.all(steps <= 0)):
        raise InvalidParameter('Sweep grid should be monotone.')

    points = []
    for value in values:
        try:
            point_params = replace(params, **{name: value})
            summary = run_trials(point_params, engine, trials, base_seed,
                                 options, jobs, progress)
            points.append(SweepPoint(value, summary))
        except (InvalidParameter, RegimeError) as e:
            logger.warning('Sweep point %s=%s failed: %s', name, value, e)
            points.append(SweepPoint(value, error=str(e)))
    return points


@dataclass
class ConcentrationReport:
    """Outcome of checking simulated rounds against the expected trajectory.

    ``per_round`` lists, for every checked round, the expected size and the
    fraction of trials inside the band.
    """
    params: ModelParams
    band: float
    delta: float
    trials: int
    checks: int
    passes: int
    per_round: list = field(default_factory=list)
    out_of_regime: bool = False

    @property
    def pass_fraction(self) -> float:
        return self.passes / self.checks if self.checks else math.nan

    @property
    def flags(self) -> list:
        return ['OUT_OF_REGIME'] if self.out_of_regime else []

    def to_dict(self) -> dict:
        report = asdict(self)
        report['pass_fraction'] = self.pass_fraction
        report['flags'] = self.flags
        return report


def concentration_regime(params: ModelParams,
                         eps: float = config.DEFAULT_EPS) -> bool:
    """Check ``a0 >= max((1+eps) a_c, (log n)^(2+eps))``.

    :param params: Model parameters.
    :type params: ModelParams
    :param eps: Slack, defaults to 0.1.
    :type eps: float, optional
    :return: True if the hypothesis holds.
    :rtype: bool
    """
    try:
        a_c = compute_threshold(params)
    except (InvalidParameter, RegimeError):
        return False
    floor = max((1.0 + eps) * a_c, math.log(params.n) ** (2.0 + eps))
    return params.a0 >= floor


def validate_concentration(params: ModelParams, trials: int, band: float,
                           delta: float = 0.05,
                           base_seed: Optional[int] = None,
                           eps: float = config.DEFAULT_EPS,
                           jobs: Optional[int] = 1) -> ConcentrationReport:
    """Check synchronous round sizes against the expected trajectory.

    Every round ``t`` with expected size at most ``delta * n`` is checked in
    every trial. A run that stopped earlier keeps its final size.

    :param params: Model parameters.
    :type params: ModelParams
    :param trials: Number of trials.
    :type trials: int
    :param band: Relative tolerance around the expected size.
    :type band: float
    :param delta: Rounds with expected size above ``delta * n`` are not
        checked, defaults to 0.05.
    :type delta: float, optional
    :param base_seed: Seed of the batch, defaults to ``params.seed``.
    :type base_seed: int, optional
    :param eps: Slack of the regime hypothesis, defaults to 0.1.
    :type eps: float, optional
    :param jobs: Worker processes, defaults to 1.
    :type jobs: int, optional
    :raises InvalidParameter: band is negative.
    :return: The report; OUT_OF_REGIME is flagged but the check still runs.
    :rtype: ConcentrationReport
    """
    if band < 0:
        raise InvalidParameter('band should be non-negative.')
    out_of_regime = not concentration_regime(params, eps)
    if out_of_regime:
        logger.warning('a0=%d is outside the concentration regime.',
                       params.a0)
    if params.p * delta * params.n > config.CONCENTRATION_PA_LIMIT:
        logger.warning('Rounds up to p*a_t = %.3g are checked; the expected '
                       'recursion overshoots once p*a_t nears one.',
                       params.p * delta * params.n)

    expected = expected_trajectory(params, cap=delta * params.n)
    rounds = [t for t, value in enumerate(expected)
              if value <= delta * params.n]
    records = run_records(params, Engine.SYNC, trials, base_seed, jobs=jobs)

    per_round, checks, passes = [], 0, 0
    for t in rounds:
        expected_size = expected[t]
        inside = 0
        for record in records:
            observed = record.counts[min(t, len(record.counts) - 1)]
            if ((1.0 - band) * expected_size <= observed
                    <= (1.0 + band) * expected_size):
                inside += 1
        per_round.append({'round': t, 'expected': expected_size,
                          'fraction': inside / len(records)})
        checks += len(records)
        passes += inside

    report = ConcentrationReport(params, band, delta, trials, checks, passes,
                                 per_round, out_of_regime)
    logger.info('Concentration: %d of %d checks inside the band.', passes,
                checks)
    return report


@dataclass
class ChaosConfirmation:
    """Simulated finals of two starting factors on adjacent plateaus."""
    c1: float
    c2: float
    a0_1: int
    a0_2: int
    predicted_1: float
    predicted_2: float
    mean_1: float
    mean_2: float
    se_1: float
    se_2: float
    ell_1: int = 0
    ell_2: int = 0

    @property
    def separation(self) -> float:
        """Difference of the means in combined standard errors.

        :return: ``(mean_1 - mean_2) / sqrt(se_1^2 + se_2^2)``.
        :rtype: float
        """
        combined = math.hypot(self.se_1, self.se_2)
        if combined == 0.0:
            return math.inf if self.mean_1 != self.mean_2 else 0.0
        return (self.mean_1 - self.mean_2) / combined

    @property
    def ordered_opposite(self) -> bool:
        return self.c1 < self.c2 and self.mean_1 > self.mean_2

    @property
    def confirmed(self) -> bool:
        """Whether the reversal is separated by enough standard errors.

        :return: True if ordered opposite with separation at least
            :data:`config.CHAOS_SEPARATION`.
        :rtype: bool
        """
        return (self.ordered_opposite
                and self.separation >= config.CHAOS_SEPARATION)

    def to_dict(self) -> dict:
        report = asdict(self)
        report['separation'] = self.separation
        report['ordered_opposite'] = self.ordered_opposite
        report['confirmed'] = self.confirmed
        return report


def confirm_chaos(params: ModelParams, c1: float, c2: float, trials: int,
                  base_seed: Optional[int] = None,
                  delta: float = config.DEFAULT_DELTA,
                  jobs: Optional[int] = 1) -> ChaosConfirmation:
    """Simulate the synchronous process at two starting factors.

    :param params: Model parameters; ``a0`` is replaced by ``c * a_c``.
    :type params: ModelParams
    :param c1: Smaller starting factor.
    :type c1: float
    :param c2: Larger starting factor.
    :type c2: float
    :param trials: Trials per factor.
    :type trials: int
    :param base_seed: Seed of both batches, defaults to ``params.seed``.
    :type base_seed: int, optional
    :param delta: Cut of the stopping-size prediction, defaults to 0.1.
    :type delta: float, optional
    :param jobs: Worker processes, defaults to 1.
    :type jobs: int, optional
    :return: Means, standard errors and predictions of both factors.
    :rtype: ChaosConfirmation
    """
    a_c = compute_threshold(params)
    summaries, predictions, starts, ells = [], [], [], []
    for c in (c1, c2):
        a0 = min(params.n, int(math.floor(c * a_c)))
        starts.append(a0)
        ell, predicted = stopping_size(params, c * a_c, delta)
        ells.append(ell)
        predictions.append(predicted)
        summaries.append(run_trials(replace(params, a0=a0), Engine.SYNC,
                                    trials, base_seed, jobs=jobs))
    confirmation = ChaosConfirmation(
        c1, c2, starts[0], starts[1], predictions[0], predictions[1],
        summaries[0].mean_final, summaries[1].mean_final,
        summaries[0].standard_error, summaries[1].standard_error,
        ells[0], ells[1],
    )
    logger.info('Chaos confirmation: means %.1f and %.1f, separation %.2f SE.',
                confirmation.mean_1, confirmation.mean_2,
                confirmation.separation)
    return confirmation


def scan_chaos_boundaries(params: ModelParams, c_min: float, c_max: float,
                          trials: int, base_seed: Optional[int] = None,
                          delta: float = config.DEFAULT_DELTA,
                          boundaries: int = config.CHAOS_BOUNDARIES,
                          jobs: Optional[int] = 1,
                          progress: bool = False) -> list:
    """Simulate both sides of the plateau boundaries a run can resolve.

    A boundary qualifies when the predicted stopping size drops across it
    and both plateaus have ``ell >= 1``; at ``ell = 0`` the prediction is
    the starting size itself. Among those, the ``boundaries`` whose left
    plateau stops smallest relative to ``1/p`` are simulated.

    :param params: Model parameters; ``a0`` is ignored.
    :type params: ModelParams
    :param c_min: Smallest starting factor.
    :type c_min: float
    :param c_max: Largest starting factor.
    :type c_max: float
    :param trials: Trials per factor.
    :type trials: int
    :param base_seed: Seed of every batch, defaults to ``params.seed``.
    :type base_seed: int, optional
    :param delta: Cut as a fraction of n, defaults to 0.1.
    :type delta: float, optional
    :param boundaries: Number of boundaries to simulate at most,
        defaults to :data:`config.CHAOS_BOUNDARIES`.
    :type boundaries: int, optional
    :param jobs: Worker processes, defaults to 1.
    :type jobs: int, optional
    :param progress: Show a progress bar over boundaries, defaults to False.
    :type progress: bool, optional
    :raises WrongRegime: tau is not above 1/(1+gamma).
    :raises OutOfRegime: No boundary qualifies.
    :return: Confirmations ordered by decreasing separation.
    :rtype: list[ChaosConfirmation]
    """
    check_chaotic_inputs(params, c_min, c_max)
    table = plateau_table(params, c_min, c_max, delta)
    candidates = [(left, right) for left, right in zip(table, table[1:])
                  if right.ell >= 1 and left.final_hi > right.final_lo]
    if not candidates:
        raise OutOfRegime(
            f'No boundary with ell >= 1 reverses the prediction in '
            f'[{c_min}, {c_max}].'
        )
    candidates.sort(key=lambda pair: pair[0].final_hi)
    confirmations = []
    for left, right in tqdm(candidates[:boundaries], desc='boundaries',
                            unit='boundary', disable=not progress):
        c1, c2 = pair_across(params, left, right, delta=delta)
        confirmations.append(confirm_chaos(params, c1, c2, trials, base_seed,
                                           delta, jobs))
    confirmations.sort(key=lambda confirmation: confirmation.separation,
                       reverse=True)
    best = confirmations[0]
    logger.info('Best boundary: c1=%.4g c2=%.4g, separation %.2f SE.',
                best.c1, best.c2, best.separation)
    return confirmations


def explosion_times(params: ModelParams, low: int, high: int, trials: int,
                    base_seed: Optional[int] = None,
                    delay_law: Optional[DelayLaw] = None,
                    jobs: Optional[int] = 1) -> list:
    """Measure the asynchronous time between ``low`` and ``high`` actives.

    Runs stop as soon as ``high`` vertices are active.

    :param params: Model parameters.
    :type params: ModelParams
    :param low: Smaller active count.
    :type low: int
    :param high: Larger active count, at most n.
    :type high: int
    :param trials: Number of trials.
    :type trials: int
    :param base_seed: Seed of the batch, defaults to ``params.seed``.
    :type base_seed: int, optional
    :param delay_law: Delay law, defaults to EXPONENTIAL.
    :type delay_law: DelayLaw, optional
    :param jobs: Worker processes, defaults to 1.
    :type jobs: int, optional
    :raises InvalidParameter: Counts are not ordered within ``1..n``.
    :return: ``t_high - t_low`` per trial; infinity if ``high`` was missed.
    :rtype: list[float]
    """
    if not 1 <= low <= high <= params.n:
        raise InvalidParameter('Need 1 <= low <= high <= n.')
    options = RunOptions(delay_law=delay_law, active_cap=high,
                         time_cap=math.inf)
    records = run_records(params, Engine.ASYNC, trials, base_seed, options,
                          jobs)
    return [async_engine.time_between(record, low, high)
            for record in records]


def time_to_half_final(params: ModelParams, trials: int,
                       base_seed: Optional[int] = None,
                       jobs: Optional[int] = 1) -> list:
    """Measure the asynchronous time to reach half the predicted final size.

    :param params: Model parameters with ``a0`` above the threshold.
    :type params: ModelParams
    :param trials: Number of trials.
    :type trials: int
    :param base_seed: Seed of the batch, defaults to ``params.seed``.
    :type base_seed: int, optional
    :param jobs: Worker processes, defaults to 1.
    :type jobs: int, optional
    :return: Time per trial; infinity if the half size was never reached.
    :rtype: list[float]
    """
    _, predicted = predict_final_size(params)
    half = max(1, min(params.n, int(math.ceil(predicted / 2.0))))
    options = RunOptions(active_cap=half)
    records = run_records(params, Engine.ASYNC, trials, base_seed, options,
                          jobs)
    return [record.time_to_reach(half) for record in records]
