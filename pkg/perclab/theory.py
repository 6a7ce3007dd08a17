"""This module computes closed-form predictions for percolation with inhibition.

Every function here is pure: it reads an immutable :class:`ModelParams` and
returns numbers, so it may be called from any number of workers at once.
"""
from dataclasses import asdict, dataclass, field, replace
from enum import Enum
import logging
import math
import sys
from typing import Optional
import numpy as np
from perclab import config
from perclab.exception import DegenerateBias
from perclab.exception import InhibitionOnly
from perclab.exception import InvalidParameter
from perclab.exception import InvalidProbability
from perclab.exception import InvalidThreshold
from perclab.exception import NoEscape
from perclab.exception import OutOfRegime
from perclab.exception import RegimeError
from perclab.exception import Subcritical
from perclab.exception import TargetUnreachable
from perclab.exception import WrongRegime

logger = logging.getLogger(__name__)

_LOG_FLOAT_MAX = math.log(sys.float_info.max)

# Largest k whose factorial converts to a float.
_EXACT_FACTORIAL_K = 170


def _as_int(name: str, value) -> int:
    """Convert an integral value to int, rejecting fractions and booleans.

    :param name: Parameter name used in the error message.
    :type name: str
    :param value: Value to convert.
    :type value: int or float
    :raises InvalidParameter: Value is not integral.
    :return: Value as int.
    :rtype: int
    """
    if isinstance(value, bool):
        raise InvalidParameter(f'{name} should be an integer, got {value!r}.')
    try:
        as_float = float(value)
    except (TypeError, ValueError):
        raise InvalidParameter(f'{name} should be an integer, got {value!r}.')
    if not math.isfinite(as_float) or as_float != int(as_float):
        raise InvalidParameter(f'{name} should be an integer, got {value!r}.')
    return int(value)


class Regime(Enum):
    """Outcome class predicted for a parameter tuple."""
    SUBCRITICAL = 'SUBCRITICAL'
    PERCOLATES = 'PERCOLATES'
    NORMALIZES = 'NORMALIZES'
    BORDER = 'BORDER'


@dataclass(frozen=True)
class ModelParams:
    """The full parameter tuple of the process.

    :param n: Number of vertices.
    :type n: int
    :param p: Edge probability of an excitatory origin.
    :type p: float
    :param k: Activation threshold on the excitatory excess.
    :type k: int
    :param tau: Probability that a vertex is inhibitory.
    :type tau: float
    :param gamma: Multiplier of the edge probability of an inhibitory origin,
        defaults to 1.0.
    :type gamma: float, optional
    :param a0: Size of the starting set (vertices ``1..a0``), defaults to 0.
    :type a0: int, optional
    :param seed: 64-bit reproducibility seed, defaults to 0.
    :type seed: int, optional
    """
    n: int
    p: float
    k: int
    tau: float
    gamma: float = 1.0
    a0: int = 0
    seed: int = 0

    def __post_init__(self) -> None:
        """Validate and normalise the parameter types."""
        n = _as_int('n', self.n)
        k = _as_int('k', self.k)
        a0 = _as_int('a0', self.a0)
        seed = _as_int('seed', self.seed)
        p, tau, gamma = float(self.p), float(self.tau), float(self.gamma)

        if n < 1:
            raise InvalidParameter('n should be a positive integer.')
        if k < 1:
            raise InvalidParameter('k should be at least 1.')
        if not 0.0 <= p <= 1.0:
            raise InvalidProbability(f'p should be in [0, 1], got {p}.')
        if not 0.0 <= tau <= 1.0:
            raise InvalidParameter(f'tau should be in [0, 1], got {tau}.')
        if gamma <= 0.0:
            raise InvalidParameter(f'gamma should be positive, got {gamma}.')
        if gamma * p > 1.0 + 1e-12:
            raise InvalidProbability(
                f'gamma * p should be at most 1, got {gamma * p}.'
            )
        if not 0 <= a0 <= n:
            raise InvalidParameter(f'a0 should be in [0, n], got {a0}.')
        if not 0 <= seed < config.SEED_LIMIT:
            raise InvalidParameter('seed should be in [0, 2**64).')

        object.__setattr__(self, 'n', n)
        object.__setattr__(self, 'k', k)
        object.__setattr__(self, 'a0', a0)
        object.__setattr__(self, 'seed', seed)
        object.__setattr__(self, 'p', p)
        object.__setattr__(self, 'tau', tau)
        object.__setattr__(self, 'gamma', gamma)

    @property
    def inhibitory_p(self) -> float:
        """Edge probability of an inhibitory origin, capped at one.

        :return: ``min(1, gamma * p)``.
        :rtype: float
        """
        return min(1.0, self.gamma * self.p)

    @property
    def mixed_p(self) -> float:
        """Edge probability of an origin whose sign is not yet known.

        :return: ``(1 - tau) * p + tau * gamma * p``.
        :rtype: float
        """
        return (1.0 - self.tau) * self.p + self.tau * self.inhibitory_p

    @property
    def critical_tau(self) -> float:
        """Inhibition level that separates percolation from normalization.

        :return: ``1 / (1 + gamma)``.
        :rtype: float
        """
        return 1.0 / (1.0 + self.gamma)

    @property
    def in_janson_regime(self) -> bool:
        """Whether ``1/n << p << n^(-1/k)`` holds with the configured slack.

        :return: True if ``p*n >= JANSON_LOWER`` and
            ``p*n^(1/k) <= JANSON_UPPER``.
        :rtype: bool
        """
        return (self.p * self.n >= config.JANSON_LOWER
                and self.p * self.n ** (1.0 / self.k) <= config.JANSON_UPPER)

    def with_seed(self, seed: int) -> 'ModelParams':
        """Return a copy with another seed.

        :param seed: New seed.
        :type seed: int
        :return: Parameters with the seed replaced.
        :rtype: ModelParams
        """
        return replace(self, seed=seed)

    def to_dict(self) -> dict:
        """Return the parameters as a plain dictionary.

        :return: Field names mapped to values.
        :rtype: dict
        """
        return asdict(self)


@dataclass
class TheoryReport:
    """All closed-form predictions for one parameter tuple."""
    a_c: float
    lambda_: float
    beta: float
    traj: list = field(default_factory=list)
    ell: Optional[int] = None
    predicted_rounds: Optional[float] = None
    predicted_final: Optional[float] = None
    regime: Regime = Regime.SUBCRITICAL
    mixed_p: float = 0.0
    in_janson_regime: bool = False

    def to_dict(self) -> dict:
        """Return the report with JSON-friendly values.

        :return: Report fields; ``lambda_`` is exported as ``lambda``.
        :rtype: dict
        """
        report = asdict(self)
        report['lambda'] = report.pop('lambda_')
        report['regime'] = self.regime.value
        return report


def _check_threshold_inputs(params: ModelParams) -> None:
    """Validate the inputs shared by the threshold and Lambda.

    :param params: Model parameters.
    :type params: ModelParams
    :raises InvalidThreshold: k is smaller than 2.
    :raises InhibitionOnly: tau equals 1.
    :raises OutOfRegime: p is zero.
    """
    if params.k < 2:
        raise InvalidThreshold(f'k should be at least 2, got {params.k}.')
    if params.tau >= 1.0:
        raise InhibitionOnly('Threshold is undefined when tau = 1.')
    if params.p <= 0.0:
        raise OutOfRegime('Threshold is undefined when p = 0.')


def _log_power_term(params: ModelParams) -> float:
    """Return ``log((1-tau)^k n p^k)``."""
    return (params.k * math.log1p(-params.tau) + math.log(params.n)
            + params.k * math.log(params.p))


def _growth_coefficient(params: ModelParams) -> float:
    """Return ``(1-tau)^k n p^k / k!``, the factor of the expected recursion."""
    if params.tau >= 1.0 or params.p <= 0.0:
        return 0.0
    if params.k <= _EXACT_FACTORIAL_K:
        return ((1.0 - params.tau) ** params.k * params.n
                * params.p ** params.k / math.factorial(params.k))
    return math.exp(_log_power_term(params) - math.lgamma(params.k + 1))


def compute_lambda(params: ModelParams) -> float:
    """Compute the normalization constant Lambda.

    Lambda is the positive fixed point of
    ``x = (1-tau)^k n p^k x^k / (k-1)!``.

    :param params: Model parameters.
    :type params: ModelParams
    :raises InvalidThreshold: k is smaller than 2.
    :raises InhibitionOnly: tau equals 1.
    :return: Lambda.
    :rtype: float
    """
    _check_threshold_inputs(params)
    k = params.k
    denominator = (1.0 - params.tau) ** k * params.n * params.p ** k
    if k <= _EXACT_FACTORIAL_K and 0.0 < denominator < math.inf:
        return (math.factorial(k - 1) / denominator) ** (1.0 / (k - 1))
    return math.exp((math.lgamma(k) - _log_power_term(params)) / (k - 1))


def compute_threshold(params: ModelParams) -> float:
    """Compute the percolation threshold a_c.

    The threshold does not depend on gamma or on the starting set.

    :param params: Model parameters.
    :type params: ModelParams
    :raises InvalidThreshold: k is smaller than 2.
    :raises InhibitionOnly: tau equals 1.
    :return: Threshold ``(1 - 1/k) * Lambda``.
    :rtype: float
    """
    return (1.0 - 1.0 / params.k) * compute_lambda(params)


def compute_beta(tau: float, gamma: float) -> float:
    """Compute the probability that a late incoming signal is excitatory.

    :param tau: Probability that a vertex is inhibitory.
    :type tau: float
    :param gamma: Inhibitory edge-probability multiplier.
    :type gamma: float
    :raises DegenerateBias: tau = 1 and gamma = 0 at the same time.
    :return: ``(1-tau) / (1 - tau + gamma*tau)``.
    :rtype: float
    """
    denominator = 1.0 - tau + gamma * tau
    if denominator == 0.0:
        raise DegenerateBias('Bias is 0/0 for tau = 1 and gamma = 0.')
    return (1.0 - tau) / denominator


def _growth(coefficient: float, current: float, k: int) -> float:
    """Return ``coefficient * current^k``, or infinity if it overflows."""
    if current <= 0.0 or coefficient <= 0.0:
        return 0.0
    log_power = k * math.log(current)
    if log_power < _LOG_FLOAT_MAX:
        return coefficient * current ** k
    log_growth = math.log(coefficient) + log_power
    if log_growth < _LOG_FLOAT_MAX:
        return math.exp(log_growth)
    return math.inf


def _iterate(start: float, coefficient: float, k: int, cap: float,
             max_steps: int) -> list:
    """Iterate ``x -> start + coefficient * x^k``.

    The value exceeding ``cap`` is kept as the last element; it is infinite
    when it does not fit a float.
    """
    values = [float(start)]
    current = float(start)
    for _ in range(max_steps):
        if current > cap or math.isinf(current):
            break
        current = start + _growth(coefficient, current, k)
        values.append(current)
    return values


def expected_trajectory(params: ModelParams,
                        max_steps: int = config.TRAJECTORY_MAX_STEPS,
                        cap: Optional[float] = None) -> list:
    """Compute the expected number of active vertices per synchronous round.

    :param params: Model parameters.
    :type params: ModelParams
    :param max_steps: Number of recursion steps at most,
        defaults to :data:`config.TRAJECTORY_MAX_STEPS`.
    :type max_steps: int, optional
    :param cap: Iteration stops after the first value above ``cap``,
        defaults to ``TRAJECTORY_CAP_FACTOR * n``.
    :type cap: float, optional
    :return: ``[a_0, a_1, ...]`` with ``a_0 = a0``.
    :rtype: list
    """
    if cap is None:
        cap = config.TRAJECTORY_CAP_FACTOR * params.n
    return _iterate(params.a0, _growth_coefficient(params), params.k,
                    cap, max_steps)


def _ell_of(trajectory: list, cut: float) -> int:
    """Return the largest index whose value is at most ``cut``.

    :raises NoEscape: The trajectory never exceeds ``cut``.
    """
    if trajectory[0] > cut:
        return 0
    if trajectory[-1] <= cut:
        raise NoEscape(
            f'Expected trajectory stalls at {trajectory[-1]:.6g} '
            f'below the cut {cut:.6g}.'
        )
    return int(np.searchsorted(trajectory, cut, side='right')) - 1


def compute_ell(params: ModelParams, delta: float = config.DEFAULT_DELTA,
                max_steps: int = config.TRAJECTORY_MAX_STEPS) -> int:
    """Find the last round whose expected size is at most ``delta * n``.

    :param params: Model parameters.
    :type params: ModelParams
    :param delta: Cut as a fraction of n, defaults to 0.1.
    :type delta: float, optional
    :param max_steps: Step budget, defaults to
        :data:`config.TRAJECTORY_MAX_STEPS`.
    :type max_steps: int, optional
    :raises InvalidParameter: delta is not in (0, 1).
    :raises NoEscape: Trajectory stays below the cut within the budget.
    :return: The index ell.
    :rtype: int
    """
    if not 0.0 < delta < 1.0:
        raise InvalidParameter(f'delta should be in (0, 1), got {delta}.')
    cut = delta * params.n
    trajectory = expected_trajectory(params, max_steps, cap=cut)
    return _ell_of(trajectory, cut)


def predict_rounds(params: ModelParams) -> float:
    """Predict the number of rounds until almost percolation.

    Only the leading term is returned; compare modulo an additive constant
    (see :data:`config.ROUNDS_ALLOWANCE`).

    :param params: Model parameters.
    :type params: ModelParams
    :raises Subcritical: a0 is not above the threshold.
    :raises OutOfRegime: ``n*p`` is at most one.
    :return: ``max(0, log_k(log_{a0/a_c}(n p)))``.
    :rtype: float
    """
    a_c = compute_threshold(params)
    if params.a0 <= a_c:
        raise Subcritical(
            f'a0 = {params.a0} is not above the threshold {a_c:.6g}.'
        )
    expected_degree = params.n * params.p
    if expected_degree <= 1.0:
        raise OutOfRegime(f'n*p = {expected_degree:.6g} should exceed 1.')
    inner = math.log(expected_degree) / math.log(params.a0 / a_c)
    if inner <= 0.0:
        raise OutOfRegime('log_{a0/a_c}(np) should be positive.')
    # A start with a0/a_c above np is already past the growth phase.
    return max(0.0, math.log(inner) / math.log(params.k))


def predict_final_size(params: ModelParams,
                       eps: float = config.DEFAULT_EPS) -> tuple:
    """Predict the final number of active vertices of the delayed process.

    :param params: Model parameters.
    :type params: ModelParams
    :param eps: Required margin above the threshold, defaults to 0.1.
    :type eps: float, optional
    :return: Regime and predicted size. For SUBCRITICAL the size is the
        threshold (the scale of an O(a_c) outcome), for BORDER it is n and
        carries no claim.
    :rtype: tuple[Regime, float]
    """
    a_c = compute_threshold(params)
    if params.a0 < (1.0 + eps) * a_c:
        return Regime.SUBCRITICAL, a_c
    if math.isclose(params.tau, params.critical_tau, rel_tol=1e-12):
        return Regime.BORDER, float(params.n)
    if params.tau < params.critical_tau:
        return Regime.PERCOLATES, float(params.n)
    ratio = (1.0 - params.tau) / (params.gamma * params.tau)
    return Regime.NORMALIZES, params.n * ratio ** params.k


def stopping_size(params: ModelParams, start: float,
                  delta: float = config.DEFAULT_DELTA) -> tuple:
    """Return ``(ell, a_ell)`` for a trajectory started at a real value.

    :param params: Model parameters; ``a0`` is ignored.
    :type params: ModelParams
    :param start: Real starting value of the expected trajectory.
    :type start: float
    :param delta: Cut as a fraction of n, defaults to 0.1.
    :type delta: float, optional
    :raises NoEscape: Trajectory stays below the cut.
    :return: Index ell and the expected size at ell.
    :rtype: tuple[int, float]
    """
    cut = delta * params.n
    trajectory = _iterate(start, _growth_coefficient(params), params.k,
                          cut, config.TRAJECTORY_MAX_STEPS)
    ell = _ell_of(trajectory, cut)
    return ell, trajectory[ell]


@dataclass(frozen=True)
class Plateau:
    """Range of starting factors sharing the same index ell."""
    ell: int
    c_lo: float
    c_hi: float
    final_lo: float
    final_hi: float

    def to_dict(self) -> dict:
        """Return the plateau as a dictionary.

        :return: Plateau fields.
        :rtype: dict
        """
        return asdict(self)


def check_chaotic_inputs(params: ModelParams, c_min: float,
                         c_max: float) -> None:
    """Validate the inputs of a scan over starting factors.

    :param params: Model parameters.
    :type params: ModelParams
    :param c_min: Smallest starting factor.
    :type c_min: float
    :param c_max: Largest starting factor.
    :type c_max: float
    :raises WrongRegime: tau is not above 1/(1+gamma).
    :raises OutOfRegime: c_min is below 1 + eps.
    :raises InvalidParameter: c_max is not above c_min.
    """
    if not params.tau > params.critical_tau or math.isclose(
            params.tau, params.critical_tau, rel_tol=1e-12):
        raise WrongRegime(
            f'tau = {params.tau} should exceed 1/(1+gamma) = '
            f'{params.critical_tau:.6g}.'
        )
    if c_min < 1.0 + config.DEFAULT_EPS:
        raise OutOfRegime(
            f'c_min should be at least 1+eps = {1.0 + config.DEFAULT_EPS}, '
            f'got {c_min}.'
        )
    if c_max <= c_min:
        raise InvalidParameter('c_max should exceed c_min.')


def plateau_table(params: ModelParams, c_min: float, c_max: float,
                  delta: float = config.DEFAULT_DELTA,
                  grid_points: int = config.CHAOS_GRID_POINTS) -> list:
    """Tabulate the plateaus of ``c -> a_ell`` over ``[c_min, c_max]``.

    A coarse geometric grid locates changes of ell; each change is refined by
    bisection, so plateaus narrower than the grid spacing are still found.

    :param params: Model parameters.
    :type params: ModelParams
    :param c_min: Smallest starting factor (multiple of a_c).
    :type c_min: float
    :param c_max: Largest starting factor.
    :type c_max: float
    :param delta: Cut as a fraction of n, defaults to 0.1.
    :type delta: float, optional
    :param grid_points: Size of the coarse grid, defaults to
        :data:`config.CHAOS_GRID_POINTS`.
    :type grid_points: int, optional
    :return: Plateaus ordered by increasing c.
    :rtype: list[Plateau]
    """
    a_c = compute_threshold(params)

    def ell_at(c: float) -> int:
        return stopping_size(params, c * a_c, delta)[0]

    def final_at(c: float) -> float:
        return stopping_size(params, c * a_c, delta)[1]

    grid = np.geomspace(c_min, c_max, grid_points)
    plateaus = []
    current_lo = float(grid[0])
    current_ell = ell_at(current_lo)
    previous = current_lo

    def close(ell: int, lo: float, hi: float) -> None:
        plateaus.append(Plateau(ell, lo, hi, final_at(lo), final_at(hi)))

    for c in grid[1:]:
        c = float(c)
        ell = ell_at(c)
        while ell != current_ell:
            lo, hi = previous, c
            for _ in range(config.BISECTION_STEPS):
                mid = 0.5 * (lo + hi)
                if mid <= lo or mid >= hi:
                    break
                if ell_at(mid) == current_ell:
                    lo = mid
                else:
                    hi = mid
            close(current_ell, current_lo, lo)
            current_lo, current_ell, previous = hi, ell_at(hi), hi
        previous = c
    close(current_ell, current_lo, float(grid[-1]))
    return plateaus


def chaotic_pairs(params: ModelParams, c_min: float, c_max: float,
                  delta: float = config.DEFAULT_DELTA) -> list:
    """List pairs ``c1 < c2`` whose predicted finals are in reverse order.

    Each pair straddles the boundary between two adjacent plateaus.

    :param params: Model parameters.
    :type params: ModelParams
    :param c_min: Smallest starting factor.
    :type c_min: float
    :param c_max: Largest starting factor.
    :type c_max: float
    :param delta: Cut as a fraction of n, defaults to 0.1.
    :type delta: float, optional
    :raises WrongRegime: tau is not above 1/(1+gamma).
    :return: Tuples ``(c1, c2, final1, final2)`` with ``final1 > final2``.
    :rtype: list[tuple]
    """
    check_chaotic_inputs(params, c_min, c_max)
    table = plateau_table(params, c_min, c_max, delta)
    pairs = []
    for left, right in zip(table, table[1:]):
        if left.final_hi > right.final_lo:
            pairs.append((left.c_hi, right.c_lo, left.final_hi,
                          right.final_lo))
    return pairs


def _factor_on_plateau(params: ModelParams, plateau: Plateau, target: float,
                       delta: float) -> float:
    """Bisect inside one plateau for the factor whose stopping size is
    closest to ``target``; the stopping size increases with c there."""
    a_c = compute_threshold(params)
    tolerance = config.CHAOS_TOLERANCE
    lo, hi = plateau.c_lo, plateau.c_hi
    if target <= plateau.final_lo:
        return lo
    if target >= plateau.final_hi:
        return hi
    mid = lo
    for _ in range(config.BISECTION_STEPS):
        mid = 0.5 * (lo + hi)
        value = stopping_size(params, mid * a_c, delta)[1]
        if abs(value - target) <= tolerance * target * 0.5:
            break
        if value < target:
            lo = mid
        else:
            hi = mid
    return mid


def pair_across(params: ModelParams, left: Plateau, right: Plateau,
                margin: float = 0.1,
                delta: float = config.DEFAULT_DELTA) -> tuple:
    """Pick one factor on each of two adjacent plateaus.

    The smaller factor predicts ``(1-margin)`` times the largest stopping
    size of ``left``, the larger one ``(1+margin)`` times the smallest
    stopping size of ``right``.

    :param params: Model parameters.
    :type params: ModelParams
    :param left: Plateau below the boundary.
    :type left: Plateau
    :param right: Plateau above the boundary.
    :type right: Plateau
    :param margin: Relative distance from the boundary values,
        defaults to 0.1.
    :type margin: float, optional
    :param delta: Cut as a fraction of n, defaults to 0.1.
    :type delta: float, optional
    :return: ``(c1, c2)`` with ``c1 < c2``.
    :rtype: tuple[float, float]
    """
    target_left = max(left.final_lo, (1.0 - margin) * left.final_hi)
    target_right = min(right.final_hi, (1.0 + margin) * right.final_lo)
    return (_factor_on_plateau(params, left, target_left, delta),
            _factor_on_plateau(params, right, target_right, delta))


def boundary_pair(params: ModelParams, c: float, c_min: float, c_max: float,
                  margin: float = 0.1,
                  delta: float = config.DEFAULT_DELTA) -> tuple:
    """Pick two factors on either side of the plateau boundary next to c.

    See :func:`pair_across` for how the factors are placed.

    :param params: Model parameters.
    :type params: ModelParams
    :param c: Factor whose plateau is used; its upper boundary is preferred.
    :type c: float
    :param c_min: Smallest factor of the scan.
    :type c_min: float
    :param c_max: Largest factor of the scan.
    :type c_max: float
    :param margin: Relative distance from the boundary values,
        defaults to 0.1.
    :type margin: float, optional
    :param delta: Cut as a fraction of n, defaults to 0.1.
    :type delta: float, optional
    :raises WrongRegime: tau is not above 1/(1+gamma).
    :raises OutOfRegime: The scan shows a single plateau.
    :return: ``(c1, c2)`` with ``c1 < c2``.
    :rtype: tuple[float, float]
    """
    check_chaotic_inputs(params, c_min, c_max)
    table = plateau_table(params, c_min, c_max, delta)
    if len(table) < 2:
        raise OutOfRegime(f'No plateau boundary in [{c_min}, {c_max}].')
    position = next((i for i, plateau in enumerate(table)
                     if plateau.c_lo <= c <= plateau.c_hi), len(table) - 1)
    if position == len(table) - 1:
        position -= 1
    return pair_across(params, table[position], table[position + 1],
                       margin, delta)


def chaos_search(params: ModelParams, target: float, c_min: float,
                 c_max: float, delta: float = config.DEFAULT_DELTA) -> float:
    """Find a starting factor whose predicted stopping size hits a target.

    :param params: Model parameters; ``a0`` is ignored.
    :type params: ModelParams
    :param target: Desired final number of active vertices.
    :type target: float
    :param c_min: Smallest starting factor (multiple of a_c).
    :type c_min: float
    :param c_max: Largest starting factor.
    :type c_max: float
    :param delta: Cut as a fraction of n, defaults to 0.1.
    :type delta: float, optional
    :raises WrongRegime: tau is not above 1/(1+gamma).
    :raises TargetUnreachable: No plateau covers the target.
    :return: Starting factor c with ``a_ell`` within 1% of ``target``.
    :rtype: float
    """
    check_chaotic_inputs(params, c_min, c_max)
    if target <= 0.0:
        raise InvalidParameter('target should be positive.')
    lower = config.REGIME_SLACK * math.log(params.n) / params.p
    upper = params.n / config.REGIME_SLACK
    if not lower <= target <= upper:
        logger.warning('Target %.6g is outside the soft range [%.6g, %.6g].',
                       target, lower, upper)

    a_c = compute_threshold(params)
    tolerance = config.CHAOS_TOLERANCE

    def final_at(c: float) -> float:
        return stopping_size(params, c * a_c, delta)[1]

    def close_enough(value: float) -> bool:
        return abs(value - target) <= tolerance * target

    if close_enough(final_at(c_min)):
        return c_min

    table = plateau_table(params, c_min, c_max, delta)
    for plateau in table:
        if not (plateau.final_lo * (1 - tolerance) <= target
                <= plateau.final_hi * (1 + tolerance)):
            continue
        c = _factor_on_plateau(params, plateau, target, delta)
        if close_enough(final_at(c)):
            return c
    raise TargetUnreachable(
        f'No starting factor in [{c_min}, {c_max}] reaches {target:.6g}.',
        [plateau.to_dict() for plateau in table],
    )


def theory_report(params: ModelParams, delta: float = config.DEFAULT_DELTA,
                  steps: int = 20, eps: float = config.DEFAULT_EPS
                  ) -> TheoryReport:
    """Collect every prediction for a parameter tuple.

    Predictors that do not apply (e.g. round counts of a subcritical start)
    are reported as None.

    :param params: Model parameters.
    :type params: ModelParams
    :param delta: Cut for ell, defaults to 0.1.
    :type delta: float, optional
    :param steps: Length of the reported trajectory prefix, defaults to 20.
    :type steps: int, optional
    :param eps: Margin above the threshold, defaults to 0.1.
    :type eps: float, optional
    :return: The report.
    :rtype: TheoryReport
    """
    a_c = compute_threshold(params)
    report = TheoryReport(
        a_c=a_c,
        lambda_=compute_lambda(params),
        beta=compute_beta(params.tau, params.gamma),
        traj=expected_trajectory(params)[:steps],
        mixed_p=params.mixed_p,
        in_janson_regime=params.in_janson_regime,
    )
    try:
        report.ell = compute_ell(params, delta)
    except RegimeError as e:
        logger.debug('ell not available: %s', e)
    try:
        report.predicted_rounds = predict_rounds(params)
    except RegimeError as e:
        logger.debug('Round prediction not available: %s', e)
    report.regime, report.predicted_final = predict_final_size(params, eps)
    return report
