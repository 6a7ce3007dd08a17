"""This module holds tunable constants and resolves the reproducibility seed."""
from dotenv import load_dotenv
import os
from typing import Optional
from perclab.exception import InvalidParameter

#: Environment variable that overrides any seed passed in code or on the CLI.
SEED_ENV_VAR = 'PERC_LAB_SEED'

#: Seeds are 64-bit; they form the upper half of a Philox key.
SEED_LIMIT = 2 ** 64

#: Multiplicative slack standing in for asymptotic << and >>.
REGIME_SLACK = 10.0

#: p*n must be at least this for 1/n << p.
JANSON_LOWER = 10.0

#: p*n^(1/k) must be at most this for p << n^(-1/k).
JANSON_UPPER = 0.1

#: Default cut for the index ell (fraction of n).
DEFAULT_DELTA = 0.1

#: Expected trajectories stop once they exceed this multiple of n.
TRAJECTORY_CAP_FACTOR = 10.0

#: Step budget for expected trajectories.
TRAJECTORY_MAX_STEPS = 10_000

#: Additive allowance when comparing round predictions.
ROUNDS_ALLOWANCE = 6.0

#: Slack epsilon used in the (1+eps) hypotheses.
DEFAULT_EPS = 0.1

#: Largest p*delta*n at which concentration checks stay quiet.
CONCENTRATION_PA_LIMIT = 0.5

#: Upper bound on the expected number of stored edges in eager mode.
EAGER_EDGE_LIMIT = 2 * 10 ** 8

#: Default step cap of the Monte Carlo walker.
WALK_STEP_CAP = 10_000

#: Default time cap of the asynchronous engine.
ASYNC_TIME_CAP = 50.0

#: Grid points of the coarse scan in the chaos search.
CHAOS_GRID_POINTS = 400

#: Relative tolerance of the chaos search.
CHAOS_TOLERANCE = 0.01

#: Bisection iterations used when refining plateau boundaries.
BISECTION_STEPS = 80

#: Combined standard errors a simulated reversal must be separated by.
CHAOS_SEPARATION = 3.0

#: Plateau boundaries simulated by a chaos scan at most.
CHAOS_BOUNDARIES = 6

#: Named parameter sets for a small cortical column.
PRESETS = {
    'cortical-0.3': {
        'n': 7000, 'p': 0.1, 'k': 3, 'tau': 0.3, 'gamma': 5.0, 'a0': 100,
    },
    'cortical-0.2': {
        'n': 7000, 'p': 0.1, 'k': 3, 'tau': 0.2, 'gamma': 5.0, 'a0': 100,
    },
}


class SeedSource:
    """A class resolving the seed of a run.

    The value of :data:`SEED_ENV_VAR` (read from the environment or a
    ``.env`` file) takes precedence over the seed passed in.

    :param seed: Seed supplied by the caller, defaults to None.
    :type seed: Optional[int], optional
    """

    def __init__(self, seed: Optional[int] = None) -> None:
        """Initialize SeedSource."""
        self.seed = seed

    @property
    def seed(self) -> int:
        """Getter method of property seed.

        :return: Resolved 64-bit seed.
        :rtype: int
        """
        return self._seed

    @seed.setter
    def seed(self, seed: Optional[int] = None) -> None:
        """Setter method of property seed.

        :param seed: Seed supplied by the caller, defaults to None.
        :type seed: Optional[int], optional
        :raises InvalidParameter: Seed is not a 64-bit non-negative integer.
        """
        load_dotenv()
        env_seed = os.environ.get(SEED_ENV_VAR)
        if env_seed is not None:
            try:
                seed = int(env_seed)
            except ValueError:
                raise InvalidParameter(
                    f'{SEED_ENV_VAR} should be an integer, got {env_seed!r}.'
                )
        if seed is None:
            seed = 0
        if not 0 <= seed < SEED_LIMIT:
            raise InvalidParameter('Seed should be in [0, 2**64).')
        self._seed = seed


def resolve_seed(seed: Optional[int] = None) -> int:
    """Return the effective seed, honouring the environment override.

    :param seed: Seed supplied by the caller, defaults to None.
    :type seed: Optional[int], optional
    :return: Effective seed.
    :rtype: int
    """
    return SeedSource(seed).seed
