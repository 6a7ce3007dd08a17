"""This module serves the randomness of one realization of the graph.

Signs, out-edges and delays are keyed by ``(seed, channel, index)``, where
the index is the activation index of the sender. Each key selects its own
Philox stream, so lazy and eager access read exactly the same values and the
order of draws never matters.
"""
from abc import ABC, abstractmethod
from dataclasses import dataclass, field
from enum import Enum, IntEnum
from functools import lru_cache
import gzip
import logging
from typing import Mapping, Optional
import numpy as np
import pandas as pd
from perclab import config
from perclab.exception import InvalidParameter
from perclab.exception import TooLargeForEagerMode
from perclab.theory import ModelParams

logger = logging.getLogger(__name__)

_SIGN_BLOCK = 4096
_INDEX_LIMIT = 2 ** 56


class VertexSign(Enum):
    """Type of a vertex; the value is the weight of its signals."""
    EXCITATORY = 1
    INHIBITORY = -1


class Channel(IntEnum):
    """Sub-stream selector of a key."""
    SIGN = 1
    EDGE = 2
    DELAY = 3
    SHUFFLE = 4


class DelayKind(Enum):
    """Law of the edge delays."""
    UNIT = 'unit'
    EXPONENTIAL = 'exponential'
    INJECTED = 'injected'


@dataclass(frozen=True)
class DelayLaw:
    """Delay law of the edges.

    :param kind: Law of the delays, defaults to UNIT.
    :type kind: DelayKind, optional
    :param table: Delays by ``(index, target)``, used by INJECTED only.
    :type table: Mapping, optional
    """
    kind: DelayKind = DelayKind.UNIT
    table: Optional[Mapping] = field(default=None, hash=False)

    @classmethod
    def unit(cls) -> 'DelayLaw':
        return cls(DelayKind.UNIT)

    @classmethod
    def exponential(cls) -> 'DelayLaw':
        return cls(DelayKind.EXPONENTIAL)

    @classmethod
    def injected(cls, table: Mapping) -> 'DelayLaw':
        return cls(DelayKind.INJECTED, dict(table))

    @classmethod
    def from_name(cls, name: str) -> 'DelayLaw':
        """Build a law from its command-line name.

        :param name: ``unit`` or ``exponential``.
        :type name: str
        :raises InvalidParameter: Unknown name.
        :return: The delay law.
        :rtype: DelayLaw
        """
        match name.lower():
            case 'unit':
                return cls.unit()
            case 'exponential' | 'exp':
                return cls.exponential()
            case _:
                raise InvalidParameter(f'Unknown delay law: {name!r}.')

    def draw(self, seed: int, index: int, targets: np.ndarray) -> np.ndarray:
        """Draw the delays of one out-edge batch.

        :param seed: Realization seed.
        :type seed: int
        :param index: Activation index of the sender.
        :type index: int
        :param targets: Target labels of the batch.
        :type targets: numpy.ndarray
        :raises InvalidParameter: An injected delay is missing.
        :return: One positive delay per target.
        :rtype: numpy.ndarray
        """
        match self.kind:
            case DelayKind.UNIT:
                return np.ones(len(targets))
            case DelayKind.EXPONENTIAL:
                rng = key_stream(seed, Channel.DELAY, index)
                return rng.exponential(1.0, size=len(targets))
            case DelayKind.INJECTED:
                try:
                    return np.array(
                        [float(self.table[(index, int(v))]) for v in targets],
                        dtype=float,
                    )
                except KeyError as e:
                    raise InvalidParameter(f'No injected delay for {e}.')


@dataclass
class OutEdgeBatch:
    """Out-edges of the vertex with a given activation index.

    ``targets`` is sorted ascending and ``delays`` is aligned with it.
    """
    source_index: int
    sign: VertexSign
    targets: np.ndarray
    delays: np.ndarray

    def __len__(self) -> int:
        return len(self.targets)


def key_stream(seed: int, channel: Channel, index: int) -> np.random.Generator:
    """Return the generator owned by one key.

    :param seed: 64-bit realization seed.
    :type seed: int
    :param channel: Sub-stream selector.
    :type channel: Channel
    :param index: Index inside the channel, below ``2**56``.
    :type index: int
    :return: A fresh generator; equal keys give equal draws.
    :rtype: numpy.random.Generator
    """
    if not 0 <= index < _INDEX_LIMIT:
        raise InvalidParameter(f'Index out of range: {index}.')
    key = (int(seed) << 64) | (int(channel) << 56) | int(index)
    return np.random.Generator(np.random.Philox(key=key))


@lru_cache(maxsize=256)
def _sign_uniforms(seed: int, block: int) -> np.ndarray:
    uniforms = key_stream(seed, Channel.SIGN, block).random(_SIGN_BLOCK)
    uniforms.flags.writeable = False
    return uniforms


@lru_cache(maxsize=32)
def _sign_ranks(seed: int, n: int) -> np.ndarray:
    ranks = key_stream(seed, Channel.SHUFFLE, 0).permutation(n)
    ranks.flags.writeable = False
    return ranks


def sample_sign(seed: int, index: int, tau: float) -> VertexSign:
    """Draw the sign of the vertex with a given activation index.

    :param seed: Realization seed.
    :type seed: int
    :param index: Activation index, at least 1.
    :type index: int
    :param tau: Probability of INHIBITORY.
    :type tau: float
    :raises InvalidParameter: Index is smaller than 1.
    :return: The sign.
    :rtype: VertexSign
    """
    if index < 1:
        raise InvalidParameter(f'Activation index should be >= 1: {index}.')
    block, offset = divmod(index - 1, _SIGN_BLOCK)
    if _sign_uniforms(seed, block)[offset] < tau:
        return VertexSign.INHIBITORY
    return VertexSign.EXCITATORY


def sample_fixed_sign(seed: int, index: int, tau: float,
                      n: int) -> VertexSign:
    """Draw a sign such that exactly ``round(tau*n)`` of ``1..n`` inhibit.

    :param seed: Realization seed.
    :type seed: int
    :param index: Activation index in ``1..n``.
    :type index: int
    :param tau: Fraction of inhibitory vertices.
    :type tau: float
    :param n: Number of vertices.
    :type n: int
    :raises InvalidParameter: Index is outside ``1..n``.
    :return: The sign.
    :rtype: VertexSign
    """
    if not 1 <= index <= n:
        raise InvalidParameter(f'Activation index should be in [1, {n}].')
    if _sign_ranks(seed, n)[index - 1] < round(tau * n):
        return VertexSign.INHIBITORY
    return VertexSign.EXCITATORY


def _skip_targets(rng: np.random.Generator, n: int, q: float) -> np.ndarray:
    """Sample a Bernoulli(q) subset of ``1..n`` by geometric skipping."""
    if q <= 0.0:
        return np.empty(0, dtype=np.int64)
    if q >= 1.0:
        return np.arange(1, n + 1, dtype=np.int64)
    # Skips are drawn as floats; an int64 geometric wraps for tiny q.
    log_miss = np.log1p(-q)
    chunk = int(n * q * 1.1) + 16
    parts = []
    last = 0.0
    while last < n:
        skips = np.floor(np.log1p(-rng.random(chunk)) / log_miss) + 1.0
        positions = last + np.cumsum(skips)
        parts.append(positions)
        last = positions[-1]
    positions = np.concatenate(parts)
    return positions[positions <= n].astype(np.int64)


def _naive_targets(rng: np.random.Generator, n: int, q: float) -> np.ndarray:
    """Sample a Bernoulli(q) subset of ``1..n`` with one trial per vertex."""
    return np.flatnonzero(rng.random(n) < q).astype(np.int64) + 1


def sample_out_edges(seed: int, index: int, sign: VertexSign,
                     params: ModelParams, delay_law: Optional[DelayLaw] = None,
                     method: str = 'skip') -> OutEdgeBatch:
    """Draw the out-edges of the vertex with a given activation index.

    :param seed: Realization seed.
    :type seed: int
    :param index: Activation index, at least 1.
    :type index: int
    :param sign: Sign of the sender; selects p or gamma*p.
    :type sign: VertexSign
    :param params: Model parameters.
    :type params: ModelParams
    :param delay_law: Delay law, defaults to UNIT.
    :type delay_law: DelayLaw, optional
    :param method: ``skip`` (geometric skipping) or ``naive`` (one trial per
        vertex), defaults to ``skip``.
    :type method: str, optional
    :raises InvalidParameter: Unknown method or index below 1.
    :return: The out-edge batch.
    :rtype: OutEdgeBatch
    """
    if index < 1:
        raise InvalidParameter(f'Activation index should be >= 1: {index}.')
    if delay_law is None:
        delay_law = DelayLaw.unit()
    if sign is VertexSign.EXCITATORY:
        q = params.p
    else:
        q = params.inhibitory_p

    rng = key_stream(seed, Channel.EDGE, index)
    match method:
        case 'skip':
            targets = _skip_targets(rng, params.n, q)
        case 'naive':
            targets = _naive_targets(rng, params.n, q)
        case _:
            raise InvalidParameter(f'Unknown sampling method: {method!r}.')
    delays = delay_law.draw(seed, index, targets)
    return OutEdgeBatch(index, sign, targets, delays)


class Realization(ABC):
    """Abstract source of signs and out-edges.

    Engines only ask for the sign of a freshly activated vertex and for its
    out-edges; ``vertex`` is passed along so that a realization may key its
    randomness by label instead of activation index.

    :param params: Model parameters.
    :type params: ModelParams
    :param delay_law: Delay law, defaults to UNIT.
    :type delay_law: DelayLaw, optional
    """

    def __init__(self, params: ModelParams,
                 delay_law: Optional[DelayLaw] = None) -> None:
        """Initialize Realization."""
        self.params = params
        self.delay_law = delay_law

    @property
    def params(self) -> ModelParams:
        """Getter method of property params.

        :return: Model parameters of the realization.
        :rtype: ModelParams
        """
        return self._params

    @params.setter
    def params(self, params: ModelParams) -> None:
        """Setter method of property params.

        :param params: Model parameters of the realization.
        :type params: ModelParams
        """
        if not isinstance(params, ModelParams):
            raise InvalidParameter('params should be a ModelParams.')
        self._params = params

    @property
    def delay_law(self) -> DelayLaw:
        """Getter method of property delay_law.

        :return: Delay law of the realization.
        :rtype: DelayLaw
        """
        return self._delay_law

    @delay_law.setter
    def delay_law(self, delay_law: Optional[DelayLaw] = None) -> None:
        """Setter method of property delay_law.

        :param delay_law: Delay law, defaults to UNIT.
        :type delay_law: DelayLaw, optional
        """
        self._delay_law = delay_law if delay_law is not None \
            else DelayLaw.unit()

    @property
    def seed(self) -> int:
        return self.params.seed

    @abstractmethod
    def sign(self, index: int, vertex: int) -> VertexSign:
        pass

    @abstractmethod
    def out_edges(self, index: int, sign: VertexSign, vertex: int,
                  delay_law: Optional[DelayLaw] = None) -> OutEdgeBatch:
        pass


class LazyRealization(Realization):
    """Realization that samples a vertex's out-edges when it activates.

    :param params: Model parameters.
    :type params: ModelParams
    :param delay_law: Delay law, defaults to UNIT.
    :type delay_law: DelayLaw, optional
    :param method: Edge sampling method, defaults to ``skip``.
    :type method: str, optional
    :param fixed_signs: Make exactly ``round(tau*n)`` vertices inhibitory,
        defaults to False.
    :type fixed_signs: bool, optional
    """

    def __init__(self, params: ModelParams,
                 delay_law: Optional[DelayLaw] = None, method: str = 'skip',
                 fixed_signs: bool = False) -> None:
        """Initialize LazyRealization."""
        super().__init__(params, delay_law)
        if method not in ('skip', 'naive'):
            raise InvalidParameter(f'Unknown sampling method: {method!r}.')
        self.method = method
        self.fixed_signs = fixed_signs

    def _key(self, index: int, vertex: int) -> int:
        return index

    def sign(self, index: int, vertex: int = 0) -> VertexSign:
        """Return the sign of an activated vertex.

        :param index: Activation index.
        :type index: int
        :param vertex: Vertex label, defaults to 0.
        :type vertex: int, optional
        :return: The sign.
        :rtype: VertexSign
        """
        key = self._key(index, vertex)
        if self.fixed_signs:
            return sample_fixed_sign(self.seed, key, self.params.tau,
                                     self.params.n)
        return sample_sign(self.seed, key, self.params.tau)

    def out_edges(self, index: int, sign: VertexSign, vertex: int = 0,
                  delay_law: Optional[DelayLaw] = None) -> OutEdgeBatch:
        """Return the out-edges of an activated vertex.

        :param index: Activation index.
        :type index: int
        :param sign: Sign of the vertex.
        :type sign: VertexSign
        :param vertex: Vertex label, defaults to 0.
        :type vertex: int, optional
        :param delay_law: Override of the realization's delay law.
        :type delay_law: DelayLaw, optional
        :return: The out-edge batch.
        :rtype: OutEdgeBatch
        """
        batch = sample_out_edges(self.seed, self._key(index, vertex), sign,
                                 self.params, delay_law or self.delay_law,
                                 self.method)
        batch.source_index = index
        return batch


class LabelKeyedRealization(LazyRealization):
    """Lazy realization keyed by vertex label instead of activation index.

    It describes one fixed directed graph, so runs with different starting
    sets see the same edges.
    """

    def _key(self, index: int, vertex: int) -> int:
        if vertex < 1:
            raise InvalidParameter('A label-keyed realization needs labels.')
        return vertex


class EagerRealization(Realization):
    """Realization with every out-edge batch stored up front.

    Rows are kept in compressed sparse row form: the batch of index ``i`` is
    ``targets[indptr[i-1]:indptr[i]]``. A request for a sign other than the
    stored one, or for another delay law, is answered by ``fallback``.

    :param params: Model parameters.
    :type params: ModelParams
    :param signs: Stored sign weights (+1/-1) of indices ``1..n``.
    :type signs: numpy.ndarray
    :param indptr: Row pointer of length ``n+1``.
    :type indptr: numpy.ndarray
    :param targets: Concatenated targets.
    :type targets: numpy.ndarray
    :param delays: Concatenated delays.
    :type delays: numpy.ndarray
    :param delay_law: Delay law of the stored delays.
    :type delay_law: DelayLaw, optional
    :param fallback: Lazy realization reproducing the same streams.
    :type fallback: Realization, optional
    :param fixed_signs: Signs were drawn in the fixed-proportion mode,
        defaults to False.
    :type fixed_signs: bool, optional
    """

    def __init__(self, params: ModelParams, signs: np.ndarray,
                 indptr: np.ndarray, targets: np.ndarray, delays: np.ndarray,
                 delay_law: Optional[DelayLaw] = None,
                 fallback: Optional[Realization] = None,
                 fixed_signs: bool = False) -> None:
        """Initialize EagerRealization."""
        super().__init__(params, delay_law)
        if len(signs) != params.n or len(indptr) != params.n + 1:
            raise InvalidParameter('Stored rows do not match n.')
        self.signs = np.asarray(signs, dtype=np.int8)
        self.indptr = np.asarray(indptr, dtype=np.int64)
        self.targets = np.asarray(targets, dtype=np.int64)
        self.delays = np.asarray(delays, dtype=float)
        self.fixed_signs = fixed_signs
        self.fallback = fallback if fallback is not None \
            else LazyRealization(params, self.delay_law,
                                 fixed_signs=fixed_signs)

    @property
    def edge_count(self) -> int:
        return len(self.targets)

    def sign(self, index: int, vertex: int = 0) -> VertexSign:
        if not 1 <= index <= self.params.n:
            return self.fallback.sign(index, vertex)
        return VertexSign(int(self.signs[index - 1]))

    def out_edges(self, index: int, sign: VertexSign, vertex: int = 0,
                  delay_law: Optional[DelayLaw] = None) -> OutEdgeBatch:
        law = delay_law or self.delay_law
        if (not 1 <= index <= self.params.n
                or sign.value != self.signs[index - 1]
                or law != self.delay_law):
            return self.fallback.out_edges(index, sign, vertex, law)
        lo, hi = self.indptr[index - 1], self.indptr[index]
        return OutEdgeBatch(index, sign, self.targets[lo:hi],
                            self.delays[lo:hi])


class InjectedRealization(Realization):
    """Realization with hand-written signs and edges for selected indices.

    Indices that are not listed are served by ``base``.

    :param params: Model parameters.
    :type params: ModelParams
    :param signs: Signs by activation index, defaults to None.
    :type signs: Mapping[int, VertexSign], optional
    :param edges: ``(target, delay)`` pairs by activation index,
        defaults to None.
    :type edges: Mapping[int, list], optional
    :param base: Realization for everything else, defaults to a lazy one.
    :type base: Realization, optional
    :param delay_law: Delay law of the base, defaults to UNIT.
    :type delay_law: DelayLaw, optional
    """

    def __init__(self, params: ModelParams,
                 signs: Optional[Mapping] = None,
                 edges: Optional[Mapping] = None,
                 base: Optional[Realization] = None,
                 delay_law: Optional[DelayLaw] = None) -> None:
        """Initialize InjectedRealization."""
        super().__init__(params, delay_law)
        self.injected_signs = dict(signs or {})
        self.injected_edges = dict(edges or {})
        self.base = base if base is not None \
            else LazyRealization(params, self.delay_law)

    def sign(self, index: int, vertex: int = 0) -> VertexSign:
        if index in self.injected_signs:
            return self.injected_signs[index]
        return self.base.sign(index, vertex)

    def out_edges(self, index: int, sign: VertexSign, vertex: int = 0,
                  delay_law: Optional[DelayLaw] = None) -> OutEdgeBatch:
        if index not in self.injected_edges:
            return self.base.out_edges(index, sign, vertex, delay_law)
        pairs = sorted(self.injected_edges[index])
        targets = np.array([v for v, _ in pairs], dtype=np.int64)
        delays = np.array([d for _, d in pairs], dtype=float)
        if len(np.unique(targets)) != len(targets):
            raise InvalidParameter(f'Duplicate target in batch {index}.')
        if np.any(delays <= 0.0):
            raise InvalidParameter(f'Delays should be positive: {index}.')
        return OutEdgeBatch(index, sign, targets, delays)


def for_params(params: ModelParams, realization: Optional[Realization] = None,
               delay_law: Optional[DelayLaw] = None) -> Realization:
    """Return the realization an engine should read.

    :param params: Parameters of the run.
    :type params: ModelParams
    :param realization: Realization supplied by the caller, defaults to a
        lazy realization of ``params``.
    :type realization: Realization, optional
    :param delay_law: Delay law of a default realization.
    :type delay_law: DelayLaw, optional
    :raises InvalidParameter: The realization was built for another n.
    :return: The realization.
    :rtype: Realization
    """
    if realization is None:
        return LazyRealization(params, delay_law)
    if realization.params.n != params.n:
        raise InvalidParameter(
            f'Realization has n={realization.params.n}, run has n={params.n}.'
        )
    return realization


def check_eager_budget(params: ModelParams) -> float:
    """Refuse parameters whose graph is too large to store.

    :param params: Model parameters.
    :type params: ModelParams
    :raises TooLargeForEagerMode: Expected edge count exceeds
        :data:`config.EAGER_EDGE_LIMIT`.
    :return: Expected number of edges.
    :rtype: float
    """
    expected_edges = params.n * params.n * params.mixed_p
    if expected_edges > config.EAGER_EDGE_LIMIT:
        raise TooLargeForEagerMode(
            f'About {expected_edges:.3g} edges expected; the limit is '
            f'{config.EAGER_EDGE_LIMIT:.3g}.'
        )
    return expected_edges


def materialize_graph(seed: int, params: ModelParams,
                      delay_law: Optional[DelayLaw] = None,
                      fixed_signs: bool = False) -> EagerRealization:
    """Draw every out-edge batch of a realization up front.

    Row ``i`` is the batch that :func:`sample_out_edges` returns for index
    ``i`` under its stored sign.

    :param seed: Realization seed.
    :type seed: int
    :param params: Model parameters; its seed is replaced by ``seed``.
    :type params: ModelParams
    :param delay_law: Delay law, defaults to UNIT.
    :type delay_law: DelayLaw, optional
    :param fixed_signs: Use the fixed-proportion sign mode,
        defaults to False.
    :type fixed_signs: bool, optional
    :raises TooLargeForEagerMode: Expected edge count exceeds
        :data:`config.EAGER_EDGE_LIMIT`.
    :return: The eager realization.
    :rtype: EagerRealization
    """
    params = params.with_seed(seed)
    check_eager_budget(params)
    source = LazyRealization(params, delay_law, fixed_signs=fixed_signs)
    signs = np.empty(params.n, dtype=np.int8)
    indptr = np.zeros(params.n + 1, dtype=np.int64)
    target_rows, delay_rows = [], []
    for index in range(1, params.n + 1):
        sign = source.sign(index)
        batch = source.out_edges(index, sign)
        signs[index - 1] = sign.value
        indptr[index] = indptr[index - 1] + len(batch)
        target_rows.append(batch.targets)
        delay_rows.append(batch.delays)
    logger.debug('Materialized %d edges for n=%d.', indptr[-1], params.n)
    return EagerRealization(
        params, signs, indptr,
        np.concatenate(target_rows) if target_rows else np.empty(0, np.int64),
        np.concatenate(delay_rows) if delay_rows else np.empty(0),
        source.delay_law, source, fixed_signs,
    )


_SIGN_MODES = {'bernoulli': False, 'fixed': True}


def dump_graph(realization: EagerRealization, path: str) -> None:
    """Write a realization as a gzipped edge list.

    The first line is ``n p k tau gamma seed signs``, where ``signs`` is
    ``bernoulli`` or ``fixed``; every edge follows as ``i v sign delay``.

    :param realization: Realization to write.
    :type realization: EagerRealization
    :param path: Destination file.
    :type path: str
    """
    params = realization.params
    counts = np.diff(realization.indptr)
    edges = pd.DataFrame({
        'i': np.repeat(np.arange(1, params.n + 1), counts),
        'v': realization.targets,
        'sign': np.repeat(realization.signs, counts),
        'delay': realization.delays,
    })
    sign_mode = 'fixed' if realization.fixed_signs else 'bernoulli'
    with gzip.open(path, 'wt') as f:
        f.write(f'{params.n} {params.p!r} {params.k} {params.tau!r} '
                f'{params.gamma!r} {params.seed} {sign_mode}\n')
        edges.to_csv(f, sep=' ', header=False, index=False,
                     float_format='%.17g')


def load_graph(path: str, a0: int = 0,
               delay_law: Optional[DelayLaw] = None) -> EagerRealization:
    """Read a realization written by :func:`dump_graph`.

    Signs of indices without out-edges are drawn again from the header seed
    in the sign mode named by the header. A header without a mode is read
    as ``bernoulli``.

    :param path: Gzipped edge list.
    :type path: str
    :param a0: Starting-set size of the returned parameters, defaults to 0.
    :type a0: int, optional
    :param delay_law: Law the delays were drawn from, defaults to
        EXPONENTIAL unless every delay equals one.
    :type delay_law: DelayLaw, optional
    :raises InvalidParameter: Malformed header.
    :return: The eager realization.
    :rtype: EagerRealization
    """
    with gzip.open(path, 'rt') as f:
        header = f.readline().split()
    if len(header) == 6:
        header.append('bernoulli')
    if len(header) != 7 or header[6] not in _SIGN_MODES:
        raise InvalidParameter(f'Malformed header in {path}.')
    n, p, k, tau, gamma, seed, sign_mode = header
    fixed_signs = _SIGN_MODES[sign_mode]
    params = ModelParams(n=int(n), p=float(p), k=int(k), tau=float(tau),
                         gamma=float(gamma), a0=a0, seed=int(seed))

    edges = pd.read_csv(path, sep=' ', skiprows=1, header=None,
                        names=['i', 'v', 'sign', 'delay'],
                        dtype={'i': np.int64, 'v': np.int64,
                               'sign': np.int8, 'delay': float},
                        float_precision='round_trip', compression='gzip')
    edges = edges.sort_values(['i', 'v'], kind='stable')
    if delay_law is None:
        if (edges['delay'] == 1.0).all():
            delay_law = DelayLaw.unit()
        else:
            delay_law = DelayLaw.exponential()

    redraw = LazyRealization(params, delay_law, fixed_signs=fixed_signs)
    signs = np.array([redraw.sign(i).value for i in range(1, params.n + 1)],
                     dtype=np.int8)
    first_rows = edges.drop_duplicates('i')
    signs[first_rows['i'].to_numpy() - 1] = first_rows['sign'].to_numpy()
    counts = np.bincount(edges['i'].to_numpy(), minlength=params.n + 1)
    indptr = np.concatenate([[0], np.cumsum(counts[1:])])
    return EagerRealization(params, signs, indptr, edges['v'].to_numpy(),
                            edges['delay'].to_numpy(), delay_law, redraw,
                            fixed_signs)
