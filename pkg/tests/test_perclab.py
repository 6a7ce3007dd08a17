import gzip
import json
import math
from dataclasses import replace
import numpy as np
import pandas as pd
import pytest
from perclab import async_engine
from perclab import config
from perclab import experiments
from perclab import random_walk
from perclab import sync_engine
from perclab import theory
from perclab.cli import main
from perclab.config import SeedSource
from perclab.exception import DegenerateBias
from perclab.exception import InhibitionOnly
from perclab.exception import InvalidParameter
from perclab.exception import InvalidProbability
from perclab.exception import InvalidThreshold
from perclab.exception import NoEscape
from perclab.exception import OutOfRegime
from perclab.exception import Subcritical
from perclab.exception import TargetUnreachable
from perclab.exception import TooLargeForEagerMode
from perclab.exception import WrongRegime
from perclab.realization import DelayLaw
from perclab.realization import EagerRealization
from perclab.realization import InjectedRealization
from perclab.realization import LabelKeyedRealization
from perclab.realization import LazyRealization
from perclab.realization import VertexSign
from perclab.realization import dump_graph
from perclab.realization import load_graph
from perclab.realization import materialize_graph
from perclab.realization import sample_out_edges
from perclab.realization import sample_sign
from perclab.theory import ModelParams
from perclab.theory import Regime
from perclab.trajectory import CSV_COLUMNS
from perclab.trajectory import Engine
from perclab.trajectory import Termination

EXCITATORY = VertexSign.EXCITATORY
INHIBITORY = VertexSign.INHIBITORY


@pytest.fixture(scope='module')
def reference():
    """Parameters whose trajectory is easy to iterate by hand."""
    return ModelParams(n=10 ** 6, p=1e-4, k=2, tau=0.0, a0=100)


@pytest.fixture(scope='module')
def chaotic():
    """Parameters of the chaotic regime used by the chaos scan."""
    return ModelParams(n=10 ** 5, p=3.16e-4, k=2, tau=0.5, gamma=3.0)


@pytest.fixture(scope='module')
def random_tuples():
    """Random valid parameter tuples with a0 above the threshold.

    :return: List of 1000 parameter tuples.
    :rtype: list[ModelParams]
    """
    rng = np.random.default_rng(2024)
    tuples = []
    while len(tuples) < 1000:
        n = int(10 ** rng.uniform(3, 7))
        p = float(10 ** rng.uniform(-4, -1))
        k = int(rng.integers(2, 5))
        tau = float(rng.uniform(0.0, 0.9))
        gamma = float(rng.uniform(0.1, 1.0 / p))
        base = ModelParams(n=n, p=p, k=k, tau=tau, gamma=gamma)
        a0 = math.ceil(theory.compute_threshold(base) * rng.uniform(1.1, 5))
        if a0 > n:
            continue
        tuples.append(replace(base, a0=a0))
    return tuples


@pytest.fixture(scope='module')
def mid_graph():
    """Mid-sized parameters for exact cross-checks between engines."""
    return ModelParams(n=2000, p=0.05, k=2, tau=0.3, gamma=2.0, a0=20)


class TestModelParams:
    """Test validation of the parameter tuple."""

    def test_integral_floats_are_accepted(self):
        """Test values like 1e6 are turned into integers."""
        params = ModelParams(n=1e6, p=1e-4, k=2.0, tau=0, a0=1e2)
        assert params.n == 10 ** 6 and isinstance(params.n, int)
        assert params.a0 == 100

    @pytest.mark.parametrize(
        'changes, error',
        [
            ({'n': 0}, InvalidParameter),
            ({'n': 10.5}, InvalidParameter),
            ({'p': 1.5}, InvalidProbability),
            ({'gamma': 20.0}, InvalidProbability),
            ({'gamma': 0.0}, InvalidParameter),
            ({'tau': -0.1}, InvalidParameter),
            ({'a0': 101}, InvalidParameter),
            ({'seed': 2 ** 64}, InvalidParameter),
        ]
    )
    def test_invalid_values(self, changes, error):
        """Test out-of-range values raise the matching error."""
        values = {'n': 100, 'p': 0.1, 'k': 2, 'tau': 0.2}
        values.update(changes)
        with pytest.raises(error):
            ModelParams(**values)

    def test_janson_regime_flag(self):
        """Test the regime flag uses the configured slack."""
        inside = ModelParams(n=10 ** 6, p=5e-5, k=2, tau=0.0)
        outside = ModelParams(n=100, p=0.5, k=2, tau=0.0)
        assert inside.in_janson_regime
        assert not outside.in_janson_regime

    def test_mixed_probability(self):
        """Test the expected edge probability of an unknown sender."""
        params = ModelParams(n=100, p=0.01, k=2, tau=0.3, gamma=5.0)
        assert params.mixed_p == pytest.approx(0.7 * 0.01 + 0.3 * 0.05)


class TestTheory:
    """Test the closed-form predictors."""

    @pytest.mark.parametrize('tau, expected', [(0.0, 50.0), (0.5, 200.0)])
    def test_threshold(self, reference, tau, expected):
        """Test the threshold against direct evaluation."""
        params = replace(reference, tau=tau)
        assert theory.compute_threshold(params) == pytest.approx(expected)

    def test_threshold_ignores_gamma(self, reference):
        """Test the threshold is bit-identical for every gamma."""
        base = theory.compute_threshold(replace(reference, gamma=1.0))
        assert theory.compute_threshold(replace(reference, gamma=7.0)) == base

    def test_threshold_errors(self, reference):
        """Test tau = 1 and k < 2 are rejected."""
        with pytest.raises(InhibitionOnly):
            theory.compute_threshold(replace(reference, tau=1.0))
        with pytest.raises(InvalidThreshold):
            theory.compute_threshold(replace(reference, k=1))

    def test_lambda(self, reference):
        """Test Lambda and its fixed-point identity."""
        value = theory.compute_lambda(reference)
        assert value == pytest.approx(100.0)
        assert 1e6 * 1e-8 * value ** 2 == pytest.approx(value)

    def test_lambda_identity_case(self):
        """Test n*p^2 = 1 gives Lambda = 1."""
        params = ModelParams(n=10 ** 4, p=0.01, k=2, tau=0.0)
        assert theory.compute_lambda(params) == pytest.approx(1.0)

    @pytest.mark.parametrize(
        'tau, gamma, expected',
        [(0.3, 5.0, 7 / 22), (0.5, 1.0, 0.5), (0.0, 3.0, 1.0)]
    )
    def test_beta(self, tau, gamma, expected):
        """Test the walk bias."""
        assert theory.compute_beta(tau, gamma) == pytest.approx(expected)

    def test_degenerate_beta(self):
        """Test 0/0 is reported."""
        with pytest.raises(DegenerateBias):
            theory.compute_beta(1.0, 0.0)

    def test_expected_trajectory(self, reference):
        """Test the first values of the recursion."""
        values = theory.expected_trajectory(reference)
        assert values[:4] == pytest.approx([100, 150, 212.5, 325.78125])
        assert values[-1] > 10 * reference.n
        assert all(v <= 10 * reference.n for v in values[:-1])

    def test_empty_start_is_fixed(self, reference):
        """Test a0 = 0 stays at zero."""
        values = theory.expected_trajectory(replace(reference, a0=0),
                                            max_steps=5)
        assert values == [0.0] * 6

    def test_minimal_growth_example(self, reference):
        """Test the ratio bound on the reference trajectory."""
        values = theory.expected_trajectory(reference)
        bound = (100 / 50) ** 0.5
        assert values[1] / values[0] >= bound

    @pytest.mark.parametrize('delta', [0.1, 0.5])
    def test_ell(self, reference, delta):
        """Test ell for two cuts."""
        assert theory.compute_ell(reference, delta) == 6

    def test_ell_past_cut(self):
        """Test a start already past the cut gives zero."""
        params = ModelParams(n=1000, p=0.01, k=2, tau=0.0, a0=200)
        assert theory.compute_ell(params, 0.1) == 0

    def test_ell_stalls(self, reference):
        """Test a subcritical trajectory never escapes."""
        with pytest.raises(NoEscape):
            theory.compute_ell(replace(reference, a0=10))

    def test_predict_rounds(self, reference):
        """Test the leading term of the round count."""
        rounds = theory.predict_rounds(reference)
        assert rounds == pytest.approx(math.log2(math.log2(100)))
        assert theory.compute_ell(reference, 0.1) - rounds <= 6

    def test_predict_rounds_base_equals_argument(self, reference):
        """Test a0/a_c = np gives zero."""
        params = replace(reference, a0=5000)
        assert theory.predict_rounds(params) == pytest.approx(0.0, abs=1e-9)

    def test_predict_rounds_subcritical(self, reference):
        """Test a start below the threshold is rejected."""
        with pytest.raises(Subcritical):
            theory.predict_rounds(replace(reference, a0=40))

    def test_predict_rounds_never_negative(self, reference):
        """Test a start with a0/a_c above np predicts zero rounds."""
        params = replace(reference, a0=10 ** 5)
        assert 100_000 / 50 > reference.n * reference.p
        assert theory.predict_rounds(params) == 0.0

    def test_large_threshold_does_not_overflow(self):
        """Test a huge k caps the trajectory instead of overflowing."""
        params = ModelParams(n=1e6, p=0.5, k=60, tau=0.0, a0=1e6)
        values = theory.expected_trajectory(params)
        assert values[0] == 1e6
        assert values[-1] > 10 * params.n
        report = theory.theory_report(params)
        assert report.ell == 0
        assert report.lambda_ > 0.0

    def test_trajectory_past_float_range(self):
        """Test a value beyond the float range ends the trajectory."""
        params = ModelParams(n=1e6, p=0.5, k=60, tau=0.0, a0=1e6)
        values = theory.expected_trajectory(params, cap=math.inf)
        assert len(values) == 3
        assert math.isfinite(values[1]) and values[1] > 1e260
        assert values[-1] == math.inf

    def test_lambda_for_huge_threshold(self):
        """Test Lambda stays finite when p^k underflows."""
        params = ModelParams(n=1e6, p=0.5, k=2000, tau=0.0)
        value = theory.compute_lambda(params)
        log_image = (math.log(1e6) + 2000 * math.log(0.5)
                     + 2000 * math.log(value) - math.lgamma(2000))
        assert log_image == pytest.approx(math.log(value), rel=1e-9)

    @pytest.mark.parametrize(
        'tau, regime, expected',
        [
            (0.3, Regime.NORMALIZES, 7000 * (0.7 / 1.5) ** 3),
            (0.2, Regime.NORMALIZES, 3584.0),
        ]
    )
    def test_predict_final_normalizes(self, tau, regime, expected):
        """Test the normalized final size."""
        params = ModelParams(n=7000, p=0.1, k=3, tau=tau, gamma=5.0, a0=100)
        found, size = theory.predict_final_size(params)
        assert found is regime
        assert size == pytest.approx(expected)

    def test_predict_final_percolates(self):
        """Test weak inhibition percolates."""
        params = ModelParams(n=5000, p=0.01, k=2, tau=0.1, gamma=1.0, a0=50)
        assert theory.predict_final_size(params) == (Regime.PERCOLATES, 5000)

    def test_predict_final_border(self):
        """Test tau = 1/(1+gamma) is flagged."""
        params = ModelParams(n=5000, p=0.01, k=2, tau=0.5, gamma=1.0, a0=50)
        assert theory.predict_final_size(params)[0] is Regime.BORDER

    def test_predict_final_subcritical(self, reference):
        """Test a small start gives the threshold as scale."""
        regime, size = theory.predict_final_size(replace(reference, a0=30))
        assert regime is Regime.SUBCRITICAL
        assert size == pytest.approx(50.0)

    def test_report(self, reference):
        """Test the report collects every predictor."""
        report = theory.theory_report(reference).to_dict()
        assert report['a_c'] == pytest.approx(50.0)
        assert report['lambda'] == pytest.approx(100.0)
        assert report['ell'] == 6
        assert report['regime'] == 'PERCOLATES'
        assert len(report['traj']) <= 20


class TestTheoryIdentities:
    """Test identities over random parameter tuples."""

    def test_gamma_invariance(self, random_tuples):
        """Test the threshold never depends on gamma."""
        for params in random_tuples:
            other = replace(params, gamma=0.5)
            assert (theory.compute_threshold(other)
                    == theory.compute_threshold(params))

    def test_fixed_point(self, random_tuples):
        """Test Lambda solves its fixed-point equation."""
        for params in random_tuples:
            value = theory.compute_lambda(params)
            image = ((1 - params.tau) ** params.k * params.n
                     * params.p ** params.k * value ** params.k
                     / math.factorial(params.k - 1))
            assert abs(image - value) <= 1e-11 * value

    def test_minimal_growth(self, random_tuples):
        """Test every ratio of the trajectory respects the lower bound."""
        for params in random_tuples:
            values = theory.expected_trajectory(params)
            a_c = theory.compute_threshold(params)
            bound = (params.a0 / a_c) ** ((params.k - 1) / params.k)
            ratios = np.array(values[1:]) / np.array(values[:-1])
            assert np.all(ratios >= bound * (1 - 1e-12))
            assert np.all(ratios > 1)

    def test_final_size_matches_walk(self, random_tuples):
        """Test the normalized size equals n times the hitting chance."""
        checked = 0
        for params in random_tuples:
            regime, size = theory.predict_final_size(params)
            if regime is not Regime.NORMALIZES:
                continue
            beta = theory.compute_beta(params.tau, params.gamma)
            walk = params.n * random_walk.hitting_probability(beta, params.k)
            assert size == pytest.approx(walk, rel=1e-12)
            checked += 1
        assert checked > 0


class TestChaos:
    """Test the plateau scan of the chaotic regime."""

    def test_nonmonotone_pair_exists(self, chaotic):
        """Test a larger start predicts a smaller final somewhere."""
        pairs = theory.chaotic_pairs(chaotic, 1.5, 50.0, 0.1)
        assert pairs
        for c1, c2, final1, final2 in pairs:
            assert c1 < c2
            assert final1 > final2

    def test_plateaus_are_ordered(self, chaotic):
        """Test ell never increases with the starting factor."""
        table = theory.plateau_table(chaotic, 1.5, 50.0, 0.1)
        ells = [plateau.ell for plateau in table]
        assert ells == sorted(ells, reverse=True)
        for plateau in table:
            assert plateau.c_lo <= plateau.c_hi
            assert plateau.final_lo <= plateau.final_hi

    def test_target_at_c_min(self, chaotic):
        """Test the predictor's own value at c_min returns c_min."""
        a_c = theory.compute_threshold(chaotic)
        target = theory.stopping_size(chaotic, 1.5 * a_c, 0.1)[1]
        assert theory.chaos_search(chaotic, target, 1.5, 50.0, 0.1) == 1.5

    def test_target_inside_plateau(self, chaotic):
        """Test the found factor predicts the target within 1%."""
        a_c = theory.compute_threshold(chaotic)
        table = theory.plateau_table(chaotic, 1.5, 50.0, 0.1)
        plateau = table[len(table) // 2]
        target = math.sqrt(plateau.final_lo * plateau.final_hi)
        c = theory.chaos_search(chaotic, target, 1.5, 50.0, 0.1)
        found = theory.stopping_size(chaotic, c * a_c, 0.1)[1]
        assert found == pytest.approx(target, rel=0.01)

    def test_unreachable_target(self, chaotic):
        """Test a target above every plateau carries the table."""
        with pytest.raises(TargetUnreachable) as error:
            theory.chaos_search(chaotic, 10.0 * chaotic.n, 1.5, 50.0, 0.1)
        assert error.value.plateaus

    @pytest.mark.parametrize('c_min', [1.0, 1.05])
    def test_start_needs_margin_above_threshold(self, chaotic, c_min):
        """Test c_min below 1 + eps is refused."""
        with pytest.raises(OutOfRegime):
            theory.chaos_search(chaotic, 1000, c_min, 50.0)
        with pytest.raises(OutOfRegime):
            theory.chaotic_pairs(chaotic, c_min, 50.0)

    def test_wrong_regime(self, chaotic):
        """Test weak inhibition is rejected."""
        with pytest.raises(WrongRegime):
            theory.chaos_search(replace(chaotic, tau=0.2), 1000, 1.5, 50.0)

    def test_boundary_pair(self, chaotic):
        """Test the pair straddles a boundary in reverse order."""
        a_c = theory.compute_threshold(chaotic)
        c1, c2 = theory.boundary_pair(chaotic, 2.0, 1.5, 50.0)
        final1 = theory.stopping_size(chaotic, c1 * a_c)
        final2 = theory.stopping_size(chaotic, c2 * a_c)
        assert c1 < c2
        assert final1[0] == final2[0] + 1
        assert final1[1] > final2[1]

    @pytest.mark.parametrize(
        'params, start',
        [
            (ModelParams(n=10 ** 5, p=2.24e-4, k=2, tau=0.0), 1000.5),
            (ModelParams(n=10 ** 5, p=3.16e-4, k=2, tau=0.5, gamma=3.0),
             2063.1),
        ]
    )
    def test_rounding_robustness(self, params, start):
        """Test rounding the start down barely moves the stopping size."""
        exact = theory.stopping_size(params, start)
        rounded = theory.stopping_size(params, math.floor(start))
        assert exact[0] == rounded[0]
        assert rounded[1] == pytest.approx(exact[1], rel=0.01)


class TestRealization:
    """Test the keyed randomness of a realization."""

    @pytest.mark.parametrize('tau, sign', [(0.0, EXCITATORY),
                                           (1.0, INHIBITORY)])
    def test_extreme_signs(self, tau, sign):
        """Test tau = 0 and tau = 1 fix every sign."""
        assert all(sample_sign(3, i, tau) is sign for i in range(1, 5000))

    def test_sign_fraction(self):
        """Test the inhibitory fraction over many indices."""
        signs = [sample_sign(11, i, 0.3) for i in range(1, 10 ** 5 + 1)]
        fraction = sum(s is INHIBITORY for s in signs) / len(signs)
        assert abs(fraction - 0.3) <= 0.01

    def test_sign_determinism(self):
        """Test equal keys give equal signs and seeds differ."""
        first = [sample_sign(5, i, 0.5) for i in range(1, 200)]
        again = [sample_sign(5, i, 0.5) for i in range(1, 200)]
        other = [sample_sign(6, i, 0.5) for i in range(1, 200)]
        assert first == again
        assert first != other

    def test_fixed_sign_fraction(self):
        """Test the fixed mode makes exactly round(tau*n) inhibitory."""
        params = ModelParams(n=1000, p=0.01, k=2, tau=0.3, seed=4)
        realization = LazyRealization(params, fixed_signs=True)
        signs = [realization.sign(i) for i in range(1, 1001)]
        assert sum(s is INHIBITORY for s in signs) == 300

    def test_empty_and_full_batches(self):
        """Test p = 0 and p = 1."""
        empty = ModelParams(n=100, p=0.0, k=2, tau=0.0)
        full = ModelParams(n=100, p=1.0, k=2, tau=0.0)
        assert len(sample_out_edges(1, 1, EXCITATORY, empty)) == 0
        batch = sample_out_edges(1, 1, EXCITATORY, full)
        assert batch.targets.tolist() == list(range(1, 101))

    @pytest.mark.parametrize('method', ['skip', 'naive'])
    def test_batch_mean(self, method):
        """Test the mean batch size is close to n*p."""
        params = ModelParams(n=10 ** 4, p=0.01, k=2, tau=0.0)
        sizes = [len(sample_out_edges(8, i, EXCITATORY, params, None, method))
                 for i in range(1, 1001)]
        assert abs(np.mean(sizes) - 100) <= 3

    def test_batch_targets_are_unique(self):
        """Test targets are sorted, distinct and within 1..n."""
        params = ModelParams(n=500, p=0.3, k=2, tau=0.0)
        targets = sample_out_edges(2, 9, EXCITATORY, params).targets
        assert np.all(np.diff(targets) > 0)
        assert targets.min() >= 1 and targets.max() <= 500

    def test_inhibitory_probability(self):
        """Test inhibitory senders use gamma*p."""
        params = ModelParams(n=10 ** 4, p=0.01, k=2, tau=0.5, gamma=4.0)
        sizes = [len(sample_out_edges(8, i, INHIBITORY, params))
                 for i in range(1, 201)]
        assert abs(np.mean(sizes) - 400) <= 10

    def test_edges_ignore_tau(self):
        """Test changing tau does not perturb edge draws."""
        low = ModelParams(n=1000, p=0.05, k=2, tau=0.1)
        high = replace(low, tau=0.7)
        for index in (1, 17, 900):
            a = sample_out_edges(3, index, EXCITATORY, low)
            b = sample_out_edges(3, index, EXCITATORY, high)
            assert np.array_equal(a.targets, b.targets)

    def test_exponential_delays(self):
        """Test the mean and the median region of Exp(1)."""
        delays = DelayLaw.exponential().draw(9, 1, np.arange(10 ** 6))
        assert abs(delays.mean() - 1.0) <= 0.005
        assert abs(np.mean(delays <= 1.0) - (1 - math.exp(-1))) <= 0.005

    def test_unit_delays(self):
        """Test the unit law."""
        params = ModelParams(n=100, p=0.5, k=2, tau=0.0)
        batch = sample_out_edges(1, 1, EXCITATORY, params, DelayLaw.unit())
        assert np.all(batch.delays == 1.0)

    def test_missing_injected_delay(self):
        """Test an injected table must cover every edge."""
        law = DelayLaw.injected({(1, 2): 0.5})
        with pytest.raises(InvalidParameter):
            law.draw(0, 1, np.array([2, 3]))

    def test_materialized_rows_match(self):
        """Test eager rows equal lazily sampled batches."""
        params = ModelParams(n=300, p=0.05, k=2, tau=0.4, gamma=2.0)
        eager = materialize_graph(21, params, DelayLaw.exponential())
        rng = np.random.default_rng(0)
        for index in rng.integers(1, 301, size=30):
            index = int(index)
            sign = sample_sign(21, index, 0.4)
            lazy = sample_out_edges(21, index, sign, eager.params,
                                    DelayLaw.exponential())
            stored = eager.out_edges(index, sign)
            assert np.array_equal(lazy.targets, stored.targets)
            assert np.array_equal(lazy.delays, stored.delays)

    def test_complete_graph(self):
        """Test p = 1 gives every out-neighbourhood."""
        params = ModelParams(n=100, p=1.0, k=2, tau=0.0)
        eager = materialize_graph(0, params)
        assert eager.edge_count == 100 * 100
        assert np.all(eager.delays == 1.0)

    def test_edge_count(self):
        """Test the stored edge count is binomial around n^2 p."""
        params = ModelParams(n=10 ** 4, p=0.01, k=2, tau=0.0)
        eager = materialize_graph(5, params)
        sd = math.sqrt(1e6 * 0.99)
        assert abs(eager.edge_count - 1e6) <= 4 * sd

    def test_eager_guard(self):
        """Test huge graphs are refused."""
        params = ModelParams(n=10 ** 6, p=0.01, k=2, tau=0.0)
        with pytest.raises(TooLargeForEagerMode):
            materialize_graph(0, params)

    def test_label_keyed(self):
        """Test label-keyed draws ignore the activation index."""
        params = ModelParams(n=500, p=0.05, k=2, tau=0.5)
        realization = LabelKeyedRealization(params)
        assert realization.sign(1, 42) is realization.sign(7, 42)
        a = realization.out_edges(1, EXCITATORY, 42)
        b = realization.out_edges(7, EXCITATORY, 42)
        assert np.array_equal(a.targets, b.targets)
        assert b.source_index == 7

    def test_dump_and_load(self, tmp_path):
        """Test a dumped realization reads back exactly."""
        params = ModelParams(n=200, p=0.05, k=2, tau=0.3, gamma=2.0)
        eager = materialize_graph(13, params, DelayLaw.exponential())
        path = tmp_path / 'graph.txt.gz'
        dump_graph(eager, str(path))
        with gzip.open(path, 'rt') as f:
            assert f.readline().split() == ['200', '0.05', '2', '0.3', '2.0',
                                            '13', 'bernoulli']
        loaded = load_graph(str(path), a0=5)
        assert isinstance(loaded, EagerRealization)
        assert loaded.params.a0 == 5
        assert np.array_equal(loaded.signs, eager.signs)
        assert np.array_equal(loaded.indptr, eager.indptr)
        assert np.array_equal(loaded.targets, eager.targets)
        assert np.array_equal(loaded.delays, eager.delays)

    def test_loaded_graph_replays_exactly(self, tmp_path):
        """Test an asynchronous run on a reloaded graph keeps its times."""
        params = ModelParams(n=300, p=0.04, k=2, tau=0.2, gamma=2.0, a0=15)
        eager = materialize_graph(8, params, DelayLaw.exponential())
        path = tmp_path / 'graph.txt.gz'
        dump_graph(eager, str(path))
        loaded = load_graph(str(path), a0=15)
        first = async_engine.run(eager.params, eager)
        again = async_engine.run(loaded.params, loaded)
        assert again.order == first.order
        assert again.times == first.times

    def test_fixed_signs_survive_reload(self, tmp_path):
        """Test signs of vertices without out-edges keep the fixed mode."""
        params = ModelParams(n=400, p=0.002, k=2, tau=0.5)
        eager = materialize_graph(17, params, fixed_signs=True)
        path = tmp_path / 'graph.txt.gz'
        dump_graph(eager, str(path))
        with gzip.open(path, 'rt') as f:
            assert f.readline().split()[-1] == 'fixed'
        loaded = load_graph(str(path))
        assert loaded.fixed_signs
        assert np.count_nonzero(np.diff(eager.indptr) == 0) > 0
        assert np.array_equal(loaded.signs, eager.signs)
        assert np.sum(loaded.signs == -1) == 200

    def test_legacy_header(self, tmp_path):
        """Test a header without a sign mode reads as Bernoulli."""
        path = tmp_path / 'graph.txt.gz'
        with gzip.open(path, 'wt') as f:
            f.write('3 0.5 2 0.0 1.0 4\n1 2 1 1\n2 3 1 1\n')
        loaded = load_graph(str(path))
        assert not loaded.fixed_signs
        assert loaded.targets.tolist() == [2, 3]
        assert loaded.delay_law == DelayLaw.unit()

    def test_tiny_probability_gives_empty_batches(self):
        """Test skips beyond the integer range leave the batch empty."""
        params = ModelParams(n=100, p=1e-19, k=2, tau=0.0)
        for index in range(1, 200):
            batch = sample_out_edges(1, index, EXCITATORY, params)
            assert len(batch) == 0
            assert batch.targets.dtype == np.int64

    def test_injected_laws_compare_tables(self):
        """Test injected laws with different tables are not equal."""
        first = DelayLaw.injected({(1, 2): 0.5})
        assert first == DelayLaw.injected({(1, 2): 0.5})
        assert first != DelayLaw.injected({(1, 2): 0.7})
        assert hash(DelayLaw.exponential()) == hash(DelayLaw.exponential())


class TestSyncEngine:
    """Test the round-based engine."""

    def test_complete_digraph(self):
        """Test two active vertices activate the rest in one round."""
        params = ModelParams(n=5, p=1.0, k=2, tau=0.0, a0=2)
        record = sync_engine.run(params)
        assert record.counts == [2, 5]
        assert record.order == [1, 2, 3, 4, 5]
        assert record.termination is Termination.ALL_ACTIVE

    def test_inhibition_cancels(self):
        """Test one excitatory and one inhibitory sender cancel out."""
        params = ModelParams(n=4, p=1.0, k=1, tau=0.0, gamma=1.0, a0=2)
        realization = InjectedRealization(
            params, signs={1: EXCITATORY, 2: INHIBITORY})
        state = sync_engine.SyncState.start(params, realization)
        _, newly = sync_engine.step(state, realization)
        assert newly == 0
        record = sync_engine.run(params, realization)
        assert record.final_size == 2
        assert record.termination is Termination.STOPPED

    def test_empty_start(self):
        """Test nothing happens without a starting set."""
        params = ModelParams(n=50, p=0.5, k=1, tau=0.0, a0=0)
        record = sync_engine.run(params)
        assert record.final_size == 0
        assert record.counts == [0]

    def test_no_edges(self):
        """Test p = 0 stops after one round."""
        params = ModelParams(n=50, p=0.0, k=2, tau=0.0, a0=5)
        record = sync_engine.run(params)
        assert record.counts == [5]
        assert record.diagnostics['rounds_executed'] == 1
        frame = record.to_frame(0)
        assert len(frame) == 1
        assert frame['active_total'].tolist() == [5]

    def test_single_vertex_cannot_reach_two(self):
        """Test one sender never gives an excess of two."""
        params = ModelParams(n=100, p=0.5, k=2, tau=0.0, a0=1)
        assert sync_engine.run(params).final_size == 1

    def test_conservation_and_permanence(self, mid_graph):
        """Test counts grow by the newly active and rounds are ordered."""
        record = sync_engine.run(mid_graph)
        frame = record.to_frame()
        assert frame['newly_active'].sum() == record.final_size
        assert np.all(np.diff(record.counts) > 0)
        assert record.times == sorted(record.times)
        assert len(set(record.order)) == record.final_size

    def test_lazy_equals_eager(self, mid_graph):
        """Test eager and lazy realizations give identical runs."""
        for seed in range(10):
            params = mid_graph.with_seed(seed)
            lazy = sync_engine.run(params, LazyRealization(params))
            eager = sync_engine.run(params, materialize_graph(seed, params))
            assert lazy.order == eager.order
            assert lazy.counts == eager.counts
            assert lazy.signs == eager.signs

    def test_monotone_in_start_without_inhibition(self):
        """Test a larger start never ends smaller on a fixed graph."""
        base = ModelParams(n=500, p=0.01, k=2, tau=0.0, seed=3)
        realization = LabelKeyedRealization(base)
        previous = set()
        for a0 in range(2, 31, 2):
            record = sync_engine.run(replace(base, a0=a0), realization)
            final = set(record.order)
            assert previous <= final
            previous = final

    def test_counter_audit(self, mid_graph):
        """Test incremental counters match a recount."""
        realization = LazyRealization(mid_graph)
        record = sync_engine.run(mid_graph, realization, keep_state=True)
        assert sync_engine.audit_counters(record, realization) == []
        assert sync_engine.audit_counters(record, realization,
                                          sample=None) == []

    def test_audit_needs_state(self, mid_graph):
        """Test the audit refuses a record without state."""
        record = sync_engine.run(mid_graph)
        with pytest.raises(InvalidParameter):
            sync_engine.audit_counters(record, LazyRealization(mid_graph))

    def test_growth_bounds(self, mid_graph):
        """Test the lower count never exceeds the upper count."""
        realization = LazyRealization(mid_graph)
        state = sync_engine.SyncState.start(mid_graph, realization)
        lower, upper = sync_engine.growth_bounds(state)
        assert 0 <= lower <= upper

    def test_round_cap(self, mid_graph):
        """Test hitting the cap flags the record."""
        record = sync_engine.run(mid_graph, round_cap=1)
        assert record.termination is Termination.ROUND_CAP
        assert record.truncated


class TestAsyncEngine:
    """Test the event-driven engine."""

    def test_hand_trace(self):
        """Test activation times and a discarded late arrival."""
        params = ModelParams(n=4, p=0.5, k=1, tau=0.0, a0=1)
        realization = InjectedRealization(params, edges={
            1: [(2, 0.5), (3, 1.0)], 2: [(3, 0.7)], 3: []})
        record = async_engine.run(params, realization)
        assert record.order == [1, 2, 3]
        assert record.times == [0.0, 0.5, 1.0]
        assert record.diagnostics['discarded'] == 1
        assert record.termination is Termination.STOPPED

    def test_inhibitory_first(self):
        """Test an early inhibitory signal blocks a later excitatory one."""
        params = ModelParams(n=3, p=0.5, k=1, tau=0.0, a0=2)
        realization = InjectedRealization(
            params, signs={1: INHIBITORY, 2: EXCITATORY},
            edges={1: [(3, 0.3)], 2: [(3, 0.6)]})
        record = async_engine.run(params, realization)
        assert record.order == [1, 2]

    def test_activation_is_permanent(self):
        """Test a later inhibitory signal does not undo an activation."""
        params = ModelParams(n=3, p=0.5, k=1, tau=0.0, a0=2)
        realization = InjectedRealization(
            params, signs={1: EXCITATORY, 2: INHIBITORY},
            edges={1: [(3, 0.3)], 2: [(3, 0.6)], 3: []})
        record = async_engine.run(params, realization)
        assert record.order == [1, 2, 3]
        assert record.times[2] == 0.3
        assert record.termination is Termination.ALL_ACTIVE

    def test_ties_are_deterministic(self):
        """Test equal arrival times break by target label."""
        params = ModelParams(n=5, p=0.5, k=1, tau=0.0, a0=2)
        edges = {1: [(3, 1.0), (4, 1.0)], 2: [(3, 1.0), (5, 1.0)],
                 3: [], 4: [], 5: []}
        first = async_engine.run(params, InjectedRealization(params,
                                                             edges=edges))
        again = async_engine.run(params, InjectedRealization(params,
                                                             edges=edges))
        assert first.order == again.order == [1, 2, 3, 4, 5]
        assert first.diagnostics['tied_activations'] == 2

    def test_exponential_delays_never_tie(self, mid_graph):
        """Test continuous delays give distinct activation times."""
        for seed in range(3):
            record = async_engine.run(mid_graph.with_seed(seed))
            assert record.diagnostics['tied_activations'] == 0
            assert len(set(record.times[mid_graph.a0:])) == (
                record.final_size - mid_graph.a0)

    def test_tie_under_exponential_law_fails(self):
        """Test a tie reported as exponential breaks the run."""
        params = ModelParams(n=5, p=0.5, k=1, tau=0.0, a0=2)
        edges = {1: [(3, 0.25), (4, 0.25)], 2: [], 3: [], 4: [], 5: []}
        realization = InjectedRealization(params, edges=edges)
        with pytest.raises(AssertionError):
            async_engine.run(params, realization, DelayLaw.exponential())

    def test_time_to_reach(self, mid_graph):
        """Test the starting set is active at zero."""
        record = async_engine.run(mid_graph)
        assert async_engine.time_to_reach(record, 1) == 0.0
        assert async_engine.time_to_reach(record, mid_graph.a0) == 0.0
        assert math.isinf(async_engine.time_to_reach(record,
                                                     record.final_size + 1))
        with pytest.raises(InvalidParameter):
            async_engine.time_to_reach(record, 0)

    def test_unit_delays_match_rounds(self, mid_graph):
        """Test unit delays reproduce the synchronous rounds exactly."""
        for seed in range(5):
            params = mid_graph.with_seed(seed)
            realization = LazyRealization(params)
            rounds = sync_engine.run(params, realization)
            timed = async_engine.run(params, realization, DelayLaw.unit())
            assert all(float(t).is_integer() for t in timed.times)
            assert timed.order == rounds.order
            for t in range(len(rounds.counts)):
                assert timed.active_after(t) == rounds.active_after(t)

    def test_event_times_never_decrease(self, mid_graph):
        """Test the event log is in time order and marks activations."""
        record = async_engine.run(mid_graph, event_log=True)
        events = async_engine.event_frame(record)
        assert list(events.columns) == async_engine.EVENT_COLUMNS
        assert events['time'].is_monotonic_increasing
        assert events['caused_activation'].sum() == (record.final_size
                                                     - mid_graph.a0)
        plain = async_engine.run(mid_graph)
        assert plain.order == record.order
        assert plain.times == record.times

    def test_replay_audit(self, mid_graph):
        """Test every activation happens exactly when k is first reached."""
        realization = LazyRealization(mid_graph, DelayLaw.exponential())
        record = async_engine.run(mid_graph, realization)
        assert record.diagnostics['delay_law'] == 'exponential'
        assert async_engine.audit_activations(record, realization) == []

    def test_active_cap(self, mid_graph):
        """Test the active cap stops the run."""
        record = async_engine.run(mid_graph, active_cap=50)
        assert record.final_size == 50
        assert record.termination is Termination.ACTIVE_CAP

    def test_time_cap(self, mid_graph):
        """Test the time cap stops the run."""
        record = async_engine.run(mid_graph, time_cap=0.2)
        assert record.termination is Termination.TIME_CAP
        assert all(t <= 0.2 for t in record.times)

    def test_async_frame(self, mid_graph):
        """Test asynchronous rows start with the starting set."""
        record = async_engine.run(mid_graph)
        frame = record.to_frame(3)
        assert list(frame.columns) == CSV_COLUMNS
        assert frame['step'].iloc[0] == mid_graph.a0
        assert frame['newly_active'].iloc[0] == mid_graph.a0
        assert frame['active_total'].iloc[-1] == record.final_size
        assert (frame['trial'] == 3).all()


class TestRandomWalk:
    """Test the walk oracle."""

    @pytest.mark.parametrize(
        'beta, k, expected',
        [(0.5, 3, 1.0), (1 / 3, 2, 0.25), (0.6, 3, 1.0), (0.0, 2, 0.0)]
    )
    def test_hitting_probability(self, beta, k, expected):
        """Test the closed form."""
        assert random_walk.hitting_probability(beta, k) == pytest.approx(
            expected)

    def test_extreme_walks(self):
        """Test beta = 0 never hits and beta = 1 always does."""
        never = random_walk.WalkSpec(beta=0.0, k=2)
        always = random_walk.WalkSpec(beta=1.0, k=3)
        assert random_walk.simulate_hit(never, 1, 1000) == 0.0
        assert random_walk.simulate_hit(always, 1, 1000) == 1.0

    def test_simulation_is_seeded(self):
        """Test equal seeds give equal estimates."""
        spec = random_walk.WalkSpec(beta=0.3, k=2)
        assert (random_walk.simulate_hit(spec, 5, 20_000)
                == random_walk.simulate_hit(spec, 5, 20_000))

    @pytest.mark.parametrize('beta', [0.1, 0.3, 0.4, 0.6, 0.9])
    @pytest.mark.parametrize('k', [1, 2, 3])
    def test_simulation_matches_closed_form(self, beta, k):
        """Test the estimate within four standard errors."""
        trials = 100_000
        q = random_walk.hitting_probability(beta, k)
        spec = random_walk.WalkSpec(beta=beta, k=k)
        estimate = random_walk.simulate_hit(spec, 17, trials)
        assert abs(estimate - q) <= 4 * math.sqrt(q * (1 - q) / trials) + 1e-3

    @pytest.mark.parametrize('beta', [0.1, 0.5, 0.9])
    def test_drift(self, beta):
        """Test normalised end points concentrate at 2*beta - 1."""
        values = random_walk.drift_check(beta, seed=3)
        assert abs(values.mean() - (2 * beta - 1)) <= 0.02
        assert np.mean(np.abs(values - (2 * beta - 1)) <= 0.02) >= 0.9

    def test_invalid_walk(self):
        """Test invalid settings are refused."""
        with pytest.raises(InvalidParameter):
            random_walk.WalkSpec(beta=1.5, k=2)
        with pytest.raises(InvalidParameter):
            random_walk.WalkSpec(beta=0.5, k=2, step_cap=0)


class TestExperiments:
    """Test the trial harness."""

    def test_single_trial(self, mid_graph):
        """Test one trial has no standard deviation."""
        summary = experiments.run_trials(mid_graph, Engine.SYNC, 1)
        assert not summary.sd_defined
        assert math.isnan(summary.sd_final)
        assert summary.mean_final == summary.final_sizes[0]
        assert summary.to_dict()['sd_final'] is None

    def test_determinism(self, mid_graph):
        """Test equal base seeds reproduce the summary."""
        first = experiments.run_trials(mid_graph, Engine.SYNC, 4, 99)
        again = experiments.run_trials(mid_graph, Engine.SYNC, 4, 99)
        assert first.to_dict() == again.to_dict()

    def test_pool_keeps_trial_order(self, mid_graph):
        """Test worker processes give the serial result."""
        serial = experiments.run_trials(mid_graph, Engine.ASYNC, 4, 7, jobs=1)
        pooled = experiments.run_trials(mid_graph, Engine.ASYNC, 4, 7, jobs=2)
        assert serial.final_sizes == pooled.final_sizes

    def test_trials_are_independent(self, mid_graph):
        """Test each trial equals a single run with its derived seed."""
        records = experiments.run_records(mid_graph, Engine.SYNC, 3, 40)
        for trial, record in enumerate(records):
            params = mid_graph.with_seed(experiments.trial_seed(40, trial))
            assert experiments.run_one(params, Engine.SYNC).order \
                == record.order

    def test_aggregation_audit(self, mid_graph):
        """Test statistics agree with a second pass."""
        summary = experiments.run_trials(replace(mid_graph, tau=0.45),
                                         Engine.SYNC, 6, 1)
        finals = np.array(summary.final_sizes, dtype=float)
        assert summary.mean_final == pytest.approx(finals.mean(), rel=1e-12)
        assert summary.sd_final == pytest.approx(finals.std(ddof=1),
                                                 rel=1e-12)
        assert summary.q50 == pytest.approx(np.quantile(finals, 0.5),
                                            rel=1e-12)
        assert summary.q95 == pytest.approx(np.quantile(finals, 0.95),
                                            rel=1e-12)

    def test_truncations_are_counted(self, mid_graph):
        """Test truncated trials are counted, not dropped."""
        options = experiments.RunOptions(round_cap=1)
        summary = experiments.run_trials(mid_graph, Engine.SYNC, 3,
                                         options=options)
        assert summary.trials == 3
        assert summary.truncated_count == 3

    def test_theory_attached(self, mid_graph):
        """Test the summary carries the predictions when they exist."""
        summary = experiments.run_trials(mid_graph, Engine.SYNC, 1)
        assert summary.theory.a_c == pytest.approx(
            theory.compute_threshold(mid_graph))
        no_edges = experiments.run_trials(replace(mid_graph, p=0.0),
                                          Engine.SYNC, 1)
        assert no_edges.theory is None

    def test_sweep_of_one(self, mid_graph):
        """Test a one-point sweep equals a batch of trials."""
        points = experiments.sweep(mid_graph, 'a0', [20], Engine.SYNC, 2, 3)
        direct = experiments.run_trials(mid_graph, Engine.SYNC, 2, 3)
        assert len(points) == 1
        assert points[0].summary.final_sizes == direct.final_sizes

    def test_sweep_records_errors(self, mid_graph):
        """Test an invalid grid value is reported and the sweep goes on."""
        points = experiments.sweep(mid_graph, 'gamma', [1.0, 100.0],
                                   Engine.SYNC, 1)
        assert points[0].summary is not None
        assert points[1].summary is None
        assert 'gamma' in points[1].error

    def test_sweep_needs_monotone_grid(self, mid_graph):
        """Test a zig-zag grid is refused."""
        with pytest.raises(InvalidParameter):
            experiments.sweep(mid_graph, 'a0', [5, 9, 7], Engine.SYNC, 1)

    def test_inhibition_sweep_crosses_border(self):
        """Test full percolation disappears past tau = 1/(1+gamma)."""
        params = ModelParams(n=2000, p=0.05, k=3, tau=0.1, gamma=2.0, a0=50)
        points = experiments.sweep(params, 'tau', [0.1, 0.6], Engine.ASYNC,
                                   3, 5)
        assert points[0].summary.fraction_fully_percolated >= 0.6
        assert points[1].summary.fraction_fully_percolated == 0.0

    def test_concentration_wide_band(self):
        """Test a band of one passes every live round."""
        params = ModelParams(n=10 ** 4, p=1.29e-3, k=2, tau=0.0, a0=120)
        report = experiments.validate_concentration(params, 3, 1.0)
        assert not report.out_of_regime
        assert report.checks > 0
        assert report.pass_fraction == 1.0

    def test_concentration_flags_small_start(self):
        """Test a small start is flagged but still checked."""
        params = ModelParams(n=10 ** 4, p=1.29e-3, k=2, tau=0.0, a0=40)
        report = experiments.validate_concentration(params, 2, 0.25)
        assert report.flags == ['OUT_OF_REGIME']
        assert report.checks > 0

    def test_chaos_confirmation_fields(self):
        """Test both starting sizes are simulated and compared."""
        params = ModelParams(n=2000, p=0.02, k=2, tau=0.5, gamma=3.0)
        confirmation = experiments.confirm_chaos(params, 2.0, 4.0, 3, 1)
        assert confirmation.a0_1 < confirmation.a0_2
        assert confirmation.mean_1 > 0 and confirmation.mean_2 > 0
        report = confirmation.to_dict()
        assert set(report) >= {'separation', 'ordered_opposite', 'confirmed',
                               'ell_1', 'ell_2'}

    @pytest.mark.parametrize('mean_2, confirmed', [(90.0, True),
                                                   (95.0, False),
                                                   (110.0, False)])
    def test_confirmation_needs_separation(self, mean_2, confirmed):
        """Test a reversal counts only when three errors apart."""
        confirmation = experiments.ChaosConfirmation(
            1.5, 2.0, 10, 20, 180.0, 45.0, 100.0, mean_2, 2.0, 2.0, 2, 1)
        assert confirmation.confirmed is confirmed

    def test_chaos_scan_skips_degenerate_plateau(self):
        """Test scanned boundaries have ell >= 1 on both sides."""
        params = ModelParams(n=2000, p=0.02, k=2, tau=0.5, gamma=3.0)
        confirmations = experiments.scan_chaos_boundaries(
            params, 1.5, 50.0, 2, 1, boundaries=2)
        assert len(confirmations) == 2
        for confirmation in confirmations:
            assert confirmation.c1 < confirmation.c2
            assert confirmation.ell_2 >= 1
            assert confirmation.ell_1 == confirmation.ell_2 + 1
            assert confirmation.predicted_1 > confirmation.predicted_2
        separations = [c.separation for c in confirmations]
        assert separations == sorted(separations, reverse=True)

    def test_chaos_scan_without_boundary(self):
        """Test a range on the last plateau has nothing to simulate."""
        params = ModelParams(n=2000, p=0.02, k=2, tau=0.5, gamma=3.0)
        with pytest.raises(OutOfRegime):
            experiments.scan_chaos_boundaries(params, 20.0, 50.0, 2, 1)

    def test_explosion_times(self, mid_graph):
        """Test the time between two active counts is finite."""
        params = replace(mid_graph, tau=0.0)
        times = experiments.explosion_times(params, 100, 1000, 2)
        assert len(times) == 2
        assert all(0.0 <= t < math.inf for t in times)


class TestSeed:
    """Test seed resolution."""

    def test_default_seed(self):
        """Test a missing seed becomes zero."""
        assert SeedSource().seed == 0
        assert config.resolve_seed(12) == 12

    def test_environment_wins(self, monkeypatch):
        """Test the environment overrides the passed seed."""
        monkeypatch.setenv(config.SEED_ENV_VAR, '77')
        assert config.resolve_seed(12) == 77

    def test_invalid_environment(self, monkeypatch):
        """Test a non-numeric override is refused."""
        monkeypatch.setenv(config.SEED_ENV_VAR, 'seven')
        with pytest.raises(InvalidParameter):
            SeedSource(1)

    def test_out_of_range(self):
        """Test seeds must fit in 64 bits."""
        with pytest.raises(InvalidParameter):
            SeedSource(-1)


class TestCli:
    """Test the command line."""

    MID = ['--n', '500', '--p', '0.02', '--k', '2', '--tau', '0.2',
           '--gamma', '2', '--a0', '10', '--jobs', '1']

    def test_theory(self, capsys):
        """Test the reference report."""
        code = main(['theory', '--n', '1e6', '--p', '1e-4', '--k', '2',
                     '--tau', '0', '--gamma', '1', '--a0', '100'])
        report = json.loads(capsys.readouterr().out)
        assert code == 0
        assert report['a_c'] == pytest.approx(50.0)
        assert report['lambda'] == pytest.approx(100.0)
        assert report['beta'] == 1.0
        assert report['traj'][:3] == pytest.approx([100, 150, 212.5])

    def test_theory_with_large_threshold(self, capsys):
        """Test a huge k prints a report instead of failing."""
        code = main(['theory', '--n', '1e6', '--p', '0.5', '--k', '60',
                     '--tau', '0', '--a0', '1e6'])
        report = json.loads(capsys.readouterr().out)
        assert code == 0
        assert report['ell'] == 0
        assert report['traj'][0] == 1e6

    def test_theory_normalizes(self, capsys):
        """Test the cortical preset values."""
        code = main(['theory', '--preset', 'cortical-0.3'])
        report = json.loads(capsys.readouterr().out)
        assert code == 0
        assert report['regime'] == 'NORMALIZES'
        assert report['predicted_final'] == pytest.approx(711.4, abs=0.1)

    def test_missing_argument(self, capsys):
        """Test a missing required value exits with 2 and no JSON."""
        code = main(['theory', '--n', '1e6', '--k', '2', '--tau', '0'])
        captured = capsys.readouterr()
        assert code == 2
        assert captured.out == ''
        assert '--p' in captured.err

    def test_fractional_integer(self):
        """Test integers reject fractions."""
        assert main(['theory', '--n', '10.5', '--p', '0.1', '--k', '2',
                     '--tau', '0']) == 2

    def test_sim_without_edges(self, tmp_path):
        """Test p = 0 gives one row per trial."""
        csv = tmp_path / 'traj.csv'
        code = main(['sim', '--n', '50', '--p', '0', '--k', '2', '--tau', '0',
                     '--a0', '5', '--trials', '2', '--jobs', '1',
                     '--csv', str(csv), '--summary',
                     str(tmp_path / 'sum.json')])
        frame = pd.read_csv(csv)
        assert code == 0
        assert list(frame.columns) == CSV_COLUMNS
        assert len(frame) == 2
        assert frame['active_total'].tolist() == [5, 5]

    def test_sim_is_reproducible(self, tmp_path):
        """Test two identical invocations write identical bytes."""
        outputs = []
        for name in ('a', 'b'):
            csv, summary = tmp_path / f'{name}.csv', tmp_path / f'{name}.json'
            assert main(['sim', *self.MID, '--trials', '3', '--seed', '7',
                         '--csv', str(csv), '--summary', str(summary)]) == 0
            outputs.append((csv.read_bytes(), summary.read_bytes()))
        assert outputs[0] == outputs[1]

    def test_async_unit_matches_sync(self, tmp_path):
        """Test unit delays reproduce the per-round active counts."""
        frames = {}
        for engine in ('sync', 'async'):
            csv = tmp_path / f'{engine}.csv'
            assert main(['sim', *self.MID, '--engine', engine, '--delay',
                         'unit', '--seed', '3', '--csv', str(csv),
                         '--summary', str(tmp_path / 's.json')]) == 0
            frames[engine] = pd.read_csv(csv)
        for row in frames['sync'].itertuples():
            reached = frames['async'][frames['async']['time'] <= row.time]
            assert reached['active_total'].max() == row.active_total

    def test_unwritable_output(self, tmp_path):
        """Test a bad path fails before simulating."""
        missing = tmp_path / 'missing' / 'traj.csv'
        code = main(['sim', *self.MID, '--csv', str(missing)])
        assert code == 2
        assert not missing.exists()

    def test_config_round_trip(self, tmp_path):
        """Test an emitted config reproduces the run."""
        config_path = tmp_path / 'run.json'
        assert main(['sim', *self.MID, '--trials', '2', '--seed', '5',
                     '--emit-config', str(config_path)]) == 0
        assert json.loads(config_path.read_text())['n'] == 500
        outputs = []
        for name, args in (('flags', [*self.MID, '--trials', '2',
                                      '--seed', '5']),
                           ('file', ['--config', str(config_path)])):
            summary = tmp_path / f'{name}.json'
            assert main(['sim', *args, '--summary', str(summary)]) == 0
            outputs.append(summary.read_bytes())
        assert outputs[0] == outputs[1]

    def test_truncation_exit_code(self, tmp_path):
        """Test a truncated run still writes its outputs."""
        summary = tmp_path / 'sum.json'
        code = main(['sim', '--n', '500', '--p', '0.02', '--k', '2', '--tau',
                     '0', '--a0', '50', '--jobs', '1', '--round-cap', '1',
                     '--summary', str(summary)])
        assert code == 4
        assert json.loads(summary.read_text())['truncated_count'] == 1

    def test_seed_from_environment(self, tmp_path, monkeypatch):
        """Test the environment seed wins over the flag."""
        monkeypatch.setenv(config.SEED_ENV_VAR, '31')
        summary = tmp_path / 'sum.json'
        assert main(['sim', *self.MID, '--seed', '2', '--summary',
                     str(summary)]) == 0
        assert json.loads(summary.read_text())['base_seed'] == 31

    def test_event_log_and_graph(self, tmp_path):
        """Test the optional async outputs."""
        events, graph = tmp_path / 'events.csv', tmp_path / 'graph.gz'
        code = main(['sim', *self.MID, '--engine', 'async', '--events',
                     str(events), '--graph', str(graph), '--summary',
                     str(tmp_path / 's.json')])
        assert code == 0
        frame = pd.read_csv(events)
        assert list(frame.columns) == async_engine.EVENT_COLUMNS
        assert load_graph(str(graph)).params.n == 500

    def test_oversized_graph_fails_before_simulating(self, tmp_path):
        """Test the edge budget is checked before any trial runs."""
        graph, summary = tmp_path / 'graph.gz', tmp_path / 'sum.json'
        code = main(['sim', '--n', '1e6', '--p', '0.01', '--k', '2', '--tau',
                     '0', '--a0', '0', '--jobs', '1', '--graph', str(graph),
                     '--summary', str(summary)])
        assert code == 2
        assert not summary.exists()
        assert not graph.exists()

    def test_sweep(self, tmp_path, capsys):
        """Test a sweep prints one point per value."""
        code = main(['sweep', *self.MID, '--param', 'a0', '--values', '5,10',
                     '--trials', '2'])
        points = json.loads(capsys.readouterr().out)
        assert code == 0
        assert [point['value'] for point in points] == [5, 10]

    def test_validate(self, capsys):
        """Test the concentration report."""
        code = main(['validate', '--n', '1e4', '--p', '1.29e-3', '--k', '2',
                     '--tau', '0', '--a0', '120', '--trials', '2', '--band',
                     '1', '--jobs', '1'])
        report = json.loads(capsys.readouterr().out)
        assert code == 0
        assert report['pass_fraction'] == 1.0
        assert report['flags'] == []

    def test_chaos_returns_c_min(self, chaotic, capsys):
        """Test a target read off the predictor returns c_min."""
        a_c = theory.compute_threshold(chaotic)
        target = theory.stopping_size(chaotic, 1.5 * a_c, 0.1)[1]
        code = main(['chaos', '--n', '1e5', '--p', '3.16e-4', '--k', '2',
                     '--tau', '0.5', '--gamma', '3', '--target', repr(target)])
        report = json.loads(capsys.readouterr().out)
        assert code == 0
        assert report['c_found'] == 1.5
        assert report['plateau_table']
        assert report['nonmonotone_pairs']

    def test_chaos_wrong_regime(self, capsys):
        """Test weak inhibition exits with a regime error."""
        code = main(['chaos', '--n', '1e5', '--p', '3.16e-4', '--k', '2',
                     '--tau', '0.2', '--gamma', '3', '--target', '1000'])
        assert code == 3
        assert 'WrongRegime' in capsys.readouterr().err
