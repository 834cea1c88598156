import math

import numpy as np
import pytest
import scipy.stats
from hypothesis import given, settings
from hypothesis import strategies as st

from asap.attnio import TransitionMatrix
from asap.errors import (
    ConfigError,
    DegeneratePhi,
    LengthMismatch,
    SinkIsCls,
    TooShort,
)
from asap.geometry import (
    EPSILON_NORM,
    StationaryEstimate,
    diffusion_distances,
    spearman_rank,
    stationary_estimate,
    weighted_diffusion_distances,
)
from asap.walk import WalkConfig, accumulate

from conftest import random_stack
from oracles import (
    scalar_column_mean,
    scalar_distances_to_sink,
    scalar_weighted_distances_to_sink,
)

FOUR_TOKEN_P = TransitionMatrix(np.array([
    [0.70, 0.10, 0.10, 0.10],
    [0.10, 0.70, 0.10, 0.10],
    [0.25, 0.25, 0.25, 0.25],
    [0.10, 0.10, 0.10, 0.70],
]))


def random_cumulative(rng, n=None, layers=None, noise=1.0):
    """Cumulative matrix from a short stack of lazified random layers."""
    stack = random_stack(
        rng, n=n, layers=layers or int(rng.integers(4, 13)), heads=1, noise=noise
    )
    state = accumulate(stack, WalkConfig(alpha=0.5, tau=1e6))
    return state.cumulative


class TestDiffusionDistances:
    def test_identical_rows_have_zero_distance(self):
        p = TransitionMatrix(np.tile([0.2, 0.3, 0.5], (3, 1)))
        field = diffusion_distances(p, 1)
        assert field.raw.max() == 0.0

    def test_orthogonal_rows_sqrt_two(self):
        # token 2's row [0,1,0] against the sink row [1,0,0]
        p = TransitionMatrix(np.array([
            [0.5, 0.5, 0.0],
            [1.0, 0.0, 0.0],
            [0.0, 1.0, 0.0],
        ]))
        field = diffusion_distances(p, 1)
        assert math.isclose(field.raw[1], math.sqrt(2.0), rel_tol=1e-12)

    def test_four_token_scalar_loop_oracle(self):
        field = diffusion_distances(FOUR_TOKEN_P, 2)
        oracle = scalar_distances_to_sink(FOUR_TOKEN_P.data.tolist(), 2)
        assert np.abs(field.raw - oracle).max() < 1e-12
        # hand value: rows 1 and 3 are both sqrt(0.27) from the uniform row
        assert math.isclose(field.raw[0], math.sqrt(0.27), rel_tol=1e-12)
        assert field.raw[1] == 0.0

    def test_sink_zero_is_rejected(self):
        with pytest.raises(SinkIsCls):
            diffusion_distances(FOUR_TOKEN_P, 0)

    def test_sink_out_of_range(self):
        with pytest.raises(ConfigError):
            diffusion_distances(FOUR_TOKEN_P, 4)

    def test_sink_slot_exactly_zero(self, rng):
        for _ in range(10):
            p = random_cumulative(rng, n=12)
            sink = int(rng.integers(1, 12))
            field = diffusion_distances(p, sink)
            assert field.raw[sink - 1] == 0.0

    def test_normalization_formula(self, rng):
        p = random_cumulative(rng, n=16)
        field = diffusion_distances(p, 3)
        expected = (field.raw - field.d_min) / (field.d_max - field.d_min + EPSILON_NORM)
        assert np.array_equal(field.normalized, expected)
        assert field.normalized.min() >= 0.0
        assert field.normalized.max() <= 1.0

    def test_degenerate_field_normalizes_to_zero(self):
        p = TransitionMatrix(np.tile([0.25, 0.25, 0.25, 0.25], (4, 1)))
        field = diffusion_distances(p, 1)
        assert field.d_max == field.d_min == 0.0
        assert np.all(field.normalized == 0.0)

    def test_trajectory_separation_bound(self, rng):
        # a gap of delta in l2 forces a column gap of at least delta / sqrt(N)
        for _ in range(20):
            p = random_cumulative(rng)
            n = p.n
            sink = int(rng.integers(1, n))
            field = diffusion_distances(p, sink)
            for slot, token in enumerate(field.token_indices()):
                delta = field.raw[slot]
                if delta > 0:
                    col_gap = np.abs(p.data[token] - p.data[sink]).max()
                    assert col_gap >= delta / math.sqrt(n) - 1e-12


class TestPairwiseRowDistances:
    def test_matches_scalar_oracle(self, rng):
        from asap.geometry import pairwise_row_distances

        p = random_cumulative(rng, n=10)
        ga, gb = [1, 3, 5], [2, 4, 6, 8]
        got = pairwise_row_distances(p.data[ga], p.data[gb])
        from oracles import scalar_row_distance

        for i, a in enumerate(ga):
            for j, b in enumerate(gb):
                assert got[i, j] == pytest.approx(
                    scalar_row_distance(p.data.tolist(), a, b), abs=1e-12
                )

    def test_bitwise_consistent_with_sink_kernel(self, rng):
        # cross-group scores must use the exact same arithmetic as the
        # token-to-sink distances
        from asap.geometry import pairwise_row_distances, row_distances

        p = random_cumulative(rng, n=12)
        ref = 5
        via_pairwise = pairwise_row_distances(p.data[[ref]], p.data)[0]
        via_sink = row_distances(p.data, ref)
        assert np.array_equal(via_pairwise, via_sink)


class TestStationaryEstimate:
    def test_identity_gives_uniform(self):
        phi = stationary_estimate(TransitionMatrix(np.eye(5)))
        assert np.allclose(phi.phi, 0.2, atol=1e-15)

    def test_equal_rows_give_that_row(self):
        v = np.array([0.1, 0.2, 0.3, 0.4])
        phi = stationary_estimate(TransitionMatrix(np.tile(v, (4, 1))))
        assert np.allclose(phi.phi, v, atol=1e-12)

    def test_matches_scalar_column_mean(self, rng):
        p = random_cumulative(rng, n=8)
        phi = stationary_estimate(p)
        oracle = np.array(scalar_column_mean(p.data.tolist()))
        oracle = np.maximum(oracle, 1e-12)
        oracle /= oracle.sum()
        assert np.abs(phi.phi - oracle).max() < 1e-12

    def test_strictly_positive_and_normalized(self, rng):
        for _ in range(10):
            p = random_cumulative(rng)
            phi = stationary_estimate(p)
            assert phi.phi.min() > 0
            assert abs(phi.phi.sum() - 1.0) < 1e-9

    def test_validation_rejects_nonpositive(self):
        with pytest.raises(DegeneratePhi):
            StationaryEstimate(np.array([0.5, 0.5, 0.0]))

    def test_validation_rejects_bad_sum(self):
        with pytest.raises(DegeneratePhi):
            StationaryEstimate(np.array([0.5, 0.6]))


class TestWeightedDistances:
    def test_uniform_phi_scales_by_sqrt_n(self, rng):
        p = random_cumulative(rng, n=10)
        phi = StationaryEstimate(np.full(10, 0.1))
        unweighted = diffusion_distances(p, 4).raw
        weighted = weighted_diffusion_distances(p, 4, phi)
        assert np.abs(weighted - unweighted * math.sqrt(10)).max() < 1e-10

    def test_identical_rows_stay_zero(self):
        p = TransitionMatrix(np.tile([0.2, 0.3, 0.5], (3, 1)))
        phi = StationaryEstimate(np.array([0.6, 0.3, 0.1]))
        assert np.all(weighted_diffusion_distances(p, 1, phi) == 0.0)

    def test_matches_scalar_loop_oracle(self, rng):
        for _ in range(10):
            p = random_cumulative(rng, n=8)
            sink = int(rng.integers(1, 8))
            phi = stationary_estimate(p)
            weighted = weighted_diffusion_distances(p, sink, phi)
            oracle = scalar_weighted_distances_to_sink(
                p.data.tolist(), sink, phi.phi.tolist()
            )
            assert np.abs(weighted - oracle).max() < 1e-10

    def test_phi_length_mismatch(self, rng):
        p = random_cumulative(rng, n=6)
        with pytest.raises(LengthMismatch):
            weighted_diffusion_distances(p, 1, StationaryEstimate(np.full(4, 0.25)))

    def test_sink_zero_rejected(self, rng):
        p = random_cumulative(rng, n=6)
        with pytest.raises(SinkIsCls):
            weighted_diffusion_distances(p, 0, stationary_estimate(p))


class TestSpearman:
    def test_identical_orderings(self):
        assert spearman_rank([1.0, 2.0, 3.0], [10.0, 20.0, 30.0]) == pytest.approx(1.0)

    def test_reversed_orderings(self):
        assert spearman_rank([1.0, 2.0, 3.0], [3.0, 2.0, 1.0]) == pytest.approx(-1.0)

    def test_hand_computed_example(self):
        # d^2 = (0,1,1,0): rho = 1 - 6*2 / (4*15) = 0.8
        assert spearman_rank([1, 2, 3, 4], [1, 3, 2, 4]) == pytest.approx(0.8)

    def test_length_mismatch(self):
        with pytest.raises(LengthMismatch):
            spearman_rank([1.0, 2.0], [1.0, 2.0, 3.0])

    def test_too_short(self):
        with pytest.raises(TooShort):
            spearman_rank([1.0], [2.0])

    def test_ties_match_scipy(self, rng):
        for _ in range(25):
            n = int(rng.integers(3, 40))
            a = rng.integers(0, 5, size=n).astype(float)
            b = rng.integers(0, 5, size=n).astype(float)
            if np.unique(a).size < 2 or np.unique(b).size < 2:
                continue
            expected = scipy.stats.spearmanr(a, b).statistic
            assert spearman_rank(a, b) == pytest.approx(expected, abs=1e-12)

    def test_constant_input_returns_zero(self):
        assert spearman_rank([1.0, 1.0, 1.0], [1.0, 2.0, 3.0]) == 0.0

    @given(st.lists(st.floats(-1e6, 1e6), min_size=2, max_size=50))
    @settings(max_examples=60, deadline=None)
    def test_self_correlation_is_one_without_full_ties(self, values):
        a = np.asarray(values)
        if np.unique(a).size < 2:
            assert spearman_rank(a, a) == 0.0
        else:
            assert spearman_rank(a, a) == pytest.approx(1.0)

    @given(
        st.lists(st.floats(-1e6, 1e6), min_size=2, max_size=50),
        st.randoms(use_true_random=False),
    )
    @settings(max_examples=60, deadline=None)
    def test_bounded_in_unit_interval(self, values, pyrandom):
        a = np.asarray(values)
        b = np.asarray(sorted(values, key=lambda _: pyrandom.random()))
        rho = spearman_rank(a, b)
        assert -1.0 - 1e-12 <= rho <= 1.0 + 1e-12


def test_rank_preservation_ensemble(rng):
    # weighted vs unweighted orderings agree almost perfectly on random walks;
    # rows use a softmax-like concentration (flat rows make the patch tokens
    # near-equidistant, where tiny reweightings shuffle otherwise-tied ranks)
    rhos = []
    for _ in range(60):
        p = random_cumulative(rng, n=int(rng.integers(16, 65)), noise=0.05)
        sink = 1 + int(np.argmax(p.data[0, 1:]))
        unweighted = diffusion_distances(p, sink).raw
        weighted = weighted_diffusion_distances(p, sink, stationary_estimate(p))
        rhos.append(spearman_rank(unweighted, weighted))
    assert float(np.mean(rhos)) >= 0.95
