import numpy as np
import pytest

from asap.attnio import TransitionMatrix, build_stack
from asap.errors import AlphaOutOfRange, ConfigError
from asap.synth import SynthConfig, gen_sink_stack, gen_uniform_stack
from asap.walk import WalkConfig, accumulate, lazify

from conftest import random_stack
from oracles import direct_accumulate, oracle_trigger_layer


def identity_stack(n=4, layers=5):
    return build_stack(np.broadcast_to(np.eye(n), (layers, 1, n, n)).copy())


class TestLazify:
    def test_identity_fixed_point(self):
        eye = TransitionMatrix(np.eye(4))
        for alpha in (0.1, 0.5, 0.9):
            assert np.array_equal(lazify(eye, alpha).data, np.eye(4))

    def test_hand_oracle(self):
        a = TransitionMatrix(np.array([[0.5, 0.5], [0.5, 0.5]]))
        out = lazify(a, 0.5)
        assert np.allclose(out.data, [[0.75, 0.25], [0.25, 0.75]], atol=1e-15)

    @pytest.mark.parametrize("alpha", [1.0, 0.0, -0.2, 1.5])
    def test_open_interval_boundary(self, alpha):
        a = TransitionMatrix(np.eye(3))
        with pytest.raises(AlphaOutOfRange):
            lazify(a, alpha)

    def test_diagonal_floor(self, rng):
        for _ in range(20):
            n = int(rng.integers(2, 16))
            alpha = float(rng.uniform(0.05, 0.95))
            a = TransitionMatrix(rng.dirichlet(np.ones(n), size=n))
            out = lazify(a, alpha)
            assert out.data.diagonal().min() >= (1 - alpha) - 1e-12
            assert np.abs(out.data.sum(axis=1) - 1.0).max() < 1e-9


class TestWalkConfig:
    def test_alpha_validation(self):
        with pytest.raises(AlphaOutOfRange):
            WalkConfig(alpha=1.0)

    def test_tau_validation(self):
        with pytest.raises(ConfigError):
            WalkConfig(tau=1.0)

    def test_max_layers_validation(self):
        with pytest.raises(ConfigError):
            WalkConfig(max_layers=0)


class TestAccumulate:
    def test_identity_chain_constant_history(self):
        state = accumulate(identity_stack(), WalkConfig(alpha=0.5, tau=7.0))
        assert state.trigger_layer is None
        assert state.depth == 5
        assert np.allclose(state.column_sum_history, 1.0, atol=1e-12)

    def test_sink_stack_matches_direct_product_oracle(self):
        stack = gen_sink_stack(
            SynthConfig(n=8, l=12, h=1, margin=0.3, sink_index=5, seed=3)
        )
        cfg = WalkConfig(alpha=0.5, tau=7.0)
        state = accumulate(stack, cfg)
        _, history = direct_accumulate(stack, cfg.alpha)
        expected_trigger = oracle_trigger_layer(history, cfg.tau)
        assert expected_trigger is not None and expected_trigger < 12
        assert state.trigger_layer == expected_trigger
        assert state.depth == expected_trigger
        assert np.allclose(state.column_sum_history, history[:state.depth], atol=1e-9)
        # mass piles up monotonically on the planted sink column
        assert np.all(np.diff(state.column_sum_history) > 0)

    def test_uniform_stack_never_triggers(self):
        stack = gen_uniform_stack(SynthConfig(n=6, l=8, seed=0))
        state = accumulate(stack, WalkConfig(alpha=0.5, tau=1.05))
        assert state.trigger_layer is None
        assert np.abs(state.column_sum_history - 1.0).max() < 1e-9

    def test_no_early_stop_runs_full_depth(self):
        stack = gen_sink_stack(
            SynthConfig(n=8, l=12, h=1, margin=0.3, sink_index=5, seed=3)
        )
        cfg = WalkConfig(alpha=0.5, tau=7.0, early_stop=False)
        state = accumulate(stack, cfg)
        assert state.depth == 12
        assert len(state.column_sum_history) == 12
        assert state.trigger_layer is not None
        assert state.matrices is not None and len(state.matrices) == 12

    def test_max_layers_caps_depth(self):
        stack = identity_stack(layers=6)
        state = accumulate(stack, WalkConfig(max_layers=3))
        assert state.depth == 3

    def test_streaming_mode_drops_history(self):
        state = accumulate(identity_stack(), WalkConfig())
        assert state.matrices is None

    def test_associativity_against_one_shot_product(self, rng):
        for _ in range(15):
            stack = random_stack(rng)
            alpha = float(rng.choice([0.3, 0.5, 0.7]))
            state = accumulate(stack, WalkConfig(alpha=alpha, tau=1e6, early_stop=False))
            oracle_p, _ = direct_accumulate(stack, alpha)
            assert np.abs(state.cumulative.data - oracle_p).max() < 1e-9

    def test_intermediate_row_stochasticity(self, rng):
        for _ in range(10):
            stack = random_stack(rng)
            state = accumulate(stack, WalkConfig(tau=1e6, keep_history=True))
            for m in state.matrices:
                assert np.abs(m.data.sum(axis=1) - 1.0).max() < 1e-9

    def test_matrix_at_bounds(self):
        state = accumulate(identity_stack(), WalkConfig(keep_history=True))
        assert state.matrix_at(1).n == 4
        assert state.matrix_at(state.depth) is state.cumulative
        with pytest.raises(ConfigError):
            state.matrix_at(0)
        with pytest.raises(ConfigError):
            state.matrix_at(state.depth + 1)
