"""Rollout engine tests: session priming, per-variant context assembly,
kinematics passthrough, the oracle denoiser, and determinism."""

import numpy as np
import pytest

from worldlab.diffusion_core import ddpm_step, make_schedule, noisify
from worldlab.errors import ConfigError, StateError
from worldlab.gridworld import Action, generate_map, load_dataset, rollout_random, save_dataset, step
from worldlab.latent_codec import encode
from worldlab.memory_retrieval import state_distances
from worldlab.rollout_engine import (
    GenerationTrace,
    RolloutConfig,
    close_session,
    generate_next,
    init_session,
    make_oracle_denoiser,
    oracle_rollout,
    rollout,
)
from worldlab.trainer import init_pose_params
from worldlab.world_model import ModelConfig, init_params

TINY_MODEL = ModelConfig(
    hidden=16, heads=2, depth=1, embed_dim=8, window=8, patch=8, mlp_ratio=2
)


@pytest.fixture(scope="module")
def trajectory():
    tile_map = generate_map(7)
    return rollout_random(tile_map, seed=1, length=90)


@pytest.fixture(scope="module")
def params():
    return init_params(TINY_MODEL, np.random.default_rng(0))


class TestRolloutConfig:
    def test_dict_roundtrip(self):
        config = RolloutConfig(variant="vrag", window=8, retrieved=3, seed=5)
        assert RolloutConfig.from_dict(config.to_dict()) == config

    def test_unknown_field_rejected(self):
        data = RolloutConfig().to_dict()
        data["temperature"] = 1.0
        with pytest.raises(ConfigError, match="temperature"):
            RolloutConfig.from_dict(data)

    def test_unknown_variant(self):
        with pytest.raises(ConfigError, match="variant"):
            RolloutConfig(variant="markov")

    def test_retrieved_needs_room_for_context(self):
        with pytest.raises(ConfigError, match="retrieved"):
            RolloutConfig(variant="vrag", window=8, retrieved=7)

    def test_retrieved_rejected_for_df(self):
        with pytest.raises(ConfigError, match="retrieved"):
            RolloutConfig(variant="df", retrieved=2)

    def test_t_retrieved_bounded_by_low_noise_band(self):
        with pytest.raises(ConfigError, match="t_retrieved"):
            RolloutConfig(variant="vrag", retrieved=3, t_retrieved=11)
        RolloutConfig(variant="vrag", retrieved=3, t_retrieved=10)

    def test_window_capped_by_model(self, trajectory, params):
        with pytest.raises(ConfigError, match="window"):
            init_session(params, TINY_MODEL, RolloutConfig(window=9), trajectory)
        with pytest.raises(ConfigError, match="model.window"):
            init_session(params, TINY_MODEL, RolloutConfig(variant="infini", window=10), trajectory)
        over = RolloutConfig(variant="yarn", window=40, yarn_stretch=4.0)
        with pytest.raises(ConfigError, match="stretch"):
            init_session(params, TINY_MODEL, over, trajectory)


class TestSessionPriming:
    def test_context_and_buffer_after_priming(self, trajectory, params):
        config = RolloutConfig(variant="vrag", window=8, retrieved=3)
        session = init_session(params, TINY_MODEL, config, trajectory, prime=10)
        capacity = config.window - config.retrieved - 1
        assert session.context_indices == list(range(10 - capacity, 10))
        assert len(session.buffer) == 10
        assert session.frame_count == 10
        assert session.state == trajectory.state_at(9)
        latents = encode(trajectory.frames[:10], patch=TINY_MODEL.patch)
        np.testing.assert_array_equal(session.context_latents[-1], latents[9])

    def test_default_prime_is_window(self, trajectory, params):
        session = init_session(params, TINY_MODEL, RolloutConfig(window=8), trajectory)
        assert session.frame_count == 8
        assert len(session.context_latents) == 7

    def test_prime_bounds(self, trajectory, params):
        with pytest.raises(ConfigError, match="prime"):
            init_session(params, TINY_MODEL, RolloutConfig(window=8), trajectory, prime=0)
        with pytest.raises(ConfigError, match="prime"):
            init_session(params, TINY_MODEL, RolloutConfig(window=8), trajectory, prime=1000)

    def test_history_needs_long_prime(self, trajectory, params):
        config = RolloutConfig(variant="history", window=8, retrieved=5)
        with pytest.raises(ConfigError, match="history"):
            init_session(params, TINY_MODEL, config, trajectory, prime=20)

    def test_single_frame_prime_generates(self, trajectory, params):
        session = init_session(params, TINY_MODEL, RolloutConfig(window=8), trajectory, prime=1)
        frame, trace = generate_next(session, trajectory.action_at(0))
        assert frame.shape == (32, 32, 3) and frame.dtype == np.uint8
        assert trace.frame_index == 1


class TestKinematicsPassthrough:
    def test_replayed_states_match_ground_truth(self, trajectory, params):
        config = RolloutConfig(variant="df", window=8, seed=2)
        result = rollout(params, TINY_MODEL, config, trajectory, length=30)
        np.testing.assert_array_equal(result.states, trajectory.states[:30])

    def test_interactive_states_follow_engine(self, trajectory, params):
        session = init_session(params, TINY_MODEL, RolloutConfig(window=8), trajectory, prime=5)
        tile_map = generate_map(trajectory.map_seed)
        expected = trajectory.state_at(4)
        for action in (Action(move=1), Action(turn=1), Action(move=1, jump=1)):
            _, trace = generate_next(session, action)
            expected = step(expected, action, tile_map)
            np.testing.assert_array_equal(
                np.asarray(trace.state, dtype=np.float32), expected.as_array()
            )


class TestContextSliding:
    def test_window_slides_after_filling(self, trajectory, params):
        config = RolloutConfig(variant="df", window=8, seed=0)
        session = init_session(params, TINY_MODEL, config, trajectory, prime=3)
        for i in range(10):
            generate_next(session, trajectory.action_at(2 + i))
        assert len(session.context_latents) == 7
        assert session.context_indices == list(range(6, 13))

    def test_buffer_tracks_generated_frames(self, trajectory, params):
        config = RolloutConfig(variant="vrag", window=8, retrieved=3, seed=0)
        session = init_session(params, TINY_MODEL, config, trajectory, prime=6)
        for i in range(4):
            generate_next(session, trajectory.action_at(5 + i))
        assert len(session.buffer) == 10
        assert session.buffer.entries[-1].frame_index == 9

    def test_infini_context_oscillates_and_memory_fills(self, trajectory, params):
        config = RolloutConfig(variant="infini", window=8, seed=0)
        session = init_session(params, TINY_MODEL, config, trajectory, prime=8)
        lengths = []
        for i in range(10):
            generate_next(session, trajectory.action_at(7 + i))
            lengths.append(len(session.context_latents))
        assert max(lengths) == TINY_MODEL.window
        assert min(lengths) > TINY_MODEL.window // 2
        norms = [float(np.abs(np.asarray(n.data)).sum()) for _, n in session.memory]
        assert all(n > 0 for n in norms)


class TestTraces:
    def test_df_trace_contract(self, trajectory, params):
        config = RolloutConfig(variant="df", window=8, seed=1)
        result = rollout(params, TINY_MODEL, config, trajectory, length=14)
        assert [t.frame_index for t in result.traces] == list(range(8, 14))
        assert all(t.retrieved == () for t in result.traces)
        assert all(t.distances == () for t in result.traces)
        trace_dict = result.traces[0].to_dict()
        assert set(trace_dict) == {"frame_index", "state", "true_state", "retrieved", "distances"}

    def test_vrag_trace_lists_past_frames_with_distances(self, trajectory, params):
        config = RolloutConfig(variant="vrag", window=8, retrieved=3, seed=1)
        result = rollout(params, TINY_MODEL, config, trajectory, length=16)
        for trace in result.traces:
            assert len(trace.retrieved) == 3
            assert list(trace.retrieved) == sorted(trace.retrieved)
            assert max(trace.retrieved) < trace.frame_index
            assert len(trace.distances) == 3
            assert all(d >= 0.0 for d in trace.distances)

    def test_trace_distances_match_recomputation(self, trajectory, params):
        config = RolloutConfig(variant="vrag", window=8, retrieved=3, seed=1)
        result = rollout(params, TINY_MODEL, config, trajectory, length=12)
        trace = result.traces[0]
        stored = trajectory.states[list(trace.retrieved)]
        expected = state_distances(
            stored, np.asarray(trace.state, dtype=np.float32), np.asarray(config.retrieval_weights)
        )
        np.testing.assert_allclose(np.asarray(trace.distances), expected, rtol=1e-6)


class TestDeterminism:
    def test_bit_identical_reruns(self, trajectory, params):
        config = RolloutConfig(variant="vrag", window=8, retrieved=3, seed=9)
        one = rollout(params, TINY_MODEL, config, trajectory, length=18)
        two = rollout(params, TINY_MODEL, config, trajectory, length=18)
        np.testing.assert_array_equal(one.frames, two.frames)
        assert one.traces == two.traces

    def test_seed_changes_generations(self, trajectory, params):
        base = dict(variant="df", window=8)
        one = rollout(params, TINY_MODEL, RolloutConfig(seed=0, **base), trajectory, length=12)
        two = rollout(params, TINY_MODEL, RolloutConfig(seed=1, **base), trajectory, length=12)
        assert not np.array_equal(one.frames[8:], two.frames[8:])

    def test_history_reruns_match(self, trajectory, params):
        config = RolloutConfig(variant="history", window=8, retrieved=5, seed=3)
        one = rollout(params, TINY_MODEL, config, trajectory, prime=62, length=70)
        two = rollout(params, TINY_MODEL, config, trajectory, prime=62, length=70)
        np.testing.assert_array_equal(one.frames, two.frames)
        assert one.traces == two.traces


class TestOracleDenoiser:
    def test_single_step_inverts_noising(self):
        schedule = make_schedule(50, 1e-4, 0.02)
        rng = np.random.default_rng(0)
        z0 = rng.standard_normal((3, 4, 4)).astype(np.float32)
        eps = rng.standard_normal(z0.shape).astype(np.float32)
        z1 = noisify(z0, 1, eps, schedule)
        denoiser = make_oracle_denoiser(z0, schedule)
        recovered = ddpm_step(z1, denoiser(z1, 1), 1, schedule)
        np.testing.assert_allclose(recovered, z0, atol=1e-5)

    def test_full_chain_reproduces_frames_exactly(self, trajectory):
        config = RolloutConfig(variant="df", window=8, seed=4)
        result = oracle_rollout(config, trajectory, length=30, patch=8)
        np.testing.assert_array_equal(result.frames, trajectory.frames[:30])

    def test_vrag_machinery_does_not_disturb_oracle(self, trajectory):
        config = RolloutConfig(variant="vrag", window=8, retrieved=3, seed=4)
        result = oracle_rollout(config, trajectory, length=24, patch=8)
        np.testing.assert_array_equal(result.frames, trajectory.frames[:24])
        assert all(len(t.retrieved) == 3 for t in result.traces)


class TestRolloutResult:
    def test_length_validation(self, trajectory, params):
        config = RolloutConfig(variant="df", window=8)
        with pytest.raises(ConfigError, match="cannot roll"):
            rollout(params, TINY_MODEL, config, trajectory, length=1000)
        with pytest.raises(ConfigError, match="exceed"):
            rollout(params, TINY_MODEL, config, trajectory, length=8, prime=8)

    def test_to_trajectory_roundtrips(self, trajectory, params, tmp_path):
        config = RolloutConfig(variant="df", window=8, seed=6)
        result = rollout(params, TINY_MODEL, config, trajectory, length=12)
        generated = result.to_trajectory(extra_meta={"note": "test"})
        assert generated.meta["generated"] is True
        assert generated.meta["prime"] == 8
        assert generated.meta["variant"] == "df"
        path = tmp_path / "generated.wmt"
        save_dataset(path, [generated], extra_meta=generated.meta)
        loaded, header = load_dataset(path)
        np.testing.assert_array_equal(loaded[0].frames, result.frames)
        assert loaded[0].meta["generated"] is True
        assert header["meta"]["variant"] == "df"

    def test_config_defaults_drive_prime_and_length(self, trajectory, params):
        config = RolloutConfig(variant="df", window=8, init_length=5, horizon=4, seed=0)
        result = rollout(params, TINY_MODEL, config, trajectory)
        assert result.prime == 5
        assert len(result.frames) == 9

    def test_explicit_actions_extend_past_trajectory(self, trajectory, params):
        config = RolloutConfig(variant="df", window=8, seed=0)
        moves = [Action(move=1), Action(turn=1), Action(move=1), Action(strafe=-1)]
        result = rollout(params, TINY_MODEL, config, trajectory, prime=6, actions=moves)
        assert len(result.frames) == 10
        np.testing.assert_array_equal(result.actions[5], Action(move=1).as_array())
        np.testing.assert_array_equal(result.actions[8], Action(strafe=-1).as_array())
        tile_map = generate_map(trajectory.map_seed)
        expected = trajectory.state_at(5)
        for i, action in enumerate(moves):
            expected = step(expected, action, tile_map)
            np.testing.assert_array_equal(result.states[6 + i], expected.as_array())

    def test_invalid_explicit_actions_rejected(self, trajectory, params):
        config = RolloutConfig(variant="df", window=8)
        with pytest.raises(ConfigError, match="action"):
            rollout(params, TINY_MODEL, config, trajectory, prime=6, actions=[[2, 0, 0, 0]])


class TestSessionLifecycle:
    def test_closed_session_rejects_generation(self, trajectory, params):
        session = init_session(params, TINY_MODEL, RolloutConfig(window=8), trajectory, prime=4)
        generate_next(session, trajectory.action_at(3))
        close_session(session)
        with pytest.raises(StateError, match="closed"):
            generate_next(session, trajectory.action_at(4))


class TestPoseSource:
    def test_predicted_needs_pose_params(self, trajectory, params):
        config = RolloutConfig(variant="df", window=8, pose_source="predicted")
        with pytest.raises(ConfigError, match="pose"):
            init_session(params, TINY_MODEL, config, trajectory)

    def test_unknown_pose_source_rejected(self):
        with pytest.raises(ConfigError, match="pose_source"):
            RolloutConfig(pose_source="hybrid")

    def test_predicted_track_diverges_but_truth_is_kept(self, trajectory, params):
        # A fresh pose net has a zero output layer, so its deltas are exactly
        # zero and the predicted track freezes at the last primed state while
        # the kinematic track keeps moving.
        pose = init_pose_params(np.random.default_rng(0))
        config = RolloutConfig(variant="df", window=8, pose_source="predicted", seed=3)
        result = rollout(
            params, TINY_MODEL, config, trajectory, length=14, pose_params=pose
        )
        assert result.pose_source == "predicted"
        np.testing.assert_array_equal(result.true_states, trajectory.states[:14])
        for trace in result.traces:
            assert trace.true_state == tuple(
                float(v) for v in trajectory.states[trace.frame_index]
            )
        frozen = np.repeat(trajectory.states[7][None], 6, axis=0)
        np.testing.assert_array_equal(result.states[8:], frozen)

    def test_ground_truth_tracks_coincide(self, trajectory, params):
        config = RolloutConfig(variant="df", window=8, seed=3)
        result = rollout(params, TINY_MODEL, config, trajectory, length=12)
        np.testing.assert_array_equal(result.states, result.true_states)
