"""World-model tests.

The centerpiece oracle is `oracle_forward`: a from-scratch numpy
re-implementation of the full network (condition embedding, modulation,
both attention axes with rotary positions, feed-forward, output head) in
deliberately different style: per-frame/per-head loops, complex-number
rotations, explicit normalization. The production forward must match it.
"""

import math

import numpy as np
import pytest
from scipy.special import erf

from worldlab.context_extension import YarnParams
from worldlab.errors import CheckpointError, ConfigError, DomainError, FormatError, ShapeError
from worldlab.numerics import Tensor, as_tensor, grad_check, parameter
from worldlab.world_model import (
    ModelConfig,
    adaln,
    embed_condition,
    forward,
    fresh_memory,
    infini_ingest,
    init_params,
    load_checkpoint,
    param_shapes,
    rope_angles,
    rope_apply,
    save_checkpoint,
    sinusoidal_features,
    spatial_rope_apply,
)
from worldlab.diffusion_core import df_loss

TINY = ModelConfig(hidden=8, depth=1, heads=2, embed_dim=6, window=4, patch=1, mlp_ratio=2)
SMALL = ModelConfig(hidden=16, depth=2, heads=2, embed_dim=8, window=6, patch=2, mlp_ratio=2)

# ---------------------------------------------------------------- oracles


def gelu_ref(x):
    return x * 0.5 * (1.0 + erf(x / math.sqrt(2.0)))


def rotate_ref(x, position, theta):
    """Split-half rotary rotation written through complex multiplication."""
    half = x.shape[-1] // 2
    z = x[..., :half] + 1j * x[..., half:]
    z = z * np.exp(1j * float(position) * theta)
    return np.concatenate([z.real, z.imag], axis=-1)


def attention_ref(q, k, v, causal):
    """Row-by-row softmax attention."""
    out = np.zeros_like(v)
    scale = 1.0 / math.sqrt(q.shape[-1])
    for i in range(q.shape[0]):
        limit = i + 1 if causal else q.shape[0]
        scores = np.array([q[i] @ k[j] * scale for j in range(limit)])
        weights = np.exp(scores - scores.max())
        weights /= weights.sum()
        for j in range(limit):
            out[i] += weights[j] * v[j]
    return out


def condition_ref(w, cfg, actions, states, timesteps, null_mask):
    half = cfg.embed_dim // 2
    freqs = np.exp(-np.log(10000.0) * np.arange(half) / half)
    angles = np.asarray(timesteps, dtype=np.float64)[:, None] * freqs
    feats = np.concatenate([np.sin(angles), np.cos(angles)], axis=1)
    e = gelu_ref(feats @ w["cond.time.w1"] + w["cond.time.b1"]) @ w["cond.time.w2"] + w["cond.time.b2"]
    names = ("move", "strafe", "turn", "jump")
    for i in range(len(timesteps)):
        if null_mask is not None and null_mask[i]:
            e[i] += w["cond.action.null"]
        else:
            for c, name in enumerate(names):
                e[i] += w[f"cond.action.{name}"][actions[i, c] + 1]
        e[i] += states[i] @ w["cond.state.w"] + w["cond.state.b"]
    return e


def oracle_forward(w, cfg, latents, actions, states, timesteps, null_mask, positions):
    length, _, gh, gw = latents.shape
    n_tokens = gh * gw
    heads, hd = cfg.heads, cfg.hidden // cfg.heads
    theta_t = cfg.rope_base ** (-2.0 * np.arange(hd // 2) / hd)
    theta_s = cfg.rope_base ** (-2.0 * np.arange(hd // 4) / (hd // 2))
    e = condition_ref(w, cfg, actions, states, timesteps, null_mask)

    h = np.zeros((length, n_tokens, cfg.hidden))
    for i in range(length):
        for s in range(n_tokens):
            h[i, s] = latents[i, :, s // gw, s % gw] @ w["patch.w"] + w["patch.b"]

    for b in range(cfg.depth):
        gam = e @ w[f"block{b}.adaln.w_gamma"] + w[f"block{b}.adaln.b_gamma"]
        bet = e @ w[f"block{b}.adaln.w_beta"] + w[f"block{b}.adaln.b_beta"]

        def modulate(h):
            out = np.zeros_like(h)
            for i in range(length):
                for s in range(n_tokens):
                    row = h[i, s]
                    mu = row.mean()
                    var = ((row - mu) ** 2).mean()
                    out[i, s] = gam[i] * (row - mu) / np.sqrt(var + 1e-8) + bet[i]
            return out

        x = modulate(h)
        add = np.zeros_like(h)
        for i in range(length):
            q_all, k_all, v_all = (x[i] @ w[f"block{b}.spatial.w{p}"] for p in "qkv")
            mixed = np.zeros_like(q_all)
            for hd_i in range(heads):
                cols = slice(hd_i * hd, (hd_i + 1) * hd)
                q, k, v = q_all[:, cols].copy(), k_all[:, cols].copy(), v_all[:, cols].copy()
                for s in range(n_tokens):
                    row, col = s // gw, s % gw
                    for arr in (q, k):
                        arr[s, : hd // 2] = rotate_ref(arr[s, : hd // 2], row, theta_s)
                        arr[s, hd // 2 :] = rotate_ref(arr[s, hd // 2 :], col, theta_s)
                mixed[:, cols] = attention_ref(q, k, v, causal=False)
            add[i] = mixed @ w[f"block{b}.spatial.wo"]
        h = h + add

        x = modulate(h)
        add = np.zeros_like(h)
        for s in range(n_tokens):
            q_all, k_all, v_all = (x[:, s] @ w[f"block{b}.temporal.w{p}"] for p in "qkv")
            mixed = np.zeros_like(q_all)
            for hd_i in range(heads):
                cols = slice(hd_i * hd, (hd_i + 1) * hd)
                q, k, v = q_all[:, cols].copy(), k_all[:, cols].copy(), v_all[:, cols].copy()
                for i in range(length):
                    q[i] = rotate_ref(q[i], positions[i], theta_t)
                    k[i] = rotate_ref(k[i], positions[i], theta_t)
                mixed[:, cols] = attention_ref(q, k, v, causal=True)
            add[:, s] = mixed @ w[f"block{b}.temporal.wo"]
        h = h + add

        x = modulate(h)
        h = h + gelu_ref(x @ w[f"block{b}.mlp.w1"] + w[f"block{b}.mlp.b1"]) @ w[f"block{b}.mlp.w2"] + w[f"block{b}.mlp.b2"]

    eps = np.zeros_like(latents)
    for i in range(length):
        for s in range(n_tokens):
            eps[i, :, s // gw, s % gw] = h[i, s] @ w["head.w"] + w["head.b"]
    return eps


# ---------------------------------------------------------------- helpers


def make_inputs(rng, cfg, length, dtype=np.float32, grid=(2, 2)):
    latents = rng.standard_normal((length, cfg.channels, *grid)).astype(dtype)
    actions = rng.integers(-1, 2, size=(length, 4)).astype(np.int64)
    actions[:, 3] = rng.integers(0, 2, size=length)
    states = rng.standard_normal((length, 4)).astype(dtype)
    timesteps = rng.integers(0, 51, size=length)
    positions = np.arange(length, dtype=np.int64)
    return latents, actions, states, timesteps, positions


def params_64(cfg, rng):
    return init_params(cfg, rng, dtype=np.float64)


def randomized_params(cfg, rng, dtype=np.float32):
    """Fresh params with the zero-initialized tensors perturbed too, so
    modulation and the output head actually do something in tests."""
    params = init_params(cfg, rng, dtype=dtype)
    for name, p in params.items():
        if not p.data.any():
            p.data = rng.normal(0.0, 0.05, size=p.data.shape).astype(dtype)
    return params


# ---------------------------------------------------------------- config


def test_config_defaults_and_derived():
    cfg = ModelConfig()
    assert (cfg.hidden, cfg.depth, cfg.heads, cfg.embed_dim) == (128, 4, 4, 128)
    assert (cfg.window, cfg.patch, cfg.rope_base) == (20, 4, 10000.0)
    assert cfg.head_dim == 32
    assert cfg.channels == 48


def test_config_validation():
    with pytest.raises(ConfigError):
        ModelConfig(hidden=10, heads=4)
    with pytest.raises(ConfigError):
        ModelConfig(hidden=8, heads=4)  # head dim 2 cannot split across grid axes
    with pytest.raises(ConfigError):
        ModelConfig(embed_dim=7)
    with pytest.raises(ConfigError):
        ModelConfig(window=1)
    with pytest.raises(ConfigError):
        ModelConfig(depth=0)
    with pytest.raises(ConfigError):
        ModelConfig.from_dict({"hidden": 64, "wings": 2})


def test_config_dict_roundtrip():
    cfg = ModelConfig(hidden=64, depth=2, heads=4, embed_dim=32)
    assert ModelConfig.from_dict(cfg.to_dict()) == cfg


# ---------------------------------------------------------------- params


def test_param_table_matches_init(rng):
    shapes = param_shapes(SMALL)
    params = init_params(SMALL, rng)
    assert sorted(shapes) == sorted(params)
    for name, shape in shapes.items():
        assert tuple(params[name].shape) == shape, name
        assert params[name].data.dtype == np.float32


def test_param_init_values(rng):
    params = init_params(SMALL, rng)
    assert np.array_equal(params["block0.adaln.b_gamma"].data, np.ones(16, dtype=np.float32))
    for name in ("block0.adaln.w_gamma", "block0.adaln.w_beta", "block0.adaln.b_beta",
                 "block0.temporal.gate", "head.w", "head.b", "patch.b"):
        assert not params[name].data.any(), name
    assert params["block0.spatial.wq"].data.std() > 0


# ---------------------------------------------------------------- conditions


def test_sinusoidal_shape_and_zero():
    feats = sinusoidal_features(np.array([0, 3]), 8)
    assert feats.shape == (2, 8)
    assert np.array_equal(feats[0], np.array([0, 0, 0, 0, 1, 1, 1, 1], dtype=np.float32))
    with pytest.raises(ConfigError):
        sinusoidal_features(np.array([1]), 7)


def test_condition_determinism(rng):
    params = randomized_params(SMALL, rng)
    actions = np.array([[1, 0, -1, 0], [1, 0, -1, 0]])
    states = np.zeros((2, 4), dtype=np.float32) + 0.25
    t = np.array([7, 7])
    e = embed_condition(params, SMALL, actions, states, t)
    assert np.array_equal(e.data[0], e.data[1])


def test_condition_zero_init_null_equals_real(rng):
    params = init_params(SMALL, rng)
    for name in params:
        if name.startswith("cond."):
            params[name].data = np.zeros_like(params[name].data)
    real = embed_condition(params, SMALL, np.array([[1, 0, 0, 1]]), np.zeros((1, 4)), np.array([3]))
    null = embed_condition(params, SMALL, np.array([[1, 0, 0, 1]]), np.zeros((1, 4)), np.array([3]),
                           null_mask=np.array([True]))
    assert np.array_equal(real.data, null.data)


def test_condition_null_ignores_action(rng):
    params = randomized_params(SMALL, rng)
    states = rng.standard_normal((3, 4)).astype(np.float32)
    t = np.array([5, 9, 2])
    mask = np.array([True, False, True])
    a1 = np.array([[1, 1, 1, 1], [0, 1, 0, 0], [-1, 0, 1, 0]])
    a2 = np.array([[-1, 0, 0, 0], [0, 1, 0, 0], [1, -1, -1, 1]])
    e1 = embed_condition(params, SMALL, a1, states, t, null_mask=mask)
    e2 = embed_condition(params, SMALL, a2, states, t, null_mask=mask)
    assert np.array_equal(e1.data[mask], e2.data[mask])
    assert np.array_equal(e1.data[1], e2.data[1])


def test_condition_state_mask_blanks_state(rng):
    params = randomized_params(SMALL, rng)
    t = np.array([1, 2])
    actions = np.zeros((2, 4), dtype=np.int64)
    s1 = rng.standard_normal((2, 4)).astype(np.float32)
    s2 = rng.standard_normal((2, 4)).astype(np.float32)
    mask = np.array([0.0, 1.0])
    e1 = embed_condition(params, SMALL, actions, s1, t, state_mask=mask)
    e2 = embed_condition(params, SMALL, actions, s2, t, state_mask=mask)
    assert np.array_equal(e1.data[0], e2.data[0])
    assert not np.array_equal(e1.data[1], e2.data[1])


def test_condition_state_flag_off(rng):
    cfg = ModelConfig(hidden=16, depth=1, heads=2, embed_dim=8, condition_on_state=False)
    params = randomized_params(cfg, rng)
    t = np.array([4])
    actions = np.zeros((1, 4), dtype=np.int64)
    e1 = embed_condition(params, cfg, actions, np.zeros((1, 4)), t)
    e2 = embed_condition(params, cfg, actions, np.full((1, 4), 9.0), t)
    assert np.array_equal(e1.data, e2.data)


def test_condition_validation(rng):
    params = randomized_params(SMALL, rng)
    good = np.zeros((2, 4), dtype=np.int64)
    with pytest.raises(DomainError):
        embed_condition(params, SMALL, good + 2, np.zeros((2, 4)), np.array([1, 1]))
    with pytest.raises(DomainError):
        bad = good.copy()
        bad[0, 3] = -1
        embed_condition(params, SMALL, bad, np.zeros((2, 4)), np.array([1, 1]))
    with pytest.raises(ShapeError):
        embed_condition(params, SMALL, good, np.zeros((3, 4)), np.array([1, 1]))
    with pytest.raises(ShapeError):
        embed_condition(params, SMALL, good, np.zeros((2, 4)), np.array([1, 1]),
                        null_mask=np.array([True]))
    with pytest.raises(DomainError):
        embed_condition(params, SMALL, good.astype(np.float32), np.zeros((2, 4)), np.array([1, 1]))


# ---------------------------------------------------------------- adaln


def test_adaln_identity_modulation(rng):
    d_h, d_e = 6, 4
    h = rng.standard_normal((2, 3, d_h))
    e = rng.standard_normal((2, d_e))
    out = adaln(h, e, np.zeros((d_e, d_h)), np.ones(d_h), np.zeros((d_e, d_h)), np.zeros(d_h))
    mu = h.mean(axis=-1, keepdims=True)
    var = ((h - mu) ** 2).mean(axis=-1, keepdims=True)
    assert np.allclose(out.data, (h - mu) / np.sqrt(var + 1e-8), atol=1e-12)


def test_adaln_zero_gamma_gives_shift_only(rng):
    d_h, d_e = 6, 4
    h = rng.standard_normal((1, 3, d_h))
    e = rng.standard_normal((1, d_e))
    out = adaln(h, e, np.zeros((d_e, d_h)), np.zeros(d_h), np.zeros((d_e, d_h)), np.zeros(d_h))
    assert not out.data.any()


def test_adaln_matches_scalar_loop(rng):
    d_h, d_e, tokens = 8, 5, 4
    h = rng.standard_normal((1, tokens, d_h))
    e = rng.standard_normal((1, d_e))
    w_g, b_g = rng.standard_normal((d_e, d_h)), rng.standard_normal(d_h)
    w_b, b_b = rng.standard_normal((d_e, d_h)), rng.standard_normal(d_h)
    out = adaln(h, e, w_g, b_g, w_b, b_b)
    gamma = e[0] @ w_g + b_g
    beta = e[0] @ w_b + b_b
    for s in range(tokens):
        row = h[0, s]
        mu = row.mean()
        var = ((row - mu) ** 2).mean()
        want = gamma * (row - mu) / np.sqrt(var + 1e-8) + beta
        assert np.max(np.abs(out.data[0, s] - want)) < 1e-6


def test_adaln_shape_error(rng):
    with pytest.raises(ShapeError):
        adaln(rng.standard_normal((2, 3, 6)), rng.standard_normal((3, 4)),
              np.zeros((4, 6)), np.ones(6), np.zeros((4, 6)), np.zeros(6))


# ---------------------------------------------------------------- rope


def test_rope_zero_position_is_identity(rng):
    theta = rope_angles(8, 10000.0)
    q = rng.standard_normal((3, 1, 8))
    k = rng.standard_normal((3, 1, 8))
    q2, k2 = rope_apply(q, k, np.zeros(1, dtype=np.int64), theta)
    assert np.allclose(q2.data, q, atol=1e-15)
    assert np.allclose(k2.data, k, atol=1e-15)


def test_rope_relative_property(rng):
    theta = rope_angles(16, 10000.0)
    q = rng.standard_normal(16)
    k = rng.standard_normal(16)

    def score(m, n):
        qk = np.stack([q, k])[None]  # (1, 2, 16) frames m, n
        qr, kr = rope_apply(qk, qk, np.array([m, n]), theta)
        return float(qr.data[0, 0] @ kr.data[0, 1])

    assert score(5, 2) == pytest.approx(score(13, 10), abs=1e-5)
    assert score(0, 7) == pytest.approx(score(-100, -93), abs=1e-5)


def test_rope_shift_leaves_scores_unchanged(rng):
    theta = rope_angles(8, 10000.0)
    q = rng.standard_normal((2, 5, 8))
    k = rng.standard_normal((2, 5, 8))
    pos = np.array([-100, -99, 0, 1, 2])
    q1, k1 = rope_apply(q, k, pos, theta)
    q2, k2 = rope_apply(q, k, pos + 37, theta)
    s1 = q1.data @ k1.data.swapaxes(-1, -2)
    s2 = q2.data @ k2.data.swapaxes(-1, -2)
    assert np.max(np.abs(s1 - s2)) < 1e-5


def test_rope_validation(rng):
    q = rng.standard_normal((1, 2, 7))
    with pytest.raises(ConfigError):
        rope_apply(q, q, np.array([0, 1]), np.ones(3))
    q = rng.standard_normal((1, 2, 8))
    with pytest.raises(ShapeError):
        rope_apply(q, q, np.array([0, 1]), np.ones(3))
    with pytest.raises(ShapeError):
        rope_apply(q, q, np.array([0, 1, 2]), np.ones(4))
    with pytest.raises(ConfigError):
        rope_angles(7, 10000.0)


def test_spatial_rope_relative_property(rng):
    theta = rope_angles(4, 10000.0)  # axis angles for head dim 8
    gh, gw = 3, 4
    x = rng.standard_normal(8)
    y = rng.standard_normal(8)

    def score(sa, sb):
        q = np.zeros((gh * gw, 8))
        k = np.zeros((gh * gw, 8))
        q[sa] = x
        k[sb] = y
        qr, kr = spatial_rope_apply(q, k, gh, gw, theta)
        return float(qr.data[sa] @ kr.data[sb])

    # token pairs with identical (row delta, col delta)
    a = score(0 * gw + 0, 1 * gw + 2)
    b = score(1 * gw + 1, 2 * gw + 3)
    assert a == pytest.approx(b, abs=1e-5)


# ---------------------------------------------------------------- forward


def test_forward_shapes_and_zero_head(rng):
    params = init_params(TINY, rng)
    latents, actions, states, t, pos = make_inputs(rng, TINY, 3)
    e = embed_condition(params, TINY, actions, states, t)
    out = forward(params, TINY, latents, t, e, pos)
    assert out.shape == latents.shape
    assert not out.data.any()  # zero-initialized output head


def test_forward_batched_matches_solo(rng):
    params = randomized_params(SMALL, rng)
    lat = rng.standard_normal((2, 4, SMALL.channels, 2, 2)).astype(np.float32)
    actions = np.zeros((2, 4, 4), dtype=np.int64)
    states = rng.standard_normal((2, 4, 4)).astype(np.float32)
    t = np.array([[1, 2, 3, 4], [5, 6, 7, 8]])
    pos = np.arange(4)
    e = embed_condition(params, SMALL, actions, states, t)
    out = forward(params, SMALL, lat, t, e, pos)
    for b in range(2):
        eb = embed_condition(params, SMALL, actions[b], states[b], t[b])
        solo = forward(params, SMALL, lat[b], t[b], eb, pos)
        assert np.max(np.abs(out.data[b] - solo.data)) < 1e-6


def test_forward_matches_straight_line_oracle(rng):
    cfg = TINY
    params = randomized_params(cfg, rng, dtype=np.float64)
    latents, actions, states, t, pos = make_inputs(rng, cfg, 2, dtype=np.float64)
    null_mask = np.array([False, True])
    e = embed_condition(params, cfg, actions, states, t, null_mask=null_mask)
    got = forward(params, cfg, latents, t, e, pos).data
    w = {name: p.data for name, p in params.items()}
    want = oracle_forward(w, cfg, latents, actions, states, t, null_mask, pos)
    assert np.max(np.abs(got - want)) < 1e-5
    assert np.max(np.abs(got - want)) < 1e-10  # float64 agreement is much tighter


def test_forward_oracle_deeper_config(rng):
    cfg = SMALL
    params = randomized_params(cfg, rng, dtype=np.float64)
    latents, actions, states, t, pos = make_inputs(rng, cfg, 3, dtype=np.float64, grid=(2, 3))
    e = embed_condition(params, cfg, actions, states, t)
    got = forward(params, cfg, latents, t, e, pos).data
    w = {name: p.data for name, p in params.items()}
    want = oracle_forward(w, cfg, latents, actions, states, t, None, pos)
    assert np.max(np.abs(got - want)) < 1e-10


def test_forward_causality_bit_identity(rng):
    cfg = SMALL
    params = randomized_params(cfg, rng)
    latents, actions, states, t, pos = make_inputs(rng, cfg, 5)
    e = embed_condition(params, cfg, actions, states, t)
    base = forward(params, cfg, latents, t, e, pos).data.copy()
    for j in (1, 3, 4):
        bumped = latents.copy()
        bumped[j] += rng.standard_normal(bumped[j].shape).astype(np.float32)
        out = forward(params, cfg, bumped, t, e, pos).data
        assert np.array_equal(out[:j], base[:j]), f"frame {j} leaked backward"
        assert not np.array_equal(out[j], base[j])


def test_forward_causality_through_conditions(rng):
    cfg = SMALL
    params = randomized_params(cfg, rng)
    latents, actions, states, t, pos = make_inputs(rng, cfg, 5)
    base = forward(params, cfg, latents, t,
                   embed_condition(params, cfg, actions, states, t), pos).data.copy()
    actions2 = actions.copy()
    actions2[3] = [(a + 2) % 3 - 1 for a in actions[3][:3]] + [1 - actions[3][3]]
    t2 = t.copy()
    t2[3] = (t[3] + 7) % 50 + 1
    states2 = states.copy()
    states2[3] += 1.0
    out = forward(params, cfg, latents, t2,
                  embed_condition(params, cfg, actions2, states2, t2), pos).data
    assert np.array_equal(out[:3], base[:3])


def test_forward_single_frame(rng):
    params = randomized_params(TINY, rng)
    latents, actions, states, t, pos = make_inputs(rng, TINY, 1)
    e = embed_condition(params, TINY, actions, states, t)
    out = forward(params, TINY, latents, t, e, pos)
    assert out.shape == latents.shape
    assert np.isfinite(out.data).all()


def test_forward_null_action_invariance(rng):
    cfg = SMALL
    params = randomized_params(cfg, rng)
    latents, actions, states, t, pos = make_inputs(rng, cfg, 4)
    mask = np.array([True, True, False, False])
    flipped = actions.copy()
    flipped[0] = [1, -1, 1, 1]
    flipped[1] = [-1, 1, -1, 0]
    e1 = embed_condition(params, cfg, actions, states, t, null_mask=mask)
    e2 = embed_condition(params, cfg, flipped, states, t, null_mask=mask)
    o1 = forward(params, cfg, latents, t, e1, pos).data
    o2 = forward(params, cfg, latents, t, e2, pos).data
    assert np.max(np.abs(o1 - o2)) < 1e-6


def test_forward_position_shift_invariance(rng):
    cfg = SMALL
    params = randomized_params(cfg, rng, dtype=np.float64)
    latents, actions, states, t, pos = make_inputs(rng, cfg, 4, dtype=np.float64)
    e = embed_condition(params, cfg, actions, states, t)
    o1 = forward(params, cfg, latents, t, e, pos).data
    o2 = forward(params, cfg, latents, t, e, pos + 1234).data
    assert np.max(np.abs(o1 - o2)) < 1e-5


def test_forward_retrieved_style_positions(rng):
    cfg = SMALL
    params = randomized_params(cfg, rng)
    latents, actions, states, t, _ = make_inputs(rng, cfg, 6)
    pos = np.array([-100, -99, -98, 0, 1, 2])
    out = forward(params, cfg, latents, t, embed_condition(params, cfg, actions, states, t), pos)
    assert np.isfinite(out.data).all()


def test_forward_validation(rng):
    params = randomized_params(TINY, rng)
    latents, actions, states, t, pos = make_inputs(rng, TINY, 3)
    e = embed_condition(params, TINY, actions, states, t)
    with pytest.raises(ConfigError):
        forward(params, TINY, latents, t, e, pos, mode="banana")
    with pytest.raises(ShapeError):
        forward(params, TINY, latents, t[:2], e, pos)
    with pytest.raises(ShapeError):
        forward(params, TINY, latents, t, e.data[:2], pos)
    with pytest.raises(ShapeError):
        forward(params, TINY, latents, t, e, pos[:2])
    with pytest.raises(ShapeError):
        bad = np.zeros((3, TINY.channels + 1, 2, 2), dtype=np.float32)
        forward(params, TINY, bad, t, e, pos)
    with pytest.raises(DomainError):
        forward(params, TINY, latents, t, e, pos.astype(np.float64))
    with pytest.raises(ConfigError):
        forward(params, TINY, latents, t, e, pos, mode="yarn")
    with pytest.raises(ConfigError):
        forward(params, TINY, latents, t, e, pos, yarn=YarnParams(dim=TINY.head_dim))
    with pytest.raises(ConfigError):
        forward(params, TINY, latents, t, e, pos, mode="yarn",
                yarn=YarnParams(dim=TINY.head_dim * 2))
    with pytest.raises(ConfigError):
        forward(params, TINY, latents, t, e, pos, mode="yarn",
                yarn=YarnParams(dim=TINY.head_dim, base=500.0))


def test_forward_yarn_extrapolation_equals_vanilla(rng):
    cfg = SMALL
    params = randomized_params(cfg, rng)
    latents, actions, states, t, pos = make_inputs(rng, cfg, 4)
    e = embed_condition(params, cfg, actions, states, t)
    vanilla = forward(params, cfg, latents, t, e, pos).data
    warp = YarnParams(dim=cfg.head_dim, stretch=4.0, context=1e9, base=cfg.rope_base)
    yarned = forward(params, cfg, latents, t, e, pos, mode="yarn", yarn=warp).data
    assert np.array_equal(vanilla, yarned)


def test_forward_yarn_interpolation_changes_output(rng):
    cfg = SMALL
    params = randomized_params(cfg, rng)
    latents, actions, states, t, pos = make_inputs(rng, cfg, 4)
    e = embed_condition(params, cfg, actions, states, t)
    vanilla = forward(params, cfg, latents, t, e, pos).data
    warp = YarnParams(dim=cfg.head_dim, stretch=4.0, context=1e-6, base=cfg.rope_base)
    yarned = forward(params, cfg, latents, t, e, pos, mode="yarn", yarn=warp).data
    assert not np.array_equal(vanilla, yarned)


def test_forward_gradient_check(rng):
    cfg = TINY
    params = params_64(cfg, rng)
    for name, p in params.items():
        if not p.data.any():
            p.data = rng.normal(0.0, 0.05, size=p.data.shape)
    latents, actions, states, t, pos = make_inputs(rng, cfg, 3, dtype=np.float64)
    eps_true = rng.standard_normal(latents.shape)
    mask = np.array([0.0, 1.0, 1.0])
    null_mask = np.array([True, False, False])

    def objective():
        e = embed_condition(params, cfg, actions, states, t, null_mask=null_mask)
        eps_hat = forward(params, cfg, latents, t, e, pos)
        return df_loss(eps_hat, eps_true, mask)

    assert grad_check(objective, params, rng=rng) < 1e-4


# ---------------------------------------------------------------- infini mode


def test_forward_infini_drive_runs(rng):
    cfg = ModelConfig(hidden=8, depth=1, heads=2, embed_dim=6, window=4, patch=1, mlp_ratio=2)
    params = randomized_params(cfg, rng)
    latents, actions, states, t, pos = make_inputs(rng, cfg, 8)
    e = embed_condition(params, cfg, actions, states, t)
    out = forward(params, cfg, latents, t, e, pos, mode="infini")
    assert out.shape == latents.shape
    assert np.isfinite(out.data).all()
    vanilla = forward(params, cfg, latents, t, e, pos).data
    assert not np.array_equal(out.data, vanilla)
    with pytest.raises(ShapeError):
        short = latents[:3]
        forward(params, cfg, short, t[:3], embed_condition(params, cfg, actions[:3], states[:3], t[:3]),
                pos[:3], mode="infini")


def test_forward_infini_memory_path(rng):
    cfg = ModelConfig(hidden=8, depth=2, heads=2, embed_dim=6, window=4, patch=1, mlp_ratio=2)
    params = randomized_params(cfg, rng)
    latents, actions, states, t, pos = make_inputs(rng, cfg, 3)
    e = embed_condition(params, cfg, actions, states, t)
    memory = fresh_memory(cfg, tokens=4)
    out1 = forward(params, cfg, latents, t, e, pos, mode="infini", memory=memory)
    out2 = forward(params, cfg, latents, t, e, pos, mode="infini", memory=memory)
    assert np.array_equal(out1.data, out2.data)  # read-only memory, deterministic
    with pytest.raises(ShapeError):
        forward(params, cfg, latents, t, e, pos, mode="infini", memory=memory[:1])
    with pytest.raises(ConfigError):
        forward(params, cfg, latents, t, e, pos, memory=memory)


def test_infini_ingest_updates_memory(rng):
    cfg = ModelConfig(hidden=8, depth=2, heads=2, embed_dim=6, window=4, patch=1, mlp_ratio=2)
    params = randomized_params(cfg, rng)
    latents, actions, states, t, pos = make_inputs(rng, cfg, 4)
    e = embed_condition(params, cfg, actions, states, t)
    memory = fresh_memory(cfg, tokens=4)
    updated = infini_ingest(params, cfg, latents, t, e, pos, memory)
    assert len(updated) == cfg.depth
    for (m0, n0), (m1, n1) in zip(memory, updated):
        assert m1.shape == m0.shape and n1.shape == n0.shape
        assert not np.array_equal(m1.data, m0.data)
        assert np.all(n1.data >= n0.data)
    # memory state influences subsequent windows
    out_fresh = forward(params, cfg, latents, t, e, pos, mode="infini", memory=memory).data
    out_loaded = forward(params, cfg, latents, t, e, pos, mode="infini", memory=updated).data
    assert not np.array_equal(out_fresh, out_loaded)
    with pytest.raises(ConfigError):
        infini_ingest(params, cfg, latents, t, e, pos, memory, count=4)


# ---------------------------------------------------------------- checkpoints


def test_checkpoint_roundtrip(rng, tmp_path):
    params = randomized_params(SMALL, rng)
    path = tmp_path / "model.wmc"
    save_checkpoint(params, SMALL, path, metadata={"steps": 12, "variant": "df"})
    loaded, cfg, meta = load_checkpoint(path)
    assert cfg == SMALL
    assert meta == {"steps": 12, "variant": "df"}
    assert sorted(loaded) == sorted(params)
    for name in params:
        assert np.array_equal(loaded[name].data, params[name].data), name


def test_checkpoint_forward_identical_after_reload(rng, tmp_path):
    params = randomized_params(SMALL, rng)
    latents, actions, states, t, pos = make_inputs(rng, SMALL, 3)
    e = embed_condition(params, SMALL, actions, states, t)
    before = forward(params, SMALL, latents, t, e, pos).data.copy()
    path = tmp_path / "model.wmc"
    save_checkpoint(params, SMALL, path)
    loaded, cfg, _ = load_checkpoint(path)
    e2 = embed_condition(loaded, cfg, actions, states, t)
    after = forward(loaded, cfg, latents, t, e2, pos).data
    assert np.array_equal(before, after)


def test_checkpoint_corruption_paths(rng, tmp_path):
    params = randomized_params(TINY, rng)
    path = tmp_path / "model.wmc"
    save_checkpoint(params, TINY, path)
    blob = bytearray(path.read_bytes())

    bad = tmp_path / "bad.wmc"
    bad.write_bytes(b"NOPE" + bytes(blob[4:]))
    with pytest.raises(FormatError, match="magic"):
        load_checkpoint(bad)

    bad.write_bytes(bytes(blob[:4]) + (9).to_bytes(4, "little") + bytes(blob[8:]))
    with pytest.raises(CheckpointError, match="version"):
        load_checkpoint(bad)

    bad.write_bytes(bytes(blob[:-10]))
    with pytest.raises(FormatError, match="bytes"):
        load_checkpoint(bad)

    flipped = bytearray(blob)
    flipped[-20] ^= 0xFF
    bad.write_bytes(bytes(flipped))
    with pytest.raises(FormatError, match="checksum"):
        load_checkpoint(bad)


def test_checkpoint_config_mismatch_names_tensor(rng, tmp_path):
    import json as json_mod
    import struct as struct_mod

    params = randomized_params(TINY, rng)
    path = tmp_path / "model.wmc"
    save_checkpoint(params, TINY, path)
    blob = path.read_bytes()
    (header_len,) = struct_mod.unpack("<Q", blob[8:16])
    header = json_mod.loads(blob[16 : 16 + header_len])
    header["config"]["hidden"] = 16
    new_header = json_mod.dumps(header, sort_keys=True, separators=(",", ":")).encode()
    doctored = blob[:8] + struct_mod.pack("<Q", len(new_header)) + new_header + blob[16 + header_len :]
    bad = tmp_path / "doctored.wmc"
    bad.write_bytes(doctored)
    with pytest.raises(CheckpointError, match=r"tensor .* shape|shape"):
        load_checkpoint(bad)
