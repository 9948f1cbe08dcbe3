"""Parameter registry: names, shapes, and initialization.

Every trainable tensor has a stable dotted name; checkpoints serialize them
in the order `param_shapes` yields. Modulation projections and the output
head start at zero so a fresh model applies identity modulation and predicts
zero noise, which keeps early training stable.
"""

import numpy as np

from ..errors import ConfigError
from ..numerics import parameter

ACTION_COMPONENTS = ("move", "strafe", "turn", "jump")
ACTION_CARDINALITY = 3  # component values -1, 0, +1 index rows 0..2
STATE_DIM = 4
INIT_SCALE = 0.02

ZERO_INIT_SUFFIXES = (".w_gamma", ".w_beta", ".b_beta", ".gate")
ONE_INIT_SUFFIXES = (".b_gamma",)


def param_shapes(config):
    """Ordered name -> shape table for every parameter of the model."""
    d_h, d_e, c = config.hidden, config.embed_dim, config.channels
    shapes = {
        "patch.w": (c, d_h),
        "patch.b": (d_h,),
        "cond.time.w1": (d_e, d_e),
        "cond.time.b1": (d_e,),
        "cond.time.w2": (d_e, d_e),
        "cond.time.b2": (d_e,),
        "cond.state.w": (STATE_DIM, d_e),
        "cond.state.b": (d_e,),
        "cond.action.null": (d_e,),
    }
    for component in ACTION_COMPONENTS:
        shapes[f"cond.action.{component}"] = (ACTION_CARDINALITY, d_e)
    for b in range(config.depth):
        prefix = f"block{b}"
        shapes[f"{prefix}.adaln.w_gamma"] = (d_e, d_h)
        shapes[f"{prefix}.adaln.b_gamma"] = (d_h,)
        shapes[f"{prefix}.adaln.w_beta"] = (d_e, d_h)
        shapes[f"{prefix}.adaln.b_beta"] = (d_h,)
        for site in ("spatial", "temporal"):
            for proj in ("wq", "wk", "wv", "wo"):
                shapes[f"{prefix}.{site}.{proj}"] = (d_h, d_h)
        shapes[f"{prefix}.temporal.gate"] = (config.heads,)
        shapes[f"{prefix}.mlp.w1"] = (d_h, config.mlp_ratio * d_h)
        shapes[f"{prefix}.mlp.b1"] = (config.mlp_ratio * d_h,)
        shapes[f"{prefix}.mlp.w2"] = (config.mlp_ratio * d_h, d_h)
        shapes[f"{prefix}.mlp.b2"] = (d_h,)
    shapes["head.w"] = (d_h, c)
    shapes["head.b"] = (c,)
    return shapes


def init_params(config, rng, dtype=np.float32):
    """Fresh parameter dict keyed by dotted names."""
    params = {}
    for name, shape in param_shapes(config).items():
        if name.endswith(ZERO_INIT_SUFFIXES) or name.endswith((".b", ".b1", ".b2")):
            data = np.zeros(shape, dtype=dtype)
        elif name.endswith(ONE_INIT_SUFFIXES):
            data = np.ones(shape, dtype=dtype)
        elif name == "head.w":
            data = np.zeros(shape, dtype=dtype)
        else:
            data = rng.normal(0.0, INIT_SCALE, size=shape).astype(dtype)
        params[name] = parameter(name, data)
    return params


def check_params(params, config):
    """Verify `params` holds exactly the tensors `config` implies."""
    expected = param_shapes(config)
    missing = sorted(set(expected) - set(params))
    if missing:
        raise ConfigError(f"missing parameters: {missing[:4]}")
    extra = sorted(set(params) - set(expected))
    if extra:
        raise ConfigError(f"unexpected parameters: {extra[:4]}")
    for name, shape in expected.items():
        if tuple(params[name].shape) != shape:
            raise ConfigError(
                f"parameter {name} has shape {tuple(params[name].shape)}, expected {shape}"
            )
