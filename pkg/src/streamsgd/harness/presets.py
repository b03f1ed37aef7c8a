"""Named experiment presets, stored as config text.

Every preset accepts ``scale`` to shrink ``d`` and ``T`` together; explicit
``d`` or ``T`` overrides applied afterwards take precedence.
"""

from __future__ import annotations

from .config import ConfigError, RunConfig, parse_config

__all__ = ["PRESETS", "preset_text", "load_preset"]

_LR = """
[run]
kind = regress
seed = 20240501
T = 999999
replications = 20
log_stride = geom

[problem]
d = 99
beta = random
sigma = 1.0

[process]
covariates = {cov}
noise = {noise}

[stepsize]
c_a = {c_a}
c_b = {c_b}
lambda_min = 1.0
warmup = oracle

[sweep]
{sweep}
"""

_LSR = """
[run]
kind = sparse
seed = 20240502
T = 9999999
replications = 20
log_stride = geom

[problem]
d = 99
sigma = 1.0
signals = 4, 2.99, 0.04, 0.004
signal_scale = {mult}
signal_unit = noise

[process]
covariates = sphere-ar
noise = dependent-sign

[stepsize]
c_a = 3.0
c_b = 100.0
lambda_min = 1.0
warmup = oracle

[sparse]
mode = heuristic
rho = 10.0
min_gap = 1000
check_every = 16
max_updates = 7
compare_dense = true
"""

_LBD = """
[run]
kind = bandit
seed = 20240503
T = 500000
replications = 20
log_stride = 1000

[problem]
d = 100
sigma = 1.0
arms = example

[process]
covariates = sphere-ar
noise = dependent-sign

[stepsize]
c_a = 20.0
c_b = 50.0
lambda_min = 1.0
warmup = 50d

[sweep]
explore.schedule = const(0.5), shifted-power(c=5, b=50, p=0.5, t1=warmup, pre=1), shifted-power(c=5, b=50, p=1, t1=warmup, pre=1)
"""

_LBD_ORACLE = """
[run]
kind = bandit
seed = 20240504
T = 250000
replications = 20
log_stride = 1000

[problem]
d = 2
sigma = 1.0
arms = example

[process]
covariates = iid
noise = iid

[stepsize]
c_a = 20.0
c_b = 1200.0
lambda_min = 1.0
warmup = 0

[explore]
schedule = two-phase-zero(t1=oracle, rate=0.5)
"""

_INFER = """
[run]
kind = infer
seed = 2024
T = 100000
replications = 500

[problem]
d = 2
beta = 1, -0.5
sigma = 1.0

[process]
covariates = iid
noise = iid

[stepsize]
c_a = 3.0
c_b = 27.0
lambda_min = 1.0
warmup = 0

[explore]
schedule = const(0)

[infer]
level = 0.95
"""

PRESETS = {
    "fig-lr-ca-iid": _LR.format(cov="iid", noise="iid", c_a=3.0, c_b=100.0,
                                sweep="stepsize.c_a = 3, 10, 50"),
    "fig-lr-ca-dep": _LR.format(cov="sphere-ar", noise="dependent-sign", c_a=3.0, c_b=100.0,
                                sweep="stepsize.c_a = 3, 10, 50"),
    "fig-lr-cb-iid": _LR.format(cov="iid", noise="iid", c_a=3.0, c_b=100.0,
                                sweep="stepsize.c_b = 5, 100, 1000"),
    "fig-lr-cb-dep": _LR.format(cov="sphere-ar", noise="dependent-sign", c_a=3.0, c_b=100.0,
                                sweep="stepsize.c_b = 5, 100, 1000"),
    "fig-lsr-low-snr": _LSR.format(mult=1.0),
    "fig-lsr-high-snr": _LSR.format(mult=100.0),
    "fig-lbd": _LBD,
    "fig-lbd-oracle": _LBD_ORACLE,
    "infer-coverage": _INFER,
}


def preset_text(name: str) -> str:
    try:
        return PRESETS[name].lstrip()
    except KeyError:
        raise ConfigError(f"unknown preset {name!r}; known: {', '.join(sorted(PRESETS))}") from None


def load_preset(name: str, scale: float = 1.0, **overrides) -> RunConfig:
    """Parse a preset, apply ``scale``, then ``section.key`` overrides.

    Overrides are given with ``__`` in place of the dot, e.g.
    ``load_preset("fig-lbd", scale=0.2, run__T=100000)``.
    """
    cfg = parse_config(preset_text(name))
    if scale != 1.0:
        cfg = cfg.scaled(scale)
    for key, val in overrides.items():
        cfg = cfg.with_value(key.replace("__", "."), val if isinstance(val, str) else str(val))
    return cfg
