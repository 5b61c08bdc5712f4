"""Environment factories keyed by the config-file ``env`` field."""

from __future__ import annotations

import numpy as np

from ..tabular import TabularTask
from .chain import ChainWorldConfig, chain_mdp, chain_step
from .integrator import (IntegratorConfig, IntegratorEnv, discretize_integrator,
                         integrator_step, reset_states)

ENV_KEYS = ("env", "dt", "grid", "slip_prob", "time_limit", "gamma", "seed")


def chain_config(cfg: dict) -> ChainWorldConfig:
    kw = {k: cfg[k] for k in ("num_states", "slip_prob", "time_limit", "gamma") if k in cfg}
    return ChainWorldConfig(**kw)


def integrator_config(cfg: dict) -> IntegratorConfig:
    kw = {k: cfg[k] for k in ("dt", "time_limit", "gamma", "perturb_prob", "num_actions")
          if k in cfg}
    if "grid" in cfg:
        g = cfg["grid"]
        kw["grid"] = (int(g), int(g)) if np.isscalar(g) else tuple(int(n) for n in g)
    if "reset_box" in cfg:
        kw["reset_box"] = tuple(tuple(b) for b in cfg["reset_box"])
    return IntegratorConfig(**kw)


def make_task(cfg: dict) -> TabularTask:
    """Tabular task for ``env`` in {chain, integrator}."""
    name = cfg.get("env", "chain")
    if name == "chain":
        c = chain_config(cfg)
        mdp = chain_mdp(c)
        return TabularTask(mdp, np.flatnonzero(~mdp.absorbing), c.time_limit, "chain")
    if name == "integrator":
        c = integrator_config(cfg)
        mdp = discretize_integrator(c)
        return TabularTask(mdp, reset_states(c, mdp), c.time_limit, "integrator")
    raise ValueError(f"unknown tabular env {name!r}")


__all__ = [
    "ChainWorldConfig", "IntegratorConfig", "IntegratorEnv", "chain_mdp", "chain_step",
    "discretize_integrator", "integrator_step", "make_task", "integrator_config",
    "chain_config", "reset_states",
]
