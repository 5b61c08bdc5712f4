"""Lagrangian actor-critic updates for the safety specification problem.

Actions are handled in normalised units ``[-1, 1]``. The hitting-time critic
predicts ``(1 - gamma) * Q_T`` so that its output fits the ``[0, 1]`` clamp
shared by all critics; :meth:`AgentBundle.q_t` undoes the scaling.
"""

from __future__ import annotations

from collections import deque
from dataclasses import dataclass, field

import numpy as np

from .mlp import Adam, Mlp, grad_norm, soft_update

CRITIC_LR = 1e-4
ACTOR_LR = 1e-5
MULTIPLIER_LR = 1e-6


@dataclass
class OuNoise:
    """Ornstein-Uhlenbeck exploration noise, one channel per action dimension."""

    dim: int = 1
    mu: float = 0.0
    theta: float = 0.1
    sigma: float = 0.05
    rng: np.random.Generator = field(default_factory=np.random.default_rng)

    def __post_init__(self):
        self.x = np.full(self.dim, self.mu)

    def reset(self) -> None:
        self.x = np.full(self.dim, self.mu)

    def sample(self) -> np.ndarray:
        self.x = self.x + self.theta * (self.mu - self.x) + self.sigma * self.rng.standard_normal(self.dim)
        return self.x.copy()


class AgentBundle:
    """Actors, critics, multipliers, their target copies and the epsilon memory."""

    def __init__(self, state_dim=2, action_dim=1, hidden=(400, 300), gamma=1 - 1e-4,
                 exploratory=False, rng=None, epsilon_agg="min", memory=100,
                 lrs=(CRITIC_LR, ACTOR_LR, MULTIPLIER_LR)):
        if not 0.0 < gamma < 1.0:
            raise ValueError("the actor-critic needs gamma < 1")
        if epsilon_agg not in ("min", "mean"):
            raise ValueError("epsilon_agg must be 'min' or 'mean'")
        rng = np.random.default_rng(rng)
        self.gamma = gamma
        self.t_scale = 1.0 - gamma
        self.state_dim, self.action_dim = state_dim, action_dim
        sa = state_dim + action_dim
        critic_lr, actor_lr, lam_lr = lrs

        self.actor_s = Mlp((state_dim, *hidden, action_dim), "tanh", rng)
        self.critic_v = [Mlp((sa, *hidden, 1), "clamp01", rng, bias=1.0) for _ in range(2)]
        self.critic_t = Mlp((sa, *hidden, 1), "clamp01", rng)
        self.lam_s = Mlp((state_dim, *hidden, 1), "clamp_log", rng)
        self.actor_s_targ = self.actor_s.copy()
        self.actor_s_old = self.actor_s.copy()
        self.critic_v_targ = [c.copy() for c in self.critic_v]
        self.critic_t_targ = self.critic_t.copy()

        self.opt_actor_s = Adam(self.actor_s.params, actor_lr)
        self.opt_v = [Adam(c.params, critic_lr) for c in self.critic_v]
        self.opt_t = Adam(self.critic_t.params, critic_lr)
        self.opt_lam_s = Adam(self.lam_s.params, lam_lr)

        self.exploratory = exploratory
        if exploratory:
            self.actor_e = Mlp((state_dim, *hidden, action_dim), "tanh", rng)
            self.lam_e = Mlp((state_dim, *hidden, 1), "clamp_log", rng)
            self.opt_actor_e = Adam(self.actor_e.params, actor_lr)
            self.opt_lam_e = Adam(self.lam_e.params, lam_lr)

        self.epsilon_agg = epsilon_agg
        self.epsilon_memory: deque[float] = deque(maxlen=memory)
        self.epsilon = 0.0

    # -- evaluation helpers
    def q_v(self, s, a, j=0, target=False):
        net = (self.critic_v_targ if target else self.critic_v)[j]
        return net(np.hstack([s, a]))[:, 0]

    def q_v_min(self, s, a, target=False):
        return np.minimum(self.q_v(s, a, 0, target), self.q_v(s, a, 1, target))

    def q_t(self, s, a, target=False):
        net = self.critic_t_targ if target else self.critic_t
        return net(np.hstack([s, a]))[:, 0] / self.t_scale

    def q_l(self, s, a, epsilon=None):
        eps = self.epsilon if epsilon is None else epsilon
        return self.q_v(s, a) + eps * self.q_t(s, a)

    def multiplier(self, s, which="s"):
        net = self.lam_s if which == "s" else self.lam_e
        return np.exp(net(s)[:, 0])

    def networks(self) -> dict[str, Mlp]:
        nets = {"actor_s": self.actor_s, "actor_s_targ": self.actor_s_targ,
                "critic_v1": self.critic_v[0], "critic_v2": self.critic_v[1],
                "critic_v1_targ": self.critic_v_targ[0], "critic_v2_targ": self.critic_v_targ[1],
                "critic_t": self.critic_t, "critic_t_targ": self.critic_t_targ,
                "lam_s": self.lam_s}
        if self.exploratory:
            nets.update(actor_e=self.actor_e, lam_e=self.lam_e)
        return nets

    def soft_update_targets(self, tau: float) -> None:
        soft_update(self.actor_s_targ, self.actor_s, tau)
        for targ, src in zip(self.critic_v_targ, self.critic_v):
            soft_update(targ, src, tau)
        soft_update(self.critic_t_targ, self.critic_t, tau)

    def snapshot_actor(self) -> None:
        """Freeze the reference actor used for ``a_old`` in the multiplier update."""
        self.actor_s_old.load_from(self.actor_s)


def critic_targets(batch: dict, bundle: AgentBundle, gamma: float | None = None):
    """Bootstrapped regression targets ``(y_v, y_t)``.

    ``y_v`` uses the smaller of the two target critics (double-Q) and
    ``y_t`` is in natural units (steps). Terminal successors do not bootstrap.
    """
    gamma = bundle.gamma if gamma is None else gamma
    s2 = batch["s2"]
    hit = batch["hit"]
    cont = (1.0 - hit) * (1.0 - batch["done"])
    a2 = bundle.actor_s_targ(s2)
    q_next = bundle.q_v_min(s2, a2, target=True)
    t_next = bundle.q_t(s2, a2, target=True)
    y_v = hit + cont * gamma * q_next
    y_t = (1.0 - hit) * (1.0 + cont * gamma * t_next)
    return y_v, y_t


def regression_grad(net: Mlp, x, y):
    """Loss ``mean((z - y)^2)`` on the critic pre-activation ``z`` and its gradient.

    The clamp to ``[0, 1]`` is applied when the critic is read, not while it
    is fitted; otherwise a critic initialised near 1 would sit on the flat
    part of the clamp and never move.
    """
    _, cache = net.forward(x)
    resid = cache[1][:, 0] - y
    grads, _ = net.backward(cache, (2.0 / y.size) * resid[:, None], raw=True)
    return float(np.mean(resid ** 2)), grads


def _regress(net: Mlp, opt: Adam, x, y):
    loss, grads = regression_grad(net, x, y)
    opt.step(grads)
    return loss


def update_critics(batch: dict, bundle: AgentBundle) -> tuple[float, float]:
    """One Adam step on each critic; returns the mean squared residuals
    ``(Q_V loss averaged over both critics, normalised Q_T loss)``."""
    y_v, y_t = critic_targets(batch, bundle)
    x = np.hstack([batch["s"], batch["a"]])
    loss_v = [_regress(c, o, x, y_v) for c, o in zip(bundle.critic_v, bundle.opt_v)]
    loss_t = _regress(bundle.critic_t, bundle.opt_t, x, bundle.t_scale * y_t)
    return float(np.mean(loss_v)), loss_t


def _action_grad(bundle: AgentBundle, s, a, weight_v, weight_l):
    """``d/da`` of ``mean(weight_v * Q_V(s,a) + weight_l * Q_L(s,a))`` through frozen critics.

    The clamp is part of the differentiated function: where a critic sits
    at 0 or 1 the actor receives no push from it.
    """
    n = s.shape[0]
    x = np.hstack([s, a])
    d = bundle.state_dim
    _, cache_v = bundle.critic_v[0].forward(x)
    _, gx_v = bundle.critic_v[0].backward(cache_v, ((weight_v + weight_l) / n)[:, None],
                                          need_params=False)
    grad = gx_v[:, d:]
    if bundle.epsilon != 0:
        _, cache_t = bundle.critic_t.forward(x)
        coef = weight_l * bundle.epsilon / bundle.t_scale / n
        _, gx_t = bundle.critic_t.backward(cache_t, coef[:, None], need_params=False)
        grad = grad + gx_t[:, d:]
    return grad


def _actor_step(actor: Mlp, opt: Adam, bundle, s, weight_v, weight_l, ascend=False):
    a, cache = actor.forward(s)
    g_a = _action_grad(bundle, s, a, weight_v, weight_l)
    grads, _ = actor.backward(cache, g_a)
    if ascend:
        grads = [-g for g in grads]
    opt.step(grads)
    return grad_norm(grads)


def actor_objective_grad(bundle: AgentBundle, s, lam, exploratory=False):
    """Parameter gradient of the actor objective (used for checks).

    SS-actor: ``mean(Q_V + lam * Q_L)`` (to be descended).
    Exploratory: ``mean(Q_V - lam * Q_L)`` (to be ascended).
    """
    actor = bundle.actor_e if exploratory else bundle.actor_s
    lam = np.broadcast_to(np.asarray(lam, dtype=float), (s.shape[0],))
    weight_l = -lam if exploratory else lam
    a, cache = actor.forward(s)
    grads, _ = actor.backward(cache, _action_grad(bundle, s, a, np.ones(s.shape[0]), weight_l))
    return grads


def update_ss_actor(batch: dict, bundle: AgentBundle, use_multiplier=True) -> float:
    """Descent on ``Q_V + lambda_s * Q_L`` at the actor's own action."""
    s = batch["s"]
    lam = bundle.multiplier(s, "s") if use_multiplier else np.zeros(s.shape[0])
    return _actor_step(bundle.actor_s, bundle.opt_actor_s, bundle, s, np.ones(s.shape[0]), lam)


def multiplier_grad(net: Mlp, s, residual):
    """Gradient of ``mean(lambda(s) * residual)`` with ``lambda = exp(net(s))``."""
    z, cache = net.forward(s)
    lam = np.exp(z[:, 0])
    grads, _ = net.backward(cache, (lam * residual / s.shape[0])[:, None])
    return grads


def _multiplier_step(net: Mlp, opt: Adam, s, residual):
    grads = multiplier_grad(net, s, residual)
    opt.step([-g for g in grads])
    return grads


def multiplier_residual(bundle: AgentBundle, s, a_new, a_ref):
    """``Q_L(s, a_new) - epsilon - Q_L(s, a_ref)``."""
    return bundle.q_l(s, a_new) - bundle.epsilon - bundle.q_l(s, a_ref)


def update_ss_multiplier(batch: dict, bundle: AgentBundle) -> list[np.ndarray]:
    """Ascent step on the SS multiplier; returns its parameters."""
    s = batch["s"]
    resid = multiplier_residual(bundle, s, bundle.actor_s(s), bundle.actor_s_old(s))
    _multiplier_step(bundle.lam_s, bundle.opt_lam_s, s, resid)
    return bundle.lam_s.params


def update_exploratory(batch: dict, bundle: AgentBundle) -> tuple[float, float]:
    """Ascent on ``Q_V - lambda_e * Q_L`` for the exploratory actor, then the
    matching multiplier step. Returns both gradient norms."""
    s = batch["s"]
    lam = bundle.multiplier(s, "e")
    n_actor = _actor_step(bundle.actor_e, bundle.opt_actor_e, bundle, s,
                          np.ones(s.shape[0]), -lam, ascend=True)
    resid = multiplier_residual(bundle, s, bundle.actor_e(s), bundle.actor_s(s))
    g = _multiplier_step(bundle.lam_e, bundle.opt_lam_e, s, resid)
    return n_actor, grad_norm(g)


def estimate_epsilon(bundle: AgentBundle, states, alpha: float, gamma: float | None = None) -> float:
    """Push one trajectory's largest safety slack into the memory and refresh epsilon.

    The hitting time in the denominator is replaced by its upper bound
    ``1 / (1 - gamma)``.
    """
    gamma = bundle.gamma if gamma is None else gamma
    states = np.atleast_2d(np.asarray(states, dtype=float))
    slack = 0.0
    if states.shape[0]:
        v_hat = bundle.q_v_min(states, bundle.actor_s(states))
        ok = v_hat <= alpha
        if ok.any():
            slack = float(np.max(alpha - v_hat[ok]))
    bundle.epsilon_memory.append(slack)
    bundle.epsilon = aggregate_epsilon(bundle.epsilon_memory, bundle.epsilon_agg, gamma)
    return bundle.epsilon


def aggregate_epsilon(memory, how: str, gamma: float) -> float:
    """``(1 - gamma) * min`` (or mean) of the remembered per-trajectory slacks."""
    mem = np.asarray(memory, dtype=float)
    if mem.size == 0:
        return 0.0
    agg = mem.min() if how == "min" else mem.mean()
    return (1.0 - gamma) * float(agg)


def ss_actor_probability(step: int, total_steps: int) -> float:
    """Chance of acting with the SS-actor: 1 at the start, 0 from mid-run on."""
    if total_steps <= 0:
        return 1.0
    return max(0.0, 1.0 - 2.0 * step / total_steps)


def select_action(bundle: AgentBundle, s, step: int, aes: float, schedule: dict,
                  rng, noise: OuNoise | None = None):
    """Pick an actor, add OU noise, clamp to ``[-1, 1]``.

    ``schedule`` carries ``total_steps``, ``alpha`` and ``algo``. The SS-actor
    acts whenever the recent episode safety drops below ``1 - alpha``.
    Returns ``(action, used_ss_actor)``.
    """
    use_ss = True
    if schedule.get("algo") == "ess":
        backup = np.isfinite(aes) and aes < 1.0 - schedule["alpha"]
        if not backup:
            use_ss = rng.random() < ss_actor_probability(step, schedule["total_steps"])
    actor = bundle.actor_s if use_ss else bundle.actor_e
    a = actor(np.asarray(s, dtype=float)[None, :])[0]
    if noise is not None:
        a = a + noise.sample()
    return np.clip(a, -1.0, 1.0), use_ss
