"""Training loop for the actor-critic variants on the continuous integrator."""

from __future__ import annotations

import struct
from dataclasses import asdict, dataclass, field

import numpy as np

from ..envs import integrator_config, make_task
from ..envs.integrator import IntegratorEnv
from ..metrics import (EpisodeLog, ExperimentRecord, SafeSetEstimate, episode_safety,
                       ratio_correct, ratio_false_positive)
from .agent import (AgentBundle, OuNoise, estimate_epsilon, select_action, update_critics,
                    update_exploratory, update_ss_actor, update_ss_multiplier)
from .mlp import Mlp
from .replay import ReplayBuffer

DEEP_ALGOS = ("baseline", "lss", "ess")
WEIGHTS_MAGIC = b"RSPECNN1"
# observation scaling: maps the non-target box onto [-1, 1]^2
OBS_SCALE = np.array([1.0, 0.5])


@dataclass
class DeepConfig:
    steps: int = 200_000
    hidden: tuple[int, ...] = (400, 300)
    batch_size: int = 128
    tau: float = 5e-3
    capacity: int = 1_000_000
    warmup_fraction: float = 0.1
    eval_every: int = 5000
    unsafe_fraction: float = 0.2
    train_every: int = 1
    phase_steps: int = 5000
    critic_lr: float = 1e-4
    actor_lr: float = 1e-5
    multiplier_lr: float = 1e-6
    epsilon_agg: str = "min"
    env: dict = field(default_factory=dict)

    @classmethod
    def from_dict(cls, cfg: dict) -> "DeepConfig":
        known = {k: v for k, v in cfg.items() if k in cls.__dataclass_fields__}
        if "hidden" in known:
            known["hidden"] = tuple(int(h) for h in known["hidden"])
        return cls(**known)

    def to_dict(self) -> dict:
        d = asdict(self)
        d["hidden"] = list(self.hidden)
        return d

    @property
    def warmup_steps(self) -> int:
        return int(round(self.warmup_fraction * self.steps))


@dataclass
class DeepResult:
    record: ExperimentRecord
    bundle: AgentBundle
    estimate: SafeSetEstimate
    eval_states: np.ndarray
    v_hat: np.ndarray


class EvaluationGrid:
    """Non-target grid cells of the discretised integrator with oracle truth."""

    def __init__(self, env_cfg: dict, alpha: float):
        task = make_task({**env_cfg, "env": "integrator"})
        self.mask = task.evaluation_mask
        self.states = np.flatnonzero(self.mask)
        self.coords = task.mdp.coords[self.states]
        self.obs = self.coords / OBS_SCALE
        self.truth = task.truth(alpha).restrict(self.mask)
        self.task = task
        self.alpha = alpha

    def evaluate(self, bundle: AgentBundle):
        v_hat = bundle.q_v_min(self.obs, bundle.actor_s(self.obs))
        est = SafeSetEstimate(v_hat <= self.alpha, self.alpha, "deep")
        return est, v_hat


def _streams(seed):
    return np.random.SeedSequence(seed).spawn(5)


def make_bundle(algo: str, config: DeepConfig, seed: int) -> AgentBundle:
    """Freshly initialised networks for ``(algo, config, seed)``."""
    gamma = integrator_config(config.env).gamma
    return AgentBundle(hidden=config.hidden, gamma=gamma, exploratory=algo == "ess",
                       rng=np.random.default_rng(_streams(seed)[0]),
                       epsilon_agg=config.epsilon_agg,
                       lrs=(config.critic_lr, config.actor_lr, config.multiplier_lr))


def run_actor_critic(algo: str, alpha: float, config: DeepConfig | None = None, seed: int = 0,
                     grid: EvaluationGrid | None = None) -> DeepResult:
    """Train one seeded run and log metrics every ``eval_every`` environment steps.

    One environment step is followed by a gradient step every ``train_every``
    steps once the replay holds a minibatch. Only critics are trained during
    the warmup. ``baseline`` trains the SS-actor on ``Q_V`` alone, ``lss``
    adds the Lagrangian term and ``ess`` trains a second, exploratory actor.
    """
    if algo not in DEEP_ALGOS:
        raise ValueError(f"algo must be one of {DEEP_ALGOS}")
    config = config or DeepConfig()
    env_cfg = integrator_config(config.env)
    grid = grid or EvaluationGrid(config.env, alpha)
    _, env_seed, noise_seed, sample_seed, pick_seed = _streams(seed)
    bundle = make_bundle(algo, config, seed)
    env = IntegratorEnv(env_cfg, seed=np.random.default_rng(env_seed))
    noise = OuNoise(1, rng=np.random.default_rng(noise_seed))
    sample_rng = np.random.default_rng(sample_seed)
    pick_rng = np.random.default_rng(pick_seed)
    replay = ReplayBuffer(min(config.capacity, max(config.steps, 1)), 2, 1)
    episodes = EpisodeLog()
    schedule = {"algo": algo, "alpha": alpha, "total_steps": config.steps}
    record = ExperimentRecord({"algo": algo, "alpha": alpha, **config.to_dict()}, seed)

    def log(step):
        est, v_hat = grid.evaluate(bundle)
        record.log(iteration=step // config.eval_every, env_steps=step,
                   r_c=ratio_correct(est, grid.truth), r_fp=ratio_false_positive(est, grid.truth),
                   aes=episode_safety(episodes), epsilon=bundle.epsilon)
        return est, v_hat

    est, v_hat = log(0)
    obs = env.reset() / OBS_SCALE
    traj = [obs]
    noise.reset()
    grad_steps = 0
    bound = env_cfg.action_bound
    for step in range(1, config.steps + 1):
        a, _ = select_action(bundle, obs, step - 1, episode_safety(episodes), schedule,
                             pick_rng, noise)
        res, truncated = env.step(float(a[0]) * bound)
        nxt = res.next_state / OBS_SCALE
        replay.add(obs, a, res.target_hit, nxt, res.done)
        if res.target_hit or res.done or truncated:
            episodes.record(not res.target_hit)
            if algo != "baseline":
                estimate_epsilon(bundle, np.asarray(traj), alpha)
            obs = env.reset() / OBS_SCALE
            traj = [obs]
            noise.reset()
        else:
            obs = nxt
            traj.append(obs)

        if step % config.train_every == 0 and len(replay) >= config.batch_size:
            batch = replay.sample(config.batch_size, config.unsafe_fraction, sample_rng)
            update_critics(batch, bundle)
            if step > config.warmup_steps:
                if grad_steps % config.phase_steps == 0:
                    bundle.snapshot_actor()
                update_ss_actor(batch, bundle, use_multiplier=algo == "lss")
                if algo == "lss":
                    update_ss_multiplier(batch, bundle)
                elif algo == "ess":
                    update_exploratory(batch, bundle)
                grad_steps += 1
            bundle.soft_update_targets(config.tau)
        if step % config.eval_every == 0:
            est, v_hat = log(step)
    return DeepResult(record, bundle, est, grid.states, v_hat)


def save_weights(path, bundle: AgentBundle) -> None:
    """Binary dump: magic, epsilon, network count, then per network its name,
    top activation, layer sizes and float64 parameters."""
    nets = bundle.networks()
    with open(path, "wb") as fh:
        fh.write(WEIGHTS_MAGIC)
        fh.write(struct.pack("<dI", bundle.epsilon, len(nets)))
        for name, net in nets.items():
            for text in (name, net.top):
                raw = text.encode()
                fh.write(struct.pack("<H", len(raw)) + raw)
            fh.write(struct.pack("<H", len(net.sizes)))
            fh.write(struct.pack(f"<{len(net.sizes)}I", *net.sizes))
            for p in net.params:
                fh.write(np.ascontiguousarray(p, dtype="<f8").tobytes())


def load_weights(path) -> tuple[dict[str, Mlp], float]:
    """Inverse of :func:`save_weights`; returns ``({name: Mlp}, epsilon)``."""
    with open(path, "rb") as fh:
        data = fh.read()
    if data[:8] != WEIGHTS_MAGIC:
        raise ValueError("not a weights file (bad magic)")
    pos = 8
    eps, count = struct.unpack_from("<dI", data, pos)
    pos += 12
    nets = {}
    for _ in range(count):
        texts = []
        for _ in range(2):
            (n,) = struct.unpack_from("<H", data, pos)
            pos += 2
            texts.append(data[pos:pos + n].decode())
            pos += n
        (depth,) = struct.unpack_from("<H", data, pos)
        pos += 2
        sizes = struct.unpack_from(f"<{depth}I", data, pos)
        pos += 4 * depth
        net = Mlp(sizes, texts[1], rng=0)
        for p in net.params:
            p[...] = np.frombuffer(data, "<f8", p.size, pos).reshape(p.shape)
            pos += 8 * p.size
        nets[texts[0]] = net
    if pos != len(data):
        raise ValueError("trailing bytes in weights file")
    return nets, eps
