"""Generalized advantage estimation and the clipped-surrogate update."""

from __future__ import annotations

from dataclasses import asdict, dataclass

import numpy as np
import torch
from torch import nn

from .networks import ActorCritic


class UpdateError(RuntimeError):
    """A loss went non-finite; parameters are left as they were before the minibatch."""


@dataclass
class TrainConfig:
    num_envs: int = 128
    horizon: int = 24
    learning_rate: float = 3e-4
    clip_ratio: float = 0.2
    gamma: float = 0.99
    lam: float = 0.95
    epochs: int = 5
    minibatches: int = 4
    entropy_coef: float = 0.005
    value_coef: float = 1.0
    clip_value: bool = True
    velocity_loss_coef: float = 1.0
    latent_loss_coef: float = 1.0
    max_grad_norm: float = 1.0
    desired_kl: float | None = None  # set to adapt the learning rate to a KL target
    normalize_advantages: bool = True
    iterations: int = 1500
    checkpoint_every: int = 100
    seed: int = 0
    threads: int = 1
    init_log_std: float = -0.5
    stagger_episodes: bool = True

    def validate(self) -> "TrainConfig":
        for name in ("num_envs", "horizon", "epochs", "minibatches", "iterations", "checkpoint_every"):
            if getattr(self, name) <= 0:
                raise ValueError(f"{name} must be positive")
        if not 0.0 < self.clip_ratio < 1.0:
            raise ValueError("clip_ratio must lie in (0, 1)")
        if self.learning_rate < 0 or not 0 < self.gamma <= 1 or not 0 <= self.lam <= 1:
            raise ValueError("invalid learning rate, gamma or lambda")
        return self

    def to_dict(self) -> dict:
        return asdict(self)


def gae(rewards, values, bootstrap, dones, gamma: float, lam: float):
    """Advantages and returns for time-major arrays (T,) or (T, n).

    ``dones[t]`` marks that the episode ended after step ``t``; ``bootstrap`` is
    the value of the state following the last step.
    """
    rewards = np.asarray(rewards, dtype=float)
    values = np.asarray(values, dtype=float)
    dones = np.asarray(dones, dtype=float)
    adv = np.zeros_like(rewards)
    next_value = np.asarray(bootstrap, dtype=float)
    last = np.zeros_like(rewards[0])
    for t in range(rewards.shape[0] - 1, -1, -1):
        live = 1.0 - dones[t]
        delta = rewards[t] + gamma * next_value * live - values[t]
        last = delta + gamma * lam * live * last
        adv[t] = last
        next_value = values[t]
    return adv, adv + values


class RolloutBuffer:
    def __init__(self, horizon: int, num_envs: int, state_dim: int, obs_dim: int, action_dim: int = 16):
        self.T, self.n = horizon, num_envs
        f = np.float32
        self.states = np.zeros((horizon, num_envs, state_dim), f)
        self.actions = np.zeros((horizon, num_envs, action_dim), f)
        self.log_probs = np.zeros((horizon, num_envs), f)
        self.means = np.zeros((horizon, num_envs, action_dim), f)
        self.stds = np.zeros((horizon, num_envs, action_dim), f)
        self.rewards = np.zeros((horizon, num_envs))
        self.values = np.zeros((horizon, num_envs))
        self.dones = np.zeros((horizon, num_envs))
        self.true_velocity = np.zeros((horizon, num_envs, 3), f)
        self.next_obs = np.zeros((horizon, num_envs, obs_dim), f)
        self.advantages = np.zeros((horizon, num_envs))
        self.returns = np.zeros((horizon, num_envs))
        self.step = 0

    def add(self, states, actions, log_probs, rewards, values, dones, true_velocity, next_obs,
            means=None, stds=None):
        t = self.step
        if t >= self.T:
            raise IndexError("rollout buffer is full")
        self.states[t] = states
        self.actions[t] = actions
        self.log_probs[t] = log_probs
        self.rewards[t] = rewards
        self.values[t] = values
        self.dones[t] = dones
        self.true_velocity[t] = true_velocity
        self.next_obs[t] = next_obs
        if means is not None:
            self.means[t] = means
            self.stds[t] = stds
        self.step += 1

    @property
    def full(self) -> bool:
        return self.step == self.T

    def finish(self, bootstrap, gamma: float, lam: float) -> None:
        if not self.full:
            raise RuntimeError("rollout buffer must be fully populated before computing advantages")
        self.advantages, self.returns = gae(self.rewards, self.values, bootstrap, self.dones, gamma, lam)

    def clear(self) -> None:
        self.step = 0

    def flat(self, dtype=torch.float32) -> dict[str, torch.Tensor]:
        N = self.T * self.n
        t = lambda a, shape: torch.as_tensor(np.ascontiguousarray(a).reshape(shape), dtype=dtype)
        return {
            "states": t(self.states, (N, -1)),
            "actions": t(self.actions, (N, -1)),
            "log_probs": t(self.log_probs, (N,)),
            "means": t(self.means, (N, -1)),
            "stds": t(self.stds, (N, -1)),
            "values": t(self.values, (N,)),
            "advantages": t(self.advantages, (N,)),
            "returns": t(self.returns, (N,)),
            "true_velocity": t(self.true_velocity, (N, 3)),
            "next_obs": t(self.next_obs, (N, -1)),
        }


def normalize(adv: torch.Tensor) -> torch.Tensor:
    return (adv - adv.mean()) / (adv.std() + 1e-8)


def surrogate_loss(log_probs, old_log_probs, advantages, clip: float) -> torch.Tensor:
    ratio = torch.exp(log_probs - old_log_probs)
    unclipped = ratio * advantages
    clipped = torch.clamp(ratio, 1.0 - clip, 1.0 + clip) * advantages
    return -torch.min(unclipped, clipped).mean()


def ppo_losses(ac: ActorCritic, batch: dict, cfg: TrainConfig) -> dict[str, torch.Tensor]:
    dist, v_hat, latent = ac.distribution(batch["states"])
    log_probs = dist.log_prob(batch["actions"]).sum(-1)
    entropy = dist.entropy().sum(-1).mean()
    adv = batch["advantages"]
    if cfg.normalize_advantages:
        adv = normalize(adv)
    actor = surrogate_loss(log_probs, batch["log_probs"], adv, cfg.clip_ratio)

    value = ac.value(batch["states"], batch["true_velocity"])
    ret = batch["returns"]
    if cfg.clip_value:
        v_clip = batch["values"] + torch.clamp(value - batch["values"], -cfg.clip_ratio, cfg.clip_ratio)
        value_loss = torch.max((value - ret) ** 2, (v_clip - ret) ** 2).mean()
    else:
        value_loss = ((value - ret) ** 2).mean()

    vel_loss = ((v_hat - batch["true_velocity"]) ** 2).mean()
    latent_loss = ((latent - ac.target_embedding(batch["next_obs"])) ** 2).mean()
    total = (actor + cfg.value_coef * value_loss - cfg.entropy_coef * entropy
             + cfg.velocity_loss_coef * vel_loss + cfg.latent_loss_coef * latent_loss)
    with torch.no_grad():
        # analytic KL(old || new) of the diagonal Gaussians
        mu_o, sd_o = batch["means"], batch["stds"]
        mu_n, sd_n = dist.mean, dist.stddev
        kl = (torch.log(sd_n / sd_o) + (sd_o ** 2 + (mu_o - mu_n) ** 2) / (2 * sd_n ** 2)
              - 0.5).sum(-1).mean()
    return {"total": total, "actor": actor, "value": value_loss, "entropy": entropy,
            "velocity": vel_loss, "latent": latent_loss, "approx_kl": kl}


def ppo_update(ac: ActorCritic, optimizer: torch.optim.Optimizer, buffer: RolloutBuffer,
               cfg: TrainConfig, generator: torch.Generator | None = None) -> dict[str, float]:
    """Several epochs of minibatch updates; adapts the learning rate to the KL target."""
    dtype = next(ac.parameters()).dtype
    data = buffer.flat(dtype)
    N = data["states"].shape[0]
    mb = max(1, N // cfg.minibatches)
    sums: dict[str, float] = {}
    count = 0
    params = [p for p in ac.parameters() if p.requires_grad]
    for _ in range(cfg.epochs):
        perm = torch.randperm(N, generator=generator)
        for k in range(cfg.minibatches):
            idx = perm[k * mb:(k + 1) * mb]
            batch = {key: v[idx] for key, v in data.items()}
            losses = ppo_losses(ac, batch, cfg)
            if not torch.isfinite(losses["total"]):
                diag = {k_: float(v.detach()) for k_, v in losses.items()}
                raise UpdateError(f"non-finite loss in PPO update: {diag}")
            optimizer.zero_grad()
            losses["total"].backward()
            nn.utils.clip_grad_norm_(params, cfg.max_grad_norm)
            optimizer.step()
            if cfg.desired_kl is not None:
                kl = float(losses["approx_kl"].abs())
                for g in optimizer.param_groups:
                    if kl > 2.0 * cfg.desired_kl:
                        g["lr"] = max(1e-5, g["lr"] / 1.5) if g["lr"] > 0 else 0.0
                    elif kl < 0.5 * cfg.desired_kl and g["lr"] > 0:
                        g["lr"] = min(1e-2, g["lr"] * 1.5)
            for key, v in losses.items():
                sums[key] = sums.get(key, 0.0) + float(v.detach())
            count += 1
    stats = {k: v / count for k, v in sums.items()}
    stats["learning_rate"] = optimizer.param_groups[0]["lr"]
    return stats
