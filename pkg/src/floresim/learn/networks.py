"""History encoder, actor and critic.

Inputs are scaled by a fixed per-entry vector held as a buffer, so the networks
see O(1) values without a running normalizer (which would make checkpoints
depend on the data stream).
"""

from __future__ import annotations

import torch
from torch import nn
from torch.distributions import Normal

from ..env.observation import HISTORY_LENGTH, OBS_DIM, OBS_SLICES

VEL_DIM = 3
LATENT_DIM = 16
ACTION_DIM = 16
# next-step partial observation used as the latent target: ang vel, gravity,
# leg position errors, joint velocities
PARTIAL_INDICES = tuple(range(0, 6)) + tuple(range(9, 37))


def observation_scale() -> torch.Tensor:
    s = torch.ones(OBS_DIM, dtype=torch.float64)
    s[OBS_SLICES["ang_vel"]] = 0.25
    s[OBS_SLICES["command"]] = torch.tensor([1.0, 1.0, 0.5], dtype=torch.float64)
    s[OBS_SLICES["joint_vel"]] = 0.05
    return s


def mlp(sizes, activation=nn.ELU) -> nn.Sequential:
    layers = []
    for i in range(len(sizes) - 1):
        layers.append(nn.Linear(sizes[i], sizes[i + 1]))
        if i < len(sizes) - 2:
            layers.append(activation())
    return nn.Sequential(*layers)


class HistoryEncoder(nn.Module):
    """Maps the flattened observation history to (velocity estimate, latent)."""

    def __init__(self, in_dim: int = OBS_DIM * HISTORY_LENGTH, hidden=(256, 128),
                 vel_dim: int = VEL_DIM, latent_dim: int = LATENT_DIM):
        super().__init__()
        self.in_dim = in_dim
        self.vel_dim = vel_dim
        self.net = mlp((in_dim, *hidden, vel_dim + latent_dim))

    def forward(self, history: torch.Tensor):
        if history.shape[-1] != self.in_dim:
            raise ValueError(f"encoder expects {self.in_dim} inputs, got {history.shape[-1]}")
        out = self.net(history)
        return out[..., :self.vel_dim], out[..., self.vel_dim:]


class ActorCritic(nn.Module):
    def __init__(self, obs_dim: int = OBS_DIM, history_length: int = HISTORY_LENGTH,
                 action_dim: int = ACTION_DIM, hidden=(256, 128), encoder_hidden=(256, 128),
                 latent_dim: int = LATENT_DIM, init_log_std: float = -0.5,
                 log_std_bounds=(-5.0, 1.0), target_hidden: int = 64, obs_scale=None,
                 target_seed: int = 0):
        super().__init__()
        self.obs_dim = obs_dim
        self.history_length = history_length
        self.state_dim = obs_dim * (history_length + 1)
        self.latent_dim = latent_dim
        self.log_std_bounds = tuple(log_std_bounds)
        self.encoder = HistoryEncoder(obs_dim * history_length, encoder_hidden, VEL_DIM, latent_dim)
        self.actor = mlp((obs_dim + VEL_DIM + latent_dim, *hidden, action_dim))
        self.critic = mlp((self.state_dim + VEL_DIM, *hidden, 1))
        self.log_std = nn.Parameter(torch.full((action_dim,), float(init_log_std)))

        if obs_scale is None:
            obs_scale = observation_scale() if obs_dim == OBS_DIM else torch.ones(obs_dim)
        obs_scale = torch.as_tensor(obs_scale, dtype=torch.float32)
        self.register_buffer("obs_scale", obs_scale)
        partial = list(PARTIAL_INDICES) if obs_dim == OBS_DIM else list(range(obs_dim))
        self.register_buffer("partial_index", torch.tensor(partial, dtype=torch.long))
        # Fixed random embedding of the next partial observation; never trained.
        gen = torch.Generator().manual_seed(target_seed)
        self.target = mlp((len(partial), target_hidden, latent_dim))
        with torch.no_grad():
            for p in self.target.parameters():
                p.copy_(torch.randn(p.shape, generator=gen) / max(1, p.shape[-1]) ** 0.5)
        for p in self.target.parameters():
            p.requires_grad_(False)

    # ------------------------------------------------------------------ pieces

    def scale_state(self, states: torch.Tensor) -> torch.Tensor:
        return states * self.obs_scale.repeat(self.history_length + 1)

    def encode(self, states: torch.Tensor):
        scaled = self.scale_state(states)
        return self.encoder(scaled[..., self.obs_dim:])

    def distribution(self, states: torch.Tensor):
        """(action distribution, velocity estimate, latent) for a batch of state vectors."""
        scaled = self.scale_state(states)
        v_hat, latent = self.encoder(scaled[..., self.obs_dim:])
        mean = self.actor(torch.cat([scaled[..., :self.obs_dim], v_hat, latent], dim=-1))
        lo, hi = self.log_std_bounds
        std = torch.clamp(self.log_std, lo, hi).exp().expand_as(mean)
        return Normal(mean, std), v_hat, latent

    def value(self, states: torch.Tensor, true_velocity: torch.Tensor) -> torch.Tensor:
        x = torch.cat([self.scale_state(states), true_velocity], dim=-1)
        return self.critic(x).squeeze(-1)

    def target_embedding(self, next_obs: torch.Tensor) -> torch.Tensor:
        with torch.no_grad():
            x = (next_obs * self.obs_scale)[..., self.partial_index]
            return self.target(x)

    @torch.no_grad()
    def act(self, states: torch.Tensor, deterministic: bool = False, generator=None):
        dist, _, _ = self.distribution(states)
        if deterministic:
            return dist.mean
        noise = torch.randn(dist.mean.shape, generator=generator, dtype=dist.mean.dtype)
        return dist.mean + dist.stddev * noise

    def shape_table(self) -> list[tuple[str, tuple[int, ...]]]:
        return [(name, tuple(t.shape)) for name, t in self.state_dict().items()]
