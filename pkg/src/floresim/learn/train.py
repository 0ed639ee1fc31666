"""Rollout collection, the training loop and policy reconstruction from checkpoints."""

from __future__ import annotations

import csv
import logging
import time
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
import torch

from .._build import build_id, derive_seed
from ..env import REWARD_TERMS, EnvConfig, WheelLeggedEnv
from ..env.observation import OBS_DIM, STATE_DIM
from .checkpoint import load_checkpoint, save_checkpoint
from .networks import ActorCritic
from .ppo import RolloutBuffer, TrainConfig, ppo_update

log = logging.getLogger(__name__)

CURVE_COLUMNS = (["iteration", "mean_total_reward"] + list(REWARD_TERMS)
                 + ["value_loss", "encoder_velocity_error"])


@dataclass
class TrainResult:
    policy: ActorCritic
    curve: list[dict] = field(default_factory=list)
    checkpoints: list[Path] = field(default_factory=list)
    wall_time: float = 0.0


def network_meta(ac: ActorCritic) -> dict:
    return {"hidden": [m.out_features for m in ac.actor if hasattr(m, "out_features")][:-1],
            "encoder_hidden": [m.out_features for m in ac.encoder.net
                               if hasattr(m, "out_features")][:-1],
            "latent_dim": ac.latent_dim, "log_std_bounds": list(ac.log_std_bounds)}


def policy_from_checkpoint(path) -> tuple[ActorCritic, dict]:
    params, meta = load_checkpoint(path)
    net = meta.get("network", {})
    ac = ActorCritic(hidden=tuple(net.get("hidden", (256, 128))),
                     encoder_hidden=tuple(net.get("encoder_hidden", (256, 128))),
                     latent_dim=int(net.get("latent_dim", 16)),
                     log_std_bounds=tuple(net.get("log_std_bounds", (-5.0, 1.0))))
    missing, unexpected = ac.load_state_dict(params, strict=False)
    missing = [k for k in missing if k != "partial_index"]
    if missing or unexpected:
        raise ValueError(f"checkpoint does not match the network: missing {missing}, "
                         f"unexpected {unexpected}")
    ac.eval()
    return ac, meta


class Trainer:
    def __init__(self, morphology: str, cfg: TrainConfig, env_cfg: EnvConfig | None = None,
                 out_dir: str | Path | None = None):
        self.cfg = cfg.validate()
        self.env_cfg = env_cfg or EnvConfig()
        self.morphology = morphology
        self.out_dir = Path(out_dir) if out_dir else None
        torch.set_num_threads(max(1, cfg.threads))
        torch.manual_seed(derive_seed(cfg.seed, "torch"))
        self.env = WheelLeggedEnv(morphology, cfg.num_envs, self.env_cfg,
                                  seed=derive_seed(cfg.seed, "env"), threads=cfg.threads)
        self.policy = ActorCritic(init_log_std=cfg.init_log_std,
                                  target_seed=derive_seed(cfg.seed, "torch"))
        self.optimizer = torch.optim.Adam([p for p in self.policy.parameters() if p.requires_grad],
                                          lr=cfg.learning_rate)
        self.gen = torch.Generator().manual_seed(derive_seed(cfg.seed, "sampling"))
        self.buffer = RolloutBuffer(cfg.horizon, cfg.num_envs, STATE_DIM, OBS_DIM)
        self.iteration = 0
        self.states = self.env.reset()
        if cfg.stagger_episodes:
            self.env.stagger_episodes()
        self.true_vel = self.env.body_velocity()

    def meta(self) -> dict:
        return {"morphology": self.morphology, "seed": self.cfg.seed, "iteration": self.iteration,
                "train_config": self.cfg.to_dict(), "env_config": self.env_cfg.to_dict(),
                "network": network_meta(self.policy), "build": build_id()}

    def save(self, path) -> Path:
        return save_checkpoint(self.policy.state_dict(), self.meta(), path)

    def collect(self) -> np.ndarray:
        """Fill the rollout buffer; returns per-step mean weighted term values (T, 13)."""
        cfg = self.cfg
        ac = self.policy
        dt = self.env_cfg.control_dt
        terms = np.zeros((cfg.horizon, len(REWARD_TERMS)))
        self.buffer.clear()
        totals = []
        for t in range(cfg.horizon):
            st = torch.as_tensor(self.states, dtype=torch.float32)
            tv = torch.as_tensor(self.true_vel, dtype=torch.float32)
            with torch.no_grad():
                dist, _, _ = ac.distribution(st)
                noise = torch.randn(dist.mean.shape, generator=self.gen)
                action = dist.mean + dist.stddev * noise
                logp = dist.log_prob(action).sum(-1)
                value = ac.value(st, tv)
            next_states, reward, term, info = self.env.step(action.numpy().astype(np.float64))
            r = reward.total * dt
            done = term | info["time_out"]
            next_obs = next_states[:, :OBS_DIM].copy()
            if done.any():
                final = info["final_state"]
                next_obs[done] = final[done, :OBS_DIM]
                to = np.nonzero(info["time_out"])[0]
                if len(to):
                    with torch.no_grad():
                        v_final = ac.value(torch.as_tensor(final[to], dtype=torch.float32),
                                           torch.as_tensor(info["true_velocity"][to], dtype=torch.float32))
                    r[to] += cfg.gamma * v_final.numpy()
            self.buffer.add(self.states, action.numpy(), logp.numpy(), r, value.numpy(), done,
                            self.true_vel, next_obs, dist.mean.numpy(), dist.stddev.numpy())
            terms[t] = reward.weighted.mean(axis=0)
            totals.append(reward.total.mean())
            self.states = next_states
            self.true_vel = self.env.body_velocity()
        with torch.no_grad():
            bootstrap = ac.value(torch.as_tensor(self.states, dtype=torch.float32),
                                 torch.as_tensor(self.true_vel, dtype=torch.float32)).numpy()
        self.buffer.finish(bootstrap, cfg.gamma, cfg.lam)
        self._mean_total = float(np.mean(totals))
        return terms

    def iterate(self) -> dict:
        terms = self.collect()
        stats = ppo_update(self.policy, self.optimizer, self.buffer, self.cfg, self.gen)
        self.iteration += 1
        row = {"iteration": self.iteration, "mean_total_reward": self._mean_total}
        row.update({name: float(v) for name, v in zip(REWARD_TERMS, terms.mean(axis=0))})
        row["value_loss"] = stats["value"]
        row["encoder_velocity_error"] = float(np.sqrt(stats["velocity"]))
        return row

    def run(self, iterations: int | None = None, callback=None) -> TrainResult:
        iterations = self.cfg.iterations if iterations is None else iterations
        result = TrainResult(self.policy)
        writer = None
        fh = None
        if self.out_dir is not None:
            self.out_dir.mkdir(parents=True, exist_ok=True)
            fh = open(self.out_dir / "curve.csv", "w", newline="")
            fh.write(f"# build={build_id()} seed={self.cfg.seed} morphology={self.morphology}\n")
            writer = csv.DictWriter(fh, fieldnames=CURVE_COLUMNS)
            writer.writeheader()
        start = time.perf_counter()
        try:
            for _ in range(iterations):
                snapshot = {k: v.clone() for k, v in self.policy.state_dict().items()}
                try:
                    row = self.iterate()
                except Exception:
                    if self.out_dir is not None:
                        self.policy.load_state_dict(snapshot)
                        path = self.save(self.out_dir / "checkpoints" / "last_good.bin")
                        log.error("training failed at iteration %d; last good state in %s",
                                  self.iteration + 1, path)
                    raise
                result.curve.append(row)
                if writer is not None:
                    writer.writerow({k: repr(v) if isinstance(v, float) else v for k, v in row.items()})
                    fh.flush()
                    if self.iteration % self.cfg.checkpoint_every == 0:
                        result.checkpoints.append(
                            self.save(self.out_dir / "checkpoints" / f"iter_{self.iteration:05d}.bin"))
                log.info("iter %d reward %.3f tracking %.3f value %.4f", self.iteration,
                         row["mean_total_reward"], row["tracking_lin_vel"], row["value_loss"])
                if callback is not None:
                    callback(self, row)
            if self.out_dir is not None:
                result.checkpoints.append(self.save(self.out_dir / "checkpoints" / "final.bin"))
        finally:
            if fh is not None:
                fh.close()
            self.env.close()
        result.wall_time = time.perf_counter() - start
        return result


def train(morphology: str, cfg: TrainConfig, env_cfg: EnvConfig | None = None,
          out_dir: str | Path | None = None, callback=None) -> TrainResult:
    return Trainer(morphology, cfg, env_cfg, out_dir).run(callback=callback)


def evaluate_tracking(policy: ActorCritic, morphology: str, env_cfg: EnvConfig, episodes: int = 50,
                      seed: int = 0, threads: int = 1) -> dict[str, float]:
    """Run ``episodes`` full episodes with the deterministic policy.

    Returns per-step means of every weighted reward term over the episodes.
    """
    env = WheelLeggedEnv(morphology, episodes, env_cfg, seed=derive_seed(seed, "eval"), threads=threads)
    states = env.reset()
    sums = np.zeros(len(REWARD_TERMS))
    steps = 0
    alive = np.ones(episodes, dtype=bool)
    completed = np.zeros(episodes, dtype=bool)
    try:
        while alive.any():
            with torch.no_grad():
                action = policy.act(torch.as_tensor(states, dtype=torch.float32), deterministic=True)
            states, reward, term, info = env.step(action.numpy().astype(np.float64))
            sums += reward.weighted[alive].sum(axis=0)
            steps += int(alive.sum())
            done = term | info["time_out"]
            completed |= alive & info["time_out"]
            alive &= ~done
    finally:
        env.close()
    out = {name: float(v) for name, v in zip(REWARD_TERMS, sums / steps)}
    out["completed_fraction"] = float(completed.mean())
    return out
