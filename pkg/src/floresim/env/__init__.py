from .config import (DEFAULT_WEIGHTS, REWARD_TERMS, ConfigError, EnvConfig, RandomizationRanges,
                     RewardParams, load_env_config, save_env_config, tracking_only)
from .environment import PlacementError, WheelLeggedEnv
from .observation import (HISTORY_DIM, OBS_DIM, OBS_SLICES, STATE_DIM, ObservationHistory,
                          assemble_observation, projected_gravity, split_state)
from .randomization import DomainRandomizationDraw, apply_randomization, sample_randomization
from .reward import RewardBreakdown, RewardState, compute_reward, standing_indicator
