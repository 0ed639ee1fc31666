from .checkpoint import (CheckpointError, CheckpointFormatError, CorruptCheckpointError,
                         load_checkpoint, save_checkpoint)
from .networks import ActorCritic, HistoryEncoder, observation_scale
from .ppo import (RolloutBuffer, TrainConfig, UpdateError, gae, normalize, ppo_losses,
                  ppo_update, surrogate_loss)
from .train import (CURVE_COLUMNS, Trainer, TrainResult, evaluate_tracking, policy_from_checkpoint,
                    train)
