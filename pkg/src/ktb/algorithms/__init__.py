from .config import ALGORITHMS, TrainConfig, build_configs, parse_config_file  # noqa: F401
from .losses import (LossReport, awac_losses, bc_loss, cql_loss, huber,  # noqa: F401
                     iql_losses, rem_loss, soft_update, td_targets)
from .model import Model, ModelConfig  # noqa: F401
from .training import (AdamW, JsonlSink, evaluate, grad_check,  # noqa: F401
                       load_checkpoint, save_checkpoint, train)
