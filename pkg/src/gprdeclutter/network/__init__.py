from .model import (
    CRNetConfig,
    CRNetModel,
    load_checkpoint,
    predict,
    rdb_forward,
    save_checkpoint,
)
from .optim import Adam, TrainConfig, lr_at_epoch
from .train import GradientCheckReport, TrainingDiverged, TrainResult, gradient_check, train
from .loss import loss_and_grad
