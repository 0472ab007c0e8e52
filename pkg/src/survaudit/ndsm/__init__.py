from .gradcheck import grad_check
from .losses import (OBJECTIVES, loss_mtlr, loss_nll, loss_rank, loss_rps, objective_loss,
                     pmf_from_logits, softmax)
from .network import Isd, SurvivalNet, init_network, predict_isd
from .train import TrainConfig, TrainingError, TrainResult, train

__all__ = [
    "OBJECTIVES", "Isd", "SurvivalNet", "TrainConfig", "TrainResult", "TrainingError",
    "grad_check", "init_network", "loss_mtlr", "loss_nll", "loss_rank", "loss_rps",
    "objective_loss", "pmf_from_logits", "predict_isd", "softmax", "train",
]
