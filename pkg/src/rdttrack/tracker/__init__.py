"""The tri-modal tracker: model, loss, training and one-pass inference."""

from .checkpoint import load_checkpoint, save_checkpoint
from .inference import track_sequence
from .loss import LossWeights, compute_loss, decode_argmax, giou_xyxy
from .model import HeadOutput, ModelConfig, TrackerModel
from .train import PairSampler, TrainConfig, TrainResult, pretrain_backbone, train

__all__ = [
    "HeadOutput",
    "LossWeights",
    "ModelConfig",
    "PairSampler",
    "TrackerModel",
    "TrainConfig",
    "TrainResult",
    "compute_loss",
    "decode_argmax",
    "giou_xyxy",
    "load_checkpoint",
    "pretrain_backbone",
    "save_checkpoint",
    "track_sequence",
    "train",
]
