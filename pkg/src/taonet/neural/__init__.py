"""From-scratch tensor math, networks, optimizers, and checkpoints."""

from .checkpoint import Checkpoint, load_checkpoint, save_checkpoint
from .encoder import (
    EncoderLayerParams,
    EncoderOutputs,
    EncoderParams,
    encoder_forward,
    encoder_forward_batch,
    positional_encoding,
)
from .gradcheck import gradient_check
from ..ingest.dataset import PAD_TOKEN, VOCAB_SIZE
from .lstm import (
    FeatureExtractor,
    LstmParams,
    LstmState,
    extract_feature,
    extract_features,
    lstm_step,
)
from .optim import Adam, AdamW
from .tensor import Tensor
from .training import (
    ClassifierTrainConfig,
    ExtractorTrainConfig,
    TrainingMeta,
    train_classifier,
    train_feature_extractor,
)

__all__ = [
    "Adam", "AdamW", "Checkpoint", "ClassifierTrainConfig", "EncoderLayerParams",
    "EncoderOutputs", "EncoderParams", "ExtractorTrainConfig", "FeatureExtractor",
    "LstmParams", "LstmState", "PAD_TOKEN", "Tensor", "TrainingMeta", "VOCAB_SIZE",
    "encoder_forward", "encoder_forward_batch", "extract_feature",
    "extract_features", "gradient_check", "load_checkpoint", "lstm_step",
    "positional_encoding", "save_checkpoint", "train_classifier",
    "train_feature_extractor",
]
