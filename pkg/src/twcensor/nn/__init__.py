"""Minimal differentiable layers for the censorship classifier."""

from .gradcheck import gradient_check, numeric_gradient, relative_error
from .layers import (
    AttentionPool,
    BatchNorm1d,
    BiLSTM,
    Conv1dSame,
    Dense,
    Dropout,
    LSTM,
    Layer,
    MaskedMaxPool,
    MaskedMeanPool,
    ReLU,
    SequenceBatch,
    Sigmoid,
    bce_loss,
    glorot_uniform,
    masked_pool,
    masked_softmax,
    sigmoid,
)
from .optim import AdamW, adamw_step

__all__ = [
    "AdamW", "AttentionPool", "BatchNorm1d", "BiLSTM", "Conv1dSame", "Dense", "Dropout",
    "LSTM", "Layer", "MaskedMaxPool", "MaskedMeanPool", "ReLU", "SequenceBatch", "Sigmoid",
    "adamw_step", "bce_loss", "glorot_uniform", "gradient_check", "masked_pool",
    "masked_softmax", "numeric_gradient", "relative_error", "sigmoid",
]
