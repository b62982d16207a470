from .layers import conv2d, maxpool2d, mse_loss, upsample2d
from .model import CAEConfig, CAEModel, TrainingError, adam_step
from .train import LearningCurve, featurize, train


def encode(model: CAEModel, x):
    """Representation of a single tweet matrix as a flat vector."""
    return model.encode(x)[0]


def decode(model: CAEModel, rep):
    """Reconstruction of a single representation as a ``rows x cols`` matrix."""
    return model.decode(rep)[0]


__all__ = [
    "CAEConfig", "CAEModel", "LearningCurve", "TrainingError", "adam_step",
    "conv2d", "decode", "encode", "featurize", "maxpool2d", "mse_loss",
    "train", "upsample2d",
]
