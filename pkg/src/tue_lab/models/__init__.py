"""Small differentiable models, optimizer and checkpoints."""

from .mlp import (
    ClassifierModel,
    EncoderModel,
    ProbeHead,
    init_classifier,
    init_encoder,
    init_probe,
    classifier_forward,
    classifier_backward,
    encoder_forward,
    encoder_backward,
    probe_forward,
    probe_backward,
)
from .optim import sgd_step
from .checkpoint import save_model, load_model

__all__ = [
    "ClassifierModel",
    "EncoderModel",
    "ProbeHead",
    "init_classifier",
    "init_encoder",
    "init_probe",
    "classifier_forward",
    "classifier_backward",
    "encoder_forward",
    "encoder_backward",
    "probe_forward",
    "probe_backward",
    "sgd_step",
    "save_model",
    "load_model",
]
