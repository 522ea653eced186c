"""Blind modulation classification from CWT moment features."""

from .errors import DegenerateInputError, InvalidInputError, TrainingDivergedError
from .siggen import (
    ChannelParams,
    IqSignal,
    LabeledSignal,
    ModulationClass,
    SignalParams,
    apply_channel,
    generate_dataset,
    modulate_baseband,
    random_symbols,
)
from .features import CwtConfig, WaveletKind, extract_features
from .pca import PcaModel, fit_pca
from .classifiers import MlpConfig, MlpModel, PnnModel, mlp_classify, mlp_train, pnn_classify, pnn_train

__all__ = [
    "DegenerateInputError",
    "InvalidInputError",
    "TrainingDivergedError",
    "ChannelParams",
    "IqSignal",
    "LabeledSignal",
    "ModulationClass",
    "SignalParams",
    "apply_channel",
    "generate_dataset",
    "modulate_baseband",
    "random_symbols",
    "CwtConfig",
    "WaveletKind",
    "extract_features",
    "PcaModel",
    "fit_pca",
    "MlpConfig",
    "MlpModel",
    "PnnModel",
    "mlp_classify",
    "mlp_train",
    "pnn_classify",
    "pnn_train",
]

__version__ = "0.1.0"
