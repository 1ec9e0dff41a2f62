"""Document (NVDM) and sequence (NVRNN, RNNLM) models, ELBO training and evaluation."""
from .config import (
    AnnealSchedule,
    NvdmConfig,
    NvrnnConfig,
    RnnlmConfig,
    TrainConfig,
    anneal_weight,
    config_from_dict,
    config_to_dict,
)
from .nvdm import Nvdm, nvdm_forward, unigram_baseline
from .nvrnn import Gru, Nvrnn, Rnnlm, SequenceBatch, nvrnn_forward, rnnlm_forward
from .report import ElboReport, ExampleStats, aggregate
from .training import (
    LOG_HEADER,
    EvalResult,
    TrainResult,
    build_model,
    evaluate,
    format_log,
    load_checkpoint,
    save_checkpoint,
    train,
)

__all__ = [
    "AnnealSchedule", "NvdmConfig", "NvrnnConfig", "RnnlmConfig", "TrainConfig", "anneal_weight",
    "config_from_dict", "config_to_dict", "Nvdm", "nvdm_forward", "unigram_baseline", "Gru", "Nvrnn",
    "Rnnlm", "SequenceBatch", "nvrnn_forward", "rnnlm_forward", "ElboReport", "ExampleStats",
    "aggregate", "LOG_HEADER", "EvalResult", "TrainResult", "build_model", "evaluate", "format_log",
    "load_checkpoint", "save_checkpoint", "train",
]
