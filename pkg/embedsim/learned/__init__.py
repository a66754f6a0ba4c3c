"""Learned behavior models: features, the MLP, model files, and training"""
from embedsim.learned.features import (
    CATALOGS,
    FeatureMask,
    Surroundings,
    Task,
    apply_mask,
    catalog,
    extract_features,
)
from embedsim.learned.mlp import (
    EMBEDDED,
    MlpModel,
    ModelRunner,
    choose_lane,
    mlp_forward,
    predict_follow_speed,
    predict_lane_choice,
)
from embedsim.learned.modelfile import inspect_model, load_model, save_model
from embedsim.learned.training import (
    BcDataset,
    TrainConfig,
    TrainResult,
    bc_train,
    default_architecture,
    read_dataset,
    write_dataset,
)

__all__ = (
    "BcDataset",
    "CATALOGS",
    "EMBEDDED",
    "FeatureMask",
    "MlpModel",
    "ModelRunner",
    "Surroundings",
    "Task",
    "TrainConfig",
    "TrainResult",
    "apply_mask",
    "bc_train",
    "catalog",
    "choose_lane",
    "default_architecture",
    "extract_features",
    "inspect_model",
    "load_model",
    "mlp_forward",
    "predict_follow_speed",
    "predict_lane_choice",
    "read_dataset",
    "save_model",
    "write_dataset",
)
