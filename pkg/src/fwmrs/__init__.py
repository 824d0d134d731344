"""Feature-weighted maximum representative subsampling (FW-MRS) and baselines."""
from .attribution import FeatureImportances, FeatureWeights, softmin_weights
from .baselines import BaselineWeights, kmm_weights, psa_weights, uniform_weights
from .data import ConfigError, DataError, SplitPlan, TabularDataset, load_csv
from .debias import DebiasConfig, DebiasResult, run_fw_mrs, run_mrs
from .forest import ForestConfig, TrainedForest, fit_forest, forest_predict_proba
from .harness import ExperimentConfig

__version__ = "0.1.0"

__all__ = [
    "BaselineWeights", "ConfigError", "DataError", "DebiasConfig", "DebiasResult", "ExperimentConfig",
    "FeatureImportances", "FeatureWeights", "ForestConfig", "SplitPlan", "TabularDataset", "TrainedForest",
    "fit_forest", "forest_predict_proba", "kmm_weights", "load_csv", "psa_weights", "run_fw_mrs", "run_mrs",
    "softmin_weights", "uniform_weights",
]
