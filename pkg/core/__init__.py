# TensorNP - 核心模块
# 包含张量代数、TGMM 模型、张量 LDA 估计、NP 阈值校准、张量神经网络与模拟实验

from .errors import (CalibrationSetTooSmallError, ConfigError, DatasetFormatError, EmptyClassError,
                     InvalidRankError, NotPositiveDefiniteError, RepetitionError, TensorShapeError,
                     UnrecoverableSingularCovarianceError)
from .numerics import RandomSource
from .tgmm import TgmmParams, oracle_rule, oracle_type2, random_tucker_signal
from .estimation import LabeledData, dtip, estimate_lda
from .calibration import NpLevels, min_calibration_size, umbrella_threshold, violation_rate
from .classifiers import (NpClassifier, fit_tlda, fit_tlda_np, fit_tnn, fit_tnn_np, fit_vlda,
                          oracle_classifier, predict)
from .experiments import ExperimentConfig, evaluate, example_configs, run_experiment

__all__ = [
    # 异常
    'CalibrationSetTooSmallError',
    'ConfigError',
    'DatasetFormatError',
    'EmptyClassError',
    'InvalidRankError',
    'NotPositiveDefiniteError',
    'RepetitionError',
    'TensorShapeError',
    'UnrecoverableSingularCovarianceError',
    # 模型与估计
    'RandomSource',
    'TgmmParams',
    'oracle_rule',
    'oracle_type2',
    'random_tucker_signal',
    'LabeledData',
    'dtip',
    'estimate_lda',
    # NP 校准
    'NpLevels',
    'min_calibration_size',
    'umbrella_threshold',
    'violation_rate',
    # 分类器
    'NpClassifier',
    'fit_tlda',
    'fit_tlda_np',
    'fit_vlda',
    'fit_tnn',
    'fit_tnn_np',
    'oracle_classifier',
    'predict',
    # 模拟实验
    'ExperimentConfig',
    'evaluate',
    'example_configs',
    'run_experiment',
]
