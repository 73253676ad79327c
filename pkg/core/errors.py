# core/errors.py - 领域异常
"""
TensorNP - 异常定义

全部派生自内置 ValueError / RuntimeError，调用方可以只捕获内置类型。
"""


class TensorShapeError(ValueError):
    """形状/模态不匹配或模态越界"""


class NotPositiveDefiniteError(ValueError):
    """Cholesky 分解遇到非正主元"""


class UnrecoverableSingularCovarianceError(RuntimeError):
    """岭回退到上限后模态协方差仍不可逆"""


class EmptyClassError(ValueError):
    """某个类别没有样本"""


class InvalidRankError(ValueError):
    """Tucker 秩非法"""

    def __init__(self, message: str, mode: int = None):
        super().__init__(message)
        self.mode = mode

    def __reduce__(self):
        return (self.__class__, (str(self), self.mode))


class CalibrationSetTooSmallError(ValueError):
    """校准集太小，(1-α)^n > δ，无法满足违约率约束"""

    def __init__(self, required: int, actual: int):
        super().__init__(
            f"[ERROR] 校准集过小: calibration set too small, "
            f"需要至少 {required} 个 class 0 样本 (required {required}), 实际 {actual}"
        )
        self.required = required
        self.actual = actual

    def __reduce__(self):
        return (self.__class__, (self.required, self.actual))


class ConfigError(ValueError):
    """配置校验失败"""

    def __init__(self, key: str, message: str):
        super().__init__(f"[ERROR] 配置项 '{key}' 无效: {message}")
        self.key = key
        self.detail = message

    def __reduce__(self):
        return (self.__class__, (self.key, self.detail))


class DatasetFormatError(ValueError):
    """TNPD / TNPM 文件格式错误"""


class RepetitionError(RuntimeError):
    """某次重复实验失败（fail-fast，携带重复序号）"""

    def __init__(self, rep: int, cause: Exception):
        super().__init__(f"[ERROR] 第 {rep} 次重复失败 (repetition {rep}): {type(cause).__name__}: {cause}")
        self.rep = rep
        self.cause = cause

    def __reduce__(self):
        return (self.__class__, (self.rep, self.cause))
