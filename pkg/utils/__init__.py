# TensorNP - 工具模块
# 包含日志、torch 运行时管理、依赖检查等工具函数

from .logger import log
from .torch_runtime import TorchRuntime
from .dependency_check import check_dependencies

__all__ = [
    'log',
    'TorchRuntime',
    'check_dependencies',
]
