# utils/torch_runtime.py - torch 运行时管理
"""
TensorNP - torch 运行时管理模块

功能:
1. 固定 torch 线程数（逐位可复现的前提）
2. 统一使用 float64（梯度检验需要 1e-4 相对精度）
3. 训练结束后清理内存
4. 根据 CPU 核心数给出默认并行度

只在 CPU 上运行；GPU 不在支持范围内。
"""

import gc
from typing import Any, Dict

import psutil
import torch

import config


class TorchRuntime:
    """管理 torch 全局状态，所有 T-NN 训练前调用 configure()"""

    DTYPE = torch.float64

    _configured_threads = None

    @classmethod
    def configure(cls, threads: int = None):
        """设置线程数（只在变化时调用 torch，避免重复设置的开销）"""
        threads = threads or config.TORCH_THREADS
        if cls._configured_threads != threads:
            torch.set_num_threads(threads)
            cls._configured_threads = threads

    @staticmethod
    def clear():
        """释放训练过程中的临时张量"""
        gc.collect()

    @staticmethod
    def default_workers() -> int:
        """默认 worker 数 = 物理核心数（取不到时退回逻辑核心数）"""
        if config.DEFAULT_WORKERS > 0:
            return config.DEFAULT_WORKERS
        cores = psutil.cpu_count(logical=False) or psutil.cpu_count(logical=True) or 1
        return max(1, cores)

    @staticmethod
    def get_memory_info() -> Dict[str, Any]:
        """获取内存信息(GB)，用于 check 子命令"""
        vm = psutil.virtual_memory()
        return {
            'total_gb': vm.total / 1024 ** 3,
            'available_gb': vm.available / 1024 ** 3,
            'usage_percent': vm.percent,
        }

    @staticmethod
    def describe() -> str:
        info = TorchRuntime.get_memory_info()
        return (f"torch {torch.__version__}, 线程 {torch.get_num_threads()}, "
                f"内存 {info['available_gb']:.1f}/{info['total_gb']:.1f}GB 可用")
