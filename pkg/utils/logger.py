# utils/logger.py - 统一日志输出
"""
TensorNP - 日志模块

所有模块共用的带时间戳日志：
    [12:30:01] [DTIP] 第 3 次迭代, 投影距离 2.1e-07

级别阈值由 config.LOG_LEVEL 控制（环境变量 TENSORNP_LOG_LEVEL）。
WARNING 及以上写 stderr，其余写 stdout。
"""

import sys
from datetime import datetime

import config

LEVELS = {"DEBUG": 10, "INFO": 20, "WARNING": 30, "ERROR": 40, "QUIET": 100}


def _threshold() -> int:
    return LEVELS.get(config.LOG_LEVEL, LEVELS["INFO"])


def is_enabled(level: str) -> bool:
    """某级别的日志是否会输出"""
    return LEVELS.get(level, LEVELS["INFO"]) >= _threshold()


def log(msg: str, level: str = "INFO"):
    """统一日志输出"""
    if not is_enabled(level):
        return
    stream = sys.stderr if LEVELS.get(level, 20) >= LEVELS["WARNING"] else sys.stdout
    print(f"[{datetime.now().strftime('%H:%M:%S')}] {msg}", file=stream, flush=True)


def debug(msg: str):
    log(msg, "DEBUG")


def warning(msg: str):
    log(f"[WARNING] {msg}", "WARNING")


def error(msg: str):
    log(f"[ERROR] {msg}", "ERROR")


def set_level(level: str):
    """运行时调整日志级别（CLI 的 --quiet / --verbose 使用）"""
    level = level.upper()
    if level not in LEVELS:
        raise ValueError(f"[ERROR] 未知日志级别: {level}")
    config.LOG_LEVEL = level
