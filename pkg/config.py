# config.py - TensorNP 配置文件
"""
全局配置文件

使用方法：
1. 直接修改本文件中的配置
2. 或设置环境变量覆盖（TENSORNP_ 前缀，也可以写在项目根目录的 .env 里）
"""

import os

from dotenv import load_dotenv

load_dotenv()


def _env_float(name: str, default: float) -> float:
    return float(os.environ.get(f"TENSORNP_{name}", default))


def _env_int(name: str, default: int) -> int:
    return int(os.environ.get(f"TENSORNP_{name}", default))


def _env_bool(name: str, default: bool) -> bool:
    value = os.environ.get(f"TENSORNP_{name}")
    if value is None:
        return default
    return value.strip().lower() in ("1", "true", "yes", "on")


# ============================================================
# NP 约束
# ============================================================
# 第一类错误上限 α
DEFAULT_ALPHA = _env_float("ALPHA", 0.05)

# 违约率容忍度 δ
DEFAULT_DELTA = _env_float("DELTA", 0.1)

# class 0 训练数据中留作阈值校准的比例 (n_0'' / n_0)
CALIB_FRACTION = _env_float("CALIB_FRACTION", 0.5)

# ============================================================
# DTIP / 协方差估计
# ============================================================
DTIP_EPSILON = _env_float("DTIP_EPSILON", 1e-6)
DTIP_MAX_ITER = _env_int("DTIP_MAX_ITER", 50)

# 模态协方差奇异时的岭回退: λ = 系数 · trace/d，从 START 开始每次 ×GROWTH，直到 MAX
RIDGE_START = _env_float("RIDGE_START", 1e-8)
RIDGE_GROWTH = _env_float("RIDGE_GROWTH", 100.0)
RIDGE_MAX = _env_float("RIDGE_MAX", 1e-2)

# V-LDA 的岭系数（d = 3375 远大于 n 时合并协方差奇异）
VLDA_RIDGE_SCALE = _env_float("VLDA_RIDGE_SCALE", 1e-3)

# ============================================================
# 张量神经网络 (T-NN)
# ============================================================
TCL_RANK_CAP = _env_int("TCL_RANK_CAP", 8)     # R_m = min(8, d_m)
NN_HIDDEN = _env_int("NN_HIDDEN", 64)
NN_EPOCHS = _env_int("NN_EPOCHS", 100)
NN_BATCH = _env_int("NN_BATCH", 32)
NN_LR = _env_float("NN_LR", 1e-3)
NN_BETAS = (0.9, 0.999)
NN_EPS = 1e-8
NN_VAL_FRACTION = _env_float("NN_VAL_FRACTION", 0.2)

# ============================================================
# 模拟实验
# ============================================================
# 测试集分块生成大小（60000×15³ 一次生成约 1.6GB）
TEST_CHUNK_SIZE = _env_int("TEST_CHUNK_SIZE", 5000)

# 并行 worker 数（0 = 自动，取物理核心数）
DEFAULT_WORKERS = _env_int("WORKERS", 0)

# torch 线程数（固定为 1 才能保证不同 worker 数下结果逐位一致）
TORCH_THREADS = _env_int("TORCH_THREADS", 1)

# CSV 实数有效数字
CSV_SIG_DIGITS = _env_int("CSV_SIG_DIGITS", 6)

# ============================================================
# 日志
# ============================================================
# DEBUG / INFO / WARNING / ERROR
LOG_LEVEL = os.environ.get("TENSORNP_LOG_LEVEL", "INFO").upper()

# tqdm 进度条
SHOW_PROGRESS = _env_bool("SHOW_PROGRESS", True)
