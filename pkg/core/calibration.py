# core/calibration.py - NP 伞形阈值校准
"""
TensorNP - 阈值校准模块

核心思想：
    用留出的 class 0 分数的次序统计量做阈值。
    t_(k) 低于 (1−α) 分位数 ⇔ n 个分数中至少 k 个落在它下方，
    该事件概率为 Pr(Binomial(n, 1−α) ≥ k) = v(k)。
    取最小的 k* 使 v(k*) ≤ δ，阈值 Ĉ_α = t_(k*)，
    于是 Pr(R_0(φ̂) > α) ≤ δ，与分数如何得到无关。

依赖: numpy, scipy
"""

import math
from dataclasses import dataclass
from typing import Sequence

import numpy as np
from scipy import stats

from core.errors import CalibrationSetTooSmallError
from utils.logger import debug


@dataclass(frozen=True)
class NpLevels:
    """NP 约束: 第一类错误上限 α 与违约率容忍度 δ"""
    alpha: float
    delta: float

    def __post_init__(self):
        if not 0 < self.alpha < 1:
            raise ValueError(f"[ERROR] α 必须在 (0,1) 内, 实际 {self.alpha}")
        if not 0 < self.delta < 1:
            raise ValueError(f"[ERROR] δ 必须在 (0,1) 内, 实际 {self.delta}")


@dataclass(frozen=True)
class CalibrationResult:
    k_star: int
    threshold: float
    n_calib: int
    tail_at_k: float


def binomial_tail(n: int, k: int, alpha: float) -> float:
    """
    违约率上界 v(k) = Σ_{j=k}^{n} C(n,j)(1−α)^j α^{n−j} = Pr(Bin(n, 1−α) ≥ k)

    通过正则化不完全 Beta 函数计算，n 到 10^6 不溢出。
    """
    if not 1 <= k <= n:
        raise ValueError(f"[ERROR] k={k} 超出范围 [1, {n}]")
    return float(stats.binom.sf(k - 1, n, 1.0 - alpha))


def binomial_tails(n: int, alpha: float) -> np.ndarray:
    """v(1), ..., v(n) 的向量版本"""
    k = np.arange(1, n + 1)
    return stats.binom.sf(k - 1, n, 1.0 - alpha)


def min_calibration_size(levels: NpLevels) -> int:
    """最小校准集大小: 最小的 n 使 (1−α)^n ≤ δ，即 ⌈log δ / log(1−α)⌉"""
    n = max(1, math.ceil(math.log(levels.delta) / math.log(1.0 - levels.alpha)))
    # 修正浮点取整误差
    while (1.0 - levels.alpha) ** n > levels.delta:
        n += 1
    while n > 1 and (1.0 - levels.alpha) ** (n - 1) <= levels.delta:
        n -= 1
    return n


def umbrella_threshold(scores: Sequence[float], levels: NpLevels) -> CalibrationResult:
    """
    伞形算法阈值

    参数:
        scores: 留出的 class 0 样本的分数
        levels: (α, δ)

    返回:
        CalibrationResult，阈值 = 升序第 k* 个分数
    异常:
        CalibrationSetTooSmallError: n < min_calibration_size
    """
    t = np.sort(np.asarray(scores, dtype=np.float64).reshape(-1))
    n = int(t.size)
    required = min_calibration_size(levels)
    if n < required:
        raise CalibrationSetTooSmallError(required=required, actual=n)

    tails = binomial_tails(n, levels.alpha)
    # v(k) 随 k 严格递减，第一个满足 v(k) ≤ δ 的位置即 k*
    feasible = np.flatnonzero(tails <= levels.delta)
    if feasible.size == 0:
        raise CalibrationSetTooSmallError(required=required, actual=n)
    k_star = int(feasible[0]) + 1
    debug(f"[UMBRELLA] n={n}, k*={k_star}, v(k*)={tails[k_star - 1]:.4g}, "
          f"α={levels.alpha}, δ={levels.delta}")
    return CalibrationResult(
        k_star=k_star,
        threshold=float(t[k_star - 1]),
        n_calib=n,
        tail_at_k=float(tails[k_star - 1]),
    )


def violation_rate(type1_errors: Sequence[float], alpha: float) -> float:
    """违约率: 第一类错误严格大于 α 的重复所占比例"""
    errors = np.asarray(type1_errors, dtype=np.float64).reshape(-1)
    if errors.size == 0:
        raise ValueError("[ERROR] 违约率需要非空的第一类错误序列")
    return float(np.mean(errors > alpha))
