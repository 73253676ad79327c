# core/tgmm.py - 张量正态混合模型 (TGMM)
"""
TensorNP - 张量正态混合模型

模型:
    X | Y=y ~ TN(ℳ_y; Σ_1, ..., Σ_M)，即 vec(X) ~ N(vec(ℳ_y), Σ_M ⊗ … ⊗ Σ_1)

功能:
1. 参数容器 TgmmParams 与采样（正态 / 张量 t）
2. 判别张量 B = D ×_m Σ_m^{-1}
3. oracle 规则: 闭式分数分布与阈值 C_α** = Δ·Φ^{-1}(1−α) + ⟨B, ℳ_0⟩
4. 随机 Tucker 低秩信号（模拟实验用）

依赖: numpy
"""

from dataclasses import dataclass
from typing import List, Sequence

import numpy as np

from core.errors import InvalidRankError, TensorShapeError
from core.numerics import RandomSource, cholesky, invert_spd, std_normal_cdf, std_normal_quantile
from core.tensor_core import (TuckerFactors, check_shape, frobenius_norm, inner,
                              multi_mode_product, tucker_reconstruct)


@dataclass
class TgmmParams:
    """TGMM 参数: 两类均值、模态协方差、先验 π_1"""
    mean0: np.ndarray
    mean1: np.ndarray
    covariances: List[np.ndarray]
    prior1: float = 0.5

    def __post_init__(self):
        self.mean0 = np.asarray(self.mean0, dtype=np.float64)
        self.mean1 = np.asarray(self.mean1, dtype=np.float64)
        self.covariances = [np.asarray(S, dtype=np.float64) for S in self.covariances]
        if self.mean0.shape != self.mean1.shape:
            raise TensorShapeError(
                f"[ERROR] 两类均值形状不一致: {self.mean0.shape} vs {self.mean1.shape}")
        if len(self.covariances) != self.mean0.ndim:
            raise TensorShapeError(
                f"[ERROR] 协方差个数 {len(self.covariances)} 与张量阶数 {self.mean0.ndim} 不符")
        for m, S in enumerate(self.covariances):
            if S.shape != (self.shape[m], self.shape[m]):
                raise TensorShapeError(f"[ERROR] 模态 {m} 协方差形状 {S.shape} 与 d_m={self.shape[m]} 不符")
        if not 0 < self.prior1 < 1:
            raise ValueError(f"[ERROR] 先验 π_1 必须在 (0,1) 内, 实际 {self.prior1}")

    @property
    def shape(self) -> tuple:
        return self.mean0.shape

    @property
    def prior0(self) -> float:
        return 1.0 - self.prior1

    def mean(self, label: int) -> np.ndarray:
        if label not in (0, 1):
            raise ValueError(f"[ERROR] 标签必须是 0 或 1, 实际 {label}")
        return self.mean1 if label == 1 else self.mean0

    @classmethod
    def identity_model(cls, signal: np.ndarray, prior1: float = 0.5) -> "TgmmParams":
        """模拟实验设定: ℳ_0 = 0, Σ_m = I, ℳ_1 = B"""
        signal = np.asarray(signal, dtype=np.float64)
        return cls(
            mean0=np.zeros_like(signal),
            mean1=signal.copy(),
            covariances=[np.eye(d) for d in signal.shape],
            prior1=prior1,
        )


@dataclass(frozen=True)
class OracleRule:
    """
    oracle 规则 1{⟨X, B⟩ > C_α**}

    snr = Δ = √⟨B, D⟩; mid_mean = ℳ = (ℳ_0 + ℳ_1)/2
    """
    discriminant: np.ndarray
    snr: float
    mid_mean: np.ndarray
    threshold: float
    alpha: float
    score_mean0: float
    score_mean1: float

    def rederive_threshold(self) -> float:
        """由其余字段重新计算阈值（用于一致性检查）"""
        return self.snr * std_normal_quantile(1.0 - self.alpha) + self.score_mean0


def _noise(params: TgmmParams, n: int, rng: RandomSource) -> np.ndarray:
    """零均值张量正态噪声 Z ×_1 L_1 … ×_M L_M，批次形状 (n, d_1..d_M)"""
    if n < 1:
        raise ValueError(f"[ERROR] 样本数必须 ≥ 1, 实际 {n}")
    factors = [cholesky(S) for S in params.covariances]
    Z = rng.standard_normal((n,) + params.shape)
    return multi_mode_product(Z, factors, offset=1)


def sample_class(params: TgmmParams, label: int, n: int, rng: RandomSource) -> np.ndarray:
    """
    从第 label 类采样 n 个张量

    返回:
        形状 (n, d_1, ..., d_M) 的批次
    """
    mean = params.mean(label)
    return _noise(params, n, rng) + mean


def sample_class_t(params: TgmmParams, f: int, label: int, n: int,
                   rng: RandomSource) -> np.ndarray:
    """
    张量 t 分布采样: ℳ_y + Z'·√(f/W)，每个样本一个 W ~ χ²_f
    """
    if int(f) != f or f < 1:
        raise ValueError(f"[ERROR] 自由度必须是 ≥ 1 的整数, 实际 {f}")
    mean = params.mean(label)
    noise = _noise(params, n, rng)
    W = rng.chi_square(int(f), n)
    scale = np.sqrt(f / W).reshape((n,) + (1,) * len(params.shape))
    return noise * scale + mean


def discriminant_tensor(params: TgmmParams) -> np.ndarray:
    """B = D ×_{m=1}^M Σ_m^{-1}, D = ℳ_1 − ℳ_0"""
    D = params.mean1 - params.mean0
    return multi_mode_product(D, [invert_spd(S) for S in params.covariances])


def oracle_rule(params: TgmmParams, alpha: float) -> OracleRule:
    """
    闭式 oracle 规则

    class 0 下 s*(X) = ⟨X, B⟩ ~ N(⟨B, ℳ_0⟩, Δ²)，Δ² = ⟨B, D⟩
    C_α** = Δ·Φ^{-1}(1−α) + ⟨B, ℳ_0⟩
    """
    if not 0 < alpha < 1:
        raise ValueError(f"[ERROR] α 必须在 (0,1) 内, 实际 {alpha}")
    B = discriminant_tensor(params)
    D = params.mean1 - params.mean0
    snr_sq = inner(B, D)
    snr = float(np.sqrt(max(snr_sq, 0.0)))
    score_mean0 = inner(B, params.mean0)
    score_mean1 = inner(B, params.mean1)
    threshold = snr * std_normal_quantile(1.0 - alpha) + score_mean0
    return OracleRule(
        discriminant=B,
        snr=snr,
        mid_mean=0.5 * (params.mean0 + params.mean1),
        threshold=float(threshold),
        alpha=float(alpha),
        score_mean0=score_mean0,
        score_mean1=score_mean1,
    )


def oracle_type2(rule: OracleRule, params: TgmmParams = None) -> float:
    """
    oracle 第二类错误 R_1 = Φ((C_α** − ⟨B, ℳ_1⟩)/Δ)

    Δ → 0 时两类分布相同，返回 1 − α。
    """
    if rule.snr <= 0:
        return 1.0 - rule.alpha
    score_mean1 = rule.score_mean1 if params is None else inner(rule.discriminant, params.mean1)
    return std_normal_cdf((rule.threshold - score_mean1) / rule.snr)


def _orthonormal(d: int, r: int, rng: RandomSource) -> np.ndarray:
    """d × r 的随机列正交矩阵（高斯矩阵 QR）"""
    Q, R = np.linalg.qr(rng.standard_normal((d, r)))
    # 固定 R 对角为正，使结果只依赖随机流
    return Q * np.sign(np.where(np.diag(R) == 0, 1.0, np.diag(R)))


def random_tucker_signal(shape: Sequence[int], ranks: Sequence[int], target_snr: float,
                         rng: RandomSource) -> np.ndarray:
    """
    随机 Tucker 低秩信号，‖B‖_F = target_snr

    核元素 i.i.d. N(0,1)，因子为正交化的高斯矩阵；多线性秩几乎必然等于 ranks。
    """
    shape = check_shape(shape)
    ranks = tuple(int(r) for r in ranks)
    if len(ranks) != len(shape):
        raise InvalidRankError(f"[ERROR] 秩个数 {len(ranks)} 与阶数 {len(shape)} 不符")
    total = int(np.prod(shape))
    for m, (d, r) in enumerate(zip(shape, ranks)):
        if not 1 <= r <= min(d, total // d):
            raise InvalidRankError(f"[ERROR] 模态 {m} 的秩 {r} 超出 [1, {min(d, total // d)}]", mode=m)
    if target_snr <= 0:
        raise ValueError(f"[ERROR] 目标 SNR 必须 > 0, 实际 {target_snr}")

    core = rng.standard_normal(ranks)
    factors = [_orthonormal(d, r, rng) for d, r in zip(shape, ranks)]
    B = tucker_reconstruct(TuckerFactors(core=core, factors=factors))
    return B * (target_snr / frobenius_norm(B))
