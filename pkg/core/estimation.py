# core/estimation.py - 张量 LDA 模型的样本估计
"""
TensorNP - 估计模块

流程:
    样本均值 ℳ̂_y → 模态协方差 Σ̂_m → 谱初始化 B̂^init = (ℳ̂_1 − ℳ̂_0) ×_m Σ̂_m^{-1}
    → DTIP 迭代投影得到 Tucker 低秩估计 B̂ = B̂^init ×_m Û_m Û_mᵀ

依赖: numpy
"""

from dataclasses import dataclass, field
from typing import List, Sequence, Tuple

import numpy as np

import config
from core.errors import (EmptyClassError, InvalidRankError, NotPositiveDefiniteError,
                         TensorShapeError, UnrecoverableSingularCovarianceError)
from core.numerics import RandomSource, invert_spd, projector, spectral_norm, top_left_singular_vectors
from core.tensor_core import TuckerFactors, frobenius_norm, multi_mode_product, unfold
from utils.logger import debug, warning


@dataclass
class LabeledData:
    """
    带标签的张量样本集

    tensors: 形状 (N, d_1, ..., d_M)；labels: 长度 N，取值 0/1
    """
    tensors: np.ndarray
    labels: np.ndarray

    def __post_init__(self):
        self.tensors = np.asarray(self.tensors, dtype=np.float64)
        self.labels = np.asarray(self.labels, dtype=np.int8).reshape(-1)
        if self.tensors.ndim < 2:
            raise TensorShapeError(f"[ERROR] 样本批次至少 2 维 (N, d_1, ...), 实际 {self.tensors.shape}")
        if self.tensors.shape[0] != self.labels.shape[0]:
            raise TensorShapeError(
                f"[ERROR] 样本数 {self.tensors.shape[0]} 与标签数 {self.labels.shape[0]} 不符")
        if np.any((self.labels != 0) & (self.labels != 1)):
            raise ValueError("[ERROR] 标签只能是 0 或 1")

    def __len__(self):
        return int(self.labels.shape[0])

    @property
    def shape(self) -> tuple:
        """单个样本的形状"""
        return tuple(self.tensors.shape[1:])

    def counts(self) -> Tuple[int, int]:
        n1 = int(np.sum(self.labels == 1))
        return len(self) - n1, n1

    def of_class(self, label: int) -> np.ndarray:
        return self.tensors[self.labels == label]

    def subset(self, index: np.ndarray) -> "LabeledData":
        return LabeledData(self.tensors[index], self.labels[index])

    @classmethod
    def from_classes(cls, x0: np.ndarray, x1: np.ndarray) -> "LabeledData":
        """由两类批次拼接（class 0 在前）"""
        x0 = np.asarray(x0, dtype=np.float64)
        x1 = np.asarray(x1, dtype=np.float64)
        labels = np.concatenate([np.zeros(len(x0), np.int8), np.ones(len(x1), np.int8)])
        return cls(np.concatenate([x0, x1], axis=0), labels)

    @classmethod
    def concat(cls, *parts: "LabeledData") -> "LabeledData":
        return cls(np.concatenate([p.tensors for p in parts], axis=0),
                   np.concatenate([p.labels for p in parts]))


def stratified_split(data: LabeledData, fraction: float,
                     rng: RandomSource) -> Tuple[LabeledData, LabeledData]:
    """
    分层随机切分

    每个类别取 floor(n_y · fraction) 个样本组成第二部分，其余为第一部分。
    返回: (剩余部分, 抽出部分)
    """
    if not 0 < fraction < 1:
        raise ValueError(f"[ERROR] 切分比例必须在 (0,1) 内, 实际 {fraction}")
    keep, take = [], []
    for label in (0, 1):
        idx = np.flatnonzero(data.labels == label)
        idx = idx[rng.permutation(len(idx))]
        k = int(np.floor(len(idx) * fraction))
        take.append(idx[:k])
        keep.append(idx[k:])
    keep_idx = np.sort(np.concatenate(keep))
    take_idx = np.sort(np.concatenate(take))
    return data.subset(keep_idx), data.subset(take_idx)


@dataclass
class LdaEstimates:
    """张量 LDA 的全部估计量"""
    mean0: np.ndarray
    mean1: np.ndarray
    mode_covs: List[np.ndarray]
    b_init: np.ndarray
    b_hat: np.ndarray
    tucker: TuckerFactors
    prior1_hat: float
    iterations_used: int
    n0: int = 0
    n1: int = 0
    core_norm_history: List[float] = field(default_factory=list)


@dataclass
class DtipResult:
    tucker: TuckerFactors
    b_hat: np.ndarray
    iterations_used: int
    converged: bool
    core_norm_history: List[float]


def class_means(data: LabeledData) -> Tuple[np.ndarray, np.ndarray, int, int]:
    """
    两类样本均值

    返回:
        (ℳ̂_0, ℳ̂_1, n_0, n_1)
    """
    n0, n1 = data.counts()
    if n0 == 0 or n1 == 0:
        raise EmptyClassError(f"[ERROR] 某类样本为空: n_0={n0}, n_1={n1}")
    return data.of_class(0).mean(axis=0), data.of_class(1).mean(axis=0), n0, n1


def mode_covariances(data: LabeledData, means: Tuple[np.ndarray, np.ndarray]) -> List[np.ndarray]:
    """
    合并的模态协方差

    Σ̂_m = (n d_{-m})^{-1} Σ_y Σ_i mat_m(X_i − ℳ̂_y) mat_m(X_i − ℳ̂_y)ᵀ
    """
    n = len(data)
    if n < 2:
        raise ValueError(f"[ERROR] 估计协方差至少需要 2 个样本, 实际 {n}")
    mean0, mean1 = means[0], means[1]
    centered = data.tensors - np.where(
        (data.labels == 1).reshape((-1,) + (1,) * mean0.ndim), mean1, mean0)
    total = int(np.prod(data.shape))
    covs = []
    for m, d_m in enumerate(data.shape):
        # (N, d_m, d_{-m})，列顺序不影响 Gram 矩阵
        Y = np.moveaxis(centered, m + 1, 1).reshape(n, d_m, -1)
        S = np.einsum('nij,nkj->ik', Y, Y) / (n * (total // d_m))
        covs.append(0.5 * (S + S.T))
    return covs


def robust_inverse(S: np.ndarray, mode: int = None) -> np.ndarray:
    """
    SPD 求逆，失败时加岭 λI 重试

    λ = 系数·trace(S)/d，系数从 RIDGE_START 起每次乘 RIDGE_GROWTH，上限 RIDGE_MAX。
    """
    try:
        return invert_spd(S)
    except NotPositiveDefiniteError:
        pass

    d = S.shape[0]
    base = float(np.trace(S)) / d
    if base <= 0:
        raise UnrecoverableSingularCovarianceError(
            f"[ERROR] 模态 {mode} 协方差迹为 {base * d:.3g}，无法加岭")
    coef = config.RIDGE_START
    while coef <= config.RIDGE_MAX * (1 + 1e-12):
        try:
            inv = invert_spd(S + coef * base * np.eye(d))
            warning(f"[RIDGE] 模态 {mode} 协方差近奇异，已加岭 λ={coef:g}·trace/d")
            return inv
        except NotPositiveDefiniteError:
            coef *= config.RIDGE_GROWTH
    raise UnrecoverableSingularCovarianceError(
        f"[ERROR] 模态 {mode} 协方差加岭到 {config.RIDGE_MAX:g}·trace/d 仍不可逆")


def initial_discriminant(means: Tuple[np.ndarray, np.ndarray], mode_covs: Sequence[np.ndarray]) -> np.ndarray:
    """谱初始化 B̂^init = (ℳ̂_1 − ℳ̂_0) ×_{m} Σ̂_m^{-1}"""
    D = means[1] - means[0]
    inverses = [robust_inverse(S, mode=m) for m, S in enumerate(mode_covs)]
    return multi_mode_product(D, inverses)


def validate_ranks(shape: Sequence[int], ranks: Sequence[int]) -> tuple:
    """1 ≤ r_m ≤ min(d_m, d_{-m})，错误消息指出模态"""
    shape = tuple(shape)
    ranks = tuple(int(r) for r in ranks)
    if len(ranks) != len(shape):
        raise InvalidRankError(f"[ERROR] 秩个数 {len(ranks)} 与张量阶数 {len(shape)} 不符")
    total = int(np.prod(shape))
    for m, (d, r) in enumerate(zip(shape, ranks)):
        upper = min(d, total // d)
        if not 1 <= r <= upper:
            raise InvalidRankError(
                f"[ERROR] 模态 {m + 1} (mode {m + 1}) 的秩 {r} 超出范围 [1, {upper}]", mode=m)
    return ranks


def _contract_except(X: np.ndarray, factors: Sequence[np.ndarray], m: int) -> np.ndarray:
    """Z_m = X ×_{j≠m} U_jᵀ"""
    maps = [None if j == m else U.T for j, U in enumerate(factors)]
    return multi_mode_product(X, maps)


def dtip(b_init: np.ndarray, ranks: Sequence[int], epsilon: float = None,
         max_iter: int = None) -> DtipResult:
    """
    判别张量迭代投影 (DTIP)

    参数:
        b_init: 初始判别张量 B̂^init
        ranks: Tucker 秩 (r_1..r_M)
        epsilon: 投影距离停止阈值
        max_iter: 最大迭代次数 T

    返回:
        DtipResult（Tucker 因子、B̂、迭代次数、核范数历史）
    """
    epsilon = config.DTIP_EPSILON if epsilon is None else epsilon
    max_iter = config.DTIP_MAX_ITER if max_iter is None else max_iter
    if epsilon <= 0:
        raise ValueError(f"[ERROR] epsilon 必须 > 0, 实际 {epsilon}")
    if max_iter < 1:
        raise ValueError(f"[ERROR] 最大迭代次数必须 ≥ 1, 实际 {max_iter}")
    b_init = np.asarray(b_init, dtype=np.float64)
    ranks = validate_ranks(b_init.shape, ranks)

    # HOSVD 初始化
    factors = [top_left_singular_vectors(unfold(b_init, m), r) for m, r in enumerate(ranks)]
    history = [frobenius_norm(multi_mode_product(b_init, [U.T for U in factors]))]

    converged = False
    t = 0
    for t in range(1, max_iter + 1):
        previous = [projector(U) for U in factors]
        # 模态 < m 用本轮因子，模态 > m 用上一轮因子（原地更新即为此顺序）
        for m, r in enumerate(ranks):
            Z = _contract_except(b_init, factors, m)
            factors[m] = top_left_singular_vectors(unfold(Z, m), r)
        distance = max(spectral_norm(projector(U) - P) for U, P in zip(factors, previous))
        history.append(frobenius_norm(multi_mode_product(b_init, [U.T for U in factors])))
        debug(f"[DTIP] 第 {t} 次迭代, 投影距离 {distance:.3e}, 核范数 {history[-1]:.6f}")
        if distance <= epsilon:
            converged = True
            break

    core = multi_mode_product(b_init, [U.T for U in factors])
    b_hat = multi_mode_product(b_init, [projector(U) for U in factors])
    return DtipResult(
        tucker=TuckerFactors(core=core, factors=factors),
        b_hat=b_hat,
        iterations_used=t,
        converged=converged,
        core_norm_history=history,
    )


def estimate_lda(data: LabeledData, ranks: Sequence[int], epsilon: float = None,
                 max_iter: int = None) -> LdaEstimates:
    """完整估计流水线: 均值 → 模态协方差 → 谱初始化 → DTIP"""
    validate_ranks(data.shape, ranks)
    mean0, mean1, n0, n1 = class_means(data)
    covs = mode_covariances(data, (mean0, mean1))
    b_init = initial_discriminant((mean0, mean1), covs)
    result = dtip(b_init, ranks, epsilon, max_iter)
    return LdaEstimates(
        mean0=mean0,
        mean1=mean1,
        mode_covs=covs,
        b_init=b_init,
        b_hat=result.b_hat,
        tucker=result.tucker,
        prior1_hat=n1 / (n0 + n1),
        iterations_used=result.iterations_used,
        n0=n0,
        n1=n1,
        core_norm_history=result.core_norm_history,
    )
