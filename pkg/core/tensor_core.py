# core/tensor_core.py - 稠密张量与多线性代数
"""
TensorNP - 张量基础模块

功能: 模态展开/折叠、模态乘积、内积、Tucker 重构
约定:
    - 张量就是 float64 的 numpy.ndarray，形状 (d_1, ..., d_M)
    - vec(X) 以 mode-1 最快排列，即 X.ravel(order="F")，
      这样 vec(X ×_m A) = (I ⊗ … ⊗ A ⊗ … ⊗ I) vec(X)，Σ_v = Σ_M ⊗ … ⊗ Σ_1
    - 模态展开采用 Kolda–Bader 列顺序
    - API 中模态索引从 0 开始

依赖: numpy
"""

from dataclasses import dataclass
from typing import List, Optional, Sequence

import numpy as np

from core.errors import TensorShapeError


def as_tensor(x) -> np.ndarray:
    """转成 float64 ndarray（已是 float64 时不复制）"""
    arr = np.asarray(x, dtype=np.float64)
    if arr.ndim < 1:
        raise TensorShapeError("[ERROR] 张量阶数至少为 1")
    if any(d < 1 for d in arr.shape):
        raise TensorShapeError(f"[ERROR] 每个模态大小必须 ≥ 1: {arr.shape}")
    return arr


def check_shape(shape: Sequence[int]) -> tuple:
    """校验形状: M ≥ 1, 每个 d_m ≥ 1"""
    shape = tuple(int(d) for d in shape)
    if len(shape) < 1 or any(d < 1 for d in shape):
        raise TensorShapeError(f"[ERROR] 非法形状: {shape}")
    return shape


def _check_mode(ndim: int, m: int):
    if not 0 <= m < ndim:
        raise TensorShapeError(f"[ERROR] 模态越界: mode {m}, 张量阶数 {ndim}")


def vectorize(X: np.ndarray) -> np.ndarray:
    """vec(X)，mode-1 最快"""
    return np.asarray(X).ravel(order="F")


def from_vector(v: np.ndarray, shape: Sequence[int]) -> np.ndarray:
    """vectorize 的逆"""
    shape = check_shape(shape)
    v = np.asarray(v, dtype=np.float64)
    if v.size != int(np.prod(shape)):
        raise TensorShapeError(f"[ERROR] 向量长度 {v.size} 与形状 {shape} 不符")
    return v.reshape(shape, order="F")


def unfold(X: np.ndarray, m: int) -> np.ndarray:
    """
    模态 m 展开 mat_m(X)，大小 d_m × d_{-m}

    元素 (i_1..i_M) 映射到第 i_m 行，
    第 1 + Σ_{l≠m}(i_l−1)·Π_{p<l, p≠m} d_p 列（Kolda–Bader）
    """
    X = np.asarray(X)
    _check_mode(X.ndim, m)
    return np.reshape(np.moveaxis(X, m, 0), (X.shape[m], -1), order="F")


def fold(A: np.ndarray, m: int, shape: Sequence[int]) -> np.ndarray:
    """unfold 的逆: fold(unfold(X, m), m, X.shape) == X"""
    shape = check_shape(shape)
    _check_mode(len(shape), m)
    A = np.asarray(A)
    rest = int(np.prod(shape)) // shape[m]
    if A.shape != (shape[m], rest):
        raise TensorShapeError(
            f"[ERROR] 矩阵大小 {A.shape} 与模态 {m} 展开 ({shape[m]}, {rest}) 不符")
    moved = (shape[m],) + tuple(d for i, d in enumerate(shape) if i != m)
    return np.moveaxis(np.reshape(A, moved, order="F"), 0, m)


def mode_product(X: np.ndarray, A: np.ndarray, m: int) -> np.ndarray:
    """
    模态积 X ×_m A

    (X ×_m A)_{…j…} = Σ_{i_m} X_{…i_m…} A_{j,i_m}
    对批次 (N, d_1, ..., d_M) 使用 m+1 即可保留 batch 维。
    """
    X = np.asarray(X)
    A = np.asarray(A)
    _check_mode(X.ndim, m)
    if A.ndim != 2 or A.shape[1] != X.shape[m]:
        raise TensorShapeError(
            f"[ERROR] 模态 {m} 维度不匹配: 矩阵 {A.shape}, 张量 {X.shape}")
    return np.moveaxis(np.tensordot(A, X, axes=(1, m)), 0, m)


def multi_mode_product(X: np.ndarray, maps: Sequence[Optional[np.ndarray]],
                       offset: int = 0) -> np.ndarray:
    """
    X ×_{m} A_m，对每个非空槽位做模态积

    参数:
        maps: 每个模态一个矩阵或 None（None 表示该模态不变）
        offset: 模态起点；批次数据用 offset=1
    """
    X = np.asarray(X)
    if len(maps) != X.ndim - offset:
        raise TensorShapeError(
            f"[ERROR] 矩阵个数 {len(maps)} 与模态数 {X.ndim - offset} 不符")
    for m, A in enumerate(maps):
        if A is not None:
            X = mode_product(X, A, m + offset)
    return X


def inner(X: np.ndarray, Y: np.ndarray) -> float:
    """Frobenius 内积 ⟨X, Y⟩ = vec(X)ᵀ vec(Y)"""
    X = np.asarray(X)
    Y = np.asarray(Y)
    if X.shape != Y.shape:
        raise TensorShapeError(f"[ERROR] 内积形状不一致: {X.shape} vs {Y.shape}")
    return float(np.vdot(X, Y))


def batch_inner(batch: np.ndarray, W: np.ndarray) -> np.ndarray:
    """批量内积: 每个样本与 W 的 ⟨X_i, W⟩，返回长度 N 的向量"""
    batch = np.asarray(batch)
    W = np.asarray(W)
    if batch.shape[1:] != W.shape:
        raise TensorShapeError(
            f"[ERROR] 样本形状 {batch.shape[1:]} 与权重形状 {W.shape} 不符")
    return batch.reshape(batch.shape[0], W.size) @ W.reshape(-1)


def frobenius_norm(X: np.ndarray) -> float:
    return float(np.linalg.norm(np.asarray(X).ravel()))


@dataclass(frozen=True)
class TuckerFactors:
    """
    Tucker 表示 B = F ×_1 U_1 ×_2 … ×_M U_M

    core: 形状 (r_1..r_M)；factors[m]: d_m × r_m，列正交
    """
    core: np.ndarray
    factors: List[np.ndarray]

    @property
    def ranks(self) -> tuple:
        return tuple(self.core.shape)

    @property
    def shape(self) -> tuple:
        return tuple(U.shape[0] for U in self.factors)

    def validate(self, tol: float = 1e-10):
        """检查因子与核形状一致、列正交、1 ≤ r_m ≤ d_m"""
        if len(self.factors) != self.core.ndim:
            raise TensorShapeError(
                f"[ERROR] 因子个数 {len(self.factors)} 与核阶数 {self.core.ndim} 不符")
        for m, U in enumerate(self.factors):
            d_m, r_m = U.shape
            if r_m != self.core.shape[m] or not 1 <= r_m <= d_m:
                raise TensorShapeError(f"[ERROR] 模态 {m} 因子形状 {U.shape} 与核不符")
            gram = U.T @ U
            if np.max(np.abs(gram - np.eye(r_m))) > tol:
                raise TensorShapeError(f"[ERROR] 模态 {m} 因子列不正交")
        return self


def tucker_reconstruct(T: TuckerFactors) -> np.ndarray:
    """B = F ×_1 U_1 ×_2 … ×_M U_M"""
    if len(T.factors) != T.core.ndim:
        raise TensorShapeError(
            f"[ERROR] 因子个数 {len(T.factors)} 与核阶数 {T.core.ndim} 不符")
    for m, U in enumerate(T.factors):
        if U.ndim != 2 or U.shape[1] != T.core.shape[m]:
            raise TensorShapeError(f"[ERROR] 模态 {m} 因子形状 {U.shape} 与核不符")
    return multi_mode_product(T.core, T.factors)


def kron_operator(matrices: Sequence[np.ndarray]) -> np.ndarray:
    """
    稠密 Kronecker 积 A_M ⊗ … ⊗ A_1（按模态 1..M 传入）

    与 vectorize 的排列约定配套，只用于小规模校验。
    """
    result = np.ones((1, 1))
    for A in matrices:
        result = np.kron(A, result)
    return result
