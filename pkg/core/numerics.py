# core/numerics.py - 数值线性代数、正态分布函数与随机源
"""
TensorNP - 数值基础模块

功能:
1. SPD 矩阵的 Cholesky 分解与求逆（带主元阈值检查）
2. 对称特征分解、截断左奇异向量、谱范数
3. 标准正态 CDF / 分位数
4. 可拆分的计数器型随机源 RandomSource

所有函数都是纯函数；RandomSource 只能由单个所有者使用，
并行时必须 split() 出独立的流。

依赖: numpy, scipy
"""

from typing import Tuple

import numpy as np
from scipy import linalg as sla
from scipy import special

from core.errors import ConfigError, NotPositiveDefiniteError, TensorShapeError

# 特征分解前对称性检查的容差（相对）
SYMMETRY_TOL = 1e-10

# Cholesky 主元阈值: pivot ≤ PIVOT_TOL · trace(S)/n 视为非正定
PIVOT_TOL = 1e-12


def _as_square(S: np.ndarray) -> np.ndarray:
    S = np.asarray(S, dtype=np.float64)
    if S.ndim != 2 or S.shape[0] != S.shape[1]:
        raise TensorShapeError(f"[ERROR] 需要方阵, 实际形状 {S.shape}")
    return S


def check_symmetric(S: np.ndarray, tol: float = SYMMETRY_TOL) -> np.ndarray:
    """检查对称性（相对 ‖S‖_max），返回对称化后的矩阵"""
    S = _as_square(S)
    scale = max(1.0, float(np.max(np.abs(S)))) if S.size else 1.0
    if np.max(np.abs(S - S.T), initial=0.0) > tol * scale:
        raise ValueError("[ERROR] 矩阵不对称")
    return 0.5 * (S + S.T)


def cholesky(S: np.ndarray) -> np.ndarray:
    """
    Cholesky 分解 S = L Lᵀ

    返回:
        下三角 L
    异常:
        NotPositiveDefiniteError: 某主元 ≤ 1e-12·trace(S)/n
    """
    S = check_symmetric(S)
    n = S.shape[0]
    trace = float(np.trace(S))
    if trace <= 0:
        raise NotPositiveDefiniteError(f"[ERROR] 矩阵非正定: trace = {trace:.3g}")
    try:
        L = np.linalg.cholesky(S)
    except np.linalg.LinAlgError as e:
        raise NotPositiveDefiniteError(f"[ERROR] 矩阵非正定: {e}") from e
    pivots = np.diag(L) ** 2
    if np.min(pivots) <= PIVOT_TOL * trace / n:
        raise NotPositiveDefiniteError(
            f"[ERROR] 矩阵非正定: 最小主元 {np.min(pivots):.3g} ≤ {PIVOT_TOL:g}·trace/n")
    return L


def invert_spd(S: np.ndarray) -> np.ndarray:
    """SPD 矩阵求逆（基于 Cholesky），结果对称化"""
    L = cholesky(S)
    inv = sla.cho_solve((L, True), np.eye(L.shape[0]))
    return 0.5 * (inv + inv.T)


def sym_eigen(S: np.ndarray) -> Tuple[np.ndarray, np.ndarray]:
    """
    对称特征分解

    返回:
        (特征值降序, 列正交特征向量)；每列绝对值最大的元素为正
    """
    S = check_symmetric(S)
    values, vectors = np.linalg.eigh(S)
    order = np.argsort(values)[::-1]
    values = values[order]
    vectors = _fix_signs(vectors[:, order])
    return values, vectors


def _fix_signs(V: np.ndarray) -> np.ndarray:
    """确定性符号约定: 每列绝对值最大的元素取正"""
    if V.size == 0:
        return V
    idx = np.argmax(np.abs(V), axis=0)
    signs = np.sign(V[idx, np.arange(V.shape[1])])
    signs[signs == 0] = 1.0
    return V * signs


def top_left_singular_vectors(A: np.ndarray, r: int) -> np.ndarray:
    """
    LSVD_r(A): A 的前 r 个左奇异向量

    通过 A·Aᵀ（p×p，展开矩阵的短边）的特征分解得到，不构造长边 Gram 矩阵。
    """
    A = np.asarray(A, dtype=np.float64)
    if A.ndim != 2:
        raise TensorShapeError(f"[ERROR] 需要矩阵, 实际形状 {A.shape}")
    p, q = A.shape
    if not 1 <= r <= min(p, q):
        raise ValueError(f"[ERROR] 秩 r={r} 超出范围 [1, {min(p, q)}]")
    _, vectors = sym_eigen(A @ A.T)
    return vectors[:, :r]


def spectral_norm(S: np.ndarray) -> float:
    """对称矩阵的谱范数 max |λ|"""
    S = check_symmetric(S)
    if S.size == 0:
        return 0.0
    return float(np.max(np.abs(np.linalg.eigvalsh(S))))


def projector(U: np.ndarray) -> np.ndarray:
    """列正交矩阵 U 的投影 U Uᵀ（与符号/基选择无关，测试比较的对象）"""
    return U @ U.T


def std_normal_cdf(x):
    """标准正态 CDF Φ(x)"""
    result = special.ndtr(x)
    return float(result) if np.ndim(result) == 0 else result


def std_normal_quantile(p):
    """标准正态分位数 Φ^{-1}(p)，要求 0 < p < 1"""
    p_arr = np.asarray(p, dtype=np.float64)
    if np.any((p_arr <= 0) | (p_arr >= 1)):
        raise ValueError(f"[ERROR] 分位数要求 0 < p < 1, 实际 {p}")
    result = special.ndtri(p_arr)
    return float(result) if np.ndim(result) == 0 else result


class RandomSource:
    """
    可拆分的随机源

    底层为计数器型 Philox 生成器；split(stream_id) 以 (seed, 路径, stream_id)
    为键派生独立流，因此第 k 次重复可单独复现，与平台和线程数无关。
    """

    def __init__(self, seed: int, _path: Tuple[int, ...] = ()):
        if int(seed) < 0:
            raise ConfigError("seed", f"必须是非负整数, 实际 {seed}")
        self.seed = int(seed)
        self.path = tuple(int(i) for i in _path)
        self._seq = np.random.SeedSequence(entropy=self.seed, spawn_key=self.path)
        self._gen = np.random.Generator(np.random.Philox(self._seq))

    def split(self, stream_id: int) -> "RandomSource":
        """派生独立子流（不消耗当前流的状态）"""
        return RandomSource(self.seed, self.path + (int(stream_id),))

    @property
    def stream_seed(self) -> int:
        """该流的 64 位标识，写入 CSV 的 seed 列"""
        return int(self._seq.generate_state(1, dtype=np.uint64)[0])

    @property
    def generator(self) -> np.random.Generator:
        return self._gen

    def standard_normal(self, size=None):
        return self._gen.standard_normal(size)

    def chi_square(self, f: int, size=None):
        """自由度为 f 的卡方"""
        if f < 1:
            raise ValueError(f"[ERROR] 卡方自由度必须 ≥ 1, 实际 {f}")
        return self._gen.chisquare(f, size)

    def uniform(self, low: float = 0.0, high: float = 1.0, size=None):
        return self._gen.uniform(low, high, size)

    def permutation(self, n: int) -> np.ndarray:
        return self._gen.permutation(n)

    def integers(self, low: int, high: int = None, size=None):
        return self._gen.integers(low, high, size)

    def __repr__(self):
        return f"RandomSource(seed={self.seed}, path={self.path})"
