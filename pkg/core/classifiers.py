# core/classifiers.py - 分类器: T-LDA / T-LDA-NP / V-LDA / T-NN / T-NN-NP
"""
TensorNP - 分类器模块

每个分类器 = 打分函数 + 阈值:
    NP 版本:      φ̂(X) = 1{ŝ(X) > Ĉ_α}，Ĉ_α 来自伞形算法
    T-LDA/V-LDA:  φ̂(X) = 1{ŝ(X) ≥ Ĉ}，Ĉ = ⟨ℳ̂, B̂⟩ − log(n_1/n_0)
    T-NN:         φ̂(X) = 1{h_θ(X) > 0.5}

NP 版本把 class 0 训练数据切成两半: 一半参与打分函数拟合，另一半只用于校准阈值。
"""

import math
from dataclasses import dataclass, field
from typing import Optional, Tuple, Union

import numpy as np
from scipy import linalg as sla
from scipy.special import expit

import config
from core.calibration import CalibrationResult, NpLevels, min_calibration_size, umbrella_threshold
from core.errors import CalibrationSetTooSmallError, EmptyClassError, TensorShapeError
from core.estimation import LabeledData, LdaEstimates, class_means, estimate_lda, stratified_split
from core.numerics import RandomSource
from core.tensor_core import batch_inner
from core.tensor_nn import NnSettings, TclNetwork, fit_network, tnn_logits
from core.tgmm import OracleRule
from utils.logger import debug

METHODS = ("T-LDA", "T-LDA-NP", "V-LDA", "T-NN", "T-NN-NP", "Oracle")


@dataclass
class LinearScorer:
    """线性打分 s(X) = ⟨X, W⟩（无偏置）"""
    weights: np.ndarray

    kind = "linear"

    @property
    def shape(self) -> tuple:
        return tuple(self.weights.shape)

    def score(self, X: np.ndarray) -> np.ndarray:
        return batch_inner(X, self.weights)


@dataclass
class TnnScorer:
    """神经网络打分 ŝ(X) = g(h_θ(X))，g 为 identity 或 logit"""
    network: TclNetwork
    link: str = "identity"

    kind = "tnn"

    @property
    def shape(self) -> tuple:
        return self.network.shape

    def score(self, X: np.ndarray) -> np.ndarray:
        logits = tnn_logits(self.network, X)
        if self.link == "logit":
            return logits
        return expit(logits)

    @property
    def neutral_threshold(self) -> float:
        """h = 0.5 在所选 link 下对应的阈值"""
        return 0.0 if self.link == "logit" else 0.5


Scorer = Union[LinearScorer, TnnScorer]


@dataclass
class NpClassifier:
    """
    打分函数 + 阈值

    inclusive=True 时规则为 score ≥ threshold（T-LDA、V-LDA），否则为严格 >。
    """
    method: str
    scorer: Scorer
    threshold: float
    levels: Optional[NpLevels] = None
    inclusive: bool = False
    calibration: Optional[CalibrationResult] = None
    info: dict = field(default_factory=dict)

    @property
    def shape(self) -> tuple:
        return self.scorer.shape

    def _as_batch(self, X) -> Tuple[np.ndarray, bool]:
        X = np.asarray(X, dtype=np.float64)
        if X.shape == self.shape:
            return X[None], True
        if tuple(X.shape[1:]) != self.shape:
            raise TensorShapeError(f"[ERROR] 输入形状 {X.shape} 与分类器 {self.shape} 不符")
        return X, False

    def score(self, X):
        batch, single = self._as_batch(X)
        scores = self.scorer.score(batch)
        return float(scores[0]) if single else scores

    def decide(self, scores: np.ndarray) -> np.ndarray:
        scores = np.asarray(scores)
        hit = scores >= self.threshold if self.inclusive else scores > self.threshold
        return hit.astype(np.int8)

    def predict(self, X):
        batch, single = self._as_batch(X)
        labels = self.decide(self.scorer.score(batch))
        return int(labels[0]) if single else labels


def predict(classifier: NpClassifier, X):
    """单个张量返回 0/1，批次返回 int8 数组"""
    return classifier.predict(X)


def _bayes_threshold(mean0: np.ndarray, mean1: np.ndarray, weights: np.ndarray,
                     n0: int, n1: int) -> float:
    """Ĉ = ⟨(ℳ̂_0 + ℳ̂_1)/2, W⟩ − log(n_1/n_0)"""
    mid = 0.5 * (mean0 + mean1)
    return float(np.vdot(mid, weights)) - math.log(n1 / n0)


def _check_calibration_size(calib0: np.ndarray, levels: NpLevels):
    required = min_calibration_size(levels)
    if len(calib0) < required:
        raise CalibrationSetTooSmallError(required=required, actual=len(calib0))


def split_class0(x0: np.ndarray, rng: RandomSource,
                 calib_fraction: float = None) -> Tuple[np.ndarray, np.ndarray]:
    """
    class 0 随机切分为 (拟合部分 S_0', 校准部分 S_0'')

    校准部分 floor(n_0·fraction) 个，余下归拟合部分。
    """
    fraction = config.CALIB_FRACTION if calib_fraction is None else calib_fraction
    n0 = len(x0)
    n_calib = int(math.floor(n0 * fraction))
    order = rng.permutation(n0)
    calib_idx = np.sort(order[:n_calib])
    fit_idx = np.sort(order[n_calib:])
    return x0[fit_idx], x0[calib_idx]


# ============================================================
# T-LDA
# ============================================================

def fit_tlda(train: LabeledData, ranks, epsilon: float = None, max_iter: int = None,
             estimates: LdaEstimates = None) -> NpClassifier:
    """
    T-LDA: ŝ(X) = ⟨X, B̂⟩，Ĉ = ⟨ℳ̂, B̂⟩ − log(n_1/n_0)，规则取 ≥

    参数:
        train: 全部训练数据（两类都要有）
        ranks: Tucker 秩
        estimates: 已算好的估计量（可选，避免重复估计）
    """
    est = estimates or estimate_lda(train, ranks, epsilon, max_iter)
    threshold = _bayes_threshold(est.mean0, est.mean1, est.b_hat, est.n0, est.n1)
    debug(f"[T-LDA] n_0={est.n0}, n_1={est.n1}, DTIP 迭代 {est.iterations_used} 次, Ĉ={threshold:.4f}")
    return NpClassifier(
        method="T-LDA",
        scorer=LinearScorer(est.b_hat),
        threshold=threshold,
        inclusive=True,
        info={'iterations': est.iterations_used, 'ranks': tuple(est.tucker.ranks)},
    )


def fit_tlda_np(train0_fit: np.ndarray, train1: np.ndarray, calib0: np.ndarray, ranks,
                epsilon: float = None, max_iter: int = None,
                levels: NpLevels = None) -> NpClassifier:
    """
    T-LDA-NP: 在 S_0' ∪ S_1 上拟合 B̂，在 S_0'' 上用伞形算法定阈值

    异常:
        CalibrationSetTooSmallError: |S_0''| < min_calibration_size(levels)
    """
    levels = levels or NpLevels(config.DEFAULT_ALPHA, config.DEFAULT_DELTA)
    if len(train0_fit) == 0 or len(train1) == 0:
        raise EmptyClassError(f"[ERROR] 某类样本为空: n_0'={len(train0_fit)}, n_1={len(train1)}")
    _check_calibration_size(calib0, levels)
    est = estimate_lda(LabeledData.from_classes(train0_fit, train1), ranks, epsilon, max_iter)
    scorer = LinearScorer(est.b_hat)
    result = umbrella_threshold(scorer.score(np.asarray(calib0, dtype=np.float64)), levels)
    debug(f"[T-LDA-NP] k*={result.k_star}/{result.n_calib}, Ĉ_α={result.threshold:.4f}")
    return NpClassifier(
        method="T-LDA-NP",
        scorer=scorer,
        threshold=result.threshold,
        levels=levels,
        calibration=result,
        info={'iterations': est.iterations_used, 'ranks': tuple(est.tucker.ranks)},
    )


def fit_pair_tlda(fit0: np.ndarray, calib0: np.ndarray, train1: np.ndarray, ranks,
                  levels: NpLevels, epsilon: float = None,
                  max_iter: int = None) -> Tuple[NpClassifier, NpClassifier]:
    """
    同一次 class 0 切分得到 (T-LDA, T-LDA-NP)

    T-LDA 把保留的 S_0'' 合并回训练集；T-LDA-NP 只用 S_0' ∪ S_1 拟合。
    """
    _check_calibration_size(calib0, levels)
    train0 = np.concatenate([fit0, calib0], axis=0)
    tlda = fit_tlda(LabeledData.from_classes(train0, train1), ranks, epsilon, max_iter)
    tlda_np = fit_tlda_np(fit0, train1, calib0, ranks, epsilon, max_iter, levels)
    return tlda, tlda_np


# ============================================================
# V-LDA
# ============================================================

def fit_vlda(train: LabeledData, ridge_scale: float = None) -> NpClassifier:
    """
    向量化 Fisher LDA

    w = (S + λI)^{-1}(m̂_1 − m̂_0)，λ = ridge_scale·trace(S)/d，S 为合并样本协方差。
    n < d 且 λ > 0 时用 Woodbury 恒等式在 n×n 空间里求解。
    """
    ridge_scale = config.VLDA_RIDGE_SCALE if ridge_scale is None else ridge_scale
    if ridge_scale < 0:
        raise ValueError(f"[ERROR] ridge_scale 必须 ≥ 0, 实际 {ridge_scale}")
    mean0, mean1, n0, n1 = class_means(train)
    n = n0 + n1
    shape = train.shape
    X = train.tensors.reshape(n, -1)
    labels = train.labels
    centered = X - np.where((labels == 1)[:, None], mean1.reshape(-1), mean0.reshape(-1))
    diff = (mean1 - mean0).reshape(-1)
    d = X.shape[1]
    lam = ridge_scale * float(np.sum(centered ** 2)) / n / d

    if lam > 0 and n < d:
        gram = centered @ centered.T + n * lam * np.eye(n)
        inner_solve = sla.solve(gram, centered @ diff, assume_a='pos')
        w = (diff - centered.T @ inner_solve) / lam
    else:
        S = centered.T @ centered / n + lam * np.eye(d)
        try:
            w = sla.solve(S, diff, assume_a='sym')
        except np.linalg.LinAlgError:
            w = np.linalg.lstsq(S, diff, rcond=None)[0]

    weights = w.reshape(shape)
    threshold = _bayes_threshold(mean0, mean1, weights, n0, n1)
    return NpClassifier(method="V-LDA", scorer=LinearScorer(weights), threshold=threshold,
                        inclusive=True, info={'ridge': lam})


# ============================================================
# T-NN
# ============================================================

def _validation_split(train: LabeledData, val: Optional[LabeledData], settings: NnSettings,
                      rng: RandomSource) -> Tuple[LabeledData, LabeledData]:
    if val is not None:
        if len(val) == 0:
            raise ValueError("[ERROR] 验证集为空")
        return train, val
    rest, val = stratified_split(train, settings.val_fraction, rng)
    if len(val) == 0:
        raise ValueError("[ERROR] 训练集太小，切不出验证集")
    return rest, val


def fit_tnn(train: LabeledData, val: Optional[LabeledData], settings: NnSettings,
            rng: RandomSource) -> NpClassifier:
    """
    T-NN: 训练 settings.epochs 个 epoch，取验证准确率最高的快照，阈值 h = 0.5

    参数:
        val: 验证集；为 None 时从 train 中分层抽 val_fraction
    """
    n0, n1 = train.counts()
    if n0 == 0 or n1 == 0:
        raise EmptyClassError(f"[ERROR] 某类样本为空: n_0={n0}, n_1={n1}")
    train, val = _validation_split(train, val, settings, rng.split(2))
    result = fit_network(train.tensors, train.labels, val.tensors, val.labels, settings, rng)
    scorer = TnnScorer(result.network, settings.link)
    return NpClassifier(method="T-NN", scorer=scorer, threshold=scorer.neutral_threshold,
                        info={'best_epoch': result.best_epoch})


def fit_tnn_np(train0_fit: np.ndarray, train1: np.ndarray, calib0: np.ndarray,
               val: Optional[LabeledData], settings: NnSettings, levels: NpLevels,
               rng: RandomSource) -> NpClassifier:
    """
    T-NN-NP: 网络不接触 S_0''，阈值由伞形算法在 S_0'' 的分数上确定
    """
    if len(train0_fit) == 0 or len(train1) == 0:
        raise EmptyClassError(f"[ERROR] 某类样本为空: n_0'={len(train0_fit)}, n_1={len(train1)}")
    _check_calibration_size(calib0, levels)
    fitted = fit_tnn(LabeledData.from_classes(train0_fit, train1), val, settings, rng)
    scorer = fitted.scorer
    result = umbrella_threshold(scorer.score(np.asarray(calib0, dtype=np.float64)), levels)
    debug(f"[T-NN-NP] k*={result.k_star}/{result.n_calib}, Ĉ_α={result.threshold:.6f}")
    return NpClassifier(method="T-NN-NP", scorer=scorer, threshold=result.threshold,
                        levels=levels, calibration=result, info=dict(fitted.info))


def fit_pair_tnn(fit0: np.ndarray, calib0: np.ndarray, train1: np.ndarray, settings: NnSettings,
                 levels: NpLevels, rng: RandomSource,
                 val: Optional[LabeledData] = None) -> Tuple[NpClassifier, NpClassifier]:
    """
    同一次 class 0 切分得到 (T-NN, T-NN-NP)

    验证集先从 S_0' ∪ S_1 中分层抽出，两个网络共用；T-NN 额外使用 S_0''。
    """
    _check_calibration_size(calib0, levels)
    train, val = _validation_split(LabeledData.from_classes(fit0, train1), val, settings, rng.split(0))

    merged = LabeledData.concat(train, LabeledData(calib0, np.zeros(len(calib0), np.int8)))
    tnn = fit_tnn(merged, val, settings, rng.split(1))
    tnn_np = fit_tnn_np(train.of_class(0), train.of_class(1), calib0, val, settings, levels, rng.split(2))
    return tnn, tnn_np


# ============================================================
# Oracle
# ============================================================

def oracle_classifier(rule: OracleRule) -> NpClassifier:
    """把闭式 oracle 规则包装成分类器（严格 >）"""
    return NpClassifier(method="Oracle", scorer=LinearScorer(rule.discriminant),
                        threshold=rule.threshold, info={'alpha': rule.alpha, 'snr': rule.snr})
