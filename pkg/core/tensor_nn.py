# core/tensor_nn.py - 张量收缩神经网络 (T-NN)
"""
TensorNP - 张量神经网络模块

网络结构:
    X (N, d_1..d_M)
      → TCL: X ×_2 V_1 ×_3 V_2 … ×_{M+1} V_M   (V_m: R_m × d_m，保留 batch 维)
      → （可堆叠多个 TCL）
      → vec → Linear(ΠR_m, H) → ReLU → Linear(H, 1) → sigmoid

训练:
    mini-batch Adam，最小化平均二元交叉熵；每个 epoch 结束后在验证集上算准确率，
    返回验证准确率最高的 epoch 的参数（并列取最早）。

依赖: torch, numpy
"""

import copy
from dataclasses import dataclass, field
from typing import Dict, List, Optional, Sequence, Tuple

import numpy as np
import torch
import torch.nn.functional as F
from scipy.special import expit
from torch import nn

import config
from core.errors import TensorShapeError
from core.numerics import RandomSource
from utils.logger import debug, is_enabled
from utils.torch_runtime import TorchRuntime

LINKS = ("identity", "logit")


@dataclass
class NnSettings:
    """T-NN 结构与训练超参数"""
    tcl_ranks: Optional[List[Tuple[int, ...]]] = None   # None → 单层 R_m = min(8, d_m)
    hidden: int = field(default_factory=lambda: config.NN_HIDDEN)
    epochs: int = field(default_factory=lambda: config.NN_EPOCHS)
    batch: int = field(default_factory=lambda: config.NN_BATCH)
    rate: float = field(default_factory=lambda: config.NN_LR)
    betas: Tuple[float, float] = config.NN_BETAS
    eps: float = config.NN_EPS
    val_fraction: float = field(default_factory=lambda: config.NN_VAL_FRACTION)
    link: str = "identity"

    def __post_init__(self):
        if self.hidden < 1:
            raise ValueError(f"[ERROR] 隐藏层宽度必须 ≥ 1, 实际 {self.hidden}")
        if self.epochs < 1:
            raise ValueError(f"[ERROR] epoch 数必须 ≥ 1, 实际 {self.epochs}")
        if self.batch < 1:
            raise ValueError(f"[ERROR] batch 大小必须 ≥ 1, 实际 {self.batch}")
        if self.rate <= 0:
            raise ValueError(f"[ERROR] 学习率必须 > 0, 实际 {self.rate}")
        if not 0 < self.val_fraction < 1:
            raise ValueError(f"[ERROR] 验证集比例必须在 (0,1) 内, 实际 {self.val_fraction}")
        if self.link not in LINKS:
            raise ValueError(f"[ERROR] 未知 link: {self.link}（可选 {LINKS}）")
        if self.tcl_ranks is not None:
            self.tcl_ranks = [tuple(int(r) for r in layer) for layer in self.tcl_ranks]

    def resolve_ranks(self, shape: Sequence[int]) -> List[Tuple[int, ...]]:
        """每层 TCL 的输出秩；未指定时单层 R_m = min(TCL_RANK_CAP, d_m)"""
        if self.tcl_ranks is None:
            return [tuple(min(config.TCL_RANK_CAP, d) for d in shape)]
        return list(self.tcl_ranks)


class TclNetwork(nn.Module):
    """TCL + MLP 二分类网络，forward 返回 logit"""

    def __init__(self, shape: Sequence[int], tcl_ranks: Sequence[Sequence[int]], hidden: int):
        super().__init__()
        self.shape = tuple(int(d) for d in shape)
        self.tcl_ranks = [tuple(int(r) for r in layer) for layer in tcl_ranks]
        self.hidden_width = int(hidden)

        maps = []
        in_dims = self.shape
        for layer in self.tcl_ranks:
            if len(layer) != len(self.shape):
                raise TensorShapeError(f"[ERROR] TCL 秩 {layer} 与张量阶数 {len(self.shape)} 不符")
            for R, D in zip(layer, in_dims):
                if R < 1:
                    raise ValueError(f"[ERROR] TCL 秩必须 ≥ 1, 实际 {layer}")
                maps.append(nn.Parameter(torch.zeros(R, D, dtype=TorchRuntime.DTYPE)))
            in_dims = layer
        self.contractions = nn.ParameterList(maps)
        self.core_dims = tuple(in_dims)
        self.hidden = nn.Linear(int(np.prod(in_dims)), hidden, dtype=TorchRuntime.DTYPE)
        self.output = nn.Linear(hidden, 1, dtype=TorchRuntime.DTYPE)

    @property
    def order(self) -> int:
        return len(self.shape)

    def parameter_count(self) -> int:
        return sum(p.numel() for p in self.parameters())

    def contract(self, X: torch.Tensor) -> torch.Tensor:
        """逐模态收缩，模态 m 对应批次的第 m+1 维"""
        M = self.order
        for i, V in enumerate(self.contractions):
            m = i % M
            X = torch.movedim(torch.tensordot(X, V, dims=([m + 1], [1])), -1, m + 1)
        return X

    def forward(self, X: torch.Tensor) -> torch.Tensor:
        if tuple(X.shape[1:]) != self.shape:
            raise TensorShapeError(f"[ERROR] 输入形状 {tuple(X.shape[1:])} 与网络 {self.shape} 不符")
        core = self.contract(X)
        # vec 采用 mode-1 最快的排列
        perm = (0,) + tuple(range(self.order, 0, -1))
        flat = core.permute(perm).reshape(core.shape[0], -1)
        return self.output(F.relu(self.hidden(flat))).squeeze(-1)

    def initialize(self, rng: RandomSource):
        """权重 i.i.d. U(±√(6/(fan_in+fan_out)))，偏置为 0"""
        with torch.no_grad():
            for p in self.contractions:
                self._glorot(p, rng)
            for layer in (self.hidden, self.output):
                self._glorot(layer.weight, rng)
                layer.bias.zero_()
        return self

    @staticmethod
    def _glorot(p: torch.Tensor, rng: RandomSource):
        fan_out, fan_in = p.shape
        bound = np.sqrt(6.0 / (fan_in + fan_out))
        p.copy_(torch.from_numpy(rng.uniform(-bound, bound, size=tuple(p.shape))))

    def state_arrays(self) -> Dict[str, np.ndarray]:
        return {k: v.detach().cpu().numpy().copy() for k, v in self.state_dict().items()}

    def load_arrays(self, arrays: Dict[str, np.ndarray]):
        self.load_state_dict({k: torch.from_numpy(np.asarray(v, dtype=np.float64)) for k, v in arrays.items()})
        return self


def build_network(shape: Sequence[int], settings: NnSettings, rng: RandomSource) -> TclNetwork:
    TorchRuntime.configure()
    net = TclNetwork(shape, settings.resolve_ranks(shape), settings.hidden)
    return net.initialize(rng)


def _to_torch(X) -> torch.Tensor:
    return torch.from_numpy(np.ascontiguousarray(X, dtype=np.float64))


def tnn_logits(net: TclNetwork, X: np.ndarray, chunk: int = 4096) -> np.ndarray:
    """批量 logit（分块，no_grad）"""
    X = np.asarray(X, dtype=np.float64)
    out = []
    with torch.no_grad():
        for start in range(0, X.shape[0], chunk):
            out.append(net(_to_torch(X[start:start + chunk])).numpy())
    return np.concatenate(out) if out else np.zeros(0)


def tnn_forward(net: TclNetwork, X: np.ndarray):
    """
    h_θ(X) ∈ (0,1)

    参数:
        X: 单个张量 (d_1..d_M) 或批次 (N, d_1..d_M)
    """
    X = np.asarray(X, dtype=np.float64)
    single = X.shape == net.shape
    batch = X[None] if single else X
    if tuple(batch.shape[1:]) != net.shape:
        raise TensorShapeError(f"[ERROR] 输入形状 {X.shape} 与网络 {net.shape} 不符")
    probs = expit(tnn_logits(net, batch))
    return float(probs[0]) if single else probs


def tnn_loss(net: TclNetwork, X: np.ndarray, y: np.ndarray) -> torch.Tensor:
    """平均二元交叉熵（以 logit 形式计算，数值稳定）"""
    logits = net(_to_torch(X))
    return F.binary_cross_entropy_with_logits(logits, _to_torch(y))


def tnn_gradient(net: TclNetwork, X: np.ndarray, y: np.ndarray) -> Dict[str, np.ndarray]:
    """
    平均 BCE 对每个参数的精确梯度

    返回:
        {参数名: 梯度数组}，包括各 TCL 收缩矩阵 V_m
    """
    net.zero_grad()
    tnn_loss(net, X, y).backward()
    grads = {name: p.grad.detach().numpy().copy() for name, p in net.named_parameters()}
    net.zero_grad()
    return grads


def accuracy(net: TclNetwork, X: np.ndarray, y: np.ndarray) -> float:
    """阈值 0.5 下的准确率（h > 0.5 ⇔ logit > 0）"""
    pred = (tnn_logits(net, X) > 0).astype(np.int8)
    return float(np.mean(pred == np.asarray(y)))


@dataclass
class TnnFitResult:
    network: TclNetwork
    best_epoch: int
    val_accuracy: List[float]


def fit_network(train_x: np.ndarray, train_y: np.ndarray, val_x: np.ndarray, val_y: np.ndarray,
                settings: NnSettings, rng: RandomSource) -> TnnFitResult:
    """
    训练 TCL 网络，返回验证准确率最高的 epoch 快照

    参数:
        train_x, train_y: 训练批次与标签
        val_x, val_y: 验证批次与标签（非空）
        settings: 结构与优化器设置
        rng: 随机源（初始化用 split(0)，打乱顺序用 split(1)）
    """
    if len(val_y) == 0:
        raise ValueError("[ERROR] 验证集为空")
    if len(train_y) == 0:
        raise ValueError("[ERROR] 训练集为空")

    net = build_network(train_x.shape[1:], settings, rng.split(0))
    shuffle_rng = rng.split(1)
    optimizer = torch.optim.Adam(net.parameters(), lr=settings.rate,
                                 betas=settings.betas, eps=settings.eps)
    X = _to_torch(train_x)
    y = _to_torch(np.asarray(train_y, dtype=np.float64))
    n = len(train_y)

    best_acc = -1.0
    best_state = None
    best_epoch = 0
    history = []
    for epoch in range(1, settings.epochs + 1):
        net.train()
        order = shuffle_rng.permutation(n)
        for start in range(0, n, settings.batch):
            idx = torch.from_numpy(order[start:start + settings.batch])
            optimizer.zero_grad()
            loss = F.binary_cross_entropy_with_logits(net(X[idx]), y[idx])
            loss.backward()
            optimizer.step()

        net.eval()
        acc = accuracy(net, val_x, val_y)
        history.append(acc)
        if is_enabled("DEBUG"):
            debug(f"[TNN] epoch {epoch}/{settings.epochs}, 验证准确率 {acc:.4f}")
        if acc > best_acc:
            best_acc = acc
            best_state = copy.deepcopy(net.state_dict())
            best_epoch = epoch

    net.load_state_dict(best_state)
    net.eval()
    TorchRuntime.clear()
    return TnnFitResult(network=net, best_epoch=best_epoch, val_accuracy=history)
