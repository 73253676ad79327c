# core/experiments.py - 蒙特卡洛模拟实验
"""
TensorNP - 模拟实验模块

功能：
1. ExperimentConfig: 一组模拟设定（形状、秩、SNR、分布、样本量、η、重复次数、方法）
2. generate_instance: 每次重复重新生成 B、训练集、校准集、测试集
3. evaluate: 经验第一类/第二类错误与准确率
4. run_experiment: 多进程重复实验，结果按重复序号排序后汇总
5. example_configs: ex1 / ex1-imbalanced / ex2 / ex3 / exS1 的全量与桌面规模设定
6. benchmark_dataset: 对预先张量化的数据集做重复分层切分评估

随机流约定：第 k 次重复使用 RandomSource(base_seed).split(k)，
与 worker 数无关，保证结果逐位可复现。

依赖: numpy, pandas, tqdm
"""

import math
from concurrent.futures import ProcessPoolExecutor, as_completed
from dataclasses import dataclass, field
from typing import Dict, Iterator, List, Optional, Sequence, Tuple, Union

import numpy as np
import pandas as pd
from tqdm import tqdm

import config
from core.calibration import NpLevels, violation_rate
from core.classifiers import (METHODS, NpClassifier, fit_pair_tlda, fit_pair_tnn, fit_tlda,
                              fit_tlda_np, fit_tnn, fit_tnn_np, fit_vlda, oracle_classifier,
                              split_class0)
from core.errors import ConfigError, EmptyClassError, RepetitionError
from core.estimation import LabeledData, stratified_split, validate_ranks
from core.numerics import RandomSource
from core.tensor_nn import NnSettings
from core.tgmm import TgmmParams, oracle_rule, random_tucker_signal, sample_class, sample_class_t
from utils.logger import log
from utils.torch_runtime import TorchRuntime

EXAMPLES = ("ex1", "ex1-imbalanced", "ex2", "ex3", "exS1")
SCALES = ("full", "desk")
DISTRIBUTIONS = ("normal", "t")

DETAIL_COLUMNS = ["config_id", "method", "rep", "seed", "type1", "type2", "accuracy"]
AGGREGATE_COLUMNS = ["config_id", "method", "mean_type1", "sd_type1", "mean_type2", "sd_type2",
                     "mean_acc", "sd_acc", "violation_rate"]

# 固定信号 (fixed_signal=True) 使用的独立随机流编号
FIXED_SIGNAL_STREAM = 2 ** 31

# 每次重复内部的子流编号
STREAM_SIGNAL, STREAM_TRAIN, STREAM_TEST, STREAM_SPLIT, STREAM_NN = range(5)


def class_sizes(total: int, eta: float) -> Tuple[int, int]:
    """按 η = n_1/n_0 分配: n_1 = floor(total·η/(1+η))，n_0 取余数"""
    n1 = int(math.floor(total * eta / (1.0 + eta)))
    return total - n1, n1


@dataclass
class ExperimentConfig:
    """一组模拟设定（一次 run_experiment 的全部输入）"""
    config_id: str
    shape: Tuple[int, ...] = (15, 15, 15)
    true_ranks: Tuple[int, ...] = (4, 6, 3)
    working_ranks: Optional[Tuple[int, ...]] = None   # None → 与 true_ranks 相同
    snr: float = 7.0
    distribution: str = "normal"
    t_df: Optional[int] = None
    n_train: int = 1200
    eta: float = 1.0
    n_test: int = 6000
    reps: int = 50
    levels: NpLevels = field(default_factory=lambda: NpLevels(config.DEFAULT_ALPHA, config.DEFAULT_DELTA))
    base_seed: int = 0
    methods: Tuple[str, ...] = ("T-LDA", "T-LDA-NP", "V-LDA", "T-NN", "T-NN-NP")
    nn: NnSettings = field(default_factory=NnSettings)
    fixed_signal: bool = False
    dtip_epsilon: float = field(default_factory=lambda: config.DTIP_EPSILON)
    dtip_max_iter: int = field(default_factory=lambda: config.DTIP_MAX_ITER)

    def __post_init__(self):
        self.shape = tuple(int(d) for d in self.shape)
        self.true_ranks = tuple(int(r) for r in self.true_ranks)
        self.working_ranks = self.true_ranks if self.working_ranks is None \
            else tuple(int(r) for r in self.working_ranks)
        self.methods = tuple(self.methods)
        self.validate()

    def validate(self):
        """校验失败抛出 ConfigError（指出键名）"""
        if not self.shape or any(d < 1 for d in self.shape):
            raise ConfigError("shape", f"维度必须为正整数, 实际 {self.shape}")
        for key, ranks in (("true_ranks", self.true_ranks), ("working_ranks", self.working_ranks)):
            try:
                validate_ranks(self.shape, ranks)
            except ValueError as e:
                raise ConfigError(key, str(e)) from e
        if self.snr <= 0:
            raise ConfigError("snr", f"必须 > 0, 实际 {self.snr}")
        if self.distribution not in DISTRIBUTIONS:
            raise ConfigError("distribution", f"只支持 {DISTRIBUTIONS}, 实际 {self.distribution}")
        if self.distribution == "t" and (self.t_df is None or int(self.t_df) != self.t_df or self.t_df < 1):
            raise ConfigError("distribution", f"t 分布需要正整数自由度, 实际 {self.t_df}")
        if self.eta <= 0:
            raise ConfigError("eta", f"必须 > 0, 实际 {self.eta}")
        if self.reps < 1:
            raise ConfigError("reps", f"必须 ≥ 1, 实际 {self.reps}")
        unknown = [m for m in self.methods if m not in METHODS]
        if unknown or not self.methods:
            raise ConfigError("methods", f"未知方法 {unknown}（可选 {METHODS}）")
        n0, n1 = class_sizes(self.n_train, self.eta)
        if n0 < 2 or n1 < 1:
            raise ConfigError("n_train", f"两类训练样本数不足: n_0={n0}, n_1={n1}")
        t0, t1 = class_sizes(self.n_test, self.eta)
        if t0 < 1 or t1 < 1:
            raise ConfigError("n_test", f"测试集必须包含两类: n_0={t0}, n_1={t1}")

    @property
    def train_sizes(self) -> Tuple[int, int]:
        return class_sizes(self.n_train, self.eta)

    @property
    def test_sizes(self) -> Tuple[int, int]:
        return class_sizes(self.n_test, self.eta)

    @property
    def calib_size(self) -> int:
        return int(math.floor(self.train_sizes[0] * config.CALIB_FRACTION))


class SyntheticTestSet:
    """
    按需分块生成的测试集

    60000 个 (15,15,15) 样本一次性生成约 1.6GB，因此只保存参数与随机流，
    每次遍历重新生成同样的数据。
    """

    def __init__(self, params: TgmmParams, n0: int, n1: int, rng: RandomSource,
                 distribution: str = "normal", t_df: int = None, chunk: int = None):
        self.params = params
        self.n0 = int(n0)
        self.n1 = int(n1)
        self.rng = rng
        self.distribution = distribution
        self.t_df = t_df
        self.chunk = chunk or config.TEST_CHUNK_SIZE

    def __len__(self):
        return self.n0 + self.n1

    def counts(self) -> Tuple[int, int]:
        return self.n0, self.n1

    def batches(self) -> Iterator[Tuple[np.ndarray, int]]:
        """依次产出 (批次, 标签)"""
        for label, n in ((0, self.n0), (1, self.n1)):
            stream = self.rng.split(label)
            for i, start in enumerate(range(0, n, self.chunk)):
                size = min(self.chunk, n - start)
                yield draw_class(self.params, label, size, stream.split(i),
                                 self.distribution, self.t_df), label


def draw_class(params: TgmmParams, label: int, n: int, rng: RandomSource,
               distribution: str = "normal", t_df: int = None) -> np.ndarray:
    if distribution == "t":
        return sample_class_t(params, t_df, label, n, rng)
    return sample_class(params, label, n, rng)


@dataclass
class SimulationInstance:
    params: TgmmParams
    fit0: np.ndarray        # S_0'
    calib0: np.ndarray      # S_0''
    train1: np.ndarray      # S_1
    test: SyntheticTestSet

    @property
    def train(self) -> LabeledData:
        return LabeledData.from_classes(np.concatenate([self.fit0, self.calib0]), self.train1)


def experiment_signal(cfg: ExperimentConfig, rep_rng: RandomSource) -> np.ndarray:
    """本次重复使用的 B（fixed_signal 时所有重复共享）"""
    if cfg.fixed_signal:
        rng = RandomSource(cfg.base_seed).split(FIXED_SIGNAL_STREAM)
    else:
        rng = rep_rng.split(STREAM_SIGNAL)
    return random_tucker_signal(cfg.shape, cfg.true_ranks, cfg.snr, rng)


def generate_instance(cfg: ExperimentConfig, rng: RandomSource) -> SimulationInstance:
    """
    生成一次重复的全部数据

    ℳ_0 = 0，Σ_m = I，ℳ_1 = B；class 0 训练数据按 CALIB_FRACTION 切成拟合/校准两部分
    （校准部分向下取整）。

    参数:
        cfg: 实验设定
        rng: 本次重复的随机流
    """
    params = TgmmParams.identity_model(experiment_signal(cfg, rng), prior1=cfg.eta / (1.0 + cfg.eta))
    n0, n1 = cfg.train_sizes
    data_rng = rng.split(STREAM_TRAIN)
    x0 = draw_class(params, 0, n0, data_rng.split(0), cfg.distribution, cfg.t_df)
    x1 = draw_class(params, 1, n1, data_rng.split(1), cfg.distribution, cfg.t_df)
    fit0, calib0 = split_class0(x0, rng.split(STREAM_SPLIT))

    t0, t1 = cfg.test_sizes
    test = SyntheticTestSet(params, t0, t1, rng.split(STREAM_TEST), cfg.distribution, cfg.t_df)
    return SimulationInstance(params=params, fit0=fit0, calib0=calib0, train1=x1, test=test)


TestData = Union[SyntheticTestSet, LabeledData]


def _iter_test(test: TestData) -> Iterator[Tuple[np.ndarray, int]]:
    if isinstance(test, LabeledData):
        for label in (0, 1):
            yield test.of_class(label), label
    else:
        yield from test.batches()


def evaluate(classifier: NpClassifier, test: TestData) -> Tuple[float, float, float]:
    """
    经验 (第一类错误, 第二类错误, 准确率)

    异常:
        EmptyClassError: 测试集缺少某一类
    """
    n = [0, 0]
    wrong = [0, 0]
    for batch, label in _iter_test(test):
        if len(batch) == 0:
            continue
        pred = classifier.predict(batch)
        n[label] += len(batch)
        wrong[label] += int(np.sum(pred != label))
    if n[0] == 0 or n[1] == 0:
        raise EmptyClassError(f"[ERROR] 测试集缺少某一类: n_0={n[0]}, n_1={n[1]}")

    type1 = wrong[0] / n[0]
    type2 = wrong[1] / n[1]
    accuracy = 1.0 - (n[0] * type1 + n[1] * type2) / (n[0] + n[1])
    direct = (n[0] + n[1] - wrong[0] - wrong[1]) / (n[0] + n[1])
    assert abs(accuracy - direct) <= 1e-12, f"准确率恒等式不成立: {accuracy} vs {direct}"
    return type1, type2, accuracy


@dataclass
class RepetitionResult:
    rep: int
    seed: int
    metrics: Dict[str, Tuple[float, float, float]]   # method → (type1, type2, accuracy)


@dataclass
class AggregateMetrics:
    method: str
    mean_type1: float
    sd_type1: float
    mean_type2: float
    sd_type2: float
    mean_acc: float
    sd_acc: float
    violation_rate: float


@dataclass
class ExperimentResult:
    config: ExperimentConfig
    repetitions: List[RepetitionResult]
    aggregates: Dict[str, AggregateMetrics]

    def detail_frame(self) -> pd.DataFrame:
        return detail_frame(self.config.config_id, self.repetitions, self.config.methods)

    def summary_line(self) -> str:
        parts = [f"{m}: t1={a.mean_type1:.4f} t2={a.mean_type2:.4f} acc={a.mean_acc:.4f} vr={a.violation_rate:.3f}"
                 for m, a in self.aggregates.items()]
        return f"[SIM] {self.config.config_id} ({self.config.reps} reps) | " + " | ".join(parts)


def fit_methods(methods: Sequence[str], fit0: np.ndarray, calib0: np.ndarray, train1: np.ndarray,
                ranks, levels: NpLevels, nn: NnSettings, rng: RandomSource,
                epsilon: float = None, max_iter: int = None) -> Dict[str, NpClassifier]:
    """
    按方法列表拟合分类器（不含 Oracle）

    同族的非 NP / NP 版本共用一次切分，单独请求时只拟合所需的那一个。
    """
    fitted = {}
    train = LabeledData.from_classes(np.concatenate([fit0, calib0]), train1)
    if "T-LDA" in methods and "T-LDA-NP" in methods:
        fitted["T-LDA"], fitted["T-LDA-NP"] = fit_pair_tlda(fit0, calib0, train1, ranks, levels,
                                                            epsilon, max_iter)
    elif "T-LDA" in methods:
        fitted["T-LDA"] = fit_tlda(train, ranks, epsilon, max_iter)
    elif "T-LDA-NP" in methods:
        fitted["T-LDA-NP"] = fit_tlda_np(fit0, train1, calib0, ranks, epsilon, max_iter, levels)

    if "V-LDA" in methods:
        fitted["V-LDA"] = fit_vlda(train)

    if "T-NN" in methods and "T-NN-NP" in methods:
        fitted["T-NN"], fitted["T-NN-NP"] = fit_pair_tnn(fit0, calib0, train1, nn, levels, rng)
    elif "T-NN" in methods:
        fitted["T-NN"] = fit_tnn(train, None, nn, rng)
    elif "T-NN-NP" in methods:
        fitted["T-NN-NP"] = fit_tnn_np(fit0, train1, calib0, None, nn, levels, rng)
    return fitted


def run_repetition(cfg: ExperimentConfig, rep: int) -> RepetitionResult:
    """
    第 rep 次重复（worker 入口）

    异常:
        RepetitionError: 包装任何失败并带上重复序号
    """
    try:
        TorchRuntime.configure()
        rng = RandomSource(cfg.base_seed).split(rep)
        inst = generate_instance(cfg, rng)
        classifiers = fit_methods(cfg.methods, inst.fit0, inst.calib0, inst.train1,
                                  cfg.working_ranks, cfg.levels, cfg.nn, rng.split(STREAM_NN),
                                  cfg.dtip_epsilon, cfg.dtip_max_iter)
        if "Oracle" in cfg.methods:
            classifiers["Oracle"] = oracle_classifier(oracle_rule(inst.params, cfg.levels.alpha))
        metrics = {m: evaluate(classifiers[m], inst.test) for m in cfg.methods}
        return RepetitionResult(rep=rep, seed=rng.stream_seed, metrics=metrics)
    except RepetitionError:
        raise
    except Exception as e:
        raise RepetitionError(rep, e) from e


def detail_frame(config_id: str, repetitions: Sequence[RepetitionResult],
                 methods: Sequence[str]) -> pd.DataFrame:
    """明细表: 每个 (config, method, rep) 一行，先按方法再按重复序号排序"""
    rows = []
    for method in methods:
        for r in sorted(repetitions, key=lambda r: r.rep):
            t1, t2, acc = r.metrics[method]
            rows.append((config_id, method, r.rep, r.seed, t1, t2, acc))
    return pd.DataFrame(rows, columns=DETAIL_COLUMNS)


def aggregate_frame(detail: pd.DataFrame, alpha: Union[float, Dict[str, float]]) -> pd.DataFrame:
    """
    由明细表重算汇总表

    参数:
        detail: DETAIL_COLUMNS 格式的明细表
        alpha: 违约率使用的 α（或 config_id → α 的映射）

    标准差使用样本标准差 (ddof=1)，只有一次重复时记为 0。
    """
    rows = []
    for (config_id, method), g in detail.groupby(["config_id", "method"], sort=False):
        a = alpha[config_id] if isinstance(alpha, dict) else alpha

        def sd(col):
            return float(g[col].std(ddof=1)) if len(g) > 1 else 0.0

        rows.append((config_id, method,
                     float(g["type1"].mean()), sd("type1"),
                     float(g["type2"].mean()), sd("type2"),
                     float(g["accuracy"].mean()), sd("accuracy"),
                     violation_rate(g["type1"].to_numpy(), a)))
    return pd.DataFrame(rows, columns=AGGREGATE_COLUMNS)


def _aggregates(cfg: ExperimentConfig, repetitions: List[RepetitionResult]) -> Dict[str, AggregateMetrics]:
    frame = aggregate_frame(detail_frame(cfg.config_id, repetitions, cfg.methods), cfg.levels.alpha)
    return {row.method: AggregateMetrics(*[getattr(row, c) for c in AGGREGATE_COLUMNS[1:]])
            for row in frame.itertuples(index=False)}


def _resolve_workers(workers: Optional[int]) -> int:
    workers = config.DEFAULT_WORKERS if workers is None else int(workers)
    if workers < 0:
        raise ValueError(f"[ERROR] worker 数必须 ≥ 0, 实际 {workers}")
    return workers or TorchRuntime.default_workers()


def run_experiment(cfg: ExperimentConfig, workers: int = None,
                   progress: bool = None) -> ExperimentResult:
    """
    运行 cfg.reps 次重复并汇总

    参数:
        cfg: 实验设定
        workers: 并行进程数（0/None = 自动；1 = 当前进程串行）
        progress: 是否显示 tqdm 进度条（默认 config.SHOW_PROGRESS）

    返回:
        ExperimentResult，重复结果按序号排列，与 worker 数无关
    异常:
        RepetitionError: 任一重复失败即中止（fail-fast）
    """
    workers = min(_resolve_workers(workers), cfg.reps)
    progress = config.SHOW_PROGRESS if progress is None else progress
    log(f"[SIM] {cfg.config_id}: shape={cfg.shape}, n_train={cfg.n_train}, η={cfg.eta}, "
        f"reps={cfg.reps}, workers={workers}, methods={','.join(cfg.methods)}", level="DEBUG")

    bar = tqdm(total=cfg.reps, desc=cfg.config_id, disable=not progress, leave=False)
    results: Dict[int, RepetitionResult] = {}
    try:
        if workers == 1:
            for rep in range(cfg.reps):
                results[rep] = run_repetition(cfg, rep)
                bar.update()
        else:
            with ProcessPoolExecutor(max_workers=workers, initializer=TorchRuntime.configure) as pool:
                futures = {pool.submit(run_repetition, cfg, rep): rep for rep in range(cfg.reps)}
                try:
                    for future in as_completed(futures):
                        results[futures[future]] = future.result()
                        bar.update()
                except BaseException:
                    for f in futures:
                        f.cancel()
                    raise
    finally:
        bar.close()

    repetitions = [results[k] for k in range(cfg.reps)]
    return ExperimentResult(config=cfg, repetitions=repetitions, aggregates=_aggregates(cfg, repetitions))


# ============================================================
# 预设实验
# ============================================================

def example_configs(name: str, scale: str = "desk", base_seed: int = 0) -> List[ExperimentConfig]:
    """
    预设实验设定

    full: 500 次重复，测试集 60000；desk: 50 次重复，测试集 6000；其余设定相同
    （shape (15,15,15)，秩 (4,6,3)，SNR 7，α=0.05，δ=0.1）。
    ex2 / ex3 / exS1 未改变的训练样本量取 1200。
    """
    if scale not in SCALES:
        raise ConfigError("scale", f"只支持 {SCALES}, 实际 {scale}")
    reps, n_test = (500, 60000) if scale == "full" else (50, 6000)
    common = dict(reps=reps, n_test=n_test, base_seed=base_seed,
                  levels=NpLevels(0.05, 0.1), snr=7.0, true_ranks=(4, 6, 3))

    if name in ("ex1", "ex1-imbalanced"):
        eta = 1.0 if name == "ex1" else 2.0
        return [ExperimentConfig(config_id=f"{name}-n{n}", shape=(15, 15, 15), n_train=n, eta=eta, **common)
                for n in (300, 600, 900, 1200, 1500, 1800)]
    if name == "ex2":
        # 维度扫描也保留 V-LDA 作为非 NP 对照，可在设定文件里用 methods 去掉
        return [ExperimentConfig(config_id=f"ex2-d{d}", shape=(d, d, d), n_train=1200, **common)
                for d in (13, 14, 15, 16, 17, 18)]
    if name == "ex3":
        deltas = [(0, 0, 0), (2, 0, 0), (-2, 0, 0), (0, 2, 0), (0, -2, 0), (0, 0, 2), (0, 0, -2)]
        configs = []
        for delta in deltas:
            ranks = tuple(r + e for r, e in zip((4, 6, 3), delta))
            configs.append(ExperimentConfig(
                config_id="ex3-r" + "-".join(str(r) for r in ranks), shape=(15, 15, 15),
                working_ranks=ranks, n_train=1200, methods=("T-LDA", "T-LDA-NP"), **common))
        return configs
    if name == "exS1":
        return [ExperimentConfig(config_id=f"exS1-f{f}", shape=(15, 15, 15), distribution="t", t_df=f,
                                 n_train=1200, **common)
                for f in (2, 3, 4, 5, 10)]
    raise ConfigError("example", f"unknown example '{name}'（可选 {EXAMPLES}）")


# ============================================================
# 实数据评估协议
# ============================================================

def level_config_id(base: str, levels: NpLevels) -> str:
    return f"{base}-a{levels.alpha:g}-d{levels.delta:g}"


def benchmark_dataset(data: LabeledData, methods: Sequence[str], levels: Sequence[NpLevels],
                      reps: int, test_fraction: float, seed: int, ranks=None,
                      nn: NnSettings = None, config_id: str = "benchmark",
                      progress: bool = None) -> Tuple[pd.DataFrame, pd.DataFrame]:
    """
    对预先张量化的数据集做重复随机分层切分评估

    每次重复: 分层抽 test_fraction 作测试集，余下 class 0 再切拟合/校准两半；
    每组 (α, δ) 对应一个 config_id 后缀。

    返回:
        (明细表, 汇总表)
    """
    if "Oracle" in methods:
        raise ConfigError("methods", "真实数据没有 oracle 规则")
    if reps < 1:
        raise ConfigError("reps", f"必须 ≥ 1, 实际 {reps}")
    if not levels:
        raise ConfigError("alpha", "至少需要一组 (α, δ)")
    nn = nn or NnSettings()
    ranks = tuple(ranks) if ranks is not None else tuple(min(config.TCL_RANK_CAP, d) for d in data.shape)
    validate_ranks(data.shape, ranks)
    progress = config.SHOW_PROGRESS if progress is None else progress
    base = RandomSource(seed)

    frames = []
    alphas = {}
    for lv in levels:
        cid = level_config_id(config_id, lv)
        alphas[cid] = lv.alpha
        reps_out = []
        for rep in tqdm(range(reps), desc=cid, disable=not progress, leave=False):
            rng = base.split(rep)
            try:
                train, test = stratified_split(data, test_fraction, rng.split(0))
                fit0, calib0 = split_class0(train.of_class(0), rng.split(1))
                classifiers = fit_methods(methods, fit0, calib0, train.of_class(1), ranks, lv, nn, rng.split(2))
                metrics = {m: evaluate(classifiers[m], test) for m in methods}
            except Exception as e:
                raise RepetitionError(rep, e) from e
            reps_out.append(RepetitionResult(rep=rep, seed=rng.stream_seed, metrics=metrics))
        frames.append(detail_frame(cid, reps_out, methods))

    detail = pd.concat(frames, ignore_index=True)
    return detail, aggregate_frame(detail, alphas)
