# app/main.py - TensorNP 命令行主程序
"""
TensorNP - 命令行入口

子命令:
    simulate   运行预设或自定义的模拟实验，写出 detail.csv / aggregate.csv
    fit        在 TNPD 数据集上拟合分类器，写出 TNPM 模型
    predict    用模型对数据集打分，写出 index,score,label
    gen        按实验设定生成 TNPD 数据集（附带真实 B 与 oracle 阈值）
    verify     由 detail.csv 重算 aggregate.csv 并比对
    benchmark  对已张量化的数据集做重复分层切分评估
    check      依赖检查

退出码: 0 成功；1 运行失败；2 输入/配置无效；3 校准集过小

使用方法:
    python app/main.py simulate --example ex1 --scale desk --seed 7 -o out/
    python app/main.py fit data.tnpd --method t-lda-np --ranks 4,6,3 -o model.tnpm
"""

import argparse
import dataclasses
import json
import sys
from pathlib import Path
from typing import List, Optional

import pandas as pd

# 添加项目路径（确保能找到 config / core / utils）
PROJECT_ROOT = Path(__file__).parent.parent
sys.path.insert(0, str(PROJECT_ROOT))

import config
from core.calibration import NpLevels
from core.classifiers import (METHODS, fit_tlda, fit_tlda_np, fit_tnn, fit_tnn_np, fit_vlda,
                              split_class0)
from core.dataset_io import (read_dataset, read_model, verify_aggregates, write_dataset, write_model,
                             write_predictions, write_results, write_truth)
from core.errors import CalibrationSetTooSmallError, ConfigError, EmptyClassError, RepetitionError
from core.estimation import LabeledData
from core.experiments import (SCALES, ExperimentConfig, aggregate_frame, benchmark_dataset,
                              example_configs, generate_instance, level_config_id, run_experiment)
from core.numerics import RandomSource
from core.tensor_nn import LINKS, NnSettings
from core.tgmm import oracle_rule
from utils.dependency_check import check_dependencies, check_runtime
from utils.logger import error, log, set_level

EXIT_OK, EXIT_RUNTIME, EXIT_INVALID, EXIT_CALIBRATION = 0, 1, 2, 3

SCALE_SETTINGS = {"full": (500, 60000), "desk": (50, 6000)}

# RunConfigFile 允许的键
EXAMPLE_KEYS = {"example", "scale", "seed", "reps", "n_test", "methods"}
EXPLICIT_KEYS = {"config_id", "shape", "ranks", "working_ranks", "snr", "alpha", "delta", "n_train",
                 "eta", "n_test", "reps", "seed", "methods", "distribution", "df", "fixed_signal",
                 "nn"}
NN_KEYS = {"tcl_ranks", "hidden", "epochs", "batch", "rate", "link", "val_fraction"}


# ============================================================
# 参数解析辅助
# ============================================================

def parse_ints(text: str, key: str) -> tuple:
    """'4,6,3' → (4, 6, 3)"""
    try:
        values = tuple(int(v) for v in text.split(",") if v.strip())
    except ValueError:
        raise ConfigError(key, f"需要逗号分隔的整数, 实际 '{text}'")
    if not values:
        raise ConfigError(key, "不能为空")
    return values


def parse_floats(text: str, key: str) -> List[float]:
    try:
        values = [float(v) for v in text.split(",") if v.strip()]
    except ValueError:
        raise ConfigError(key, f"需要逗号分隔的实数, 实际 '{text}'")
    if not values:
        raise ConfigError(key, "不能为空")
    return values


def parse_tcl_ranks(text: Optional[str]):
    """'8,8,8;4,4,4' → [(8,8,8), (4,4,4)]，多层 TCL 用分号隔开"""
    if text is None:
        return None
    return [parse_ints(layer, "tcl_ranks") for layer in text.split(";") if layer.strip()]


def canonical_method(name: str) -> str:
    table = {m.lower(): m for m in METHODS}
    method = table.get(str(name).strip().lower())
    if method is None:
        raise ConfigError("method", f"未知方法 '{name}'（可选 {', '.join(METHODS)}）")
    return method


def make_levels(alpha: float, delta: float) -> NpLevels:
    try:
        return NpLevels(alpha, delta)
    except ValueError as e:
        raise ConfigError("alpha" if not 0 < alpha < 1 else "delta", str(e)) from e


def nn_settings_from_args(args) -> NnSettings:
    try:
        return NnSettings(
            tcl_ranks=parse_tcl_ranks(args.tcl_ranks),
            hidden=args.hidden,
            epochs=args.epochs,
            batch=args.batch,
            rate=args.rate,
            link=args.link,
        )
    except ValueError as e:
        raise ConfigError("nn", str(e)) from e


def _typed(raw: dict, key: str, kind, default=None):
    if key not in raw:
        return default
    value = raw[key]
    if kind is float and isinstance(value, int) and not isinstance(value, bool):
        value = float(value)
    if not isinstance(value, kind) or isinstance(value, bool) and kind is not bool:
        raise ConfigError(key, f"类型应为 {kind.__name__}, 实际 {type(value).__name__}")
    return value


def _int_list(raw: dict, key: str, default=None):
    value = raw.get(key, default)
    if value is None:
        return None
    if not isinstance(value, list) or not all(isinstance(v, int) and not isinstance(v, bool) for v in value):
        raise ConfigError(key, f"应为整数列表, 实际 {value!r}")
    return tuple(value)


def _nn_from_dict(raw) -> NnSettings:
    if raw is None:
        return NnSettings()
    if not isinstance(raw, dict):
        raise ConfigError("nn", "应为对象")
    unknown = sorted(set(raw) - NN_KEYS)
    if unknown:
        raise ConfigError(f"nn.{unknown[0]}", "未知配置项")
    tcl = raw.get("tcl_ranks")
    if tcl is not None and (not isinstance(tcl, list) or not all(isinstance(layer, list) for layer in tcl)):
        raise ConfigError("nn.tcl_ranks", "应为整数列表的列表")
    kwargs = {k: raw[k] for k in NN_KEYS if k in raw}
    try:
        return NnSettings(**kwargs)
    except (TypeError, ValueError) as e:
        raise ConfigError("nn", str(e)) from e


def configs_from_dict(raw: dict, seed_override: int = None) -> List[ExperimentConfig]:
    """
    解析 RunConfigFile（JSON 对象）

    两种写法: {"example": "ex1", "scale": "desk", ...} 或显式给出 shape/ranks/... ；
    n_train 可以是整数或整数列表（列表展开为多个设定）。
    异常:
        ConfigError: 未知键或取值非法（消息指出键名）
    """
    if not isinstance(raw, dict):
        raise ConfigError("<root>", "配置文件顶层必须是对象")

    if "example" in raw:
        unknown = sorted(set(raw) - EXAMPLE_KEYS)
        if unknown:
            raise ConfigError(unknown[0], "未知配置项（使用 example 时只允许 "
                                          f"{', '.join(sorted(EXAMPLE_KEYS))}）")
        seed = seed_override if seed_override is not None else _typed(raw, "seed", int, 0)
        configs = example_configs(_typed(raw, "example", str), _typed(raw, "scale", str, "desk"), seed)
        overrides = {}
        if "reps" in raw:
            overrides["reps"] = _typed(raw, "reps", int)
        if "n_test" in raw:
            overrides["n_test"] = _typed(raw, "n_test", int)
        if "methods" in raw:
            overrides["methods"] = tuple(canonical_method(m) for m in raw["methods"])
        return [_replace(c, **overrides) for c in configs] if overrides else configs

    unknown = sorted(set(raw) - EXPLICIT_KEYS)
    if unknown:
        raise ConfigError(unknown[0], "未知配置项")
    for key in ("shape", "ranks"):
        if key not in raw:
            raise ConfigError(key, "缺少必需配置项")
    distribution = _typed(raw, "distribution", str, "normal")
    levels = make_levels(_typed(raw, "alpha", float, config.DEFAULT_ALPHA),
                         _typed(raw, "delta", float, config.DEFAULT_DELTA))
    methods = raw.get("methods", ["T-LDA", "T-LDA-NP", "V-LDA", "T-NN", "T-NN-NP"])
    if not isinstance(methods, list):
        raise ConfigError("methods", "应为字符串列表")
    n_train = raw.get("n_train", 1200)
    n_list = n_train if isinstance(n_train, list) else [n_train]
    if not all(isinstance(n, int) and not isinstance(n, bool) for n in n_list) or not n_list:
        raise ConfigError("n_train", f"应为整数或整数列表, 实际 {n_train!r}")

    base_id = _typed(raw, "config_id", str, "custom")
    common = dict(
        shape=_int_list(raw, "shape"),
        true_ranks=_int_list(raw, "ranks"),
        working_ranks=_int_list(raw, "working_ranks"),
        snr=_typed(raw, "snr", float, 7.0),
        distribution=distribution,
        t_df=_typed(raw, "df", int),
        eta=_typed(raw, "eta", float, 1.0),
        n_test=_typed(raw, "n_test", int, 6000),
        reps=_typed(raw, "reps", int, 50),
        levels=levels,
        base_seed=seed_override if seed_override is not None else _typed(raw, "seed", int, 0),
        methods=tuple(canonical_method(m) for m in methods),
        nn=_nn_from_dict(raw.get("nn")),
        fixed_signal=_typed(raw, "fixed_signal", bool, False),
    )
    return [ExperimentConfig(config_id=base_id if len(n_list) == 1 else f"{base_id}-n{n}", n_train=n, **common)
            for n in n_list]


def _replace(cfg: ExperimentConfig, **changes) -> ExperimentConfig:
    return dataclasses.replace(cfg, **changes)


def load_configs(args) -> List[ExperimentConfig]:
    """--example 或 --config 二选一，--scale / --seed / --method 覆盖文件中的设定"""
    if bool(args.example) == bool(args.config):
        raise ConfigError("example", "必须且只能指定 --example 或 --config 其中之一")
    if args.example:
        configs = example_configs(args.example, args.scale or "desk", args.seed or 0)
    else:
        path = Path(args.config)
        if not path.exists():
            raise FileNotFoundError(f"[ERROR] 配置文件不存在: {path}")
        try:
            raw = json.loads(path.read_text(encoding="utf-8"))
        except json.JSONDecodeError as e:
            raise ConfigError("<file>", f"JSON 解析失败: {e}") from e
        configs = configs_from_dict(raw, args.seed)
        if args.scale:
            reps, n_test = SCALE_SETTINGS[args.scale]
            configs = [_replace(c, reps=reps, n_test=n_test) for c in configs]
    if getattr(args, "method", None):
        methods = tuple(canonical_method(m) for m in args.method.split(","))
        configs = [_replace(c, methods=methods) for c in configs]
    return configs


# ============================================================
# 子命令
# ============================================================

def cmd_simulate(args) -> int:
    configs = load_configs(args)
    log(f"[SIM] 共 {len(configs)} 组设定 → {args.output}")
    details, aggregates, alphas = [], [], {}
    for cfg in configs:
        result = run_experiment(cfg, workers=args.workers)
        detail = result.detail_frame()
        details.append(detail)
        aggregates.append(aggregate_frame(detail, cfg.levels.alpha))
        alphas[cfg.config_id] = cfg.levels.alpha
        print(result.summary_line(), flush=True)

    manifest = {
        "alphas": alphas,
        "deltas": {c.config_id: c.levels.delta for c in configs},
        "example": args.example,
        "config": args.config,
        "seed": configs[0].base_seed,
    }
    detail_path, aggregate_path = write_results(
        args.output, pd.concat(details, ignore_index=True), pd.concat(aggregates, ignore_index=True), manifest)
    log(f"[OK] 结果已写出: {detail_path}, {aggregate_path}")
    return EXIT_OK


def fit_classifier(data: LabeledData, method: str, args):
    """按方法拟合；NP 方法在内部做 class 0 的拟合/校准切分"""
    rng = RandomSource(args.seed)
    levels = make_levels(args.alpha, args.delta)
    ranks = parse_ints(args.ranks, "ranks") if args.ranks else None
    if method in ("T-LDA", "T-LDA-NP") and ranks is None:
        raise ConfigError("ranks", f"{method} 需要 --ranks")
    nn = nn_settings_from_args(args)
    n0, n1 = data.counts()
    if n0 == 0 or n1 == 0:
        raise EmptyClassError(f"[ERROR] 训练文件只有一类样本: n_0={n0}, n_1={n1}")

    if method == "T-LDA":
        return fit_tlda(data, ranks)
    if method == "V-LDA":
        return fit_vlda(data, args.ridge)
    if method == "T-NN":
        return fit_tnn(data, None, nn, rng.split(2))
    if method == "Oracle":
        raise ConfigError("method", "Oracle 只能在模拟实验中使用")

    fit0, calib0 = split_class0(data.of_class(0), rng.split(1))
    if method == "T-LDA-NP":
        return fit_tlda_np(fit0, data.of_class(1), calib0, ranks, levels=levels)
    return fit_tnn_np(fit0, data.of_class(1), calib0, None, nn, levels, rng.split(2))


def cmd_fit(args) -> int:
    data = read_dataset(args.train)
    method = canonical_method(args.method)
    classifier = fit_classifier(data, method, args)
    write_model(args.output, classifier)
    log(f"[OK] {method} 模型已保存: {args.output} (阈值 {classifier.threshold:.6g})")
    return EXIT_OK


def cmd_predict(args) -> int:
    model = read_model(args.model)
    data = read_dataset(args.data)
    if data.shape != model.shape:
        raise ConfigError("data", f"数据形状 {data.shape} 与模型 {model.shape} 不符")
    scores = model.score(data.tensors)
    labels = model.decide(scores)
    write_predictions(args.output, scores, labels)
    log(f"[OK] {len(data)} 个样本的预测已写出: {args.output}")
    return EXIT_OK


def cmd_gen(args) -> int:
    configs = load_configs(args)
    if not 0 <= args.index < len(configs):
        raise ConfigError("index", f"超出范围 [0, {len(configs) - 1}]")
    cfg = configs[args.index]
    inst = generate_instance(cfg, RandomSource(cfg.base_seed).split(0))
    write_dataset(args.output, inst.train)
    rule = oracle_rule(inst.params, cfg.levels.alpha)
    truth_path = Path(str(args.output) + ".truth.json")
    write_truth(truth_path, rule.discriminant, rule.threshold, rule.snr, rule.alpha,
                extra={"config_id": cfg.config_id, "n0": cfg.train_sizes[0], "n1": cfg.train_sizes[1],
                       "seed": cfg.base_seed})
    log(f"[OK] 数据集已生成: {args.output} (N={len(inst.train)}), 真值: {truth_path}")
    return EXIT_OK


def cmd_verify(args) -> int:
    problems = verify_aggregates(args.output)
    if problems:
        for p in problems:
            error(p)
        return EXIT_RUNTIME
    log(f"[OK] {args.output} 的汇总与明细一致")
    return EXIT_OK


def cmd_benchmark(args) -> int:
    data = read_dataset(args.data)
    methods = tuple(canonical_method(m) for m in args.method.split(","))
    levels = [make_levels(a, d) for a in parse_floats(args.alpha_list, "alpha")
              for d in parse_floats(args.delta_list, "delta")]
    base_id = Path(args.data).stem
    ranks = parse_ints(args.ranks, "ranks") if args.ranks else None
    if not 0 < args.test_fraction < 1:
        raise ConfigError("test_fraction", f"必须在 (0,1) 内, 实际 {args.test_fraction}")
    detail, aggregate = benchmark_dataset(
        data, methods, levels, args.reps, args.test_fraction, args.seed or 0, ranks=ranks,
        nn=nn_settings_from_args(args), config_id=base_id)
    alphas = {level_config_id(base_id, lv): lv.alpha for lv in levels}
    write_results(args.output, detail, aggregate,
                  {"alphas": alphas, "dataset": str(args.data), "seed": args.seed or 0})
    for row in aggregate.itertuples(index=False):
        print(f"[BENCH] {row.config_id} {row.method}: t1={row.mean_type1:.4f} t2={row.mean_type2:.4f} "
              f"acc={row.mean_acc:.4f} vr={row.violation_rate:.3f}", flush=True)
    return EXIT_OK


def cmd_check(args) -> int:
    ok, _ = check_dependencies()
    check_runtime()
    return EXIT_OK if ok else EXIT_RUNTIME


# ============================================================
# argparse
# ============================================================

def _add_nn_flags(p):
    g = p.add_argument_group("T-NN")
    g.add_argument("--tcl-ranks", default=None, help="每层 TCL 秩，如 8,8,8;4,4,4（默认 min(8,d_m)）")
    g.add_argument("--hidden", type=int, default=config.NN_HIDDEN)
    g.add_argument("--epochs", type=int, default=config.NN_EPOCHS)
    g.add_argument("--batch", type=int, default=config.NN_BATCH)
    g.add_argument("--rate", type=float, default=config.NN_LR)
    g.add_argument("--link", choices=LINKS, default="identity")


def _add_run_source(p):
    p.add_argument("--example", default=None, help="预设实验: ex1 / ex1-imbalanced / ex2 / ex3 / exS1")
    p.add_argument("--config", default=None, help="JSON 实验设定文件")
    p.add_argument("--scale", choices=SCALES, default=None)
    p.add_argument("--seed", type=int, default=None)
    p.add_argument("--method", default=None, help="覆盖方法列表，逗号分隔")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="tensornp", description="张量 Neyman-Pearson 分类")
    parser.add_argument("-q", "--quiet", action="store_true", help="只输出警告和错误")
    parser.add_argument("-v", "--verbose", action="store_true", help="输出调试信息")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("simulate", help="运行模拟实验")
    _add_run_source(p)
    p.add_argument("--workers", type=int, default=None, help="并行进程数（0=自动）")
    p.add_argument("-o", "--output", required=True, help="输出目录")
    p.set_defaults(handler=cmd_simulate)

    p = sub.add_parser("fit", help="拟合分类器")
    p.add_argument("train", help="TNPD 训练集")
    p.add_argument("--method", required=True, help="t-lda / t-lda-np / v-lda / t-nn / t-nn-np")
    p.add_argument("--alpha", type=float, default=config.DEFAULT_ALPHA)
    p.add_argument("--delta", type=float, default=config.DEFAULT_DELTA)
    p.add_argument("--ranks", default=None, help="Tucker 秩，如 4,6,3")
    p.add_argument("--ridge", type=float, default=config.VLDA_RIDGE_SCALE, help="V-LDA 岭系数")
    p.add_argument("--seed", type=int, default=0)
    _add_nn_flags(p)
    p.add_argument("-o", "--output", required=True, help="TNPM 模型输出路径")
    p.set_defaults(handler=cmd_fit)

    p = sub.add_parser("predict", help="批量预测")
    p.add_argument("model")
    p.add_argument("data")
    p.add_argument("-o", "--output", required=True, help="CSV 输出路径")
    p.set_defaults(handler=cmd_predict)

    p = sub.add_parser("gen", help="生成 TNPD 数据集")
    _add_run_source(p)
    p.add_argument("--index", type=int, default=0, help="使用第几组设定")
    p.add_argument("-o", "--output", required=True, help="TNPD 输出路径")
    p.set_defaults(handler=cmd_gen)

    p = sub.add_parser("verify", help="校验汇总 CSV")
    p.add_argument("-o", "--output", required=True, help="simulate 的输出目录")
    p.set_defaults(handler=cmd_verify)

    p = sub.add_parser("benchmark", help="真实数据集重复切分评估")
    p.add_argument("data")
    p.add_argument("--method", default="T-LDA,T-LDA-NP,V-LDA,T-NN,T-NN-NP")
    p.add_argument("--alpha", dest="alpha_list", default=str(config.DEFAULT_ALPHA), help="可逗号分隔多个")
    p.add_argument("--delta", dest="delta_list", default=str(config.DEFAULT_DELTA), help="可逗号分隔多个")
    p.add_argument("--ranks", default=None)
    p.add_argument("--reps", type=int, default=50)
    p.add_argument("--test-fraction", type=float, default=0.3)
    p.add_argument("--seed", type=int, default=0)
    _add_nn_flags(p)
    p.add_argument("-o", "--output", required=True, help="输出目录")
    p.set_defaults(handler=cmd_benchmark)

    p = sub.add_parser("check", help="依赖检查")
    p.set_defaults(handler=cmd_check)
    return parser


def _message(e: Exception) -> str:
    return str(e).removeprefix("[ERROR] ")


def main(argv: List[str] = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    if args.quiet:
        set_level("WARNING")
    elif args.verbose:
        set_level("DEBUG")

    try:
        return args.handler(args)
    except CalibrationSetTooSmallError as e:
        error(f"{_message(e)} (最少需要 {e.required})")
        return EXIT_CALIBRATION
    except RepetitionError as e:
        if isinstance(e.cause, CalibrationSetTooSmallError):
            error(f"{_message(e)} (最少需要 {e.cause.required})")
            return EXIT_CALIBRATION
        error(_message(e))
        return EXIT_RUNTIME
    except (ValueError, FileNotFoundError) as e:
        error(_message(e))
        return EXIT_INVALID
    except Exception as e:
        error(f"{type(e).__name__}: {e}")
        return EXIT_RUNTIME


if __name__ == "__main__":
    sys.exit(main())
