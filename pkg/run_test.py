# -*- coding: utf-8 -*-
"""
TensorNP - 冒烟测试脚本
缩小版 ex1（少量重复、小测试集）端到端跑一遍，打印各方法的误差与违约率
"""
import sys
import time
from datetime import datetime

sys.path.insert(0, '.')

from core.calibration import NpLevels
from core.experiments import ExperimentConfig, run_experiment
from core.tensor_nn import NnSettings
from utils.dependency_check import check_dependencies


def main():
    # ============ 配置区域 ============
    n_train_list = [300, 900, 1800]
    reps = 10
    n_test = 2000
    workers = 0          # 0 = 自动（物理核心数）
    with_nn = False      # T-NN 较慢，需要时打开
    # ==================================

    ok, _ = check_dependencies()
    if not ok:
        sys.exit(1)

    methods = ("T-LDA", "T-LDA-NP", "V-LDA", "Oracle")
    if with_nn:
        methods += ("T-NN", "T-NN-NP")

    print("\n" + "★" * 60)
    print("★  TensorNP - 张量 NP 分类冒烟测试")
    print(f"★  开始时间: {datetime.now().strftime('%Y-%m-%d %H:%M:%S')}")
    print(f"★  方法: {', '.join(methods)}")
    print("★" * 60)

    start = time.time()
    for n in n_train_list:
        cfg = ExperimentConfig(
            config_id=f"smoke-n{n}",
            n_train=n,
            n_test=n_test,
            reps=reps,
            levels=NpLevels(0.05, 0.1),
            base_seed=7,
            methods=methods,
            nn=NnSettings(epochs=20),
        )
        result = run_experiment(cfg, workers=workers)
        print(f"\n[{datetime.now().strftime('%H:%M:%S')}] n_train={n}")
        for method, agg in result.aggregates.items():
            print(f"   {method:<9} t1={agg.mean_type1:.4f}  t2={agg.mean_type2:.4f}  "
                  f"acc={agg.mean_acc:.4f}  违约率={agg.violation_rate:.2f}")

    print(f"\n[OK] 完成，用时 {time.time() - start:.1f} 秒")


if __name__ == "__main__":
    main()
