# utils/dependency_check.py - 启动时依赖检查
"""
TensorNP - 依赖检查模块

功能:
1. 检查 Python 包是否已安装
2. 打印 torch 运行时与内存状态
"""

import sys

REQUIRED_PACKAGES = {
    'numpy': 'NumPy (张量计算)',
    'scipy': 'SciPy (线性代数/特殊函数/二项分布)',
    'torch': 'PyTorch (张量神经网络)',
    'pandas': 'pandas (CSV 汇总)',
    'tqdm': 'tqdm (进度条)',
    'dotenv': 'python-dotenv (配置)',
    'psutil': 'psutil (并行度检测)',
}

OPTIONAL_PACKAGES = {
    'pytest': 'pytest (测试套件-可选)',
}


def check_dependencies():
    """检查所有依赖是否已安装"""
    print("🔍 检查依赖...")

    missing_required = []
    missing_optional = []

    print("\n📦 必需依赖:")
    for pkg, desc in REQUIRED_PACKAGES.items():
        try:
            __import__(pkg)
            print(f"  ✅ {pkg}")
        except ImportError:
            print(f"  ❌ {pkg} - {desc}")
            missing_required.append(pkg)

    print("\n📦 可选依赖:")
    for pkg, desc in OPTIONAL_PACKAGES.items():
        try:
            __import__(pkg)
            print(f"  ✅ {pkg}")
        except ImportError:
            print(f"  ⚠️ {pkg} - {desc} (可选)")
            missing_optional.append(pkg)

    print("\n" + "=" * 50)
    if missing_required:
        print("❌ 缺少必需依赖，请运行 pip install -r requirements.txt")
        print(f"   缺少: {', '.join(missing_required)}")
        return False, missing_required

    print("✅ 所有必需依赖已安装！")
    if missing_optional:
        print(f"⚠️ 可选依赖未安装: {', '.join(missing_optional)}")
    return True, []


def check_runtime():
    """打印 torch 运行时信息"""
    print("\n🧮 运行时:")
    try:
        from utils.torch_runtime import TorchRuntime
        TorchRuntime.configure()
        print(f"  ✅ {TorchRuntime.describe()}")
        print(f"  📍 默认并行 worker 数: {TorchRuntime.default_workers()}")
        return True
    except ImportError as e:
        print(f"  ❌ 运行时不可用: {e}")
        return False


if __name__ == "__main__":
    print("=" * 50)
    print("TensorNP - 依赖检查")
    print("=" * 50)

    success, missing = check_dependencies()
    check_runtime()

    print("\n" + "=" * 50)
    if success:
        print("🎉 所有检查通过！")
    else:
        print("⚠️ 请先安装缺少的依赖")
        sys.exit(1)
