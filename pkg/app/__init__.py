# TensorNP - 应用入口模块
# 包含命令行主程序

__version__ = "1.0.0"
__author__ = "TensorNP Team"
