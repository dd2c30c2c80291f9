#!/usr/bin/env python3
"""
LevyParametrix - Lévy 驱动 SDE 转移密度的参数展开数值引擎
主程序入口
"""
import os
import sys
import argparse
import logging
from datetime import datetime

# 添加项目根目录到Python路径
sys.path.append(os.path.dirname(__file__))

from config.config import Config
from src.exceptions import LevyParametrixError
from src.reporting.experiment_config import load_experiment
from src.reporting.experiment_manager import COMMANDS, ExperimentManager, RunManifest


def setup_logging(quiet: bool = False) -> None:
    """设置日志: 按日期的文件日志 + 标准输出"""
    os.makedirs(Config.LOG_DIR, exist_ok=True)
    log_file = os.path.join(Config.LOG_DIR, f"levyparametrix_{datetime.now().strftime('%Y%m%d')}.log")

    stream = logging.StreamHandler(sys.stdout)
    stream.setLevel(logging.WARNING if quiet else logging.INFO)
    logging.basicConfig(
        level=logging.INFO,
        format='%(asctime)s - %(name)s - %(levelname)s - %(message)s',
        handlers=[
            logging.FileHandler(log_file, encoding='utf-8'),
            stream
        ]
    )


def print_manifest(manifest: RunManifest) -> None:
    """打印运行摘要"""
    print(f"=== {manifest.command} 完成 ===")
    print(f"配置哈希: {manifest.config_hash}")
    for name, passed in manifest.checks.items():
        print(f"  {'通过' if passed else '未通过'}: {name}")
    if manifest.artifacts:
        print("产物:")
        for artifact in sorted(manifest.artifacts):
            print(f"  {artifact}")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(description='LevyParametrix - Lévy 驱动 SDE 的参数展开转移密度')
    subparsers = parser.add_subparsers(dest='command', help='可用命令')
    helps = {
        'validate': '检查模型假设',
        'density': '计算参数展开密度',
        'stability': '沿扰动族计算稳定性比值',
        'oracle': '蒙特卡洛对照',
        'bounds': '批量检查上界与不变量',
    }
    for command in COMMANDS:
        sub = subparsers.add_parser(command, help=helps[command])
        sub.add_argument('--config', default=Config.DEFAULT_EXPERIMENT, help='实验配置文件 (JSON)')
        sub.add_argument('--out', help='输出目录')
        sub.add_argument('--seed', type=int, help='覆盖配置中的随机种子')
        sub.add_argument('--quiet', action='store_true', help='只输出警告与错误')
    return parser


def main(argv=None) -> int:
    """主函数, 返回退出码"""
    parser = build_parser()
    args = parser.parse_args(argv)

    if not args.command:
        parser.print_help()
        return 0

    # 设置日志
    setup_logging(args.quiet)

    try:
        experiment = load_experiment(args.config, seed=args.seed, output_dir=args.out)
        manager = ExperimentManager(experiment, progress=not args.quiet)
        manifest = manager.execute(args.command)
    except LevyParametrixError as e:
        print(f"执行命令时出错: {e}", file=sys.stderr)
        return e.exit_code
    except KeyboardInterrupt:
        print("\n操作被用户中断", file=sys.stderr)
        return 130
    except Exception as e:
        print(f"执行命令时出错: {e}", file=sys.stderr)
        logging.exception("命令执行异常")
        return 1

    if not args.quiet:
        print_manifest(manifest)
    return 0


if __name__ == '__main__':
    sys.exit(main())
