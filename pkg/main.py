"""
BSVIE Solver - 倒向随机 Volterra 积分方程求解器

主程序入口
    python main.py solve --config run.conf [--out DIR] [--seed N] ...
    python main.py verify --case linear-bsde [--estimator exact] ...
    python main.py list
"""

import argparse
import logging
import sys
from pathlib import Path
from typing import Dict, List, Optional

# 添加src目录到Python路径
sys.path.insert(0, str(Path(__file__).parent / 'src'))

from cli.commands import cmd_list, cmd_solve, cmd_verify
from utils.config import Config
from utils.error_handler import BSVIEError, exit_code_for
from utils.logger import setup_logger
from utils.worker_pool import shutdown_global_pool


def _add_run_options(parser: argparse.ArgumentParser):
    """solve 与 verify 共用的覆盖项"""
    parser.add_argument('--config', help='配置文件（.yaml/.json 或扁平 key = value 格式）')
    parser.add_argument('--out', help='输出目录')
    parser.add_argument('--seed', type=int, help='随机种子')
    parser.add_argument('--paths', type=int, help='路径数 M')
    parser.add_argument('--grid', type=int, help='时间步数 N')
    parser.add_argument('--p', type=float, help='指数 p')
    parser.add_argument('--tol', type=float, help='Picard 停止阈值')
    parser.add_argument('--max-iter', type=int, dest='max_iter', help='每个子区间的最多迭代次数')
    parser.add_argument('--estimator', help='条件期望估计器: exact | regress:<次数>')
    parser.add_argument('--workers', type=int, help='并行线程数（不影响结果）')


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog='bsvie', description='倒向随机 Volterra 积分方程的数值求解')
    sub = parser.add_subparsers(dest='command', required=True)

    solve = sub.add_parser('solve', help='求解并写出曲面与报告')
    _add_run_options(solve)

    verify = sub.add_parser('verify', help='与参考解比较')
    verify.add_argument('--case', required=True, help='用例名（见 list）')
    _add_run_options(verify)

    sub.add_parser('list', help='列出参考用例')
    return parser


def overrides_from_args(args: argparse.Namespace) -> Dict[str, object]:
    """命令行参数 -> 点分键覆盖项（未给出的参数不覆盖）"""
    mapping = {
        'out': 'output.folder',
        'seed': 'ensemble.seed',
        'paths': 'ensemble.paths',
        'grid': 'ensemble.grid',
        'p': 'problem.p',
        'tol': 'solver.tol',
        'max_iter': 'solver.max_iter',
        'estimator': 'solver.estimator',
        'workers': 'runtime.workers',
    }
    return {key: getattr(args, name) for name, key in mapping.items() if getattr(args, name, None) is not None}


def main(argv: Optional[List[str]] = None) -> int:
    """主函数，返回退出码"""
    args = build_parser().parse_args(argv)

    if args.command == 'list':
        return cmd_list()

    try:
        config = Config(args.config).load()
    except BSVIEError as e:
        print(f"错误: {e.get_short_message()}", file=sys.stderr)
        return exit_code_for(e)

    level = getattr(logging, str(config.get('logging.level', 'INFO')).upper(), logging.INFO)
    logger = setup_logger(
        log_dir=config.get('logging.folder', 'logs'),
        log_level=level,
        console_level=level,
        to_file=bool(config.get('logging.to_file', False)),
    )
    logger.info(f"BSVIE Solver: {args.command}")

    overrides = overrides_from_args(args)
    try:
        if args.command == 'solve':
            return cmd_solve(config, overrides)
        return cmd_verify(args.case, config, overrides)
    finally:
        shutdown_global_pool()


if __name__ == '__main__':
    sys.exit(main())
