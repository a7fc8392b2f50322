"""
ATLAS SMR CLI 入口

支持通过 python -m atlas_smr 调用。

Usage:
    # 运行一次模拟（写出 trace、summary，并运行全部检查）
    python -m atlas_smr run --config config/sim.example.json --out output/run.jsonl

    # 扫参：冲突率 × f × n，多种子平均
    python -m atlas_smr sweep --config config/sim.example.json --rates 0 0.1 1 --fs 1 2 --ns 5 --seeds 10

    # 检查已有 trace
    python -m atlas_smr check output/run.jsonl
"""

import argparse
import json
import os
import sys
from typing import Any, Dict, List, Optional

from . import __version__
from .checkers import run_all_checks
from .sim_config import ConfigError, SimConfig, load_sim_config, sim_config_from_dict
from .simulator import Simulator
from .summary import SWEEP_FIELDS, summarize, sweep
from .trace import Trace, TraceFormatError
from .utils import save_snapshot, to_csv

# 退出码
EXIT_OK = 0
EXIT_CHECK_FAILED = 1
EXIT_USAGE = 2


def _get_settings():
    """工具设置（config 包不可用时退回默认值）。"""
    try:
        from config import get_config
        return get_config()
    except ImportError:
        return None


def _setting(name: str, default: Any) -> Any:
    settings = _get_settings()
    if settings is None:
        return default
    return getattr(settings, name, default)


def create_parser() -> argparse.ArgumentParser:
    """创建命令行参数解析器。"""
    parser = argparse.ArgumentParser(
        prog='atlas_smr',
        description='ATLAS 无领导者 SMR 协议 - 模拟、扫参与 trace 检查',
        formatter_class=argparse.RawDescriptionHelpFormatter,
        epilog="""
示例:
  # 运行一次模拟
  python -m atlas_smr run --config config/sim.example.json --out output/run.jsonl

  # 覆盖种子和时间上限
  python -m atlas_smr run --config config/sim.example.json --seed 7 --horizon 100000

  # 扫参
  python -m atlas_smr sweep --config config/sim.example.json --rates 0 0.5 1 --fs 1 2 --ns 5 --seeds 10

  # 检查 trace
  python -m atlas_smr check output/run.jsonl

退出码:
  0 成功；1 检查失败；2 用法、配置或 trace 格式错误
        """
    )

    # 版本信息
    parser.add_argument(
        '-v', '--version',
        action='version',
        version=f'atlas_smr {__version__}'
    )

    parser.add_argument(
        '--quiet', '-q',
        action='store_true',
        help='安静模式，减少输出'
    )

    subparsers = parser.add_subparsers(dest='command')

    # run
    run_parser = subparsers.add_parser('run', help='运行一次模拟')
    run_parser.add_argument('--config', help='SimConfig JSON 文件（缺省使用默认配置）')
    run_parser.add_argument('--out', help='trace 输出路径（.jsonl）')
    run_parser.add_argument('--seed', type=int, help='覆盖配置中的种子')
    run_parser.add_argument('--horizon', type=int, help='覆盖配置中的时间上限（虚拟毫秒）')
    run_parser.add_argument('--force-crashes', action='store_true',
                            help='允许崩溃数超过 f（只用于安全性测试）')
    run_parser.add_argument('--snapshot', help='把结束状态保存为 PKL 文件')

    # sweep
    sweep_parser = subparsers.add_parser('sweep', help='冲突率 × f × n 扫参')
    sweep_parser.add_argument('--config', help='基础 SimConfig JSON 文件')
    sweep_parser.add_argument('--out', help='CSV 输出路径')
    sweep_parser.add_argument('--rates', nargs='+', type=float, default=[0.0, 0.1, 0.5, 1.0],
                              help='冲突率列表')
    sweep_parser.add_argument('--fs', nargs='+', type=int, default=[1, 2], help='f 列表')
    sweep_parser.add_argument('--ns', nargs='+', type=int, default=[5], help='n 列表')
    sweep_parser.add_argument('--seeds', type=int, default=10, help='每个单元的种子数')
    sweep_parser.add_argument('--seed', type=int, help='起始种子（缺省取配置中的种子）')
    sweep_parser.add_argument('--horizon', type=int, help='覆盖配置中的时间上限')
    sweep_parser.add_argument('--workers', type=int, help='并行进程数')

    # check
    check_parser = subparsers.add_parser('check', help='检查已有 trace')
    check_parser.add_argument('trace', help='trace 文件（.jsonl）')
    check_parser.add_argument('--budget', type=int, help='线性化搜索预算')

    return parser


def _load_config(path: Optional[str], overrides: Dict[str, Any]) -> SimConfig:
    if path:
        return load_sim_config(path, overrides)
    return sim_config_from_dict(dict(overrides))


def _summary_path(out: str) -> str:
    stem, _ = os.path.splitext(out)
    return f"{stem}.summary.json"


def run_simulation(
    config_path: Optional[str],
    out: Optional[str],
    overrides: Dict[str, Any],
    snapshot: Optional[str],
    verbose: bool
) -> int:
    """运行一次模拟、写出 trace 与 summary，并运行全部检查。"""
    try:
        config = _load_config(config_path, overrides)
    except ConfigError as e:
        print(f"❌ 错误: {e}")
        for name, message in e.problems:
            print(f"   - {name}: {message}")
        return EXIT_USAGE

    if not out:
        out = os.path.join(_setting('output_dir', './output'), f"trace_n{config.n}_f{config.f}_s{config.seed}.jsonl")
    os.makedirs(os.path.dirname(out) or '.', exist_ok=True)

    simulator = Simulator(config, verbose=verbose)
    trace = simulator()
    trace.save(out)
    if verbose:
        print(f"✅ trace 已保存: {out}")

    if snapshot:
        save_snapshot(simulator.snapshot(), snapshot, verbose=verbose)

    report = run_all_checks(trace, _setting('lin_search_budget', None))
    summary = summarize(trace, report, bucket_ms=_setting('histogram_bucket_ms', 10))
    summary_path = _summary_path(out)
    with open(summary_path, 'w', encoding='utf-8') as fp:
        json.dump(summary.to_dict(), fp, ensure_ascii=False, indent=2)

    if verbose:
        print()
        summary.print_summary()
        report.print_summary()
        print(f"✅ summary 已保存: {summary_path}")

    if not report.ok:
        if verbose:
            print("❌ 存在失败的检查")
        return EXIT_CHECK_FAILED
    return EXIT_OK


def run_sweep(
    config_path: Optional[str],
    out: Optional[str],
    rates: List[float],
    fs: List[int],
    ns: List[int],
    seed_count: int,
    overrides: Dict[str, Any],
    workers: Optional[int],
    verbose: bool
) -> int:
    """运行扫参并写出 CSV。"""
    try:
        base = _load_config(config_path, overrides)
    except ConfigError as e:
        print(f"❌ 错误: {e}")
        return EXIT_USAGE
    if seed_count < 1:
        print("❌ --seeds 至少为 1")
        return EXIT_USAGE

    seeds = list(range(base.seed, base.seed + seed_count))
    rows = sweep(base, rates, fs, ns, seeds,
                 workers=workers or _setting('sweep_workers', 1), verbose=verbose)

    if not out:
        out = os.path.join(_setting('output_dir', './output'), 'sweep.csv')
    to_csv(rows, out, SWEEP_FIELDS, encoding=_setting('csv_encoding', 'utf-8-sig'), verbose=verbose)

    if verbose:
        for row in rows:
            ratio = row['fast_path_ratio']
            ratio_text = f"{ratio:.3f}" if ratio is not None else '-'
            print(f"📊 n={row['n']} f={row['f']} ρ={row['conflict_rate']}: 快速路径 {ratio_text}")
    return EXIT_OK


def run_check(trace_path: str, budget: Optional[int], verbose: bool) -> int:
    """检查一个 trace 文件。"""
    try:
        trace = Trace.load(trace_path)
    except TraceFormatError as e:
        print(f"❌ 错误: {e}")
        return EXIT_USAGE

    report = run_all_checks(trace, budget or _setting('lin_search_budget', None))
    if verbose:
        print(f"📍 检查 {trace_path}（{len(trace)} 个事件，结束状态 {trace.status}）")
        report.print_summary()
    if not report.ok:
        if verbose:
            print("❌ 存在失败的检查")
        return EXIT_CHECK_FAILED
    if verbose:
        print("🎉 全部检查通过")
    return EXIT_OK


def main(args=None) -> int:
    """主入口函数。"""
    parser = create_parser()
    try:
        parsed = parser.parse_args(args)
    except SystemExit as e:
        return EXIT_OK if e.code in (0, None) else EXIT_USAGE

    verbose = not parsed.quiet and _setting('verbose', True)

    if parsed.command is None:
        print("❌ 需要指定子命令 (run / sweep / check)")
        parser.print_help()
        return EXIT_USAGE

    overrides: Dict[str, Any] = {}
    if getattr(parsed, 'seed', None) is not None:
        overrides['seed'] = parsed.seed
    if getattr(parsed, 'horizon', None) is not None:
        overrides['horizon'] = parsed.horizon
    if getattr(parsed, 'force_crashes', False):
        overrides['forceCrashes'] = True

    if parsed.command == 'run':
        return run_simulation(parsed.config, parsed.out, overrides, parsed.snapshot, verbose)
    if parsed.command == 'sweep':
        return run_sweep(parsed.config, parsed.out, parsed.rates, parsed.fs, parsed.ns,
                         parsed.seeds, overrides, parsed.workers, verbose)
    return run_check(parsed.trace, parsed.budget, verbose)


if __name__ == '__main__':
    sys.exit(main())
