"""
统计模块

- RunSummary: 一次运行的统计（提交/执行数、快速路径比例、提交延迟分布、恢复次数、检查结论）
- sweep: 冲突率 × f × n 网格上的多种子扫参
"""

import copy
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from typing import Any, Dict, Iterable, List, Optional, Sequence, Tuple

from tqdm import tqdm

from .checkers import CheckReport
from .sim_config import ConfigError, SimConfig, sim_config_from_dict
from .simulator import Simulator
from .trace import Trace

SWEEP_FIELDS = ['n', 'f', 'conflict_rate', 'seeds', 'fast_path_ratio', 'oracle_ratio',
                'mean_commit_latency']


@dataclass
class RunSummary:
    """
    一次运行的统计。

    Attributes:
        commands_submitted / committed / executed: 客户端命令计数
        fast_path_ratio: 非 Read* 决定中走快速路径的比例（无决定时为 None）
        oracle_ratio: 同一批决定中"应答完全相同"的比例
        commit_latencies: 每个命令从调用到首次提交决定的虚拟毫秒
        latency_histogram: {桶起点: 数量}
        delay_histogram: {消息延迟数（四舍五入）: 数量}
        recovery_count: 恢复次数
        checks: 检查名 → 结论
        status: 结束状态
        config: 带默认值的完整 SimConfig
    """

    commands_submitted: int = 0
    commands_committed: int = 0
    commands_executed: int = 0
    fast_path_ratio: Optional[float] = None
    oracle_ratio: Optional[float] = None
    commit_latencies: List[int] = field(default_factory=list)
    latency_histogram: Dict[int, int] = field(default_factory=dict)
    delay_histogram: Dict[int, int] = field(default_factory=dict)
    recovery_count: int = 0
    checks: Dict[str, str] = field(default_factory=dict)
    status: Optional[str] = None
    config: Dict[str, Any] = field(default_factory=dict)

    @property
    def mean_commit_latency(self) -> Optional[float]:
        if not self.commit_latencies:
            return None
        return sum(self.commit_latencies) / len(self.commit_latencies)

    def to_dict(self) -> Dict[str, Any]:
        return {
            'commandsSubmitted': self.commands_submitted,
            'commandsCommitted': self.commands_committed,
            'commandsExecuted': self.commands_executed,
            'fastPathRatio': self.fast_path_ratio,
            'oracleRatio': self.oracle_ratio,
            'meanCommitLatency': self.mean_commit_latency,
            'commitLatencyHistogram': {str(k): v for k, v in sorted(self.latency_histogram.items())},
            'commitLatencyInDelays': {str(k): v for k, v in sorted(self.delay_histogram.items())},
            'recoveryCount': self.recovery_count,
            'checks': dict(self.checks),
            'status': self.status,
            'config': self.config,
        }

    def print_summary(self) -> None:
        print(f"📊 命令: 提交 {self.commands_submitted}，已决定 {self.commands_committed}，"
              f"已执行 {self.commands_executed}")
        if self.fast_path_ratio is not None:
            print(f"📊 快速路径比例: {self.fast_path_ratio:.3f}（应答相同: {self.oracle_ratio:.3f}）")
        if self.mean_commit_latency is not None:
            print(f"📊 平均提交延迟: {self.mean_commit_latency:.1f} ms")
        print(f"📊 恢复次数: {self.recovery_count}")


def summarize(trace: Trace, report: Optional[CheckReport] = None, bucket_ms: int = 10) -> RunSummary:
    """
    从 trace 计算 RunSummary。

    Args:
        trace: 完整 trace
        report: 检查报告（可选）
        bucket_ms: 延迟直方图的桶宽
    """
    config = trace.config
    invokes: Dict[str, int] = {}
    for event in trace.of_kind('invoke'):
        invokes[event['dot']] = event['t']

    first_decision: Dict[str, Dict[str, Any]] = {}
    for event in trace.of_kind('commit'):
        first_decision.setdefault(event['dot'], event)
    first_collect: Dict[str, Dict[str, Any]] = {}
    for event in trace.of_kind('collect'):
        first_collect.setdefault(event['dot'], event)
    executed = {e['dot'] for e in trace.of_kind('execute') if e['cmd'].get('kind') != 'noop'}

    summary = RunSummary(
        commands_submitted=len(invokes),
        commands_committed=sum(1 for dot in invokes if dot in first_decision),
        commands_executed=sum(1 for dot in invokes if dot in executed),
        recovery_count=sum(1 for _ in trace.of_kind('recover')),
        checks=report.verdicts if report is not None else {},
        status=trace.status,
        config=config,
    )

    decided = [e for dot, e in first_decision.items() if dot in invokes and e['path'] != 'read']
    if decided:
        fast = sum(1 for e in decided if e['path'] == 'fast')
        matching = sum(1 for e in decided if first_collect.get(e['dot'], {}).get('matching', False))
        summary.fast_path_ratio = fast / len(decided)
        summary.oracle_ratio = matching / len(decided)

    mean_delay = _mean_delay(config)
    for dot, t0 in invokes.items():
        decision = first_decision.get(dot)
        if decision is None:
            continue
        latency = decision['t'] - t0
        summary.commit_latencies.append(latency)
        bucket = (latency // bucket_ms) * bucket_ms
        summary.latency_histogram[bucket] = summary.latency_histogram.get(bucket, 0) + 1
        delays = int(round(latency / mean_delay)) if mean_delay else 0
        summary.delay_histogram[delays] = summary.delay_histogram.get(delays, 0) + 1
    return summary


def _mean_delay(config: Dict[str, Any]) -> float:
    try:
        return sim_config_from_dict(config).mean_delay
    except ConfigError:
        return 0.0


# ============ 扫参 ============

def _run_cell(args: Tuple[Dict[str, Any], List[int]]) -> Dict[str, Any]:
    """一个网格单元：同一配置在多个种子上运行，取平均。"""
    doc, seeds = args
    base = sim_config_from_dict(doc)
    ratios, oracles, latencies = [], [], []
    for seed in seeds:
        trace = Simulator(base.with_seed(seed)).run()
        summary = summarize(trace)
        if summary.fast_path_ratio is not None:
            ratios.append(summary.fast_path_ratio)
            oracles.append(summary.oracle_ratio)
        if summary.mean_commit_latency is not None:
            latencies.append(summary.mean_commit_latency)
    return {
        'n': doc['n'],
        'f': doc['f'],
        'conflict_rate': doc['workload']['conflictRate'],
        'seeds': len(seeds),
        'fast_path_ratio': sum(ratios) / len(ratios) if ratios else None,
        'oracle_ratio': sum(oracles) / len(oracles) if oracles else None,
        'mean_commit_latency': sum(latencies) / len(latencies) if latencies else None,
    }


def sweep_cells(base: SimConfig, conflict_rates: Iterable[float], fs: Iterable[int],
                ns: Iterable[int], verbose: bool = True) -> List[Dict[str, Any]]:
    """
    展开网格并校验每个单元；不合法的单元（如 f 超过 ⌊(n−1)/2⌋）跳过。
    """
    cells = []
    for n in ns:
        for f in fs:
            for rate in conflict_rates:
                doc = copy.deepcopy(base.to_dict())
                doc['n'] = n
                doc['f'] = f
                doc['workload']['conflictRate'] = rate
                if isinstance(doc['latency'], list):
                    doc['latency'] = 'uniform(50)'
                doc['crashes'] = [c for c in doc['crashes'] if c['proc'] <= n]
                doc['script'] = [s for s in doc['script'] if s['proc'] <= n]
                try:
                    sim_config_from_dict(doc)
                except ConfigError as e:
                    if verbose:
                        print(f"⚠️  跳过 n={n}, f={f}, ρ={rate}: {e}")
                    continue
                cells.append(doc)
    return cells


def sweep(
    base: SimConfig,
    conflict_rates: Sequence[float],
    fs: Sequence[int],
    ns: Sequence[int],
    seeds: Sequence[int],
    workers: int = 1,
    verbose: bool = True,
) -> List[Dict[str, Any]]:
    """
    在网格上扫参。

    Args:
        base: 基础配置（其余字段保持不变）
        conflict_rates / fs / ns: 网格
        seeds: 每个单元使用的种子
        workers: 并行进程数（>1 时使用进程池）
        verbose: 是否打印进度

    Returns:
        每个单元一行（SWEEP_FIELDS），按网格顺序排列
    """
    cells = sweep_cells(base, conflict_rates, fs, ns, verbose=verbose)
    jobs = [(doc, list(seeds)) for doc in cells]
    if verbose:
        print(f"🚀 扫参: {len(jobs)} 个单元 × {len(seeds)} 个种子")

    if workers > 1 and len(jobs) > 1:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            rows = list(tqdm(pool.map(_run_cell, jobs), total=len(jobs),
                             desc="扫参", disable=not verbose))
    else:
        rows = [_run_cell(job) for job in tqdm(jobs, desc="扫参", disable=not verbose)]

    if verbose:
        print(f"✅ 扫参完成: {len(rows)} 行")
    return rows
