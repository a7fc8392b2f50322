"""
检查器模块

对 Trace 做离线分析，每个检查器都是 trace 上的纯函数：
- check_agreement: 同一 Dot 的所有 MCommit 负载相同
- check_conflict_coverage: 冲突命令至少一方在另一方的依赖中
- check_smr_spec: Validity / Integrity / Ordering 无环 / 批次一致
- check_linearizability: 客户端历史线性一致
- check_fast_path_recoverability: 快速路径决定可由任意 ⌊n/2⌋ 个成员恢复
- check_ballot_safety / check_liveness / check_pruning / check_matching_oracle
"""

from dataclasses import dataclass, field
from itertools import combinations
from typing import Any, Dict, Iterable, List, Optional, Set, Tuple

import networkx as nx

from .core import Command, Dot, conflict, is_read_star
from .linearizability import VERDICT_BUDGET, VERDICT_FAIL, check_history
from .trace import Trace, commit_payload, extract_history

VERDICT_PASS = 'pass'
VERDICT_SKIPPED = 'skipped'

# 默认的线性化搜索预算
DEFAULT_LIN_BUDGET = 200000


# ============ 报告 ============

@dataclass
class CheckResult:
    """
    单个检查的结论。

    Attributes:
        name: 检查名
        verdict: 'pass' / 'fail' / 'budget-exhausted' / 'skipped'
        detail: 一句话说明
        witness: 违反时引用的事件或操作
    """

    name: str
    verdict: str
    detail: str = ''
    witness: List[Any] = field(default_factory=list)

    @property
    def failed(self) -> bool:
        return self.verdict == VERDICT_FAIL

    def to_dict(self) -> Dict[str, Any]:
        return {'name': self.name, 'verdict': self.verdict, 'detail': self.detail,
                'witness': [w if isinstance(w, (dict, list, str, int)) else str(w) for w in self.witness]}


@dataclass
class CheckReport:
    """多个检查的汇总。"""

    results: Dict[str, CheckResult] = field(default_factory=dict)

    def add(self, result: CheckResult) -> 'CheckReport':
        self.results[result.name] = result
        return self

    def merge(self, other: 'CheckReport') -> 'CheckReport':
        for result in other.results.values():
            self.add(result)
        return self

    @property
    def ok(self) -> bool:
        """没有任何检查失败（超预算和跳过不算失败）。"""
        return not any(r.failed for r in self.results.values())

    @property
    def verdicts(self) -> Dict[str, str]:
        return {name: r.verdict for name, r in self.results.items()}

    def __getitem__(self, name: str) -> CheckResult:
        return self.results[name]

    def to_dict(self) -> Dict[str, Any]:
        return {'ok': self.ok, 'checks': [r.to_dict() for r in self.results.values()]}

    def print_summary(self) -> None:
        icons = {VERDICT_PASS: '✅', VERDICT_FAIL: '❌', VERDICT_BUDGET: '⚠️ ', VERDICT_SKIPPED: '⏭️ '}
        for result in self.results.values():
            line = f"{icons.get(result.verdict, '•')} {result.name}: {result.verdict}"
            if result.detail:
                line += f" - {result.detail}"
            print(line)
            for item in result.witness[:5]:
                print(f"     {item}")


def _report(name: str, violations: List[Any], detail_ok: str, detail_fail: str) -> CheckReport:
    if violations:
        return CheckReport().add(CheckResult(name, VERDICT_FAIL, detail_fail, violations))
    return CheckReport().add(CheckResult(name, VERDICT_PASS, detail_ok))


# ============ trace 解读 ============

def _commit_sources(trace: Trace) -> Iterable[Dict[str, Any]]:
    """所有携带提交负载的事件：commit 决定和 MCommit 发送。"""
    for event in trace.events:
        if event['ev'] == 'commit':
            yield event
        elif event['ev'] == 'send' and event['msg']['type'] == 'MCommit':
            yield {'ev': 'send', 't': event['t'], 'id': event['id'], 'src': event['src'],
                   'dot': event['msg']['dot'], 'cmd': event['msg']['cmd'], 'deps': event['msg']['deps']}


def committed_commands(trace: Trace) -> Dict[Dot, Tuple[Command, frozenset]]:
    """每个 Dot 第一次出现的提交负载。"""
    result: Dict[Dot, Tuple[Command, frozenset]] = {}
    for event in _commit_sources(trace):
        dot = Dot.parse(event['dot'])
        if dot not in result:
            result[dot] = commit_payload(event)
    return result


def _excluded(cmd: Command, nfr_reads: bool) -> bool:
    return cmd.is_noop or (nfr_reads and is_read_star(cmd))


# ============ 检查器 ============

def check_agreement(trace: Trace) -> CheckReport:
    """同一 Dot 的所有 commit 决定和 MCommit 消息负载相同。"""
    first: Dict[str, Dict[str, Any]] = {}
    violations = []
    for event in _commit_sources(trace):
        seen = first.setdefault(event['dot'], event)
        if commit_payload(seen) != commit_payload(event):
            violations.append({'dot': event['dot'], 'first': seen, 'conflicting': event})
    return _report('agreement', violations,
                   f"{len(first)} 个 Dot 的提交负载一致",
                   f"{len(violations)} 处提交负载不一致")


def check_conflict_coverage(trace: Trace) -> CheckReport:
    """任意两个冲突的已提交命令，至少一方在另一方的依赖中。"""
    mode = trace.conflict_mode
    nfr = trace.nfr_reads
    by_key: Dict[str, List[Tuple[Dot, Command, frozenset]]] = {}
    for dot, (cmd, deps) in sorted(committed_commands(trace).items()):
        if _excluded(cmd, nfr):
            continue
        for key in cmd.keys:
            by_key.setdefault(key, []).append((dot, cmd, deps))

    violations = []
    checked = 0
    for key in sorted(by_key):
        for (a, ca, da), (b, cb, db) in combinations(by_key[key], 2):
            if not conflict(ca, cb, mode):
                continue
            checked += 1
            if b not in da and a not in db:
                violations.append({'key': key, 'a': str(a), 'b': str(b),
                                   'deps_a': sorted(map(str, da)), 'deps_b': sorted(map(str, db))})
    return _report('conflict_coverage', violations,
                   f"{checked} 对冲突命令均互相覆盖",
                   f"{len(violations)} 对冲突命令互不包含")


def _executions(trace: Trace) -> List[Tuple[int, Dict[str, Any]]]:
    return [(i, e) for i, e in enumerate(trace.events) if e['ev'] == 'execute']


def check_smr_spec(trace: Trace) -> CheckReport:
    """
    Validity、Integrity、Ordering（↦ 无环），以及批次相关的两条不变式：
    - 先执行的批次不依赖后执行的命令
    - 同一 Dot 在所有进程上的批次相同
    """
    report = CheckReport()
    nfr = trace.nfr_reads
    mode = trace.conflict_mode
    submitted: Dict[str, Dict[str, Any]] = {e['dot']: e['cmd'] for e in trace.of_kind('invoke')}
    committed = committed_commands(trace)
    executions = _executions(trace)

    # Validity
    invalid = [e for _, e in executions
               if e['cmd'].get('kind') != 'noop' and submitted.get(e['dot']) != e['cmd']]
    report.merge(_report('validity', invalid, "所有执行的命令都曾被提交", "执行了未提交的命令"))

    # Integrity
    seen: Set[Tuple[int, str]] = set()
    duplicates = []
    for _, e in executions:
        ident = (e['proc'], e['dot'])
        if ident in seen:
            duplicates.append(e)
        seen.add(ident)
    report.merge(_report('integrity', duplicates, "每个进程最多执行每个命令一次", "命令被重复执行"))

    # 批次
    batch_of: Dict[Tuple[int, str], int] = {}
    members: Dict[Tuple[int, int], Set[str]] = {}
    for _, e in executions:
        batch_of[(e['proc'], e['dot'])] = e['batch']
        members.setdefault((e['proc'], e['batch']), set()).add(e['dot'])

    order_violations = []
    for (proc, dot_text), index in sorted(batch_of.items()):
        deps = committed.get(Dot.parse(dot_text), (None, frozenset()))[1]
        for dep in deps:
            dep_index = batch_of.get((proc, str(dep)))
            if dep_index is None or dep_index > index:
                order_violations.append({'proc': proc, 'dot': dot_text, 'dep': str(dep),
                                         'batch': index, 'dep_batch': dep_index})
    report.merge(_report('batch_order', order_violations,
                         "先执行的命令不依赖后执行的命令", "命令先于其依赖执行"))

    batch_sets: Dict[str, Tuple[int, frozenset]] = {}
    batch_violations = []
    for (proc, dot_text), index in sorted(batch_of.items()):
        current = frozenset(members[(proc, index)])
        first = batch_sets.setdefault(dot_text, (proc, current))
        if first[1] != current:
            batch_violations.append({'dot': dot_text, 'proc_a': first[0], 'batch_a': sorted(first[1]),
                                     'proc_b': proc, 'batch_b': sorted(current)})
    report.merge(_report('batch_agreement', batch_violations,
                         "每个 Dot 在所有进程上的批次相同", "批次在进程间不一致"))

    # Ordering
    cycle = find_ordering_cycle(trace, mode, nfr)
    if cycle:
        report.add(CheckResult('ordering', VERDICT_FAIL, "↦ 关系存在环", cycle))
    else:
        report.add(CheckResult('ordering', VERDICT_PASS, "↦ 关系无环"))
    return report


def build_ordering_graph(trace: Trace, mode: str = 'read-aware', nfr_reads: bool = False) -> nx.DiGraph:
    """
    构造 ↦ = ⤳ ∪ (⋃ᵢ ↦ᵢ) 的图（传递闭包等价的线性规模版本）。

    命令节点为 Dot 文本；⤳ 经过一串时间点节点 ('t', 下标)。
    """
    graph = nx.DiGraph()
    per_proc: Dict[int, List[Tuple[str, Command]]] = {}
    exec_index: Dict[str, List[int]] = {}
    for index, e in _executions(trace):
        cmd = Command.from_dict(e['cmd'])
        if _excluded(cmd, nfr_reads):
            continue
        graph.add_node(e['dot'])
        per_proc.setdefault(e['proc'], []).append((e['dot'], cmd))
        exec_index.setdefault(e['dot'], []).append(index)

    # ↦ᵢ：每个进程上同一 key 的执行顺序
    for proc in sorted(per_proc):
        by_key: Dict[str, List[Tuple[str, Command]]] = {}
        for dot, cmd in per_proc[proc]:
            for key in cmd.keys:
                by_key.setdefault(key, []).append((dot, cmd))
        for ops in by_key.values():
            _add_key_order(graph, ops, mode)

    # ⤳：在某进程执行之后才提交的命令
    invokes = [(i, e['dot']) for i, e in enumerate(trace.events)
               if e['ev'] == 'invoke' and e['dot'] in exec_index]
    points = [i for i, _ in invokes]
    for a, b in zip(points, points[1:]):
        graph.add_edge(('t', a), ('t', b))
    for i, dot in invokes:
        graph.add_edge(('t', i), dot)
    for dot, indices in exec_index.items():
        first = min(indices)
        later = next((p for p in points if p > first), None)
        if later is not None:
            graph.add_edge(dot, ('t', later))
    return graph


def _add_key_order(graph: nx.DiGraph, ops: List[Tuple[str, Command]], mode: str) -> None:
    if mode == 'coarse':
        for (a, _), (b, _) in zip(ops, ops[1:]):
            graph.add_edge(a, b)
        return
    writes = [i for i, (_, cmd) in enumerate(ops) if cmd.is_write]
    for i, (dot, cmd) in enumerate(ops):
        next_write = next((w for w in writes if w > i), None)
        if next_write is not None:
            graph.add_edge(dot, ops[next_write][0])
        if cmd.is_write:
            end = next_write if next_write is not None else len(ops) - 1
            for j in range(i + 1, end + 1):
                graph.add_edge(dot, ops[j][0])


def find_ordering_cycle(trace: Trace, mode: str = 'read-aware', nfr_reads: bool = False) -> List[Any]:
    """返回 ↦ 中的一个环（只列命令节点），无环时返回空列表。"""
    graph = build_ordering_graph(trace, mode, nfr_reads)
    try:
        cycle = nx.find_cycle(graph)
    except nx.NetworkXNoCycle:
        return []
    return [[u, v] for u, v in cycle if not isinstance(u, tuple) or not isinstance(v, tuple)]


def check_linearizability(trace: Trace, budget: int = DEFAULT_LIN_BUDGET) -> CheckReport:
    """客户端历史（invoke / response 事件）线性一致。"""
    history = extract_history(trace)
    result = check_history(history, budget)
    if result.verdict == VERDICT_PASS:
        detail = f"{len(history)} 个操作可线性化（{len(result.order)} 个 key）"
        return CheckReport().add(CheckResult('linearizability', VERDICT_PASS, detail))
    witness = [str(op) for op in result.witness]
    if result.verdict == VERDICT_BUDGET:
        detail = f"key {result.key!r} 的搜索超过预算 {budget}"
    else:
        detail = f"key {result.key!r} 的历史不可线性化"
    return CheckReport().add(CheckResult('linearizability', result.verdict, detail, witness))


def check_fast_path_recoverability(trace: Trace) -> CheckReport:
    """快速路径提交的依赖可由任意 ⌊n/2⌋ 个非协调者仲裁成员的应答并集得到。"""
    n = trace.n
    violations = []
    checked = 0
    for event in trace.of_kind('collect'):
        if event['path'] != 'fast':
            continue
        coordinator = Dot.parse(event['dot']).proc
        acks = {int(j): frozenset(deps) for j, deps in event['acks'].items()}
        decided = frozenset(event['union'])
        others = sorted(j for j in acks if j != coordinator)
        for subset in combinations(others, n // 2):
            checked += 1
            union = frozenset().union(*(acks[j] for j in subset))
            if union != decided:
                violations.append({'dot': event['dot'], 'subset': list(subset),
                                   'union': sorted(union), 'decided': sorted(decided)})
    return _report('fast_path_recoverability', violations,
                   f"{checked} 个子集的并集都等于提交的依赖",
                   f"{len(violations)} 个子集无法恢复快速路径决定")


def check_ballot_safety(trace: Trace) -> CheckReport:
    """同一 (Dot, 选票) 的 MConsensus 负载相同。"""
    first: Dict[Tuple[str, int], Dict[str, Any]] = {}
    violations = []
    for event in trace.of_kind('send'):
        msg = event['msg']
        if msg['type'] != 'MConsensus':
            continue
        seen = first.setdefault((msg['dot'], msg['ballot']), msg)
        if commit_payload(seen) != commit_payload(msg):
            violations.append({'dot': msg['dot'], 'ballot': msg['ballot'], 'first': seen, 'conflicting': msg})
    return _report('ballot_safety', violations,
                   f"{len(first)} 个 (Dot, 选票) 的提议一致",
                   f"{len(violations)} 个选票上出现不同提议")


def check_liveness(trace: Trace) -> CheckReport:
    """崩溃数不超过 f 时，每个提交的命令在每个存活进程上都被执行。"""
    crashed = trace.crashed
    if len(crashed) > trace.f:
        return CheckReport().add(CheckResult(
            'liveness', VERDICT_SKIPPED, f"崩溃进程数 {len(crashed)} 超过 f={trace.f}"))
    alive = [p for p in range(1, trace.n + 1) if p not in crashed]
    executed = {(e['proc'], e['dot']) for e in trace.of_kind('execute')}
    missing = []
    for event in trace.of_kind('invoke'):
        dot = Dot.parse(event['dot'])
        cmd = Command.from_dict(event['cmd'])
        if trace.nfr_reads and is_read_star(cmd) and dot.proc in crashed:
            continue
        absent = [p for p in alive if (p, event['dot']) not in executed]
        if absent:
            missing.append({'dot': event['dot'], 'cmd': str(cmd), 'not_executed_at': absent})
    return _report('liveness', missing,
                   "所有提交的命令在每个存活进程上都已执行",
                   f"{len(missing)} 个命令未在所有存活进程上执行（结束状态 {trace.status}）")


def check_pruning(trace: Trace) -> CheckReport:
    """慢速路径的提议 ⊆ 全部应答的并集。"""
    violations = [
        {'dot': e['dot'], 'proposal': e['proposal'], 'union': e['union']}
        for e in trace.of_kind('collect')
        if not set(e['proposal']) <= set(e['union'])
    ]
    return _report('pruning', violations, "所有提议都是并集的子集", "提议超出了应答并集")


def check_matching_oracle(trace: Trace) -> CheckReport:
    """应答完全相同 ⇒ 走快速路径。"""
    violations = [
        {'dot': e['dot'], 'path': e['path'], 'acks': e['acks']}
        for e in trace.of_kind('collect')
        if e['path'] in ('fast', 'slow') and e['matching'] and e['path'] != 'fast'
    ]
    return _report('matching_oracle', violations,
                   "应答相同的命令都走了快速路径", "应答相同却走了慢速路径")


def run_all_checks(trace: Trace, budget: Optional[int] = None) -> CheckReport:
    """
    运行全部检查。

    Args:
        trace: 完整 trace
        budget: 线性化搜索预算，默认 DEFAULT_LIN_BUDGET

    Returns:
        合并后的 CheckReport
    """
    report = CheckReport()
    report.merge(check_agreement(trace))
    report.merge(check_conflict_coverage(trace))
    report.merge(check_smr_spec(trace))
    report.merge(check_linearizability(trace, budget or DEFAULT_LIN_BUDGET))
    report.merge(check_fast_path_recoverability(trace))
    report.merge(check_ballot_safety(trace))
    report.merge(check_liveness(trace))
    report.merge(check_pruning(trace))
    report.merge(check_matching_oracle(trace))
    return report
